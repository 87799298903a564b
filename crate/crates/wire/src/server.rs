use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use codesign_core::codesign::ServerSide;
use codesign_core::DenseMatrix;

use crate::error::{ErrorCode, WireError};
use crate::frame::{decode_frame, encode_error_frame, encode_frame, read_frame, FrameKind};

const POLL: Duration = Duration::from_millis(10);

/// A running decoder service. Dropping the handle shuts it down.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the service has stopped accepting and every connection
    /// worker has exited. Workers notice the request between frames.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    /// Blocks until the service ends on its own: the connection limit was
    /// reached, or another holder of the stop flag set it.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    /// Flag that stops the service when set.
    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

/// Binds `endpoint` and answers each data frame with the decoder + task
/// prediction for its code, one worker thread per connection.
pub fn serve_decoder(server: ServerSide, endpoint: impl ToSocketAddrs) -> Result<ServerHandle, WireError> {
    serve_decoder_limited(server, endpoint, None)
}

/// Like [`serve_decoder`], but stops accepting after `max_connections`
/// and ends once those connections close.
pub fn serve_decoder_limited(
    server: ServerSide,
    endpoint: impl ToSocketAddrs,
    max_connections: Option<usize>,
) -> Result<ServerHandle, WireError> {
    let listener = TcpListener::bind(endpoint)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let model = Arc::new(server);
    let flag = Arc::clone(&stop);
    let acceptor = thread::spawn(move || {
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        let mut accepted = 0usize;
        while !flag.load(Ordering::SeqCst) && max_connections.is_none_or(|m| accepted < m) {
            match listener.accept() {
                Ok((stream, _)) => {
                    accepted += 1;
                    let model = Arc::clone(&model);
                    let flag = Arc::clone(&flag);
                    workers.push(thread::spawn(move || {
                        let _ = handle_connection(stream, &model, &flag);
                    }));
                    workers.retain(|w| !w.is_finished());
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(_) => thread::sleep(POLL),
            }
        }
        for w in workers {
            let _ = w.join();
        }
    });
    Ok(ServerHandle {
        addr,
        stop,
        acceptor: Some(acceptor),
    })
}

/// Wraps a stream so blocking reads wake up periodically to check `stop`.
struct StopAwareReader<'a> {
    stream: &'a TcpStream,
    stop: &'a AtomicBool,
}

impl Read for StopAwareReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        loop {
            if self.stop.load(Ordering::SeqCst) {
                return Ok(0);
            }
            match (&*self.stream).read(buf) {
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
                other => return other,
            }
        }
    }
}

fn handle_connection(stream: TcpStream, model: &ServerSide, stop: &AtomicBool) -> Result<(), WireError> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    stream.set_nodelay(true)?;
    let mut writer = &stream;
    loop {
        let mut reader = StopAwareReader { stream: &stream, stop };
        let reply = match read_frame(&mut reader) {
            Ok(None) => return Ok(()),
            Ok(Some(bytes)) => respond(&bytes, model),
            Err(WireError::Io(e)) => return Err(WireError::Io(e)),
            Err(WireError::Truncated { .. }) if stop.load(Ordering::SeqCst) => return Ok(()),
            Err(e) => {
                // The header was unusable, so the frame length is unknown.
                // Requests are strictly sequential: whatever else has already
                // arrived belongs to the same broken frame.
                drain_pending(&stream)?;
                encode_error_frame(0, ErrorCode::for_error(&e))
            }
        };
        writer.write_all(&reply)?;
        writer.flush()?;
    }
}

fn drain_pending(stream: &TcpStream) -> io::Result<()> {
    let mut buf = [0u8; 1024];
    loop {
        match (&*stream).read(&mut buf) {
            Ok(0) => return Ok(()),
            Ok(_) => continue,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
}

fn respond(bytes: &[u8], model: &ServerSide) -> Vec<u8> {
    // Recover the sequence id for the reply even when validation fails.
    let seq_hint = bytes
        .get(9..13)
        .map(|s| u32::from_le_bytes(s.try_into().expect("4 bytes")))
        .unwrap_or(0);
    let frame = match decode_frame(bytes) {
        Ok(f) => f,
        Err(e) => return encode_error_frame(seq_hint, ErrorCode::for_error(&e)),
    };
    if frame.kind != FrameKind::Data {
        return encode_error_frame(frame.seq, ErrorCode::BadMagic);
    }
    if frame.z_dim() != model.z_dim {
        return encode_error_frame(frame.seq, ErrorCode::ZDimMismatch);
    }
    let z = DenseMatrix::new(1, frame.z_dim(), frame.values).expect("finite, correctly sized");
    match model.decode_predict(&z) {
        Ok(y) => encode_frame(y.as_slice(), frame.seq, frame.dtype)
            .unwrap_or_else(|e| encode_error_frame(frame.seq, ErrorCode::for_error(&e))),
        Err(_) => encode_error_frame(frame.seq, ErrorCode::Internal),
    }
}
