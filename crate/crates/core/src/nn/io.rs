//! Binary model container.
//!
//! ```text
//! "TNET"            4 bytes
//! version           u32
//! layer count       u32
//! per layer:
//!   input width     u32
//!   output width    u32
//!   activation tag  u8   (0 identity, 1 relu, 2 tanh)
//!   frozen          u8   (0 or 1)
//!   weights         out × in f64, row-major
//!   bias            out f64
//! ```
//!
//! All integers and floats little-endian.

use std::io::{Read, Write};

use super::{Activation, DenseLayer, Mlp};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const MLP_MAGIC: &[u8; 4] = b"TNET";
pub const MLP_FORMAT_VERSION: u32 = 1;

pub fn write_mlp(net: &Mlp, out: &mut impl Write) -> Result<()> {
    out.write_all(MLP_MAGIC)?;
    out.write_all(&MLP_FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(net.len() as u32).to_le_bytes())?;
    for (layer, &frozen) in net.layers().iter().zip(net.frozen_flags()) {
        out.write_all(&(layer.input_dim() as u32).to_le_bytes())?;
        out.write_all(&(layer.output_dim() as u32).to_le_bytes())?;
        out.write_all(&[layer.activation().tag(), frozen as u8])?;
        for v in layer.weights().as_slice().iter().chain(layer.bias()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated model file".into()),
        _ => Error::from(e),
    })?;
    Ok(buf)
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(input)?))
}

fn read_f64s(input: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    (0..count).map(|_| Ok(f64::from_le_bytes(read_array(input)?))).collect()
}

pub fn read_mlp(input: &mut impl Read) -> Result<Mlp> {
    let magic: [u8; 4] = read_array(input)?;
    if &magic != MLP_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(input)?;
    if version != MLP_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = read_u32(input)? as usize;
    if count == 0 {
        return Err(Error::Format("model has no layers".into()));
    }
    let mut layers = Vec::with_capacity(count.min(1024));
    let mut frozen = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let inp = read_u32(input)? as usize;
        let out = read_u32(input)? as usize;
        let [tag, flag] = read_array::<2>(input)?;
        let activation = Activation::from_tag(tag).ok_or_else(|| Error::Format(format!("bad activation tag {tag}")))?;
        if flag > 1 {
            return Err(Error::Format(format!("bad frozen flag {flag}")));
        }
        let weights = DenseMatrix::new(out, inp, read_f64s(input, out * inp)?)?;
        let bias = read_f64s(input, out)?;
        layers.push(DenseLayer::new(weights, bias, activation)?);
        frozen.push(flag == 1);
    }
    Mlp::new(layers, frozen)
}

impl Mlp {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_mlp(self, &mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Mlp> {
        let net = read_mlp(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len())));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Mlp> {
        Mlp::from_bytes(&std::fs::read(path)?)
    }
}
