use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Scheme;
use crate::error::{shape_err, Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::{split_at, Mlp};

/// A trained encoder/decoder pair together with the task model it was
/// co-designed against.
///
/// Without a split the robot runs `encoder` on the raw input and the
/// server runs `decoder` then `task`. With `split_index = Some(b)` the robot
/// first runs task layers `[0, b)`, the encoder compresses that feature map,
/// and the server finishes with task layers `[b, end)` after decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct CodesignModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub task: Mlp,
    pub z_dim: usize,
    pub lambda: f64,
    pub scheme: Scheme,
    pub split_index: Option<usize>,
    /// Encoder emits `[mean | log-variance]`; only the mean is transmitted.
    pub variational: bool,
}

/// Parameter counts on each side of the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSplit {
    pub robot: usize,
    pub server: usize,
}

impl ParameterSplit {
    pub fn robot_share(&self) -> f64 {
        self.robot as f64 / (self.robot + self.server) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelManifest {
    z_dim: usize,
    lambda: f64,
    scheme: Scheme,
    split_index: Option<usize>,
    variational: bool,
}

pub const ENCODER_FILE: &str = "encoder.tnet";
pub const DECODER_FILE: &str = "decoder.tnet";
pub const TASK_FILE: &str = "task.tnet";
pub const MANIFEST_FILE: &str = "model.json";

impl CodesignModel {
    pub fn new(
        encoder: Mlp,
        decoder: Mlp,
        task: Mlp,
        z_dim: usize,
        lambda: f64,
        scheme: Scheme,
        split_index: Option<usize>,
        variational: bool,
    ) -> Result<Self> {
        let model = Self {
            encoder,
            decoder,
            task,
            z_dim,
            lambda,
            scheme,
            split_index,
            variational,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let enc_out = if self.variational { 2 * self.z_dim } else { self.z_dim };
        if self.z_dim == 0 || self.encoder.output_dim() != enc_out {
            return Err(shape_err("encoder output", enc_out, self.encoder.output_dim()));
        }
        if self.decoder.input_dim() != self.z_dim {
            return Err(shape_err("decoder input", self.z_dim, self.decoder.input_dim()));
        }
        let (head, tail) = self.task_halves()?;
        let feature = head.as_ref().map_or(self.task.input_dim(), Mlp::output_dim);
        if self.encoder.input_dim() != feature {
            return Err(shape_err("encoder input", feature, self.encoder.input_dim()));
        }
        if self.decoder.output_dim() != tail.input_dim() {
            return Err(shape_err("decoder output", tail.input_dim(), self.decoder.output_dim()));
        }
        Ok(())
    }

    /// Task layers run on the robot (if split) and on the server.
    pub fn task_halves(&self) -> Result<(Option<Mlp>, Mlp)> {
        match self.split_index {
            Some(b) => {
                let (h, t) = split_at(&self.task, b)?;
                Ok((Some(h), t))
            }
            None => Ok((None, self.task.clone())),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.task.input_dim()
    }

    /// Width of the tensor the encoder compresses.
    pub fn feature_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn compression_ratio(&self) -> f64 {
        self.input_dim() as f64 / self.z_dim as f64
    }

    pub fn robot_side(&self) -> Result<RobotSide> {
        let (head, _) = self.task_halves()?;
        Ok(RobotSide {
            head,
            encoder: self.encoder.clone(),
            z_dim: self.z_dim,
        })
    }

    pub fn server_side(&self) -> Result<ServerSide> {
        let (_, tail) = self.task_halves()?;
        Ok(ServerSide {
            decoder: self.decoder.clone(),
            task: tail,
            z_dim: self.z_dim,
        })
    }

    /// Robot side: task head plus encoder. Server side: decoder plus the
    /// remaining task layers.
    pub fn parameter_split(&self) -> Result<ParameterSplit> {
        let (head, tail) = self.task_halves()?;
        Ok(ParameterSplit {
            robot: head.map_or(0, |h| h.param_count()) + self.encoder.param_count(),
            server: self.decoder.param_count() + tail.param_count(),
        })
    }

    pub fn encode(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.robot_side()?.encode(x)
    }

    pub fn decode_predict(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        self.server_side()?.decode_predict(z)
    }

    /// Full robot → server pipeline in process.
    pub fn predict(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let z = self.encode(x)?;
        self.decode_predict(&z)
    }

    /// Writes `encoder.tnet`, `decoder.tnet`, `task.tnet` and `model.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.encoder.save(dir.join(ENCODER_FILE))?;
        self.decoder.save(dir.join(DECODER_FILE))?;
        self.task.save(dir.join(TASK_FILE))?;
        let manifest = ModelManifest {
            z_dim: self.z_dim,
            lambda: self.lambda,
            scheme: self.scheme,
            split_index: self.split_index,
            variational: self.variational,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: ModelManifest = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(
            Mlp::load(dir.join(ENCODER_FILE))?,
            Mlp::load(dir.join(DECODER_FILE))?,
            Mlp::load(dir.join(TASK_FILE))?,
            m.z_dim,
            m.lambda,
            m.scheme,
            m.split_index,
            m.variational,
        )
    }
}

/// Everything that runs on the robot.
#[derive(Debug, Clone)]
pub struct RobotSide {
    pub head: Option<Mlp>,
    pub encoder: Mlp,
    pub z_dim: usize,
}

impl RobotSide {
    pub fn input_dim(&self) -> usize {
        self.head.as_ref().unwrap_or(&self.encoder).input_dim()
    }

    pub fn encode(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let features = match &self.head {
            Some(h) => h.predict(x)?,
            None => x.clone(),
        };
        let out = self.encoder.predict(&features)?;
        if out.cols() == self.z_dim {
            Ok(out)
        } else {
            Ok(out.columns(0, self.z_dim))
        }
    }
}

/// Everything that runs on the server.
#[derive(Debug, Clone)]
pub struct ServerSide {
    pub decoder: Mlp,
    pub task: Mlp,
    pub z_dim: usize,
}

impl ServerSide {
    pub fn decode_predict(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        let x_hat = self.decoder.predict(z)?;
        self.task.predict(&x_hat)
    }

    pub fn output_dim(&self) -> usize {
        self.task.output_dim()
    }
}
