//! Learnable parameters, their gradients, and checkpoint files.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::NetConfig;
use super::net::Layout;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    /// Layer path, e.g. `fem.enc0.conv1.weight`.
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Init {
    /// He-uniform with the given fan-in.
    FanIn(usize),
    Zeros,
    Ones,
}

/// Hands out parameter ids while the network layout is built.
pub(crate) trait Registrar {
    fn param(&mut self, name: String, shape: &[usize], init: Init) -> ParamId;
}

struct Initializer {
    rng: ChaCha8Rng,
    params: Vec<Param>,
}

impl Registrar for Initializer {
    fn param(&mut self, name: String, shape: &[usize], init: Init) -> ParamId {
        let len: usize = shape.iter().product();
        let data = match init {
            Init::FanIn(fan_in) => {
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..len).map(|_| self.rng.random_range(-bound..bound)).collect()
            }
            Init::Zeros => vec![0.0; len],
            Init::Ones => vec![1.0; len],
        };
        self.params.push(Param {
            name,
            shape: shape.to_vec(),
            data,
        });
        ParamId(self.params.len() - 1)
    }
}

/// Re-binds ids to parameters loaded from a checkpoint, checking names and shapes.
struct Binder<'a> {
    by_name: BTreeMap<&'a str, usize>,
    params: &'a [Param],
    order: Vec<usize>,
    errors: Vec<String>,
}

impl Registrar for Binder<'_> {
    fn param(&mut self, name: String, shape: &[usize], _init: Init) -> ParamId {
        match self.by_name.get(name.as_str()) {
            Some(&i) if self.params[i].shape == shape => self.order.push(i),
            Some(&i) => {
                self.errors.push(format!(
                    "{name}: shape {:?}, expected {shape:?}",
                    self.params[i].shape
                ));
                self.order.push(i);
            }
            None => {
                self.errors.push(format!("{name}: missing"));
                self.order.push(usize::MAX);
            }
        }
        ParamId(self.order.len() - 1)
    }
}

/// All learnable parameters of the network together with its configuration.
#[derive(Clone, Debug)]
pub struct NetState {
    config: NetConfig,
    params: Vec<Param>,
    pub(crate) layout: Layout,
}

impl PartialEq for NetState {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl NetState {
    /// Fresh parameters: He-uniform convolution weights, zero biases, unit
    /// normalization gains, drawn from a seeded stream.
    pub fn init(config: &NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: Vec::new(),
        };
        let layout = Layout::build(config, &mut init);
        Ok(Self {
            config: config.clone(),
            params: init.params,
            layout,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param_by_name(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_by_name_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for p in &self.params {
            if p.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericFault(format!(
                    "parameter {} holds a non-finite value",
                    p.name
                )));
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| ParamBlob {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: B64.encode(
                        p.data
                            .iter()
                            .flat_map(|v| v.to_le_bytes())
                            .collect::<Vec<u8>>(),
                    ),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint, expected: Option<&NetConfig>) -> Result<Self> {
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "checkpoint format version {} is not supported (expected {CHECKPOINT_FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        if let Some(expected) = expected {
            if *expected != ckpt.config {
                return Err(Error::Config(
                    "checkpoint network config does not match the requested config".into(),
                ));
            }
        }
        ckpt.config.validate()?;
        let mut loaded = Vec::with_capacity(ckpt.params.len());
        for blob in ckpt.params {
            let bytes = B64
                .decode(blob.data.as_bytes())
                .map_err(|e| Error::Data(format!("parameter {}: {e}", blob.name)))?;
            let len: usize = blob.shape.iter().product();
            if bytes.len() != len * 8 {
                return Err(Error::Data(format!(
                    "parameter {}: {} bytes for shape {:?}",
                    blob.name,
                    bytes.len(),
                    blob.shape
                )));
            }
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            loaded.push(Param {
                name: blob.name,
                shape: blob.shape,
                data,
            });
        }
        let mut binder = Binder {
            by_name: loaded
                .iter()
                .enumerate()
                .map(|(i, p)| (p.name.as_str(), i))
                .collect(),
            params: &loaded,
            order: Vec::new(),
            errors: Vec::new(),
        };
        let layout = Layout::build(&ckpt.config, &mut binder);
        if !binder.errors.is_empty() {
            return Err(Error::Data(format!(
                "checkpoint parameters do not match the network: {}",
                binder.errors.join(", ")
            )));
        }
        if binder.order.len() != loaded.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} parameters, network expects {}",
                loaded.len(),
                binder.order.len()
            )));
        }
        let order = binder.order;
        let mut slots: Vec<Option<Param>> = loaded.into_iter().map(Some).collect();
        let params = order
            .iter()
            .map(|&i| slots[i].take().expect("each parameter bound once"))
            .collect();
        Ok(Self {
            config: ckpt.config,
            params,
            layout,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| Error::Data(e.to_string()))?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected: Option<&NetConfig>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: malformed checkpoint: {e}", path.display())))?;
        Self::from_checkpoint(ckpt, expected)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: NetConfig,
    pub params: Vec<ParamBlob>,
}

/// Parameter values as base64 of little-endian `f64` bytes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBlob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

/// Gradient buffers aligned with [`NetState::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &[Param]) -> Self {
        Self {
            grads: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|v| v.is_finite())
    }
}
