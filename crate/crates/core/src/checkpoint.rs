//! Self-describing binary checkpoints.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! "CCGAN1"
//! u32 network count
//! per network:
//!   u32 name length, name bytes (UTF-8)
//!   u8 hidden activation, u8 output activation, u8 residual flag
//!   u32 dim count, u32 dims...
//!   f64 parameters: for each layer, weight row-major then bias
//!   u8 optimizer present
//!   if present: f64 base_lr, beta1, beta2, eps, weight_decay, decay_factor,
//!               u64 decay_every, u64 t, then m and v in the parameter layout
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, HiddenActivation, Layer, MlpParams, MlpSpec, OutputActivation};

pub const MAGIC: &[u8; 6] = b"CCGAN1";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub params: MlpParams,
    pub optimizer: Option<AdamState>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<CheckpointEntry>,
}

fn hidden_code(a: HiddenActivation) -> u8 {
    match a {
        HiddenActivation::Relu => 0,
        HiddenActivation::Tanh => 1,
    }
}

fn output_code(a: OutputActivation) -> u8 {
    match a {
        OutputActivation::Linear => 0,
        OutputActivation::Sigmoid => 1,
        OutputActivation::Softmax => 2,
        OutputActivation::Tanh => 3,
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::format(0, format!("checkpoint: {}", msg.into()))
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => corrupt("truncated"),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let v = self.f64()?;
            if !v.is_finite() {
                return Err(corrupt("non-finite parameter"));
            }
            data.push(v);
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("sized above"))
    }

    fn layers(&mut self, spec: &MlpSpec) -> Result<Vec<Layer>> {
        spec.layer_dims
            .windows(2)
            .map(|w| {
                Ok(Layer {
                    weight: self.matrix(w[0], w[1])?,
                    bias: self.matrix(1, w[1])?,
                })
            })
            .collect()
    }
}

fn write_layers<W: Write>(w: &mut W, layers: &[Layer]) -> io::Result<()> {
    for l in layers {
        // `iter` walks in logical row-major order regardless of memory layout.
        for v in l.weight.iter().chain(l.bias.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

impl Checkpoint {
    pub fn push(&mut self, name: &str, params: &MlpParams, optimizer: Option<&AdamState>) {
        self.entries.push(CheckpointEntry {
            name: name.to_string(),
            params: params.clone(),
            optimizer: optimizer.cloned(),
        });
    }

    pub fn get(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            let name = e.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            let spec = &e.params.spec;
            w.write_all(&[
                hidden_code(spec.hidden_activation),
                output_code(spec.output_activation),
                spec.residual as u8,
            ])?;
            w.write_all(&(spec.layer_dims.len() as u32).to_le_bytes())?;
            for &d in &spec.layer_dims {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            write_layers(&mut w, &e.params.layers)?;
            match &e.optimizer {
                None => w.write_all(&[0])?,
                Some(st) => {
                    w.write_all(&[1])?;
                    let c = &st.config;
                    for v in [c.base_lr, c.beta1, c.beta2, c.eps, c.weight_decay, c.decay_factor] {
                        w.write_all(&v.to_le_bytes())?;
                    }
                    w.write_all(&c.decay_every.to_le_bytes())?;
                    w.write_all(&st.t.to_le_bytes())?;
                    write_layers(&mut w, &st.m)?;
                    write_layers(&mut w, &st.v)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = Reader { inner: r };
        if &r.bytes::<6>()? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let count = r.u32()?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let mut name = vec![0u8; len];
            r.inner.read_exact(&mut name).map_err(|_| corrupt("truncated name"))?;
            let name = String::from_utf8(name).map_err(|_| corrupt("name is not UTF-8"))?;
            let hidden = match r.u8()? {
                0 => HiddenActivation::Relu,
                1 => HiddenActivation::Tanh,
                c => return Err(corrupt(format!("unknown hidden activation {c}"))),
            };
            let output = match r.u8()? {
                0 => OutputActivation::Linear,
                1 => OutputActivation::Sigmoid,
                2 => OutputActivation::Softmax,
                3 => OutputActivation::Tanh,
                c => return Err(corrupt(format!("unknown output activation {c}"))),
            };
            let residual = match r.u8()? {
                0 => false,
                1 => true,
                c => return Err(corrupt(format!("bad residual flag {c}"))),
            };
            let ndims = r.u32()? as usize;
            if ndims > 64 {
                return Err(corrupt("implausible layer count"));
            }
            let dims = (0..ndims)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let spec = MlpSpec::new(dims, hidden, output)?.with_residual(residual);
            spec.validate()?;
            let layers = r.layers(&spec)?;
            let params = MlpParams::from_layers(spec, layers)?;
            let optimizer = match r.u8()? {
                0 => None,
                1 => {
                    let config = AdamConfig {
                        base_lr: r.f64()?,
                        beta1: r.f64()?,
                        beta2: r.f64()?,
                        eps: r.f64()?,
                        weight_decay: r.f64()?,
                        decay_factor: r.f64()?,
                        decay_every: r.u64()?,
                    };
                    let t = r.u64()?;
                    let m = r.layers(&params.spec)?;
                    let v = r.layers(&params.spec)?;
                    Some(AdamState { config, t, m, v })
                }
                c => return Err(corrupt(format!("bad optimizer flag {c}"))),
            };
            entries.push(CheckpointEntry {
                name,
                params,
                optimizer,
            });
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}
