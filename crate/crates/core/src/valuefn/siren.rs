//! Sinusoidal multilayer perceptron and its weights files.
//!
//! Input is `(x, t)` mapped affinely from `[input_lower, input_upper]` onto
//! `[-1, 1]` per coordinate. Every hidden layer computes `sin(w0 · (W z + b))`,
//! the last layer is affine with a single output, and the result is mapped
//! through `output_scale · y + output_offset`.
//!
//! Binary weights layout (version 1), byte order given by the tag:
//!
//! | field            | type                                          |
//! |------------------|-----------------------------------------------|
//! | magic            | `b"SIRENW\0\0"`                               |
//! | version          | u32 = 1                                       |
//! | endian tag       | u32 = 0x0102_0304                             |
//! | layer count `L`  | u32 (affine layers, ≥ 1)                      |
//! | widths           | u32 × (L + 1); first = state dim + 1, last = 1 |
//! | w0               | f64                                           |
//! | output scale     | f64                                           |
//! | output offset    | f64                                           |
//! | input ranges     | (f64 lower, f64 upper) × widths[0]            |
//! | per layer        | f64 weights (out × in, row-major), f64 bias × out |
//!
//! A JSON variant is also accepted on load; there `w0`, `output_scale` and
//! `output_offset` may be omitted and default to 30, 1 and 0.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

pub const DEFAULT_W0: f64 = 30.0;

const MAGIC: &[u8; 8] = b"SIRENW\0\0";
const VERSION: u32 = 1;
const ENDIAN_TAG: u32 = 0x0102_0304;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirenLayer {
    /// Row-major `outputs × inputs`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

fn default_w0() -> f64 {
    DEFAULT_W0
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirenNetwork {
    layers: Vec<SirenLayer>,
    #[serde(default = "default_w0")]
    w0: f64,
    input_lower: Vec<f64>,
    input_upper: Vec<f64>,
    #[serde(default = "default_scale")]
    output_scale: f64,
    #[serde(default)]
    output_offset: f64,
}

impl SirenNetwork {
    pub fn new(
        layers: Vec<SirenLayer>,
        w0: f64,
        input_lower: Vec<f64>,
        input_upper: Vec<f64>,
        output_scale: f64,
        output_offset: f64,
    ) -> Result<Self> {
        let net = Self {
            layers,
            w0,
            input_lower,
            input_upper,
            output_scale,
            output_offset,
        };
        net.validate().map_err(Error::InvalidParameter)?;
        Ok(net)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.layers.is_empty() {
            return Err("network has no layers".into());
        }
        let inputs = self.input_lower.len();
        if inputs < 2 || self.input_upper.len() != inputs {
            return Err("input ranges must cover at least one state and time".into());
        }
        if self
            .input_lower
            .iter()
            .zip(&self.input_upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err("input ranges must be finite with lower < upper".into());
        }
        let mut width = inputs;
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.weights.is_empty() || layer.bias.len() != layer.weights.len() {
                return Err(format!("layer {k}: bias length differs from row count"));
            }
            if layer.weights.iter().any(|row| row.len() != width) {
                return Err(format!("layer {k}: expected {width} inputs per row"));
            }
            if layer.weights.iter().flatten().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(format!("layer {k}: non-finite weight"));
            }
            width = layer.weights.len();
        }
        if width != 1 {
            return Err(format!("final layer must have one output, has {width}"));
        }
        if ![self.w0, self.output_scale, self.output_offset].iter().all(|v| v.is_finite()) {
            return Err("w0 and output map must be finite".into());
        }
        Ok(())
    }

    /// Randomly initialized network with the usual sinusoidal-network scheme
    /// (first layer `U(±1/n)`, later layers `U(±sqrt(6/n)/w0)`).
    pub fn random(hidden: &[usize], w0: f64, state_lower: &[f64], state_upper: &[f64], horizon: f64, seed: u64) -> Result<Self> {
        let mut input_lower = state_lower.to_vec();
        let mut input_upper = state_upper.to_vec();
        input_lower.push(0.0);
        input_upper.push(horizon);
        let rng = CounterRng::new(seed);
        let mut widths = vec![input_lower.len()];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut layers = Vec::new();
        let mut counter = 0u64;
        for k in 0..widths.len() - 1 {
            let (n_in, n_out) = (widths[k], widths[k + 1]);
            let limit = if k == 0 {
                1.0 / n_in as f64
            } else {
                (6.0 / n_in as f64).sqrt() / w0
            };
            let mut draw = || {
                counter += 1;
                rng.draw(counter).uniform(-limit, limit)
            };
            let weights = (0..n_out).map(|_| (0..n_in).map(|_| draw()).collect()).collect();
            let bias = (0..n_out).map(|_| draw()).collect();
            layers.push(SirenLayer { weights, bias });
        }
        Self::new(layers, w0, input_lower, input_upper, 1.0, 0.0)
    }

    pub fn state_dim(&self) -> usize {
        self.input_lower.len() - 1
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_lower.len()];
        w.extend(self.layers.iter().map(|l| l.weights.len()));
        w
    }

    fn normalized_input(&self, x: &[f64], t: f64) -> Vec<f64> {
        x.iter()
            .chain(std::iter::once(&t))
            .zip(self.input_lower.iter().zip(&self.input_upper))
            .map(|(v, (lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect()
    }

    /// Forward pass keeping hidden pre-activations for back-propagation.
    fn forward(&self, x: &[f64], t: f64, keep: Option<&mut Vec<Vec<f64>>>) -> f64 {
        let mut z = self.normalized_input(x, t);
        let last = self.layers.len() - 1;
        let mut stash = keep;
        for (k, layer) in self.layers.iter().enumerate() {
            let pre: Vec<f64> = layer
                .weights
                .iter()
                .zip(&layer.bias)
                .map(|(row, b)| row.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + b)
                .collect();
            if k == last {
                return self.output_scale * pre[0] + self.output_offset;
            }
            z = pre.iter().map(|a| (self.w0 * a).sin()).collect();
            if let Some(s) = stash.as_deref_mut() {
                s.push(pre);
            }
        }
        unreachable!("validated networks end in a one-output layer")
    }

    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        self.forward(x, t, None)
    }

    /// Spatial gradient by the chain rule.
    pub fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let mut pres = Vec::with_capacity(self.layers.len());
        self.forward(x, t, Some(&mut pres));
        let last = self.layers.last().unwrap();
        let mut g: Vec<f64> = last.weights[0].iter().map(|w| self.output_scale * w).collect();
        for (layer, pre) in self.layers[..self.layers.len() - 1].iter().zip(&pres).rev() {
            let upstream: Vec<f64> = g
                .iter()
                .zip(pre)
                .map(|(gi, a)| gi * self.w0 * (self.w0 * a).cos())
                .collect();
            let n_in = layer.weights[0].len();
            let mut next = vec![0.0; n_in];
            for (row, u) in layer.weights.iter().zip(&upstream) {
                for (acc, w) in next.iter_mut().zip(row) {
                    *acc += w * u;
                }
            }
            g = next;
        }
        for d in 0..self.state_dim() {
            out[d] = g[d] * 2.0 / (self.input_upper[d] - self.input_lower[d]);
        }
    }
}

pub fn save_network(net: &SirenNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(net, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn encode<W: Write>(net: &SirenNetwork, w: &mut W) -> std::io::Result<()> {
    type E = LittleEndian;
    w.write_all(MAGIC)?;
    w.write_u32::<E>(VERSION)?;
    w.write_u32::<E>(ENDIAN_TAG)?;
    w.write_u32::<E>(net.layers.len() as u32)?;
    for width in net.widths() {
        w.write_u32::<E>(width as u32)?;
    }
    w.write_f64::<E>(net.w0)?;
    w.write_f64::<E>(net.output_scale)?;
    w.write_f64::<E>(net.output_offset)?;
    for (lo, hi) in net.input_lower.iter().zip(&net.input_upper) {
        w.write_f64::<E>(*lo)?;
        w.write_f64::<E>(*hi)?;
    }
    for layer in &net.layers {
        for row in &layer.weights {
            for v in row {
                w.write_f64::<E>(*v)?;
            }
        }
        for v in &layer.bias {
            w.write_f64::<E>(*v)?;
        }
    }
    Ok(())
}

/// Loads binary or JSON weights; see the module docs for both layouts.
pub fn load_network(path: impl AsRef<Path>) -> Result<SirenNetwork> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let net = if bytes.starts_with(MAGIC) {
        decode_binary(&bytes[MAGIC.len()..]).map_err(|r| Error::malformed(path, r))?
    } else {
        serde_json::from_slice::<SirenNetwork>(&bytes).map_err(|e| Error::malformed(path, e.to_string()))?
    };
    net.validate().map_err(|r| Error::malformed(path, r))?;
    Ok(net)
}

fn decode_binary(bytes: &[u8]) -> std::result::Result<SirenNetwork, String> {
    if bytes.len() < 8 {
        return Err("truncated header".into());
    }
    if LittleEndian::read_u32(&bytes[4..8]) == ENDIAN_TAG {
        decode_body::<LittleEndian>(bytes)
    } else if BigEndian::read_u32(&bytes[4..8]) == ENDIAN_TAG {
        decode_body::<BigEndian>(bytes)
    } else {
        Err("unrecognised endianness tag".into())
    }
}

fn decode_body<E: ByteOrder>(bytes: &[u8]) -> std::result::Result<SirenNetwork, String> {
    let mut r = bytes;
    let short = |_| "truncated weights file".to_string();
    let version = r.read_u32::<E>().map_err(short)?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    r.read_u32::<E>().map_err(short)?;
    let count = r.read_u32::<E>().map_err(short)? as usize;
    if count == 0 || count > 1024 {
        return Err(format!("implausible layer count {count}"));
    }
    let mut widths = Vec::with_capacity(count + 1);
    for _ in 0..=count {
        let w = r.read_u32::<E>().map_err(short)? as usize;
        if w == 0 || w > 1 << 16 {
            return Err(format!("implausible layer width {w}"));
        }
        widths.push(w);
    }
    let w0 = r.read_f64::<E>().map_err(short)?;
    let output_scale = r.read_f64::<E>().map_err(short)?;
    let output_offset = r.read_f64::<E>().map_err(short)?;
    let (mut input_lower, mut input_upper) = (Vec::new(), Vec::new());
    for _ in 0..widths[0] {
        input_lower.push(r.read_f64::<E>().map_err(short)?);
        input_upper.push(r.read_f64::<E>().map_err(short)?);
    }
    let mut layers = Vec::with_capacity(count);
    for k in 0..count {
        let (n_in, n_out) = (widths[k], widths[k + 1]);
        let mut weights = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            let mut row = vec![0.0; n_in];
            r.read_f64_into::<E>(&mut row).map_err(short)?;
            weights.push(row);
        }
        let mut bias = vec![0.0; n_out];
        r.read_f64_into::<E>(&mut bias).map_err(short)?;
        layers.push(SirenLayer { weights, bias });
    }
    if !r.is_empty() {
        return Err(format!("{} trailing bytes", r.len()));
    }
    Ok(SirenNetwork {
        layers,
        w0,
        input_lower,
        input_upper,
        output_scale,
        output_offset,
    })
}
