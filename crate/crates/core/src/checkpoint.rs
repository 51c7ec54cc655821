//! Portable checkpoint file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   b"DQMCKPT\n"
//! hdr_len    u32       length of the JSON header in bytes
//! header     hdr_len   UTF-8 JSON, see `Header`
//! count      u64       number of f64 values that follow
//! values     count×8   IEEE-754 binary64, little-endian
//! ```
//!
//! The value block holds four parameter sets back to back, each in
//! W1, b1, W2, b2 row-major order: evaluation network, target network, then the
//! optimizer's first and second moment accumulators.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Hyperparams;
use crate::error::{Error, Result};
use crate::imu_io::N_STATES;
use crate::qnet::{OptimizerKind, OptimizerState, QNetwork, HIDDEN, N_ACTIONS, N_PARAMS};

pub const MAGIC: &[u8; 8] = b"DQMCKPT\n";
pub const FORMAT_VERSION: u32 = 1;
const BLOCKS: [&str; 4] = ["eval", "target", "adam_m", "adam_v"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub episodes_completed: usize,
    pub learn_counter: u64,
    pub seed: u64,
    /// Content hash of the trajectory the model was trained on.
    pub data_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub hyper: Hyperparams,
    pub eval_net: QNetwork,
    pub target_net: QNetwork,
    pub optimizer: OptimizerState,
    pub meta: TrainingMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerShape {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerHeader {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    hyperparams: Hyperparams,
    layers: Vec<LayerShape>,
    blocks: Vec<String>,
    optimizer: OptimizerHeader,
    meta: TrainingMeta,
}

fn layer_shapes() -> Vec<LayerShape> {
    [
        ("w1", vec![HIDDEN, N_STATES]),
        ("b1", vec![HIDDEN]),
        ("w2", vec![N_ACTIONS, HIDDEN]),
        ("b2", vec![N_ACTIONS]),
    ]
    .into_iter()
    .map(|(name, shape)| LayerShape {
        name: name.to_string(),
        shape,
    })
    .collect()
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format_version: FORMAT_VERSION,
            hyperparams: self.hyper.clone(),
            layers: layer_shapes(),
            blocks: BLOCKS.iter().map(|s| s.to_string()).collect(),
            optimizer: OptimizerHeader {
                kind: self.optimizer.kind,
                lr: self.optimizer.lr,
                beta1: self.optimizer.beta1,
                beta2: self.optimizer.beta2,
                eps: self.optimizer.eps,
                step: self.optimizer.step,
            },
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let values: Vec<f64> = [
            &self.eval_net,
            &self.target_net,
            &self.optimizer.m,
            &self.optimizer.v,
        ]
        .into_iter()
        .flat_map(|n| n.params().copied())
        .collect();

        let mut out = Vec::with_capacity(8 + 4 + json.len() + 8 + values.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::data("not a checkpoint file (bad magic)"));
        }
        let hdr_len = u32::from_le_bytes(r.take(4, "header length")?.try_into().unwrap()) as usize;
        let raw = r.take(hdr_len, "header")?;
        let value: serde_json::Value = serde_json::from_slice(raw)
            .map_err(|e| Error::data(format!("checkpoint header is not valid JSON: {e}")))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::data(format!("unsupported checkpoint version {v}"))),
            None => return Err(Error::data("checkpoint header lacks format_version")),
        }
        let header: Header = serde_json::from_value(value)
            .map_err(|e| Error::data(format!("malformed checkpoint header: {e}")))?;

        let want = layer_shapes();
        let shapes_ok = header.layers.len() == want.len()
            && header
                .layers
                .iter()
                .zip(&want)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if !shapes_ok {
            let got: Vec<String> = header
                .layers
                .iter()
                .map(|l| format!("{}{:?}", l.name, l.shape))
                .collect();
            return Err(Error::data(format!(
                "checkpoint layer shapes [{}] do not match the {N_STATES}x{HIDDEN}x{N_ACTIONS} network",
                got.join(", ")
            )));
        }
        if header.blocks != BLOCKS {
            return Err(Error::data(format!(
                "unexpected parameter blocks {:?}",
                header.blocks
            )));
        }
        header.hyperparams.check_shapes()?;

        let count = u64::from_le_bytes(r.take(8, "value count")?.try_into().unwrap()) as usize;
        if count != BLOCKS.len() * N_PARAMS {
            return Err(Error::data(format!(
                "expected {} parameter values, header declares {count}",
                BLOCKS.len() * N_PARAMS
            )));
        }
        let raw = r.take(count * 8, "parameter block")?;
        if r.pos != bytes.len() {
            return Err(Error::data(format!(
                "{} trailing bytes after parameters",
                bytes.len() - r.pos
            )));
        }
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("checkpoint contains non-finite parameters"));
        }
        let mut nets = values.chunks_exact(N_PARAMS).map(QNetwork::from_slice);
        let mut next = || nets.next().expect("four blocks");
        let (eval_net, target_net, m, v) = (next()?, next()?, next()?, next()?);

        let o = header.optimizer;
        Ok(Checkpoint {
            hyper: header.hyperparams,
            eval_net,
            target_net,
            optimizer: OptimizerState {
                kind: o.kind,
                lr: o.lr,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                m,
                v,
                step: o.step,
            },
            meta: header.meta,
        })
    }

    /// Write to `path` via a temporary sibling file and rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::data(format!("cannot read checkpoint {}: {e}", path.display())))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path.display()))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::data(format!("checkpoint truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

/// Write `bytes` to a temporary file next to `path`, then rename over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
