//! Model checkpoints: a directory holding `manifest.txt` and one `TNSv1`
//! tensor file per parameter and normalization buffer.
//!
//! `TNSv1` layout (little-endian): `TNSv1` magic, `rank: u32`, `rank`
//! dimensions as `u32`, then the `f32` payload in row-major order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::rng::fnv1a;
use crate::topicvae::{Architecture, ModelConfig, TopicModel};

pub const TENSOR_MAGIC: &[u8; 5] = b"TNSv1";
pub const MANIFEST: &str = "manifest.txt";
const FORMAT: &str = "wkd-checkpoint-1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn from_matrix(m: &Array2<f64>) -> Tensor {
        Tensor {
            dims: vec![m.nrows(), m.ncols()],
            data: m.iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn from_vector(v: &Array1<f64>) -> Tensor {
        Tensor {
            dims: vec![v.len()],
            data: v.iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<Array2<f64>> {
        let &[r, c] = self.dims.as_slice() else {
            return Err(Error::Shape(format!(
                "expected a rank-2 tensor, got dims {:?}",
                self.dims
            )));
        };
        Ok(Array2::from_shape_fn((r, c), |(i, j)| f64::from(self.data[i * c + j])))
    }

    pub fn to_vector(&self) -> Result<Array1<f64>> {
        let &[n] = self.dims.as_slice() else {
            return Err(Error::Shape(format!(
                "expected a rank-1 tensor, got dims {:?}",
                self.dims
            )));
        };
        Ok(Array1::from_shape_fn(n, |i| f64::from(self.data[i])))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Tensor> {
        if bytes.len() < 9 {
            return Err(Error::Truncated {
                expected: 9,
                actual: bytes.len(),
            });
        }
        if &bytes[..5] != TENSOR_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"TNSv1\"",
                String::from_utf8_lossy(&bytes[..5])
            )));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let rank = word(5);
        let header = 9 + 4 * rank;
        if bytes.len() < header {
            return Err(Error::Truncated {
                expected: header,
                actual: bytes.len(),
            });
        }
        let dims: Vec<usize> = (0..rank).map(|i| word(9 + 4 * i)).collect();
        let expected = header + 4 * dims.iter().product::<usize>();
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - expected
            )));
        }
        let data: Vec<f32> = bytes[header..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("tensor entry {pos} is {}", data[pos])));
        }
        Ok(Tensor { dims, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Tensor> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Tensor::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Canonical text of the architecture fields, hashed into the manifest.
pub fn config_fingerprint(cfg: &ModelConfig) -> String {
    format!(
        "architecture={};topics={};vocab_size={};ctx_dim={};hidden_sizes={};ctx_projection={};dropout={}",
        cfg.architecture,
        cfg.topics,
        cfg.vocab_size,
        cfg.ctx_dim,
        join(&cfg.hidden_sizes),
        cfg.ctx_projection,
        cfg.dropout
    )
}

pub fn config_hash(cfg: &ModelConfig) -> u64 {
    fnv1a(config_fingerprint(cfg).as_bytes())
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

const BUFFERS: [&str; 2] = ["decoder_norm.running_mean", "decoder_norm.running_var"];

/// A model with the seed it was initialized from and free-form metadata
/// (for example a vocabulary hash) stored alongside it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: TopicModel,
    pub seed: u64,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: TopicModel, seed: u64) -> Checkpoint {
        Checkpoint {
            model,
            seed,
            meta: BTreeMap::new(),
        }
    }

    pub fn manifest(&self) -> String {
        let cfg = &self.model.config;
        let mut names = self.model.param_names();
        names.extend(BUFFERS.iter().map(|s| s.to_string()));
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("format", FORMAT.into());
        kv("architecture", cfg.architecture.to_string());
        kv("topics", cfg.topics.to_string());
        kv("vocab_size", cfg.vocab_size.to_string());
        kv("ctx_dim", cfg.ctx_dim.to_string());
        kv("hidden_sizes", join(&cfg.hidden_sizes));
        kv("ctx_projection", cfg.ctx_projection.to_string());
        kv("dropout", cfg.dropout.to_string());
        kv("seed", self.seed.to_string());
        kv("config_hash", format!("{:016x}", config_hash(cfg)));
        kv("tensors", names.join(","));
        for (k, v) in &self.meta {
            kv(&format!("meta.{k}"), v.clone());
        }
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let m = &self.model;
        for (name, p) in m.param_names().iter().zip(m.params()) {
            Tensor::from_matrix(p).write(dir.join(format!("{name}.tns")))?;
        }
        Tensor::from_vector(&m.decoder_norm.running_mean).write(dir.join(format!("{}.tns", BUFFERS[0])))?;
        Tensor::from_vector(&m.decoder_norm.running_var).write(dir.join(format!("{}.tns", BUFFERS[1])))?;
        let path = dir.join(MANIFEST);
        fs::write(&path, self.manifest()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Checkpoint> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let fields = parse_manifest(&text)?;
        let get = |k: &str| {
            fields
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Format(format!("manifest is missing `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("manifest `{k}` is not an integer")))
        };
        if get("format")? != FORMAT {
            return Err(Error::Format(format!(
                "unsupported checkpoint format {:?}",
                get("format")?
            )));
        }
        let hidden = get("hidden_sizes")?;
        let hidden_sizes = if hidden.is_empty() {
            Vec::new()
        } else {
            hidden
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Format(format!("bad hidden size {s:?}")))
                })
                .collect::<Result<_>>()?
        };
        let config = ModelConfig {
            architecture: get("architecture")?.parse::<Architecture>()?,
            topics: num("topics")?,
            vocab_size: num("vocab_size")?,
            ctx_dim: num("ctx_dim")?,
            hidden_sizes,
            ctx_projection: get("ctx_projection")? == "true",
            dropout: get("dropout")?
                .parse()
                .map_err(|_| Error::Format("manifest `dropout` is not a number".into()))?,
        };
        let expected_hash = format!("{:016x}", config_hash(&config));
        if get("config_hash")? != expected_hash {
            return Err(Error::Format(format!(
                "config hash {} does not match manifest fields ({expected_hash})",
                get("config_hash")?
            )));
        }
        let seed = get("seed")?
            .parse()
            .map_err(|_| Error::Format("manifest `seed` is not an integer".into()))?;

        let mut model = TopicModel::zeros(config)?;
        let names = model.param_names();
        for (name, p) in names.iter().zip(model.params_mut()) {
            let t = Tensor::read(dir.join(format!("{name}.tns")))?.to_matrix()?;
            if t.dim() != p.dim() {
                return Err(Error::Shape(format!(
                    "{name}: stored {:?}, expected {:?}",
                    t.dim(),
                    p.dim()
                )));
            }
            *p = t;
        }
        let v = model.vocab_size();
        for (name, slot) in BUFFERS.iter().zip([
            &mut model.decoder_norm.running_mean,
            &mut model.decoder_norm.running_var,
        ]) {
            let t = Tensor::read(dir.join(format!("{name}.tns")))?.to_vector()?;
            if t.len() != v {
                return Err(Error::Shape(format!(
                    "{name}: stored {} entries, expected {v}",
                    t.len()
                )));
            }
            *slot = t;
        }
        let meta = fields
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_owned(), v.clone())))
            .collect();
        Ok(Checkpoint { model, seed, meta })
    }
}

fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected `key = value`, got {line:?}"),
        })?;
        out.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    Ok(out)
}
