//! Binary checkpoints: `GIMC`, u32 version, then named f64 tensors until EOF.
//! Each tensor is a u32 name length, the UTF-8 name, a u32 rank, u32 dims and
//! little-endian f64 values. Model settings that are not shapes travel as
//! one-element `config.*` tensors.

use std::fs;
use std::path::Path;

use crate::encoder::{EncoderMode, EncoderParams};
use crate::error::{GimcError, Result};
use crate::gat::{GatHead, GatLayer, GatStack};
use crate::model::{ModelConfig, ModelParams, StatementSource};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 4] = b"GIMC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

fn push_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn write_tensors(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for t in tensors {
        push_u32(&mut out, t.name.len());
        out.extend_from_slice(t.name.as_bytes());
        push_u32(&mut out, t.dims.len());
        for &d in &t.dims {
            push_u32(&mut out, d);
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(GimcError::Checkpoint(format!(
                "truncated at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn read_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| bad_magic())? != MAGIC {
        return Err(bad_magic());
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(GimcError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| GimcError::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| GimcError::Checkpoint(format!("{name}: shape overflows")))?;
        let raw = r.take(count.checked_mul(8).ok_or_else(|| {
            GimcError::Checkpoint(format!("{name}: shape overflows"))
        })?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(NamedTensor { name, dims, data });
    }
    Ok(out)
}

fn bad_magic() -> GimcError {
    GimcError::Checkpoint("missing GIMC magic".into())
}

fn scalar(name: &str, v: f64) -> NamedTensor {
    NamedTensor {
        name: name.into(),
        dims: vec![1],
        data: vec![v],
    }
}

pub fn params_to_tensors(params: &ModelParams) -> Vec<NamedTensor> {
    let c = &params.config;
    let mut out = vec![
        scalar("config.hash_buckets", c.hash_buckets as f64),
        scalar("config.leaky_slope", c.leaky_slope),
        scalar(
            "config.pre_graph_statement",
            (c.statement_source == StatementSource::PreGraph) as u8 as f64,
        ),
        scalar(
            "config.cache_mode",
            (c.mode == EncoderMode::Cache) as u8 as f64,
        ),
    ];
    for (name, m) in params.named() {
        out.push(NamedTensor {
            name,
            dims: vec![m.rows, m.cols],
            data: m.data.clone(),
        });
    }
    out
}

pub fn params_to_bytes(params: &ModelParams) -> Vec<u8> {
    write_tensors(&params_to_tensors(params))
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<ModelParams> {
    let tensors = read_tensors(bytes)?;
    let find = |name: &str| {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| GimcError::Checkpoint(format!("missing tensor {name}")))
    };
    let matrix = |name: &str| -> Result<Matrix> {
        let t = find(name)?;
        if t.dims.len() != 2 {
            return Err(GimcError::Checkpoint(format!("{name}: expected rank 2")));
        }
        Ok(Matrix::from_vec(t.dims[0], t.dims[1], t.data.clone()))
    };
    let value = |name: &str| -> Result<f64> {
        let t = find(name)?;
        t.data
            .first()
            .copied()
            .ok_or_else(|| GimcError::Checkpoint(format!("{name}: empty")))
    };

    let embed = matrix("encoder.embed")?;
    let proj = matrix("encoder.proj")?;
    let leaky_slope = value("config.leaky_slope")?;
    let mut layers = Vec::new();
    while tensors.iter().any(|t| t.name == format!("gat.{}.w_o", layers.len())) {
        let l = layers.len();
        let mut heads = Vec::new();
        while tensors
            .iter()
            .any(|t| t.name == format!("gat.{l}.{}.w_l", heads.len()))
        {
            let k = heads.len();
            heads.push(GatHead {
                w_l: matrix(&format!("gat.{l}.{k}.w_l"))?,
                w_r: matrix(&format!("gat.{l}.{k}.w_r"))?,
                att: matrix(&format!("gat.{l}.{k}.att"))?,
            });
        }
        layers.push(GatLayer {
            heads,
            w_o: matrix(&format!("gat.{l}.w_o"))?,
        });
    }
    if layers.is_empty() || layers[0].heads.is_empty() {
        return Err(GimcError::Checkpoint("no attention layers".into()));
    }
    let config = ModelConfig {
        mode: if value("config.cache_mode")? != 0.0 {
            EncoderMode::Cache
        } else {
            EncoderMode::Toy
        },
        dim_in: proj.cols,
        dim: proj.rows,
        hash_buckets: value("config.hash_buckets")? as usize,
        layers: layers.len(),
        heads: layers[0].heads.len(),
        leaky_slope,
        statement_source: if value("config.pre_graph_statement")? != 0.0 {
            StatementSource::PreGraph
        } else {
            StatementSource::PostGraph
        },
    };
    let params = ModelParams {
        encoder: EncoderParams { embed, proj },
        roles: matrix("roles")?,
        pair_proj: matrix("pair_proj")?,
        gat: GatStack { layers, leaky_slope },
        classifier: matrix("classifier")?,
        config,
    };
    check_shapes(&params)?;
    Ok(params)
}

fn check_shapes(p: &ModelParams) -> Result<()> {
    let c = &p.config;
    let d = c.dim;
    let dh = d / c.heads;
    let mut expect: Vec<(String, usize, usize)> = vec![
        ("encoder.proj".into(), d, c.dim_in),
        ("roles".into(), crate::phrase::RETAINED_RELATIONS.len(), d),
        ("pair_proj".into(), d, 2 * d),
        ("classifier".into(), 2, 2 * d),
    ];
    let rows = if c.mode == EncoderMode::Toy { c.hash_buckets } else { 0 };
    expect.push(("encoder.embed".into(), rows, c.dim_in));
    for l in 0..c.layers {
        for k in 0..c.heads {
            expect.push((format!("gat.{l}.{k}.w_l"), dh, d));
            expect.push((format!("gat.{l}.{k}.w_r"), dh, d));
            expect.push((format!("gat.{l}.{k}.att"), 1, dh));
        }
        expect.push((format!("gat.{l}.w_o"), d, c.heads * dh));
    }
    let named = p.named();
    for (name, r, cols) in expect {
        let m = named
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| *m)
            .ok_or_else(|| GimcError::Checkpoint(format!("missing tensor {name}")))?;
        if m.rows != r || m.cols != cols || m.data.len() != r * cols {
            return Err(GimcError::Checkpoint(format!(
                "{name}: expected {r}x{cols}, found {}x{}",
                m.rows, m.cols
            )));
        }
        if !m.is_finite() {
            return Err(GimcError::NonFinite(format!("checkpoint tensor {name}")));
        }
    }
    Ok(())
}

pub fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, params_to_bytes(params)).map_err(|e| GimcError::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| GimcError::io(path, e))?;
    params_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = ModelConfig {
            hash_buckets: 64,
            dim: 8,
            dim_in: 4,
            heads: 2,
            layers: 2,
            ..Default::default()
        };
        let p = ModelParams::init(&cfg, 3).unwrap();
        let q = params_from_bytes(&params_to_bytes(&p)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_garbage() {
        assert!(params_from_bytes(b"nope").is_err());
        let mut b = params_to_bytes(&ModelParams::init(&ModelConfig::default(), 1).unwrap());
        b.truncate(b.len() - 3);
        assert!(params_from_bytes(&b).is_err());
    }
}
