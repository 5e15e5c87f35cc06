//! Binary checkpoint container.
//!
//! Layout: magic `FLCK`, u32 version, u64 header length, UTF-8 JSON header,
//! then little-endian parameters followed by the Adam moments `m` and `v`
//! when an optimizer state is present.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, AnyMlp, Mlp, MlpArch, OptimizerState, Precision, Real};
use crate::error::{Error, Result};
use crate::rng::RngState;

const MAGIC: &[u8; 4] = b"FLCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum AnyAdam {
    F32(OptimizerState<f32>),
    F64(OptimizerState<f64>),
}

impl From<OptimizerState<f32>> for AnyAdam {
    fn from(o: OptimizerState<f32>) -> Self {
        AnyAdam::F32(o)
    }
}

impl From<OptimizerState<f64>> for AnyAdam {
    fn from(o: OptimizerState<f64>) -> Self {
        AnyAdam::F64(o)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: u64,
    pub seed: u64,
    /// Positions of the named training streams at save time.
    #[serde(default)]
    pub rng: BTreeMap<String, RngState>,
    /// The configuration that produced this checkpoint, verbatim.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: AnyMlp,
    pub optimizer: Option<AnyAdam>,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: MlpArch,
    precision: Precision,
    n_params: usize,
    optimizer: Option<OptimizerHeader>,
    meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
}

fn put<T: Real>(out: &mut Vec<u8>, xs: &[T]) {
    for &x in xs {
        x.write_le(out);
    }
}

fn take<T: Real>(body: &mut &[u8], n: usize) -> Result<Vec<T>> {
    let len = n * T::BYTES;
    if body.len() < len {
        return Err(Error::Format {
            kind: "checkpoint",
            detail: format!("truncated body: need {len} bytes, {} left", body.len()),
        });
    }
    let (head, rest) = body.split_at(len);
    *body = rest;
    Ok(head.chunks_exact(T::BYTES).map(T::read_le).collect())
}

fn encode_body<T: Real>(net: &Mlp<T>, opt: Option<&OptimizerState<T>>, out: &mut Vec<u8>) {
    put(out, net.params());
    if let Some(o) = opt {
        put(out, &o.m);
        put(out, &o.v);
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let optimizer = match (&self.net, &self.optimizer) {
            (_, None) => None,
            (AnyMlp::F32(_), Some(AnyAdam::F32(o))) => Some((o.config, o.step)),
            (AnyMlp::F64(_), Some(AnyAdam::F64(o))) => Some((o.config, o.step)),
            _ => {
                return Err(Error::Usage(
                    "optimizer precision differs from network precision".into(),
                ))
            }
        };
        let header = Header {
            arch: self.net.arch().clone(),
            precision: self.net.precision(),
            n_params: match &self.net {
                AnyMlp::F32(m) => m.n_params(),
                AnyMlp::F64(m) => m.n_params(),
            },
            optimizer: optimizer.map(|(config, step)| OptimizerHeader { config, step }),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        match (&self.net, &self.optimizer) {
            (AnyMlp::F32(m), Some(AnyAdam::F32(o))) => encode_body(m, Some(o), &mut out),
            (AnyMlp::F64(m), Some(AnyAdam::F64(o))) => encode_body(m, Some(o), &mut out),
            (AnyMlp::F32(m), _) => encode_body(m, None, &mut out),
            (AnyMlp::F64(m), _) => encode_body(m, None, &mut out),
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            kind: "checkpoint",
            detail,
        };
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("missing FLCK magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let rest = &bytes[16..];
        if rest.len() < hlen {
            return Err(bad("truncated header".into()));
        }
        let header: Header =
            serde_json::from_slice(&rest[..hlen]).map_err(|e| bad(format!("header: {e}")))?;
        let mut body = &rest[hlen..];
        let n = header.n_params;
        fn decode<T: Real>(
            h: &Header,
            body: &mut &[u8],
            n: usize,
        ) -> Result<(Mlp<T>, Option<OptimizerState<T>>)> {
            let net = Mlp::from_params(h.arch.clone(), take(body, n)?)?;
            let opt = match &h.optimizer {
                Some(o) => Some(OptimizerState {
                    config: o.config,
                    step: o.step,
                    m: take(body, n)?,
                    v: take(body, n)?,
                }),
                None => None,
            };
            Ok((net, opt))
        }
        let (net, optimizer) = match header.precision {
            Precision::F32 => {
                let (n, o) = decode::<f32>(&header, &mut body, n)?;
                (AnyMlp::F32(n), o.map(AnyAdam::F32))
            }
            Precision::F64 => {
                let (n, o) = decode::<f64>(&header, &mut body, n)?;
                (AnyMlp::F64(n), o.map(AnyAdam::F64))
            }
        };
        if !body.is_empty() {
            return Err(bad(format!("{} trailing bytes", body.len())));
        }
        Ok(Checkpoint {
            net,
            optimizer,
            meta: header.meta,
        })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn sample(precision: Precision) -> Checkpoint {
        let arch = MlpArch::new(3, vec![5, 4]);
        let mut r = rng::stream(11, "init");
        let mut meta = CheckpointMeta {
            step: 17,
            seed: 11,
            ..Default::default()
        };
        meta.rng.insert("data".into(), RngState::capture(&r));
        meta.config = serde_json::json!({"steps": 17});
        match precision {
            Precision::F32 => {
                let mut net = Mlp::<f32>::new(arch, &mut r).unwrap();
                let mut opt = OptimizerState::new(AdamConfig::default(), net.n_params());
                let g: Vec<f32> = (0..net.n_params()).map(|i| (i as f32).sin()).collect();
                opt.step(net.params_mut(), &g).unwrap();
                Checkpoint {
                    net: net.into(),
                    optimizer: Some(AnyAdam::F32(opt)),
                    meta,
                }
            }
            Precision::F64 => Checkpoint {
                net: Mlp::<f64>::new(arch, &mut r).unwrap().into(),
                optimizer: None,
                meta,
            },
        }
    }

    #[test]
    fn exact_round_trip() {
        for p in [Precision::F32, Precision::F64] {
            let ck = sample(p);
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.flck");
        let ck = sample(Precision::F32);
        write_checkpoint(&path, &ck).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), ck);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample(Precision::F32).to_bytes().unwrap();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }
}
