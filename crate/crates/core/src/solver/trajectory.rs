//! Trajectory container.
//!
//! Layout (little-endian): magic `FLTR`, u32 version, u32 dim, u64 particle
//! count, u32 checkpoint count K, u64 seed, K f64 snapped times, K f64
//! requested times, u64 length + JSON solver spec, then K blocks of
//! `n x dim` f32 states.

use std::fs;
use std::path::Path;

use super::SolverSpec;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FLTR";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub n_particles: usize,
    pub seed: u64,
    /// Checkpoint times as configured.
    pub requested: Vec<f64>,
    /// Grid times the checkpoints snapped to.
    pub times: Vec<f64>,
    /// One row-major `n_particles x dim` batch per checkpoint.
    pub states: Vec<Vec<f64>>,
    pub spec: SolverSpec,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let spec = serde_json::to_vec(&self.spec)?;
        let k = self.times.len();
        let mut out =
            Vec::with_capacity(48 + 16 * k + spec.len() + 4 * k * self.dim * self.n_particles);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_particles as u64).to_le_bytes());
        out.extend_from_slice(&(k as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for t in self.times.iter().chain(&self.requested) {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out.extend_from_slice(&(spec.len() as u64).to_le_bytes());
        out.extend_from_slice(&spec);
        for batch in &self.states {
            for &v in batch {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(r.fail("missing FLTR magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.fail(&format!("unsupported version {version}")));
        }
        let dim = r.u32()? as usize;
        let n = r.u64()? as usize;
        let k = r.u32()? as usize;
        let seed = r.u64()?;
        let times = (0..k).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let requested = (0..k).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let spec_len = r.u64()? as usize;
        let spec: SolverSpec = serde_json::from_slice(r.take(spec_len)?)
            .map_err(|e| r.fail(&format!("solver spec: {e}")))?;
        let per = n
            .checked_mul(dim)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| r.fail("size overflow"))?;
        let mut states = Vec::with_capacity(k);
        for _ in 0..k {
            let raw = r.take(per)?;
            states.push(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
            );
        }
        if r.pos != bytes.len() {
            return Err(r.fail("trailing bytes"));
        }
        Ok(Trajectory {
            dim,
            n_particles: n,
            seed,
            requested,
            times,
            states,
            spec,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, detail: &str) -> Error {
        Error::Format {
            kind: "trajectory",
            detail: format!("{detail} (offset {})", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    fs::write(path, traj.to_bytes()?)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    Trajectory::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Method;

    fn sample() -> Trajectory {
        Trajectory {
            dim: 2,
            n_particles: 3,
            seed: 9,
            requested: vec![0.25, 1.0],
            times: vec![0.3, 1.0],
            states: vec![vec![0.5, -1.0, 2.0, 0.25, 3.0, 4.0], vec![1.0; 6]],
            spec: SolverSpec::new(Method::Heun, 10),
        }
    }

    #[test]
    fn round_trip_of_f32_representable_values() {
        let t = sample();
        let back = Trajectory::from_bytes(&t.to_bytes().unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [3, 20, bytes.len() - 1] {
            assert!(matches!(
                Trajectory::from_bytes(&bytes[..cut]),
                Err(Error::Format { .. })
            ));
        }
    }
}
