//! Labeled seed splitting.
//!
//! Every random stream in the lab derives from one master seed plus a label
//! (and optionally a shard index), so adding a new consumer never perturbs the
//! streams of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type LabRng = ChaCha8Rng;

/// Derives a 256-bit stream seed from `(master, label, index)`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"flowlag/seed/v1");
    h.update(master.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    h.finalize().into()
}

pub fn stream(master: u64, label: &str) -> LabRng {
    ChaCha8Rng::from_seed(derive_seed(master, label, 0))
}

pub fn shard(master: u64, label: &str, index: u64) -> LabRng {
    ChaCha8Rng::from_seed(derive_seed(master, label, index))
}

/// A child master seed, for APIs that take a plain `u64`.
pub fn child_seed(master: u64, label: &str, index: u64) -> u64 {
    let bytes = derive_seed(master, label, index);
    u64::from_le_bytes(bytes[..8].try_into().expect("32-byte digest"))
}

/// Serializable position of a ChaCha stream, enough to resume it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    #[serde(with = "hex_seed")]
    pub seed: [u8; 32],
    pub stream: u64,
    /// Word position as a decimal string; it is a u128 and JSON numbers are not.
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &LabRng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> LabRng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

mod hex_seed {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(seed))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(text).map_err(D::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| D::Error::custom("seed must be 32 bytes"))
    }
}

mod u128_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn labels_give_distinct_streams() {
        let mut a = stream(7, "data");
        let mut b = stream(7, "noise");
        assert_ne!(a.next_u64(), b.next_u64());
        assert_ne!(derive_seed(7, "data", 0), derive_seed(7, "data", 1));
        assert_ne!(derive_seed(7, "data", 0), derive_seed(8, "data", 0));
    }

    #[test]
    fn state_round_trip_resumes_stream() {
        let mut rng = stream(42, "x");
        for _ in 0..13 {
            rng.next_u32();
        }
        let state = RngState::capture(&rng);
        let json = serde_json::to_string(&state).unwrap();
        let back: RngState = serde_json::from_str(&json).unwrap();
        let mut resumed = back.restore();
        for _ in 0..100 {
            assert_eq!(rng.next_u64(), resumed.next_u64());
        }
    }
}
