//! Counter-style random streams.
//!
//! A stream is a pure function of `(master_seed, path)`: the path is hashed
//! into a ChaCha8 key, so any sub-task can rebuild its own generator without
//! touching a shared one. Results therefore do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const DOMAIN_TAG: &[u8] = b"spinbath.rng.v1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub path: Vec<u64>,
}

/// Build the stream for `path` under `master_seed`.
pub fn derive_stream(master_seed: u64, path: &[u64]) -> Result<RngStream> {
    if path.is_empty() {
        return Err(Error::InvalidParameter("stream path must be non-empty".into()));
    }
    Ok(RngStream { master_seed, path: path.to_vec() })
}

impl RngStream {
    /// Root stream for a whole run; equivalent to `derive_stream(seed, &[index])`.
    pub fn root(master_seed: u64, index: u64) -> Self {
        Self { master_seed, path: vec![index] }
    }

    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self { master_seed: self.master_seed, path }
    }

    /// 32-byte key identifying this stream.
    pub fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(DOMAIN_TAG);
        h.update(self.master_seed.to_le_bytes());
        h.update((self.path.len() as u64).to_le_bytes());
        for p in &self.path {
            h.update(p.to_le_bytes());
        }
        let mut out = [0u8; 32];
        out.copy_from_slice(&h.finalize());
        out
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }
}
