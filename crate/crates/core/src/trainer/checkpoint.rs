//! Binary checkpoints: both agents' parameters plus a hash of the configs
//! that produced them.

use super::nn::{Arch, PolicyParams};
use super::ppo::TrainConfig;
use crate::episode::EpisodeConfig;
use crate::{Error, Result};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"COTASKCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 32],
    pub episodes_done: u64,
    pub params: [PolicyParams; 2],
}

/// Digest of the configuration a checkpoint was trained under. The episode
/// budget is left out so a finished run can be extended.
pub fn config_hash(train: &TrainConfig, env: &EpisodeConfig) -> [u8; 32] {
    let train = TrainConfig {
        total_episodes: 0,
        ..train.clone()
    };
    let json = serde_json::to_vec(&(train, env)).expect("configs serialize");
    Sha256::digest(json).into()
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = serde_json::to_vec(&self.params[0].arch).expect("arch serializes");
        let n = self.params[0].data.len();
        let mut out = Vec::with_capacity(64 + arch.len() + 16 * n);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        out.extend_from_slice(&self.episodes_done.to_le_bytes());
        out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
        out.extend_from_slice(&arch);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for p in &self.params {
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, at: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let config_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        let episodes_done = r.u64()?;
        let arch_len = r.u32()? as usize;
        let arch: Arch = serde_json::from_slice(r.take(arch_len)?)?;
        let n = r.u64()? as usize;
        let expected = super::nn::Network::new(arch).param_count();
        if n != expected {
            return Err(Error::Checkpoint(format!(
                "{n} parameters, architecture needs {expected}"
            )));
        }
        let mut read = || -> Result<PolicyParams> {
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(PolicyParams { arch, data })
        };
        let params = [read()?, read()?];
        if r.at != buf.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            config_hash,
            episodes_done,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::nn::Network;
    use rand::SeedableRng;

    #[test]
    fn round_trip_and_corruption() {
        let net = Network::new(Arch::symbolic(8));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let ck = Checkpoint {
            config_hash: config_hash(&TrainConfig::desk(), &EpisodeConfig::smoke()),
            episodes_done: 96,
            params: [net.init(&mut rng), net.init(&mut rng)],
        };
        let bytes = ck.to_bytes();
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert_ne!(
            ck.config_hash,
            config_hash(&TrainConfig::default(), &EpisodeConfig::smoke())
        );
    }
}
