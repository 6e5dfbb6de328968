//! Versioned checkpoint files.
//!
//! Layout: `BCKP`, `u16` version, `u32` metadata length, JSON metadata
//! (training config, counters, curriculum and RNG states), `u64` parameter
//! length, then the parameter set in its own binary format (values plus
//! Adam moments). All integers little-endian.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use bridge_autodiff::ParamSet;
use bridge_core::curriculum::Curriculum;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::network::PolicyNet;
use crate::trainer::{TrainConfig, Trainer};
use crate::LearnError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BCKP";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    pub env_steps: u64,
    pub iteration: u64,
    pub updates: u64,
    pub curriculum: Curriculum,
    pub trainer_rng: ChaCha8Rng,
    pub worker_rngs: Vec<ChaCha8Rng>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamSet<f32>,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        Self {
            meta: CheckpointMeta {
                config: t.config.clone(),
                env_steps: t.env_steps,
                iteration: t.iteration,
                updates: t.updates,
                curriculum: t.pool.curriculum.clone(),
                trainer_rng: t.rng.clone(),
                worker_rngs: t.pool.rngs(),
            },
            params: t.net.params.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, LearnError> {
        let meta = serde_json::to_vec(&self.meta)?;
        let params = self.params.to_bytes();
        let mut out = Vec::with_capacity(18 + meta.len() + params.len());
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_u16::<LittleEndian>(CHECKPOINT_VERSION)?;
        out.write_u32::<LittleEndian>(meta.len() as u32)?;
        out.write_all(&meta)?;
        out.write_u64::<LittleEndian>(params.len() as u64)?;
        out.write_all(&params)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LearnError> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| LearnError::Checkpoint("file too short".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(LearnError::Checkpoint(format!("bad magic {magic:?}, not a checkpoint")));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != CHECKPOINT_VERSION {
            return Err(LearnError::UnsupportedVersion { found: version, supported: CHECKPOINT_VERSION });
        }
        let n = r.read_u32::<LittleEndian>()? as usize;
        let mut meta = vec![0u8; n];
        r.read_exact(&mut meta)?;
        let meta: CheckpointMeta = serde_json::from_slice(&meta)?;
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut params = vec![0u8; n];
        r.read_exact(&mut params)?;
        let params = ParamSet::from_bytes(&params)?;
        Ok(Self { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// The network, checked against the stored architecture.
    pub fn network(&self) -> Result<PolicyNet<f32>, LearnError> {
        PolicyNet::with_params(self.meta.config.network, self.params.clone())
    }

    /// A trainer positioned after the saved iteration. In-flight episodes
    /// and any partially filled PPG buffer are not stored, so workers start
    /// fresh episodes.
    pub fn into_trainer(self) -> Result<Trainer, LearnError> {
        let mut t = Trainer::new(self.meta.config.clone())?;
        t.net = self.network()?;
        t.env_steps = self.meta.env_steps;
        t.iteration = self.meta.iteration;
        t.updates = self.meta.updates;
        t.rng = self.meta.trainer_rng;
        t.pool.curriculum = self.meta.curriculum;
        t.pool.set_rngs(self.meta.worker_rngs)?;
        t.pool.restart()?;
        Ok(t)
    }
}
