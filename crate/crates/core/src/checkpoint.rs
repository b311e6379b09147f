//! Checksummed checkpoint container.
//!
//! Layout: magic `VHOCKPT1`, format version (u32 LE), payload length (u64 LE),
//! payload, then SHA-256 over everything before it. Nothing is decoded until
//! the length and checksum verify, so a damaged file never loads partially.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::agents::{decode_agent, Agent, AgentKind};
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::harness::EpisodeRecord;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VHOCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

const HEADER_LEN: usize = 8 + 4 + 8;
const DIGEST_LEN: usize = 32;

pub fn seal(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + DIGEST_LEN);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Verifies the container and returns the payload.
pub fn unseal(bytes: &[u8]) -> Result<&[u8]> {
    if bytes.len() < HEADER_LEN + DIGEST_LEN {
        return Err(Error::Integrity(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Integrity("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::IncompatibleVersion { found: version, expected: CHECKPOINT_VERSION });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    if len != (bytes.len() - HEADER_LEN - DIGEST_LEN) as u64 {
        return Err(Error::Integrity(format!(
            "payload length {len} does not match file size {}",
            bytes.len()
        )));
    }
    let body = bytes.len() - DIGEST_LEN;
    if Sha256::digest(&bytes[..body]).as_slice() != &bytes[body..] {
        return Err(Error::Integrity("checksum mismatch".into()));
    }
    Ok(&bytes[HEADER_LEN..body])
}

/// Complete training state at an episode boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: AgentKind,
    /// Episodes completed.
    pub episode: usize,
    /// The agent's own encoding: networks, optimizers, rng, buffers, counters.
    pub agent: Vec<u8>,
    pub history: Vec<EpisodeRecord>,
}

impl Checkpoint {
    pub fn capture(agent: &dyn Agent, history: &[EpisodeRecord]) -> Self {
        let mut enc = Encoder::new();
        agent.encode(&mut enc);
        Self { kind: agent.kind(), episode: history.len(), agent: enc.into_bytes(), history: history.to_vec() }
    }

    pub fn restore_agent(&self) -> Result<Box<dyn Agent>> {
        let mut dec = Decoder::new(&self.agent);
        let agent = decode_agent(self.kind, &mut dec)?;
        dec.finish()?;
        Ok(agent)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.str(self.kind.name());
        enc.usize(self.episode);
        enc.usize(self.agent.len());
        enc.bytes(&self.agent);
        enc.usize(self.history.len());
        self.history.iter().for_each(|r| r.encode(&mut enc));
        seal(&enc.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(unseal(bytes)?);
        let kind = dec
            .string()?
            .parse()
            .map_err(|e| Error::Integrity(format!("unknown agent kind in checkpoint: {e}")))?;
        let episode = dec.usize()?;
        let n = dec.usize()?;
        let agent = dec.take(n)?.to_vec();
        let records = dec.usize()?;
        let history = (0..records).map(|_| EpisodeRecord::decode(&mut dec)).collect::<Result<Vec<_>>>()?;
        dec.finish()?;
        if history.len() != episode {
            return Err(Error::Integrity("episode counter disagrees with history length".into()));
        }
        Ok(Self { kind, episode, agent, history })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
