//! Binary dataset format. All multi-byte values are little-endian.
//!
//! ```text
//! magic "CRAFTCHAIN-DEMO" | u32 version
//! header: codebook (u64 seed, u32 n, n x 64 f64)
//!         encoder  (u64 seed, u32 counts, u32 features, 64 x features f64)
//!         env digest [32] | u32 pov size | f64 pixel scale
//! u32 trajectory count
//! per trajectory: u64 record length, then
//!         u64 seed | u8 variant | u8 terminal | f64 score | u32 steps | final obs
//!         steps x (obs | 64 f64 action | f64 dense | f64 sparse | u8 changed | u16 milestones)
//! obs: P*P*3 u8 pixels | 64 f64 inventory
//! trailing sha256 of everything before it
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Dataset, Trajectory, Transition};
use crate::codec::{Codebook, Codec, InventoryEncoder, OBF_DIM};
use crate::env::{EnvVariant, Item, Observation, Pov};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 15] = b"CRAFTCHAIN-DEMO";
pub const FORMAT_VERSION: u32 = 1;

pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, to_bytes(ds)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset> {
    from_bytes(&std::fs::read(path)?)
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_obs(out: &mut Vec<u8>, obs: &Observation, pov_size: usize) -> Result<()> {
    if obs.pov.size() != pov_size || obs.inv_obf.len() != OBF_DIM {
        return Err(Error::Input(
            "observation does not match the dataset header".into(),
        ));
    }
    out.extend_from_slice(obs.pov.bytes());
    put_f64s(out, &obs.inv_obf);
    Ok(())
}

pub(crate) fn to_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let cb = &ds.codec.codebook;
    out.extend_from_slice(&cb.seed().to_le_bytes());
    out.extend_from_slice(&(cb.len() as u32).to_le_bytes());
    for e in cb.entries() {
        put_f64s(&mut out, e);
    }
    let enc = &ds.codec.inventory;
    out.extend_from_slice(&enc.seed().to_le_bytes());
    out.extend_from_slice(&(enc.n_counts() as u32).to_le_bytes());
    out.extend_from_slice(&(enc.n_features() as u32).to_le_bytes());
    put_f64s(&mut out, enc.projection());
    out.extend_from_slice(&ds.env_digest);
    out.extend_from_slice(&(ds.pov_size as u32).to_le_bytes());
    out.extend_from_slice(&Pov::SCALE.to_le_bytes());
    out.extend_from_slice(&(ds.trajectories.len() as u32).to_le_bytes());
    for traj in &ds.trajectories {
        let mut rec = Vec::new();
        rec.extend_from_slice(&traj.seed.to_le_bytes());
        rec.push(traj.variant.code());
        rec.push(u8::from(traj.terminal));
        rec.extend_from_slice(&traj.final_score.to_le_bytes());
        rec.extend_from_slice(&(traj.transitions.len() as u32).to_le_bytes());
        put_obs(&mut rec, &traj.final_obs, ds.pov_size)?;
        for t in &traj.transitions {
            put_obs(&mut rec, &t.obs, ds.pov_size)?;
            if t.action.len() != OBF_DIM {
                return Err(Error::Input("action vector must have 64 components".into()));
            }
            put_f64s(&mut rec, &t.action);
            rec.extend_from_slice(&t.reward_dense.to_le_bytes());
            rec.extend_from_slice(&t.reward_sparse.to_le_bytes());
            rec.push(u8::from(t.inventory_changed));
            let mask = t.milestones.iter().fold(0u16, |m, i| m | (1 << i.index()));
            rec.extend_from_slice(&mask.to_le_bytes());
        }
        out.extend_from_slice(&(rec.len() as u64).to_le_bytes());
        out.extend_from_slice(&rec);
    }
    let sum = Sha256::digest(&out);
    out.extend_from_slice(&sum);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format("dataset file is truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Format("length overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn obs(&mut self, pov_size: usize) -> Result<Observation> {
        let pov = Pov::from_raw(pov_size, self.take(pov_size * pov_size * 3)?.to_vec())?;
        Ok(Observation {
            pov,
            inv_obf: self.f64s(OBF_DIM)?,
        })
    }
}

pub(crate) fn from_bytes(buf: &[u8]) -> Result<Dataset> {
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::Format(
            "not a demonstration dataset (bad magic)".into(),
        ));
    }
    if buf.len() < MAGIC.len() + 4 + 32 {
        return Err(Error::Format("dataset file is truncated".into()));
    }
    let (body, sum) = buf.split_at(buf.len() - 32);
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "dataset format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::Format(
            "dataset checksum mismatch (truncated or corrupted file)".into(),
        ));
    }
    let cb_seed = r.u64()?;
    let n_actions = r.u32()? as usize;
    let entries = (0..n_actions)
        .map(|_| r.f64s(OBF_DIM))
        .collect::<Result<Vec<_>>>()?;
    let codebook =
        Codebook::from_entries(cb_seed, entries).map_err(|e| Error::Format(e.to_string()))?;
    let enc_seed = r.u64()?;
    let n_counts = r.u32()? as usize;
    let n_features = r.u32()? as usize;
    let projection = r.f64s(OBF_DIM * n_features)?;
    let inventory = InventoryEncoder::from_parts(enc_seed, n_counts, n_features, projection)?;
    let env_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let pov_size = r.u32()? as usize;
    let scale = r.f64()?;
    if scale != Pov::SCALE {
        return Err(Error::Format(format!("unsupported pixel scale {scale}")));
    }
    let n_traj = r.u32()? as usize;
    let mut trajectories = Vec::with_capacity(n_traj.min(1 << 16));
    for _ in 0..n_traj {
        let len = r.u64()? as usize;
        let end = r
            .pos
            .checked_add(len)
            .ok_or_else(|| Error::Format("length overflow".into()))?;
        let seed = r.u64()?;
        let variant = EnvVariant::from_code(r.u8()?).map_err(|e| Error::Format(e.to_string()))?;
        let terminal = r.u8()? != 0;
        let final_score = r.f64()?;
        let steps = r.u32()? as usize;
        let final_obs = r.obs(pov_size)?;
        let mut transitions = Vec::with_capacity(steps.min(1 << 20));
        for _ in 0..steps {
            let obs = r.obs(pov_size)?;
            let action = r.f64s(OBF_DIM)?;
            let reward_dense = r.f64()?;
            let reward_sparse = r.f64()?;
            let inventory_changed = r.u8()? != 0;
            let mask = r.u16()?;
            let milestones = Item::ALL
                .iter()
                .copied()
                .filter(|i| mask & (1 << i.index()) != 0)
                .collect();
            transitions.push(Transition {
                obs,
                action,
                reward_dense,
                reward_sparse,
                inventory_changed,
                milestones,
            });
        }
        if r.pos != end {
            return Err(Error::Format("trajectory record length mismatch".into()));
        }
        trajectories.push(Trajectory {
            transitions,
            final_obs,
            terminal,
            seed,
            variant,
            final_score,
        });
    }
    if r.pos != body.len() {
        return Err(Error::Format(
            "trailing bytes after the last trajectory".into(),
        ));
    }
    Ok(Dataset {
        codec: Codec {
            codebook,
            inventory,
        },
        env_digest,
        pov_size,
        trajectories,
    })
}
