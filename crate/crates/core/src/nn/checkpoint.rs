//! Checkpoint container: JSON metadata plus named little-endian `f64` blobs.
//!
//! ```text
//! magic "CRAFTCHAIN-CKPT" | u32 version | u32 meta length | meta JSON
//! [32] digest of the network specs | u32 blob count
//! per blob: u32 name length | name | u32 rank | rank x u64 dims | f64 data
//! trailing sha256 of everything before it
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::network::{Network, NetworkSpec};
use super::optim::Optimizer;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CKPT_MAGIC: &[u8; 15] = b"CRAFTCHAIN-CKPT";
pub const CKPT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Value,
    pub blobs: BTreeMap<String, Tensor>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new(json!({}))
    }
}

impl Checkpoint {
    pub fn new(meta: Value) -> Self {
        Self {
            meta,
            blobs: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.blobs.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.blobs
            .get(name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no blob `{name}`")))
    }

    fn networks(&mut self) -> &mut serde_json::Map<String, Value> {
        if !self.meta.is_object() {
            self.meta = json!({});
        }
        let obj = self.meta.as_object_mut().expect("object");
        obj.entry("networks")
            .or_insert_with(|| json!({}))
            .as_object_mut()
            .expect("networks is an object")
    }

    pub fn put_network(&mut self, name: &str, net: &Network) {
        let spec = serde_json::to_value(net.spec()).expect("spec serializes");
        self.networks().insert(
            name.to_string(),
            json!({ "spec": spec, "digest": hex::encode(net.spec().digest()) }),
        );
        for (i, p) in net.params().iter().enumerate() {
            self.insert(
                format!("{name}/p{i}"),
                Tensor::new(vec![p.len()], p.to_vec()).expect("1-d"),
            );
        }
    }

    /// Rebuilds a stored network, which must have been saved with `expected`.
    pub fn get_network(&self, name: &str, expected: &NetworkSpec) -> Result<Network> {
        let stored = self
            .meta
            .get("networks")
            .and_then(|n| n.get(name))
            .and_then(|n| n.get("spec"))
            .ok_or_else(|| Error::Format(format!("checkpoint has no network `{name}`")))?;
        let spec: NetworkSpec = serde_json::from_value(stored.clone())
            .map_err(|e| Error::Format(format!("network `{name}`: {e}")))?;
        if &spec != expected {
            return Err(Error::Config(format!(
                "network `{name}` was saved with a different architecture"
            )));
        }
        let mut net = Network::new(spec, 0)?;
        let n = net.params().len();
        let blobs = (0..n)
            .map(|i| self.get(&format!("{name}/p{i}")).map(|t| t.data().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        net.set_params(&blobs)?;
        Ok(net)
    }

    /// Like [`Checkpoint::get_network`] but trusts the stored spec.
    pub fn get_network_any(&self, name: &str) -> Result<Network> {
        let stored = self
            .meta
            .get("networks")
            .and_then(|n| n.get(name))
            .and_then(|n| n.get("spec"))
            .ok_or_else(|| Error::Format(format!("checkpoint has no network `{name}`")))?;
        let spec: NetworkSpec = serde_json::from_value(stored.clone())
            .map_err(|e| Error::Format(format!("network `{name}`: {e}")))?;
        self.get_network(name, &spec)
    }

    pub fn put_optimizer(&mut self, name: &str, opt: &Optimizer) {
        let (m, v) = opt.state();
        let obj = self.meta.as_object_mut().expect("object meta");
        obj.insert(
            format!("optimizer/{name}"),
            json!({
                "kind": serde_json::to_value(&opt.kind).expect("serializes"),
                "lr": opt.lr,
                "max_grad_norm": opt.max_grad_norm,
                "steps": opt.steps(),
                "slots": m.len(),
            }),
        );
        for (i, (mi, vi)) in m.iter().zip(v).enumerate() {
            self.insert(
                format!("{name}/m{i}"),
                Tensor::new(vec![mi.len()], mi.clone()).expect("1-d"),
            );
            self.insert(
                format!("{name}/v{i}"),
                Tensor::new(vec![vi.len()], vi.clone()).expect("1-d"),
            );
        }
    }

    pub fn get_optimizer(&self, name: &str) -> Result<Optimizer> {
        let m = self
            .meta
            .get(format!("optimizer/{name}"))
            .ok_or_else(|| Error::Format(format!("checkpoint has no optimizer `{name}`")))?;
        let bad = || Error::Format(format!("optimizer `{name}` metadata is malformed"));
        let kind =
            serde_json::from_value(m.get("kind").cloned().ok_or_else(bad)?).map_err(|_| bad())?;
        let lr = m.get("lr").and_then(Value::as_f64).ok_or_else(bad)?;
        let steps = m.get("steps").and_then(Value::as_u64).ok_or_else(bad)?;
        let slots = m.get("slots").and_then(Value::as_u64).ok_or_else(bad)? as usize;
        let mut opt = Optimizer::new(kind, lr);
        opt.max_grad_norm = m.get("max_grad_norm").and_then(Value::as_f64);
        let ms = (0..slots)
            .map(|i| self.get(&format!("{name}/m{i}")).map(|t| t.data().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let vs = (0..slots)
            .map(|i| self.get(&format!("{name}/v{i}")).map(|t| t.data().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        opt.restore(steps, ms, vs);
        Ok(opt)
    }

    fn spec_digest(&self) -> [u8; 32] {
        let nets = self.meta.get("networks").cloned().unwrap_or(Value::Null);
        Sha256::digest(serde_json::to_vec(&nets).expect("serializes")).into()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).expect("meta serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&self.spec_digest());
        out.extend_from_slice(&(self.blobs.len() as u32).to_le_bytes());
        for (name, t) in &self.blobs {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let sum = Sha256::digest(&out);
        out.extend_from_slice(&sum);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let trunc = || Error::Format("checkpoint is truncated".into());
        if buf.len() < CKPT_MAGIC.len() || &buf[..CKPT_MAGIC.len()] != CKPT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        if buf.len() < CKPT_MAGIC.len() + 4 + 32 {
            return Err(trunc());
        }
        let (body, sum) = buf.split_at(buf.len() - 32);
        let mut pos = CKPT_MAGIC.len();
        let mut take = |n: usize| -> Result<&[u8]> {
            if body.len() - pos < n {
                return Err(trunc());
            }
            pos += n;
            Ok(&body[pos - n..pos])
        };
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4"));
        if version != CKPT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {version} is not supported"
            )));
        }
        if Sha256::digest(body).as_slice() != sum {
            return Err(Error::Format("checkpoint checksum mismatch".into()));
        }
        let meta_len = u32::from_le_bytes(take(4)?.try_into().expect("4")) as usize;
        let meta: Value = serde_json::from_slice(take(meta_len)?)
            .map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;
        let digest: [u8; 32] = take(32)?.try_into().expect("32");
        let count = u32::from_le_bytes(take(4)?.try_into().expect("4")) as usize;
        let mut blobs = BTreeMap::new();
        for _ in 0..count {
            let nl = u32::from_le_bytes(take(4)?.try_into().expect("4")) as usize;
            let name = String::from_utf8(take(nl)?.to_vec())
                .map_err(|_| Error::Format("blob name is not utf-8".into()))?;
            let rank = u32::from_le_bytes(take(4)?.try_into().expect("4")) as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(take(8)?.try_into().expect("8")) as usize);
            }
            let n: usize = shape.iter().product();
            let raw = take(n.checked_mul(8).ok_or_else(trunc)?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8")))
                .collect();
            blobs.insert(name, Tensor::new(shape, data)?);
        }
        if pos != body.len() {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        let ck = Self { meta, blobs };
        if ck.spec_digest() != digest {
            return Err(Error::Format("checkpoint spec digest mismatch".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
