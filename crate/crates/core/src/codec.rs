//! Fixed, seeded obfuscation codec.
//!
//! Original discrete actions map to 64-dimensional vectors drawn uniformly from
//! `[-1.049, 1.049]^64`; the environment decodes any incoming vector to the
//! nearest entry. Inventories are projected through a seeded matrix with
//! orthonormal columns after a `log(1 + x)` squashing of item counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dimension of every obfuscated vector.
pub const OBF_DIM: usize = 64;
/// Component bound of obfuscated vectors.
pub const OBF_BOUND: f64 = 1.049;
/// Required separation between codebook entries.
pub const MIN_SEPARATION: f64 = 0.5;

const MAX_REJECTIONS: usize = 10_000;

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Map from original action id to its obfuscated vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    seed: u64,
    entries: Vec<Vec<f64>>,
    min_pairwise_distance: f64,
}

impl Codebook {
    /// Rejection-samples `n_actions` entries so that every pair is at least
    /// [`MIN_SEPARATION`] apart.
    pub fn build(seed: u64, n_actions: usize) -> Result<Self> {
        Self::build_with_separation(seed, n_actions, MIN_SEPARATION)
    }

    pub fn build_with_separation(seed: u64, n_actions: usize, separation: f64) -> Result<Self> {
        if n_actions < 2 {
            return Err(Error::Config(format!(
                "codebook needs at least 2 actions, got {n_actions}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries: Vec<Vec<f64>> = Vec::with_capacity(n_actions);
        while entries.len() < n_actions {
            let mut accepted = None;
            for _ in 0..MAX_REJECTIONS {
                let candidate: Vec<f64> = (0..OBF_DIM)
                    .map(|_| rng.random_range(-OBF_BOUND..=OBF_BOUND))
                    .collect();
                if entries
                    .iter()
                    .all(|e| distance(e, &candidate) >= separation)
                {
                    accepted = Some(candidate);
                    break;
                }
            }
            match accepted {
                Some(c) => entries.push(c),
                None => {
                    return Err(Error::Config(format!(
                        "could not place codebook entry {} with separation {separation} after {MAX_REJECTIONS} draws",
                        entries.len()
                    )))
                }
            }
        }
        Self::from_entries(seed, entries)
    }

    /// Rebuilds a codebook from stored entries, validating bounds and spacing.
    pub fn from_entries(seed: u64, entries: Vec<Vec<f64>>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::Format("codebook needs at least 2 entries".into()));
        }
        for e in &entries {
            if e.len() != OBF_DIM {
                return Err(Error::Format(format!(
                    "codebook entry has {} components",
                    e.len()
                )));
            }
            if e.iter().any(|x| !x.is_finite() || x.abs() > OBF_BOUND) {
                return Err(Error::Format(
                    "codebook entry outside the obfuscation bound".into(),
                ));
            }
        }
        let mut min = f64::INFINITY;
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                min = min.min(distance(&entries[i], &entries[j]));
            }
        }
        if min <= 0.0 {
            return Err(Error::Format("codebook contains duplicate entries".into()));
        }
        Ok(Self {
            seed,
            entries,
            min_pairwise_distance: min,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    /// Smallest Euclidean distance between two entries.
    pub fn min_pairwise_distance(&self) -> f64 {
        self.min_pairwise_distance
    }

    pub fn encode(&self, action: usize) -> Result<&[f64]> {
        self.entries
            .get(action)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Input(format!("unknown action id {action}")))
    }

    /// Nearest entry by Euclidean distance; ties go to the lowest id.
    pub fn nearest(&self, v: &[f64]) -> Result<usize> {
        if v.len() != OBF_DIM {
            return Err(Error::Input(format!(
                "action vector has {} components, expected {OBF_DIM}",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input(
                "action vector has non-finite components".into(),
            ));
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, e) in self.entries.iter().enumerate() {
            let d = squared_distance(e, v);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok(best)
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for e in &self.entries {
            for x in e {
                h.update(x.to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Seeded linear projection of inventory features into the obfuscated space.
#[derive(Clone, Debug, PartialEq)]
pub struct InventoryEncoder {
    seed: u64,
    n_counts: usize,
    n_features: usize,
    /// Row-major `OBF_DIM x n_features`.
    projection: Vec<f64>,
    clamp_bound: f64,
}

impl InventoryEncoder {
    /// `n_counts` leading features are item counts (squashed with `ln(1+x)`);
    /// the remaining `n_features - n_counts` are passed through unchanged.
    pub fn new(seed: u64, n_counts: usize, n_features: usize) -> Result<Self> {
        if n_features == 0 || n_features > OBF_DIM || n_counts > n_features {
            return Err(Error::Config(format!(
                "inventory encoder needs 0 < features <= {OBF_DIM}, counts <= features (got {n_counts}/{n_features})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Columns are orthonormalised with modified Gram-Schmidt.
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n_features);
        while cols.len() < n_features {
            let mut c: Vec<f64> = (0..OBF_DIM).map(|_| rng.sample(StandardNormal)).collect();
            for q in &cols {
                let dot: f64 = c.iter().zip(q).map(|(a, b)| a * b).sum();
                for (ci, qi) in c.iter_mut().zip(q) {
                    *ci -= dot * qi;
                }
            }
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                continue;
            }
            c.iter_mut().for_each(|x| *x /= norm);
            cols.push(c);
        }
        let mut projection = vec![0.0; OBF_DIM * n_features];
        for (j, col) in cols.iter().enumerate() {
            for i in 0..OBF_DIM {
                projection[i * n_features + j] = col[i];
            }
        }
        Ok(Self {
            seed,
            n_counts,
            n_features,
            projection,
            clamp_bound: OBF_BOUND,
        })
    }

    /// Rebuilds an encoder from stored parts.
    pub fn from_parts(
        seed: u64,
        n_counts: usize,
        n_features: usize,
        projection: Vec<f64>,
    ) -> Result<Self> {
        if projection.len() != OBF_DIM * n_features || n_counts > n_features {
            return Err(Error::Format(
                "inventory projection has the wrong size".into(),
            ));
        }
        if projection.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("inventory projection is not finite".into()));
        }
        Ok(Self {
            seed,
            n_counts,
            n_features,
            projection,
            clamp_bound: OBF_BOUND,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_counts(&self) -> usize {
        self.n_counts
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn encode(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.n_features {
            return Err(Error::Input(format!(
                "inventory features have length {}, expected {}",
                features.len(),
                self.n_features
            )));
        }
        if features.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Input(
                "inventory features must be finite and non-negative".into(),
            ));
        }
        let normalized: Vec<f64> = features
            .iter()
            .enumerate()
            .map(|(i, &x)| if i < self.n_counts { x.ln_1p() } else { x })
            .collect();
        let out = (0..OBF_DIM)
            .map(|i| {
                let row = &self.projection[i * self.n_features..(i + 1) * self.n_features];
                let v: f64 = row.iter().zip(&normalized).map(|(a, b)| a * b).sum();
                v.clamp(-self.clamp_bound, self.clamp_bound)
            })
            .collect();
        Ok(out)
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((self.n_counts as u64).to_le_bytes());
        for x in &self.projection {
            h.update(x.to_le_bytes());
        }
        h.finalize().into()
    }
}

/// The action codebook and inventory encoder travelling together.
#[derive(Clone, Debug, PartialEq)]
pub struct Codec {
    pub codebook: Codebook,
    pub inventory: InventoryEncoder,
}

impl Codec {
    pub fn new(seed: u64, n_actions: usize, n_counts: usize, n_features: usize) -> Result<Self> {
        Ok(Self {
            codebook: Codebook::build(seed, n_actions)?,
            inventory: InventoryEncoder::new(
                seed.wrapping_add(0x9E37_79B9_7F4A_7C15),
                n_counts,
                n_features,
            )?,
        })
    }

    /// Codec sized for the crafting world's action set and inventory layout.
    pub fn for_craftworld(seed: u64) -> Result<Self> {
        use crate::env::{Action, Item, INVENTORY_FEATURES};
        Self::new(seed, Action::COUNT, Item::COUNT, INVENTORY_FEATURES)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn codebook_is_deterministic_and_bounded() {
        let a = Codebook::build(3, 18).unwrap();
        let b = Codebook::build(3, 18).unwrap();
        assert_eq!(a, b);
        assert!(a.entries().iter().flatten().all(|x| x.abs() <= OBF_BOUND));
        let mut min = f64::INFINITY;
        for i in 0..18 {
            for j in i + 1..18 {
                min = min.min(distance(&a.entries()[i], &a.entries()[j]));
            }
        }
        assert!(min >= MIN_SEPARATION);
        assert_eq!(min, a.min_pairwise_distance());
    }

    #[test]
    fn too_few_actions_rejected() {
        assert!(matches!(Codebook::build(1, 1), Err(Error::Config(_))));
    }

    #[test]
    fn impossible_separation_is_a_config_error() {
        // The cube has diameter 2 * 1.049 * 8, so 40 cannot fit two points.
        assert!(matches!(
            Codebook::build_with_separation(1, 2, 40.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn round_trip_and_injectivity() {
        let cb = Codebook::build(11, 20).unwrap();
        for a in 0..20 {
            assert_eq!(cb.nearest(cb.encode(a).unwrap()).unwrap(), a);
        }
        assert!(cb.encode(20).is_err());
    }

    #[test]
    fn tie_goes_to_lowest_id() {
        let mut entries = vec![vec![0.0; OBF_DIM]; 6];
        for (i, e) in entries.iter_mut().enumerate() {
            e[i] = 1.0;
        }
        let cb = Codebook::from_entries(0, entries).unwrap();
        let mut v = vec![0.0; OBF_DIM];
        v[2] = 0.5;
        v[5] = 0.5;
        assert_eq!(cb.nearest(&v).unwrap(), 2);
    }

    #[test]
    fn non_finite_input_rejected() {
        let cb = Codebook::build(0, 4).unwrap();
        let mut v = vec![0.0; OBF_DIM];
        v[3] = f64::NAN;
        assert!(matches!(cb.nearest(&v), Err(Error::Input(_))));
        v[3] = f64::INFINITY;
        assert!(matches!(cb.nearest(&v), Err(Error::Input(_))));
    }

    #[test]
    fn noisy_samples_all_recovered() {
        let cb = Codebook::build(7, 20).unwrap();
        let sigma = cb.min_pairwise_distance() / 10.0;
        // Per-component std so the expected noise norm is sigma.
        let normal = Normal::new(0.0, sigma / (OBF_DIM as f64).sqrt()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for t in 0..10_000 {
            let a = t % cb.len();
            let v: Vec<f64> = cb
                .encode(a)
                .unwrap()
                .iter()
                .map(|x| x + normal.sample(&mut rng))
                .collect();
            assert_eq!(cb.nearest(&v).unwrap(), a);
        }
    }

    #[test]
    fn noise_threshold_is_half_the_minimum_distance() {
        let cb = Codebook::build(5, 20).unwrap();
        let d = cb.min_pairwise_distance();
        let (mut bi, mut bj) = (0, 1);
        for i in 0..cb.len() {
            for j in i + 1..cb.len() {
                if distance(&cb.entries()[i], &cb.entries()[j]) == d {
                    bi = i;
                    bj = j;
                }
            }
        }
        let a = cb.encode(bi).unwrap();
        let b = cb.encode(bj).unwrap();
        let dir: Vec<f64> = a.iter().zip(b).map(|(x, y)| (y - x) / d).collect();
        let eps = 1e-9;
        let at = |r: f64| -> Vec<f64> { a.iter().zip(&dir).map(|(x, u)| x + r * u).collect() };
        assert_eq!(cb.nearest(&at(d / 2.0 - eps)).unwrap(), bi);
        assert_eq!(cb.nearest(&at(d / 2.0 + eps)).unwrap(), bj);
    }

    #[test]
    fn inventory_encoding_is_bounded_and_deterministic() {
        let enc = InventoryEncoder::new(4, 12, 16).unwrap();
        let empty = vec![0.0; 16];
        let e0 = enc.encode(&empty).unwrap();
        assert_eq!(e0, enc.encode(&empty).unwrap());
        let mut big = vec![1e9; 16];
        big[12..].iter_mut().for_each(|x| *x = 1.0);
        assert!(enc
            .encode(&big)
            .unwrap()
            .iter()
            .all(|x| x.abs() <= OBF_BOUND));
        assert!(enc.encode(&[0.0; 3]).is_err());
        assert!(enc.encode(&[-1.0; 16]).is_err());
    }

    #[test]
    fn projection_columns_are_orthonormal() {
        let enc = InventoryEncoder::new(8, 12, 16).unwrap();
        let p = enc.projection();
        for a in 0..16 {
            for b in 0..16 {
                let dot: f64 = (0..OBF_DIM).map(|i| p[i * 16 + a] * p[i * 16 + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }
}
