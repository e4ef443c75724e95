//! Action-space discretization: K-Means for the movement and change action
//! sets, DP-means for critical crafting actions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{squared_distance, OBF_DIM};
use crate::demos::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Tensor};

/// Partition of every demonstrated action by whether it changed the inventory.
pub fn split_actions_by_inventory_change(ds: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if ds.num_transitions() == 0 {
        return Err(Error::Degenerate("dataset has no transitions".into()));
    }
    let (change, movement): (Vec<_>, Vec<_>) = ds.transitions().partition(|t| t.inventory_changed);
    if change.is_empty() {
        return Err(Error::Degenerate(
            "dataset contains no inventory-changing actions".into(),
        ));
    }
    Ok((
        movement.into_iter().map(|t| t.action.clone()).collect(),
        change.into_iter().map(|t| t.action.clone()).collect(),
    ))
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().map_or(0, Vec::len);
    if dim == 0
        || points
            .iter()
            .any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::Input(
            "points must be non-empty, finite and of equal dimension".into(),
        ));
    }
    Ok(dim)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    pub k: usize,
    pub inertia: f64,
    pub seed: u64,
    pub assignments: Vec<usize>,
    /// Objective after every Lloyd iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansModel {
    pub fn predict(&self, p: &[f64]) -> usize {
        nearest(&self.centroids, p).0
    }

    /// Sum of squared distances under the stored assignments.
    pub fn objective(&self, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .zip(&self.assignments)
            .map(|(p, &a)| squared_distance(p, &self.centroids[a]))
            .sum()
    }
}

/// Lloyd iterations from a k-means++ initialization.
pub fn kmeans_fit(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KMeansModel> {
    check_points(points)?;
    if k == 0 || points.len() < k {
        return Err(Error::Input(format!(
            "k-means needs at least k = {k} points, got {}",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    let mut m = lloyd(points, centroids, max_iters)?;
    m.seed = seed;
    Ok(m)
}

/// Lloyd iterations from given initial centroids.
pub fn lloyd(
    points: &[Vec<f64>],
    mut centroids: Vec<Vec<f64>>,
    max_iters: usize,
) -> Result<KMeansModel> {
    let dim = check_points(points)?;
    let k = centroids.len();
    if k == 0 || centroids.iter().any(|c| c.len() != dim) {
        return Err(Error::Input(
            "initial centroids do not match the points".into(),
        ));
    }
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(&centroids, p).0).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        // Update step.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // Empty clusters move to the point farthest from its own centroid.
        for j in 0..k {
            if counts[j] == 0 {
                let far = points
                    .iter()
                    .zip(&assignments)
                    .enumerate()
                    .filter(|(_, (_, &a))| counts[a] > 1)
                    .map(|(i, (p, &a))| (i, squared_distance(p, &centroids[a])))
                    .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                        Some((_, bd)) if bd >= d => best,
                        _ => Some((i, d)),
                    });
                if let Some((i, _)) = far {
                    counts[assignments[i]] -= 1;
                    assignments[i] = j;
                    counts[j] = 1;
                    centroids[j] = points[i].clone();
                }
            }
        }
        let objective: f64 = points
            .iter()
            .zip(&assignments)
            .map(|(p, &a)| squared_distance(p, &centroids[a]))
            .sum();
        history.push(objective);
        // Assignment step.
        let next: Vec<usize> = points.iter().map(|p| nearest(&centroids, p).0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum();
    Ok(KMeansModel {
        centroids,
        k,
        inertia,
        seed: 0,
        assignments,
        history,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub lambda: f64,
    pub counts: Vec<usize>,
    pub assignments: Vec<usize>,
}

impl DpClusterModel {
    pub fn predict(&self, p: &[f64]) -> usize {
        nearest(&self.centroids, p).0
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }
}

/// Half the median pairwise distance, over at most 1500 evenly strided points.
pub fn default_lambda(points: &[Vec<f64>]) -> Result<f64> {
    check_points(points)?;
    if points.len() < 2 {
        return Err(Error::Degenerate(
            "need at least two points to estimate a penalty".into(),
        ));
    }
    let stride = points.len().div_ceil(1500);
    let sub: Vec<&Vec<f64>> = points.iter().step_by(stride).collect();
    let mut d: Vec<f64> = Vec::with_capacity(sub.len() * sub.len() / 2);
    for i in 0..sub.len() {
        for j in i + 1..sub.len() {
            d.push(squared_distance(sub[i], sub[j]).sqrt());
        }
    }
    if d.is_empty() {
        return Err(Error::Degenerate(
            "need at least two points to estimate a penalty".into(),
        ));
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let lambda = *m / 2.0;
    if lambda <= 0.0 {
        // All points coincide.
        return Ok(f64::MIN_POSITIVE.sqrt());
    }
    Ok(lambda)
}

/// DP-means: a point farther than `lambda` from every centroid opens a new
/// cluster; alternate with mean updates until assignments are stable.
pub fn dp_cluster_fit(points: &[Vec<f64>], lambda: f64) -> Result<DpClusterModel> {
    let dim = check_points(points)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Input(format!(
            "DP-means penalty must be positive, got {lambda}"
        )));
    }
    let l2 = lambda * lambda;
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / points.len() as f64;
        }
    }
    let mut centroids = vec![mean];
    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..1000 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(&centroids, p);
            let j = if d > l2 {
                centroids.push(p.clone());
                centroids.len() - 1
            } else {
                j
            };
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
        }
        // Drop empty clusters, then recompute means.
        let mut counts = vec![0usize; centroids.len()];
        for &a in &assignments {
            counts[a] += 1;
        }
        let mut remap = vec![usize::MAX; centroids.len()];
        let mut kept = Vec::new();
        for (j, c) in counts.iter().enumerate() {
            if *c > 0 {
                remap[j] = kept.len();
                kept.push(j);
            }
        }
        if kept.len() != centroids.len() {
            changed = true;
        }
        assignments.iter_mut().for_each(|a| *a = remap[*a]);
        let mut sums = vec![vec![0.0; dim]; kept.len()];
        for (p, &a) in points.iter().zip(&assignments) {
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        centroids = sums
            .into_iter()
            .zip(&kept)
            .map(|(s, &j)| s.into_iter().map(|v| v / counts[j] as f64).collect())
            .collect();
        if !changed {
            break;
        }
    }
    let mut counts = vec![0usize; centroids.len()];
    for &a in &assignments {
        counts[a] += 1;
    }
    Ok(DpClusterModel {
        centroids,
        lambda,
        counts,
        assignments,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Movement,
    Change,
    Critical,
}

impl Provenance {
    fn code(self) -> f64 {
        match self {
            Provenance::Movement => 0.0,
            Provenance::Change => 1.0,
            Provenance::Critical => 2.0,
        }
    }

    fn from_code(c: f64) -> Result<Self> {
        match c as i64 {
            0 => Ok(Provenance::Movement),
            1 => Ok(Provenance::Change),
            2 => Ok(Provenance::Critical),
            _ => Err(Error::Format(format!("unknown action provenance {c}"))),
        }
    }
}

/// The discrete action set shared by the value-based agents.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteActionTable {
    pub entries: Vec<Vec<f64>>,
    pub provenance: Vec<Provenance>,
}

impl DiscreteActionTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the closest entry; ties go to the lowest index.
    pub fn nearest(&self, v: &[f64]) -> usize {
        nearest(&self.entries, v).0
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (e, p) in self.entries.iter().zip(&self.provenance) {
            h.update(p.code().to_le_bytes());
            for x in e {
                h.update(x.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn write_to(&self, ck: &mut Checkpoint, name: &str) {
        let flat: Vec<f64> = self.entries.concat();
        ck.insert(
            format!("{name}/entries"),
            Tensor::new(vec![self.len(), OBF_DIM], flat).expect("sized"),
        );
        let prov = self.provenance.iter().map(|p| p.code()).collect();
        ck.insert(
            format!("{name}/provenance"),
            Tensor::new(vec![self.len()], prov).expect("sized"),
        );
    }

    pub fn read_from(ck: &Checkpoint, name: &str) -> Result<Self> {
        let e = ck.get(&format!("{name}/entries"))?;
        if e.shape().len() != 2 || e.shape()[1] != OBF_DIM {
            return Err(Error::Format(
                "action table entries have the wrong shape".into(),
            ));
        }
        let entries = e
            .data()
            .chunks_exact(OBF_DIM)
            .map(<[f64]>::to_vec)
            .collect::<Vec<_>>();
        let provenance = ck
            .get(&format!("{name}/provenance"))?
            .data()
            .iter()
            .map(|c| Provenance::from_code(*c))
            .collect::<Result<Vec<_>>>()?;
        if provenance.len() != entries.len() {
            return Err(Error::Format(
                "action table provenance length mismatch".into(),
            ));
        }
        Ok(Self {
            entries,
            provenance,
        })
    }
}

/// Movement centroids first, then change centroids.
pub fn build_action_table(km_move: &KMeansModel, km_change: &KMeansModel) -> DiscreteActionTable {
    let mut entries = km_move.centroids.clone();
    entries.extend(km_change.centroids.iter().cloned());
    let mut provenance = vec![Provenance::Movement; km_move.centroids.len()];
    provenance.extend(std::iter::repeat_n(
        Provenance::Change,
        km_change.centroids.len(),
    ));
    DiscreteActionTable {
        entries,
        provenance,
    }
}

/// A cluster set as a table of critical actions.
pub fn critical_table(dp: &DpClusterModel) -> DiscreteActionTable {
    DiscreteActionTable {
        entries: dp.centroids.clone(),
        provenance: vec![Provenance::Critical; dp.centroids.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::codec::Codec;
    use crate::demos::{decode, extract_critical_steps, generate_demos, DemoConfig};
    use crate::env::{Action, EnvConfig};

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| vec![*x]).collect()
    }

    fn demos(noise: f64) -> (Arc<Codec>, Dataset) {
        let codec = Arc::new(Codec::for_craftworld(0).unwrap());
        let cfg = DemoConfig {
            count: 60,
            noise_level: noise,
            ..DemoConfig::default()
        };
        let ds = generate_demos(&EnvConfig::default(), codec.clone(), &cfg).unwrap();
        (codec, ds)
    }

    #[test]
    fn symmetric_pairs() {
        let m = kmeans_fit(&pts(&[0.0, 0.1, 10.0, 10.1]), 2, 100, 0).unwrap();
        let mut c: Vec<f64> = m.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 10.05).abs() < 1e-12);
        assert!(
            (m.inertia - m.objective(&pts(&[0.0, 0.1, 10.0, 10.1]))).abs()
                <= 1e-9 * m.inertia.max(1.0)
        );
    }

    #[test]
    fn too_few_points_is_an_error() {
        assert!(kmeans_fit(&pts(&[1.0]), 2, 10, 0).is_err());
        assert!(dp_cluster_fit(&pts(&[1.0]), 0.0).is_err());
        assert!(dp_cluster_fit(&pts(&[1.0]), -1.0).is_err());
    }

    #[test]
    fn empty_clusters_are_reseeded() {
        // Duplicate initial centroids force an empty cluster.
        let p = pts(&[0.0, 0.0, 1.0, 5.0, 6.0]);
        let m = lloyd(&p, vec![vec![0.0], vec![0.0], vec![0.0]], 50).unwrap();
        let mut counts = [0; 3];
        m.assignments.iter().for_each(|a| counts[*a] += 1);
        assert!(counts.iter().all(|c| *c > 0), "{counts:?}");
        assert!(m.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn dp_means_basics() {
        let same = vec![vec![0.3, -0.2]; 10];
        assert_eq!(dp_cluster_fit(&same, 0.5).unwrap().len(), 1);
        let mut blobs = vec![vec![0.0, 0.0], vec![0.01, 0.0], vec![0.0, 0.01]];
        blobs.extend([vec![10.0, 0.0], vec![10.01, 0.0], vec![10.0, 0.01]]);
        let m = dp_cluster_fit(&blobs, 1.0).unwrap();
        assert_eq!(m.len(), 2);
        for (p, &a) in blobs.iter().zip(&m.assignments) {
            assert!(squared_distance(p, &m.centroids[a]).sqrt() <= m.lambda);
        }
        assert_eq!(m.counts, vec![3, 3]);
    }

    #[test]
    fn movement_set_is_pure_moves_without_noise() {
        let (codec, ds) = demos(0.0);
        let (movement, change) = split_actions_by_inventory_change(&ds).unwrap();
        assert_eq!(movement.len() + change.len(), ds.num_transitions());
        for v in &movement {
            assert!(decode(&codec, v).unwrap().is_movement());
        }
    }

    #[test]
    fn single_craft_transition() {
        let (_, mut ds) = demos(0.0);
        let t = ds
            .transitions()
            .find(|t| t.inventory_changed)
            .unwrap()
            .clone();
        ds.trajectories.truncate(1);
        ds.trajectories[0].transitions = vec![t.clone()];
        let (m, c) = split_actions_by_inventory_change(&ds).unwrap();
        assert!(m.is_empty());
        assert_eq!(c, vec![t.action]);
        ds.trajectories[0].transitions[0].inventory_changed = false;
        assert!(matches!(
            split_actions_by_inventory_change(&ds),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn dp_means_recovers_the_critical_action_count() {
        let (codec, ds) = demos(0.0);
        let steps = extract_critical_steps(&ds, None).unwrap();
        let points: Vec<Vec<f64>> = steps.iter().map(|s| s.action.clone()).collect();
        let mut distinct: Vec<Action> = points.iter().map(|p| decode(&codec, p).unwrap()).collect();
        distinct.sort_by_key(|a| a.index());
        distinct.dedup();
        let m = dp_cluster_fit(&points, default_lambda(&points).unwrap()).unwrap();
        assert_eq!(m.len(), distinct.len());
    }

    #[test]
    fn action_table_layout_and_round_trip() {
        let (_, ds) = demos(0.1);
        let (movement, change) = split_actions_by_inventory_change(&ds).unwrap();
        for k in [5, 30] {
            let km = kmeans_fit(&movement, k, 50, 1).unwrap();
            let kc = kmeans_fit(&change, k, 50, 2).unwrap();
            let table = build_action_table(&km, &kc);
            assert_eq!(table.len(), 2 * k);
            assert_eq!(table.entries[..k], km.centroids[..]);
            assert!(table.provenance[..k]
                .iter()
                .all(|p| *p == Provenance::Movement));
            let mut ck = Checkpoint::default();
            table.write_to(&mut ck, "table");
            let back = DiscreteActionTable::read_from(
                &Checkpoint::from_bytes(&ck.to_bytes()).unwrap(),
                "table",
            )
            .unwrap();
            assert_eq!(back, table);
            assert_eq!(back.digest(), table.digest());
        }
    }
}
