use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bc::{batch_tensor, mlp_spec};
use super::{feature_width, state_features, Policy};
use crate::demos::Dataset;
use crate::discretize::DiscreteActionTable;
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::{argmax, ensure_finite, Checkpoint, Network, Optimizer, Tensor};

fn check_row(q: &[f64], a_d: usize) -> Result<()> {
    if q.len() < 2 {
        return Err(Error::Input(format!(
            "margin loss needs at least 2 actions, got {}",
            q.len()
        )));
    }
    if a_d >= q.len() {
        return Err(Error::Input(format!(
            "demonstrated action {a_d} out of range for {} actions",
            q.len()
        )));
    }
    Ok(())
}

/// Best competitor of `a_d`; ties go to the lowest index.
fn rival(q: &[f64], a_d: usize) -> usize {
    let mut best = usize::MAX;
    for (a, &v) in q.iter().enumerate() {
        if a != a_d && (best == usize::MAX || v > q[best]) {
            best = a;
        }
    }
    best
}

/// `J = max_{a != a_d} (Q(a) + T) - Q(a_d)`.
pub fn larmi_loss(q: &[f64], a_d: usize, margin: f64) -> Result<f64> {
    check_row(q, a_d)?;
    Ok(q[rival(q, a_d)] + margin - q[a_d])
}

/// Hinge `max(0, J)` and its (sub)gradient with respect to the row.
pub fn larmi_loss_grad(q: &[f64], a_d: usize, margin: f64) -> Result<(f64, Vec<f64>)> {
    let j = larmi_loss(q, a_d, margin)?;
    let mut g = vec![0.0; q.len()];
    if j > 0.0 {
        g[rival(q, a_d)] = 1.0;
        g[a_d] = -1.0;
    }
    Ok((j.max(0.0), g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LarmiConfig {
    pub margin: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    /// Side of the pooled image grid appended to the inventory.
    pub pov_cells: usize,
    pub seed: u64,
}

impl Default for LarmiConfig {
    fn default() -> Self {
        Self {
            margin: 0.8,
            epochs: 40,
            batch_size: 32,
            lr: 1e-3,
            hidden: vec![128, 128],
            pov_cells: 4,
            seed: 31,
        }
    }
}

impl LarmiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config("margin must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Config(
                "margin training needs epochs, batch_size and lr > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LarmiReport {
    pub samples: usize,
    /// Mean hinge loss per epoch.
    pub history: Vec<f64>,
    /// Fraction of training pairs whose greedy action is the demonstrated one.
    pub agreement: f64,
    /// Fraction of training pairs with `J <= 0`.
    pub satisfied: f64,
}

/// Greedy value policy over the shared action table.
#[derive(Clone, Debug)]
pub struct DigStonePolicy {
    net: Network,
    table: DiscreteActionTable,
    pov_cells: usize,
}

impl DigStonePolicy {
    pub fn new(net: Network, table: DiscreteActionTable, pov_cells: usize) -> Result<Self> {
        if net.input_shape() != [feature_width(pov_cells)] || net.output_shape() != [table.len()] {
            return Err(Error::Shape(
                "value network does not fit its table or features".into(),
            ));
        }
        Ok(Self {
            net,
            table,
            pov_cells,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn pov_cells(&self) -> usize {
        self.pov_cells
    }

    pub fn q_values(&self, obs: &Observation) -> Vec<f64> {
        self.q_rows(&[state_features(obs, self.pov_cells)])
            .expect("feature width matches")
            .into_data()
    }

    fn q_rows(&self, xs: &[Vec<f64>]) -> Result<Tensor> {
        let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        self.net.predict(&batch_tensor(&rows)?)
    }

    pub fn write_to(&self, ck: &mut Checkpoint, name: &str) {
        ck.put_network(&format!("{name}/q"), &self.net);
        self.table.write_to(ck, &format!("{name}/table"));
    }

    pub fn read_from(ck: &Checkpoint, name: &str, pov_cells: usize) -> Result<Self> {
        let net = ck.get_network_any(&format!("{name}/q"))?;
        let table = DiscreteActionTable::read_from(ck, &format!("{name}/table"))?;
        Self::new(net, table, pov_cells)
    }
}

impl Policy for DigStonePolicy {
    fn table(&self) -> &DiscreteActionTable {
        &self.table
    }

    fn act_index(&mut self, obs: &Observation, _rng: &mut ChaCha8Rng) -> usize {
        argmax(&self.q_values(obs))
    }
}

/// Offline margin training on `(features, table index)` pairs.
pub fn train_larmi(
    xs: &[Vec<f64>],
    actions: &[usize],
    table: &DiscreteActionTable,
    cfg: &LarmiConfig,
) -> Result<(DigStonePolicy, LarmiReport)> {
    cfg.validate()?;
    if xs.is_empty() || xs.len() != actions.len() {
        return Err(Error::Degenerate(
            "margin training needs a non-empty set of demonstration pairs".into(),
        ));
    }
    let n = table.len();
    let width = feature_width(cfg.pov_cells);
    if xs.iter().any(|x| x.len() != width) {
        return Err(Error::Shape(format!(
            "margin training expects {width}-wide features"
        )));
    }
    let mut net = Network::new(mlp_spec(width, &cfg.hidden, n), cfg.seed)?;
    let mut opt = Optimizer::adam(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f64]> = idx.iter().map(|&i| xs[i].as_slice()).collect();
            net.zero_grad();
            let q = net.forward(&batch_tensor(&rows)?)?;
            let mut grad = Tensor::zeros(q.shape().to_vec());
            let mut loss = 0.0;
            for (r, &i) in idx.iter().enumerate() {
                let (l, g) = larmi_loss_grad(q.row(r), actions[i], cfg.margin)?;
                loss += l;
                let scale = 1.0 / idx.len() as f64;
                grad.data_mut()[r * n..(r + 1) * n]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, s)| *d = s * scale);
            }
            ensure_finite(loss, opt.steps(), &[&net])?;
            total += loss;
            net.backward(&grad)?;
            opt.step(&mut [&mut net])?;
        }
        history.push(total / xs.len() as f64);
    }
    let policy = DigStonePolicy::new(net, table.clone(), cfg.pov_cells)?;
    let (mut agree, mut sat) = (0, 0);
    for (chunk, acts) in xs.chunks(256).zip(actions.chunks(256)) {
        let q = policy.q_rows(chunk)?;
        for (r, &a) in acts.iter().enumerate() {
            agree += usize::from(argmax(q.row(r)) == a);
            sat += usize::from(larmi_loss(q.row(r), a, cfg.margin)? <= 0.0);
        }
    }
    let report = LarmiReport {
        samples: xs.len(),
        history,
        agreement: agree as f64 / xs.len() as f64,
        satisfied: sat as f64 / xs.len() as f64,
    };
    Ok((policy, report))
}

/// Trains on every demonstration step labelled `phase`, with actions mapped
/// to their nearest table entry.
pub fn train_digstone(
    ds: &Dataset,
    labels: &[Vec<u8>],
    phase: u8,
    table: &DiscreteActionTable,
    cfg: &LarmiConfig,
) -> Result<(DigStonePolicy, LarmiReport)> {
    if labels.len() != ds.trajectories.len() {
        return Err(Error::Input("phase labels do not match the dataset".into()));
    }
    let mut xs = Vec::new();
    let mut acts = Vec::new();
    for (traj, lab) in ds.trajectories.iter().zip(labels) {
        for (t, &l) in traj.transitions.iter().zip(lab) {
            if l == phase {
                xs.push(state_features(&t.obs, cfg.pov_cells));
                acts.push(table.nearest(&t.action));
            }
        }
    }
    if xs.is_empty() {
        return Err(Error::Degenerate(format!(
            "no demonstration steps in phase {phase}"
        )));
    }
    train_larmi(&xs, &acts, table, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::Provenance;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn hand_values() {
        assert!((larmi_loss(&[0.5, 0.2, 0.1], 0, 0.2).unwrap() + 0.1).abs() < 1e-12);
        assert!((larmi_loss(&[0.1, 0.5], 0, 0.1).unwrap() - 0.5).abs() < 1e-12);
        assert!(larmi_loss(&[1.0], 0, 0.1).is_err());
        assert!(larmi_loss(&[1.0, 2.0], 2, 0.1).is_err());
    }

    #[test]
    fn hinge_gradient_targets_the_rival() {
        let (l, g) = larmi_loss_grad(&[0.3, 0.5, 0.5], 0, 0.1).unwrap();
        assert!((l - 0.3).abs() < 1e-12);
        assert_eq!(g, vec![-1.0, 1.0, 0.0]);
        let (l, g) = larmi_loss_grad(&[2.0, 0.5, 0.5], 0, 0.1).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    proptest! {
        #[test]
        fn shift_invariant(q in prop::collection::vec(-50.0f64..50.0, 2..8), c in -100.0f64..100.0, t in 0.01f64..2.0, a in 0usize..8) {
            let a = a % q.len();
            let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
            let j0 = larmi_loss(&q, a, t).unwrap();
            let j1 = larmi_loss(&shifted, a, t).unwrap();
            prop_assert!((j0 - j1).abs() < 1e-9);
        }
    }

    #[test]
    fn margin_training_fits_a_lookup() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let table = DiscreteActionTable {
            entries: (0..6)
                .map(|i| vec![i as f64; crate::codec::OBF_DIM])
                .collect(),
            provenance: vec![Provenance::Movement; 6],
        };
        let cfg = LarmiConfig {
            pov_cells: 0,
            epochs: 60,
            ..LarmiConfig::default()
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..120 {
            let a = i % 6;
            let mut x = vec![0.0; crate::codec::OBF_DIM];
            x[a] = 1.0;
            x[10] = rng.random_range(-0.1..0.1);
            xs.push(x);
            ys.push(a);
        }
        let (_, rep) = train_larmi(&xs, &ys, &table, &cfg).unwrap();
        assert_eq!(rep.agreement, 1.0);
        assert!(rep.satisfied > 0.9, "{rep:?}");
        assert!(rep.history.last() < rep.history.first());
    }
}
