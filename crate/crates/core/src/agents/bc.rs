use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{feature_width, state_features, Policy};
use crate::demos::{CriticalStep, Dataset};
use crate::discretize::{DiscreteActionTable, DpClusterModel};
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::{
    argmax, softmax, train_step, Checkpoint, LayerSpec, Loss, Network, NetworkSpec, Optimizer,
    Tensor,
};

/// Dense relu network `input -> hidden... -> out`.
pub(crate) fn mlp_spec(input: usize, hidden: &[usize], out: usize) -> NetworkSpec {
    let mut layers = Vec::new();
    for &w in hidden {
        layers.push(LayerSpec::Dense { width: w });
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::Dense { width: out });
    NetworkSpec::new(vec![input], layers)
}

pub(crate) fn batch_tensor(rows: &[&[f64]]) -> Result<Tensor> {
    let width = rows.first().map_or(0, |r| r.len());
    Tensor::stack(&[width], rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs: 60,
            batch_size: 32,
            lr: 3e-3,
            seed: 11,
        }
    }
}

impl BcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Config(
                "classifier training needs epochs, batch_size and lr > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcReport {
    pub samples: usize,
    pub classes: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    /// `None` when no held-out set was given.
    pub heldout_accuracy: Option<f64>,
}

/// Softmax classifier over feature vectors.
#[derive(Clone, Debug)]
pub struct BcClassifier {
    net: Network,
}

impl BcClassifier {
    pub fn from_network(net: Network) -> Result<Self> {
        if net.input_shape().len() != 1 || net.output_shape().len() != 1 {
            return Err(Error::Shape(
                "classifier network must map vectors to vectors".into(),
            ));
        }
        Ok(Self { net })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn input_width(&self) -> usize {
        self.net.input_shape()[0]
    }

    pub fn n_classes(&self) -> usize {
        self.net.output_shape()[0]
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.net.predict(&batch_tensor(&[x])?)?;
        Ok(softmax(y.data()))
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let y = self.net.predict(&batch_tensor(&[x])?)?;
        Ok(argmax(y.data()))
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(256) {
            let rows: Vec<&[f64]> = chunk.iter().map(Vec::as_slice).collect();
            let y = self.net.predict(&batch_tensor(&rows)?)?;
            out.extend((0..chunk.len()).map(|i| argmax(y.row(i))));
        }
        Ok(out)
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::Degenerate("accuracy of an empty set".into()));
        }
        let p = self.predict_many(xs)?;
        Ok(p.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / xs.len() as f64)
    }

    pub fn write_to(&self, ck: &mut Checkpoint, name: &str) {
        ck.put_network(name, &self.net);
    }

    pub fn read_from(ck: &Checkpoint, name: &str) -> Result<Self> {
        Self::from_network(ck.get_network_any(name)?)
    }
}

/// Minibatch cross-entropy training.
pub fn train_bc_classifier(
    xs: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    heldout: Option<(&[Vec<f64>], &[usize])>,
    cfg: &BcConfig,
) -> Result<(BcClassifier, BcReport)> {
    cfg.validate()?;
    if xs.is_empty() || xs.len() != labels.len() {
        return Err(Error::Degenerate(format!(
            "classifier needs matching non-empty data ({} inputs, {} labels)",
            xs.len(),
            labels.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::Input(format!(
            "label {y} out of range for {n_classes} classes"
        )));
    }
    let width = xs[0].len();
    if xs.iter().any(|x| x.len() != width) {
        return Err(Error::Shape("classifier inputs have mixed widths".into()));
    }
    let mut net = Network::new(mlp_spec(width, &cfg.hidden, n_classes), cfg.seed)?;
    let mut opt = Optimizer::adam(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut final_loss = f64::NAN;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0);
        for idx in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f64]> = idx.iter().map(|&i| xs[i].as_slice()).collect();
            let ys: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            sum += train_step(
                &mut net,
                &batch_tensor(&rows)?,
                Loss::CrossEntropy(&ys),
                &mut opt,
            )? * idx.len() as f64;
            count += idx.len();
        }
        final_loss = sum / count as f64;
    }
    let clf = BcClassifier { net };
    let train_accuracy = clf.accuracy(xs, labels)?;
    let heldout_accuracy = match heldout {
        Some((hx, hy)) if !hx.is_empty() => Some(clf.accuracy(hx, hy)?),
        _ => None,
    };
    let report = BcReport {
        samples: xs.len(),
        classes: n_classes,
        final_loss,
        train_accuracy,
        heldout_accuracy,
    };
    Ok((clf, report))
}

/// Inventory-only classifier over critical-action clusters; acts with the
/// predicted cluster's centroid.
#[derive(Clone, Debug)]
pub struct CraftWoodenPolicy {
    classifier: BcClassifier,
    table: DiscreteActionTable,
}

impl CraftWoodenPolicy {
    pub fn new(classifier: BcClassifier, table: DiscreteActionTable) -> Result<Self> {
        if classifier.n_classes() != table.len() {
            return Err(Error::Shape(format!(
                "classifier has {} classes but the cluster set has {} entries",
                classifier.n_classes(),
                table.len()
            )));
        }
        Ok(Self { classifier, table })
    }

    pub fn classifier(&self) -> &BcClassifier {
        &self.classifier
    }
}

impl Policy for CraftWoodenPolicy {
    fn table(&self) -> &DiscreteActionTable {
        &self.table
    }

    fn act_index(&mut self, obs: &Observation, _rng: &mut ChaCha8Rng) -> usize {
        self.classifier
            .predict(&obs.inv_obf)
            .expect("input width matches")
    }
}

/// Fits the classifier on critical steps labelled by their cluster.
pub fn train_craft_wooden(
    train: &[CriticalStep],
    heldout: &[CriticalStep],
    dp: &DpClusterModel,
    cfg: &BcConfig,
) -> Result<(CraftWoodenPolicy, BcReport)> {
    if dp.len() < 2 {
        return Err(Error::Degenerate(format!(
            "craft-wooden classifier needs at least 2 action classes, the cluster set has {}",
            dp.len()
        )));
    }
    let split = |s: &[CriticalStep]| -> (Vec<Vec<f64>>, Vec<usize>) {
        s.iter()
            .map(|c| (c.inventory.clone(), dp.predict(&c.action)))
            .unzip()
    };
    let (xs, ys) = split(train);
    let (hx, hy) = split(heldout);
    let (clf, report) = train_bc_classifier(&xs, &ys, dp.len(), Some((&hx, &hy)), cfg)?;
    let policy = CraftWoodenPolicy::new(clf, crate::discretize::critical_table(dp))?;
    Ok((policy, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatBcConfig {
    /// Side of the pooled image grid appended to the inventory.
    pub pov_cells: usize,
    pub classifier: BcConfig,
}

impl Default for FlatBcConfig {
    fn default() -> Self {
        Self {
            pov_cells: 8,
            classifier: BcConfig {
                hidden: vec![128, 128],
                epochs: 30,
                batch_size: 64,
                lr: 1e-3,
                seed: 23,
            },
        }
    }
}

/// Single-network baseline: every demonstration step mapped to its nearest
/// table entry, one classifier over the whole episode, greedy at run time.
#[derive(Clone, Debug)]
pub struct FlatBcPolicy {
    classifier: BcClassifier,
    table: DiscreteActionTable,
    pov_cells: usize,
}

impl FlatBcPolicy {
    pub fn new(
        classifier: BcClassifier,
        table: DiscreteActionTable,
        pov_cells: usize,
    ) -> Result<Self> {
        if classifier.input_width() != feature_width(pov_cells)
            || classifier.n_classes() != table.len()
        {
            return Err(Error::Shape(
                "baseline classifier does not fit its table or features".into(),
            ));
        }
        Ok(Self {
            classifier,
            table,
            pov_cells,
        })
    }

    pub fn pov_cells(&self) -> usize {
        self.pov_cells
    }

    pub fn classifier(&self) -> &BcClassifier {
        &self.classifier
    }

    pub fn train(
        ds: &Dataset,
        table: &DiscreteActionTable,
        cfg: &FlatBcConfig,
    ) -> Result<(Self, BcReport)> {
        let (xs, ys): (Vec<_>, Vec<_>) = ds
            .transitions()
            .map(|t| {
                (
                    state_features(&t.obs, cfg.pov_cells),
                    table.nearest(&t.action),
                )
            })
            .unzip();
        let (clf, report) = train_bc_classifier(&xs, &ys, table.len(), None, &cfg.classifier)?;
        Ok((Self::new(clf, table.clone(), cfg.pov_cells)?, report))
    }
}

impl Policy for FlatBcPolicy {
    fn table(&self) -> &DiscreteActionTable {
        &self.table
    }

    fn act_index(&mut self, obs: &Observation, _rng: &mut ChaCha8Rng) -> usize {
        self.classifier
            .predict(&state_features(obs, self.pov_cells))
            .expect("feature width matches")
    }
}
