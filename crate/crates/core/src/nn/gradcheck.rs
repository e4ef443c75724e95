//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::Rng;

use super::network::Network;
use super::tensor::Tensor;
use crate::error::Result;

/// A scalar objective over a flat parameter vector.
pub trait Differentiable {
    fn param_count(&self) -> usize;
    fn get_param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, v: f64);
    /// Loss at the current parameters and the analytic gradient.
    fn loss_and_grad(&mut self) -> Result<(f64, Vec<f64>)>;
    fn loss(&mut self) -> Result<f64>;
    /// Relu sign pattern of the most recent evaluation.
    fn kink_pattern(&self) -> Vec<bool>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a relu kink.
    pub skipped: usize,
}

/// Compares analytic and central-difference gradients on up to `max_coords`
/// randomly chosen coordinates (all of them when `None`).
pub fn check_gradients<R: Rng>(
    model: &mut dyn Differentiable,
    step: f64,
    max_coords: Option<usize>,
    rng: &mut R,
) -> Result<GradReport> {
    let (_, analytic) = model.loss_and_grad()?;
    let base = model.kink_pattern();
    let n = model.param_count();
    let coords: Vec<usize> = match max_coords {
        Some(m) if m < n => sample(rng, n, m).into_vec(),
        _ => (0..n).collect(),
    };
    let mut report = GradReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for i in coords {
        let orig = model.get_param(i);
        model.set_param(i, orig + step);
        let lp = model.loss()?;
        let kp = model.kink_pattern();
        model.set_param(i, orig - step);
        let lm = model.loss()?;
        let km = model.kink_pattern();
        model.set_param(i, orig);
        if kp != base || km != base {
            report.skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

/// A network under the objective `sum(w * y) + 0.5 * sum(y^2)`, with the
/// input optionally treated as extra parameters.
pub struct NetProbe {
    pub net: Network,
    pub input: Tensor,
    pub weights: Vec<f64>,
    pub include_input: bool,
}

impl NetProbe {
    pub fn new<R: Rng>(net: Network, batch: usize, include_input: bool, rng: &mut R) -> Self {
        let mut shape = vec![batch];
        shape.extend_from_slice(net.input_shape());
        let n: usize = shape.iter().product();
        let input = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .expect("sized");
        let out: usize = batch * net.output_shape().iter().product::<usize>();
        let weights = (0..out).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self {
            net,
            input,
            weights,
            include_input,
        }
    }

    fn locate(&self, mut i: usize) -> (Option<usize>, usize) {
        for (b, p) in self.net.params().iter().enumerate() {
            if i < p.len() {
                return (Some(b), i);
            }
            i -= p.len();
        }
        (None, i)
    }

    fn objective(&self, y: &Tensor) -> (f64, Tensor) {
        let mut g = y.clone();
        let mut l = 0.0;
        for (gi, w) in g.data_mut().iter_mut().zip(&self.weights) {
            l += w * *gi + 0.5 * *gi * *gi;
            *gi += w;
        }
        (l, g)
    }
}

impl Differentiable for NetProbe {
    fn param_count(&self) -> usize {
        self.net.num_params()
            + if self.include_input {
                self.input.len()
            } else {
                0
            }
    }

    fn get_param(&self, i: usize) -> f64 {
        match self.locate(i) {
            (Some(b), j) => self.net.params()[b][j],
            (None, j) => self.input.data()[j],
        }
    }

    fn set_param(&mut self, i: usize, v: f64) {
        match self.locate(i) {
            (Some(b), j) => self.net.params_and_grads()[b].0[j] = v,
            (None, j) => self.input.data_mut()[j] = v,
        }
    }

    fn loss_and_grad(&mut self) -> Result<(f64, Vec<f64>)> {
        self.net.zero_grad();
        let y = self.net.forward(&self.input)?;
        let (l, g) = self.objective(&y);
        let dx = self.net.backward(&g)?;
        let mut grad: Vec<f64> = self.net.grads().concat();
        if self.include_input {
            grad.extend_from_slice(dx.data());
        }
        Ok((l, grad))
    }

    fn loss(&mut self) -> Result<f64> {
        let y = self.net.forward(&self.input)?;
        Ok(self.objective(&y).0)
    }

    fn kink_pattern(&self) -> Vec<bool> {
        self.net.relu_pattern()
    }
}
