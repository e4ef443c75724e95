//! Small differentiable-network engine: convolutions, transposed
//! convolutions, dense and dueling layers, losses, optimizers, checkpoints
//! and a finite-difference gradient checker.

mod checkpoint;
mod gradcheck;
mod loss;
mod network;
mod ops;
mod optim;
mod tensor;

pub use checkpoint::{Checkpoint, CKPT_MAGIC, CKPT_VERSION};
pub use gradcheck::{check_gradients, Differentiable, GradReport, NetProbe};
pub use loss::{cross_entropy, mse};
pub use network::{output_padding, LayerSpec, Network, NetworkSpec};
pub use ops::{argmax, gemm, logsumexp, softmax};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::Tensor;

use crate::error::{Error, Result};

pub enum Loss<'a> {
    Mse(&'a [f64]),
    CrossEntropy(&'a [usize]),
}

/// One optimizer step on `loss(net(x))`; returns the pre-update loss.
pub fn train_step(
    net: &mut Network,
    x: &Tensor,
    loss: Loss<'_>,
    opt: &mut Optimizer,
) -> Result<f64> {
    net.zero_grad();
    let y = net.forward(x)?;
    let (l, g) = match loss {
        Loss::Mse(t) => mse(&y, t)?,
        Loss::CrossEntropy(labels) => cross_entropy(&y, labels)?,
    };
    ensure_finite(l, opt.steps(), &[&*net])?;
    net.backward(&g)?;
    opt.step(&mut [net])?;
    Ok(l)
}

/// Aborts with diagnostics when a loss is not finite.
pub fn ensure_finite(loss: f64, step: u64, nets: &[&Network]) -> Result<()> {
    if loss.is_finite() {
        return Ok(());
    }
    let max_abs = nets
        .iter()
        .flat_map(|n| n.params())
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| {
            if v.is_finite() {
                m.max(v.abs())
            } else {
                f64::INFINITY
            }
        });
    Err(Error::Diverged(format!(
        "loss became {loss} at optimizer step {step}; largest parameter magnitude {max_abs:e}"
    )))
}

/// The ChopTree Q-network: conv encoder, then a dense layer and dueling head.
pub fn choptree_specs(pov: usize, n_actions: usize) -> (NetworkSpec, NetworkSpec, NetworkSpec) {
    let encoder = NetworkSpec::new(
        vec![3, pov, pov],
        vec![
            LayerSpec::Conv2d {
                out_channels: 16,
                kernel: 5,
                stride: 2,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                out_channels: 32,
                kernel: 3,
                stride: 2,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                out_channels: 32,
                kernel: 3,
                stride: 1,
                padding: 0,
            },
            LayerSpec::Relu,
        ],
    );
    let shapes = encoder.shapes().expect("valid encoder");
    let feat = shapes.last().expect("non-empty").clone();
    let head = NetworkSpec::new(
        feat.clone(),
        vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { width: 256 },
            LayerSpec::Relu,
            LayerSpec::Dueling { n_actions },
        ],
    );
    // Mirror of the encoder; output padding restores each intermediate size.
    let h = |i: usize| shapes[i][1];
    let decoder = NetworkSpec::new(
        feat,
        vec![
            LayerSpec::ConvTranspose2d {
                out_channels: 32,
                kernel: 3,
                stride: 1,
                output_padding: output_padding(h(4), h(6), 3, 1),
            },
            LayerSpec::Relu,
            LayerSpec::ConvTranspose2d {
                out_channels: 16,
                kernel: 3,
                stride: 2,
                output_padding: output_padding(h(2), h(4), 3, 2),
            },
            LayerSpec::Relu,
            LayerSpec::ConvTranspose2d {
                out_channels: 3,
                kernel: 5,
                stride: 2,
                output_padding: output_padding(h(0), h(2), 5, 2),
            },
        ],
    );
    (encoder, head, decoder)
}
