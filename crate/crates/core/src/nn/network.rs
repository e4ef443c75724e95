use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ops::{col2im, gemm, im2col, Geom};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    /// Transposed convolution; output side `(h - 1) * stride + kernel + output_padding`.
    ConvTranspose2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        #[serde(default)]
        output_padding: usize,
    },
    Dense {
        width: usize,
    },
    Relu,
    Flatten,
    Reshape {
        shape: Vec<usize>,
    },
    /// `Q(s, a) = V(s) + A(s, a) - mean_a A(s, a)`.
    Dueling {
        n_actions: usize,
    },
}

/// Per-sample input shape and the layer stack.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Self { input, layers }
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(serde_json::to_vec(self).expect("spec serializes")).into()
    }

    /// Per-sample shape after every layer, validating compatibility.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input.clone()];
        if self.input.is_empty() || self.input.contains(&0) {
            return Err(Error::Shape(format!(
                "invalid input shape {:?}",
                self.input
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let cur = shapes.last().expect("non-empty");
            let bad =
                |what: &str| Error::Shape(format!("layer {i} ({l:?}): {what}, input {cur:?}"));
            let next = match l {
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let [c, h, w] = cur[..] else {
                        return Err(bad("expects a 3-d input"));
                    };
                    let g = Geom::new(c, h, w, *kernel, *stride, *padding)
                        .ok_or_else(|| bad("kernel does not fit"))?;
                    if *out_channels == 0 {
                        return Err(bad("zero output channels"));
                    }
                    vec![*out_channels, g.ho, g.wo]
                }
                LayerSpec::ConvTranspose2d {
                    out_channels,
                    kernel,
                    stride,
                    output_padding,
                } => {
                    let [_, h, w] = cur[..] else {
                        return Err(bad("expects a 3-d input"));
                    };
                    if *kernel == 0
                        || *stride == 0
                        || *output_padding >= *stride
                        || *out_channels == 0
                    {
                        return Err(bad("invalid transposed-convolution parameters"));
                    }
                    vec![
                        *out_channels,
                        (h - 1) * stride + kernel + output_padding,
                        (w - 1) * stride + kernel + output_padding,
                    ]
                }
                LayerSpec::Dense { width } | LayerSpec::Dueling { n_actions: width } => {
                    if cur.len() != 1 {
                        return Err(bad("expects a flat input"));
                    }
                    if *width == 0 {
                        return Err(bad("zero width"));
                    }
                    vec![*width]
                }
                LayerSpec::Relu => cur.clone(),
                LayerSpec::Flatten => vec![cur.iter().product()],
                LayerSpec::Reshape { shape } => {
                    if shape.iter().product::<usize>() != cur.iter().product::<usize>() {
                        return Err(bad("reshape changes the element count"));
                    }
                    shape.clone()
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }
}

/// Output padding so that a transposed convolution maps `h_in` back to `h_out`.
pub fn output_padding(h_out: usize, h_in: usize, kernel: usize, stride: usize) -> usize {
    h_out - ((h_in - 1) * stride + kernel)
}

#[derive(Clone, Debug)]
enum Cache {
    Empty,
    Cols(Vec<f64>),
    Input(Vec<f64>),
    Mask(Vec<bool>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Fresh,
    Forwarded,
    Consumed,
}

/// A sequential network with cached activations for one backward pass.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<Vec<usize>>,
    params: Vec<Vec<Vec<f64>>>,
    grads: Vec<Vec<Vec<f64>>>,
    caches: Vec<Cache>,
    batch: usize,
    phase: Phase,
}

impl Network {
    /// Builds with He-uniform weights and zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(spec.layers.len());
        for (i, l) in spec.layers.iter().enumerate() {
            let inp = &shapes[i];
            let mut he = |fan_in: usize, n: usize| -> Vec<f64> {
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            let p = match l {
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    ..
                } => {
                    let fan = inp[0] * kernel * kernel;
                    vec![he(fan, out_channels * fan), vec![0.0; *out_channels]]
                }
                LayerSpec::ConvTranspose2d {
                    out_channels,
                    kernel,
                    ..
                } => {
                    let n = inp[0] * out_channels * kernel * kernel;
                    vec![he(inp[0] * kernel * kernel, n), vec![0.0; *out_channels]]
                }
                LayerSpec::Dense { width } => vec![he(inp[0], width * inp[0]), vec![0.0; *width]],
                LayerSpec::Dueling { n_actions } => vec![
                    he(inp[0], inp[0]),
                    vec![0.0; 1],
                    he(inp[0], n_actions * inp[0]),
                    vec![0.0; *n_actions],
                ],
                _ => vec![],
            };
            params.push(p);
        }
        let grads = params
            .iter()
            .map(|p| p.iter().map(|v| vec![0.0; v.len()]).collect())
            .collect();
        let caches = vec![Cache::Empty; spec.layers.len()];
        Ok(Self {
            spec,
            shapes,
            params,
            grads,
            caches,
            batch: 0,
            phase: Phase::Fresh,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("non-empty")
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().flatten().map(Vec::len).sum()
    }

    /// Parameter blobs in a stable order.
    pub fn params(&self) -> Vec<&[f64]> {
        self.params.iter().flatten().map(Vec::as_slice).collect()
    }

    pub fn grads(&self) -> Vec<&[f64]> {
        self.grads.iter().flatten().map(Vec::as_slice).collect()
    }

    /// `(parameter, gradient)` pairs in the order of [`Network::params`].
    pub fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        self.params
            .iter_mut()
            .flatten()
            .zip(self.grads.iter().flatten())
            .map(|(p, g)| (p.as_mut_slice(), g.as_slice()))
            .collect()
    }

    pub fn set_params(&mut self, blobs: &[Vec<f64>]) -> Result<()> {
        let lens: Vec<usize> = self.params.iter().flatten().map(Vec::len).collect();
        if blobs.len() != lens.len() || blobs.iter().zip(&lens).any(|(b, l)| b.len() != *l) {
            return Err(Error::Shape(
                "parameter blobs do not match the network spec".into(),
            ));
        }
        for (p, b) in self.params.iter_mut().flatten().zip(blobs) {
            p.copy_from_slice(b);
        }
        Ok(())
    }

    pub fn copy_params_from(&mut self, other: &Network) -> Result<()> {
        if other.spec != self.spec {
            return Err(Error::Shape(
                "cannot copy parameters between different specs".into(),
            ));
        }
        self.params.clone_from(&other.params);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for g in self.grads.iter_mut().flatten() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let s = x.shape();
        if s.len() != self.shapes[0].len() + 1 || s[1..] != self.shapes[0][..] {
            return Err(Error::Shape(format!(
                "network expects [N, {:?}], got {s:?}",
                self.shapes[0]
            )));
        }
        Ok(s[0])
    }

    /// Forward pass that records activations for [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let n = self.check_input(x)?;
        let mut caches = std::mem::take(&mut self.caches);
        let out = self.run(x.data().to_vec(), n, Some(&mut caches));
        self.caches = caches;
        self.batch = n;
        self.phase = Phase::Forwarded;
        out
    }

    /// Inference without caching; safe to call concurrently.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.check_input(x)?;
        self.run(x.data().to_vec(), n, None)
    }

    fn run(
        &self,
        mut cur: Vec<f64>,
        n: usize,
        mut caches: Option<&mut Vec<Cache>>,
    ) -> Result<Tensor> {
        for (i, l) in self.spec.layers.iter().enumerate() {
            let inp = &self.shapes[i];
            let outs = &self.shapes[i + 1];
            let p = &self.params[i];
            let in_w: usize = inp.iter().product();
            let out_w: usize = outs.iter().product();
            let mut cache = Cache::Empty;
            let next = match l {
                LayerSpec::Conv2d {
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let g = Geom::new(inp[0], inp[1], inp[2], *kernel, *stride, *padding)
                        .expect("validated");
                    let (rows, len) = (g.rows(), g.positions());
                    let o = outs[0];
                    let mut y = vec![0.0; n * out_w];
                    let mut cols = vec![0.0; n * rows * len];
                    for s in 0..n {
                        let col = &mut cols[s * rows * len..(s + 1) * rows * len];
                        im2col(&cur[s * in_w..(s + 1) * in_w], &g, col);
                        let ys = &mut y[s * out_w..(s + 1) * out_w];
                        for (c, chunk) in ys.chunks_exact_mut(len).enumerate() {
                            chunk.iter_mut().for_each(|v| *v = p[1][c]);
                        }
                        gemm(o, rows, len, &p[0], false, col, false, 1.0, ys);
                    }
                    cache = Cache::Cols(cols);
                    y
                }
                LayerSpec::ConvTranspose2d { kernel, stride, .. } => {
                    let g = Geom::new(outs[0], outs[1], outs[2], *kernel, *stride, 0)
                        .expect("validated");
                    debug_assert_eq!(g.positions(), inp[1] * inp[2]);
                    let (rows, len) = (g.rows(), g.positions());
                    let plane = outs[1] * outs[2];
                    let mut y = vec![0.0; n * out_w];
                    let mut col = vec![0.0; rows * len];
                    for s in 0..n {
                        gemm(
                            rows,
                            inp[0],
                            len,
                            &p[0],
                            true,
                            &cur[s * in_w..(s + 1) * in_w],
                            false,
                            0.0,
                            &mut col,
                        );
                        let ys = &mut y[s * out_w..(s + 1) * out_w];
                        for (c, chunk) in ys.chunks_exact_mut(plane).enumerate() {
                            chunk.iter_mut().for_each(|v| *v = p[1][c]);
                        }
                        col2im(&col, &g, ys);
                    }
                    cache = Cache::Input(cur);
                    y
                }
                LayerSpec::Dense { width } => {
                    let mut y = vec![0.0; n * width];
                    for row in y.chunks_exact_mut(*width) {
                        row.copy_from_slice(&p[1]);
                    }
                    gemm(n, in_w, *width, &cur, false, &p[0], true, 1.0, &mut y);
                    cache = Cache::Input(cur);
                    y
                }
                LayerSpec::Dueling { n_actions } => {
                    let na = *n_actions;
                    let mut v = vec![p[1][0]; n];
                    gemm(n, in_w, 1, &cur, false, &p[0], true, 1.0, &mut v);
                    let mut a = vec![0.0; n * na];
                    for row in a.chunks_exact_mut(na) {
                        row.copy_from_slice(&p[3]);
                    }
                    gemm(n, in_w, na, &cur, false, &p[2], true, 1.0, &mut a);
                    for (s, row) in a.chunks_exact_mut(na).enumerate() {
                        let mean = row.iter().sum::<f64>() / na as f64;
                        row.iter_mut().for_each(|q| *q += v[s] - mean);
                    }
                    cache = Cache::Input(cur);
                    a
                }
                LayerSpec::Relu => {
                    let mask: Vec<bool> = cur.iter().map(|v| *v > 0.0).collect();
                    for (v, m) in cur.iter_mut().zip(&mask) {
                        if !m {
                            *v = 0.0;
                        }
                    }
                    cache = Cache::Mask(mask);
                    cur
                }
                LayerSpec::Flatten | LayerSpec::Reshape { .. } => cur,
            };
            if let Some(c) = caches.as_deref_mut() {
                c[i] = cache;
            }
            cur = next;
        }
        let mut shape = vec![n];
        shape.extend_from_slice(self.output_shape());
        Tensor::new(shape, cur)
    }

    /// Accumulates parameter gradients and returns the input gradient. Each
    /// forward pass supports exactly one backward pass.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self.phase {
            Phase::Fresh => return Err(Error::Usage("backward called before forward".into())),
            Phase::Consumed => {
                return Err(Error::Usage(
                    "backward called twice for one forward pass".into(),
                ));
            }
            Phase::Forwarded => {}
        }
        let n = self.batch;
        let mut want = vec![n];
        want.extend_from_slice(self.output_shape());
        if grad.shape() != want.as_slice() {
            return Err(Error::Shape(format!(
                "gradient shape {:?}, expected {want:?}",
                grad.shape()
            )));
        }
        self.phase = Phase::Consumed;
        let mut g = grad.data().to_vec();
        for i in (0..self.spec.layers.len()).rev() {
            let inp = self.shapes[i].clone();
            let outs = self.shapes[i + 1].clone();
            let in_w: usize = inp.iter().product();
            let out_w: usize = outs.iter().product();
            let cache = std::mem::replace(&mut self.caches[i], Cache::Empty);
            let p = &self.params[i];
            let gp = &mut self.grads[i];
            g = match (&self.spec.layers[i], cache) {
                (
                    LayerSpec::Conv2d {
                        kernel,
                        stride,
                        padding,
                        ..
                    },
                    Cache::Cols(cols),
                ) => {
                    let geom = Geom::new(inp[0], inp[1], inp[2], *kernel, *stride, *padding)
                        .expect("validated");
                    let (rows, len) = (geom.rows(), geom.positions());
                    let o = outs[0];
                    let mut dx = vec![0.0; n * in_w];
                    let mut dcol = vec![0.0; rows * len];
                    for s in 0..n {
                        let gs = &g[s * out_w..(s + 1) * out_w];
                        let col = &cols[s * rows * len..(s + 1) * rows * len];
                        gemm(o, len, rows, gs, false, col, true, 1.0, &mut gp[0]);
                        for (c, chunk) in gs.chunks_exact(len).enumerate() {
                            gp[1][c] += chunk.iter().sum::<f64>();
                        }
                        gemm(rows, o, len, &p[0], true, gs, false, 0.0, &mut dcol);
                        col2im(&dcol, &geom, &mut dx[s * in_w..(s + 1) * in_w]);
                    }
                    dx
                }
                (LayerSpec::ConvTranspose2d { kernel, stride, .. }, Cache::Input(x)) => {
                    let geom = Geom::new(outs[0], outs[1], outs[2], *kernel, *stride, 0)
                        .expect("validated");
                    let (rows, len) = (geom.rows(), geom.positions());
                    let plane = outs[1] * outs[2];
                    let mut dx = vec![0.0; n * in_w];
                    let mut dcol = vec![0.0; rows * len];
                    for s in 0..n {
                        let gs = &g[s * out_w..(s + 1) * out_w];
                        im2col(gs, &geom, &mut dcol);
                        let xs = &x[s * in_w..(s + 1) * in_w];
                        gemm(inp[0], len, rows, xs, false, &dcol, true, 1.0, &mut gp[0]);
                        for (c, chunk) in gs.chunks_exact(plane).enumerate() {
                            gp[1][c] += chunk.iter().sum::<f64>();
                        }
                        gemm(
                            inp[0],
                            rows,
                            len,
                            &p[0],
                            false,
                            &dcol,
                            false,
                            0.0,
                            &mut dx[s * in_w..(s + 1) * in_w],
                        );
                    }
                    dx
                }
                (LayerSpec::Dense { width }, Cache::Input(x)) => {
                    gemm(*width, n, in_w, &g, true, &x, false, 1.0, &mut gp[0]);
                    for row in g.chunks_exact(*width) {
                        for (b, v) in gp[1].iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                    let mut dx = vec![0.0; n * in_w];
                    gemm(n, *width, in_w, &g, false, &p[0], false, 0.0, &mut dx);
                    dx
                }
                (LayerSpec::Dueling { n_actions }, Cache::Input(x)) => {
                    let na = *n_actions;
                    let dv: Vec<f64> = g.chunks_exact(na).map(|r| r.iter().sum()).collect();
                    let mut da = g.clone();
                    for row in da.chunks_exact_mut(na) {
                        let mean = row.iter().sum::<f64>() / na as f64;
                        row.iter_mut().for_each(|v| *v -= mean);
                    }
                    gemm(1, n, in_w, &dv, true, &x, false, 1.0, &mut gp[0]);
                    gp[1][0] += dv.iter().sum::<f64>();
                    gemm(na, n, in_w, &da, true, &x, false, 1.0, &mut gp[2]);
                    for row in da.chunks_exact(na) {
                        for (b, v) in gp[3].iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                    let mut dx = vec![0.0; n * in_w];
                    gemm(n, 1, in_w, &dv, false, &p[0], false, 0.0, &mut dx);
                    gemm(n, na, in_w, &da, false, &p[2], false, 1.0, &mut dx);
                    dx
                }
                (LayerSpec::Relu, Cache::Mask(mask)) => {
                    for (v, m) in g.iter_mut().zip(&mask) {
                        if !m {
                            *v = 0.0;
                        }
                    }
                    self.caches[i] = Cache::Mask(mask);
                    g
                }
                (LayerSpec::Flatten | LayerSpec::Reshape { .. }, _) => g,
                _ => {
                    return Err(Error::Usage(
                        "activation cache missing; run forward first".into(),
                    ))
                }
            };
        }
        let mut shape = vec![n];
        shape.extend_from_slice(&self.shapes[0]);
        Tensor::new(shape, g)
    }

    /// Sign pattern of every relu input from the last forward pass.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.caches
            .iter()
            .filter_map(|c| match c {
                Cache::Mask(m) => Some(m.as_slice()),
                _ => None,
            })
            .flatten()
            .copied()
            .collect()
    }
}
