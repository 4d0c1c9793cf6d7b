//! Variational autoencoder with hand-derived gradients.
//!
//! Layout: encoder blocks (affine, batch-norm, leaky-ReLU, dropout), a linear
//! mean head and a softplus variance head, one reparameterized sample, decoder
//! blocks mirroring the encoder, and an affine split head producing the
//! abundance distribution (softmax) and the composition vector (linear).

pub(crate) mod io;

use std::fmt::{Debug, Display};

use ndarray::{s, Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, NumAssign};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::{Error, Result};

pub use io::{read_params, write_params};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Floating-point type the network runs in.
pub trait Real: Float + NumAssign + LinalgScalar + ScalarOperand + Debug + Display + Send + Sync + 'static {
    fn cast(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn cast(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn cast(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub n_samples: usize,
    pub tnf_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub dropout_p: f64,
    pub leaky_slope: f64,
}

impl NetworkSpec {
    pub fn new(n_samples: usize, tnf_dim: usize) -> Self {
        Self { n_samples, tnf_dim, encoder_hidden: vec![512, 512], latent_dim: 32, dropout_p: 0.2, leaky_slope: 0.01 }
    }

    pub fn input_dim(&self) -> usize {
        self.n_samples + self.tnf_dim
    }

    pub fn decoder_hidden(&self) -> Vec<usize> {
        self.encoder_hidden.iter().rev().copied().collect()
    }

    /// Width of the decoder output fed to the split head.
    pub fn projection_dim(&self) -> usize {
        self.encoder_hidden.first().copied().unwrap_or(self.latent_dim)
    }

    /// Whether the abundance head is a softmax (more than one sample).
    pub fn softmax_abundance(&self) -> bool {
        self.n_samples > 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidArgument("latent dimension must be at least 1".into()));
        }
        if self.input_dim() == 0 {
            return Err(Error::InvalidArgument("input dimension must be at least 1".into()));
        }
        if self.encoder_hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidArgument(format!("dropout probability {} not in [0, 1)", self.dropout_p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// in x out
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Real> Dense<T> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }

    fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates parameter gradients for upstream `d_out` and returns the
    /// gradient on the input if requested.
    fn backward(&self, input: ArrayView2<T>, d_out: &Array2<T>, grad: &mut Dense<T>, want_input: bool) -> Option<Array2<T>> {
        grad.w += &input.t().dot(d_out);
        grad.b += &d_out.sum_axis(Axis(0));
        want_input.then(|| d_out.dot(&self.w.t()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
}

impl<T: Real> BatchNorm<T> {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub dense: Dense<T>,
    pub bn: BatchNorm<T>,
}

/// Network parameters. Also used to hold gradients, in which case the
/// running statistics are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams<T> {
    pub spec: NetworkSpec,
    pub encoder: Vec<Block<T>>,
    pub mu: Dense<T>,
    pub sigma: Dense<T>,
    pub decoder: Vec<Block<T>>,
    pub split: Dense<T>,
}

pub type Gradients<T> = VaeParams<T>;

impl<T: Real> VaeParams<T> {
    /// All-zero weights with batch-norm at its identity setting.
    pub fn blank(spec: &NetworkSpec) -> Self {
        let block = |i, o| Block { dense: Dense::zeros(i, o), bn: BatchNorm::new(o) };
        let mut encoder = Vec::new();
        let mut width = spec.input_dim();
        for &h in &spec.encoder_hidden {
            encoder.push(block(width, h));
            width = h;
        }
        let mu = Dense::zeros(width, spec.latent_dim);
        let sigma = Dense::zeros(width, spec.latent_dim);
        let mut decoder = Vec::new();
        width = spec.latent_dim;
        for h in spec.decoder_hidden() {
            decoder.push(block(width, h));
            width = h;
        }
        let split = Dense::zeros(width, spec.input_dim());
        Self { spec: spec.clone(), encoder, mu, sigma, decoder, split }
    }

    /// Gradient accumulator: every trainable entry zero.
    pub fn zero_gradients(spec: &NetworkSpec) -> Self {
        let mut g = Self::blank(spec);
        for block in g.trainable_mut() {
            block.fill(T::zero());
        }
        g
    }

    /// Trainable arrays in declaration order: per encoder block `w b gamma beta`,
    /// mean head `w b`, variance head `w b`, per decoder block `w b gamma beta`,
    /// split head `w b`.
    pub fn trainable(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for b in &self.encoder {
            push_block(&mut out, b);
        }
        for d in [&self.mu, &self.sigma] {
            out.push(d.w.as_slice().unwrap());
            out.push(d.b.as_slice().unwrap());
        }
        for b in &self.decoder {
            push_block(&mut out, b);
        }
        out.push(self.split.w.as_slice().unwrap());
        out.push(self.split.b.as_slice().unwrap());
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for b in &mut self.encoder {
            push_block_mut(&mut out, b);
        }
        for d in [&mut self.mu, &mut self.sigma] {
            out.push(d.w.as_slice_mut().unwrap());
            out.push(d.b.as_slice_mut().unwrap());
        }
        for b in &mut self.decoder {
            push_block_mut(&mut out, b);
        }
        out.push(self.split.w.as_slice_mut().unwrap());
        out.push(self.split.b.as_slice_mut().unwrap());
        out
    }

    /// Running mean and variance of every batch-norm layer, encoder first.
    pub fn running_stats(&self) -> Vec<&[T]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|b| [b.bn.running_mean.as_slice().unwrap(), b.bn.running_var.as_slice().unwrap()])
            .collect()
    }

    pub fn running_stats_mut(&mut self) -> Vec<&mut [T]> {
        self.encoder
            .iter_mut()
            .chain(&mut self.decoder)
            .flat_map(|b| [b.bn.running_mean.as_slice_mut().unwrap(), b.bn.running_var.as_slice_mut().unwrap()])
            .collect()
    }

    pub fn n_trainable(&self) -> usize {
        self.trainable().iter().map(|s| s.len()).sum()
    }

    /// Converts to another float width.
    pub fn cast<U: Real>(&self) -> VaeParams<U> {
        let mut out = VaeParams::<U>::blank(&self.spec);
        for (dst, src) in out.trainable_mut().into_iter().zip(self.trainable()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d = U::cast(s.as_f64()));
        }
        for (dst, src) in out.running_stats_mut().into_iter().zip(self.running_stats()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d = U::cast(s.as_f64()));
        }
        out
    }
}

fn push_block<'a, T>(out: &mut Vec<&'a [T]>, b: &'a Block<T>) {
    out.push(b.dense.w.as_slice().unwrap());
    out.push(b.dense.b.as_slice().unwrap());
    out.push(b.bn.gamma.as_slice().unwrap());
    out.push(b.bn.beta.as_slice().unwrap());
}

fn push_block_mut<'a, T>(out: &mut Vec<&'a mut [T]>, b: &'a mut Block<T>) {
    out.push(b.dense.w.as_slice_mut().unwrap());
    out.push(b.dense.b.as_slice_mut().unwrap());
    out.push(b.bn.gamma.as_slice_mut().unwrap());
    out.push(b.bn.beta.as_slice_mut().unwrap());
}

/// Glorot-uniform weights, zero biases, identity batch-norm.
pub fn init_params<T: Real, R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<VaeParams<T>> {
    spec.validate()?;
    let mut p = VaeParams::<T>::blank(spec);
    let fill = |d: &mut Dense<T>, rng: &mut R| {
        let (i, o) = d.w.dim();
        let limit = (6.0 / (i + o) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        d.w.mapv_inplace(|_| T::cast(dist.sample(rng)));
    };
    for b in &mut p.encoder {
        fill(&mut b.dense, rng);
    }
    fill(&mut p.mu, rng);
    fill(&mut p.sigma, rng);
    for b in &mut p.decoder {
        fill(&mut b.dense, rng);
    }
    fill(&mut p.split, rng);
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, dropout and a random latent sample.
    Train,
    /// Running statistics, no dropout, latent equals the mean.
    Eval,
}

/// Random draws consumed by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise<T> {
    pub z: Array2<T>,
    /// Inverted-dropout multipliers per encoder block.
    pub encoder_masks: Vec<Array2<T>>,
    pub decoder_masks: Vec<Array2<T>>,
}

impl<T: Real> Noise<T> {
    /// No noise: zero latent draw, dropout disabled.
    pub fn none(spec: &NetworkSpec, rows: usize) -> Self {
        Self {
            z: Array2::zeros((rows, spec.latent_dim)),
            encoder_masks: spec.encoder_hidden.iter().map(|&h| Array2::ones((rows, h))).collect(),
            decoder_masks: spec.decoder_hidden().iter().map(|&h| Array2::ones((rows, h))).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(spec: &NetworkSpec, rows: usize, rng: &mut R) -> Self {
        let z = Array2::from_shape_simple_fn((rows, spec.latent_dim), || T::cast(rng.sample::<f64, _>(StandardNormal)));
        let p = spec.dropout_p;
        let keep = T::cast(1.0 / (1.0 - p));
        let mut mask = |h: usize| Array2::from_shape_simple_fn((rows, h), || if rng.random_bool(p) { T::zero() } else { keep });
        let encoder_masks = spec.encoder_hidden.iter().map(|&h| mask(h)).collect();
        let decoder_masks = spec.decoder_hidden().iter().map(|&h| mask(h)).collect();
        Self { z, encoder_masks, decoder_masks }
    }
}

/// Intermediate values of one block.
#[derive(Debug, Clone)]
pub struct BlockTrace<T> {
    pub input: Array2<T>,
    pub xhat: Array2<T>,
    pub inv_std: Array1<T>,
    pub batch_mean: Array1<T>,
    /// Biased batch variance.
    pub batch_var: Array1<T>,
    /// Batch-norm output, before the activation.
    pub normalized: Array2<T>,
    pub mask: Array2<T>,
    pub output: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub mode: Mode,
    pub encoder: Vec<BlockTrace<T>>,
    /// Encoder output feeding both heads.
    pub hidden: Array2<T>,
    pub mu: Array2<T>,
    /// Variance head before softplus.
    pub sigma_pre: Array2<T>,
    pub sigma: Array2<T>,
    pub z: Array2<T>,
    pub latent: Array2<T>,
    pub decoder: Vec<BlockTrace<T>>,
    /// Decoder output (contrastive projection).
    pub x: Array2<T>,
    pub a_out: Array2<T>,
    pub t_out: Array2<T>,
}

impl<T> ForwardTrace<T> {
    pub fn rows(&self) -> usize {
        self.mu.nrows()
    }
}

fn check_finite<T: Real>(a: &Array2<T>, layer: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("non-finite activation in {layer}")))
    }
}

fn block_forward<T: Real>(
    block: &Block<T>,
    input: Array2<T>,
    mode: Mode,
    mask: &Array2<T>,
    slope: T,
    layer: &str,
) -> Result<BlockTrace<T>> {
    let a = block.dense.apply(input.view());
    let m = T::cast(a.nrows() as f64);
    let (batch_mean, batch_var) = match mode {
        Mode::Train => {
            let mean = a.sum_axis(Axis(0)) / m;
            let centered = &a - &mean;
            let var = (&centered * &centered).sum_axis(Axis(0)) / m;
            (mean, var)
        }
        Mode::Eval => (block.bn.running_mean.clone(), block.bn.running_var.clone()),
    };
    let eps = T::cast(BN_EPS);
    let inv_std = batch_var.mapv(|v| T::one() / (v + eps).sqrt());
    let xhat = (&a - &batch_mean) * &inv_std;
    let normalized = &xhat * &block.bn.gamma + &block.bn.beta;
    let mut output = normalized.mapv(|v| if v > T::zero() { v } else { slope * v });
    if mode == Mode::Train {
        output *= mask;
    }
    check_finite(&output, layer)?;
    Ok(BlockTrace { input, xhat, inv_std, batch_mean, batch_var, normalized, mask: mask.clone(), output })
}

fn block_backward<T: Real>(
    block: &Block<T>,
    trace: &BlockTrace<T>,
    d_out: &Array2<T>,
    mode: Mode,
    slope: T,
    grad: &mut Block<T>,
    want_input: bool,
) -> Option<Array2<T>> {
    let mut d_y = if mode == Mode::Train { d_out * &trace.mask } else { d_out.clone() };
    Zip::from(&mut d_y).and(&trace.normalized).for_each(|d, &y| {
        if y <= T::zero() {
            *d = *d * slope;
        }
    });
    grad.bn.gamma += &(&d_y * &trace.xhat).sum_axis(Axis(0));
    grad.bn.beta += &d_y.sum_axis(Axis(0));
    let d_xhat = &d_y * &block.bn.gamma;
    let d_a = match mode {
        Mode::Train => {
            let m = T::cast(d_xhat.nrows() as f64);
            let sum_d = d_xhat.sum_axis(Axis(0));
            let sum_dx = (&d_xhat * &trace.xhat).sum_axis(Axis(0));
            ((&d_xhat * m) - &sum_d - &trace.xhat * &sum_dx) * &(&trace.inv_std / m)
        }
        Mode::Eval => &d_xhat * &trace.inv_std,
    };
    block.dense.backward(trace.input.view(), &d_a, &mut grad.dense, want_input)
}

fn softplus<T: Real>(u: T) -> T {
    u.max(T::zero()) + (-u.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(u: T) -> T {
    if u >= T::zero() {
        T::one() / (T::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (T::one() + e)
    }
}

fn softmax_rows<T: Real>(logits: &mut Array2<T>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
}

/// Forward pass with caller-supplied noise. In `Eval` mode the noise is ignored.
pub fn forward_with<T: Real>(params: &VaeParams<T>, x: ArrayView2<T>, mode: Mode, noise: &Noise<T>) -> Result<ForwardTrace<T>> {
    let spec = &params.spec;
    let rows = x.nrows();
    if x.ncols() != spec.input_dim() {
        return Err(Error::ShapeMismatch(format!("input has {} columns, network expects {}", x.ncols(), spec.input_dim())));
    }
    if mode == Mode::Train && rows < 2 {
        return Err(Error::InvalidArgument("training pass needs at least two rows".into()));
    }
    if noise.z.dim() != (rows, spec.latent_dim) {
        return Err(Error::ShapeMismatch("noise does not match batch".into()));
    }
    let slope = T::cast(spec.leaky_slope);
    let mut h = x.to_owned();
    let mut encoder = Vec::with_capacity(params.encoder.len());
    for (i, (block, mask)) in params.encoder.iter().zip(&noise.encoder_masks).enumerate() {
        let t = block_forward(block, h, mode, mask, slope, &format!("encoder layer {}", i + 1))?;
        h = t.output.clone();
        encoder.push(t);
    }
    let mu = params.mu.apply(h.view());
    check_finite(&mu, "mean head")?;
    let sigma_pre = params.sigma.apply(h.view());
    let sigma = sigma_pre.mapv(softplus);
    check_finite(&sigma, "variance head")?;
    let z = match mode {
        Mode::Train => noise.z.clone(),
        Mode::Eval => Array2::zeros(mu.dim()),
    };
    let latent = &mu + &(sigma.mapv(|v| v.sqrt()) * &z);
    let hidden = h;
    let mut h = latent.clone();
    let mut decoder = Vec::with_capacity(params.decoder.len());
    for (i, (block, mask)) in params.decoder.iter().zip(&noise.decoder_masks).enumerate() {
        let t = block_forward(block, h, mode, mask, slope, &format!("decoder layer {}", i + 1))?;
        h = t.output.clone();
        decoder.push(t);
    }
    let logits = params.split.apply(h.view());
    check_finite(&logits, "split head")?;
    let mut a_out = logits.slice(s![.., ..spec.n_samples]).to_owned();
    if spec.softmax_abundance() {
        softmax_rows(&mut a_out);
    }
    let t_out = logits.slice(s![.., spec.n_samples..]).to_owned();
    Ok(ForwardTrace { mode, encoder, hidden, mu, sigma_pre, sigma, z, latent, decoder, x: h, a_out, t_out })
}

/// Forward pass drawing its own noise in `Train` mode.
pub fn forward<T: Real, R: Rng + ?Sized>(params: &VaeParams<T>, x: ArrayView2<T>, mode: Mode, rng: &mut R) -> Result<ForwardTrace<T>> {
    let noise = match mode {
        Mode::Train => Noise::sample(&params.spec, x.nrows(), rng),
        Mode::Eval => Noise::none(&params.spec, x.nrows()),
    };
    forward_with(params, x, mode, &noise)
}

/// Mean-head output in `Eval` mode; the contig representation.
pub fn encode<T: Real>(params: &VaeParams<T>, x: ArrayView2<T>) -> Result<Array2<T>> {
    if x.ncols() != params.spec.input_dim() {
        return Err(Error::ShapeMismatch(format!("input has {} columns, network expects {}", x.ncols(), params.spec.input_dim())));
    }
    let slope = T::cast(params.spec.leaky_slope);
    let mut h = x.to_owned();
    for (i, block) in params.encoder.iter().enumerate() {
        let unit = Array2::zeros((0, 0));
        h = block_forward(block, h, Mode::Eval, &unit, slope, &format!("encoder layer {}", i + 1))?.output;
    }
    let mu = params.mu.apply(h.view());
    check_finite(&mu, "mean head")?;
    Ok(mu)
}

/// Upstream gradients on the network outputs. Zero-sized arrays mean "no
/// gradient" for that output.
#[derive(Debug, Clone)]
pub struct OutputGrads<T> {
    pub a_out: Array2<T>,
    pub t_out: Array2<T>,
    pub mu: Array2<T>,
    pub sigma: Array2<T>,
    pub x: Array2<T>,
}

impl<T: Real> OutputGrads<T> {
    pub fn zeros(trace: &ForwardTrace<T>) -> Self {
        Self {
            a_out: Array2::zeros(trace.a_out.dim()),
            t_out: Array2::zeros(trace.t_out.dim()),
            mu: Array2::zeros(trace.mu.dim()),
            sigma: Array2::zeros(trace.sigma.dim()),
            x: Array2::zeros(trace.x.dim()),
        }
    }
}

/// Exact gradients of a scalar loss with respect to every trainable parameter.
pub fn backward<T: Real>(params: &VaeParams<T>, trace: &ForwardTrace<T>, up: &OutputGrads<T>) -> Result<Gradients<T>> {
    let spec = &params.spec;
    let shapes_ok = up.a_out.dim() == trace.a_out.dim()
        && up.t_out.dim() == trace.t_out.dim()
        && up.mu.dim() == trace.mu.dim()
        && up.sigma.dim() == trace.sigma.dim()
        && up.x.dim() == trace.x.dim();
    if !shapes_ok {
        return Err(Error::ShapeMismatch("upstream gradients do not match the forward trace".into()));
    }
    let slope = T::cast(spec.leaky_slope);
    let mut grad = VaeParams::<T>::zero_gradients(spec);

    let mut d_a_logits = up.a_out.clone();
    if spec.softmax_abundance() {
        let dot = (&up.a_out * &trace.a_out).sum_axis(Axis(1)).insert_axis(Axis(1));
        d_a_logits = &trace.a_out * &(&up.a_out - &dot);
    }
    let d_logits = ndarray::concatenate(Axis(1), &[d_a_logits.view(), up.t_out.view()]).expect("row counts match");
    let mut d_h = params.split.backward(trace.x.view(), &d_logits, &mut grad.split, true).unwrap() + &up.x;

    for (i, block) in params.decoder.iter().enumerate().rev() {
        d_h = block_backward(block, &trace.decoder[i], &d_h, trace.mode, slope, &mut grad.decoder[i], true).unwrap();
    }
    let d_latent = d_h;

    let d_mu = &up.mu + &d_latent;
    let mut d_sigma = up.sigma.clone();
    if trace.mode == Mode::Train {
        let half = T::cast(0.5);
        Zip::from(&mut d_sigma).and(&d_latent).and(&trace.z).and(&trace.sigma).for_each(|ds, &dl, &z, &s| {
            *ds = *ds + dl * z * half / s.sqrt();
        });
    }
    let d_sigma_pre = &d_sigma * &trace.sigma_pre.mapv(sigmoid);
    let want = !params.encoder.is_empty();
    let d_hidden_mu = params.mu.backward(trace.hidden.view(), &d_mu, &mut grad.mu, want);
    let d_hidden_sigma = params.sigma.backward(trace.hidden.view(), &d_sigma_pre, &mut grad.sigma, want);
    if let (Some(a), Some(b)) = (d_hidden_mu, d_hidden_sigma) {
        let mut d_h = a + &b;
        for (i, block) in params.encoder.iter().enumerate().rev() {
            match block_backward(block, &trace.encoder[i], &d_h, trace.mode, slope, &mut grad.encoder[i], i > 0) {
                Some(next) => d_h = next,
                None => break,
            }
        }
    }
    Ok(grad)
}

/// Folds the batch statistics of a `Train` pass into the running estimates.
pub fn update_running_stats<T: Real>(params: &mut VaeParams<T>, trace: &ForwardTrace<T>) {
    if trace.mode != Mode::Train {
        return;
    }
    let m = trace.rows() as f64;
    let correction = T::cast(if m > 1.0 { m / (m - 1.0) } else { 1.0 });
    let mom = T::cast(BN_MOMENTUM);
    let keep = T::one() - mom;
    for (block, t) in params.encoder.iter_mut().chain(params.decoder.iter_mut()).zip(trace.encoder.iter().chain(&trace.decoder)) {
        Zip::from(&mut block.bn.running_mean).and(&t.batch_mean).for_each(|r, &b| *r = keep * *r + mom * b);
        Zip::from(&mut block.bn.running_var).and(&t.batch_var).for_each(|r, &b| *r = keep * *r + mom * b * correction);
    }
}
