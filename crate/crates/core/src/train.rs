//! Minibatch training loop with Adam and resumable checkpoints.

use std::io::{BufRead, Write};
use std::time::Instant;

use log::{debug, info};
use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::augment::{augment_batch, sample_form_pair, AugmentConfig};
use crate::features::FeatureMatrix;
use crate::loss::{combine, contrastive_loss, kl_loss, reconstruction_loss, LossBreakdown, LossWeights};
use crate::nn::io::{read_f32s, write_f32s};
use crate::nn::{backward, encode, forward, init_params, read_params, update_running_stats, write_params, Mode, NetworkSpec, OutputGrads, Real, VaeParams};
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub tau: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Contrast the split-head outputs instead of the decoder output.
    pub contrast_on_split: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4096,
            epochs: 600,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            tau: 0.1,
            seed: 0,
            augment: AugmentConfig::default(),
            contrast_on_split: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch size must be at least 2".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("at least one epoch is required".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.tau > 0.0) {
            return Err(Error::InvalidArgument("learning rate and temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moment estimates, one buffer per trainable array.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &VaeParams<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.trainable().iter().map(|s| vec![T::zero(); s.len()]).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Real>(params: &mut VaeParams<T>, grads: &VaeParams<T>, state: &mut AdamState<T>, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = T::cast(1.0 - beta1.powi(t));
    let c2 = T::cast(1.0 - beta2.powi(t));
    let (b1, b2) = (T::cast(beta1), T::cast(beta2));
    let (one_b1, one_b2) = (T::cast(1.0 - beta1), T::cast(1.0 - beta2));
    let (lr, eps) = (T::cast(lr), T::cast(eps));
    for (((p, g), m), v) in params.trainable_mut().into_iter().zip(grads.trainable()).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + one_b1 * g[i];
            v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Per-epoch means of the minibatch losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    pub w2: f64,
    pub w3: f64,
}

pub fn write_loss_log<W: Write>(mut w: W, log: &[EpochLog]) -> Result<()> {
    writeln!(w, "epoch\tL1\tL2\tL3\ttotal\tw2\tw3")?;
    for e in log {
        writeln!(w, "{}\t{}\t{}\t{}\t{}\t{}\t{}", e.epoch, e.l1, e.l2, e.l3, e.total, e.w2, e.w3)?;
    }
    Ok(())
}

/// Splits a shuffled order into minibatches. A trailing single-row batch is
/// merged into the previous one so that every row is used once per epoch.
pub fn minibatches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let start = order.len() - 1 - out.last().unwrap().len();
        *out.last_mut().unwrap() = &order[start..];
        debug!("merged single trailing contig into the previous minibatch");
    }
    out
}

/// Training state over a fixed feature matrix.
pub struct Trainer {
    pub params: VaeParams<f32>,
    pub adam: AdamState<f32>,
    pub weights: LossWeights,
    pub config: TrainConfig,
    /// Epochs completed.
    pub epoch: usize,
    data: Array2<f64>,
}

impl Trainer {
    pub fn new(features: &FeatureMatrix, spec: &NetworkSpec, config: TrainConfig) -> Result<Self> {
        Self::check_inputs(features, spec, &config)?;
        let params = init_params(spec, &mut substream(config.seed, "init", 0))?;
        let adam = AdamState::new(&params);
        let weights = LossWeights::new(spec.n_samples, spec.tnf_dim, spec.latent_dim);
        Ok(Self { params, adam, weights, config, epoch: 0, data: features.concat() })
    }

    fn check_inputs(features: &FeatureMatrix, spec: &NetworkSpec, config: &TrainConfig) -> Result<()> {
        config.validate()?;
        spec.validate()?;
        if features.n_contigs() < 2 {
            return Err(Error::InvalidArgument("training needs at least two contigs".into()));
        }
        if features.n_samples() != spec.n_samples || features.tnf_dim() != spec.tnf_dim {
            return Err(Error::ShapeMismatch(format!(
                "features have {} samples and {} composition dims, network expects {} and {}",
                features.n_samples(),
                features.tnf_dim(),
                spec.n_samples,
                spec.tnf_dim
            )));
        }
        Ok(())
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.params.spec
    }

    fn step(&mut self, rows: &[usize], aug_rng: &mut crate::rng::StreamRng, noise_rng: &mut crate::rng::StreamRng) -> Result<LossBreakdown> {
        let s = self.spec().n_samples;
        let clean = self.data.select(Axis(0), rows);
        let pair = sample_form_pair(aug_rng);
        let augmented = augment_batch(&clean, pair, &self.config.augment, aug_rng).mapv(|v| v as f32);
        let clean = clean.mapv(|v| v as f32);
        let (a_in, t_in) = (clean.slice(s![.., ..s]), clean.slice(s![.., s..]));

        let trace = forward(&self.params, augmented.view(), Mode::Train, noise_rng)?;
        let rec = reconstruction_loss(trace.a_out.view(), trace.t_out.view(), a_in, t_in, &self.weights)?;
        let kl = kl_loss(trace.mu.view(), trace.sigma.view())?;
        let projection = if self.config.contrast_on_split {
            concatenate(Axis(1), &[trace.a_out.view(), trace.t_out.view()]).expect("row counts match")
        } else {
            trace.x.clone()
        };
        let con = contrastive_loss(projection.view(), self.config.tau)?;
        let breakdown = combine(rec.value, kl.value, con.value, &mut self.weights, self.epoch == 0)?;
        if !breakdown.total.is_finite() {
            return Err(Error::NonFinite(format!("loss {:?}", breakdown)));
        }

        let (w2, w3) = (breakdown.w2 as f32, breakdown.w3 as f32);
        let mut up = OutputGrads::zeros(&trace);
        up.a_out = rec.grads[0].clone();
        up.t_out = rec.grads[1].clone();
        up.mu = &kl.grads[0] * w2;
        up.sigma = &kl.grads[1] * w2;
        let d_proj = &con.grads[0] * w3;
        if self.config.contrast_on_split {
            up.a_out += &d_proj.slice(s![.., ..s]);
            up.t_out += &d_proj.slice(s![.., s..]);
        } else {
            up.x = d_proj;
        }
        let grads = backward(&self.params, &trace, &up)?;
        update_running_stats(&mut self.params, &trace);
        let c = &self.config;
        adam_step(&mut self.params, &grads, &mut self.adam, c.learning_rate, c.beta1, c.beta2, c.adam_eps);
        Ok(breakdown)
    }

    /// Runs one epoch and returns its mean losses.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let start = Instant::now();
        let epoch = self.epoch;
        let seed = self.config.seed;
        let mut order: Vec<usize> = (0..self.data.nrows()).collect();
        order.shuffle(&mut substream(seed, "shuffle", epoch as u64));
        let mut aug_rng = substream(seed, "augment", epoch as u64);
        let mut noise_rng = substream(seed, "noise", epoch as u64);
        let batches = minibatches(&order, self.config.batch_size);
        let mut sums = [0.0f64; 4];
        for (b, rows) in batches.iter().enumerate() {
            let r = self.step(rows, &mut aug_rng, &mut noise_rng).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {} minibatch {}: {m}", epoch + 1, b + 1)),
                Error::Degenerate(m) => Error::Degenerate(format!("epoch {} minibatch {}: {m}", epoch + 1, b + 1)),
                other => other,
            })?;
            for (acc, v) in sums.iter_mut().zip([r.l1, r.l2, r.l3, r.total]) {
                *acc += v;
            }
        }
        self.epoch += 1;
        let n = batches.len() as f64;
        let log = EpochLog {
            epoch: self.epoch,
            l1: sums[0] / n,
            l2: sums[1] / n,
            l3: sums[2] / n,
            total: sums[3] / n,
            w2: self.weights.w2,
            w3: self.weights.w3,
        };
        info!(
            "epoch {} L1 {:.4} L2 {:.4} L3 {:.4} total {:.4} ({:.2}s)",
            log.epoch,
            log.l1,
            log.l2,
            log.l3,
            log.total,
            start.elapsed().as_secs_f64()
        );
        Ok(log)
    }

    /// Runs the remaining epochs up to `config.epochs`.
    pub fn run(&mut self) -> Result<Vec<EpochLog>> {
        let mut log = Vec::new();
        while self.epoch < self.config.epochs {
            log.push(self.run_epoch()?);
        }
        Ok(log)
    }

    /// Parameters, then a state line and the Adam moments as f32.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        write_params(&mut w, &self.params)?;
        let calib = match self.weights.calibration {
            Some([a, b, c]) => format!("{a:?},{b:?},{c:?}"),
            None => "none".into(),
        };
        writeln!(
            w,
            "state epoch={} step={} w2={:?} w3={:?} calibration={calib}",
            self.epoch, self.adam.step, self.weights.w2, self.weights.w3
        )?;
        for buf in self.adam.m.iter().chain(&self.adam.v) {
            write_f32s(&mut w, buf)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Restores a trainer from a checkpoint; the architecture must match `spec`.
    pub fn from_checkpoint<R: BufRead>(mut r: R, features: &FeatureMatrix, spec: &NetworkSpec, config: TrainConfig) -> Result<Self> {
        Self::check_inputs(features, spec, &config)?;
        let params: VaeParams<f32> = read_params(&mut r, Some(spec))?;
        let mut line = String::new();
        r.read_line(&mut line)?;
        let bad = || Error::Format(format!("bad checkpoint state line '{}'", line.trim_end()));
        let mut fields = std::collections::HashMap::new();
        let mut it = line.split_whitespace();
        if it.next() != Some("state") {
            return Err(bad());
        }
        for tok in it {
            let (k, v) = tok.split_once('=').ok_or_else(bad)?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(bad);
        let epoch: usize = get("epoch")?.parse().map_err(|_| bad())?;
        let step: u64 = get("step")?.parse().map_err(|_| bad())?;
        let mut weights = LossWeights::new(spec.n_samples, spec.tnf_dim, spec.latent_dim);
        weights.w2 = get("w2")?.parse().map_err(|_| bad())?;
        weights.w3 = get("w3")?.parse().map_err(|_| bad())?;
        weights.calibration = match get("calibration")? {
            "none" => None,
            v => {
                let vals: Vec<f64> = v.split(',').map(|x| x.parse().map_err(|_| bad())).collect::<Result<_>>()?;
                Some(vals.try_into().map_err(|_| bad())?)
            }
        };
        let mut adam = AdamState::new(&params);
        adam.step = step;
        for buf in adam.m.iter_mut().chain(adam.v.iter_mut()) {
            read_f32s(&mut r, buf)?;
        }
        Ok(Self { params, adam, weights, config, epoch, data: features.concat() })
    }
}

/// Trains from scratch and returns the final parameters and the loss log.
pub fn train(features: &FeatureMatrix, spec: &NetworkSpec, config: TrainConfig) -> Result<(VaeParams<f32>, Vec<EpochLog>)> {
    let mut trainer = Trainer::new(features, spec, config)?;
    let log = trainer.run()?;
    Ok((trainer.params, log))
}

/// Latent means for every row of `x`, computed in chunks.
pub fn encode_rows(params: &VaeParams<f32>, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((x.nrows(), params.spec.latent_dim));
    let chunk = 4096;
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + chunk).min(x.nrows());
        let mu = encode(params, x.slice(s![start..end, ..]).mapv(|v| v as f32).view())?;
        out.slice_mut(s![start..end, ..]).assign(&mu.mapv(|v| v as f64));
        start = end;
    }
    Ok(out)
}

/// Latent means of a feature matrix.
pub fn encode_features(params: &VaeParams<f32>, features: &FeatureMatrix) -> Result<Array2<f64>> {
    encode_rows(params, features.concat().view())
}
