//! Reconstruction, KL and NT-Xent terms with gradients on the network outputs.

use ndarray::{Array2, ArrayView2, Zip};

use crate::nn::Real;
use crate::{Error, Result};

/// Added inside the log of the abundance cross-entropy.
pub const CE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub w_a: f64,
    pub w_t: f64,
    pub tau: f64,
    pub w2: f64,
    pub w3: f64,
    pub latent_dim: usize,
    /// Loss values the weights were calibrated on, once calibrated.
    pub calibration: Option<[f64; 3]>,
    /// Single-sample data: squared error replaces cross-entropy on abundance.
    pub abundance_sse: bool,
}

impl LossWeights {
    pub fn new(n_samples: usize, tnf_dim: usize, latent_dim: usize) -> Self {
        let (w_a, abundance_sse) = if n_samples > 1 { (0.85 / (n_samples as f64).ln(), false) } else { (0.85, true) };
        let w_t = if tnf_dim > 0 { 0.15 / tnf_dim as f64 } else { 0.0 };
        Self { w_a, w_t, tau: 0.1, w2: 1.0, w3: 1.0, latent_dim, calibration: None, abundance_sse }
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibration.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    pub w2: f64,
    pub w3: f64,
}

/// Loss value with gradients on its inputs.
#[derive(Debug, Clone)]
pub struct Term<T> {
    pub value: f64,
    pub grads: Vec<Array2<T>>,
}

/// Denoising reconstruction: output row `k` (zero-based) is compared with
/// clean input row `k / 2`. Gradients are on `(a_out, t_out)`.
pub fn reconstruction_loss<T: Real>(
    a_out: ArrayView2<T>,
    t_out: ArrayView2<T>,
    a_in: ArrayView2<T>,
    t_in: ArrayView2<T>,
    w: &LossWeights,
) -> Result<Term<T>> {
    let rows = a_out.nrows();
    if t_out.nrows() != rows || a_in.nrows() * 2 != rows || t_in.nrows() * 2 != rows {
        return Err(Error::ShapeMismatch(format!("{rows} output rows vs {} input rows", a_in.nrows())));
    }
    if a_out.ncols() != a_in.ncols() || t_out.ncols() != t_in.ncols() {
        return Err(Error::ShapeMismatch("output and input widths differ".into()));
    }
    let mut d_a = Array2::zeros(a_out.dim());
    let mut d_t = Array2::zeros(t_out.dim());
    let (mut ab, mut tn) = (0.0, 0.0);
    for k in 0..rows {
        let target = k / 2;
        for j in 0..a_out.ncols() {
            let o = a_out[(k, j)].as_f64();
            let t = a_in[(target, j)].as_f64();
            if w.abundance_sse {
                ab += (o - t).powi(2);
                d_a[(k, j)] = T::cast(2.0 * w.w_a * (o - t));
            } else {
                if o < 0.0 {
                    return Err(Error::NonFinite(format!("negative abundance output {o} in row {k}")));
                }
                ab -= t * (o + CE_EPS).ln();
                d_a[(k, j)] = T::cast(-w.w_a * t / (o + CE_EPS));
            }
        }
        for j in 0..t_out.ncols() {
            let diff = t_out[(k, j)].as_f64() - t_in[(target, j)].as_f64();
            tn += diff * diff;
            d_t[(k, j)] = T::cast(2.0 * w.w_t * diff);
        }
    }
    Ok(Term { value: w.w_a * ab + w.w_t * tn, grads: vec![d_a, d_t] })
}

/// KL divergence of `N(mu, sigma)` (sigma a variance) from the standard
/// normal, summed over rows and dimensions. Gradients are on `(mu, sigma)`.
pub fn kl_loss<T: Real>(mu: ArrayView2<T>, sigma: ArrayView2<T>) -> Result<Term<T>> {
    if mu.dim() != sigma.dim() {
        return Err(Error::ShapeMismatch("mean and variance shapes differ".into()));
    }
    let mut value = 0.0;
    for (&m, &s) in mu.iter().zip(&sigma) {
        let (m, s) = (m.as_f64(), s.as_f64());
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::NonFinite(format!("variance {s} is not positive")));
        }
        value -= 0.5 * (1.0 + s.ln() - m * m - s);
    }
    let d_mu = mu.to_owned();
    let half = T::cast(0.5);
    let d_sigma = sigma.mapv(|s| -half * (T::one() / s - T::one()));
    Ok(Term { value, grads: vec![d_mu, d_sigma] })
}

fn unit_rows(x: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut u = x.to_owned();
    let mut norms = Vec::with_capacity(x.nrows());
    for (i, mut row) in u.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Degenerate(format!("projection row {i} has norm {n}")));
        }
        row /= n;
        norms.push(n);
    }
    Ok((u, norms))
}

fn log_sum_exp_excluding(row: impl Iterator<Item = (usize, f64)>, skip: usize) -> f64 {
    let vals: Vec<f64> = row.filter(|&(s, _)| s != skip).map(|(_, v)| v).collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Directed NT-Xent loss of anchor `i` against positive `j` (zero-based).
pub fn ntxent_pair<T: Real>(i: usize, j: usize, x: ArrayView2<T>, tau: f64) -> Result<f64> {
    if i == j || i >= x.nrows() || j >= x.nrows() {
        return Err(Error::InvalidArgument(format!("invalid pair ({i}, {j}) for {} rows", x.nrows())));
    }
    let xf = x.mapv(|v| v.as_f64());
    let (u, _) = unit_rows(xf.view())?;
    let sims: Vec<f64> = (0..u.nrows()).map(|s| u.row(i).dot(&u.row(s)) / tau).collect();
    Ok(-sims[j] + log_sum_exp_excluding(sims.iter().cloned().enumerate(), i))
}

/// Mean directed NT-Xent over all rows, where rows `2k` and `2k + 1` are
/// positives. Gradient is on `x`.
pub fn contrastive_loss<T: Real>(x: ArrayView2<T>, tau: f64) -> Result<Term<T>> {
    let m = x.nrows();
    if m < 2 || m % 2 != 0 {
        return Err(Error::InvalidArgument(format!("contrastive batch needs an even number of rows, got {m}")));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    let xf = x.mapv(|v| v.as_f64());
    let (u, norms) = unit_rows(xf.view())?;
    let sims = u.dot(&u.t()) / tau;
    let scale = 1.0 / m as f64;
    let mut value = 0.0;
    // dL / d(cos_is), excluding the diagonal
    let mut g = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        let pos = i ^ 1;
        let row = sims.row(i);
        let lse = log_sum_exp_excluding(row.iter().cloned().enumerate(), i);
        value += lse - row[pos];
        for s in 0..m {
            if s != i {
                let p = (row[s] - lse).exp();
                let target = if s == pos { 1.0 } else { 0.0 };
                g[(i, s)] = scale * (p - target) / tau;
            }
        }
    }
    let gs = &g + &g.t();
    let d_u = gs.dot(&u);
    let mut d_x = Array2::<T>::zeros(x.dim());
    for i in 0..m {
        let ui = u.row(i);
        let dui = d_u.row(i);
        let proj = ui.dot(&dui);
        Zip::from(d_x.row_mut(i)).and(&ui).and(&dui).for_each(|d, &uv, &dv| *d = T::cast((dv - uv * proj) / norms[i]));
    }
    Ok(Term { value: value * scale, grads: vec![d_x] })
}

/// Weighted total; calibrates `w2` and `w3` on the first call with
/// `calibration_phase` set while the weights are still uncalibrated.
pub fn combine(l1: f64, l2: f64, l3: f64, weights: &mut LossWeights, calibration_phase: bool) -> Result<LossBreakdown> {
    if calibration_phase && !weights.is_calibrated() {
        if l2 == 0.0 || l3 == 0.0 {
            return Err(Error::Degenerate(format!("cannot calibrate loss weights with L2 = {l2}, L3 = {l3}")));
        }
        weights.w2 = (l1 / l2) / (2e5 * weights.latent_dim as f64);
        weights.w3 = 1.35 * l1 / l3;
        weights.calibration = Some([l1, l2, l3]);
    }
    let total = l1 + weights.w2 * l2 + weights.w3 * l3;
    Ok(LossBreakdown { l1, l2, l3, total, w2: weights.w2, w3: weights.w3 })
}
