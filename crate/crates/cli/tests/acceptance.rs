//! Acceptance suite. Each criterion runs in isolation, prints one PASS/FAIL
//! line and the test fails if any criterion fails.
//!
//! Run with `cargo test -p clmb-cli --test acceptance -- --nocapture`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use clmb_cli::manifest::file_sha256;
use clmb_core::augment::{gaussian_noise, random_mask, random_shift, shift_pair, shift_pair_count, AugmentConfig, FeatureStats};
use clmb_core::bench::{count_recovered, evaluate_bins, Rank, PRECISION_FLOOR, RECALL_GRID};
use clmb_core::cluster::{
    adjusted_rand_index, dbscan, iterative_medoid, minibatch_kmeans, same_partition, Bin, BinSet, DbscanParams, KMeansParams, LatentMatrix,
    MedoidParams,
};
use clmb_core::features::{build_kernel, compute_composition, featurize};
use clmb_core::ingest::{reverse_complement, synthesize_dataset, ReferenceEntry, ReferenceMap, SynthConfig, Taxon};
use clmb_core::loss::{combine, contrastive_loss, kl_loss, reconstruction_loss, LossWeights};
use clmb_core::nn::{backward, forward_with, init_params, ForwardTrace, Mode, NetworkSpec, Noise, OutputGrads, VaeParams};
use clmb_core::rng::{substream, StreamRng};
use clmb_core::train::{TrainConfig, Trainer};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(name: &str, index: u64) -> StreamRng {
    substream(2024, name, index)
}

// ---------------------------------------------------------------- criterion 1

fn kernel_correctness() -> Outcome {
    let start = Instant::now();
    let kernel = build_kernel(4).map_err(|e| e.to_string())?;
    let k = kernel.matrix();
    ensure(kernel.projected_dim() == 103, || format!("projected dim {}", kernel.projected_dim()))?;
    let gram = k.t().dot(k);
    let mut dev = 0.0f64;
    for ((i, j), &v) in gram.indexed_iter() {
        dev = dev.max((v - if i == j { 1.0 } else { 0.0 }).abs());
    }
    ensure(dev < 1e-9, || format!("max |K^T K - I| = {dev:e}"))?;

    let mut r = rng("acceptance.kernel", 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = r.random_range(4..3000);
        let seq: Vec<u8> = (0..len).map(|_| b"ACGT"[r.random_range(0..4)]).collect();
        let a = compute_composition(&seq, &kernel).map_err(|e| e.to_string())?;
        let b = compute_composition(&reverse_complement(&seq), &kernel).map_err(|e| e.to_string())?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure(worst < 1e-9, || format!("reverse-complement deviation {worst:e}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("|K^T K - I| = {dev:.1e}, rc deviation {worst:.1e}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- criterion 2

struct GradCase {
    params: VaeParams<f64>,
    x: Array2<f64>,
    clean: Array2<f64>,
    noise: Noise<f64>,
    weights: LossWeights,
    tau: f64,
}

impl GradCase {
    fn random(index: u64) -> Self {
        let mut r = rng("acceptance.grad", index);
        let layers = r.random_range(1..=2);
        let spec = NetworkSpec {
            n_samples: r.random_range(1..=3),
            tnf_dim: r.random_range(0..=5),
            encoder_hidden: (0..layers).map(|_| r.random_range(2..=6)).collect(),
            latent_dim: r.random_range(1..=4),
            dropout_p: 0.2,
            leaky_slope: 0.01,
        };
        let mut params: VaeParams<f64> = init_params(&spec, &mut substream(index, "init", 0)).unwrap();
        for block in params.trainable_mut() {
            for v in block.iter_mut() {
                *v += r.random_range(-0.3..0.3);
            }
        }
        let n = 3;
        let s = spec.n_samples;
        let mut clean = Array2::zeros((n, spec.input_dim()));
        for mut row in clean.rows_mut() {
            let abundance: Vec<f64> = (0..s).map(|_| r.random_range(0.05..1.0)).collect();
            let total: f64 = abundance.iter().sum();
            for j in 0..s {
                row[j] = abundance[j] / total;
            }
            for j in s..spec.input_dim() {
                row[j] = r.random_range(-1.0..1.0);
            }
        }
        let x = Array2::from_shape_fn((2 * n, spec.input_dim()), |(i, j)| clean[(i / 2, j)] + r.random_range(-0.05..0.05));
        let noise = Noise::sample(&spec, 2 * n, &mut r);
        let mut weights = LossWeights::new(spec.n_samples, spec.tnf_dim, spec.latent_dim);
        weights.w2 = r.random_range(0.1..2.0);
        weights.w3 = r.random_range(0.1..2.0);
        Self { params, x, clean, noise, weights, tau: 0.1 }
    }

    fn trace(&self, params: &VaeParams<f64>) -> ForwardTrace<f64> {
        forward_with(params, self.x.view(), Mode::Train, &self.noise).unwrap()
    }

    /// Total loss and the upstream gradients on the network outputs.
    fn loss(&self, trace: &ForwardTrace<f64>) -> (f64, OutputGrads<f64>) {
        let s = self.params.spec.n_samples;
        let (a_in, t_in) = (self.clean.slice(ndarray::s![.., ..s]), self.clean.slice(ndarray::s![.., s..]));
        let rec = reconstruction_loss(trace.a_out.view(), trace.t_out.view(), a_in, t_in, &self.weights).unwrap();
        let kl = kl_loss(trace.mu.view(), trace.sigma.view()).unwrap();
        let con = contrastive_loss(trace.x.view(), self.tau).unwrap();
        let mut w = self.weights.clone();
        let total = combine(rec.value, kl.value, con.value, &mut w, false).unwrap().total;
        let mut up = OutputGrads::zeros(trace);
        up.a_out = rec.grads[0].clone();
        up.t_out = rec.grads[1].clone();
        up.mu = &kl.grads[0] * w.w2;
        up.sigma = &kl.grads[1] * w.w2;
        up.x = &con.grads[0] * w.w3;
        (total, up)
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let h = 1e-4;
    let mut checked = 0usize;
    let mut zero = 0usize;
    let mut worst = 0.0f64;
    for case_index in 0..20 {
        let case = GradCase::random(case_index);
        let trace = case.trace(&case.params);
        let (value, up) = case.loss(&trace);
        // Round-off floor of a central difference of a loss of this size.
        let resolution = 16.0 * f64::EPSILON * value.abs().max(1.0) / h;
        let grads = backward(&case.params, &trace, &up).map_err(|e| e.to_string())?;
        let analytic: Vec<Vec<f64>> = grads.trainable().iter().map(|b| b.to_vec()).collect();
        for (bi, block) in analytic.iter().enumerate() {
            for (k, &a) in block.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut p = case.params.clone();
                    p.trainable_mut()[bi][k] += delta;
                    case.loss(&case.trace(&p)).0
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                checked += 1;
                if a.abs() < resolution && numeric.abs() < resolution {
                    zero += 1;
                    continue;
                }
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                ensure(rel < 1e-4, || {
                    format!("case {case_index} {:?} block {bi} index {k}: analytic {a} numeric {numeric}", case.params.spec)
                })?;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} parameters over 20 networks, worst relative error {worst:.1e}, {zero} zero within round-off, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- criterion 3

fn brute_ntxent(x: &Array2<f64>, tau: f64) -> f64 {
    let m = x.nrows();
    let cos = |i: usize, j: usize| {
        let (a, b) = (x.row(i), x.row(j));
        a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
    };
    let mut total = 0.0;
    for i in 0..m {
        let pos = if i % 2 == 0 { i + 1 } else { i - 1 };
        let num = (cos(i, pos) / tau).exp();
        let den: f64 = (0..m).filter(|&k| k != i).map(|k| (cos(i, k) / tau).exp()).sum();
        total += -(num / den).ln();
    }
    total / m as f64
}

fn loss_oracles() -> Outcome {
    let mut r = rng("acceptance.loss", 0);
    let mu = Array2::from_shape_simple_fn((100, 100), || r.random_range(-3.0..3.0));
    let sigma = Array2::from_shape_simple_fn((100, 100), || r.random_range(0.01..5.0));
    let mut kl_worst = 0.0f64;
    for i in 0..100 {
        for j in 0..100 {
            let (m, s) = (mu.slice(ndarray::s![i..=i, j..=j]), sigma.slice(ndarray::s![i..=i, j..=j]));
            let got = kl_loss(m, s).map_err(|e| e.to_string())?.value;
            let (m, s): (f64, f64) = (m[(0, 0)], s[(0, 0)]);
            let expected = 0.5 * (s + m * m - 1.0 - s.ln());
            kl_worst = kl_worst.max((got - expected).abs());
        }
    }
    ensure(kl_worst < 1e-10, || format!("KL deviation {kl_worst:e}"))?;

    let pair = Array2::from_shape_simple_fn((2, 5), || r.random_range(-1.0..1.0));
    let two = contrastive_loss(pair.view(), 0.1).map_err(|e| e.to_string())?.value;
    ensure(two == 0.0, || format!("2N = 2 gives {two}"))?;

    let mut nt_worst = 0.0f64;
    for case in 0..200 {
        let m = 2 * r.random_range(1..=32);
        let d = r.random_range(1..=8);
        let tau = [0.1, 0.5, 1.0][case % 3];
        let x = Array2::from_shape_simple_fn((m, d), || r.random_range(-1.0..1.0));
        let got = contrastive_loss(x.view(), tau).map_err(|e| e.to_string())?.value;
        nt_worst = nt_worst.max((got - brute_ntxent(&x, tau)).abs());
    }
    ensure(nt_worst < 1e-9, || format!("NT-Xent deviation {nt_worst:e}"))?;

    let mut same_worst = 0.0f64;
    for n in 1..=16 {
        let row: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let x = Array2::from_shape_fn((2 * n, 6), |(_, j)| row[j]);
        let got = contrastive_loss(x.view(), 0.1).map_err(|e| e.to_string())?.value;
        same_worst = same_worst.max((got - ((2 * n - 1) as f64).ln()).abs());
    }
    ensure(same_worst < 1e-9, || format!("identical rows deviate by {same_worst:e}"))?;
    Ok(format!("KL {kl_worst:.1e}, NT-Xent {nt_worst:.1e}, identical rows {same_worst:.1e}"))
}

// ---------------------------------------------------------------- criterion 4

fn small_features(seed: u64) -> clmb_core::features::FeatureMatrix {
    let cfg = SynthConfig { genomes: 4, samples: 3, contigs_per_genome: 6, seed, ..SynthConfig::default() };
    let data = synthesize_dataset(&cfg).unwrap();
    featurize(&data.contigs, &data.mappings, &build_kernel(4).unwrap()).unwrap()
}

fn ulps(a: f64, b: f64) -> f64 {
    (a - b).abs() / (f64::EPSILON * a.abs().max(b.abs()))
}

fn calibration() -> Outcome {
    let fm = small_features(5);
    let spec = NetworkSpec { encoder_hidden: vec![32, 32], latent_dim: 8, ..NetworkSpec::new(fm.n_samples(), fm.tnf_dim()) };
    let cfg = TrainConfig { batch_size: 16, epochs: 3, seed: 5, ..TrainConfig::default() };
    let mut trainer = Trainer::new(&fm, &spec, cfg).map_err(|e| e.to_string())?;
    trainer.run_epoch().map_err(|e| e.to_string())?;
    let w = trainer.weights.clone();
    let [l1, l2, l3] = w.calibration.ok_or("weights not calibrated after the first epoch")?;
    let u2 = ulps(w.w2 * l2 * 2e5 * spec.latent_dim as f64, l1);
    let u3 = ulps(w.w3 * l3, 1.35 * l1);
    ensure(u2 <= 4.0 && u3 <= 4.0, || format!("relations off by {u2} and {u3} ulps"))?;
    trainer.run().map_err(|e| e.to_string())?;
    ensure(trainer.weights == w, || "weights changed after calibration".into())?;
    Ok(format!("L1 {l1:.4}, w2 {:.3e} ({u2:.2} ulp), w3 {:.4} ({u3:.2} ulp)", w.w2, w.w3))
}

// ---------------------------------------------------------------- criterion 5

fn augmentation() -> Outcome {
    let cfg = AugmentConfig::default();
    let mut r = rng("acceptance.augment", 0);

    let row: Vec<f64> = (0..1000).map(|i| 1.0 + i as f64).collect();
    let row = ndarray::Array1::from(row);
    let mut masked = 0usize;
    let trials = 1000;
    for _ in 0..trials {
        masked += random_mask(row.view(), cfg.mask_p, &mut r).iter().filter(|&&v| v == 0.0).count();
    }
    let n = (trials * row.len()) as f64;
    let rate = masked as f64 / n;
    let half_width = 2.5758 * (cfg.mask_p * (1.0 - cfg.mask_p) / n).sqrt();
    ensure((rate - cfg.mask_p).abs() <= half_width, || format!("mask rate {rate} outside {} +- {half_width}", cfg.mask_p))?;

    let stats = FeatureStats { mean: vec![0.3, 1.0, -2.0, 5.0], var: vec![0.5, 1.0, 2.0, 9.0] };
    let base = ndarray::Array1::from(vec![1.0, -1.0, 0.5, 2.0]);
    let draws = 250_000;
    let mut sum = [0.0f64; 4];
    let mut sq = [0.0f64; 4];
    for _ in 0..draws {
        let out = gaussian_noise(base.view(), &stats, &cfg, &mut r);
        for d in 0..4 {
            let e = out[d] - base[d];
            sum[d] += e;
            sq[d] += e * e;
        }
    }
    let mut worst_var = 0.0f64;
    for d in 0..4 {
        let mean = sum[d] / draws as f64;
        let var = sq[d] / draws as f64 - mean * mean;
        let expected = 0.0225 * stats.var[d];
        worst_var = worst_var.max((var / expected - 1.0).abs());
    }
    ensure(worst_var < 0.02, || format!("noise variance off by {:.2}%", 100.0 * worst_var))?;

    // Exactly representable data: every operation of the move is exact.
    let mut exact_pairs = 0usize;
    for _ in 0..10_000 {
        let scale = 2f64.powi(r.random_range(-20..20));
        let a = 10.0 * r.random_range(-1000i64..1000) as f64 * scale;
        let b = r.random_range(-10_000i64..10_000) as f64 * scale;
        let mut v = [a, b];
        shift_pair(&mut v, 0, 1);
        ensure(v[0] + v[1] == a + b && v[1] - b == a - v[0], || format!("pair ({a}, {b}) became ({}, {})", v[0], v[1]))?;
        exact_pairs += 1;
    }
    // Arbitrary data: the moved amount leaves one slot and enters the other,
    // so each pair sum is off by at most the rounding of the two updates.
    let mut worst_ulp = 0.0f64;
    for _ in 0..10_000 {
        let row = ndarray::Array1::from_shape_simple_fn(r.random_range(2..300), || r.random_range(0.0..10.0));
        let out = random_shift(row.view(), cfg.shift_fraction, &mut r);
        let changed: Vec<usize> = (0..row.len()).filter(|&i| out[i] != row[i]).collect();
        let pairs = shift_pair_count(row.len(), cfg.shift_fraction);
        ensure(changed.len() <= 2 * pairs, || format!("{} entries changed for {pairs} pairs", changed.len()))?;
        for &i in &changed {
            if out[i] < row[i] {
                let moved = row[i] / 10.0;
                ensure(out[i] == row[i] - moved, || format!("source {i} holds {} not {}", out[i], row[i] - moved))?;
                let j = changed.iter().copied().find(|&j| j != i && out[j] == row[j] + moved);
                let j = j.ok_or_else(|| format!("no target received {moved}"))?;
                let before = row[i] + row[j];
                let after = out[i] + out[j];
                worst_ulp = worst_ulp.max((after - before).abs() / (f64::EPSILON * before.abs()));
            }
        }
    }
    ensure(worst_ulp <= 2.0, || format!("pair sum drifted {worst_ulp} ulp"))?;
    Ok(format!(
        "mask rate {rate:.5} (+-{half_width:.5}), noise variance within {:.2}%, {exact_pairs} exact pairs bit-identical, float pairs within {worst_ulp:.1} ulp",
        100.0 * worst_var
    ))
}

// ---------------------------------------------------------------- criterion 6

fn latent(values: Array2<f64>) -> LatentMatrix {
    let ids = (0..values.nrows()).map(|i| format!("c{i}")).collect();
    let samples = vec!["S1".to_string(); values.nrows()];
    LatentMatrix::new(values, ids, samples).unwrap()
}

fn clustering() -> Outcome {
    let mut r = rng("acceptance.blobs", 0);
    let (k, per, dim, radius) = (20, 100, 16, 3.0);
    let mut centers: Vec<Vec<f64>> = Vec::new();
    while centers.len() < k {
        let v: Vec<f64> = (0..dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let c: Vec<f64> = v.iter().map(|x| radius * x / norm).collect();
        let far = centers.iter().all(|o| o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= 1.0);
        if far {
            centers.push(c);
        }
    }
    let mut truth = Vec::new();
    let mut values = Array2::zeros((k * per, dim));
    for (ci, c) in centers.iter().enumerate() {
        for p in 0..per {
            let row = ci * per + p;
            for d in 0..dim {
                values[(row, d)] = c[d] + 0.05 * r.sample::<f64, _>(StandardNormal);
            }
            truth.push(ci);
        }
    }
    let lm = latent(values);
    let medoid = iterative_medoid(&lm, &MedoidParams::default());
    let ari_m = adjusted_rand_index(&medoid.assignment, &truth);
    ensure(same_partition(&medoid.assignment, &truth) && ari_m == 1.0, || format!("medoid ARI {ari_m}, {} clusters", medoid.n_clusters))?;
    let km = minibatch_kmeans(&lm, &KMeansParams { k, seed: 11, ..KMeansParams::default() });
    let ari_k = adjusted_rand_index(&km.clustering.assignment, &truth);
    ensure(same_partition(&km.clustering.assignment, &truth) && ari_k == 1.0, || format!("k-means ARI {ari_k}"))?;

    let params = DbscanParams::default();
    let line = |xs: &[f64]| latent(Array2::from_shape_fn((xs.len(), 1), |(i, _)| xs[i]));
    let close = dbscan(&line(&[0.0, 0.1]), &params);
    ensure(close.n_clusters == 1, || format!("points 0.1 apart gave {} clusters", close.n_clusters))?;
    let apart = dbscan(&line(&[0.0, 1.0]), &params);
    ensure(apart.n_clusters == 2, || format!("points 1.0 apart gave {} clusters", apart.n_clusters))?;
    let chain = dbscan(&line(&[0.0, 0.3, 0.6]), &params);
    ensure(chain.n_clusters == 1, || format!("0.3-spaced chain gave {} clusters", chain.n_clusters))?;
    Ok(format!("medoid ARI {ari_m}, k-means ARI {ari_k}, DBSCAN traces 1/2/1 clusters"))
}

// ---------------------------------------------------------------- criterion 7

struct Instance {
    reference: ReferenceMap,
    unknown: HashMap<String, u64>,
    bins: BinSet,
}

fn random_instance(r: &mut StreamRng) -> Instance {
    let genomes = r.random_range(1..=4);
    let lengths: Vec<u64> = (0..genomes).map(|_| r.random_range(5..60)).collect();
    let mut entries = Vec::new();
    for c in 0..r.random_range(1..=10) {
        let g = r.random_range(0..genomes);
        let start = r.random_range(0..lengths[g] - 1);
        let end = r.random_range(start + 1..=lengths[g]);
        entries.push(ReferenceEntry { contig_id: format!("k{c}"), genome_id: format!("g{g}"), start, end });
    }
    let unknown: HashMap<String, u64> = (0..r.random_range(0..=2)).map(|u| (format!("u{u}"), r.random_range(1..30))).collect();
    let mut genome_lengths = BTreeMap::new();
    let mut taxonomy = BTreeMap::new();
    for g in 0..genomes {
        let id = format!("g{g}");
        if entries.iter().any(|e| e.genome_id == id) {
            genome_lengths.insert(id.clone(), lengths[g]);
        }
        let species = r.random_range(0..2);
        taxonomy.insert(id.clone(), Taxon { strain: id, species: format!("s{species}"), genus: format!("n{}", species / 2) });
    }
    let mut contigs: Vec<String> = entries.iter().map(|e| e.contig_id.clone()).collect();
    let mut unknown_ids: Vec<&String> = unknown.keys().collect();
    unknown_ids.sort();
    contigs.extend(unknown_ids.into_iter().cloned());
    let n_bins = r.random_range(1..=4);
    let mut bins: Vec<Bin> = (0..n_bins).map(|b| Bin { id: format!("b{b}"), members: Vec::new() }).collect();
    for c in contigs {
        bins[r.random_range(0..n_bins)].members.push(c);
    }
    bins.retain(|b| !b.members.is_empty());
    let reference = ReferenceMap::new(entries, genome_lengths, taxonomy).unwrap();
    Instance { reference, unknown, bins: BinSet { bins } }
}

/// (bin, genome) -> (tp, fp, fn, best) from per-base coverage arrays.
fn per_base_oracle(inst: &Instance) -> BTreeMap<(String, String), (u64, u64, u64, bool)> {
    let size = |g: &str| inst.reference.genome_lengths[g] as usize;
    let mark = |cov: &mut BTreeMap<String, Vec<bool>>, e: &ReferenceEntry| {
        let bases = cov.entry(e.genome_id.clone()).or_insert_with(|| vec![false; size(&e.genome_id)]);
        for b in e.start..e.end {
            bases[b as usize] = true;
        }
    };
    let mut dataset = BTreeMap::new();
    for e in &inst.reference.entries {
        mark(&mut dataset, e);
    }
    let count = |v: &Vec<bool>| v.iter().filter(|&&b| b).count() as u64;
    let mut out = BTreeMap::new();
    for bin in &inst.bins.bins {
        let mut cov = BTreeMap::new();
        let mut unknown = 0;
        for c in &bin.members {
            match inst.reference.entries.iter().find(|e| &e.contig_id == c) {
                Some(e) => mark(&mut cov, e),
                None => unknown += inst.unknown[c],
            }
        }
        let tps: BTreeMap<&String, u64> = cov.iter().map(|(g, v)| (g, count(v))).filter(|&(_, tp)| tp > 0).collect();
        let top = tps.values().copied().max().unwrap_or(0);
        let best = tps.iter().find(|&(_, &tp)| tp == top).map(|(g, _)| (*g).clone());
        for (g, &tp) in &tps {
            let fp = tps.iter().filter(|(o, _)| o != &g).map(|(_, &v)| v).sum::<u64>() + unknown;
            let fn_ = (0..size(g)).filter(|&b| dataset[*g][b] && !cov[*g][b]).count() as u64;
            out.insert((bin.id.clone(), (*g).clone()), (tp, fp, fn_, best.as_ref() == Some(*g)));
        }
    }
    out
}

fn bench_oracle() -> Outcome {
    let mut r = rng("acceptance.bench", 0);
    for case in 0..200 {
        let inst = random_instance(&mut r);
        let metrics = evaluate_bins(&inst.bins, &inst.reference, Some(&inst.unknown)).map_err(|e| e.to_string())?;
        let oracle = per_base_oracle(&inst);
        ensure(metrics.len() == oracle.len(), || format!("case {case}: {} pairs scored, oracle has {}", metrics.len(), oracle.len()))?;
        for m in &metrics {
            let &(tp, fp, fn_, best) = oracle.get(&(m.bin_id.clone(), m.genome_id.clone())).ok_or(format!("case {case}: unexpected pair"))?;
            let precision = tp as f64 / (tp + fp) as f64;
            let recall = tp as f64 / (tp + fn_) as f64;
            ensure((m.tp, m.fp, m.fn_, m.best, m.precision, m.recall) == (tp, fp, fn_, best, precision, recall), || {
                format!("case {case}: {m:?} vs oracle tp {tp} fp {fp} fn {fn_} best {best}")
            })?;
        }

        let report = count_recovered(&metrics, &inst.reference.taxonomy, "x", PRECISION_FLOOR, &RECALL_GRID).map_err(|e| e.to_string())?;
        for rank in Rank::ALL {
            let label = |g: &str| {
                let t = &inst.reference.taxonomy[g];
                match rank {
                    Rank::Strain => t.strain.clone(),
                    Rank::Species => t.species.clone(),
                    Rank::Genus => t.genus.clone(),
                }
            };
            let mut counts = Vec::new();
            for &threshold in &RECALL_GRID {
                let taxa: BTreeSet<String> = oracle
                    .iter()
                    .filter(|(_, &(tp, fp, fn_, _))| {
                        tp as f64 / (tp + fp) as f64 >= PRECISION_FLOOR && tp as f64 / (tp + fn_) as f64 > threshold
                    })
                    .map(|((_, g), _)| label(g))
                    .collect();
                counts.push(taxa.len());
            }
            let nc: BTreeSet<String> = oracle
                .iter()
                .filter(|(_, &(tp, fp, fn_, _))| tp as f64 / (tp + fn_) as f64 > 0.9 && tp as f64 / (tp + fp) as f64 > 0.95)
                .map(|((_, g), _)| label(g))
                .collect();
            let row = report.row(rank).ok_or("missing rank row")?;
            ensure(row.counts == counts && row.nc == nc.len(), || format!("case {case} {}: {row:?} vs {counts:?} nc {}", rank.name(), nc.len()))?;
        }
    }
    Ok("200 random instances match the per-base oracle".into())
}

// ---------------------------------------------------------------- criteria 8, 9

fn clmb(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_clmb")).args(["--threads", "1", "--log-level", "warn"]).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("clmb {args:?} exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// NC strain count of `binner` in a report TSV.
fn nc_from_report(path: &Path, binner: &str) -> Result<usize, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let line = text
        .lines()
        .find(|l| l.starts_with(&format!("{binner}\tstrain\t")))
        .ok_or_else(|| format!("no strain row for {binner} in {}", path.display()))?;
    line.rsplit('\t').next().unwrap().parse().map_err(|e| format!("{e}"))
}

fn synth_and_pipeline(root: &Path, config: &str) -> Result<(), String> {
    let data = root.join("data");
    fs::create_dir_all(root).map_err(|e| e.to_string())?;
    let cfg = root.join("run.cfg");
    fs::write(&cfg, config).map_err(|e| e.to_string())?;
    clmb(&["--config", s(&cfg), "synth", "--out", s(&data)])?;
    clmb(&[
        "--config", s(&cfg), "pipeline",
        "--fasta", s(&data.join("contigs.fna")),
        "--mapping", s(&data.join("mapping.tsv")),
        "--reference", s(&data.join("reference.tsv")),
        "--taxonomy", s(&data.join("taxonomy.tsv")),
        "--genome-lengths", s(&data.join("genome_lengths.tsv")),
        "--out", s(&root.join("run")),
    ])
}

const END_TO_END_CONFIG: &str = "run.seed = 1\nnetwork.encoder_hidden = 128,128\nnetwork.latent_dim = 16\ntrain.batch_size = 256\ntrain.epochs = 200\n";

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    synth_and_pipeline(root, END_TO_END_CONFIG)?;
    let data = root.join("data");
    let raw_dir = root.join("raw");
    clmb(&[
        "--config", s(&root.join("run.cfg")), "bench",
        "--feature-file", s(&root.join("run/features.clmb")),
        "--features", "both", "--transform", "raw",
        "--reference", s(&data.join("reference.tsv")),
        "--taxonomy", s(&data.join("taxonomy.tsv")),
        "--genome-lengths", s(&data.join("genome_lengths.tsv")),
        "--out", s(&raw_dir),
    ])?;
    let elapsed = start.elapsed();
    let encoded = nc_from_report(&root.join("run/report.tsv"), "clmb")?;
    let raw = nc_from_report(&raw_dir.join("report.tsv"), "both-raw")?;
    let summary = format!("encoded NC {encoded}/20, both-raw NC {raw}/20, {elapsed:.1?}");
    ensure(encoded >= 14, || format!("{summary}: fewer than 14 near-complete genomes"))?;
    ensure(encoded >= raw, || format!("{summary}: encoded below raw"))?;
    ensure(elapsed < Duration::from_secs(600), || format!("{summary}: over 10 minutes"))?;
    Ok(summary)
}

const DETERMINISM_CONFIG: &str = "run.seed = 7\nnetwork.encoder_hidden = 64,64\nnetwork.latent_dim = 16\ntrain.batch_size = 256\ntrain.epochs = 20\n";

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth_and_pipeline(&a, DETERMINISM_CONFIG)?;
    synth_and_pipeline(&b, DETERMINISM_CONFIG)?;
    let files = ["features.clmb", "checkpoint.clmb", "clusters.tsv", "report.tsv"];
    for f in files {
        let (x, y) = (a.join("run").join(f), b.join("run").join(f));
        let (hx, hy) = (file_sha256(&x).map_err(|e| e.to_string())?, file_sha256(&y).map_err(|e| e.to_string())?);
        ensure(hx == hy, || format!("{f} differs: {hx} vs {hy}"))?;
    }
    Ok(format!("{} identical across two runs", files.join(", ")))
}

// ---------------------------------------------------------------- driver

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("composition kernel", kernel_correctness),
        ("network gradients", gradient_correctness),
        ("loss oracles", loss_oracles),
        ("weight calibration", calibration),
        ("augmentation statistics", augmentation),
        ("clustering recovery", clustering),
        ("benchmark oracle", bench_oracle),
        ("end-to-end recovery", end_to_end),
        ("determinism", determinism),
    ];
    let mut lines = Vec::new();
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|m| m.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let line = match &outcome {
            Ok(detail) => format!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed.push(i + 1);
                format!("criterion {} {name}: FAIL ({detail})", i + 1)
            }
        };
        println!("{line}");
        lines.push(line);
    }
    let _ = fs::write(Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-summary.txt"), lines.join("\n") + "\n");
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

