//! Structured denoising autoencoder `x̂ = U diag(β) Uᵀ x` with softmax gating.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, LevelMap};
use crate::error::{Error, Result};
use crate::linalg::{orthonormality_error, orthonormalize, principal_cosines, softmax};
use crate::molrg::{add_noise_with, BasisSet, Sample};
use crate::rng::{derive_seed, gaussian_matrix, rng, Rng};
use crate::schedule::{check_delta, coefficients, DiffusionCoefficients, NoiseSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct DaeParams {
    /// n × Σd dictionary; block l occupies columns `offsets[l]..offsets[l] + block_dims[l]`.
    pub u: DMatrix<f64>,
    pub block_dims: Vec<usize>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaeOutput {
    pub h: DVector<f64>,
    pub x_hat: DVector<f64>,
    pub w: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Random orthonormal dictionary with `k` blocks of `d` columns.
pub fn init_params(n: usize, k: usize, d: usize, delta: f64, seed: u64) -> Result<DaeParams> {
    init_params_blocks(n, &vec![d; k], delta, seed)
}

pub fn init_params_blocks(n: usize, block_dims: &[usize], delta: f64, seed: u64) -> Result<DaeParams> {
    check_delta(delta)?;
    let total: usize = block_dims.iter().sum();
    if block_dims.is_empty() || block_dims.contains(&0) {
        return Err(Error::InvalidConfig("blocks must be non-empty".into()));
    }
    if total > n {
        return Err(Error::DimensionOverflow { needed: total, available: n });
    }
    let u = orthonormalize(&gaussian_matrix(n, total, &mut rng(seed)));
    Ok(DaeParams { u, block_dims: block_dims.to_vec(), delta })
}

impl DaeParams {
    /// Parameters equal to the ground-truth class bases.
    pub fn from_bases(bases: &BasisSet, delta: f64) -> Self {
        Self {
            u: bases.stacked(),
            block_dims: bases.u.iter().map(|m| m.ncols()).collect(),
            delta,
        }
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn k(&self) -> usize {
        self.block_dims.len()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut at = 0;
        self.block_dims
            .iter()
            .map(|d| {
                let o = at;
                at += d;
                o
            })
            .collect()
    }

    pub fn block(&self, l: usize) -> DMatrix<f64> {
        self.u.columns(self.offsets()[l], self.block_dims[l]).into_owned()
    }

    pub fn forward(&self, x: &DVector<f64>, sigma: f64) -> Result<DaeOutput> {
        if x.len() != self.n() {
            return Err(Error::ShapeMismatch(format!("input has length {}, expected {}", x.len(), self.n())));
        }
        let c = coefficients(sigma, self.delta)?;
        Ok(self.forward_with(x, &c).0)
    }

    /// Forward pass; also returns Uᵀx.
    fn forward_with(&self, x: &DVector<f64>, c: &DiffusionCoefficients) -> (DaeOutput, DVector<f64>) {
        let p = self.u.tr_mul(x);
        let offsets = self.offsets();
        let energies: Vec<f64> = offsets
            .iter()
            .zip(&self.block_dims)
            .map(|(&o, &d)| p.rows(o, d).norm_squared())
            .collect();
        let total: f64 = energies.iter().sum();
        // Ũ_l is the concatenation of the other blocks, so ‖Ũ_lᵀx‖² = total − e_l.
        let g: Vec<f64> = energies.iter().map(|e| c.phi * e + c.psi * (total - e)).collect();
        let w = softmax(&g);
        let beta: Vec<f64> = w.iter().map(|wl| c.xi + (c.zeta - c.xi) * wl).collect();
        let mut h = p.clone();
        for ((&o, &d), b) in offsets.iter().zip(&self.block_dims).zip(&beta) {
            h.rows_mut(o, d).scale_mut(*b);
        }
        let x_hat = &self.u * &h;
        (DaeOutput { h, x_hat, w, beta }, p)
    }

    /// Squared error of one denoising item and its gradient with respect to U,
    /// accumulated into `grad` with factor `scale`.
    fn accumulate(
        &self,
        x0: &DVector<f64>,
        x: &DVector<f64>,
        c: &DiffusionCoefficients,
        freeze_gating: bool,
        scale: f64,
        grad: &mut DMatrix<f64>,
    ) -> f64 {
        let (out, p) = self.forward_with(x, c);
        let r = &out.x_hat - x0;
        let q = self.u.tr_mul(&r);
        let offsets = self.offsets();
        // Direct path: ∂/∂U_l = 2β_l (r p_lᵀ + x q_lᵀ).
        let mut left = DVector::zeros(p.len());
        let mut right = DVector::zeros(p.len());
        for (l, (&o, &d)) in offsets.iter().zip(&self.block_dims).enumerate() {
            left.rows_mut(o, d).copy_from(&(p.rows(o, d) * (2.0 * out.beta[l])));
            right.rows_mut(o, d).copy_from(&(q.rows(o, d) * (2.0 * out.beta[l])));
        }
        if !freeze_gating {
            // Gating path: v_l = 2(ζ−ξ) q_l·p_l, γ_l = w_l (v_l − Σ w v),
            // ∂/∂U_l += 2(φ−ψ) γ_l x p_lᵀ.
            let v: Vec<f64> = offsets
                .iter()
                .zip(&self.block_dims)
                .map(|(&o, &d)| 2.0 * (c.zeta - c.xi) * q.rows(o, d).dot(&p.rows(o, d)))
                .collect();
            let vbar: f64 = out.w.iter().zip(&v).map(|(w, v)| w * v).sum();
            for (l, (&o, &d)) in offsets.iter().zip(&self.block_dims).enumerate() {
                let gamma = out.w[l] * (v[l] - vbar);
                let coef = 2.0 * (c.phi - c.psi) * gamma;
                let mut rows = right.rows_mut(o, d);
                rows += p.rows(o, d) * coef;
            }
        }
        grad.ger(scale, &r, &left, 1.0);
        grad.ger(scale, x, &right, 1.0);
        r.norm_squared()
    }

    /// Mean squared error over explicit `(x0, sigma, eps)` items and its gradient.
    pub fn loss_and_grad(&self, items: &[(DVector<f64>, f64, DVector<f64>)], freeze_gating: bool) -> Result<(f64, DMatrix<f64>)> {
        if items.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut grad = DMatrix::zeros(self.u.nrows(), self.u.ncols());
        let scale = 1.0 / items.len() as f64;
        let mut loss = 0.0;
        for (x0, sigma, eps) in items {
            let c = coefficients(*sigma, self.delta)?;
            let x = x0 + eps * *sigma;
            loss += self.accumulate(x0, &x, &c, freeze_gating, scale, &mut grad);
        }
        Ok((loss * scale, grad))
    }
}

impl Denoiser for DaeParams {
    fn at_level(&self, sigma: f64) -> Result<LevelMap<'_>> {
        let c = coefficients(sigma, self.delta)?;
        Ok(Box::new(move |x, _| self.forward_with(x, &c).0.x_hat))
    }
}

/// Monte Carlo estimate of Σ_t λ_t E‖x̂(x0 + σ_t ε) − x0‖², averaged over
/// samples and draws.
pub fn dsm_loss(params: &DaeParams, batch: &[Sample], schedule: &NoiseSchedule, mc_draws: usize, seed: u64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if mc_draws == 0 {
        return Err(Error::InvalidConfig("mc_draws must be at least 1".into()));
    }
    let coeffs: Vec<DiffusionCoefficients> = schedule
        .sigmas()
        .iter()
        .map(|&s| coefficients(s, params.delta))
        .collect::<Result<_>>()?;
    let per_sample = |i: usize| {
        let mut r = rng(derive_seed(seed, i as u64));
        let x0 = &batch[i].x0;
        let mut acc = 0.0;
        for _ in 0..mc_draws {
            for (c, lambda) in coeffs.iter().zip(schedule.weights()) {
                let x = add_noise_with(x0, c.sigma, &mut r);
                acc += lambda * (params.forward_with(&x, c).0.x_hat - x0).norm_squared();
            }
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let total: f64 = {
        use rayon::prelude::*;
        let parts: Vec<f64> = (0..batch.len()).into_par_iter().map(per_sample).collect();
        parts.iter().sum()
    };
    #[cfg(not(feature = "parallel"))]
    let total: f64 = (0..batch.len()).map(per_sample).sum();
    Ok(total / (batch.len() * mc_draws) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// How U is kept feasible after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    /// Re-orthonormalise with a sign-fixed thin QR after every step.
    #[default]
    Orthonormal,
    /// Re-orthonormalise each block on its own, so blocks may overlap.
    BlockOrthonormal,
    /// Leave U unconstrained.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub constraint: Constraint,
    pub freeze_gating: bool,
    /// Run a loss-guarded block regrouping pass every this many epochs (0 disables).
    pub regroup_every: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 5e-4,
            batch_size: 128,
            optimizer: Optimizer::default(),
            constraint: Constraint::Orthonormal,
            freeze_gating: false,
            regroup_every: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean weighted squared error over the items seen in the epoch.
    pub loss: f64,
    pub subspace_distance: Option<f64>,
    /// Largest |UᵀU − I| entry seen after any step of the epoch.
    pub orthonormality_error: f64,
    /// Block regroupings accepted at the end of this epoch.
    pub regroups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

struct AdamState {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
    t: i32,
}

/// Mini-batch training. Each item draws a level uniformly from the schedule
/// and a fresh noise vector; the per-item error is weighted by λ_t.
pub fn train(
    params: &DaeParams,
    dataset: &[Sample],
    schedule: &NoiseSchedule,
    opts: &TrainOptions,
    truth: Option<&BasisSet>,
) -> Result<(DaeParams, TrainLog)> {
    train_with_callback(params, dataset, schedule, opts, truth, |_, _| {})
}

/// [`train`] with a hook called after every epoch with the current parameters.
pub fn train_with_callback(
    params: &DaeParams,
    dataset: &[Sample],
    schedule: &NoiseSchedule,
    opts: &TrainOptions,
    truth: Option<&BasisSet>,
    mut on_epoch: impl FnMut(&EpochRecord, &DaeParams),
) -> Result<(DaeParams, TrainLog)> {
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if opts.batch_size == 0 || !(opts.lr > 0.0) {
        return Err(Error::InvalidConfig("batch size and learning rate must be positive".into()));
    }
    if dataset[0].x0.len() != params.n() {
        return Err(Error::ShapeMismatch("dataset dimension differs from the dictionary".into()));
    }
    let coeffs: Vec<DiffusionCoefficients> = schedule
        .sigmas()
        .iter()
        .map(|&s| coefficients(s, params.delta))
        .collect::<Result<_>>()?;
    let lambdas = schedule.weights();
    let mut p = params.clone();
    let (rows, cols) = p.u.shape();
    let mut adam = AdamState { m: DMatrix::zeros(rows, cols), v: DMatrix::zeros(rows, cols), t: 0 };
    let mut grad = DMatrix::zeros(rows, cols);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = TrainLog::default();
    let probe = RegroupProbe::new(dataset, &coeffs, lambdas, derive_seed(opts.seed, u64::MAX));
    for epoch in 0..opts.epochs {
        let mut r: Rng = rng(derive_seed(opts.seed, epoch as u64));
        order.shuffle(&mut r);
        let mut epoch_loss = 0.0;
        let mut worst_orth: f64 = 0.0;
        for batch in order.chunks(opts.batch_size) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let t = r.gen_range(0..coeffs.len());
                let x0 = &dataset[i].x0;
                let x = add_noise_with(x0, coeffs[t].sigma, &mut r);
                let err = p.accumulate(x0, &x, &coeffs[t], opts.freeze_gating, scale * lambdas[t], &mut grad);
                epoch_loss += lambdas[t] * err;
            }
            step(&mut p.u, &grad, &mut adam, opts);
            match opts.constraint {
                Constraint::Orthonormal => {
                    p.u = orthonormalize(&p.u);
                    worst_orth = worst_orth.max(orthonormality_error(&p.u));
                }
                Constraint::BlockOrthonormal => {
                    for (l, off) in p.offsets().into_iter().enumerate() {
                        let block = orthonormalize(&p.block(l));
                        worst_orth = worst_orth.max(orthonormality_error(&block));
                        p.u.columns_mut(off, p.block_dims[l]).copy_from(&block);
                    }
                }
                Constraint::Free => {}
            }
        }
        let mut regroups = 0;
        // The regrouping move assumes mutually orthogonal blocks.
        let regroup_applies = opts.constraint == Constraint::Orthonormal && p.k() > 1;
        if regroup_applies && opts.regroup_every > 0 && (epoch + 1) % opts.regroup_every == 0 && epoch + 1 < opts.epochs {
            regroups = probe.run(&mut p);
            if regroups > 0 {
                adam.m.fill(0.0);
                adam.v.fill(0.0);
                adam.t = 0;
            }
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            regroups,
            loss: epoch_loss / dataset.len() as f64,
            subspace_distance: match truth {
                Some(b) => Some(subspace_distance(&p, b)?.distance),
                None => None,
            },
            orthonormality_error: worst_orth,
        };
        on_epoch(&record, &p);
        log.epochs.push(record);
    }
    Ok((p, log))
}

/// Non-local move for the block structure. Gradient steps quickly make each
/// learned direction class-pure but can leave a class split across blocks, a
/// configuration no small rotation improves. The move re-derives the grouping
/// from data inside the learned span: kurtosis-maximising directions are
/// class-pure, and directions of one class have co-varying energies. The
/// regrouped dictionary is kept only if a fixed Monte Carlo estimate of the
/// training loss decreases.
struct RegroupProbe {
    stats: DMatrix<f64>,
    items: Vec<(DVector<f64>, DVector<f64>, DiffusionCoefficients, f64)>,
}

impl RegroupProbe {
    const SIZE: usize = 4096;
    const ICA_ITERS: usize = 200;

    fn new(dataset: &[Sample], coeffs: &[DiffusionCoefficients], lambdas: &[f64], seed: u64) -> Self {
        let mut r = rng(seed);
        let take = Self::SIZE.min(dataset.len());
        let idx = rand::seq::index::sample(&mut r, dataset.len(), take);
        let n = dataset[0].x0.len();
        let mut stats = DMatrix::zeros(take, n);
        let mut items = Vec::with_capacity(take);
        for (row, i) in idx.iter().enumerate() {
            let x0 = &dataset[i].x0;
            stats.row_mut(row).copy_from(&x0.transpose());
            let t = r.gen_range(0..coeffs.len());
            let x = add_noise_with(x0, coeffs[t].sigma, &mut r);
            items.push((x0.clone(), x, coeffs[t], lambdas[t]));
        }
        Self { stats, items }
    }

    fn loss(&self, p: &DaeParams) -> f64 {
        self.items
            .iter()
            .map(|(x0, x, c, lambda)| lambda * (p.forward_with(x, c).0.x_hat - x0).norm_squared())
            .sum::<f64>()
            / self.items.len() as f64
    }

    /// Returns 1 if a regrouped dictionary was accepted.
    fn run(&self, p: &mut DaeParams) -> usize {
        let Some(candidate) = self.candidate(p) else { return 0 };
        if self.loss(&candidate) < self.loss(p) {
            *p = candidate;
            1
        } else {
            0
        }
    }

    fn candidate(&self, p: &DaeParams) -> Option<DaeParams> {
        let m = p.u.ncols();
        let q = orthonormalize(&p.u);
        let y = &self.stats * &q;
        let count = y.nrows() as f64;
        let cov = y.tr_mul(&y) / count;
        let eig = cov.symmetric_eigen();
        if eig.eigenvalues.iter().any(|v| *v <= 1e-12) {
            return None;
        }
        let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
        let whiten = &eig.eigenvectors * scale * eig.eigenvectors.transpose();
        let yw = &y * &whiten;
        let z = symmetric_fast_ica(&yw, Self::ICA_ITERS);
        let dirs = orthonormalize(&(&whiten * z));
        let energy = (&y * &dirs).map(|v| v * v);
        let groups = group_by_energy(&energy, &p.block_dims)?;
        let offsets = p.offsets();
        let mut u = DMatrix::zeros(p.n(), m);
        for (l, group) in groups.iter().enumerate() {
            let mut block = DMatrix::zeros(m, group.len());
            for (c, &j) in group.iter().enumerate() {
                block.set_column(c, &dirs.column(j));
            }
            u.columns_mut(offsets[l], p.block_dims[l]).copy_from(&(&q * block));
        }
        Some(DaeParams { u, ..p.clone() })
    }
}

/// Orthogonal unmixing matrix maximising kurtosis of whitened data.
fn symmetric_fast_ica(yw: &DMatrix<f64>, iters: usize) -> DMatrix<f64> {
    let m = yw.ncols();
    let count = yw.nrows() as f64;
    let mut z = DMatrix::<f64>::identity(m, m);
    for _ in 0..iters {
        let s = yw * &z;
        let cubed = s.map(|v| v * v * v);
        let g = yw.tr_mul(&cubed) / count - &z * 3.0;
        let next = symmetric_orthogonalize(&g);
        let change = (next.tr_mul(&z)).diagonal().iter().map(|v| 1.0 - v.abs()).fold(0.0, f64::max);
        z = next;
        if change < 1e-10 {
            break;
        }
    }
    z
}

/// `g (gᵀg)^(-1/2)`, the orthogonal matrix nearest to `g`.
fn symmetric_orthogonalize(g: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = g.clone().svd(true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else { return g.clone() };
    u * vt
}

/// Partition directions into groups of the requested sizes by average-linkage
/// clustering of the correlation between their per-sample energies.
/// `groups[l]` is assigned to block l; returns `None` if the cluster sizes do
/// not match the block sizes.
fn group_by_energy(energy: &DMatrix<f64>, sizes: &[usize]) -> Option<Vec<Vec<usize>>> {
    let m = energy.ncols();
    let count = energy.nrows() as f64;
    let means: Vec<f64> = (0..m).map(|j| energy.column(j).sum() / count).collect();
    let centred = DMatrix::from_fn(energy.nrows(), m, |i, j| energy[(i, j)] - means[j]);
    let cov = centred.tr_mul(&centred);
    let corr = DMatrix::from_fn(m, m, |i, j| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt().max(1e-300));
    let mut clusters: Vec<Vec<usize>> = (0..m).map(|j| vec![j]).collect();
    let linkage = |a: &[usize], b: &[usize]| {
        a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).map(|(i, j)| corr[(i, j)]).sum::<f64>()
            / (a.len() * b.len()) as f64
    };
    let largest = *sizes.iter().max()?;
    while clusters.len() > sizes.len() {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                if clusters[a].len() + clusters[b].len() > largest {
                    continue;
                }
                let v = linkage(&clusters[a], &clusters[b]);
                if best.is_none_or(|(_, _, bv)| v > bv) {
                    best = Some((a, b, v));
                }
            }
        }
        let (a, b, _) = best?;
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
    }
    let mut remaining = clusters;
    let mut out = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let pos = remaining.iter().position(|c| c.len() == s)?;
        out.push(remaining.remove(pos));
    }
    Some(out)
}

fn step(u: &mut DMatrix<f64>, grad: &DMatrix<f64>, state: &mut AdamState, opts: &TrainOptions) {
    match opts.optimizer {
        Optimizer::Sgd => *u -= grad * opts.lr,
        Optimizer::Adam { beta1, beta2, eps } => {
            state.t += 1;
            let bc1 = 1.0 - beta1.powi(state.t);
            let bc2 = 1.0 - beta2.powi(state.t);
            for ((ui, gi), (mi, vi)) in u
                .iter_mut()
                .zip(grad.iter())
                .zip(state.m.iter_mut().zip(state.v.iter_mut()))
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                *ui -= opts.lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceReport {
    /// ‖P_learned − P_truth‖_F / √(2 Σd), in [0, 1].
    pub distance: f64,
    /// `assignment[l]` is the true class matched to learned block l.
    pub assignment: Vec<usize>,
    /// Mean principal angle in degrees of each matched pair, indexed by block.
    pub pair_angles_deg: Vec<f64>,
    pub mean_angle_deg: f64,
}

fn all_permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                prefix.push(j);
                rec(prefix, used, out);
                prefix.pop();
                used[j] = false;
            }
        }
    }
    let mut out = vec![];
    rec(&mut vec![], &mut vec![false; k], &mut out);
    out
}

/// Span distance between the learned dictionary and the union of the true
/// class subspaces, plus the best block-to-class matching (exhaustive for
/// K ≤ 5, greedy beyond).
pub fn subspace_distance(params: &DaeParams, bases: &BasisSet) -> Result<SubspaceReport> {
    let truth = bases.stacked();
    if params.n() != bases.n() || params.k() != bases.k() || params.u.ncols() != truth.ncols() {
        return Err(Error::ShapeMismatch("dictionary and bases differ in shape".into()));
    }
    let learned = orthonormalize(&params.u);
    let truth = orthonormalize(&truth);
    let m = learned.ncols() as f64;
    let overlap = (learned.transpose() * &truth).norm_squared();
    let distance = ((2.0 * m - 2.0 * overlap).max(0.0) / (2.0 * m)).sqrt();

    let k = params.k();
    let blocks: Vec<DMatrix<f64>> = (0..k).map(|l| orthonormalize(&params.block(l))).collect();
    let cosines: Vec<Vec<Vec<f64>>> = blocks
        .iter()
        .map(|b| bases.u.iter().map(|t| principal_cosines(b, t)).collect())
        .collect();
    let score = |l: usize, j: usize| cosines[l][j].iter().sum::<f64>();
    let assignment = if k <= 5 {
        all_permutations(k)
            .into_iter()
            .max_by(|a, b| {
                let sa: f64 = a.iter().enumerate().map(|(l, &j)| score(l, j)).sum();
                let sb: f64 = b.iter().enumerate().map(|(l, &j)| score(l, j)).sum();
                sa.total_cmp(&sb)
            })
            .expect("at least one permutation")
    } else {
        let mut taken = vec![false; k];
        let mut assign = vec![0; k];
        let mut pairs: Vec<(usize, usize)> = (0..k).flat_map(|l| (0..k).map(move |j| (l, j))).collect();
        pairs.sort_by(|a, b| score(b.0, b.1).total_cmp(&score(a.0, a.1)));
        let mut done = vec![false; k];
        for (l, j) in pairs {
            if !done[l] && !taken[j] {
                done[l] = true;
                taken[j] = true;
                assign[l] = j;
            }
        }
        assign
    };
    let pair_angles_deg: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(l, &j)| {
            let c = &cosines[l][j];
            c.iter().map(|v| v.acos().to_degrees()).sum::<f64>() / c.len() as f64
        })
        .collect();
    let mean_angle_deg = pair_angles_deg.iter().sum::<f64>() / k as f64;
    Ok(SubspaceReport { distance, assignment, pair_angles_deg, mean_angle_deg })
}

/// Mean span distance of `count` randomly initialised dictionaries to the
/// true subspaces: the reference an untrained model scores.
pub fn untrained_distance(bases: &BasisSet, delta: f64, count: usize, seed: u64) -> Result<f64> {
    let dims: Vec<usize> = bases.u.iter().map(|m| m.ncols()).collect();
    let mut total = 0.0;
    for i in 0..count {
        let p = init_params_blocks(bases.n(), &dims, delta, derive_seed(seed, i as u64))?;
        total += subspace_distance(&p, bases)?.distance;
    }
    Ok(total / count.max(1) as f64)
}
