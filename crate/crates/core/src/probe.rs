//! Downstream evaluation of representations: a multinomial logistic probe,
//! a projection-energy classifier and soft-voting ensembles across levels.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::analytic::OptimalDenoiser;
use crate::dae::DaeParams;
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::linalg::{argmax, top_right_singular_vectors};
use crate::molrg::{add_noise_with, BasisSet, MolrgConfig, Sample};
use crate::par::{map_indices, CHUNK};
use crate::rng::{derive_seed, rng};
use crate::schedule::check_sigma;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    TrainedDae,
    AnalyticOptimal,
    CleanInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Noising {
    Noisy,
    Clean,
}

/// Features at one noise level, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub h: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub sigma: f64,
    pub source: FeatureSource,
}

impl FeatureBatch {
    pub fn new(h: DMatrix<f64>, labels: Vec<usize>, sigma: f64, source: FeatureSource) -> Result<Self> {
        if h.nrows() != labels.len() {
            return Err(Error::LengthMismatch { what: "labels", got: labels.len(), expected: h.nrows() });
        }
        if h.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(Self { h, labels, sigma, source })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.h.ncols()
    }

    /// Number of classes implied by the largest label.
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Where features come from.
pub enum FeatureModel<'a> {
    /// The latent `h = diag(β) Uᵀ x` of a structured autoencoder.
    Dae(&'a DaeParams),
    /// The exact posterior mean `E[x0 | x_t]` itself.
    Optimal { config: &'a MolrgConfig, bases: &'a BasisSet },
}

/// Features of every sample at level `sigma`. With [`Noising::Noisy`] each
/// input is `x0 + σε` with noise seeded per chunk; with [`Noising::Clean`]
/// the model receives `x0` but still uses level-σ coefficients.
pub fn extract_features(
    model: &FeatureModel<'_>,
    dataset: &[Sample],
    sigma: f64,
    noising: Noising,
    seed: u64,
) -> Result<FeatureBatch> {
    check_sigma(sigma)?;
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let source = match (noising, model) {
        (Noising::Clean, _) => FeatureSource::CleanInput,
        (Noising::Noisy, FeatureModel::Dae(_)) => FeatureSource::TrainedDae,
        (Noising::Noisy, FeatureModel::Optimal { .. }) => FeatureSource::AnalyticOptimal,
    };
    let optimal = match model {
        FeatureModel::Optimal { config, bases } => Some(OptimalDenoiser { config, bases }),
        FeatureModel::Dae(_) => None,
    };
    let (dim, map): (usize, Box<dyn Fn(&DVector<f64>, usize) -> DVector<f64> + Sync + Send + '_>) = match model {
        FeatureModel::Dae(p) => {
            let p = *p;
            if p.n() != dataset[0].x0.len() {
                return Err(Error::ShapeMismatch("dictionary does not match the data dimension".into()));
            }
            (p.u.ncols(), Box::new(move |x, _| p.forward(x, sigma).map(|o| o.h).unwrap_or_else(|_| DVector::zeros(p.u.ncols()))))
        }
        FeatureModel::Optimal { config, .. } => (config.n, optimal.as_ref().expect("optimal model").at_level(sigma)?),
    };
    let chunks = dataset.len().div_ceil(CHUNK);
    let rows = map_indices(chunks, |c| {
        let mut r = rng(derive_seed(seed, c as u64));
        dataset[c * CHUNK..((c + 1) * CHUNK).min(dataset.len())]
            .iter()
            .map(|s| {
                let x = match noising {
                    Noising::Noisy => add_noise_with(&s.x0, sigma, &mut r),
                    Noising::Clean => s.x0.clone(),
                };
                map(&x, s.label)
            })
            .collect::<Vec<_>>()
    });
    let mut h = DMatrix::zeros(dataset.len(), dim);
    for (i, row) in rows.into_iter().flatten().enumerate() {
        h.row_mut(i).copy_from(&row.transpose());
    }
    FeatureBatch::new(h, dataset.iter().map(|s| s.label).collect(), sigma, source)
}

/// Fixed feature map applied before the linear probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureLift {
    #[default]
    Identity,
    /// Elementwise squares; a linear probe on these reads per-coordinate energy.
    Square,
    /// Features and their squares side by side.
    IdentityAndSquare,
}

impl FeatureLift {
    fn apply(self, h: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            FeatureLift::Identity => h.clone(),
            FeatureLift::Square => h.map(|v| v * v),
            FeatureLift::IdentityAndSquare => {
                let mut out = DMatrix::zeros(h.nrows(), 2 * h.ncols());
                out.columns_mut(0, h.ncols()).copy_from(h);
                out.columns_mut(h.ncols(), h.ncols()).copy_from(&h.map(|v| v * v));
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeOptions {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
    /// Rescale each lifted feature to zero mean and unit variance on the training set.
    pub standardize: bool,
    pub lift: FeatureLift,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { epochs: 500, lr: 0.1, l2: 1e-4, seed: 0, standardize: true, lift: FeatureLift::Identity }
    }
}

/// Multinomial logistic regression on (lifted, standardized) features.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    /// K × lifted-dim, acting on standardized features.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub sigma: f64,
    pub lift: FeatureLift,
    pub shift: DVector<f64>,
    pub scale: DVector<f64>,
    pub input_dim: usize,
    pub final_loss: f64,
    pub trained: bool,
}

impl ProbeModel {
    fn prepare(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = self.lift.apply(h);
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.shift[j]);
            col /= self.scale[j];
        }
        z
    }

    /// Logits, one row per sample.
    pub fn logits(&self, features: &FeatureBatch) -> Result<DMatrix<f64>> {
        if !self.trained {
            return Err(Error::UntrainedModel);
        }
        if features.dim() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "probe expects {} features, batch has {}",
                self.input_dim,
                features.dim()
            )));
        }
        let z = self.prepare(&features.h);
        let mut out = z * self.weights.transpose();
        for mut row in out.row_iter_mut() {
            row += self.bias.transpose();
        }
        Ok(out)
    }

    pub fn predict(&self, features: &FeatureBatch) -> Result<Vec<usize>> {
        let logits = self.logits(features)?;
        Ok(row_argmax(&logits))
    }
}

fn row_argmax(m: &DMatrix<f64>) -> Vec<usize> {
    m.row_iter().map(|r| argmax(&r.iter().copied().collect::<Vec<_>>())).collect()
}

fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

/// Full-batch gradient descent on the mean cross-entropy plus `l2/2 ‖W‖²`.
/// Deterministic: the seed only sets the small random initial weights.
pub fn train_probe(features: &FeatureBatch, opts: &ProbeOptions) -> Result<ProbeModel> {
    let k = features.class_count();
    let mut seen = vec![false; k];
    for &l in &features.labels {
        seen[l] = true;
    }
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(Error::SingleClassBatch);
    }
    let lifted = opts.lift.apply(&features.h);
    let (count, dim) = lifted.shape();
    let nf = count as f64;
    let mut shift = DVector::zeros(dim);
    let mut scale = DVector::from_element(dim, 1.0);
    if opts.standardize {
        for j in 0..dim {
            let col = lifted.column(j);
            let mean = col.sum() / nf;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
            shift[j] = mean;
            scale[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
    }
    let mut model = ProbeModel {
        weights: DMatrix::zeros(k, dim),
        bias: DVector::zeros(k),
        sigma: features.sigma,
        lift: opts.lift,
        shift,
        scale,
        input_dim: features.dim(),
        final_loss: f64::NAN,
        trained: false,
    };
    let z = model.prepare(&features.h);
    let mut r = rng(opts.seed);
    model.weights = DMatrix::from_fn(k, dim, |_, _| r.gen_range(-1e-3..1e-3));
    let mut onehot = DMatrix::zeros(count, k);
    for (i, &l) in features.labels.iter().enumerate() {
        onehot[(i, l)] = 1.0;
    }
    let mut loss = f64::NAN;
    for _ in 0..opts.epochs {
        let mut logits = &z * model.weights.transpose();
        let mut ce = 0.0;
        for (i, mut row) in logits.row_iter_mut().enumerate() {
            row += model.bias.transpose();
            let m = row.max();
            row.apply(|v| *v = (*v - m).exp());
            let s = row.sum();
            row /= s;
            ce -= row[features.labels[i]].max(1e-300).ln();
        }
        // logits now hold probabilities
        loss = ce / nf + 0.5 * opts.l2 * model.weights.norm_squared();
        let resid = (logits - &onehot) / nf;
        let gw = resid.transpose() * &z + &model.weights * opts.l2;
        let gb = resid.row_sum().transpose();
        model.weights -= gw * opts.lr;
        model.bias -= gb * opts.lr;
    }
    if !model.weights.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidConfig("probe diverged; lower the learning rate".into()));
    }
    model.final_loss = loss;
    model.trained = true;
    Ok(model)
}

/// Fraction of samples whose argmax logit (lowest index on ties) is the label.
pub fn eval_probe(model: &ProbeModel, features: &FeatureBatch) -> Result<f64> {
    Ok(accuracy(&model.predict(features)?, &features.labels))
}

/// Classify each test row by the class whose top-`rank` training subspace
/// captures the most energy, `argmax_k ‖V_kᵀh‖²`. Returns test accuracy.
pub fn projection_classify(test: &FeatureBatch, train: &FeatureBatch, rank: usize) -> Result<f64> {
    if test.dim() != train.dim() {
        return Err(Error::ShapeMismatch("train and test feature dimensions differ".into()));
    }
    if rank == 0 || rank > train.dim() {
        return Err(Error::RankTooLarge { rank, available: train.dim() });
    }
    let k = train.class_count().max(test.class_count());
    let mut bases = Vec::with_capacity(k);
    for c in 0..k {
        let rows: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i] == c).collect();
        if rows.is_empty() {
            return Err(Error::ClassMissing(c));
        }
        if rows.len() < rank {
            return Err(Error::RankTooLarge { rank, available: rows.len() });
        }
        bases.push(top_right_singular_vectors(&train.h.select_rows(&rows), rank));
    }
    let energies: Vec<DMatrix<f64>> = bases.iter().map(|v| (&test.h * v).map(|x| x * x)).collect();
    let pred: Vec<usize> = (0..test.len())
        .map(|i| argmax(&energies.iter().map(|e| e.row(i).sum()).collect::<Vec<_>>()))
        .collect();
    Ok(accuracy(&pred, &test.labels))
}

/// Soft-voting ensemble: average the members' logits per sample, then argmax.
/// `members[i]` must have been trained at `features[i].sigma`, and every
/// batch must describe the same samples in the same order.
pub fn ensemble_predict(members: &[ProbeModel], features: &[FeatureBatch]) -> Result<f64> {
    if members.is_empty() || members.len() != features.len() {
        return Err(Error::LevelMismatch);
    }
    for (m, f) in members.iter().zip(features) {
        if (m.sigma - f.sigma).abs() > 1e-12 * m.sigma.max(f.sigma) {
            return Err(Error::LevelMismatch);
        }
    }
    let labels = &features[0].labels;
    if features.iter().any(|f| &f.labels != labels) {
        return Err(Error::SampleMisalignment);
    }
    let mut sum: Option<DMatrix<f64>> = None;
    for (m, f) in members.iter().zip(features) {
        let l = m.logits(f)?;
        sum = Some(match sum {
            None => l,
            Some(s) if s.shape() == l.shape() => s + l,
            Some(_) => return Err(Error::LevelMismatch),
        });
    }
    let avg = sum.expect("non-empty") / members.len() as f64;
    Ok(accuracy(&row_argmax(&avg), labels))
}

/// Reassign a uniformly chosen `⌊fraction · len⌋` subset of labels to a
/// uniformly random different class.
pub fn label_noise(labels: &[usize], fraction: f64, k: usize, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!("label-noise fraction {fraction} outside [0, 1)")));
    }
    if k < 2 {
        return Err(Error::SingleClassBatch);
    }
    let mut out = labels.to_vec();
    let flips = (fraction * labels.len() as f64).floor() as usize;
    let mut r = rng(seed);
    for i in sample_indices(&mut r, labels.len(), flips) {
        let shift = r.gen_range(1..k);
        out[i] = (labels[i] + shift) % k;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molrg::{gen_bases, sample_dataset, well_separated_config};
    use crate::rng::gaussian_vector;
    use crate::schedule::SEPARATED_GRID;

    fn blobs(count: usize, offset: f64, seed: u64) -> FeatureBatch {
        let mut r = rng(seed);
        let mut h = DMatrix::zeros(count, 3);
        let mut labels = vec![];
        for i in 0..count {
            let l = i % 2;
            let mut v = gaussian_vector(3, &mut r) * 0.3;
            v[0] += if l == 0 { -offset } else { offset };
            h.row_mut(i).copy_from(&v.transpose());
            labels.push(l);
        }
        FeatureBatch::new(h, labels, 1.0, FeatureSource::CleanInput).unwrap()
    }

    #[test]
    fn separable_blobs_are_fit_exactly() {
        let b = blobs(200, 2.0, 1);
        let m = train_probe(&b, &ProbeOptions::default()).unwrap();
        assert_eq!(eval_probe(&m, &b).unwrap(), 1.0);
        assert!(m.final_loss < 0.1);
    }

    #[test]
    fn shuffled_labels_give_chance_accuracy() {
        let k = 3;
        let make = |seed: u64| {
            let mut r = rng(seed);
            let h = DMatrix::from_fn(3000, 4, |_, _| r.gen::<f64>());
            let labels = (0..3000).map(|_| r.gen_range(0..k)).collect();
            FeatureBatch::new(h, labels, 1.0, FeatureSource::CleanInput).unwrap()
        };
        let m = train_probe(&make(1), &ProbeOptions::default()).unwrap();
        let acc = eval_probe(&m, &make(2)).unwrap();
        let se = (1.0 / 3.0 * 2.0 / 3.0 / 3000.0f64).sqrt();
        assert!((acc - 1.0 / 3.0).abs() < 3.0 * se, "acc {acc}");
    }

    #[test]
    fn constant_model_scores_one_over_k() {
        let b = blobs(100, 2.0, 3);
        let mut m = train_probe(&b, &ProbeOptions::default()).unwrap();
        m.weights.fill(0.0);
        m.bias.fill(0.0);
        assert_eq!(eval_probe(&m, &b).unwrap(), 0.5);
    }

    #[test]
    fn single_class_and_shape_errors() {
        let mut b = blobs(10, 1.0, 4);
        let m = train_probe(&b, &ProbeOptions::default()).unwrap();
        b.labels.iter_mut().for_each(|l| *l = 0);
        assert_eq!(train_probe(&b, &ProbeOptions::default()), Err(Error::SingleClassBatch));
        let wide = FeatureBatch::new(DMatrix::zeros(10, 5), vec![0; 10], 1.0, FeatureSource::CleanInput).unwrap();
        assert!(matches!(eval_probe(&m, &wide), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn projection_classifier_on_disjoint_subspaces() {
        let mut r = rng(5);
        let make = |r: &mut crate::rng::Rng| {
            let mut h = DMatrix::zeros(300, 6);
            let mut labels = vec![];
            for i in 0..300 {
                let l = i % 3;
                let v = gaussian_vector(2, r);
                h[(i, 2 * l)] = v[0];
                h[(i, 2 * l + 1)] = v[1];
                labels.push(l);
            }
            FeatureBatch::new(h, labels, 1.0, FeatureSource::CleanInput).unwrap()
        };
        let (train, test) = (make(&mut r), make(&mut r));
        assert_eq!(projection_classify(&test, &train, 2).unwrap(), 1.0);
        assert!(matches!(projection_classify(&test, &train, 7), Err(Error::RankTooLarge { .. })));
    }

    #[test]
    fn projection_classifier_matches_energy_comparison_on_clean_data() {
        let cfg = MolrgConfig::uniform(30, 3, 4, 0.2);
        let bases = gen_bases(&cfg, 6).unwrap();
        let stack = |s: &[Sample]| {
            let mut h = DMatrix::zeros(s.len(), cfg.n);
            for (i, x) in s.iter().enumerate() {
                h.row_mut(i).copy_from(&x.x0.transpose());
            }
            FeatureBatch::new(h, s.iter().map(|x| x.label).collect(), 0.0, FeatureSource::CleanInput).unwrap()
        };
        let train = stack(&sample_dataset(&cfg, &bases, 6000, 7).unwrap());
        let test_samples = sample_dataset(&cfg, &bases, 6000, 8).unwrap();
        let acc = projection_classify(&stack(&test_samples), &train, 4).unwrap();
        // Direct simulation: the own-class energy is ‖a‖², a competitor's is δ²‖e_block‖².
        let mut r = rng(9);
        let trials = 200_000;
        let mut wins = 0;
        for _ in 0..trials {
            let own = gaussian_vector(4, &mut r).norm_squared();
            let rivals: Vec<f64> = (0..2).map(|_| 0.04 * gaussian_vector(4, &mut r).norm_squared()).collect();
            if rivals.iter().all(|e| own > *e) {
                wins += 1;
            }
        }
        let oracle = wins as f64 / trials as f64;
        let se = (oracle * (1.0 - oracle) / 6000.0).sqrt();
        assert!((acc - oracle).abs() < 4.0 * se + 2e-3, "acc {acc} oracle {oracle}");
    }

    #[test]
    fn projection_classifier_ignores_rescaling() {
        let b = blobs(120, 1.0, 10);
        let mut scaled = b.clone();
        for (i, mut row) in scaled.h.row_iter_mut().enumerate() {
            row *= 1.0 + i as f64;
        }
        assert_eq!(projection_classify(&b, &b, 1).unwrap(), projection_classify(&scaled, &b, 1).unwrap());
    }

    #[test]
    fn ensemble_of_identical_members_matches_single() {
        let train = blobs(200, 0.5, 11);
        let test = blobs(200, 0.5, 12);
        let m = train_probe(&train, &ProbeOptions::default()).unwrap();
        let single = eval_probe(&m, &test).unwrap();
        let members = vec![m.clone(); 5];
        let feats = vec![test.clone(); 5];
        assert_eq!(ensemble_predict(&members, &feats).unwrap(), single);
    }

    #[test]
    fn ensemble_checks_alignment() {
        let b = blobs(50, 1.0, 13);
        let m = train_probe(&b, &ProbeOptions::default()).unwrap();
        let mut other = b.clone();
        other.labels.swap(0, 1);
        assert_eq!(ensemble_predict(&[m.clone(), m.clone()], &[b.clone(), other]), Err(Error::SampleMisalignment));
        let mut shifted = b.clone();
        shifted.sigma = 2.0;
        assert_eq!(ensemble_predict(&[m.clone(), m], &[b, shifted]), Err(Error::LevelMismatch));
    }

    #[test]
    fn uniform_member_does_not_move_the_vote() {
        let train = blobs(200, 0.4, 14);
        let test = blobs(400, 0.4, 15);
        let models: Vec<ProbeModel> = (0..4)
            .map(|s| train_probe(&blobs(200, 0.4, 20 + s), &ProbeOptions::default()).unwrap())
            .collect();
        let mut flat = train_probe(&train, &ProbeOptions::default()).unwrap();
        flat.weights.fill(0.0);
        flat.bias.fill(0.0);
        let four = ensemble_predict(&models, &vec![test.clone(); 4]).unwrap();
        let mut five_members = models.clone();
        five_members.push(flat);
        let five = ensemble_predict(&five_members, &vec![test; 5]).unwrap();
        assert_eq!(four, five);
    }

    #[test]
    fn label_noise_counts() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        assert_eq!(label_noise(&labels, 0.0, 2, 1).unwrap(), labels);
        let noisy = label_noise(&labels, 0.5, 2, 1).unwrap();
        assert_eq!(noisy.iter().zip(&labels).filter(|(a, b)| a != b).count(), 500);
        let noisy3 = label_noise(&labels, 0.2, 3, 2).unwrap();
        assert_eq!(noisy3.iter().zip(&labels).filter(|(a, b)| a != b).count(), 200);
        assert!(label_noise(&labels, 1.0, 2, 1).is_err());
    }

    #[test]
    fn features_are_deterministic_and_gating_free_at_unit_delta() {
        let cfg = MolrgConfig::uniform(12, 2, 3, 1.0);
        let bases = gen_bases(&cfg, 16).unwrap();
        let data = sample_dataset(&cfg, &bases, 40, 17).unwrap();
        let p = DaeParams::from_bases(&bases, 1.0);
        let model = FeatureModel::Dae(&p);
        let a = extract_features(&model, &data, 0.3, Noising::Clean, 3).unwrap();
        let b = extract_features(&model, &data, 0.3, Noising::Clean, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source, FeatureSource::CleanInput);
        let zeta = 1.0 / (1.0 + 0.09);
        for (i, s) in data.iter().enumerate() {
            let expect = p.u.transpose() * &s.x0 * zeta;
            assert!((a.h.row(i).transpose() - expect).norm() < 1e-12);
        }
        let noisy = extract_features(&model, &data, 0.3, Noising::Noisy, 3).unwrap();
        assert_eq!(noisy, extract_features(&model, &data, 0.3, Noising::Noisy, 3).unwrap());
        assert_ne!(noisy.h, a.h);
    }

    #[test]
    fn well_separated_means_are_perfectly_probed_at_low_noise() {
        let base = MolrgConfig::uniform(30, 2, 5, 0.2);
        let bases = gen_bases(&base, 18).unwrap();
        let cfg = well_separated_config(&base, &bases, 10.0).unwrap();
        let train = sample_dataset(&cfg, &bases, 1000, 19).unwrap();
        let test = sample_dataset(&cfg, &bases, 1000, 20).unwrap();
        let model = FeatureModel::Optimal { config: &cfg, bases: &bases };
        let sigma = SEPARATED_GRID[0];
        let ftrain = extract_features(&model, &train, sigma, Noising::Noisy, 1).unwrap();
        let ftest = extract_features(&model, &test, sigma, Noising::Noisy, 2).unwrap();
        let m = train_probe(&ftrain, &ProbeOptions::default()).unwrap();
        assert_eq!(eval_probe(&m, &ftest).unwrap(), 1.0);
    }
}
