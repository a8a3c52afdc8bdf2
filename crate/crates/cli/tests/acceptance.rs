//! Acceptance suite. Each test prints one `PASS`/`FAIL` line (visible with
//! `--nocapture`) and then asserts, so a failure also fails `cargo test`.
//!
//! Reference values come from oracles written here, not from the library:
//! closed-form moments, chi-square and normal tails, a quadrature over the
//! constraint circle, and brute-force samplers.

use std::f64::consts::{PI, SQRT_2};
use std::process::Command;

use priorcheck::calibration::{calibrate_stage, CalibrationSpec, Truth};
use priorcheck::sampler::sample_t_given_v;
use priorcheck::{
    check_model, check_pi2, check_simple, helmert_basis, run_protocol, CheckReport, Decision,
    Discrepancy, GroupedDataset, HyperPrior, HyperStat, ProtocolConfig, RngStream, SamplingModel,
    Stage, StageStatus,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn verdict(id: u32, title: &str, pass: bool, detail: String) {
    println!(
        "criterion {id} [{}] {title}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

fn dataset(rows: Vec<Vec<f64>>) -> GroupedDataset {
    GroupedDataset::from_groups((0..rows.len()).map(|i| format!("g{i}")).collect(), rows).unwrap()
}

fn centred_normal_rows(rng: &mut impl Rng, groups: usize, n: usize) -> Vec<Vec<f64>> {
    (0..groups)
        .map(|_| {
            let row: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let m = row.iter().sum::<f64>() / n as f64;
            row.into_iter().map(|x| x - m).collect()
        })
        .collect()
}

fn with_means(means: &[f64], residuals: &[Vec<f64>]) -> GroupedDataset {
    dataset(
        means
            .iter()
            .zip(residuals)
            .map(|(m, r)| r.iter().map(|x| m + x).collect())
            .collect(),
    )
}

#[test]
fn criterion_1_sphere_constraints() {
    let mut rng = StdRng::seed_from_u64(1);
    let mut worst_s: f64 = 0.0;
    let mut worst_q: f64 = 0.0;
    let mut violations = 0usize;
    for config in 0..200 {
        let groups = rng.random_range(2..=50);
        let s = rng.random_range(-100.0..100.0);
        let spread = if config % 20 == 0 {
            0.0
        } else {
            10f64.powf(rng.random_range(-6.0..4.0))
        };
        let q = s * s / groups as f64 + spread;
        let v = HyperStat::new(s, q, groups).unwrap();
        let basis = helmert_basis(groups).unwrap();
        let stream = RngStream::new(config, 0);
        for k in 0..1000 {
            let y = sample_t_given_v(&v, &basis, &mut stream.offset(k).rng()).unwrap();
            let es = (y.iter().sum::<f64>() - s).abs() / s.abs().max(1.0);
            let eq = (y.iter().map(|x| x * x).sum::<f64>() - q).abs() / q.max(1.0);
            worst_s = worst_s.max(es);
            worst_q = worst_q.max(eq);
            if es > 1e-9 || eq > 1e-9 {
                violations += 1;
            }
        }
    }
    verdict(
        1,
        "sphere sampler constraints",
        violations == 0,
        format!("200 configs x 1000 draws, violations {violations}, worst relative errors sum {worst_s:.2e} sumsq {worst_q:.2e}"),
    );
}

struct Moments {
    mean: [f64; 3],
    var: [f64; 3],
    var_se: [f64; 3],
}

fn moments(draws: &[[f64; 3]]) -> Moments {
    let n = draws.len() as f64;
    let mut m = Moments {
        mean: [0.0; 3],
        var: [0.0; 3],
        var_se: [0.0; 3],
    };
    for c in 0..3 {
        let mean = draws.iter().map(|y| y[c]).sum::<f64>() / n;
        let m2 = draws.iter().map(|y| (y[c] - mean).powi(2)).sum::<f64>() / n;
        let m4 = draws.iter().map(|y| (y[c] - mean).powi(4)).sum::<f64>() / n;
        m.mean[c] = mean;
        m.var[c] = m2 * n / (n - 1.0);
        m.var_se[c] = ((m4 - m2 * m2) / n).sqrt();
    }
    m
}

#[test]
fn criterion_2_sphere_law() {
    const N: usize = 100_000;
    let v = HyperStat::new(3.0, 5.0, 3).unwrap();
    let basis = helmert_basis(3).unwrap();
    let stream = RngStream::new(2, 0);
    let lib: Vec<[f64; 3]> = (0..N as u64)
        .map(|k| {
            let y = sample_t_given_v(&v, &basis, &mut stream.offset(k).rng()).unwrap();
            [y[0], y[1], y[2]]
        })
        .collect();

    // Independent sampler: project a standard Gaussian onto the plane
    // orthogonal to 1 and rescale it to radius sqrt(q - s^2/I) = sqrt(2).
    let mut rng = StdRng::seed_from_u64(22);
    let alt: Vec<[f64; 3]> = (0..N)
        .map(|_| loop {
            let z: [f64; 3] = [(); 3].map(|_| rng.sample(StandardNormal));
            let zbar = (z[0] + z[1] + z[2]) / 3.0;
            let c = z.map(|x| x - zbar);
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-300 {
                break c.map(|x| 1.0 + SQRT_2 * x / norm);
            }
        })
        .collect();

    let mean_tol = 4.0 * ((2.0 / 3.0) / N as f64).sqrt();
    let (a, b) = (moments(&lib), moments(&alt));
    let mut pass = true;
    let mut detail = Vec::new();
    for c in 0..3 {
        let ok_lib = (a.mean[c] - 1.0).abs() <= mean_tol
            && (a.var[c] - 2.0 / 3.0).abs() <= 4.0 * a.var_se[c];
        let ok_alt = (b.mean[c] - 1.0).abs() <= mean_tol
            && (b.var[c] - 2.0 / 3.0).abs() <= 4.0 * b.var_se[c];
        let combined = (a.var_se[c].powi(2) + b.var_se[c].powi(2)).sqrt();
        let ok_cross = (a.var[c] - b.var[c]).abs() <= 4.0 * combined
            && (a.mean[c] - b.mean[c]).abs() <= mean_tol * SQRT_2;
        pass &= ok_lib && ok_alt && ok_cross;
        detail.push(format!(
            "y{c}: mean {:.4} var {:.4} (alt {:.4}, {:.4})",
            a.mean[c], a.var[c], b.mean[c], b.var[c]
        ));
    }
    verdict(
        2,
        "sphere sampler law at I=3, V=(3,5)",
        pass,
        format!(
            "{}; mean tol {mean_tol:.4}, var se {:.4}",
            detail.join("; "),
            a.var_se[0]
        ),
    );
}

#[test]
fn criterion_3_pi2_uniformity() {
    let skew = Discrepancy::builtin("skew").unwrap();
    let spec = CalibrationSpec {
        stage: Stage::Pi2,
        model: SamplingModel::new(1.0, 3, 5).unwrap(),
        truth: Truth::Fixed { mu: 0.0, tau2: 1.0 },
        discrepancy: &skew,
        datasets: 2000,
        n_inner: 999,
    };
    let result = calibrate_stage(&spec, RngStream::new(3, 0)).unwrap();
    let critical = 1.6276236 / 2000f64.sqrt() + 0.001;
    verdict(
        3,
        "pi2 p-value uniformity (M=2000, N=999, skew)",
        result.ks_distance < critical,
        format!(
            "KS distance {:.5} vs critical {critical:.5} (KS p {:.3})",
            result.ks_distance, result.ks_pvalue
        ),
    );
}

#[test]
fn criterion_4_model_check_chi_square() {
    const N: usize = 100_000;
    let (groups, n) = (4, 5);
    let chi = ChiSquared::new(16.0).unwrap();
    let model = SamplingModel::new(1.0, n, groups).unwrap();
    let h = Discrepancy::builtin("chisq_total").unwrap();
    let mut rng = StdRng::seed_from_u64(4);
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, target) in [0.01, 0.25, 0.5, 0.75, 0.99].into_iter().enumerate() {
        // Random residual pattern rescaled so its chi-square sits at the target quantile.
        let rows = centred_normal_rows(&mut rng, groups, n);
        let ss: f64 = rows.iter().flatten().map(|r| r * r).sum();
        let k = (chi.inverse_cdf(1.0 - target) / ss).sqrt();
        let rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|x| k * x).collect())
            .collect();
        let data = with_means(&[0.3, -1.2, 2.0, 0.0], &rows);
        let statistic: f64 = rows.iter().flatten().map(|r| r * r).sum();
        let exact = chi.sf(statistic);

        let r = check_model(&data, &model, &h, N, RngStream::new(40 + i as u64, 0)).unwrap();
        let ok = (r.p - exact).abs() <= 4.0 * r.mc_stderr;
        pass &= ok;
        detail.push(format!("{exact:.4}->{:.4}(se {:.4})", r.p, r.mc_stderr));
    }
    verdict(
        4,
        "model check vs chi-square(16) tail",
        pass,
        detail.join(", "),
    );
}

fn skew_oracle(y: &[f64; 3]) -> f64 {
    let m = (y[0] + y[1] + y[2]) / 3.0;
    let m2 = y.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 3.0;
    let m3 = y.iter().map(|x| (x - m).powi(3)).sum::<f64>() / 3.0;
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

#[test]
fn criterion_5_quadrature_at_three_groups() {
    const NODES: usize = 10_000;
    const N: usize = 20_000;
    let model = SamplingModel::new(1.0, 2, 3).unwrap();
    let h = Discrepancy::builtin("skew").unwrap();
    // Orthonormal basis of the plane orthogonal to 1, unrelated to Helmert.
    let e1 = [2.0 / 6f64.sqrt(), -1.0 / 6f64.sqrt(), -1.0 / 6f64.sqrt()];
    let e2 = [0.0, 1.0 / SQRT_2, -1.0 / SQRT_2];

    let fixtures: [[f64; 3]; 5] = [
        [0.0, 0.1, 1.0],
        [0.0, 1.0, 2.0],
        [0.0, 0.9, 1.0],
        [0.0, 0.3, 1.0],
        [-1.0, 0.2, 0.5],
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, means) in fixtures.iter().enumerate() {
        let centre = means.iter().sum::<f64>() / 3.0;
        let radius = means
            .iter()
            .map(|x| (x - centre).powi(2))
            .sum::<f64>()
            .sqrt();
        let observed = skew_oracle(means);
        let tol = 1e-12 * observed.abs().max(1.0);
        // Periodic trapezoid rule: equal weights at equally spaced nodes.
        let hits = (0..NODES)
            .filter(|&j| {
                let phi = 2.0 * PI * j as f64 / NODES as f64;
                let (c, s) = (phi.cos(), phi.sin());
                let y = [0, 1, 2].map(|k| centre + radius * (c * e1[k] + s * e2[k]));
                skew_oracle(&y) >= observed - tol
            })
            .count();
        let quad = hits as f64 / NODES as f64;

        let data = with_means(means, &vec![vec![-0.5, 0.5]; 3]);
        let r = check_pi2(&data, &model, &h, N, RngStream::new(50 + i as u64, 0)).unwrap();
        let tol = (4.0 * r.mc_stderr).max(0.01);
        let ok = (r.p - quad).abs() <= tol;
        pass &= ok;
        detail.push(format!("{quad:.4}->{:.4}", r.p));
    }
    verdict(
        5,
        "pi2 skew vs quadrature on the I=3 circle",
        pass,
        detail.join(", "),
    );
}

#[test]
fn criterion_6_pi2_ignores_hyperprior() {
    let mut rng = StdRng::seed_from_u64(6);
    let rows = centred_normal_rows(&mut rng, 6, 4);
    let rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|x| x * 0.8).collect())
        .collect();
    let data = with_means(&[0.4, -0.9, 1.3, 0.1, -0.2, 0.7], &rows);
    let model = SamplingModel::for_dataset(1.0, &data).unwrap();
    let config = ProtocolConfig {
        n_draws: 10_000,
        seed: 606,
        ..ProtocolConfig::default()
    };
    let priors = [
        HyperPrior::ImproperFlat,
        HyperPrior::normal_inv_gamma(0.0, 1.0, 2.0, 1.0).unwrap(),
        HyperPrior::normal_inv_gamma(50.0, 0.01, 10.0, 0.5).unwrap(),
        HyperPrior::normal_inv_gamma(-3.0, 100.0, 1.5, 20.0).unwrap(),
    ];
    let records: Vec<_> = priors
        .iter()
        .map(|prior| {
            run_protocol(&data, &model, prior, &config)
                .stage(Stage::Pi2)
                .unwrap()
                .clone()
        })
        .collect();
    let base = &records[0];
    let bits = |r: &priorcheck::StageRecord| {
        r.result
            .as_ref()
            .map(|p| (p.p.to_bits(), p.observed_h.to_bits(), p.mc_stderr.to_bits()))
    };
    let identical = records.iter().all(|r| r == base && bits(r) == bits(base));
    verdict(
        6,
        "pi2 record independent of the hyperprior",
        identical && base.status == StageStatus::Run,
        format!(
            "status {}, p {:?}, identical across 4 priors: {identical}",
            base.status.name(),
            base.result.as_ref().map(|r| r.p)
        ),
    );
}

#[test]
fn criterion_7_simple_check() {
    const N: usize = 1_000_000;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (n, sigma2, mu0, tau0sq) = (4, 2.0, 1.0, 0.5);
    let scale = (tau0sq + sigma2 / n as f64).sqrt();
    let mut rng = StdRng::seed_from_u64(7);
    let mut pass = true;
    let mut detail = Vec::new();
    for z in [0.0, 1.0, 1.96, 3.0] {
        let xbar = mu0 + z * scale;
        let p = check_simple(xbar, n, sigma2, mu0, tau0sq).unwrap();
        let cdf = 2.0 * (1.0 - normal.cdf(z));
        // Brute force: prior predictive draws of the sample mean.
        let hits = (0..N)
            .filter(|_| {
                let theta = mu0 + tau0sq.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let mean =
                    theta + (sigma2 / n as f64).sqrt() * rng.sample::<f64, _>(StandardNormal);
                (mean - mu0).abs() >= (xbar - mu0).abs()
            })
            .count();
        let mc = hits as f64 / N as f64;
        let tol = 4.0 * (p * (1.0 - p) / N as f64).sqrt();
        let ok = (p - mc).abs() <= tol && (p - cdf).abs() <= 1e-9;
        pass &= ok;
        detail.push(format!("z={z}: {p:.5} cdf {cdf:.5} mc {mc:.5}"));
    }
    verdict(7, "closed-form single-mean check", pass, detail.join(", "));
}

fn status(report: &CheckReport, stage: Stage) -> &'static str {
    report.stage(stage).unwrap().status.name()
}

#[test]
fn criterion_8_gating_and_skips() {
    let mut rng = StdRng::seed_from_u64(8);
    let base = centred_normal_rows(&mut rng, 5, 4);
    let means = [0.2, -0.5, 1.0, 0.3, -0.1];
    let config = ProtocolConfig {
        n_draws: 5_000,
        seed: 88,
        ..ProtocolConfig::default()
    };
    let prior = HyperPrior::normal_inv_gamma(0.0, 4.0, 3.0, 2.0).unwrap();

    // Residual scale inflated fourfold against sigma2 = 1.
    let inflated: Vec<Vec<f64>> = base
        .iter()
        .map(|r| r.iter().map(|x| 4.0 * x).collect())
        .collect();
    let data = with_means(&means, &inflated);
    let model = SamplingModel::for_dataset(1.0, &data).unwrap();
    let gated = run_protocol(&data, &model, &prior, &config);
    let model_rec = gated.stage(Stage::Model).unwrap();
    let gated_ok = model_rec.decision == Decision::EvidenceOfConflict
        && status(&gated, Stage::Pi2) == "gated_not_run"
        && status(&gated, Stage::Pi1) == "gated_not_run"
        && !gated.inference_ready;

    // Residuals rescaled to chi-square 15 on 15 degrees of freedom, so the
    // model check passes; the flat prior is never checked.
    let ss: f64 = base.iter().flatten().map(|x| x * x).sum();
    let k = (15.0 / ss).sqrt();
    let calm: Vec<Vec<f64>> = base
        .iter()
        .map(|r| r.iter().map(|x| k * x).collect())
        .collect();
    let data = with_means(&means, &calm);
    let flat = run_protocol(&data, &model, &HyperPrior::ImproperFlat, &config);
    let skip_ok = status(&flat, Stage::Model) == "run"
        && flat.stage(Stage::Model).unwrap().decision == Decision::NoEvidence
        && status(&flat, Stage::Pi1) == "skipped_improper";

    verdict(
        8,
        "protocol gating and improper-prior skip",
        gated_ok && skip_ok,
        format!(
            "inflated: model p {:.5}, pi2 {}, pi1 {}, inference_ready {}; flat prior: model {} p {:.3}, pi2 {}, pi1 {}",
            model_rec.result.as_ref().unwrap().p,
            status(&gated, Stage::Pi2),
            status(&gated, Stage::Pi1),
            gated.inference_ready,
            status(&flat, Stage::Model),
            flat.stage(Stage::Model).unwrap().result.as_ref().unwrap().p,
            status(&flat, Stage::Pi2),
            status(&flat, Stage::Pi1),
        ),
    );
}

#[test]
fn criterion_9_thread_count_does_not_change_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let config = dir.path().join("config.json");
    let mut csv = String::from("group,value\n");
    let mut rng = StdRng::seed_from_u64(9);
    for g in 0..7 {
        for _ in 0..3 {
            let x: f64 = g as f64 * 0.3 + rng.sample::<f64, _>(StandardNormal);
            csv.push_str(&format!("school{g},{x}\n"));
        }
    }
    std::fs::write(&data, csv).unwrap();
    std::fs::write(
        &config,
        r#"{"sigma2": 1.0, "n_draws": 20000, "seed": 9,
            "hyperprior": {"type": "normal_inv_gamma", "m0": 0, "s0sq": 10, "a0": 3, "b0": 2}}"#,
    )
    .unwrap();

    let outputs: Vec<Vec<u8>> = [1, 4, 16]
        .iter()
        .map(|threads| {
            let out = Command::new(env!("CARGO_BIN_EXE_priorcheck"))
                .args(["run", "--data"])
                .arg(&data)
                .arg("--config")
                .arg(&config)
                .args(["--threads", &threads.to_string()])
                .env_remove("PRIORCHECK_THREADS")
                .output()
                .unwrap();
            assert!(
                out.status.success(),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
            out.stdout
        })
        .collect();
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    let report =
        priorcheck::io::parse_report_json(std::str::from_utf8(&outputs[0]).unwrap()).unwrap();
    let all_run = report
        .stages
        .iter()
        .filter(|r| r.status == StageStatus::Run)
        .count();
    verdict(
        9,
        "report bytes identical for --threads 1, 4, 16",
        identical && !outputs[0].is_empty(),
        format!(
            "{} bytes each, identical: {identical}, stages run: {all_run}",
            outputs[0].len()
        ),
    );
}
