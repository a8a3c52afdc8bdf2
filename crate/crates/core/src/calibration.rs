//! Uniformity checks for stage p-values.
//!
//! A calibration run simulates datasets from the law a stage's check is
//! referenced against, runs the check on each, and tests the resulting
//! p-values against `U(0, 1)` with a one-sample Kolmogorov-Smirnov test.

use rayon::prelude::*;

use crate::checks::{check_model, check_pi1, check_pi2, check_pi2_star, stage_stream, Pi1Outcome};
use crate::discrepancy::Discrepancy;
use crate::error::{Error, Result};
use crate::model::{GroupedDataset, HyperPrior, SamplingModel, Stage};
use crate::rng::{child_seed, RngStream};
use crate::sampler::{sample_dataset, sample_hyper};

/// One-sample KS statistic against the `U(0, 1)` CDF and its asymptotic
/// p-value `Q(sqrt(m) D)`.
pub fn ks_statistic(sample: &[f64]) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(&x) = sample.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::OutOfRangeValue(x));
    }
    let mut xs = sample.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let m = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let above = (i + 1) as f64 / m - x;
        let below = x - i as f64 / m;
        acc.max(above).max(below)
    });
    Ok((d, kolmogorov_sf(m.sqrt() * d)))
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    const TERM_TOL: f64 = 1e-12;
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // P(K <= l) = sqrt(2 pi)/l * sum_k exp(-(2k-1)^2 pi^2 / (8 l^2))
        let a = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1.. {
            let j = (2 * k - 1) as f64;
            let term = (a * j * j).exp();
            sum += term;
            if term < TERM_TOL {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        // P(K > l) = 2 sum_k (-1)^(k-1) exp(-2 k^2 l^2)
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1.. {
            let k = k as f64;
            let term = (-2.0 * k * k * lambda * lambda).exp();
            sum += sign * term;
            sign = -sign;
            if term < TERM_TOL {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Law the synthetic datasets are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truth {
    /// Fixed hyperparameter; valid for the `model` and `pi2` stages.
    Fixed { mu: f64, tau2: f64 },
    /// Hyperparameter drawn from a proper hyperprior for every dataset. For
    /// `pi1` and `pi2_star` this is also the prior under check.
    Prior(HyperPrior),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub stage: Stage,
    pub pvalues: Vec<f64>,
    pub ks_distance: f64,
    pub ks_pvalue: f64,
    pub datasets: usize,
    pub n_inner: usize,
}

#[derive(Debug, Clone)]
pub struct CalibrationSpec<'a> {
    pub stage: Stage,
    pub model: SamplingModel,
    pub truth: Truth,
    pub discrepancy: &'a Discrepancy,
    pub datasets: usize,
    pub n_inner: usize,
}

/// Simulates `datasets` replicates and collects the stage's p-values.
///
/// Replicate `m` draws its data from `stream.offset(m)` and runs its check
/// under the child seed `child_seed(stream.seed, m)`.
pub fn calibrate_stage(spec: &CalibrationSpec<'_>, stream: RngStream) -> Result<CalibrationResult> {
    if spec.datasets == 0 {
        return Err(Error::EmptySample);
    }
    let prior =
        match (spec.stage, spec.truth) {
            (Stage::Pi1 | Stage::Pi2Star, Truth::Fixed { .. }) => {
                return Err(Error::invalid(
                    "truth",
                    format!("stage {} needs a proper hyperprior as truth", spec.stage),
                ))
            }
            (_, Truth::Prior(p)) if !p.is_proper() => return Err(Error::invalid(
                "truth",
                "an improper hyperprior never conflicts with the data and cannot generate datasets",
            )),
            (_, Truth::Prior(p)) => Some(p),
            (_, Truth::Fixed { mu, tau2 }) => {
                if !(mu.is_finite() && tau2.is_finite() && tau2 >= 0.0) {
                    return Err(Error::invalid(
                        "truth",
                        format!("need finite mu and tau2 >= 0, got ({mu}, {tau2})"),
                    ));
                }
                None
            }
        };
    let model = &spec.model;
    let ids: Vec<String> = (0..model.groups()).map(|i| format!("g{i}")).collect();
    let pvalues = (0..spec.datasets as u64)
        .into_par_iter()
        .map(|m| {
            let mut rng = stream.offset(m).rng();
            let (mu, tau2) = match (spec.truth, prior) {
                (Truth::Fixed { mu, tau2 }, _) => (mu, tau2),
                (_, Some(p)) => sample_hyper(&p, &mut rng)?,
                _ => unreachable!(),
            };
            let data = GroupedDataset::from_groups(
                ids.clone(),
                sample_dataset(mu, tau2, model, &mut rng),
            )?;
            let inner = stage_stream(child_seed(stream.seed, m), spec.stage);
            let h = spec.discrepancy;
            let result = match spec.stage {
                Stage::Model => check_model(&data, model, h, spec.n_inner, inner)?,
                Stage::Pi2 => check_pi2(&data, model, h, spec.n_inner, inner)?,
                Stage::Pi2Star => {
                    check_pi2_star(&data, model, &prior.unwrap(), h, spec.n_inner, inner)?
                }
                Stage::Pi1 => {
                    match check_pi1(&data, model, &prior.unwrap(), h, spec.n_inner, inner)? {
                        Pi1Outcome::Checked(r) => r,
                        Pi1Outcome::SkippedImproper => unreachable!("truth prior is proper"),
                    }
                }
            };
            if result.degenerate {
                return Err(Error::DegenerateDiscrepancy(result.discrepancy));
            }
            Ok(result.p)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (ks_distance, ks_pvalue) = ks_statistic(&pvalues)?;
    Ok(CalibrationResult {
        stage: spec.stage,
        pvalues,
        ks_distance,
        ks_pvalue,
        datasets: spec.datasets,
        n_inner: spec.n_inner,
    })
}
