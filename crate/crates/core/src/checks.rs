//! Staged conflict checks and the ordering protocol.
//!
//! Each check compares an observed discrepancy with draws from the
//! corresponding reference law:
//!
//! | stage      | reference law                                   |
//! |------------|-------------------------------------------------|
//! | `model`    | residuals given the group means                 |
//! | `pi2`      | group means given `V` (uniform on a sphere)     |
//! | `pi1`      | `V` under the prior predictive of the hyperprior |
//! | `pi2_star` | group means under the marginal prior predictive  |
//!
//! Reference draw `k` of a check rooted at stream `r` is generated from
//! `r.offset(k)`, so p-values do not depend on the number of worker threads.

use log::warn;
use rayon::prelude::*;

use crate::discrepancy::{Discrepancy, Space};
use crate::error::{Error, Result};
use crate::model::{
    CheckReport, Decision, GroupedDataset, HyperPrior, PValueResult, SamplingModel, Stage,
    StageRecord, StageStatus, DEFAULT_ALPHA,
};
use crate::numeric::mean_and_variance;
use crate::rng::{RngStream, STAGE_STRIDE};
use crate::sampler::{
    helmert_basis, sample_hyper, sample_residual_matrix, sample_t_given_hyper, sample_t_given_v,
    sample_v_given_hyper,
};
use crate::sufficiency::{compute_residuals, compute_t, compute_v};

/// Draws within this relative distance below the observed value count as
/// ties, and ties count as exceedances.
pub const TIE_TOL: f64 = 1e-12;

/// Reference draws whose standard deviation is below this fraction of
/// their magnitude are treated as constant.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Monte Carlo upper-tail p-value with the add-one correction:
/// `p = (1 + #{k : draws[k] >= observed}) / (N + 1)`.
pub fn mc_pvalue(
    observed_h: f64,
    draws: &[f64],
    discrepancy: &str,
    seed: u64,
) -> Result<PValueResult> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if let Some(k) = draws.iter().position(|d| !d.is_finite()) {
        return Err(Error::NonFiniteDraw(k));
    }
    let threshold = observed_h - TIE_TOL * observed_h.abs().max(1.0);
    let exceed = draws.iter().filter(|&&d| d >= threshold).count();
    let n = draws.len();
    let p = (1 + exceed) as f64 / (n + 1) as f64;
    let (mean, var) = mean_and_variance(draws);
    let degenerate = var.sqrt() <= DEGENERACY_TOL * mean.abs().max(1.0);
    if degenerate {
        warn!("discrepancy `{discrepancy}` is constant across {n} reference draws");
    }
    Ok(PValueResult {
        p,
        n_draws: n,
        seed,
        mc_stderr: (p * (1.0 - p) / n as f64).sqrt(),
        discrepancy: discrepancy.to_owned(),
        observed_h,
        degenerate,
    })
}

fn check_shape(data: &GroupedDataset, model: &SamplingModel) -> Result<()> {
    if data.groups() != model.groups() || data.per_group() != model.per_group() {
        return Err(Error::invalid(
            "model",
            format!(
                "model shape {}x{} does not match data shape {}x{}",
                model.groups(),
                model.per_group(),
                data.groups(),
                data.per_group()
            ),
        ));
    }
    Ok(())
}

fn check_draws(n_draws: usize) -> Result<()> {
    if n_draws == 0 {
        Err(Error::EmptyDraws)
    } else {
        Ok(())
    }
}

/// Sampling-model check against the residual law given the group means.
pub fn check_model(
    data: &GroupedDataset,
    model: &SamplingModel,
    h: &Discrepancy,
    n_draws: usize,
    stream: RngStream,
) -> Result<PValueResult> {
    h.expect_space(Space::Residuals)?;
    check_shape(data, model)?;
    check_draws(n_draws)?;
    if model.per_group() < 2 {
        return Err(Error::NoResidualInformation);
    }
    let sigma2 = model.sigma2();
    let t = compute_t(data);
    let observed = h.eval_residuals(&compute_residuals(data, &t), sigma2);
    let draws: Vec<f64> = (0..n_draws as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream.offset(k).rng();
            h.eval_residuals(&sample_residual_matrix(model, &mut rng), sigma2)
        })
        .collect();
    mc_pvalue(observed, &draws, h.name(), stream.seed)
}

/// Second-level check against the group means' law given `V`.
///
/// Takes no hyperprior: the reference law does not depend on it.
pub fn check_pi2(
    data: &GroupedDataset,
    model: &SamplingModel,
    h: &Discrepancy,
    n_draws: usize,
    stream: RngStream,
) -> Result<PValueResult> {
    h.expect_space(Space::Means)?;
    check_shape(data, model)?;
    check_draws(n_draws)?;
    let t = compute_t(data);
    let v = compute_v(&t)?;
    let basis = helmert_basis(v.groups())?;
    let observed = h.eval_means(t.means());
    let draws = (0..n_draws as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream.offset(k).rng();
            sample_t_given_v(&v, &basis, &mut rng).map(|y| h.eval_means(&y))
        })
        .collect::<Result<Vec<f64>>>()?;
    let result = mc_pvalue(observed, &draws, h.name(), stream.seed)?;
    // With two groups the constraint set is two mirror-image points, so every
    // symmetric statistic is constant; the check is uninformative, not wrong.
    if result.degenerate && v.groups() > 2 {
        return Err(Error::DegenerateDiscrepancy(h.name().to_owned()));
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pi1Outcome {
    Checked(PValueResult),
    /// The hyperprior is improper and is taken never to conflict.
    SkippedImproper,
}

/// Hyperprior check against the prior predictive law of `V`.
pub fn check_pi1(
    data: &GroupedDataset,
    model: &SamplingModel,
    prior: &HyperPrior,
    d: &Discrepancy,
    n_draws: usize,
    stream: RngStream,
) -> Result<Pi1Outcome> {
    d.expect_space(Space::Hyper)?;
    check_shape(data, model)?;
    if !prior.is_proper() {
        return Ok(Pi1Outcome::SkippedImproper);
    }
    check_draws(n_draws)?;
    let observed = compute_v(&compute_t(data))?;
    let draws = (0..n_draws as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream.offset(k).rng();
            let (mu, tau2) = sample_hyper(prior, &mut rng)?;
            sample_v_given_hyper(mu, tau2, model, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let (obs, scores) = d.score_hyper(&observed, &draws);
    mc_pvalue(obs, &scores, d.name(), stream.seed).map(Pi1Outcome::Checked)
}

/// Marginal check of the second level integrated over a proper hyperprior.
pub fn check_pi2_star(
    data: &GroupedDataset,
    model: &SamplingModel,
    prior: &HyperPrior,
    h: &Discrepancy,
    n_draws: usize,
    stream: RngStream,
) -> Result<PValueResult> {
    h.expect_space(Space::Means)?;
    check_shape(data, model)?;
    if !prior.is_proper() {
        return Err(Error::ImproperPriorNotSamplable);
    }
    check_draws(n_draws)?;
    let observed = h.eval_means(compute_t(data).means());
    let draws = (0..n_draws as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream.offset(k).rng();
            let (mu, tau2) = sample_hyper(prior, &mut rng)?;
            Ok(h.eval_means(&sample_t_given_hyper(mu, tau2, model, &mut rng)))
        })
        .collect::<Result<Vec<f64>>>()?;
    mc_pvalue(observed, &draws, h.name(), stream.seed)
}

/// Closed-form check for a single normal mean with a normal prior:
/// `p = 2 (1 - Phi(|xbar - mu0| / sqrt(tau0sq + sigma2 / n)))`.
pub fn check_simple(xbar: f64, n: usize, sigma2: f64, mu0: f64, tau0sq: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    for (name, v) in [("sigma2", sigma2), ("tau0sq", tau0sq)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(name, format!("must be positive, got {v}")));
        }
    }
    let z = (xbar - mu0).abs() / (tau0sq + sigma2 / n as f64).sqrt();
    Ok(libm::erfc(z / std::f64::consts::SQRT_2))
}

/// Discrepancies used by the three protocol stages.
#[derive(Debug, Clone)]
pub struct StageDiscrepancies {
    pub model: Discrepancy,
    pub pi2: Discrepancy,
    pub pi1: Discrepancy,
}

impl Default for StageDiscrepancies {
    fn default() -> Self {
        Self {
            model: Discrepancy::builtin("chisq_total").unwrap(),
            pi2: Discrepancy::builtin("skew").unwrap(),
            pi1: Discrepancy::builtin("mahalanobis_mv").unwrap(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub alpha: f64,
    pub n_draws: usize,
    pub seed: u64,
    pub discrepancies: StageDiscrepancies,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            n_draws: 10_000,
            seed: 1,
            discrepancies: StageDiscrepancies::default(),
        }
    }
}

/// Root stream of a stage: stream ids `STAGE_STRIDE * stage + k`.
pub fn stage_stream(seed: u64, stage: Stage) -> RngStream {
    RngStream::new(seed, STAGE_STRIDE * stage.index())
}

enum StageOutcome {
    Checked(PValueResult),
    Skipped(StageStatus, Option<String>),
}

/// Runs model, then second level, then hyperprior checks, stopping at the
/// first stage that finds a conflict or fails. Later stages are still
/// reported, as `gated_not_run`.
pub fn run_protocol(
    data: &GroupedDataset,
    model: &SamplingModel,
    prior: &HyperPrior,
    config: &ProtocolConfig,
) -> CheckReport {
    let mut stages = Vec::with_capacity(3);
    let mut blocked = false;
    let mut failed = false;
    for stage in Stage::PROTOCOL {
        let discrepancy = match stage {
            Stage::Model => &config.discrepancies.model,
            Stage::Pi2 => &config.discrepancies.pi2,
            _ => &config.discrepancies.pi1,
        };
        let mut record = StageRecord {
            stage,
            status: StageStatus::GatedNotRun,
            result: None,
            alpha: config.alpha,
            decision: Decision::NotRun,
            discrepancy: discrepancy.name().to_owned(),
            seed: config.seed,
            note: None,
        };
        if blocked {
            stages.push(record);
            continue;
        }
        let stream = stage_stream(config.seed, stage);
        let outcome = match stage {
            Stage::Model => match check_model(data, model, discrepancy, config.n_draws, stream) {
                Err(Error::NoResidualInformation) => Ok(StageOutcome::Skipped(
                    StageStatus::SkippedNoResiduals,
                    Some(Error::NoResidualInformation.to_string()),
                )),
                other => other.map(StageOutcome::Checked),
            },
            Stage::Pi2 => check_pi2(data, model, discrepancy, config.n_draws, stream)
                .map(StageOutcome::Checked),
            _ => check_pi1(data, model, prior, discrepancy, config.n_draws, stream).map(
                |o| match o {
                    Pi1Outcome::Checked(r) => StageOutcome::Checked(r),
                    Pi1Outcome::SkippedImproper => {
                        StageOutcome::Skipped(StageStatus::SkippedImproper, None)
                    }
                },
            ),
        };
        match outcome {
            Ok(StageOutcome::Checked(result)) => {
                record.status = StageStatus::Run;
                record.decision = Decision::from_p(result.p, config.alpha);
                if result.degenerate {
                    record.note = Some(format!(
                        "discrepancy `{}` is constant on the reference law; p-value is uninformative",
                        result.discrepancy
                    ));
                }
                blocked = record.decision == Decision::EvidenceOfConflict;
                record.result = Some(result);
            }
            Ok(StageOutcome::Skipped(status, note)) => {
                record.status = status;
                record.decision = Decision::Skipped;
                record.note = note;
            }
            Err(e) => {
                record.status = StageStatus::Failed;
                record.note = Some(e.to_string());
                blocked = true;
                failed = true;
            }
        }
        stages.push(record);
    }
    let inference_ready = !failed
        && stages
            .iter()
            .filter(|r| r.status == StageStatus::Run)
            .all(|r| r.decision == Decision::NoEvidence);
    CheckReport {
        groups: data.groups(),
        per_group: data.per_group(),
        stages,
        inference_ready,
    }
}
