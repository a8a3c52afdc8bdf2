//! Domain types: data, sampling model, statistics, priors and results.
//!
//! Every type here is immutable once constructed and validates its own
//! invariants on construction.

use std::fmt;

use crate::error::{Error, Result};
use crate::numeric::canonical_sum_map;

/// Relative tolerance for the feasibility condition `q >= s^2 / I`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Default decision threshold for every stage.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Balanced grouped observations: `I` groups of `n` values each.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    group_ids: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl GroupedDataset {
    /// Builds a dataset from already grouped rows, checking every invariant.
    pub fn from_groups(group_ids: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if group_ids.len() != values.len() {
            return Err(Error::invalid(
                "group_ids",
                format!("{} labels for {} groups", group_ids.len(), values.len()),
            ));
        }
        if values.len() < 2 {
            return Err(Error::TooFewGroups(values.len()));
        }
        let n = values[0].len();
        for (id, row) in group_ids.iter().zip(&values) {
            if row.len() != n {
                return Err(Error::UnbalancedData {
                    group: id.clone(),
                    expected: n,
                    found: row.len(),
                });
            }
            if let Some(&v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue {
                    group: id.clone(),
                    value: v,
                });
            }
        }
        if n == 0 {
            return Err(Error::invalid("values", "groups must be nonempty"));
        }
        Ok(Self { group_ids, values })
    }

    pub fn group_ids(&self) -> &[String] {
        &self.group_ids
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Number of groups, `I`.
    pub fn groups(&self) -> usize {
        self.values.len()
    }

    /// Observations per group, `n`.
    pub fn per_group(&self) -> usize {
        self.values[0].len()
    }

    /// Flattens back to `(label, value)` pairs in group-major order.
    pub fn to_pairs(&self) -> Vec<(String, f64)> {
        self.group_ids
            .iter()
            .zip(&self.values)
            .flat_map(|(id, row)| row.iter().map(move |&v| (id.clone(), v)))
            .collect()
    }
}

/// Groups `(label, value)` pairs in first-appearance order.
pub fn validate_dataset<S: AsRef<str>>(raw: &[(S, f64)]) -> Result<GroupedDataset> {
    let mut ids: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (label, value) in raw {
        let label = label.as_ref();
        if !value.is_finite() {
            return Err(Error::NonFiniteValue {
                group: label.to_owned(),
                value: *value,
            });
        }
        let slot = *index.entry(label.to_owned()).or_insert_with(|| {
            ids.push(label.to_owned());
            rows.push(Vec::new());
            rows.len() - 1
        });
        rows[slot].push(*value);
    }
    GroupedDataset::from_groups(ids, rows)
}

/// Normal sampling model with known common variance and balanced design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingModel {
    sigma2: f64,
    n: usize,
    groups: usize,
}

impl SamplingModel {
    pub fn new(sigma2: f64, n: usize, groups: usize) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::invalid(
                "sigma2",
                format!("must be positive, got {sigma2}"),
            ));
        }
        if n < 1 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        if groups < 2 {
            return Err(Error::TooFewGroups(groups));
        }
        Ok(Self { sigma2, n, groups })
    }

    /// Model matching the shape of `data`.
    pub fn for_dataset(sigma2: f64, data: &GroupedDataset) -> Result<Self> {
        Self::new(sigma2, data.per_group(), data.groups())
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn per_group(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    /// Sampling variance of a group mean, `sigma^2 / n`.
    pub fn mean_variance(&self) -> f64 {
        self.sigma2 / self.n as f64
    }
}

/// The vector of group means.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStat {
    means: Vec<f64>,
}

impl SufficientStat {
    pub fn new(means: Vec<f64>) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::TooFewGroups(means.len()));
        }
        if let Some(&v) = means.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                group: "<mean>".into(),
                value: v,
            });
        }
        Ok(Self { means })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn groups(&self) -> usize {
        self.means.len()
    }
}

/// Sum and sum of squares of the group means.
///
/// Alongside `(s, q)` this keeps the centered sum of squares
/// `q - s^2 / I`. When built from the means it is computed two-pass, which
/// avoids the cancellation in `q - s^2 / I` when the means sit far from zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperStat {
    s: f64,
    q: f64,
    groups: usize,
    spread: f64,
}

impl HyperStat {
    /// From raw `(s, q)`. Values below the boundary by at most
    /// `FEASIBILITY_TOL * max(1, q)` are clamped onto it.
    pub fn new(s: f64, q: f64, groups: usize) -> Result<Self> {
        if groups < 2 {
            return Err(Error::DimensionTooSmall(groups));
        }
        if !(s.is_finite() && q.is_finite()) {
            return Err(Error::invalid("V", format!("non-finite ({s}, {q})")));
        }
        let bound = s * s / groups as f64;
        let diff = q - bound;
        if diff >= 0.0 {
            return Ok(Self {
                s,
                q,
                groups,
                spread: diff,
            });
        }
        if -diff <= FEASIBILITY_TOL * q.abs().max(1.0) {
            Ok(Self {
                s,
                q: bound,
                groups,
                spread: 0.0,
            })
        } else {
            Err(Error::InfeasibleV { q, bound })
        }
    }

    /// From the group means, with order-insensitive summation.
    pub fn from_means(means: &[f64]) -> Result<Self> {
        let groups = means.len();
        if groups < 2 {
            return Err(Error::DimensionTooSmall(groups));
        }
        let s = canonical_sum_map(means, |x| x);
        let q = canonical_sum_map(means, |x| x * x);
        let centre = s / groups as f64;
        let spread = canonical_sum_map(means, |x| (x - centre) * (x - centre));
        let bound = s * s / groups as f64;
        // q is only clamped, never moved past the boundary
        let q = if q < bound { bound } else { q };
        Ok(Self {
            s,
            q,
            groups,
            spread,
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    /// Centered sum of squares, the squared radius of the constraint sphere.
    pub fn spread(&self) -> f64 {
        self.spread
    }
}

/// Prior on the hyperparameter `(mu, tau2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HyperPrior {
    /// Flat improper prior. Selecting it asserts that this level never
    /// conflicts with the data, so its check is skipped.
    ImproperFlat,
    /// `mu ~ N(m0, s0sq)` independent of `tau2 ~ InvGamma(a0, b0)`.
    NormalInvGamma {
        m0: f64,
        s0sq: f64,
        a0: f64,
        b0: f64,
    },
}

impl HyperPrior {
    pub fn normal_inv_gamma(m0: f64, s0sq: f64, a0: f64, b0: f64) -> Result<Self> {
        if !m0.is_finite() {
            return Err(Error::invalid("m0", "must be finite"));
        }
        for (name, v) in [("s0sq", s0sq), ("a0", a0), ("b0", b0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(HyperPrior::NormalInvGamma { m0, s0sq, a0, b0 })
    }

    pub fn is_proper(&self) -> bool {
        matches!(self, HyperPrior::NormalInvGamma { .. })
    }
}

/// Monte Carlo p-value together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueResult {
    pub p: f64,
    pub n_draws: usize,
    pub seed: u64,
    pub mc_stderr: f64,
    pub discrepancy: String,
    pub observed_h: f64,
    /// Reference draws had zero spread; the p-value carries no information.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Model,
    Pi2,
    Pi1,
    Pi2Star,
}

impl Stage {
    pub const PROTOCOL: [Stage; 3] = [Stage::Model, Stage::Pi2, Stage::Pi1];

    pub fn index(self) -> u64 {
        match self {
            Stage::Model => 0,
            Stage::Pi2 => 1,
            Stage::Pi1 => 2,
            Stage::Pi2Star => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Model => "model",
            Stage::Pi2 => "pi2",
            Stage::Pi1 => "pi1",
            Stage::Pi2Star => "pi2_star",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "model" => Some(Stage::Model),
            "pi2" => Some(Stage::Pi2),
            "pi1" => Some(Stage::Pi1),
            "pi2_star" => Some(Stage::Pi2Star),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Run,
    SkippedImproper,
    /// Model check impossible because `n = 1` leaves no residuals.
    SkippedNoResiduals,
    GatedNotRun,
    /// The check raised an error; see the stage note.
    Failed,
}

impl StageStatus {
    pub fn name(self) -> &'static str {
        match self {
            StageStatus::Run => "run",
            StageStatus::SkippedImproper => "skipped_improper",
            StageStatus::SkippedNoResiduals => "skipped_no_residuals",
            StageStatus::GatedNotRun => "gated_not_run",
            StageStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            StageStatus::Run,
            StageStatus::SkippedImproper,
            StageStatus::SkippedNoResiduals,
            StageStatus::GatedNotRun,
            StageStatus::Failed,
        ]
        .into_iter()
        .find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    NoEvidence,
    EvidenceOfConflict,
    Skipped,
    NotRun,
}

impl Decision {
    pub fn from_p(p: f64, alpha: f64) -> Self {
        if p < alpha {
            Decision::EvidenceOfConflict
        } else {
            Decision::NoEvidence
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Decision::NoEvidence => "no_evidence",
            Decision::EvidenceOfConflict => "evidence_of_conflict",
            Decision::Skipped => "skipped",
            Decision::NotRun => "not_run",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Decision::NoEvidence,
            Decision::EvidenceOfConflict,
            Decision::Skipped,
            Decision::NotRun,
        ]
        .into_iter()
        .find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub result: Option<PValueResult>,
    pub alpha: f64,
    pub decision: Decision,
    pub discrepancy: String,
    pub seed: u64,
    pub note: Option<String>,
}

/// Outcome of the staged protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub groups: usize,
    pub per_group: usize,
    pub stages: Vec<StageRecord>,
    pub inference_ready: bool,
}

impl CheckReport {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }
}
