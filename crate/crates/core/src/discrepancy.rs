//! Discrepancy statistics and the built-in registry.
//!
//! Every built-in is one-sided: large values indicate conflict. All of them
//! are symmetric in their coordinates, and they evaluate on a sorted copy of
//! the input so that symmetry holds bit-for-bit.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::HyperStat;
use crate::numeric::{canonical_sum, canonical_sum_map};

/// Guard against `log(0)` in the `mahalanobis_mv` transform.
pub const LOG_SPREAD_FLOOR: f64 = 1e-12;

/// The space a discrepancy acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// Vectors of group means, `R^I`.
    Means,
    /// Residual matrices, `R^{I x n}`.
    Residuals,
    /// Hyper-statistics `(s, q)`.
    Hyper,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Means => "group-mean",
            Space::Residuals => "residual",
            Space::Hyper => "hyper-statistic",
        }
    }
}

type MeansFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type ResidualFn = dyn Fn(&[Vec<f64>], f64) -> f64 + Send + Sync;
type HyperFn = dyn Fn(&HyperStat) -> f64 + Send + Sync;

#[derive(Clone)]
enum Kind {
    Range,
    Skew,
    MaxAbsDev,
    ChisqTotal,
    MaxStdResid,
    MahalanobisMv,
    Means(Arc<MeansFn>),
    Residuals(Arc<ResidualFn>),
    Hyper(Arc<HyperFn>),
}

/// A named real-valued statistic `h`.
#[derive(Clone)]
pub struct Discrepancy {
    name: String,
    kind: Kind,
}

impl fmt::Debug for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Discrepancy")
            .field("name", &self.name)
            .field("space", &self.space())
            .finish()
    }
}

pub const BUILTIN_NAMES: [&str; 6] = [
    "range",
    "skew",
    "maxabs_dev",
    "chisq_total",
    "max_std_resid",
    "mahalanobis_mv",
];

impl Discrepancy {
    /// Looks up a built-in by name.
    pub fn builtin(name: &str) -> Result<Self> {
        let kind = match name {
            "range" => Kind::Range,
            "skew" => Kind::Skew,
            "maxabs_dev" => Kind::MaxAbsDev,
            "chisq_total" => Kind::ChisqTotal,
            "max_std_resid" => Kind::MaxStdResid,
            "mahalanobis_mv" => Kind::MahalanobisMv,
            other => return Err(Error::UnknownDiscrepancy(other.to_owned())),
        };
        Ok(Self {
            name: name.to_owned(),
            kind,
        })
    }

    /// User statistic on group-mean vectors. It must be symmetric in its
    /// coordinates; statistics fixed by `(s, q)` are caught at check time.
    pub fn on_means(
        name: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            kind: Kind::Means(Arc::new(f)),
        }
    }

    /// User statistic on residual matrices; receives `sigma^2` as well.
    pub fn on_residuals(
        name: impl Into<String>,
        f: impl Fn(&[Vec<f64>], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            kind: Kind::Residuals(Arc::new(f)),
        }
    }

    /// User statistic on hyper-statistics.
    pub fn on_hyper(
        name: impl Into<String>,
        f: impl Fn(&HyperStat) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            kind: Kind::Hyper(Arc::new(f)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> Space {
        match self.kind {
            Kind::Range | Kind::Skew | Kind::MaxAbsDev | Kind::Means(_) => Space::Means,
            Kind::ChisqTotal | Kind::MaxStdResid | Kind::Residuals(_) => Space::Residuals,
            Kind::MahalanobisMv | Kind::Hyper(_) => Space::Hyper,
        }
    }

    pub(crate) fn expect_space(&self, expected: Space) -> Result<()> {
        if self.space() == expected {
            Ok(())
        } else {
            Err(Error::WrongDiscrepancySpace {
                name: self.name.clone(),
                expected: expected.name(),
                actual: self.space().name(),
            })
        }
    }

    /// Evaluates a group-mean discrepancy. Panics for other spaces.
    pub fn eval_means(&self, y: &[f64]) -> f64 {
        match &self.kind {
            Kind::Range => range(y),
            Kind::Skew => skew(y),
            Kind::MaxAbsDev => maxabs_dev(y),
            Kind::Means(f) => f(y),
            _ => panic!("`{}` is not a group-mean discrepancy", self.name),
        }
    }

    /// Evaluates a residual discrepancy. Panics for other spaces.
    pub fn eval_residuals(&self, r: &[Vec<f64>], sigma2: f64) -> f64 {
        match &self.kind {
            Kind::ChisqTotal => chisq_total(r, sigma2),
            Kind::MaxStdResid => max_std_resid(r, sigma2),
            Kind::Residuals(f) => f(r, sigma2),
            _ => panic!("`{}` is not a residual discrepancy", self.name),
        }
    }

    /// Scores the observed hyper-statistic and each reference draw.
    ///
    /// `mahalanobis_mv` is calibrated on the reference draws themselves, so
    /// it needs the whole reference set at once.
    pub fn score_hyper(&self, observed: &HyperStat, draws: &[HyperStat]) -> (f64, Vec<f64>) {
        match &self.kind {
            Kind::MahalanobisMv => mahalanobis_mv(observed, draws),
            Kind::Hyper(f) => (f(observed), draws.iter().map(|v| f(v)).collect()),
            _ => panic!("`{}` is not a hyper-statistic discrepancy", self.name),
        }
    }
}

fn sorted(y: &[f64]) -> Vec<f64> {
    let mut v = y.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub fn range(y: &[f64]) -> f64 {
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    hi - lo
}

/// Standardized third central moment, `m3 / m2^(3/2)`; zero when `m2 = 0`.
pub fn skew(y: &[f64]) -> f64 {
    let y = sorted(y);
    let n = y.len() as f64;
    let mean = canonical_sum(&y) / n;
    let m2 = canonical_sum_map(&y, |x| (x - mean).powi(2)) / n;
    if m2 == 0.0 {
        return 0.0;
    }
    let m3 = canonical_sum_map(&y, |x| (x - mean).powi(3)) / n;
    m3 / m2.powf(1.5)
}

pub fn maxabs_dev(y: &[f64]) -> f64 {
    let mean = canonical_sum(y) / y.len() as f64;
    y.iter().fold(0.0, |acc: f64, &x| acc.max((x - mean).abs()))
}

pub fn chisq_total(r: &[Vec<f64>], sigma2: f64) -> f64 {
    let flat: Vec<f64> = r.iter().flatten().copied().collect();
    canonical_sum_map(&flat, |x| x * x) / sigma2
}

pub fn max_std_resid(r: &[Vec<f64>], sigma2: f64) -> f64 {
    let m = r
        .iter()
        .flatten()
        .fold(0.0, |acc: f64, &x| acc.max(x.abs()));
    m / sigma2.sqrt()
}

/// `(s/I, log((q - s^2/I + floor) / (I - 1)))`: location and log-scale of
/// the group means.
pub fn hyper_coordinates(v: &HyperStat) -> [f64; 2] {
    let groups = v.groups() as f64;
    [
        v.s() / groups,
        ((v.spread() + LOG_SPREAD_FLOOR) / (groups - 1.0)).ln(),
    ]
}

/// Squared Mahalanobis distance of each point from the reference draws'
/// mean, using the draws' sample covariance.
fn mahalanobis_mv(observed: &HyperStat, draws: &[HyperStat]) -> (f64, Vec<f64>) {
    let w: Vec<[f64; 2]> = draws.iter().map(hyper_coordinates).collect();
    let n = w.len() as f64;
    let c0: Vec<f64> = w.iter().map(|p| p[0]).collect();
    let c1: Vec<f64> = w.iter().map(|p| p[1]).collect();
    let m0 = crate::numeric::pairwise_sum(&c0) / n;
    let m1 = crate::numeric::pairwise_sum(&c1) / n;
    let denom = (n - 1.0).max(1.0);
    let cov = |a: &[f64], ma: f64, b: &[f64], mb: f64| {
        let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
        crate::numeric::pairwise_sum(&prods) / denom
    };
    let s00 = cov(&c0, m0, &c0, m0);
    let s11 = cov(&c1, m1, &c1, m1);
    let s01 = cov(&c0, m0, &c1, m1);
    let det = s00 * s11 - s01 * s01;
    let dist = move |p: [f64; 2]| {
        let d0 = p[0] - m0;
        let d1 = p[1] - m1;
        if det > 0.0 {
            (s11 * d0 * d0 - 2.0 * s01 * d0 * d1 + s00 * d1 * d1) / det
        } else {
            // singular covariance: fall back to the diagonal, ignoring
            // directions with no spread
            let t0 = if s00 > 0.0 { d0 * d0 / s00 } else { 0.0 };
            let t1 = if s11 > 0.0 { d1 * d1 / s11 } else { 0.0 };
            t0 + t1
        }
    };
    (
        dist(hyper_coordinates(observed)),
        w.into_iter().map(dist).collect(),
    )
}
