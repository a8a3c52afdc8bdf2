//! Random-variate generation for every factor of the protocol.
//!
//! All samplers are pure functions of their arguments and the generator
//! handed to them; obtain the generator from [`crate::rng::RngStream::rng`]
//! to get keyed, reproducible streams.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{HyperPrior, HyperStat, SamplingModel};
use crate::numeric::pairwise_sum;

/// Orthonormal basis of the complement of the all-ones vector in `R^I`.
///
/// Uses the Helmert construction: column `k` (1-based) has
/// `1/sqrt(k(k+1))` in rows `1..=k`, `-k/sqrt(k(k+1))` in row `k+1` and
/// zeros below.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementBasis {
    groups: usize,
    // scale[k-1] = 1/sqrt(k(k+1))
    scale: Vec<f64>,
}

pub fn helmert_basis(groups: usize) -> Result<ComplementBasis> {
    if groups < 2 {
        return Err(Error::DimensionTooSmall(groups));
    }
    let scale = (1..groups)
        .map(|k| {
            let k = k as f64;
            1.0 / (k * (k + 1.0)).sqrt()
        })
        .collect();
    Ok(ComplementBasis { groups, scale })
}

impl ComplementBasis {
    pub fn groups(&self) -> usize {
        self.groups
    }

    /// Number of columns, `I - 1`.
    pub fn rank(&self) -> usize {
        self.groups - 1
    }

    /// Entry in row `row`, column `col` (both 0-based).
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let c = self.scale[col];
        if row <= col {
            c
        } else if row == col + 1 {
            -((col + 1) as f64) * c
        } else {
            0.0
        }
    }

    /// Dense `I x (I-1)` matrix, row-major.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        (0..self.groups)
            .map(|r| (0..self.rank()).map(|c| self.entry(r, c)).collect())
            .collect()
    }

    /// `A u` in `O(I)` using the lower-bidiagonal-plus-suffix structure.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.rank(), "coefficient length must be I - 1");
        let mut out = vec![0.0; self.groups];
        // out[j] = sum_{k >= j} scale[k] u[k] - j * scale[j-1] u[j-1]
        let mut suffix = 0.0;
        for j in (0..self.groups).rev() {
            if j < self.rank() {
                suffix += self.scale[j] * u[j];
            }
            let below = if j > 0 {
                j as f64 * self.scale[j - 1] * u[j - 1]
            } else {
                0.0
            };
            out[j] = suffix - below;
        }
        out
    }
}

/// Uniform point on the unit sphere in `R^dim`, via normalized Gaussians.
pub fn sample_unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    assert!(dim >= 1, "sphere dimension must be at least 1");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm >= 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Draw from the conditional law of the group means given `V`: uniform on
/// the sphere of squared radius `q` inside the hyperplane `sum y = s`.
///
/// Computes `y = (s/I) 1 + rho A u` with `rho^2 = q - s^2/I`.
pub fn sample_t_given_v<R: Rng + ?Sized>(
    v: &HyperStat,
    basis: &ComplementBasis,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let groups = v.groups();
    if basis.groups() != groups {
        return Err(Error::invalid(
            "basis",
            format!(
                "basis dimension {} does not match I = {groups}",
                basis.groups()
            ),
        ));
    }
    let centre = v.s() / groups as f64;
    let rho = v.spread().sqrt();
    if rho == 0.0 {
        return Ok(vec![centre; groups]);
    }
    let u = sample_unit_sphere(basis.rank(), rng);
    Ok(basis
        .apply(&u)
        .into_iter()
        .map(|a| centre + rho * a)
        .collect())
}

/// Residuals `x_ij - xbar_i` drawn from their conditional law given the means.
pub fn sample_residual_matrix<R: Rng + ?Sized>(
    model: &SamplingModel,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let sd = model.sigma2().sqrt();
    let n = model.per_group();
    (0..model.groups())
        .map(|_| {
            let z: Vec<f64> = (0..n)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mean = pairwise_sum(&z) / n as f64;
            z.into_iter().map(|x| x - mean).collect()
        })
        .collect()
}

/// `(mu, tau2)` from a proper hyperprior.
pub fn sample_hyper<R: Rng + ?Sized>(prior: &HyperPrior, rng: &mut R) -> Result<(f64, f64)> {
    match *prior {
        HyperPrior::ImproperFlat => Err(Error::ImproperPriorNotSamplable),
        HyperPrior::NormalInvGamma { m0, s0sq, a0, b0 } => {
            let gamma =
                Gamma::new(a0, 1.0 / b0).map_err(|e| Error::invalid("a0", e.to_string()))?;
            let mu = m0 + s0sq.sqrt() * rng.sample::<f64, _>(StandardNormal);
            let tau2 = 1.0 / gamma.sample(rng);
            Ok((mu, tau2))
        }
    }
}

/// Group means drawn from `N_I(mu 1, (tau2 + sigma^2/n) I)`.
pub fn sample_t_given_hyper<R: Rng + ?Sized>(
    mu: f64,
    tau2: f64,
    model: &SamplingModel,
    rng: &mut R,
) -> Vec<f64> {
    let sd = (tau2 + model.mean_variance()).sqrt();
    (0..model.groups())
        .map(|_| mu + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `V` of group means drawn given the hyperparameter.
pub fn sample_v_given_hyper<R: Rng + ?Sized>(
    mu: f64,
    tau2: f64,
    model: &SamplingModel,
    rng: &mut R,
) -> Result<HyperStat> {
    if !(tau2.is_finite() && tau2 >= 0.0) {
        return Err(Error::invalid(
            "tau2",
            format!("must be nonnegative, got {tau2}"),
        ));
    }
    HyperStat::from_means(&sample_t_given_hyper(mu, tau2, model, rng))
}

/// Full synthetic dataset: `theta_i ~ N(mu, tau2)`, `x_ij ~ N(theta_i, sigma^2)`.
pub fn sample_dataset<R: Rng + ?Sized>(
    mu: f64,
    tau2: f64,
    model: &SamplingModel,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let tau = tau2.sqrt();
    let sd = model.sigma2().sqrt();
    (0..model.groups())
        .map(|_| {
            let theta = mu + tau * rng.sample::<f64, _>(StandardNormal);
            (0..model.per_group())
                .map(|_| theta + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}
