//! Bivariate Gaussian model of feasible insertion centres.
//!
//! Holds the density, sampling, eigendecomposition and the closed-form
//! maximum-likelihood and penalised (MAP) parameter updates.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{EigenPair, SymMat2, Vec2};

/// Smallest admissible covariance eigenvalue after an estimate, in mm².
pub const JITTER_FLOOR: f64 = 1e-6;

const MAP_MAX_ITERS: usize = 20;
const MAP_TOL: f64 = 1e-10;

/// A two-dimensional Gaussian with a positive-definite covariance.
///
/// Invariants are checked once at construction; the inverse, determinant
/// and Cholesky factor are cached so density evaluations inside Monte Carlo
/// loops stay cheap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian", into = "RawGaussian")]
pub struct Gaussian2D {
    mean: Vec2,
    cov: SymMat2,
    precision: SymMat2,
    det: f64,
    chol: (f64, f64, f64),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGaussian {
    mean: Vec2,
    cov: SymMat2,
}

impl TryFrom<RawGaussian> for Gaussian2D {
    type Error = Error;
    fn try_from(raw: RawGaussian) -> Result<Self> {
        Gaussian2D::new(raw.mean, raw.cov)
    }
}

impl From<Gaussian2D> for RawGaussian {
    fn from(g: Gaussian2D) -> Self {
        RawGaussian {
            mean: g.mean,
            cov: g.cov,
        }
    }
}

impl Gaussian2D {
    pub fn new(mean: Vec2, cov: SymMat2) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "non-finite mean {mean}"
            )));
        }
        if !cov.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "non-finite covariance {cov:?}"
            )));
        }
        let det = cov.det();
        let (precision, chol) = match (cov.inverse(), cov.cholesky()) {
            (Some(p), Some(c)) if cov.eigenvalues().1 > 0.0 => (p, c),
            _ => {
                return Err(Error::InvalidDistribution(format!(
                    "covariance {cov:?} is not positive definite (det = {det})"
                )))
            }
        };
        Ok(Gaussian2D {
            mean,
            cov,
            precision,
            det,
            chol,
        })
    }

    /// `N(0, I)`.
    pub fn standard() -> Self {
        Self::isotropic(Vec2::ZERO, 1.0).expect("identity covariance is valid")
    }

    /// `N(mean, variance·I)`.
    pub fn isotropic(mean: Vec2, variance: f64) -> Result<Self> {
        Self::new(mean, SymMat2::scaled_identity(variance))
    }

    /// Builds a distribution from an estimated covariance, applying the jitter floor first.
    pub fn from_estimate(mean: Vec2, cov: SymMat2) -> Result<Self> {
        Self::new(mean, apply_jitter_floor(cov))
    }

    pub fn mean(&self) -> Vec2 {
        self.mean
    }

    pub fn cov(&self) -> SymMat2 {
        self.cov
    }

    pub fn precision(&self) -> SymMat2 {
        self.precision
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    /// Standard deviations and correlation `(σ₁, σ₂, ρ)`.
    pub fn std_and_corr(&self) -> (f64, f64, f64) {
        let s1 = self.cov.xx.sqrt();
        let s2 = self.cov.yy.sqrt();
        (s1, s2, self.cov.xy / (s1 * s2))
    }

    /// Same mean, covariance multiplied by `factor`.
    pub fn with_scaled_cov(&self, factor: f64) -> Result<Self> {
        Self::new(self.mean, self.cov * factor)
    }

    /// Same covariance, different mean.
    pub fn with_mean(&self, mean: Vec2) -> Result<Self> {
        Self::new(mean, self.cov)
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis_sq(&self, x: Vec2) -> f64 {
        self.precision.quad_form(x - self.mean)
    }

    /// Peak density `1 / (2π√|Σ|)`.
    pub fn peak_density(&self) -> f64 {
        1.0 / (2.0 * PI * self.det.sqrt())
    }

    pub fn pdf(&self, x: Vec2) -> f64 {
        self.peak_density() * (-0.5 * self.mahalanobis_sq(x)).exp()
    }

    pub fn log_pdf(&self, x: Vec2) -> f64 {
        -(2.0 * PI).ln() - 0.5 * self.det.ln() - 0.5 * self.mahalanobis_sq(x)
    }

    /// `∇ₓ log f(x) = −Σ⁻¹(x − μ)`.
    pub fn grad_log_pdf(&self, x: Vec2) -> Vec2 {
        -self.precision.mul_vec(x - self.mean)
    }

    /// `∇ₓ f(x) = −Σ⁻¹(x − μ)·f(x)`.
    pub fn grad_pdf(&self, x: Vec2) -> Vec2 {
        self.grad_log_pdf(x) * self.pdf(x)
    }

    /// Maps a standard-normal pair through `μ + L·z`.
    pub fn transform_standard(&self, z: Vec2) -> Vec2 {
        let (l11, l21, l22) = self.chol;
        Vec2::new(self.mean.x + l11 * z.x, self.mean.y + l21 * z.x + l22 * z.y)
    }

    /// One draw; consumes exactly two standard normals from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let z = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.transform_standard(z)
    }

    pub fn eigen(&self) -> EigenPair {
        self.cov.eigen()
    }

    pub fn max_variance(&self) -> f64 {
        self.cov.eigenvalues().0
    }

    pub fn min_variance(&self) -> f64 {
        self.cov.eigenvalues().1
    }
}

/// Adds `JITTER_FLOOR·I` when the smaller eigenvalue is below the floor.
pub fn apply_jitter_floor(cov: SymMat2) -> SymMat2 {
    if cov.eigenvalues().1 < JITTER_FLOOR {
        cov + SymMat2::scaled_identity(JITTER_FLOOR)
    } else {
        cov
    }
}

/// Eigendecomposition of the covariance of `g`.
pub fn eigendecompose(g: &Gaussian2D) -> EigenPair {
    g.eigen()
}

fn require_samples(samples: &[Vec2]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Usage(
            "parameter update needs at least one sample".into(),
        ));
    }
    if let Some(bad) = samples.iter().find(|p| !p.is_finite()) {
        return Err(Error::Usage(format!("non-finite sample {bad}")));
    }
    Ok(())
}

/// Biased scatter `(1/m) Σ (xᵢ − c)(xᵢ − c)ᵀ`.
pub fn scatter_about(samples: &[Vec2], center: Vec2) -> SymMat2 {
    let m = samples.len() as f64;
    let sum = samples
        .iter()
        .fold(SymMat2::default(), |acc, &p| acc + (p - center).outer());
    sum * (1.0 / m)
}

/// Maximum-likelihood estimate before the jitter floor: sample mean and
/// divide-by-m covariance.
pub fn mle_raw(samples: &[Vec2]) -> Result<(Vec2, SymMat2)> {
    require_samples(samples)?;
    let mean = Vec2::mean(samples).expect("non-empty");
    Ok((mean, scatter_about(samples, mean)))
}

/// Maximum-likelihood update with the jitter floor applied.
pub fn mle_update(samples: &[Vec2]) -> Result<Gaussian2D> {
    let (mean, cov) = mle_raw(samples)?;
    Gaussian2D::from_estimate(mean, cov)
}

/// Penalised estimate before the jitter floor.
///
/// Stationary point of the average log-likelihood with penalties
/// `−λ₁/2‖μ − μ̃‖² − λ₂/4‖Σ − I‖²`:
///
/// ```text
/// Σ̂ = (S(μ̂) + λ₂·I) / (1 + λ₂)
/// μ̂ = (I + λ₁·Σ̂)⁻¹ (x̄ + λ₁·Σ̂·μ̃)
/// ```
///
/// The pair is coupled, so it is solved by fixed-point iteration started
/// from the MLE values.
pub fn map_raw(
    samples: &[Vec2],
    prior_mean: Vec2,
    lambda1: f64,
    lambda2: f64,
) -> Result<(Vec2, SymMat2)> {
    require_samples(samples)?;
    if !(lambda1 >= 0.0) || !lambda1.is_finite() {
        return Err(Error::Usage(format!(
            "lambda1 must be finite and >= 0, got {lambda1}"
        )));
    }
    if !(lambda2 >= 0.0) || !lambda2.is_finite() {
        return Err(Error::Usage(format!(
            "lambda2 must be finite and >= 0, got {lambda2}"
        )));
    }
    let sample_mean = Vec2::mean(samples).expect("non-empty");
    let mut mean = sample_mean;
    let mut cov = scatter_about(samples, mean);
    for _ in 0..MAP_MAX_ITERS {
        let next_cov = (scatter_about(samples, mean) + SymMat2::scaled_identity(lambda2))
            * (1.0 / (1.0 + lambda2));
        let system = SymMat2::IDENTITY + next_cov * lambda1;
        let rhs = sample_mean + next_cov.mul_vec(prior_mean) * lambda1;
        let next_mean = system
            .inverse()
            .ok_or_else(|| Error::Internal("MAP mean system is singular".into()))?
            .mul_vec(rhs);
        let delta = (next_mean - mean).norm()
            + (next_cov.xx - cov.xx).abs()
            + (next_cov.xy - cov.xy).abs()
            + (next_cov.yy - cov.yy).abs();
        mean = next_mean;
        cov = next_cov;
        if delta < MAP_TOL {
            break;
        }
    }
    Ok((mean, cov))
}

/// Penalised (MAP) update with the jitter floor applied.
pub fn map_update(
    samples: &[Vec2],
    prior_mean: Vec2,
    lambda1: f64,
    lambda2: f64,
) -> Result<Gaussian2D> {
    let (mean, cov) = map_raw(samples, prior_mean, lambda1, lambda2)?;
    Gaussian2D::from_estimate(mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pdf_reference_values() {
        let g = Gaussian2D::standard();
        assert!(close(g.pdf(Vec2::ZERO), 1.0 / (2.0 * PI), 1e-15));
        assert!(close(
            g.pdf(Vec2::new(1.0, 0.0)),
            (-0.5f64).exp() / (2.0 * PI),
            1e-15
        ));
        assert!(close(g.pdf(Vec2::ZERO), 0.159154, 1e-6));
        assert!(close(g.pdf(Vec2::new(1.0, 0.0)), 0.096532, 1e-6));
        let h = Gaussian2D::isotropic(Vec2::new(3.0, 4.0), 4.0).unwrap();
        assert!(close(h.pdf(Vec2::new(3.0, 4.0)), 1.0 / (8.0 * PI), 1e-15));
        assert!(close(h.pdf(Vec2::new(3.0, 4.0)), 0.039789, 1e-6));
    }

    #[test]
    fn log_pdf_matches_pdf() {
        let g = Gaussian2D::new(Vec2::new(0.5, -1.0), SymMat2::new(2.0, 0.3, 0.7)).unwrap();
        let x = Vec2::new(1.1, 0.2);
        assert!(close(g.log_pdf(x), g.pdf(x).ln(), 1e-13));
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let err = Gaussian2D::new(Vec2::ZERO, SymMat2::new(1.0, 1.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidDistribution(_)));
        assert!(Gaussian2D::new(Vec2::ZERO, SymMat2::diagonal(0.0, 1.0)).is_err());
        assert!(Gaussian2D::new(Vec2::ZERO, SymMat2::diagonal(-1.0, -1.0)).is_err());
        assert!(Gaussian2D::new(Vec2::new(f64::NAN, 0.0), SymMat2::IDENTITY).is_err());
    }

    #[test]
    fn vanishing_variance_samples_sit_on_the_mean() {
        let g = Gaussian2D::from_estimate(Vec2::new(5.0, 5.0), SymMat2::scaled_identity(1e-14))
            .unwrap();
        assert!(g.min_variance() >= JITTER_FLOOR);
        let tiny = Gaussian2D::isotropic(Vec2::new(5.0, 5.0), 1e-12).unwrap();
        for seed in 0..20 {
            let p = tiny.sample(&mut stream(seed, &[]));
            assert!(p.distance(Vec2::new(5.0, 5.0)) < 1e-3);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = Gaussian2D::new(Vec2::new(1.0, 2.0), SymMat2::new(1.0, 0.2, 0.5)).unwrap();
        assert_eq!(
            g.sample(&mut stream(3, &[1])),
            g.sample(&mut stream(3, &[1]))
        );
    }

    #[test]
    fn sample_moments() {
        let g = Gaussian2D::standard();
        let mut rng = stream(11, &[]);
        let n = 100_000;
        let pts: Vec<Vec2> = (0..n).map(|_| g.sample(&mut rng)).collect();
        let (mean, cov) = mle_raw(&pts).unwrap();
        assert!(mean.norm() < 0.02 * std::f64::consts::SQRT_2);
        assert!(mean.x.abs() < 0.02 && mean.y.abs() < 0.02);
        assert!((cov.xx - 1.0).abs() < 0.03);
        assert!((cov.yy - 1.0).abs() < 0.03);
        assert!(cov.xy.abs() < 0.03);
    }

    #[test]
    fn mle_direct_substitution() {
        let (mean, cov) = mle_raw(&[Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0)]).unwrap();
        assert_eq!(mean, Vec2::new(1.0, 0.0));
        assert_eq!(cov, SymMat2::new(1.0, 0.0, 0.0));
        let g = mle_update(&[Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0)]).unwrap();
        assert_eq!(g.cov(), SymMat2::new(1.0 + JITTER_FLOOR, 0.0, JITTER_FLOOR));

        let square = [
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 2.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
        ];
        let g = mle_update(&square).unwrap();
        assert_eq!(g.mean(), Vec2::new(1.0, 1.0));
        assert_eq!(g.cov(), SymMat2::IDENTITY);
    }

    #[test]
    fn single_sample_estimate_is_jittered() {
        let g = mle_update(&[Vec2::new(3.0, -1.0)]).unwrap();
        assert_eq!(g.mean(), Vec2::new(3.0, -1.0));
        assert_eq!(g.cov(), SymMat2::scaled_identity(JITTER_FLOOR));
    }

    #[test]
    fn empty_samples_are_a_usage_error() {
        assert!(matches!(mle_update(&[]), Err(Error::Usage(_))));
        assert!(matches!(
            map_update(&[], Vec2::ZERO, 0.1, 0.1),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn map_rejects_negative_weights() {
        let s = [Vec2::new(1.0, 1.0)];
        assert!(matches!(
            map_update(&s, Vec2::ZERO, -0.1, 0.0),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            map_update(&s, Vec2::ZERO, 0.0, -1.0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn map_without_penalties_is_mle() {
        let s = [
            Vec2::new(0.1, 0.3),
            Vec2::new(-0.7, 1.2),
            Vec2::new(2.2, 0.4),
            Vec2::new(0.9, -0.5),
        ];
        assert_eq!(
            map_raw(&s, Vec2::new(5.0, 5.0), 0.0, 0.0).unwrap(),
            mle_raw(&s).unwrap()
        );
        assert_eq!(
            map_update(&s, Vec2::ZERO, 0.0, 0.0).unwrap(),
            mle_update(&s).unwrap()
        );
    }

    #[test]
    fn map_strong_covariance_prior_gives_identity() {
        let s = [
            Vec2::new(0.1, 0.3),
            Vec2::new(-0.7, 1.2),
            Vec2::new(2.2, 0.4),
        ];
        let g = map_update(&s, Vec2::ZERO, 0.5, 1e6).unwrap();
        let c = g.cov();
        assert!(close(c.xx, 1.0, 1e-5) && close(c.yy, 1.0, 1e-5) && close(c.xy, 0.0, 1e-5));
    }

    #[test]
    fn map_prior_at_sample_mean_keeps_mean() {
        let g = map_update(&[Vec2::ZERO], Vec2::ZERO, 1.0, 0.0).unwrap();
        assert_eq!(g.mean(), Vec2::ZERO);
    }

    #[test]
    fn map_mean_satisfies_stationarity() {
        let s = [
            Vec2::new(1.0, 0.5),
            Vec2::new(1.4, -0.2),
            Vec2::new(0.6, 0.1),
        ];
        let prior = Vec2::new(0.5, 0.4);
        let (l1, l2) = (0.2, 0.3);
        let (mean, cov) = map_raw(&s, prior, l1, l2).unwrap();
        // Σ⁻¹(x̄ − μ) − λ₁(μ − μ̃) = 0 and Σ(1 + λ₂) = S(μ) + λ₂I.
        let xbar = Vec2::mean(&s).unwrap();
        let g = cov.inverse().unwrap().mul_vec(xbar - mean) - (mean - prior) * l1;
        assert!(g.norm() < 1e-9, "{g}");
        let lhs = cov * (1.0 + l2);
        let rhs = scatter_about(&s, mean) + SymMat2::scaled_identity(l2);
        assert!(
            close(lhs.xx, rhs.xx, 1e-9)
                && close(lhs.xy, rhs.xy, 1e-9)
                && close(lhs.yy, rhs.yy, 1e-9)
        );
    }

    #[test]
    fn std_and_corr_recover_parameters() {
        let (s1, s2, rho) = (0.5, 2.0, -0.3);
        let g = Gaussian2D::new(Vec2::ZERO, SymMat2::new(s1 * s1, rho * s1 * s2, s2 * s2)).unwrap();
        let (a, b, r) = g.std_and_corr();
        assert!(close(a, s1, 1e-15) && close(b, s2, 1e-15) && close(r, rho, 1e-15));
    }
}
