//! Learned meta search.
//!
//! Each hole keeps a Gaussian posterior over its feasible-area centre. To
//! search a hole, `n` covers (disks of radius ε) are placed by gradient
//! ascent on
//!
//! ```text
//! F = Σᵢ Φᵢ,   Φᵢ = φ(mᵢ; ε) + regulariser
//! ```
//!
//! where `φ(m; ε)` is the probability mass of the posterior inside
//! `U_ε(m)`. Covers are tried in order of decreasing `φ`; a success is fed
//! back into the posterior.
//!
//! φ itself is estimated by hit-or-miss sampling from the posterior. Its
//! gradient uses `∂/∂m ∫_{U_ε(m)} f = ∫_{U_ε(m)} ∇f` with points drawn
//! uniformly in the disk, which stays informative when the disk sits in a
//! region of negligible mass.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::InsertionSession;
use crate::error::{Error, Result};
use crate::gaussian::{self, Gaussian2D};
use crate::linalg::{SymMat2, Vec2};
use crate::rng::{stream, tag, SimRng};
use crate::strategies::SearchResult;

/// A candidate insertion point with its tolerance disk `U_ε(m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cover {
    pub center: Vec2,
    pub epsilon: f64,
}

impl Cover {
    pub fn new(center: Vec2, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Usage(format!(
                "cover tolerance must be > 0, got {epsilon}"
            )));
        }
        if !center.is_finite() {
            return Err(Error::Usage(format!(
                "cover centre must be finite, got {center}"
            )));
        }
        Ok(Cover { center, epsilon })
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.distance(self.center) <= self.epsilon
    }

    pub fn area(&self) -> f64 {
        PI * self.epsilon * self.epsilon
    }
}

/// Repulsion term added to each cover's objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegMode {
    /// `λ/(n−1) · Σ_{j≠i} max(‖mᵢ − mⱼ‖² − ε, 0)`.
    #[default]
    Pairwise,
    /// `λ · ‖mᵢ − (1/n)Σⱼ mⱼ‖²`.
    Centroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    #[default]
    Mle,
    Map,
}

/// Meta-search hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaConfig {
    pub n_covers: usize,
    /// Cover tolerance ε, mm. Also the hinge offset of the pairwise term.
    pub epsilon: f64,
    /// Regularisation strength λ.
    pub lambda: f64,
    pub reg_mode: RegMode,
    /// Monte Carlo points per φ or ∇φ evaluation.
    pub mc_samples: usize,
    /// Posterior draws used to rank candidates.
    pub rank_samples: usize,
    /// Disk radius used when ranking candidates by φ, mm. Ranks by the chance
    /// an attempt succeeds rather than by the optimisation tolerance.
    pub rank_tolerance: f64,
    pub ascent_steps: usize,
    /// Fraction of the normalised gradient applied per ascent step.
    pub step_size: f64,
    /// Largest ascent displacement before `step_size`, in posterior standard deviations.
    pub grad_clip: f64,
    pub estimator: Estimator,
    pub map_lambda1: f64,
    pub map_lambda2: f64,
    /// Radius of the initial ring of covers, in standard deviations of the
    /// distribution being optimised against.
    pub init_radius_sigmas: f64,
    /// Radius of the initial ring in the first round of covers, mm.
    pub first_ring: f64,
    /// Growth of the initial ring radius per round.
    pub round_inflation: f64,
    /// A candidate closer than this to an earlier attempt on the same hole is skipped, mm.
    pub min_spacing: f64,
    /// Independent random ring rotations; the one with the largest `F` is kept.
    pub restarts: usize,
    /// Feed every attempted position into the posterior, not just successes.
    pub update_with_all_attempts: bool,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            n_covers: 8,
            epsilon: 0.002,
            lambda: 1e-4,
            reg_mode: RegMode::Pairwise,
            mc_samples: 2000,
            rank_samples: 20_000,
            rank_tolerance: 0.4,
            ascent_steps: 40,
            step_size: 0.5,
            grad_clip: 0.05,
            estimator: Estimator::Mle,
            map_lambda1: 0.1,
            map_lambda2: 0.1,
            init_radius_sigmas: 0.5,
            first_ring: 0.05,
            round_inflation: 1.3,
            min_spacing: 0.15,
            restarts: 1,
            update_with_all_attempts: false,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(
                    format!("meta.{key}"),
                    format!("must be > 0, got {v}"),
                ))
            }
        };
        let non_negative = |key: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(
                    format!("meta.{key}"),
                    format!("must be >= 0, got {v}"),
                ))
            }
        };
        if self.n_covers < 1 {
            return Err(Error::config("meta.n_covers", "must be >= 1"));
        }
        positive("epsilon", self.epsilon)?;
        non_negative("lambda", self.lambda)?;
        if self.mc_samples < 100 {
            return Err(Error::config("meta.mc_samples", "must be >= 100"));
        }
        if self.rank_samples < 100 {
            return Err(Error::config("meta.rank_samples", "must be >= 100"));
        }
        positive("rank_tolerance", self.rank_tolerance)?;
        positive("step_size", self.step_size)?;
        positive("grad_clip", self.grad_clip)?;
        non_negative("map_lambda1", self.map_lambda1)?;
        non_negative("map_lambda2", self.map_lambda2)?;
        positive("init_radius_sigmas", self.init_radius_sigmas)?;
        positive("first_ring", self.first_ring)?;
        if !(self.round_inflation > 1.0) || !self.round_inflation.is_finite() {
            return Err(Error::config("meta.round_inflation", "must be > 1"));
        }
        non_negative("min_spacing", self.min_spacing)?;
        if self.restarts < 1 {
            return Err(Error::config("meta.restarts", "must be >= 1"));
        }
        Ok(())
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub std_error: T,
}

/// Uniform point in the unit disk.
fn unit_disk_point<R: Rng + ?Sized>(rng: &mut R) -> Vec2 {
    let r = rng.random::<f64>().sqrt();
    let a = 2.0 * PI * rng.random::<f64>();
    Vec2::from_angle(a) * r
}

fn unit_disk_points(rng: &mut SimRng, n: usize) -> Vec<Vec2> {
    (0..n).map(|_| unit_disk_point(rng)).collect()
}

fn posterior_draws(g: &Gaussian2D, rng: &mut SimRng, n: usize) -> Vec<Vec2> {
    (0..n).map(|_| g.sample(rng)).collect()
}

fn hit_fraction(draws: &[Vec2], cover: &Cover) -> f64 {
    let r2 = cover.epsilon * cover.epsilon;
    let hits = draws
        .iter()
        .filter(|p| (**p - cover.center).norm_squared() <= r2)
        .count();
    hits as f64 / draws.len() as f64
}

/// Hit-or-miss estimate of φ(m; ε) with its binomial standard error.
pub fn estimate_phi_with_error(
    g: &Gaussian2D,
    cover: &Cover,
    mc_samples: usize,
    rng: &mut SimRng,
) -> Estimate<f64> {
    let n = mc_samples.max(1);
    let draws = posterior_draws(g, rng, n);
    let p = hit_fraction(&draws, cover);
    Estimate {
        value: p,
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
    }
}

/// Hit-or-miss estimate of φ(m; ε), the posterior mass inside the cover.
pub fn estimate_phi(g: &Gaussian2D, cover: &Cover, mc_samples: usize, rng: &mut SimRng) -> f64 {
    estimate_phi_with_error(g, cover, mc_samples, rng).value
}

/// `πε² · mean_j ∇f(m + ε·uⱼ)` for unit-disk points `uⱼ`, with the
/// per-component standard error.
fn phi_gradient_from_offsets(g: &Gaussian2D, cover: &Cover, offsets: &[Vec2]) -> Estimate<Vec2> {
    let n = offsets.len() as f64;
    let (mut sum, mut sum_sq) = (Vec2::ZERO, Vec2::ZERO);
    for &u in offsets {
        let d = g.grad_pdf(cover.center + u * cover.epsilon);
        sum += d;
        sum_sq += Vec2::new(d.x * d.x, d.y * d.y);
    }
    let mean = sum / n;
    let var = Vec2::new(
        (sum_sq.x / n - mean.x * mean.x).max(0.0),
        (sum_sq.y / n - mean.y * mean.y).max(0.0),
    );
    let area = cover.area();
    Estimate {
        value: mean * area,
        std_error: Vec2::new((var.x / n).sqrt(), (var.y / n).sqrt()) * area,
    }
}

/// Uniform-in-disk estimate of ∇ₘφ(m; ε) with per-component standard errors.
pub fn phi_gradient_with_error(
    g: &Gaussian2D,
    cover: &Cover,
    mc_samples: usize,
    rng: &mut SimRng,
) -> Estimate<Vec2> {
    let offsets = unit_disk_points(rng, mc_samples.max(1));
    phi_gradient_from_offsets(g, cover, &offsets)
}

/// Uniform-in-disk estimate of ∇ₘφ(m; ε).
pub fn phi_gradient(g: &Gaussian2D, cover: &Cover, mc_samples: usize, rng: &mut SimRng) -> Vec2 {
    phi_gradient_with_error(g, cover, mc_samples, rng).value
}

/// Regularisation term of cover `i`'s objective.
pub fn regularizer(i: usize, centers: &[Vec2], epsilon: f64, lambda: f64, mode: RegMode) -> f64 {
    let n = centers.len();
    if n <= 1 || lambda == 0.0 {
        return 0.0;
    }
    let mi = centers[i];
    match mode {
        RegMode::Pairwise => {
            let sum: f64 = centers
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &mj)| ((mi - mj).norm_squared() - epsilon).max(0.0))
                .sum();
            lambda / (n - 1) as f64 * sum
        }
        RegMode::Centroid => {
            let c = Vec2::mean(centers).expect("non-empty");
            lambda * (mi - c).norm_squared()
        }
    }
}

/// Gradient of `Σᵢ regularizer(i)` with respect to every centre.
///
/// Pairwise terms appear in both `Φᵢ` and `Φⱼ`, hence the factor two. The
/// hinge is taken as inactive exactly at its kink.
pub fn regularizer_gradient(
    centers: &[Vec2],
    epsilon: f64,
    lambda: f64,
    mode: RegMode,
) -> Vec<Vec2> {
    let n = centers.len();
    if n <= 1 || lambda == 0.0 {
        return vec![Vec2::ZERO; n];
    }
    match mode {
        RegMode::Pairwise => {
            let w = 4.0 * lambda / (n - 1) as f64;
            centers
                .iter()
                .enumerate()
                .map(|(k, &mk)| {
                    centers
                        .iter()
                        .enumerate()
                        .filter(|&(j, &mj)| j != k && (mk - mj).norm_squared() > epsilon)
                        .fold(Vec2::ZERO, |acc, (_, &mj)| acc + (mk - mj) * w)
                })
                .collect()
        }
        RegMode::Centroid => {
            let c = Vec2::mean(centers).expect("non-empty");
            centers.iter().map(|&m| (m - c) * (2.0 * lambda)).collect()
        }
    }
}

/// `Φᵢ = φ(mᵢ) + regularizer(i)`; `i` is 0-based.
#[allow(clippy::too_many_arguments)]
pub fn objective_phi_i(
    i: usize,
    centers: &[Vec2],
    g: &Gaussian2D,
    epsilon: f64,
    lambda: f64,
    mode: RegMode,
    mc_samples: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    if i >= centers.len() {
        return Err(Error::Usage(format!(
            "cover index {i} out of range 0..{}",
            centers.len()
        )));
    }
    let cover = Cover::new(centers[i], epsilon)?;
    Ok(estimate_phi(g, &cover, mc_samples, rng) + regularizer(i, centers, epsilon, lambda, mode))
}

/// `F = Σᵢ Φᵢ`, with common random numbers across covers.
pub fn objective_total(
    centers: &[Vec2],
    g: &Gaussian2D,
    cfg: &MetaConfig,
    rng: &mut SimRng,
) -> f64 {
    let draws = posterior_draws(g, rng, cfg.mc_samples);
    (0..centers.len())
        .map(|i| {
            let cover = Cover {
                center: centers[i],
                epsilon: cfg.epsilon,
            };
            hit_fraction(&draws, &cover)
                + regularizer(i, centers, cfg.epsilon, cfg.lambda, cfg.reg_mode)
        })
        .sum()
}

/// Ascent direction for every cover: `Σ·∇F / (πε²·f(μ))`, as a
/// displacement in mm, clipped to `grad_clip` posterior standard deviations.
///
/// For the φ part `Σ·∇f(x) / f(μ) = −(x − μ)·exp(−½‖x − μ‖²_Σ)`, which stays
/// finite however narrow the posterior is.
fn ascent_directions(
    g: &Gaussian2D,
    cfg: &MetaConfig,
    centers: &[Vec2],
    offsets: &[Vec2],
) -> Vec<Vec2> {
    let reg = regularizer_gradient(centers, cfg.epsilon, cfg.lambda, cfg.reg_mode);
    let cov: SymMat2 = g.cov();
    let mu = g.mean();
    let scale = PI * cfg.epsilon * cfg.epsilon * g.peak_density();
    let max_step = cfg.grad_clip * g.max_variance().sqrt();
    let n = offsets.len() as f64;
    centers
        .iter()
        .zip(reg)
        .map(|(&m, r)| {
            let data = offsets.iter().fold(Vec2::ZERO, |acc, &u| {
                let x = m + u * cfg.epsilon;
                acc - (x - mu) * (-0.5 * g.mahalanobis_sq(x)).exp()
            }) / n;
            let step = data + cov.mul_vec(r) / scale;
            let norm = step.norm();
            if norm > max_step {
                step * (max_step / norm)
            } else {
                step
            }
        })
        .collect()
}

/// Simultaneous gradient ascent of `F` over all cover centres, recording
/// every iterate. Element 0 of the result is `init`.
///
/// At step `t` every cover uses the same unit-disk offsets, drawn from a
/// substream keyed by `t`. Relabelling the covers therefore relabels the
/// output and nothing else.
pub fn optimize_covers_traced(
    g: &Gaussian2D,
    cfg: &MetaConfig,
    init: &[Vec2],
    rng: &mut SimRng,
) -> Result<Vec<Vec<Vec2>>> {
    if init.len() != cfg.n_covers {
        return Err(Error::Usage(format!(
            "expected {} initial covers, got {}",
            cfg.n_covers,
            init.len()
        )));
    }
    let base: u64 = rng.random();
    let mut centers = init.to_vec();
    let mut trace = Vec::with_capacity(cfg.ascent_steps + 1);
    trace.push(centers.clone());
    for t in 0..cfg.ascent_steps {
        let offsets = unit_disk_points(
            &mut stream(base, &[tag::OPTIMIZE, t as u64]),
            cfg.mc_samples,
        );
        let dirs = ascent_directions(g, cfg, &centers, &offsets);
        for (m, d) in centers.iter_mut().zip(dirs) {
            *m += d * cfg.step_size;
            if !m.is_finite() {
                return Err(Error::Internal(format!(
                    "non-finite cover centre at ascent step {t}"
                )));
            }
        }
        trace.push(centers.clone());
    }
    Ok(trace)
}

/// Gradient ascent of `F`; returns the final centres.
pub fn optimize_covers(
    g: &Gaussian2D,
    cfg: &MetaConfig,
    init: &[Vec2],
    rng: &mut SimRng,
) -> Result<Vec<Vec2>> {
    let mut trace = optimize_covers_traced(g, cfg, init, rng)?;
    Ok(trace.pop().expect("trace holds at least the initial state"))
}

/// Initial covers around the mean of `g`: a ring of radius
/// `init_radius_sigmas·σ_max`, optionally with one cover at the mean.
pub fn initial_covers(g: &Gaussian2D, cfg: &MetaConfig, rotation: f64) -> Vec<Vec2> {
    let mean = g.mean();
    let n = cfg.n_covers;
    if n == 1 {
        return vec![mean];
    }
    let radius = cfg.init_radius_sigmas * g.max_variance().sqrt();
    (0..n)
        .map(|k| mean + Vec2::from_angle(rotation + 2.0 * PI * k as f64 / n as f64) * radius)
        .collect()
}

/// Sorts centres by estimated φ, highest first; ties keep input order.
///
/// All centres are scored against the same posterior draws, so a centre's
/// score depends only on its position.
pub fn rank_candidates(
    centers: &[Vec2],
    g: &Gaussian2D,
    epsilon: f64,
    mc_samples: usize,
    rng: &mut SimRng,
) -> Result<Vec<Vec2>> {
    if centers.is_empty() {
        return Err(Error::Usage("cannot rank an empty candidate list".into()));
    }
    if centers.len() == 1 {
        return Ok(centers.to_vec());
    }
    let draws = posterior_draws(g, rng, mc_samples.max(1));
    let mut scored: Vec<(f64, Vec2)> = centers
        .iter()
        .map(|&c| (hit_fraction(&draws, &Cover { center: c, epsilon }), c))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(scored.into_iter().map(|(_, c)| c).collect())
}

/// Per-hole belief about the feasible-area centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    prior: Gaussian2D,
    dist: Gaussian2D,
    observations: Vec<Vec2>,
}

/// Below this many observations the prior covariance is kept.
pub const MIN_OBSERVATIONS_FOR_COVARIANCE: usize = 2;

impl Posterior {
    /// `N(m₀, I)` around the predefined insertion position.
    pub fn new(predefined: Vec2) -> Result<Self> {
        let prior = Gaussian2D::isotropic(predefined, 1.0)?;
        Ok(Self::from_prior(prior))
    }

    pub fn from_prior(prior: Gaussian2D) -> Self {
        Posterior {
            prior,
            dist: prior,
            observations: Vec::new(),
        }
    }

    pub fn dist(&self) -> &Gaussian2D {
        &self.dist
    }

    pub fn prior(&self) -> &Gaussian2D {
        &self.prior
    }

    pub fn observations(&self) -> &[Vec2] {
        &self.observations
    }

    /// Appends observations and refits with the configured estimator.
    pub fn update(&mut self, points: &[Vec2], cfg: &MetaConfig) -> Result<()> {
        if points.is_empty() {
            return Ok(());
        }
        self.observations.extend_from_slice(points);
        let obs = &self.observations;
        let (mean, cov) = match cfg.estimator {
            Estimator::Mle => gaussian::mle_raw(obs)?,
            Estimator::Map => {
                gaussian::map_raw(obs, self.prior.mean(), cfg.map_lambda1, cfg.map_lambda2)?
            }
        };
        let cov = if obs.len() < MIN_OBSERVATIONS_FOR_COVARIANCE {
            self.prior.cov()
        } else {
            cov
        };
        self.dist = Gaussian2D::from_estimate(mean, cov)?;
        Ok(())
    }
}

const MAX_ROUNDS: usize = 64;

/// Distribution the covers are optimised against in `round`: isotropic
/// around `mean`, with the initial ring at `first_ring · round_inflation^round`.
pub fn round_distribution(mean: Vec2, cfg: &MetaConfig, round: usize) -> Result<Gaussian2D> {
    let ring = cfg.first_ring * cfg.round_inflation.powi(round as i32);
    let sd = ring / cfg.init_radius_sigmas;
    Gaussian2D::isotropic(mean, sd * sd)
}

/// Candidates for one round: covers optimised against
/// [`round_distribution`], ranked by φ under the posterior itself.
pub fn round_candidates(
    dist: &Gaussian2D,
    cfg: &MetaConfig,
    round: usize,
    rng: &mut SimRng,
) -> Result<Vec<Vec2>> {
    let g = round_distribution(dist.mean(), cfg, round)?;
    let mut best: Option<(f64, Vec<Vec2>)> = None;
    for restart in 0..cfg.restarts {
        let rotation = if restart == 0 {
            0.0
        } else {
            2.0 * PI * stream(rng.random(), &[tag::RESTART]).random::<f64>()
        };
        let init = initial_covers(&g, cfg, rotation);
        let covers = optimize_covers(&g, cfg, &init, rng)?;
        if cfg.restarts == 1 {
            best = Some((0.0, covers));
            break;
        }
        let score = objective_total(&covers, &g, cfg, rng);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, covers));
        }
    }
    let (_, covers) = best.expect("at least one restart");
    rank_candidates(&covers, dist, cfg.rank_tolerance, cfg.rank_samples, rng)
}

/// One outer iteration of the meta search on a hole.
///
/// The posterior mean is tried first, then rounds of optimised, ranked
/// candidates until the hole is hit or the budget is spent. A candidate within `min_spacing` of an earlier failed
/// attempt is skipped. On success the posterior is refitted; on failure it
/// is returned unchanged.
#[allow(clippy::too_many_arguments)]
pub fn meta_insert(
    session: &mut InsertionSession<'_>,
    board: usize,
    hole: usize,
    posterior: &Posterior,
    cfg: &MetaConfig,
    budget: usize,
    rng: &mut SimRng,
) -> Result<(SearchResult, Posterior)> {
    if budget < 1 {
        return Err(Error::Usage("search budget must be >= 1".into()));
    }
    let base: u64 = rng.random();
    let mut trajectory: Vec<Vec2> = Vec::new();
    let mut pending = vec![posterior.dist().mean()];
    let mut round = 0;
    while trajectory.len() < budget {
        for c in pending.drain(..) {
            if trajectory.len() >= budget {
                break;
            }
            if trajectory.iter().any(|t| t.distance(c) < cfg.min_spacing) {
                continue;
            }
            trajectory.push(c);
            if session.attempt_insert(board, hole, c)?.success {
                let mut updated = posterior.clone();
                let evidence: &[Vec2] = if cfg.update_with_all_attempts {
                    &trajectory
                } else {
                    std::slice::from_ref(&c)
                };
                updated.update(evidence, cfg)?;
                return Ok((SearchResult::from_trajectory(trajectory, true), updated));
            }
        }
        if round == MAX_ROUNDS {
            break;
        }
        let mut round_rng = stream(base, &[tag::META, round as u64]);
        pending = round_candidates(posterior.dist(), cfg, round, &mut round_rng)?;
        round += 1;
    }
    Ok((
        SearchResult::from_trajectory(trajectory, false),
        posterior.clone(),
    ))
}
