//! Simulated insertion environment.
//!
//! A [`Scenario`] is a sequence of boards; on each board every hole has a
//! realised feasible disk (centre and radius). An insertion attempt at a
//! position succeeds iff the position lies in that disk, boundary included.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian2D;
use crate::linalg::{SymMat2, Vec2};
use crate::rng::{stream, tag, SimRng};

const RADIUS_RETRIES: usize = 1000;

/// How a realised radius is drawn around `radius_mean`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusModel {
    /// `radius_mean + U(−jitter, +jitter)`.
    #[default]
    Uniform,
    /// `N(radius_mean, jitter²)`, redrawn while non-positive.
    TruncatedGaussian,
}

/// One hole on the board template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleSpec {
    pub id: usize,
    /// The predefined insertion position the robot is taught.
    pub nominal: Vec2,
    /// Ground-truth distribution of the feasible-area centre.
    pub truth: Gaussian2D,
    pub radius_mean: f64,
    pub radius_jitter: f64,
    #[serde(default)]
    pub abnormal: bool,
}

/// Affine map from attempts to simulated seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub time_per_attempt_s: f64,
    pub overhead_per_hole_s: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            time_per_attempt_s: 1.5,
            overhead_per_hole_s: 4.0,
        }
    }
}

impl CostModel {
    pub fn sim_time(&self, attempts: usize) -> f64 {
        self.overhead_per_hole_s + attempts as f64 * self.time_per_attempt_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub boards: usize,
    pub holes: Vec<HoleSpec>,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub radius_model: RadiusModel,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.boards < 1 {
            return Err(Error::config("scenario.boards", "must be >= 1"));
        }
        if self.holes.is_empty() {
            return Err(Error::config(
                "scenario.holes",
                "at least one hole is required",
            ));
        }
        for (k, h) in self.holes.iter().enumerate() {
            let key = |field: &str| format!("scenario.holes[{k}].{field}");
            if h.id != k + 1 {
                return Err(Error::config(
                    key("id"),
                    format!("expected id {}, got {}", k + 1, h.id),
                ));
            }
            if !h.nominal.is_finite() {
                return Err(Error::config(key("nominal"), "must be finite"));
            }
            if !(h.radius_mean > 0.0) || !h.radius_mean.is_finite() {
                return Err(Error::config(key("radius_mean"), "must be > 0"));
            }
            if !(h.radius_jitter >= 0.0 && h.radius_jitter < h.radius_mean) {
                return Err(Error::config(
                    key("radius_jitter"),
                    "must satisfy 0 <= radius_jitter < radius_mean",
                ));
            }
        }
        let c = &self.cost;
        if !(c.time_per_attempt_s > 0.0) || !c.time_per_attempt_s.is_finite() {
            return Err(Error::config(
                "scenario.cost.time_per_attempt_s",
                "must be > 0",
            ));
        }
        if !(c.overhead_per_hole_s > 0.0) || !c.overhead_per_hole_s.is_finite() {
            return Err(Error::config(
                "scenario.cost.overhead_per_hole_s",
                "must be > 0",
            ));
        }
        Ok(())
    }

    pub fn hole(&self, id: usize) -> Option<&HoleSpec> {
        id.checked_sub(1).and_then(|k| self.holes.get(k))
    }
}

/// Realised feasible disk of one hole on one board.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedHole {
    pub center: Vec2,
    pub radius: f64,
}

impl RealizedHole {
    /// Boundary-inclusive membership test.
    pub fn contains(&self, p: Vec2) -> bool {
        p.distance(self.center) <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardRealization {
    /// 1-based.
    pub board_index: usize,
    pub holes: Vec<RealizedHole>,
}

/// Immutable realisation of a [`ScenarioSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    spec: ScenarioSpec,
    boards: Vec<BoardRealization>,
}

/// Result of one insertion attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsertOutcome {
    pub success: bool,
    /// 1-based count of attempts on this (board, hole) so far, this one included.
    pub attempt_index: usize,
}

fn draw_radius(hole: &HoleSpec, model: RadiusModel, rng: &mut SimRng) -> Result<f64> {
    for _ in 0..RADIUS_RETRIES {
        let r = match model {
            RadiusModel::Uniform => {
                if hole.radius_jitter > 0.0 {
                    hole.radius_mean + rng.random_range(-hole.radius_jitter..=hole.radius_jitter)
                } else {
                    hole.radius_mean
                }
            }
            RadiusModel::TruncatedGaussian => {
                if hole.radius_jitter > 0.0 {
                    Normal::new(hole.radius_mean, hole.radius_jitter)
                        .map_err(|e| Error::Internal(e.to_string()))?
                        .sample(rng)
                } else {
                    hole.radius_mean
                }
            }
        };
        if r > 0.0 {
            return Ok(r);
        }
    }
    Err(Error::Internal(format!(
        "hole {}: no positive radius after {RADIUS_RETRIES} draws",
        hole.id
    )))
}

/// Realises every board of `spec`. Each (board, hole) pair draws from its
/// own substream of `spec.seed`, so boards are independent of hole count.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut boards = Vec::with_capacity(spec.boards);
    for b in 1..=spec.boards {
        let holes = spec
            .holes
            .iter()
            .map(|h| {
                let mut rng = stream(spec.seed, &[tag::SCENARIO, b as u64, h.id as u64]);
                let center = h.truth.sample(&mut rng);
                let radius = draw_radius(h, spec.radius_model, &mut rng)?;
                Ok(RealizedHole { center, radius })
            })
            .collect::<Result<Vec<_>>>()?;
        boards.push(BoardRealization {
            board_index: b,
            holes,
        });
    }
    Ok(Scenario {
        spec: spec.clone(),
        boards,
    })
}

impl Scenario {
    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn boards(&self) -> &[BoardRealization] {
        &self.boards
    }

    pub fn board_count(&self) -> usize {
        self.boards.len()
    }

    pub fn hole_count(&self) -> usize {
        self.spec.holes.len()
    }

    /// Realised disk for a 1-based (board, hole).
    pub fn realized(&self, board: usize, hole: usize) -> Result<&RealizedHole> {
        let b = board
            .checked_sub(1)
            .and_then(|k| self.boards.get(k))
            .ok_or_else(|| {
                Error::Usage(format!(
                    "board {board} out of range 1..={}",
                    self.boards.len()
                ))
            })?;
        hole.checked_sub(1)
            .and_then(|k| b.holes.get(k))
            .ok_or_else(|| Error::Usage(format!("hole {hole} out of range 1..={}", b.holes.len())))
    }

    /// A fresh attempt-counting session over this scenario.
    pub fn session(&self) -> InsertionSession<'_> {
        InsertionSession::new(self)
    }
}

/// Per-run mutable state: attempt counters for every (board, hole).
#[derive(Debug)]
pub struct InsertionSession<'a> {
    scenario: &'a Scenario,
    attempts: Vec<usize>,
}

impl<'a> InsertionSession<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        InsertionSession {
            scenario,
            attempts: vec![0; scenario.board_count() * scenario.hole_count()],
        }
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    /// Tries to insert at `position`; success iff the position is inside the
    /// realised feasible disk (boundary inclusive).
    pub fn attempt_insert(
        &mut self,
        board: usize,
        hole: usize,
        position: Vec2,
    ) -> Result<InsertOutcome> {
        let disk = self.scenario.realized(board, hole)?;
        let slot = (board - 1) * self.scenario.hole_count() + (hole - 1);
        self.attempts[slot] += 1;
        Ok(InsertOutcome {
            success: disk.contains(position),
            attempt_index: self.attempts[slot],
        })
    }

    pub fn attempts(&self, board: usize, hole: usize) -> usize {
        if board == 0
            || hole == 0
            || board > self.scenario.board_count()
            || hole > self.scenario.hole_count()
        {
            return 0;
        }
        self.attempts[(board - 1) * self.scenario.hole_count() + (hole - 1)]
    }
}

/// Nominal board layout: a 3×3 grid with 20 mm pitch.
fn grid_nominal(id: usize) -> Vec2 {
    let k = id - 1;
    Vec2::new(20.0 * (k % 3) as f64, 20.0 * (k / 3) as f64)
}

/// Index of the abnormal hole in the default scenario.
pub const DEFAULT_ABNORMAL_HOLE: usize = 7;

/// Ten boards of nine holes; hole 7 is abnormal (wider and further offset).
pub fn default_paper_scenario() -> ScenarioSpec {
    let holes = (1..=9)
        .map(|id| {
            let nominal = grid_nominal(id);
            let abnormal = id == DEFAULT_ABNORMAL_HOLE;
            let (bias, sd) = if abnormal {
                (Vec2::new(1.2, 0.8), 0.6)
            } else {
                (Vec2::new(0.3, -0.2), 0.15)
            };
            HoleSpec {
                id,
                nominal,
                truth: Gaussian2D::new(nominal + bias, SymMat2::diagonal(sd * sd, sd * sd))
                    .expect("default truth covariance is positive definite"),
                radius_mean: 0.5,
                radius_jitter: 0.1,
                abnormal,
            }
        })
        .collect();
    ScenarioSpec {
        boards: 10,
        holes,
        cost: CostModel::default(),
        radius_model: RadiusModel::Uniform,
        seed: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degenerate_spec() -> ScenarioSpec {
        let mut spec = default_paper_scenario();
        for h in &mut spec.holes {
            h.truth = Gaussian2D::isotropic(h.truth.mean(), 1e-24).unwrap();
            h.radius_jitter = 0.0;
        }
        spec
    }

    #[test]
    fn degenerate_distributions_give_identical_boards() {
        let spec = degenerate_spec();
        let sc = generate_scenario(&spec).unwrap();
        for b in sc.boards() {
            for (h, spec_h) in b.holes.iter().zip(&spec.holes) {
                assert!(h.center.distance(spec_h.truth.mean()) < 1e-9);
                assert_eq!(h.radius, 0.5);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = default_paper_scenario();
        assert_eq!(
            generate_scenario(&spec).unwrap(),
            generate_scenario(&spec).unwrap()
        );
    }

    #[test]
    fn different_seeds_differ() {
        for s in 0..10u64 {
            let mut a = default_paper_scenario();
            let mut b = default_paper_scenario();
            a.seed = s;
            b.seed = s + 1000;
            let (sa, sb) = (
                generate_scenario(&a).unwrap(),
                generate_scenario(&b).unwrap(),
            );
            let differ = sa.boards().iter().zip(sb.boards()).any(|(x, y)| {
                x.holes
                    .iter()
                    .zip(&y.holes)
                    .any(|(p, q)| p.center != q.center)
            });
            assert!(differ);
        }
    }

    #[test]
    fn center_spread_matches_truth() {
        let spec = ScenarioSpec {
            boards: 200,
            holes: vec![HoleSpec {
                id: 1,
                nominal: Vec2::ZERO,
                truth: Gaussian2D::isotropic(Vec2::ZERO, 0.04).unwrap(),
                radius_mean: 0.5,
                radius_jitter: 0.1,
                abnormal: false,
            }],
            cost: CostModel::default(),
            radius_model: RadiusModel::Uniform,
            seed: 42,
        };
        let sc = generate_scenario(&spec).unwrap();
        let xs: Vec<f64> = sc.boards().iter().map(|b| b.holes[0].center.x).collect();
        let ys: Vec<f64> = sc.boards().iter().map(|b| b.holes[0].center.y).collect();
        for v in [xs, ys] {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((0.17..=0.23).contains(&sd), "sd = {sd}");
        }
    }

    #[test]
    fn radii_respect_jitter_bounds() {
        let sc = generate_scenario(&default_paper_scenario()).unwrap();
        for b in sc.boards() {
            for h in &b.holes {
                assert!((0.4..=0.6).contains(&h.radius));
            }
        }
        let mut spec = default_paper_scenario();
        spec.radius_model = RadiusModel::TruncatedGaussian;
        let sc = generate_scenario(&spec).unwrap();
        assert!(sc
            .boards()
            .iter()
            .all(|b| b.holes.iter().all(|h| h.radius > 0.0)));
    }

    #[test]
    fn boundary_is_inclusive() {
        let spec = degenerate_spec();
        let sc = generate_scenario(&spec).unwrap();
        let disk = *sc.realized(1, 1).unwrap();
        let mut session = sc.session();
        assert!(session.attempt_insert(1, 1, disk.center).unwrap().success);
        let edge = RealizedHole {
            center: Vec2::new(1.0, 2.0),
            radius: 0.5,
        };
        assert!(edge.contains(Vec2::new(1.5, 2.0)));
        assert!(edge.contains(Vec2::new(1.0, 1.5)));
        assert!(!edge.contains(Vec2::new(1.5 + 1e-12, 2.0)));
        assert!(session.attempt_insert(1, 1, disk.center).unwrap().success);
        let outside = Vec2::new(disk.center.x + disk.radius + 1e-9, disk.center.y);
        let o = session.attempt_insert(1, 1, outside).unwrap();
        assert!(!o.success);
        assert_eq!(o.attempt_index, 3);
    }

    #[test]
    fn repeated_queries_are_pure_and_counted() {
        let sc = generate_scenario(&default_paper_scenario()).unwrap();
        let mut session = sc.session();
        let p = Vec2::new(0.2, 0.1);
        let first = session.attempt_insert(2, 3, p).unwrap();
        for k in 2..=5 {
            let o = session.attempt_insert(2, 3, p).unwrap();
            assert_eq!(o.success, first.success);
            assert_eq!(o.attempt_index, k);
        }
        assert_eq!(session.attempts(2, 3), 5);
        assert_eq!(session.attempts(2, 4), 0);
    }

    #[test]
    fn out_of_range_is_usage_error() {
        let sc = generate_scenario(&default_paper_scenario()).unwrap();
        let mut session = sc.session();
        assert!(matches!(
            session.attempt_insert(0, 1, Vec2::ZERO),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            session.attempt_insert(11, 1, Vec2::ZERO),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            session.attempt_insert(1, 10, Vec2::ZERO),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn default_scenario_shape() {
        let spec = default_paper_scenario();
        spec.validate().unwrap();
        assert_eq!(spec.boards, 10);
        assert_eq!(spec.holes.len(), 9);
        let abnormal: Vec<usize> = spec
            .holes
            .iter()
            .filter(|h| h.abnormal)
            .map(|h| h.id)
            .collect();
        assert_eq!(abnormal, vec![7]);
        let det7 = spec.hole(7).unwrap().truth.det();
        assert!(spec
            .holes
            .iter()
            .filter(|h| !h.abnormal)
            .all(|h| h.truth.det() < det7));
    }

    #[test]
    fn validation_names_the_key() {
        let mut spec = default_paper_scenario();
        spec.holes[2].radius_jitter = 0.7;
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("radius_jitter"), "{err}");
        let mut spec = default_paper_scenario();
        spec.cost.time_per_attempt_s = 0.0;
        assert!(spec
            .validate()
            .unwrap_err()
            .to_string()
            .contains("time_per_attempt_s"));
    }
}
