//! Experiment protocol: every method on every hole of every board, repeated
//! over seeds, plus the adaptation series and the λ ablation.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{default_paper_scenario, generate_scenario, ScenarioSpec};
use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::meta::{meta_insert, MetaConfig, Posterior};
use crate::rng::{stream, tag};
use crate::strategies::{run_strategy, HybridSchedule, LinearParams, SpiralParams, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Linear,
    Spiral,
    Hybrid,
    Meta,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Linear, Method::Spiral, Method::Hybrid, Method::Meta];

    pub fn name(self) -> &'static str {
        match self {
            Method::Linear => "linear",
            Method::Spiral => "spiral",
            Method::Hybrid => "hybrid",
            Method::Meta => "meta",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    /// Attempts allowed per hole.
    pub budget: usize,
    /// One replication per seed; each regenerates the scenario.
    pub seeds: Vec<u64>,
    pub linear: LinearParams,
    pub spiral: SpiralParams,
    pub hybrid_schedule: HybridSchedule,
    pub meta: MetaConfig,
    pub scenario: ScenarioSpec,
}

pub const DEFAULT_BUDGET: usize = 60;
pub const DEFAULT_SEED_COUNT: u64 = 20;

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: Method::ALL.to_vec(),
            budget: DEFAULT_BUDGET,
            seeds: (0..DEFAULT_SEED_COUNT).collect(),
            linear: LinearParams::default(),
            spiral: SpiralParams::default(),
            hybrid_schedule: HybridSchedule::default(),
            meta: MetaConfig::default(),
            scenario: default_paper_scenario(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::config("methods", format!("duplicate method {m}")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.budget < 1 {
            return Err(Error::config("budget", "must be >= 1"));
        }
        self.linear.validate()?;
        self.spiral.validate()?;
        self.meta.validate()?;
        self.scenario.validate()
    }

    fn strategy(&self, method: Method) -> Option<Strategy> {
        match method {
            Method::Linear => Some(Strategy::Linear(self.linear)),
            Method::Spiral => Some(Strategy::Spiral(self.spiral)),
            Method::Hybrid => Some(Strategy::Hybrid {
                linear: self.linear,
                spiral: self.spiral,
                schedule: self.hybrid_schedule,
            }),
            Method::Meta => None,
        }
    }
}

/// Outcome of one method on one hole of one board.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleRecord {
    pub method: Method,
    pub seed: u64,
    /// 1-based.
    pub board: usize,
    /// 1-based hole id.
    pub hole: usize,
    /// Attempts used; the full budget when the hole was not solved.
    pub attempts: usize,
    pub success: bool,
    pub sim_time_s: f64,
    pub final_position: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub records: Vec<HoleRecord>,
}

/// Start point for a baseline: the mean of earlier successful positions, or
/// the nominal position when there are none.
pub fn averaging_init(history: &[Vec2], nominal: Vec2) -> Vec2 {
    Vec2::mean(history).unwrap_or(nominal)
}

fn run_method(config: &ExperimentConfig, seed: u64, method: Method) -> Result<Vec<HoleRecord>> {
    let mut spec = config.scenario.clone();
    spec.seed = seed;
    let scenario = generate_scenario(&spec)?;
    let mut session = scenario.session();
    let strategy = config.strategy(method);
    let mut history: Vec<Vec<Vec2>> = vec![Vec::new(); spec.holes.len()];
    let mut posteriors = spec
        .holes
        .iter()
        .map(|h| Posterior::new(h.nominal))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(spec.boards * spec.holes.len());
    for board in 1..=spec.boards {
        for (k, hole) in spec.holes.iter().enumerate() {
            let slot = k + 1;
            let result = match &strategy {
                Some(s) => {
                    let start = averaging_init(&history[k], hole.nominal);
                    let r = run_strategy(s, &mut session, board, slot, start, config.budget)?;
                    if r.success {
                        history[k].push(r.final_position);
                    }
                    r
                }
                None => {
                    let mut rng = stream(seed, &[tag::META, board as u64, hole.id as u64]);
                    let (r, post) = meta_insert(
                        &mut session,
                        board,
                        slot,
                        &posteriors[k],
                        &config.meta,
                        config.budget,
                        &mut rng,
                    )?;
                    posteriors[k] = post;
                    r
                }
            };
            let attempts = if result.success {
                result.attempts
            } else {
                config.budget
            };
            records.push(HoleRecord {
                method,
                seed,
                board,
                hole: hole.id,
                attempts,
                success: result.success,
                sim_time_s: spec.cost.sim_time(attempts),
                final_position: result.final_position,
            });
        }
    }
    Ok(records)
}

/// Runs every (seed, method) pair. Pairs run in parallel; records are
/// assembled in seed, method, board, hole order regardless of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let jobs: Vec<(u64, Method)> = config
        .seeds
        .iter()
        .flat_map(|&s| config.methods.iter().map(move |&m| (s, m)))
        .collect();
    let chunks = jobs
        .par_iter()
        .map(|&(seed, method)| run_method(config, seed, method))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        records: chunks.into_iter().flatten().collect(),
    })
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Per-board averages for one method and hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardSeries {
    pub attempts: Vec<f64>,
    pub sim_time_s: Vec<f64>,
}

impl ExperimentReport {
    pub fn methods(&self) -> Vec<Method> {
        let mut ms: Vec<Method> = self.records.iter().map(|r| r.method).collect();
        ms.sort();
        ms.dedup();
        ms
    }

    pub fn board_count(&self) -> usize {
        self.records.iter().map(|r| r.board).max().unwrap_or(0)
    }

    fn of(&self, method: Method) -> impl Iterator<Item = &HoleRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }

    pub fn mean_attempts(&self, method: Method) -> f64 {
        mean(self.of(method).map(|r| r.attempts as f64))
    }

    pub fn success_rate(&self, method: Method) -> f64 {
        mean(self.of(method).map(|r| if r.success { 1.0 } else { 0.0 }))
    }

    /// Mean attempts per hole on each board, averaged over holes and seeds.
    pub fn board_mean_attempts(&self, method: Method) -> Vec<f64> {
        (1..=self.board_count())
            .map(|b| {
                mean(
                    self.of(method)
                        .filter(|r| r.board == b)
                        .map(|r| r.attempts as f64),
                )
            })
            .collect()
    }

    /// Time to assemble each board (sum over its holes), averaged over seeds.
    pub fn cycle_times(&self, method: Method) -> Vec<f64> {
        let mut per: BTreeMap<(usize, u64), f64> = BTreeMap::new();
        for r in self.of(method) {
            *per.entry((r.board, r.seed)).or_default() += r.sim_time_s;
        }
        (1..=self.board_count())
            .map(|b| mean(per.range((b, 0)..=(b, u64::MAX)).map(|(_, &t)| t)))
            .collect()
    }
}

/// Per-board series of one hole for every method in the report.
pub fn adaptation_series(
    report: &ExperimentReport,
    hole: usize,
) -> Result<BTreeMap<Method, BoardSeries>> {
    if !report.records.iter().any(|r| r.hole == hole) {
        return Err(Error::Usage(format!("hole {hole} is not in the report")));
    }
    let boards = report.board_count();
    let mut out = BTreeMap::new();
    for method in report.methods() {
        let rows: Vec<&HoleRecord> = report.of(method).filter(|r| r.hole == hole).collect();
        let at = |b: usize, f: fn(&HoleRecord) -> f64| {
            mean(rows.iter().filter(|r| r.board == b).map(|r| f(r)))
        };
        out.insert(
            method,
            BoardSeries {
                attempts: (1..=boards).map(|b| at(b, |r| r.attempts as f64)).collect(),
                sim_time_s: (1..=boards).map(|b| at(b, |r| r.sim_time_s)).collect(),
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub lambda: f64,
    pub mean_attempts: f64,
    pub mean_sim_time_s: f64,
    pub success_rate: f64,
}

/// Reruns the meta search for each λ with the base config's seeds.
pub fn ablation_sweep(base: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<AblationRow>> {
    if lambdas.is_empty() {
        return Err(Error::Usage("ablation needs at least one lambda".into()));
    }
    if !base.methods.contains(&Method::Meta) {
        return Err(Error::Usage("ablation requires the meta method".into()));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let mut cfg = base.clone();
            cfg.methods = vec![Method::Meta];
            cfg.meta.lambda = lambda;
            let report = run_experiment(&cfg)?;
            Ok(AblationRow {
                lambda,
                mean_attempts: report.mean_attempts(Method::Meta),
                mean_sim_time_s: mean(report.records.iter().map(|r| r.sim_time_s)),
                success_rate: report.success_rate(Method::Meta),
            })
        })
        .collect()
}

/// λ values swept by default.
pub const DEFAULT_ABLATION_LAMBDAS: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub records: usize,
    /// Mean over boards of the per-board cycle time.
    pub average_cycle_time_s: f64,
    pub cycle_times_s: Vec<f64>,
    pub mean_sim_time_s: f64,
    pub mean_attempts: f64,
    pub success_rate: f64,
    pub attempts_min: usize,
    pub attempts_median: f64,
    pub attempts_max: usize,
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) as f64
    }
}

pub fn summarize(report: &ExperimentReport) -> Result<Vec<MethodSummary>> {
    if report.records.is_empty() {
        return Err(Error::Usage("cannot summarise an empty report".into()));
    }
    Ok(report
        .methods()
        .into_iter()
        .map(|method| {
            let mut attempts: Vec<usize> = report.of(method).map(|r| r.attempts).collect();
            attempts.sort_unstable();
            let cycle_times_s = report.cycle_times(method);
            MethodSummary {
                method,
                records: attempts.len(),
                average_cycle_time_s: mean(cycle_times_s.iter().copied()),
                cycle_times_s,
                mean_sim_time_s: mean(report.of(method).map(|r| r.sim_time_s)),
                mean_attempts: report.mean_attempts(method),
                success_rate: report.success_rate(method),
                attempts_min: attempts[0],
                attempts_median: median(&attempts),
                attempts_max: attempts[attempts.len() - 1],
            }
        })
        .collect())
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; NaN when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Usage(
            "spearman needs two equal-length series of length >= 2".into(),
        ));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, my) = (mean(rx.iter().copied()), mean(ry.iter().copied()));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman correlation of a series with its 1-based index.
pub fn trend(series: &[f64]) -> Result<f64> {
    let idx: Vec<f64> = (1..=series.len()).map(|i| i as f64).collect();
    spearman(&idx, series)
}
