//! Machinery shared by the population-based optimizers: the penalized
//! objective, bound handling, the stagnation stopping rule, seeded random
//! sources and the multi-trial runner.

use std::io::Write;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{delay_msec, FlowVector, NetworkTopology};

pub const DEFAULT_EPSILON_CAPACITY: f64 = 1e-3;

/// Range of the uniform initial flows, kbps.
pub const INIT_RANGE: (f64, f64) = (1.0, 50.0);

/// Random source owned by a single optimizer run.
pub type SearchRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Minimize the average delay at a fixed total load, subject to
/// `0 <= f_i <= C_i - epsilon` and `Σf = load`.
#[derive(Debug, Clone)]
pub struct SearchObjective {
    topology: NetworkTopology,
    load_kbps: f64,
    penalty_weight: f64,
    epsilon_capacity: f64,
    upper: Vec<f64>,
}

/// Default budget penalty weight, msec per unit relative violation:
/// `1000 / (C_min (1 - ρ)^2)` with `ρ = load / ΣC`.
///
/// This is the largest marginal delay at uniform utilization `ρ`, which
/// bounds the optimal water-filling level λ from above. The multiplier of the
/// budget constraint is `(1000 λ - T) / load`, so the linear penalty is exact:
/// no under- or over-budget point beats the constrained optimum.
pub fn default_penalty_weight(topology: &NetworkTopology, load_kbps: f64) -> f64 {
    let rho = load_kbps / topology.total_capacity();
    1000.0 / (topology.min_capacity() * (1.0 - rho).powi(2))
}

impl SearchObjective {
    /// Objective with [`default_penalty_weight`] and
    /// [`DEFAULT_EPSILON_CAPACITY`].
    pub fn new(topology: NetworkTopology, load_kbps: f64) -> Result<Self> {
        let weight = default_penalty_weight(&topology, load_kbps);
        Self::with_params(topology, load_kbps, weight, DEFAULT_EPSILON_CAPACITY)
    }

    pub fn with_params(
        topology: NetworkTopology,
        load_kbps: f64,
        penalty_weight: f64,
        epsilon_capacity: f64,
    ) -> Result<Self> {
        let total = topology.total_capacity();
        if !(load_kbps > 0.0 && load_kbps < total) {
            return Err(Error::Domain(format!(
                "load {load_kbps} kbps outside (0, {total}) kbps"
            )));
        }
        if !(penalty_weight > 0.0 && penalty_weight.is_finite()) {
            return Err(Error::InvalidConfig(
                "penalty weight must be positive".into(),
            ));
        }
        if !(epsilon_capacity > 0.0 && epsilon_capacity < topology.min_capacity()) {
            return Err(Error::InvalidConfig(
                "epsilon_capacity must be in (0, min capacity)".into(),
            ));
        }
        let upper = topology
            .links()
            .iter()
            .map(|l| l.capacity_kbps - epsilon_capacity)
            .collect();
        Ok(SearchObjective {
            topology,
            load_kbps,
            penalty_weight,
            epsilon_capacity,
            upper,
        })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn load_kbps(&self) -> f64 {
        self.load_kbps
    }

    pub fn penalty_weight(&self) -> f64 {
        self.penalty_weight
    }

    pub fn epsilon_capacity(&self) -> f64 {
        self.epsilon_capacity
    }

    pub fn dim(&self) -> usize {
        self.upper.len()
    }

    /// Per-link upper bounds `C_i - epsilon`.
    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    /// Clamps every component into `[0, C_i - epsilon]`. NaN maps to 0.
    pub fn clamp_in_place(&self, candidate: &mut [f64]) {
        for (x, &ub) in candidate.iter_mut().zip(&self.upper) {
            *x = x.max(0.0).min(ub);
        }
    }

    pub fn clamped(&self, candidate: &[f64]) -> Vec<f64> {
        let mut v = candidate.to_vec();
        self.clamp_in_place(&mut v);
        v
    }

    /// `|Σf - load| / load`.
    pub fn residual(&self, flows: &[f64]) -> f64 {
        (flows.iter().sum::<f64>() - self.load_kbps).abs() / self.load_kbps
    }

    /// See [`penalized_fitness`].
    pub fn fitness(&self, candidate: &[f64]) -> f64 {
        penalized_fitness(self, candidate)
    }
}

/// Delay of the clamped candidate plus `penalty_weight * |Σf - load| / load`.
///
/// Total over all inputs of the right length: a clamped candidate carrying no
/// flow contributes zero delay and the full penalty.
pub fn penalized_fitness(obj: &SearchObjective, candidate: &[f64]) -> f64 {
    debug_assert_eq!(candidate.len(), obj.dim());
    let mut total = 0.0;
    let mut ratio_sum = 0.0;
    for ((&x, &ub), link) in candidate.iter().zip(&obj.upper).zip(obj.topology.links()) {
        let f = x.max(0.0).min(ub);
        total += f;
        ratio_sum += f / (link.capacity_kbps - f);
    }
    let delay = if total > 0.0 {
        1000.0 * ratio_sum / total
    } else {
        0.0
    };
    delay + obj.penalty_weight * (total - obj.load_kbps).abs() / obj.load_kbps
}

/// Stop once the best fitness has changed by less than `delta_threshold`
/// for `stagnation_window` consecutive generations, or at `max_generations`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationRule {
    pub stagnation_window: usize,
    pub delta_threshold: f64,
    pub max_generations: usize,
}

impl Default for TerminationRule {
    fn default() -> Self {
        TerminationRule {
            stagnation_window: 20,
            delta_threshold: 1e-8,
            max_generations: 5000,
        }
    }
}

impl TerminationRule {
    pub fn validate(&self) -> Result<()> {
        if self.stagnation_window < 1 {
            return Err(Error::InvalidConfig(
                "stagnation window must be >= 1".into(),
            ));
        }
        if !(self.delta_threshold > 0.0) {
            return Err(Error::InvalidConfig("delta threshold must be > 0".into()));
        }
        if self.max_generations < self.stagnation_window {
            return Err(Error::InvalidConfig(
                "max_generations must be >= stagnation window".into(),
            ));
        }
        Ok(())
    }
}

/// True iff the last `stagnation_window` generation-to-generation changes of
/// `history` are all strictly below `delta_threshold`.
pub fn is_stagnant(history: &[f64], rule: &TerminationRule) -> bool {
    let window = rule.stagnation_window;
    if window == 0 || history.len() < window + 1 {
        return false;
    }
    history[history.len() - window - 1..]
        .windows(2)
        .all(|w| (w[1] - w[0]).abs() < rule.delta_threshold)
}

/// `size` candidates with every component uniform in `[1, 50]` kbps.
pub fn init_population<R: Rng + ?Sized>(
    obj: &SearchObjective,
    size: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let (lo, hi) = INIT_RANGE;
    (0..size)
        .map(|_| (0..obj.dim()).map(|_| rng.gen_range(lo..=hi)).collect())
        .collect()
}

/// Per-generation statistics, one row of the trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    /// Relative budget residual of the best candidate.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_flow: FlowVector,
    pub best_fitness: f64,
    pub best_delay_msec: f64,
    pub generations: usize,
    pub wall_time: Duration,
    /// Whether the stagnation rule fired before `max_generations`.
    pub converged: bool,
    pub constraint_residual: f64,
    pub trace: Vec<GenerationStats>,
}

impl SearchResult {
    /// Packages a clamped best candidate. Delay is recomputed from the flows.
    pub(crate) fn from_best(
        obj: &SearchObjective,
        best: Vec<f64>,
        best_fitness: f64,
        generations: usize,
        converged: bool,
        wall_time: Duration,
        trace: Vec<GenerationStats>,
    ) -> Result<Self> {
        let best_flow = FlowVector::new(obj.clamped(&best));
        let best_delay_msec = delay_msec(obj.topology(), &best_flow)?;
        let constraint_residual = obj.residual(best_flow.flows());
        Ok(SearchResult {
            best_flow,
            best_fitness,
            best_delay_msec,
            generations,
            wall_time,
            converged,
            constraint_residual,
            trace,
        })
    }

    pub fn wall_time_sec(&self) -> f64 {
        self.wall_time.as_secs_f64()
    }
}

pub fn write_trace_csv<W: Write>(mut w: W, trace: &[GenerationStats]) -> std::io::Result<()> {
    writeln!(w, "generation,best_fitness,mean_fitness,residual")?;
    for s in trace {
        writeln!(
            w,
            "{},{},{},{}",
            s.generation, s.best_fitness, s.mean_fitness, s.residual
        )?;
    }
    Ok(())
}

/// A seeded single-run optimizer.
pub trait Optimizer: Sync {
    fn optimize(&self, obj: &SearchObjective, seed: u64) -> Result<SearchResult>;
}

impl<F> Optimizer for F
where
    F: Fn(&SearchObjective, u64) -> Result<SearchResult> + Sync,
{
    fn optimize(&self, obj: &SearchObjective, seed: u64) -> Result<SearchResult> {
        self(obj, seed)
    }
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub outcome: std::result::Result<SearchResult, String>,
}

/// Results of repeated independent runs, with means over the successful ones.
#[derive(Debug, Clone)]
pub struct TrialSummary {
    pub trials: Vec<TrialRecord>,
    pub mean_generations: f64,
    pub mean_time_sec: f64,
    pub mean_delay_msec: f64,
    pub mean_residual: f64,
}

impl TrialSummary {
    fn from_trials(trials: Vec<TrialRecord>) -> Self {
        let ok: Vec<&SearchResult> = trials
            .iter()
            .filter_map(|t| t.outcome.as_ref().ok())
            .collect();
        let n = ok.len() as f64;
        let mean = |f: &dyn Fn(&SearchResult) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / n
            }
        };
        TrialSummary {
            mean_generations: mean(&|r| r.generations as f64),
            mean_time_sec: mean(&|r| r.wall_time_sec()),
            mean_delay_msec: mean(&|r| r.best_delay_msec),
            mean_residual: mean(&|r| r.constraint_residual),
            trials,
        }
    }

    pub fn successes(&self) -> impl Iterator<Item = &SearchResult> {
        self.trials.iter().filter_map(|t| t.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.outcome.is_err()).count()
    }

    /// Writes `trial,generations,time_sec,delay_msec,residual` rows and a
    /// trailing `mean` row. Without `timing` the time column is left empty
    /// so that output depends only on inputs and seeds.
    pub fn write_csv<W: Write>(&self, mut w: W, timing: bool) -> std::io::Result<()> {
        writeln!(w, "trial,generations,time_sec,delay_msec,residual")?;
        self.write_rows(&mut w, "", timing)
    }

    /// Same rows as [`write_csv`](Self::write_csv), each prefixed with `prefix`
    /// and no header.
    pub fn write_rows<W: Write>(
        &self,
        mut w: W,
        prefix: &str,
        timing: bool,
    ) -> std::io::Result<()> {
        let time = |t: f64| if timing { t.to_string() } else { String::new() };
        for t in &self.trials {
            match &t.outcome {
                Ok(r) => writeln!(
                    w,
                    "{prefix}{},{},{},{},{}",
                    t.trial,
                    r.generations,
                    time(r.wall_time_sec()),
                    r.best_delay_msec,
                    r.constraint_residual
                )?,
                Err(_) => writeln!(w, "{prefix}{},failed,failed,failed,failed", t.trial)?,
            }
        }
        writeln!(
            w,
            "{prefix}mean,{},{},{},{}",
            self.mean_generations,
            time(self.mean_time_sec),
            self.mean_delay_msec,
            self.mean_residual
        )
    }
}

/// Runs `n_trials` independent seeded runs with seeds
/// `base_seed..base_seed + n_trials`. Trials run in parallel; the summary is
/// independent of scheduling.
pub fn run_trials<O: Optimizer + ?Sized>(
    optimizer: &O,
    obj: &SearchObjective,
    n_trials: usize,
    base_seed: u64,
) -> Result<TrialSummary> {
    if n_trials < 1 {
        return Err(Error::InvalidConfig("n_trials must be >= 1".into()));
    }
    let trials: Vec<TrialRecord> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            let outcome = optimizer.optimize(obj, seed).map_err(|e| {
                log::warn!("trial {} (seed {seed}) failed: {e}", i + 1);
                e.to_string()
            });
            TrialRecord {
                trial: i + 1,
                seed,
                outcome,
            }
        })
        .collect();
    Ok(TrialSummary::from_trials(trials))
}
