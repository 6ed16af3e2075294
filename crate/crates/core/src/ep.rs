//! Evolutionary programming over flow vectors with Gaussian, Cauchy and
//! hybrid (best of one Gaussian and one Cauchy child) mutation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::distributions::Open01;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::search::{
    init_population, is_stagnant, rng_from_seed, GenerationStats, Optimizer, SearchObjective,
    SearchResult, TerminationRule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    Gaussian,
    Cauchy,
    Hybrid,
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mutation::Gaussian => "gaussian",
            Mutation::Cauchy => "cauchy",
            Mutation::Hybrid => "hybrid",
        })
    }
}

impl FromStr for Mutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Mutation::Gaussian),
            "cauchy" => Ok(Mutation::Cauchy),
            "hybrid" => Ok(Mutation::Hybrid),
            _ => Err(Error::InvalidConfig(format!("unknown mutation {s:?}"))),
        }
    }
}

/// How `sigma` turns into a per-link step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    /// Step scale `sigma * C_i`.
    Relative,
    /// Step scale `sigma` kbps on every link.
    Absolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpConfig {
    pub variant: Mutation,
    pub population_size: usize,
    pub sigma: f64,
    pub sigma_mode: SigmaMode,
    pub termination: TerminationRule,
}

impl EpConfig {
    /// Population 150 for Gaussian and Cauchy, 100 for hybrid; `sigma = 0.01`.
    pub fn standard(variant: Mutation) -> Self {
        EpConfig {
            variant,
            population_size: if variant == Mutation::Hybrid {
                100
            } else {
                150
            },
            sigma: 0.01,
            sigma_mode: SigmaMode::Relative,
            termination: TerminationRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::InvalidConfig("population size must be >= 2".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig("sigma must be non-negative".into()));
        }
        self.termination.validate()
    }

    /// Per-link mutation scale for this objective.
    pub fn scales(&self, obj: &SearchObjective) -> Vec<f64> {
        obj.topology()
            .links()
            .iter()
            .map(|l| match self.sigma_mode {
                SigmaMode::Relative => l.capacity_kbps,
                SigmaMode::Absolute => 1.0,
            })
            .collect()
    }
}

/// A scored candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub flows: Vec<f64>,
    pub fitness: f64,
}

impl Individual {
    /// Clamps `flows` into bounds and scores them.
    pub fn evaluate(obj: &SearchObjective, mut flows: Vec<f64>) -> Self {
        obj.clamp_in_place(&mut flows);
        let fitness = obj.fitness(&flows);
        Individual { flows, fitness }
    }
}

/// Standard Cauchy draw via the inverse CDF `tan(π(u - ½))`.
pub fn standard_cauchy<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    (PI * (u - 0.5)).tan()
}

pub fn mutate_gaussian<R: Rng + ?Sized>(
    parent: &[f64],
    sigma: f64,
    scales: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    parent
        .iter()
        .zip(scales)
        .map(|(&x, &s)| {
            let z: f64 = rng.sample(StandardNormal);
            x + sigma * s * z
        })
        .collect()
}

pub fn mutate_cauchy<R: Rng + ?Sized>(
    parent: &[f64],
    sigma: f64,
    scales: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    parent
        .iter()
        .zip(scales)
        .map(|(&x, &s)| x + sigma * s * standard_cauchy(rng))
        .collect()
}

/// Keeps the fitter child; ties go to the Gaussian one.
pub fn select_hybrid(gaussian: Individual, cauchy: Individual) -> Individual {
    if cauchy.fitness < gaussian.fitness {
        cauchy
    } else {
        gaussian
    }
}

/// One Gaussian and one Cauchy child of `parent`, of which the fitter survives.
pub fn hybrid_offspring<R: Rng + ?Sized>(
    parent: &[f64],
    sigma: f64,
    scales: &[f64],
    rng: &mut R,
    obj: &SearchObjective,
) -> Individual {
    let g = Individual::evaluate(obj, mutate_gaussian(parent, sigma, scales, rng));
    let c = Individual::evaluate(obj, mutate_cauchy(parent, sigma, scales, rng));
    select_hybrid(g, c)
}

#[derive(Debug, Clone)]
pub struct EpState {
    /// Sorted by fitness, best first.
    pub parents: Vec<Individual>,
    pub generation: usize,
    pub best_history: Vec<f64>,
    pub trace: Vec<GenerationStats>,
}

impl EpState {
    pub fn initial<R: Rng + ?Sized>(config: &EpConfig, obj: &SearchObjective, rng: &mut R) -> Self {
        let parents = init_population(obj, config.population_size, rng)
            .into_iter()
            .map(|f| Individual::evaluate(obj, f))
            .collect();
        Self::from_parents(parents, obj)
    }

    pub fn from_parents(mut parents: Vec<Individual>, obj: &SearchObjective) -> Self {
        sort_by_fitness(&mut parents);
        let mut state = EpState {
            parents,
            generation: 0,
            best_history: Vec::new(),
            trace: Vec::new(),
        };
        state.record(obj);
        state
    }

    pub fn best(&self) -> &Individual {
        &self.parents[0]
    }

    fn record(&mut self, obj: &SearchObjective) {
        let best = &self.parents[0];
        let mean = self.parents.iter().map(|p| p.fitness).sum::<f64>() / self.parents.len() as f64;
        self.best_history.push(best.fitness);
        self.trace.push(GenerationStats {
            generation: self.generation,
            best_fitness: best.fitness,
            mean_fitness: mean,
            residual: obj.residual(&best.flows),
        });
    }
}

// Stable, so equal fitness keeps index order.
fn sort_by_fitness(pop: &mut [Individual]) {
    pop.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
}

/// One generation: every parent breeds (one surviving child each), then the
/// best `population_size` of parents ∪ children survive.
pub fn ep_step<R: Rng + ?Sized>(
    mut state: EpState,
    config: &EpConfig,
    obj: &SearchObjective,
    rng: &mut R,
) -> EpState {
    let scales = config.scales(obj);
    let sigma = config.sigma;
    let offspring: Vec<Individual> = state
        .parents
        .iter()
        .map(|p| match config.variant {
            Mutation::Gaussian => {
                Individual::evaluate(obj, mutate_gaussian(&p.flows, sigma, &scales, rng))
            }
            Mutation::Cauchy => {
                Individual::evaluate(obj, mutate_cauchy(&p.flows, sigma, &scales, rng))
            }
            Mutation::Hybrid => hybrid_offspring(&p.flows, sigma, &scales, rng, obj),
        })
        .collect();
    state.parents.extend(offspring);
    sort_by_fitness(&mut state.parents);
    state.parents.truncate(config.population_size);
    state.generation += 1;
    state.record(obj);
    state
}

pub fn run_ep(config: &EpConfig, obj: &SearchObjective, seed: u64) -> Result<SearchResult> {
    config.validate()?;
    let start = Instant::now();
    let mut rng = rng_from_seed(seed);
    let mut state = EpState::initial(config, obj, &mut rng);
    let rule = &config.termination;
    let mut converged = false;
    while state.generation < rule.max_generations {
        state = ep_step(state, config, obj, &mut rng);
        if is_stagnant(&state.best_history, rule) {
            converged = true;
            break;
        }
    }
    let best = state.parents.swap_remove(0);
    SearchResult::from_best(
        obj,
        best.flows,
        best.fitness,
        state.generation,
        converged,
        start.elapsed(),
        state.trace,
    )
}

impl Optimizer for EpConfig {
    fn optimize(&self, obj: &SearchObjective, seed: u64) -> Result<SearchResult> {
        run_ep(self, obj, seed)
    }
}
