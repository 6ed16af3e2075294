//! Global-best particle swarm optimization with a linearly decreasing
//! inertia weight, optionally scaled by a constriction factor χ.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;

use crate::error::{Error, Result};
use crate::search::{
    init_population, is_stagnant, rng_from_seed, GenerationStats, Optimizer, SearchObjective,
    SearchResult, TerminationRule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsoVariant {
    /// Inertia weight only (χ = 1).
    Inertia,
    /// Inertia weight and constriction factor χ.
    Constriction,
}

impl fmt::Display for PsoVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PsoVariant::Inertia => "inertia",
            PsoVariant::Constriction => "constriction",
        })
    }
}

impl FromStr for PsoVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inertia" => Ok(PsoVariant::Inertia),
            "constriction" => Ok(PsoVariant::Constriction),
            _ => Err(Error::InvalidConfig(format!("unknown PSO variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoConfig {
    pub variant: PsoVariant,
    pub swarm_size: usize,
    pub chi: f64,
    pub w_start: f64,
    pub w_end: f64,
    pub c1: f64,
    pub c2: f64,
    /// Generations over which w falls from `w_start` to `w_end`.
    pub inertia_generations: usize,
    pub termination: TerminationRule,
}

impl PsoConfig {
    /// 300 particles, χ = 0.75, w from 1.2 to 0.1 over 100 generations,
    /// c1 = c2 = 0.5.
    pub fn standard(variant: PsoVariant) -> Self {
        PsoConfig {
            variant,
            swarm_size: 300,
            chi: 0.75,
            w_start: 1.2,
            w_end: 0.1,
            c1: 0.5,
            c2: 0.5,
            inertia_generations: 100,
            termination: TerminationRule::default(),
        }
    }

    /// The χ actually applied: 1 for the plain inertia variant.
    pub fn effective_chi(&self) -> f64 {
        match self.variant {
            PsoVariant::Inertia => 1.0,
            PsoVariant::Constriction => self.chi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::InvalidConfig("swarm size must be >= 2".into()));
        }
        if self.variant == PsoVariant::Constriction && !(self.chi > 0.0 && self.chi <= 1.0) {
            return Err(Error::InvalidConfig("chi must be in (0, 1]".into()));
        }
        if !(self.w_start >= self.w_end && self.w_end >= 0.0) {
            return Err(Error::InvalidConfig("need w_start >= w_end >= 0".into()));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::InvalidConfig(
                "c1 and c2 must be non-negative".into(),
            ));
        }
        self.termination.validate()
    }
}

/// Inertia weight at `generation`: linear from `w_start` at 0 to `w_end` at
/// `inertia_generations`, constant afterwards.
pub fn inertia_at(generation: usize, config: &PsoConfig) -> f64 {
    let horizon = config.inertia_generations.max(1) as f64;
    let t = (generation as f64 / horizon).min(1.0);
    config.w_start + (config.w_end - config.w_start) * t
}

/// Coefficients of one velocity update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityCoefficients {
    pub chi: f64,
    pub w: f64,
    pub c1: f64,
    pub c2: f64,
}

impl VelocityCoefficients {
    pub fn at(generation: usize, config: &PsoConfig) -> Self {
        VelocityCoefficients {
            chi: config.effective_chi(),
            w: inertia_at(generation, config),
            c1: config.c1,
            c2: config.c2,
        }
    }

    /// `χ (w v + c1 r1 (p - x) + c2 r2 (g - x))` for one dimension.
    pub fn component(&self, v: f64, x: f64, p: f64, g: f64, r1: f64, r2: f64) -> f64 {
        self.chi * (self.w * v + self.c1 * r1 * (p - x) + self.c2 * r2 * (g - x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub fitness: f64,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
}

impl Particle {
    /// A particle at rest at `position` (clamped), which is also its best.
    pub fn at_rest(obj: &SearchObjective, mut position: Vec<f64>) -> Self {
        obj.clamp_in_place(&mut position);
        let fitness = obj.fitness(&position);
        Particle {
            velocity: vec![0.0; position.len()],
            best_position: position.clone(),
            best_fitness: fitness,
            position,
            fitness,
        }
    }
}

/// New velocity for `particle`, with fresh `r1, r2 ~ U[0, 1]` per dimension.
pub fn update_velocity<R: Rng + ?Sized>(
    particle: &Particle,
    global_best: &[f64],
    coeffs: &VelocityCoefficients,
    rng: &mut R,
) -> Vec<f64> {
    (0..particle.position.len())
        .map(|d| {
            let r1: f64 = rng.gen();
            let r2: f64 = rng.gen();
            coeffs.component(
                particle.velocity[d],
                particle.position[d],
                particle.best_position[d],
                global_best[d],
                r1,
                r2,
            )
        })
        .collect()
}

/// `x + v`, clamped into `[0, C_i - ε]`. A clamped dimension has its velocity
/// zeroed.
pub fn update_position(particle: &mut Particle, obj: &SearchObjective) {
    for ((x, v), &ub) in particle
        .position
        .iter_mut()
        .zip(particle.velocity.iter_mut())
        .zip(obj.upper_bounds())
    {
        let moved = *x + *v;
        if moved > ub {
            *x = ub;
            *v = 0.0;
        } else if moved < 0.0 || moved.is_nan() {
            *x = 0.0;
            *v = 0.0;
        } else {
            *x = moved;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    /// Index of the particle holding the best personal best.
    pub global_best: usize,
    pub generation: usize,
    pub best_history: Vec<f64>,
    pub trace: Vec<GenerationStats>,
}

impl Swarm {
    /// Particles at rest at the given positions.
    pub fn new(obj: &SearchObjective, positions: Vec<Vec<f64>>) -> Self {
        let particles: Vec<Particle> = positions
            .into_iter()
            .map(|p| Particle::at_rest(obj, p))
            .collect();
        let mut swarm = Swarm {
            global_best: 0,
            particles,
            generation: 0,
            best_history: Vec::new(),
            trace: Vec::new(),
        };
        swarm.refresh_global_best();
        swarm.record(obj);
        swarm
    }

    pub fn best(&self) -> &Particle {
        &self.particles[self.global_best]
    }

    // Lowest personal-best fitness, ties to the lower index.
    fn refresh_global_best(&mut self) {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate().skip(1) {
            if p.best_fitness < self.particles[best].best_fitness {
                best = i;
            }
        }
        self.global_best = best;
    }

    fn record(&mut self, obj: &SearchObjective) {
        let best = self.best();
        let best_fitness = best.best_fitness;
        let residual = obj.residual(&best.best_position);
        let mean =
            self.particles.iter().map(|p| p.fitness).sum::<f64>() / self.particles.len() as f64;
        self.best_history.push(best_fitness);
        self.trace.push(GenerationStats {
            generation: self.generation,
            best_fitness,
            mean_fitness: mean,
            residual,
        });
    }
}

/// One synchronous generation: every particle moves using the global best
/// from the start of the step, then personal and global bests are updated.
pub fn pso_step<R: Rng + ?Sized>(
    mut swarm: Swarm,
    config: &PsoConfig,
    obj: &SearchObjective,
    rng: &mut R,
) -> Swarm {
    let coeffs = VelocityCoefficients::at(swarm.generation, config);
    let global = swarm.best().best_position.clone();
    for p in &mut swarm.particles {
        p.velocity = update_velocity(p, &global, &coeffs, rng);
        update_position(p, obj);
        p.fitness = obj.fitness(&p.position);
        if p.fitness < p.best_fitness {
            p.best_fitness = p.fitness;
            p.best_position.clone_from(&p.position);
        }
    }
    swarm.refresh_global_best();
    swarm.generation += 1;
    swarm.record(obj);
    swarm
}

pub fn run_pso(config: &PsoConfig, obj: &SearchObjective, seed: u64) -> Result<SearchResult> {
    config.validate()?;
    let start = Instant::now();
    let mut rng = rng_from_seed(seed);
    let positions = init_population(obj, config.swarm_size, &mut rng);
    let mut swarm = Swarm::new(obj, positions);
    let rule = &config.termination;
    let mut converged = false;
    while swarm.generation < rule.max_generations {
        swarm = pso_step(swarm, config, obj, &mut rng);
        if is_stagnant(&swarm.best_history, rule) {
            converged = true;
            break;
        }
    }
    let best = swarm.best();
    SearchResult::from_best(
        obj,
        best.best_position.clone(),
        best.best_fitness,
        swarm.generation,
        converged,
        start.elapsed(),
        swarm.trace,
    )
}

impl Optimizer for PsoConfig {
    fn optimize(&self, obj: &SearchObjective, seed: u64) -> Result<SearchResult> {
        run_pso(self, obj, seed)
    }
}
