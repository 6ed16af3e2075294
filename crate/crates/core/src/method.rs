//! Named optimization methods with their default settings.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::ep::{run_ep, EpConfig, Mutation};
use crate::error::{Error, Result};
use crate::network::kkt_optimal_flow;
use crate::pso::{run_pso, PsoConfig, PsoVariant};
use crate::search::{Optimizer, SearchObjective, SearchResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    EpGauss,
    EpCauchy,
    EpHybrid,
    Pso,
    PsoChi,
    /// Analytic water-filling optimum, no search.
    Oracle,
}

impl Method {
    /// The five search methods, in comparison-table order.
    pub const SEARCH: [Method; 5] = [
        Method::EpGauss,
        Method::EpCauchy,
        Method::EpHybrid,
        Method::Pso,
        Method::PsoChi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::EpGauss => "ep-gauss",
            Method::EpCauchy => "ep-cauchy",
            Method::EpHybrid => "ep-hybrid",
            Method::Pso => "pso",
            Method::PsoChi => "pso-chi",
            Method::Oracle => "oracle",
        }
    }

    pub fn ep_config(self) -> Option<EpConfig> {
        match self {
            Method::EpGauss => Some(EpConfig::standard(Mutation::Gaussian)),
            Method::EpCauchy => Some(EpConfig::standard(Mutation::Cauchy)),
            Method::EpHybrid => Some(EpConfig::standard(Mutation::Hybrid)),
            _ => None,
        }
    }

    pub fn pso_config(self) -> Option<PsoConfig> {
        match self {
            Method::Pso => Some(PsoConfig::standard(PsoVariant::Inertia)),
            Method::PsoChi => Some(PsoConfig::standard(PsoVariant::Constriction)),
            _ => None,
        }
    }

    pub fn run(self, obj: &SearchObjective, seed: u64) -> Result<SearchResult> {
        if let Some(cfg) = self.ep_config() {
            return run_ep(&cfg, obj, seed);
        }
        if let Some(cfg) = self.pso_config() {
            return run_pso(&cfg, obj, seed);
        }
        let start = Instant::now();
        let flow = kkt_optimal_flow(obj.topology(), obj.load_kbps())?;
        let fitness = obj.fitness(flow.flows());
        SearchResult::from_best(obj, flow.0, fitness, 0, true, start.elapsed(), Vec::new())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::SEARCH
            .iter()
            .chain(std::iter::once(&Method::Oracle))
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

impl Optimizer for Method {
    fn optimize(&self, obj: &SearchObjective, seed: u64) -> Result<SearchResult> {
        self.run(obj, seed)
    }
}
