//! Monte-Carlo studies of the weighted estimators.

pub mod generate;
mod harness;
mod report;
pub mod rng;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use generate::{
    ar_covariance, band_mixing, draw_bernoulli, draw_noise, gen_coefficients, gen_design,
    gen_low_quality_block, gen_noise_cov, gen_planted_tasks, project_out, PlantedTasks,
};
pub use harness::{
    feasible_prefix_label, normality_check, run_replications, MseReport, NormalityReport,
    SummaryRow, FEASIBLE, MLE, OLS, ORACLE,
};
pub use report::{write_replications_csv, write_summary_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    VaryingNp,
    VaryingK,
    VaryingD,
    LowQuality,
    Logistic,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::VaryingNp,
        Scenario::VaryingK,
        Scenario::VaryingD,
        Scenario::LowQuality,
        Scenario::Logistic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::VaryingNp => "varying_np",
            Scenario::VaryingK => "varying_k",
            Scenario::VaryingD => "varying_d",
            Scenario::LowQuality => "low_quality",
            Scenario::Logistic => "logistic",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario `{s}`")))
    }
}

pub const DEFAULT_AR_RHO: f64 = 0.5;
pub const DEFAULT_REPS: usize = 100;

/// One simulation setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub k_aux: usize,
    pub d: usize,
    pub m_reps: usize,
    pub seed: u64,
    pub scenario: Scenario,
    /// Number of appended low-quality tasks (`low_quality` only).
    pub k_useless: usize,
    pub ar_rho: f64,
    /// Multiplier on `Σ_ε`; zero gives noiseless responses.
    pub noise_scale: f64,
    /// Auxiliary-task prefixes scored as `FEASIBLE(k)` (`low_quality` only).
    pub k_grid: Vec<usize>,
}

/// `⌈√N⌉`.
pub fn sqrt_dim(n: usize) -> usize {
    let mut p = (n as f64).sqrt().floor() as usize;
    while p * p < n {
        p += 1;
    }
    p
}

impl SimConfig {
    pub fn new(scenario: Scenario, n: usize, p: usize, k_aux: usize, d: usize) -> Self {
        Self {
            n,
            p,
            k_aux,
            d,
            m_reps: DEFAULT_REPS,
            seed: 1,
            scenario,
            k_useless: 0,
            ar_rho: DEFAULT_AR_RHO,
            noise_scale: 1.0,
            k_grid: Vec::new(),
        }
    }

    pub fn with_reps(mut self, m: usize) -> Self {
        self.m_reps = m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Total number of tasks in a replication, including low-quality ones.
    pub fn n_tasks(&self) -> usize {
        self.k_aux
            + 1
            + if self.scenario == Scenario::LowQuality {
                self.k_useless
            } else {
                0
            }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.p == 0 || self.n <= self.p {
            return bad(format!(
                "need n > p ≥ 1, got n = {}, p = {}",
                self.n, self.p
            ));
        }
        if self.d == 0 || self.d > self.k_aux + 1 {
            return Err(Error::RankOutOfRange {
                d: self.d,
                max: self.k_aux + 1,
            });
        }
        if self.m_reps == 0 {
            return bad("m_reps must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.ar_rho) {
            return bad(format!("ar_rho {} not in [0, 1)", self.ar_rho));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise_scale must be finite and non-negative".into());
        }
        if self.scenario == Scenario::LowQuality {
            if self.k_useless == 0 {
                return bad("low_quality needs k_useless ≥ 1".into());
            }
            if let Some(&k) = self
                .k_grid
                .iter()
                .find(|&&k| k == 0 || k > self.k_aux + self.k_useless)
            {
                return bad(format!(
                    "k grid entry {k} outside [1, {}]",
                    self.k_aux + self.k_useless
                ));
            }
        }
        Ok(())
    }
}

/// Optional overrides for [`scenario_grid`]; unset fields take the
/// scenario's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridOverrides {
    pub n: Option<Vec<usize>>,
    pub p: Option<usize>,
    pub k_aux: Option<Vec<usize>>,
    pub d: Option<Vec<usize>>,
    pub k_useless: Option<usize>,
    pub k_grid: Option<Vec<usize>>,
    pub m_reps: Option<usize>,
    pub seed: Option<u64>,
    pub noise_scale: Option<f64>,
}

/// Expands a scenario into its settings, sweeping `N × K × d`.
///
/// Defaults: `varying_np` sweeps N ∈ {1000, 2000, 5000, 10000} with K = 10;
/// `varying_k` sweeps K ∈ {10, …, 50} at N = 2000, d = 5; `varying_d` sweeps
/// d ∈ {2, 4, …, 10} at N = 2000, K = 10; `low_quality` uses N = 10000,
/// p = 100, K = 10, d = 5, K′ = 50; `logistic` uses N = 2000, K = 10, d = 5.
/// Unless set, `p = ⌈√N⌉` and `d = K / 2` for `varying_np`.
pub fn scenario_grid(scenario: Scenario, o: &GridOverrides) -> Result<Vec<SimConfig>> {
    let (ns, ks, ds): (Vec<usize>, Vec<usize>, Option<Vec<usize>>) = match scenario {
        Scenario::VaryingNp => (vec![1000, 2000, 5000, 10000], vec![10], None),
        Scenario::VaryingK => (vec![2000], vec![10, 20, 30, 40, 50], Some(vec![5])),
        Scenario::VaryingD => (vec![2000], vec![10], Some(vec![2, 4, 6, 8, 10])),
        Scenario::LowQuality => (vec![10000], vec![10], Some(vec![5])),
        Scenario::Logistic => (vec![2000], vec![10], Some(vec![5])),
    };
    let ns = o.n.clone().unwrap_or(ns);
    let ks = o.k_aux.clone().unwrap_or(ks);
    let ds = o.d.clone().or(ds);
    let default_p = if scenario == Scenario::LowQuality {
        Some(100)
    } else {
        None
    };
    let mut out = Vec::new();
    for &n in &ns {
        for &k in &ks {
            let d_values = ds.clone().unwrap_or_else(|| vec![(k / 2).max(1)]);
            for &d in &d_values {
                let p = o.p.or(default_p).unwrap_or_else(|| sqrt_dim(n));
                let mut cfg = SimConfig::new(scenario, n, p, k, d);
                cfg.m_reps = o.m_reps.unwrap_or(DEFAULT_REPS);
                cfg.seed = o.seed.unwrap_or(1);
                cfg.noise_scale = o.noise_scale.unwrap_or(1.0);
                if scenario == Scenario::LowQuality {
                    cfg.k_useless = o.k_useless.unwrap_or(50);
                    let total = k + cfg.k_useless;
                    cfg.k_grid = o.k_grid.clone().unwrap_or_else(|| {
                        [2, 4, 6, 8, 10, 20, 30, 40, 50, 60]
                            .into_iter()
                            .filter(|&g| g <= total)
                            .collect()
                    });
                }
                cfg.validate()?;
                out.push(cfg);
            }
        }
    }
    Ok(out)
}
