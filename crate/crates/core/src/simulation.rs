//! Monte Carlo harness for the linear interval design: sample generation, the
//! population set it identifies and Hausdorff risk tables.
//!
//! The design is `Y = 1 + Z2 + Z3 + eps` with bounds
//! `Y -+ (c + e2 Z2^2 + e3 Z3^2)`, `e2, e3 ~ U[0, e_max]`, so that
//! `m_{L,U}(z) = 1 + z2 + z3 -+ (c + e_max/2 |z|^2)`.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, SupportEstimator};
use crate::inference::{directed_hausdorff, hausdorff};
use crate::model::{make_direction_grid, validate_sample, IntervalSample, KernelFamily, KernelSpec, RawRow};
use crate::numeric::{derive_seed, rng_from_seed, McEstimate};
use crate::population::{population_set, Observation, ObservationModel, Population, PopulationSet};

/// Truncation point of the default covariate law.
pub const TRUNCATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateLaw {
    /// Independent standard normals truncated to `[-3, 3]`.
    TruncatedNormal,
    StandardNormal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpConfig {
    pub n: usize,
    pub c: f64,
    pub e_max: f64,
    pub covariate_law: CovariateLaw,
    pub seed: u64,
}

impl DgpConfig {
    pub fn new(n: usize, c: f64, seed: u64) -> Self {
        Self {
            n,
            c,
            e_max: 0.2,
            covariate_law: CovariateLaw::TruncatedNormal,
            seed,
        }
    }

    pub fn design(&self) -> Design {
        Design {
            c: self.c,
            e_max: self.e_max,
            covariate_law: self.covariate_law,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::TooFewRows);
        }
        self.design().validate()
    }
}

/// The population side of the design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Design {
    pub c: f64,
    pub e_max: f64,
    pub covariate_law: CovariateLaw,
}

impl Design {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidConfig(format!("c must be nonnegative (got {})", self.c)));
        }
        if !(self.e_max >= 0.0 && self.e_max.is_finite()) {
            return Err(Error::InvalidConfig(format!("e_max must be nonnegative (got {})", self.e_max)));
        }
        Ok(())
    }

    fn normal_mass(&self) -> f64 {
        match self.covariate_law {
            CovariateLaw::TruncatedNormal => libm::erf(TRUNCATION / std::f64::consts::SQRT_2),
            CovariateLaw::StandardNormal => 1.0,
        }
    }

    fn inside(&self, t: f64) -> bool {
        match self.covariate_law {
            CovariateLaw::TruncatedNormal => t.abs() <= TRUNCATION,
            CovariateLaw::StandardNormal => true,
        }
    }

    fn draw_coordinate(&self, rng: &mut dyn RngCore) -> f64 {
        loop {
            let t: f64 = StandardNormal.sample(rng);
            if self.inside(t) {
                return t;
            }
        }
    }

    fn draw_e(&self, rng: &mut dyn RngCore) -> f64 {
        if self.e_max == 0.0 {
            0.0
        } else {
            rng.random::<f64>() * self.e_max
        }
    }

    fn half_width(&self, z: &[f64]) -> f64 {
        self.c + 0.5 * self.e_max * (z[0] * z[0] + z[1] * z[1])
    }
}

impl Population for Design {
    fn ell(&self) -> usize {
        2
    }

    fn m_lower(&self, z: &[f64]) -> f64 {
        1.0 + z[0] + z[1] - self.half_width(z)
    }

    fn m_upper(&self, z: &[f64]) -> f64 {
        1.0 + z[0] + z[1] + self.half_width(z)
    }

    fn density(&self, z: &[f64]) -> f64 {
        if !(self.inside(z[0]) && self.inside(z[1])) {
            return 0.0;
        }
        let m = self.normal_mass();
        (-0.5 * (z[0] * z[0] + z[1] * z[1])).exp() / (2.0 * std::f64::consts::PI * m * m)
    }

    fn grad_log_density(&self, z: &[f64]) -> Vec<f64> {
        vec![-z[0], -z[1]]
    }

    fn grad_m_lower(&self, z: &[f64]) -> Vec<f64> {
        vec![1.0 - self.e_max * z[0], 1.0 - self.e_max * z[1]]
    }

    fn grad_m_upper(&self, z: &[f64]) -> Vec<f64> {
        vec![1.0 + self.e_max * z[0], 1.0 + self.e_max * z[1]]
    }

    fn sample_covariate(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let z2 = self.draw_coordinate(rng);
        let z3 = self.draw_coordinate(rng);
        vec![z2, z3]
    }
}

impl ObservationModel for Design {
    fn sample_observation(&self, rng: &mut dyn RngCore) -> Observation {
        let z = self.sample_covariate(rng);
        let eps: f64 = StandardNormal.sample(rng);
        let y = 1.0 + z[0] + z[1] + eps;
        let e2 = self.draw_e(rng);
        let e3 = self.draw_e(rng);
        let w = self.c + e2 * z[0] * z[0] + e3 * z[1] * z[1];
        Observation {
            y_lower: y - w,
            y_upper: y + w,
            z,
        }
    }
}

/// Draws `n` rows from the design.
pub fn generate(dgp: &DgpConfig) -> Result<IntervalSample> {
    dgp.validate()?;
    let design = dgp.design();
    let mut rng = rng_from_seed(dgp.seed);
    let rows: Vec<RawRow> = (0..dgp.n)
        .map(|_| {
            let o = design.sample_observation(&mut rng);
            RawRow::new(o.y_lower, o.y_upper, o.z)
        })
        .collect();
    validate_sample(&rows)
}

/// The renormalized identified set `E[l Z']^{-1} Theta` on the grid.
pub fn true_set_oracle(
    design: &Design,
    grid: &crate::model::DirectionGrid,
    n_draws: usize,
    seed: u64,
) -> Result<PopulationSet> {
    design.validate()?;
    population_set(design, grid, n_draws, seed, true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskExperimentConfig {
    pub ns: Vec<usize>,
    pub cs: Vec<f64>,
    pub hs: Vec<f64>,
    pub family: KernelFamily,
    pub grid_m: usize,
    pub reps: usize,
    pub seed: u64,
    pub oracle_draws: usize,
    pub e_max: f64,
    pub covariate_law: CovariateLaw,
}

impl RiskExperimentConfig {
    /// The Gaussian-kernel layout: `n in {1000, 500, 250}`, `c in {0.1, 0.5, 1}`,
    /// `h in {0.4, ..., 0.8}`.
    pub fn gaussian_table(reps: usize, seed: u64) -> Self {
        Self {
            ns: vec![1000, 500, 250],
            cs: vec![0.1, 0.5, 1.0],
            hs: vec![0.4, 0.5, 0.6, 0.7, 0.8],
            family: KernelFamily::Gaussian,
            grid_m: 64,
            reps,
            seed,
            oracle_draws: 1_000_000,
            e_max: 0.2,
            covariate_law: CovariateLaw::TruncatedNormal,
        }
    }

    /// The higher-order-kernel layout with `h in {0.5, ..., 0.9}`.
    pub fn higher_order_table(reps: usize, seed: u64) -> Self {
        Self {
            hs: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            family: KernelFamily::HigherOrderGaussian,
            ..Self::gaussian_table(reps, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("the replication count must be positive".into()));
        }
        if self.ns.is_empty() || self.cs.is_empty() || self.hs.is_empty() {
            return Err(Error::InvalidConfig("empty (n, c, h) grid".into()));
        }
        if let Some(&n) = self.ns.iter().find(|&&n| n < 3) {
            return Err(Error::InvalidConfig(format!("sample size {n} is too small")));
        }
        for &h in &self.hs {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidBandwidth(h));
            }
        }
        Ok(())
    }
}

/// Distances of one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub d_h: f64,
    pub d_ih: f64,
    pub d_oh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub n: usize,
    pub c: f64,
    pub h: f64,
    pub r_h: McEstimate,
    pub r_ih: McEstimate,
    pub r_oh: McEstimate,
    /// Replications that entered the averages.
    pub completed: usize,
    /// Replications dropped after a singular renormalization.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    pub reps: usize,
    pub rows: Vec<RiskRow>,
}

/// Renormalized set estimate for one sample and bandwidth, compared with the oracle.
pub fn replicate_distances(
    sample: &IntervalSample,
    oracle: &PopulationSet,
    family: KernelFamily,
    h: f64,
) -> Result<Distances> {
    let grid = oracle.hull.support.grid.clone();
    let config = EstimatorConfig {
        kernel: KernelSpec::new(family, sample.ell(), h, h)?,
        grid,
        renormalize: true,
    };
    let set = SupportEstimator::fit(sample, &config)?.estimate_set()?;
    let (est, truth) = (&set.hull.support, &oracle.hull.support);
    Ok(Distances {
        d_h: hausdorff(est, truth)?,
        d_ih: directed_hausdorff(est, truth)?,
        d_oh: directed_hausdorff(truth, est)?,
    })
}

fn summarize(n: usize, c: f64, h: f64, outcomes: &[Result<Distances>]) -> Result<RiskRow> {
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(d) => ok.push(*d),
            Err(Error::SingularRenormalization(_)) => failures += 1,
            Err(e) => return Err(e.clone()),
        }
    }
    let col = |f: fn(&Distances) -> f64| McEstimate::from_values(&ok.iter().map(f).collect::<Vec<_>>());
    Ok(RiskRow {
        n,
        c,
        h,
        r_h: col(|d| d.d_h),
        r_ih: col(|d| d.d_ih),
        r_oh: col(|d| d.d_oh),
        completed: ok.len(),
        failures,
    })
}

/// Risk table over the `(n, c, h)` grid. Replication `r` of cell `(n, c)`
/// draws its sample from the substream `(seed, 2, n_idx, c_idx, r)` and
/// reuses it for every bandwidth. One oracle is computed per `c` from the
/// substream `(seed, 1)`, so the oracles share their covariate draws.
pub fn risk_experiment(config: &RiskExperimentConfig) -> Result<RiskTable> {
    config.validate()?;
    let grid = make_direction_grid(2, config.grid_m)?;
    let oracle_seed = derive_seed(config.seed, &[1]);
    let designs: Vec<Design> = config
        .cs
        .iter()
        .map(|&c| Design {
            c,
            e_max: config.e_max,
            covariate_law: config.covariate_law,
        })
        .collect();
    let oracles: Vec<PopulationSet> = designs
        .iter()
        .map(|d| true_set_oracle(d, &grid, config.oracle_draws, oracle_seed))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(config.ns.len() * config.cs.len() * config.hs.len());
    for (ni, &n) in config.ns.iter().enumerate() {
        for (ci, &c) in config.cs.iter().enumerate() {
            let per_rep: Vec<Vec<Result<Distances>>> = (0..config.reps)
                .into_par_iter()
                .map(|r| {
                    let dgp = DgpConfig {
                        n,
                        c,
                        e_max: config.e_max,
                        covariate_law: config.covariate_law,
                        seed: derive_seed(config.seed, &[2, ni as u64, ci as u64, r as u64]),
                    };
                    match generate(&dgp) {
                        Ok(sample) => config
                            .hs
                            .iter()
                            .map(|&h| replicate_distances(&sample, &oracles[ci], config.family, h))
                            .collect(),
                        Err(e) => vec![Err(e); config.hs.len()],
                    }
                })
                .collect();
            for (hi, &h) in config.hs.iter().enumerate() {
                let outcomes: Vec<Result<Distances>> = per_rep.iter().map(|v| v[hi].clone()).collect();
                rows.push(summarize(n, c, h, &outcomes)?);
            }
        }
    }
    Ok(RiskTable { reps: config.reps, rows })
}
