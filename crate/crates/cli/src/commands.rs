use std::path::{Path, PathBuf};

use serde::Serialize;

use intervalad::density::rate_condition_flags;
use intervalad::inference::{one_sided_confidence_set, BootstrapConfig, Centering, MultiplierLaw};
use intervalad::kernel::{build_kernel, verify_moments, MomentReport};
use intervalad::simulation::{risk_experiment, true_set_oracle, CovariateLaw, Design, RiskExperimentConfig, RiskTable};
use intervalad::{make_direction_grid, EstimatorConfig, IntervalSample, KernelFamily, KernelSpec, SupportEstimator};

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::io::{fmt, ingest_csv, write_bounds, write_hull, write_json, write_rows, write_support};

pub const MOMENT_TOL: f64 = 1e-6;
pub const DEFAULT_H: f64 = 0.6;
pub const DEFAULT_GRID_M: usize = 64;
pub const DEFAULT_BOOTSTRAP_DRAWS: usize = 200;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_REPS: usize = 500;
pub const DEFAULT_ORACLE_DRAWS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Estimate,
    Infer,
    Simulate,
    Oracle,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Infer => "infer",
            Command::Simulate => "simulate",
            Command::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub settings: Settings,
}

#[derive(Serialize)]
struct KernelMeta {
    family: &'static str,
    order: usize,
    h: f64,
    htilde: f64,
}

#[derive(Serialize)]
struct BootstrapMeta {
    draws: usize,
    alpha: f64,
    multiplier: MultiplierLaw,
    centering: Centering,
}

#[derive(Serialize)]
struct Meta {
    version: &'static str,
    command: &'static str,
    seed: u64,
    n: usize,
    ell: usize,
    kernel: KernelMeta,
    #[serde(rename = "grid_M")]
    grid_m: usize,
    renormalize: bool,
    rate_flags: Vec<String>,
    moment_report: MomentReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<BootstrapMeta>,
}

pub fn run(config: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(&config.output)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", config.output.display())))?;
    match config.command {
        Command::Estimate | Command::Infer => run_data_command(config),
        Command::Simulate => run_simulate(config),
        Command::Oracle => run_oracle(config),
    }
}

fn estimator_config(s: &Settings, ell: usize) -> CliResult<EstimatorConfig> {
    let h = s.h.unwrap_or(DEFAULT_H);
    let kernel = KernelSpec::new(s.kernel.unwrap_or(KernelFamily::Gaussian), ell, h, s.htilde.unwrap_or(h))?;
    Ok(EstimatorConfig {
        kernel,
        grid: make_direction_grid(ell, s.grid_m.unwrap_or(DEFAULT_GRID_M))?,
        renormalize: s.renormalize.unwrap_or(false),
    })
}

fn moment_report(spec: &KernelSpec, ell: usize) -> CliResult<MomentReport> {
    Ok(verify_moments(&build_kernel(spec.family, ell, spec.order)?, MOMENT_TOL))
}

fn run_data_command(config: &RunConfig) -> CliResult<()> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("`{}` needs --input", config.command.name())))?;
    let sample = ingest_csv(input)?;
    let s = &config.settings;
    let est_cfg = estimator_config(s, sample.ell())?;
    let bootstrap = if config.command == Command::Infer {
        if est_cfg.renormalize {
            return Err(CliError::Usage(
                "`infer` supports the plain estimator only (renormalize = false)".into(),
            ));
        }
        let mut b = BootstrapConfig::new(
            s.bootstrap_draws.unwrap_or(DEFAULT_BOOTSTRAP_DRAWS),
            s.alpha.unwrap_or(DEFAULT_ALPHA),
            s.seed.unwrap_or(0),
        )?;
        b.multiplier_law = s.multiplier.unwrap_or(MultiplierLaw::StdNormal);
        b.centering = s.centering.unwrap_or(Centering::AsDisplayed);
        Some(b)
    } else {
        None
    };
    estimate_artifacts(&config.output, &sample, &est_cfg, s.seed.unwrap_or(0), config.command, bootstrap)
}

fn estimate_artifacts(
    out: &Path,
    sample: &IntervalSample,
    cfg: &EstimatorConfig,
    seed: u64,
    command: Command,
    bootstrap: Option<BootstrapConfig>,
) -> CliResult<()> {
    let ell = sample.ell();
    let est = SupportEstimator::fit(sample, cfg)?;
    let set = est.estimate_set()?;
    write_support(out, "support.csv", &set.raw_support, &set.hull)?;
    write_hull(out, "hull.csv", &set.hull)?;
    write_bounds(out, &set.coordinate_bounds)?;

    if let Some(b) = &bootstrap {
        let conf = one_sided_confidence_set(&est, &set, b)?;
        let mut rows = vec![
            vec!["critical_value".into(), String::new(), fmt(conf.critical_value), String::new(), String::new()],
            vec!["radius".into(), String::new(), fmt(conf.expansion_radius), String::new(), String::new()],
        ];
        for (k, v) in conf.expanded_set.support.values.iter().enumerate() {
            rows.push(vec!["support".into(), k.to_string(), fmt(*v), String::new(), String::new()]);
        }
        let root_n = (sample.n() as f64).sqrt();
        for (j, ((lo, hi), c)) in conf
            .coordinate_intervals
            .iter()
            .zip(&conf.coordinate_critical_values)
            .enumerate()
        {
            rows.push(vec!["coordinate".into(), (j + 1).to_string(), fmt(c / root_n), fmt(*lo), fmt(*hi)]);
        }
        write_rows(out, "confidence.csv", &["record", "index", "value", "lower", "upper"], &rows)?;
    }

    let meta = Meta {
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        seed,
        n: sample.n(),
        ell,
        kernel: KernelMeta {
            family: cfg.kernel.family.name(),
            order: cfg.kernel.order,
            h: cfg.kernel.bandwidth_h,
            htilde: cfg.kernel.bandwidth_htilde,
        },
        grid_m: cfg.grid.len(),
        renormalize: cfg.renormalize,
        rate_flags: rate_condition_flags(sample.n(), ell, &cfg.kernel),
        moment_report: moment_report(&cfg.kernel, ell)?,
        bootstrap: bootstrap.map(|b| BootstrapMeta {
            draws: b.n_draws,
            alpha: b.alpha,
            multiplier: b.multiplier_law,
            centering: b.centering,
        }),
    };
    write_json(out, "meta.json", &meta)
}

pub fn risk_config(s: &Settings) -> RiskExperimentConfig {
    let reps = s.reps.unwrap_or(DEFAULT_REPS);
    let seed = s.seed.unwrap_or(0);
    let mut cfg = match s.kernel.unwrap_or(KernelFamily::Gaussian) {
        KernelFamily::Gaussian => RiskExperimentConfig::gaussian_table(reps, seed),
        KernelFamily::HigherOrderGaussian => RiskExperimentConfig::higher_order_table(reps, seed),
    };
    if let Some(v) = &s.ns {
        cfg.ns = v.clone();
    }
    if let Some(v) = &s.cs {
        cfg.cs = v.clone();
    }
    if let Some(v) = &s.hs {
        cfg.hs = v.clone();
    }
    cfg.grid_m = s.grid_m.unwrap_or(cfg.grid_m);
    cfg.oracle_draws = s.oracle_draws.unwrap_or(cfg.oracle_draws);
    cfg.e_max = s.e_max.unwrap_or(cfg.e_max);
    cfg.covariate_law = s.covariate_law.unwrap_or(cfg.covariate_law);
    cfg
}

#[derive(Serialize)]
struct RiskRowJson {
    n: usize,
    c: f64,
    h: f64,
    r_h: f64,
    r_ih: f64,
    r_oh: f64,
    se_r_h: Option<f64>,
    se_r_ih: Option<f64>,
    se_r_oh: Option<f64>,
    completed: usize,
    failures: usize,
}

#[derive(Serialize)]
struct RiskJson<'a> {
    version: &'static str,
    seed: u64,
    reps: usize,
    kernel: &'static str,
    #[serde(rename = "grid_M")]
    grid_m: usize,
    oracle_draws: usize,
    e_max: f64,
    covariate_law: CovariateLaw,
    rows: &'a [RiskRowJson],
}

fn se_cell(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn write_risk_table(out: &Path, cfg: &RiskExperimentConfig, table: &RiskTable) -> CliResult<()> {
    let json_rows: Vec<RiskRowJson> = table
        .rows
        .iter()
        .map(|r| RiskRowJson {
            n: r.n,
            c: r.c,
            h: r.h,
            r_h: r.r_h.mean,
            r_ih: r.r_ih.mean,
            r_oh: r.r_oh.mean,
            se_r_h: se_cell(r.r_h.se),
            se_r_ih: se_cell(r.r_ih.se),
            se_r_oh: se_cell(r.r_oh.se),
            completed: r.completed,
            failures: r.failures,
        })
        .collect();
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    let csv_rows: Vec<Vec<String>> = json_rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt(r.c),
                fmt(r.h),
                fmt(r.r_h),
                fmt(r.r_ih),
                fmt(r.r_oh),
                opt(r.se_r_h),
                opt(r.se_r_ih),
                opt(r.se_r_oh),
                r.failures.to_string(),
            ]
        })
        .collect();
    write_rows(
        out,
        "risk_table.csv",
        &["n", "c", "h", "R_H", "R_IH", "R_OH", "se_R_H", "se_R_IH", "se_R_OH", "failures"],
        &csv_rows,
    )?;
    write_json(
        out,
        "risk_table.json",
        &RiskJson {
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            reps: table.reps,
            kernel: cfg.family.name(),
            grid_m: cfg.grid_m,
            oracle_draws: cfg.oracle_draws,
            e_max: cfg.e_max,
            covariate_law: cfg.covariate_law,
            rows: &json_rows,
        },
    )
}

fn run_simulate(config: &RunConfig) -> CliResult<()> {
    let cfg = risk_config(&config.settings);
    let table = risk_experiment(&cfg)?;
    write_risk_table(&config.output, &cfg, &table)
}

#[derive(Serialize)]
struct OracleMeta {
    version: &'static str,
    seed: u64,
    c: f64,
    e_max: f64,
    covariate_law: CovariateLaw,
    oracle_draws: usize,
    #[serde(rename = "grid_M")]
    grid_m: usize,
    renormalize: bool,
}

fn run_oracle(config: &RunConfig) -> CliResult<()> {
    let s = &config.settings;
    let design = Design {
        c: s.c.unwrap_or(1.0),
        e_max: s.e_max.unwrap_or(0.2),
        covariate_law: s.covariate_law.unwrap_or(CovariateLaw::TruncatedNormal),
    };
    let grid = make_direction_grid(2, s.grid_m.unwrap_or(DEFAULT_GRID_M))?;
    let draws = s.oracle_draws.unwrap_or(DEFAULT_ORACLE_DRAWS);
    let seed = s.seed.unwrap_or(0);
    let renormalize = s.renormalize.unwrap_or(true);
    let set = if renormalize {
        true_set_oracle(&design, &grid, draws, seed)?
    } else {
        design.validate()?;
        intervalad::population::population_set(&design, &grid, draws, seed, false)?
    };
    write_support(&config.output, "oracle_support.csv", &set.raw, &set.hull)?;
    write_hull(&config.output, "oracle_hull.csv", &set.hull)?;
    write_bounds(&config.output, &set.hull.coordinate_bounds())?;
    write_json(
        &config.output,
        "meta.json",
        &OracleMeta {
            version: env!("CARGO_PKG_VERSION"),
            seed,
            c: design.c,
            e_max: design.e_max,
            covariate_law: design.covariate_law,
            oracle_draws: draws,
            grid_m: grid.len(),
            renormalize,
        },
    )
}
