//! Run settings: flat `key = value` config files merged with command-line
//! overrides. Flags win over file values, file values win over defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use intervalad::inference::{Centering, MultiplierLaw};
use intervalad::simulation::CovariateLaw;
use intervalad::KernelFamily;

use crate::error::{CliError, CliResult};

pub const KEYS: &[&str] = &[
    "h",
    "htilde",
    "grid_m",
    "kernel",
    "renormalize",
    "seed",
    "bootstrap_draws",
    "alpha",
    "multiplier",
    "centering",
    "reps",
    "ns",
    "cs",
    "hs",
    "c",
    "oracle_draws",
    "e_max",
    "covariate_law",
];

/// Reads `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; unknown keys and repeated keys are errors.
pub fn parse_config_text(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", idx + 1)))?;
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key `{key}`", idx + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("config line {}: duplicate key `{key}`", idx + 1)));
        }
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Every tunable value; `None` means "use the command default".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub h: Option<f64>,
    pub htilde: Option<f64>,
    pub grid_m: Option<usize>,
    pub kernel: Option<KernelFamily>,
    pub renormalize: Option<bool>,
    pub seed: Option<u64>,
    pub bootstrap_draws: Option<usize>,
    pub alpha: Option<f64>,
    pub multiplier: Option<MultiplierLaw>,
    pub centering: Option<Centering>,
    pub reps: Option<usize>,
    pub ns: Option<Vec<usize>>,
    pub cs: Option<Vec<f64>>,
    pub hs: Option<Vec<f64>>,
    pub c: Option<f64>,
    pub oracle_draws: Option<usize>,
    pub e_max: Option<f64>,
    pub covariate_law: Option<CovariateLaw>,
}

fn scalar<T: FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("invalid value `{v}` for `{key}`")))
}

fn list<T: FromStr>(key: &str, v: &str) -> CliResult<Vec<T>> {
    v.split(',').map(|s| scalar(key, s.trim())).collect()
}

pub fn parse_kernel(v: &str) -> CliResult<KernelFamily> {
    match v {
        "gaussian" => Ok(KernelFamily::Gaussian),
        "higher_order" | "higher_order_gaussian" => Ok(KernelFamily::HigherOrderGaussian),
        _ => Err(CliError::Usage(format!("unknown kernel `{v}`"))),
    }
}

pub fn parse_multiplier(v: &str) -> CliResult<MultiplierLaw> {
    match v {
        "std_normal" => Ok(MultiplierLaw::StdNormal),
        "rademacher" => Ok(MultiplierLaw::Rademacher),
        _ => Err(CliError::Usage(format!("unknown multiplier law `{v}`"))),
    }
}

pub fn parse_centering(v: &str) -> CliResult<Centering> {
    match v {
        "as_displayed" => Ok(Centering::AsDisplayed),
        "projection" => Ok(Centering::Projection),
        _ => Err(CliError::Usage(format!("unknown centering `{v}`"))),
    }
}

pub fn parse_covariate_law(v: &str) -> CliResult<CovariateLaw> {
    match v {
        "truncated_normal" => Ok(CovariateLaw::TruncatedNormal),
        "standard_normal" => Ok(CovariateLaw::StandardNormal),
        _ => Err(CliError::Usage(format!("unknown covariate law `{v}`"))),
    }
}

impl Settings {
    pub fn from_map(map: &BTreeMap<String, String>) -> CliResult<Self> {
        let mut s = Settings::default();
        for (k, v) in map {
            let v = v.as_str();
            match k.as_str() {
                "h" => s.h = Some(scalar(k, v)?),
                "htilde" => s.htilde = Some(scalar(k, v)?),
                "grid_m" => s.grid_m = Some(scalar(k, v)?),
                "kernel" => s.kernel = Some(parse_kernel(v)?),
                "renormalize" => s.renormalize = Some(scalar(k, v)?),
                "seed" => s.seed = Some(scalar(k, v)?),
                "bootstrap_draws" => s.bootstrap_draws = Some(scalar(k, v)?),
                "alpha" => s.alpha = Some(scalar(k, v)?),
                "multiplier" => s.multiplier = Some(parse_multiplier(v)?),
                "centering" => s.centering = Some(parse_centering(v)?),
                "reps" => s.reps = Some(scalar(k, v)?),
                "ns" => s.ns = Some(list(k, v)?),
                "cs" => s.cs = Some(list(k, v)?),
                "hs" => s.hs = Some(list(k, v)?),
                "c" => s.c = Some(scalar(k, v)?),
                "oracle_draws" => s.oracle_draws = Some(scalar(k, v)?),
                "e_max" => s.e_max = Some(scalar(k, v)?),
                "covariate_law" => s.covariate_law = Some(parse_covariate_law(v)?),
                other => return Err(CliError::Usage(format!("unknown key `{other}`"))),
            }
        }
        Ok(s)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overridden_by(self, over: Settings) -> Settings {
        Settings {
            h: over.h.or(self.h),
            htilde: over.htilde.or(self.htilde),
            grid_m: over.grid_m.or(self.grid_m),
            kernel: over.kernel.or(self.kernel),
            renormalize: over.renormalize.or(self.renormalize),
            seed: over.seed.or(self.seed),
            bootstrap_draws: over.bootstrap_draws.or(self.bootstrap_draws),
            alpha: over.alpha.or(self.alpha),
            multiplier: over.multiplier.or(self.multiplier),
            centering: over.centering.or(self.centering),
            reps: over.reps.or(self.reps),
            ns: over.ns.or(self.ns),
            cs: over.cs.or(self.cs),
            hs: over.hs.or(self.hs),
            c: over.c.or(self.c),
            oracle_draws: over.oracle_draws.or(self.oracle_draws),
            e_max: over.e_max.or(self.e_max),
            covariate_law: over.covariate_law.or(self.covariate_law),
        }
    }
}
