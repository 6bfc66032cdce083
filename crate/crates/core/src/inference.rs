//! Multiplier bootstrap for the support-function process, one-sided
//! confidence sets, coordinate intervals and Hausdorff distances.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{SetEstimate, SupportEstimator};
use crate::model::{ConvexSetRepr, SupportFunctionValues};
use crate::numeric::{derive_seed, dot, rng_from_seed, NeumaierSum};

pub const MIN_BOOTSTRAP_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierLaw {
    StdNormal,
    Rademacher,
}

/// What is subtracted from each per-observation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Subtract the support estimate itself.
    AsDisplayed,
    /// Subtract twice the support estimate, the mean of the pairwise terms.
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub n_draws: usize,
    pub multiplier_law: MultiplierLaw,
    pub alpha: f64,
    pub seed: u64,
    pub centering: Centering,
}

impl BootstrapConfig {
    pub fn new(n_draws: usize, alpha: f64, seed: u64) -> Result<Self> {
        let c = Self {
            n_draws,
            multiplier_law: MultiplierLaw::StdNormal,
            alpha,
            seed,
            centering: Centering::AsDisplayed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_draws < MIN_BOOTSTRAP_DRAWS {
            return Err(Error::InvalidConfig(format!(
                "bootstrap draws {} below the minimum {MIN_BOOTSTRAP_DRAWS}",
                self.n_draws
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1] (got {})", self.alpha)));
        }
        Ok(())
    }
}

/// Draws `n` multipliers from `law` using the substream for bootstrap draw `b`.
pub fn draw_multipliers(law: MultiplierLaw, n: usize, seed: u64, b: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, &[b]));
    match law {
        MultiplierLaw::StdNormal => (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
        MultiplierLaw::Rademacher => (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect(),
    }
}

/// Per-observation terms of the bootstrap process for every grid direction:
/// `a_{p,i} = sum_{j != i} c p'grad K((Z_i - Z_j)/h) (Y_{p,i} - Y_{p,j})` with
/// `c = -2/((n-1) h^(ell+1))`, together with the support estimates.
#[derive(Debug, Clone)]
pub struct BootstrapTerms {
    n: usize,
    /// `terms[k * n + i]`.
    terms: Vec<f64>,
    upsilon: Vec<f64>,
}

impl BootstrapTerms {
    pub fn compute(est: &SupportEstimator<'_>) -> Result<Self> {
        if est.config().renormalize {
            return Err(Error::InvalidConfig(
                "inference is implemented for the plain estimator only (set renormalize = false)".into(),
            ));
        }
        let sample = est.sample();
        let grid = &est.config().grid;
        let (n, ell, m) = (sample.n(), sample.ell(), grid.len());
        let h = est.config().kernel.bandwidth_h;
        let c = -2.0 / ((n - 1) as f64 * h.powi(ell as i32 + 1));
        let classified: Vec<Vec<f64>> = grid.iter().map(|p| est.classify(p)).collect::<Result<_>>()?;
        let upsilon: Vec<f64> = grid.iter().map(|p| est.support(p)).collect::<Result<_>>()?;
        let kernel = est.kernel();
        let per_i: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let zi = sample.z(i);
                let mut u = vec![0.0; ell];
                let mut g = vec![0.0; ell];
                let mut acc = vec![NeumaierSum::new(); m];
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let zj = sample.z(j);
                    for d in 0..ell {
                        u[d] = (zi[d] - zj[d]) / h;
                    }
                    kernel.value_and_gradient(&u, &mut g);
                    for (k, a) in acc.iter_mut().enumerate() {
                        let y = &classified[k];
                        a.add(dot(grid.direction(k), &g) * (y[i] - y[j]));
                    }
                }
                acc.iter().map(|a| c * a.value()).collect()
            })
            .collect();
        let mut terms = vec![0.0; m * n];
        for (i, row) in per_i.iter().enumerate() {
            for k in 0..m {
                terms[k * n + i] = row[k];
            }
        }
        Ok(Self { n, terms, upsilon })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn directions(&self) -> usize {
        self.upsilon.len()
    }

    pub fn term(&self, k: usize, i: usize) -> f64 {
        self.terms[k * self.n + i]
    }

    pub fn upsilon(&self, k: usize) -> f64 {
        self.upsilon[k]
    }

    /// `G*(p_k) = n^{-1/2} sum_i W_i (a_{p_k,i} - centre)`.
    pub fn process(&self, k: usize, weights: &[f64], centering: Centering) -> f64 {
        let centre = match centering {
            Centering::AsDisplayed => self.upsilon[k],
            Centering::Projection => 2.0 * self.upsilon[k],
        };
        let row = &self.terms[k * self.n..(k + 1) * self.n];
        let mut acc = NeumaierSum::new();
        for (w, a) in weights.iter().zip(row) {
            acc.add(w * (a - centre));
        }
        acc.value() / (self.n as f64).sqrt()
    }
}

/// The bootstrap process at grid direction `k` for the given multipliers.
pub fn bootstrap_process(est: &SupportEstimator<'_>, weights: &[f64], k: usize, centering: Centering) -> Result<f64> {
    if weights.len() != est.sample().n() {
        return Err(Error::LengthMismatch { expected: est.sample().n(), got: weights.len() });
    }
    if k >= est.config().grid.len() {
        return Err(Error::IndexOutOfRange { index: k, n: est.config().grid.len() });
    }
    Ok(BootstrapTerms::compute(est)?.process(k, weights, centering))
}

#[derive(Debug, Clone)]
pub struct ConfidenceOutput {
    /// Critical value `c*` before division by `sqrt(n)`.
    pub critical_value: f64,
    /// `c* / sqrt(n)`.
    pub expansion_radius: f64,
    pub expanded_set: ConvexSetRepr,
    /// Per-coordinate critical values from the two axis directions.
    pub coordinate_critical_values: Vec<f64>,
    pub coordinate_intervals: Vec<(f64, f64)>,
}

/// Order statistic `ceil((1 - alpha) B)` (1-based, at least 1) of `stats`.
pub fn upper_quantile(stats: &[f64], alpha: f64) -> f64 {
    let mut s = stats.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let b = s.len();
    let idx = (((1.0 - alpha) * b as f64).ceil() as usize).clamp(1, b);
    s[idx - 1]
}

/// Bootstrap sup statistics: for each draw, `sup_p (-G*(p))_+` over the grid
/// and `max_{p in {iota_j, -iota_j}} (-G*(p))_+` for every coordinate.
fn bootstrap_statistics(
    terms: &BootstrapTerms,
    axis: &[(usize, usize)],
    bconfig: &BootstrapConfig,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let draws: Vec<(f64, Vec<f64>)> = (0..bconfig.n_draws)
        .into_par_iter()
        .map(|b| {
            let w = draw_multipliers(bconfig.multiplier_law, terms.n(), bconfig.seed, b as u64);
            let neg: Vec<f64> = (0..terms.directions())
                .map(|k| (-terms.process(k, &w, bconfig.centering)).max(0.0))
                .collect();
            let sup = neg.iter().copied().fold(0.0, f64::max);
            let coords = axis.iter().map(|&(pos, negk)| neg[pos].max(neg[negk])).collect();
            (sup, coords)
        })
        .collect();
    let sups = draws.iter().map(|d| d.0).collect();
    let per_coord = (0..axis.len()).map(|j| draws.iter().map(|d| d.1[j]).collect()).collect();
    (sups, per_coord)
}

fn axis_indices(set: &SetEstimate) -> Result<Vec<(usize, usize)>> {
    let grid = &set.hull.support.grid;
    (0..grid.ell())
        .map(|j| match (grid.axis_index(j, true), grid.axis_index(j, false)) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::InvalidConfig(format!("grid lacks the axis directions for coordinate {j}"))),
        })
        .collect()
}

/// One-sided confidence set: the hull estimate expanded by `c*/sqrt(n)`, where
/// `c*` is the bootstrap `1 - alpha` quantile of `sup_p (-G*(p))_+`. Coordinate
/// intervals use the same draws restricted to `+-iota_j`.
pub fn one_sided_confidence_set(
    est: &SupportEstimator<'_>,
    set: &SetEstimate,
    bconfig: &BootstrapConfig,
) -> Result<ConfidenceOutput> {
    bconfig.validate()?;
    let terms = BootstrapTerms::compute(est)?;
    let axis = axis_indices(set)?;
    let (sups, per_coord) = bootstrap_statistics(&terms, &axis, bconfig);
    let root_n = (terms.n() as f64).sqrt();
    let critical_value = upper_quantile(&sups, bconfig.alpha);
    let expansion_radius = critical_value / root_n;
    let coordinate_critical_values: Vec<f64> = per_coord.iter().map(|s| upper_quantile(s, bconfig.alpha)).collect();
    let coordinate_intervals = set
        .coordinate_bounds
        .iter()
        .zip(&coordinate_critical_values)
        .map(|(&(lo, hi), c)| (lo - c / root_n, hi + c / root_n))
        .collect();
    Ok(ConfidenceOutput {
        critical_value,
        expansion_radius,
        expanded_set: set.hull.expanded(expansion_radius),
        coordinate_critical_values,
        coordinate_intervals,
    })
}

/// Confidence interval for coordinate `j` from the axis directions only.
pub fn coordinate_confidence_interval(
    est: &SupportEstimator<'_>,
    set: &SetEstimate,
    bconfig: &BootstrapConfig,
    j: usize,
) -> Result<(f64, f64)> {
    let ell = est.sample().ell();
    if j >= ell {
        return Err(Error::IndexOutOfRange { index: j, n: ell });
    }
    Ok(one_sided_confidence_set(est, set, bconfig)?.coordinate_intervals[j])
}

fn check_same_grid(a: &SupportFunctionValues, b: &SupportFunctionValues) -> Result<()> {
    if a.grid != b.grid || a.values.len() != b.values.len() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// `max_p |a(p) - b(p)|` over the shared grid.
pub fn hausdorff(a: &SupportFunctionValues, b: &SupportFunctionValues) -> Result<f64> {
    check_same_grid(a, b)?;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// `max_p (a(p) - b(p))_+`: the excess of `A` over `B`.
pub fn directed_hausdorff(a: &SupportFunctionValues, b: &SupportFunctionValues) -> Result<f64> {
    check_same_grid(a, b)?;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).max(0.0)).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DirectionGrid;

    fn interval(lo: f64, hi: f64) -> SupportFunctionValues {
        let grid = DirectionGrid::from_directions(1, &[vec![1.0], vec![-1.0]]).unwrap();
        SupportFunctionValues::new(grid, vec![hi, -lo]).unwrap()
    }

    #[test]
    fn interval_distances() {
        let a = interval(0.0, 1.0);
        let b = interval(0.0, 2.0);
        assert_eq!(hausdorff(&a, &b).unwrap(), 1.0);
        assert_eq!(directed_hausdorff(&a, &b).unwrap(), 0.0);
        assert_eq!(directed_hausdorff(&b, &a).unwrap(), 1.0);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_grids() {
        let a = interval(0.0, 1.0);
        let grid = DirectionGrid::from_directions(1, &[vec![-1.0], vec![1.0]]).unwrap();
        let b = SupportFunctionValues::new(grid, vec![0.0, 1.0]).unwrap();
        assert_eq!(hausdorff(&a, &b), Err(Error::GridMismatch));
    }

    #[test]
    fn quantile_convention() {
        let s = [3.0, 1.0, 2.0, 5.0, 4.0];
        assert_eq!(upper_quantile(&s, 1.0), 1.0);
        assert_eq!(upper_quantile(&s, 0.2), 4.0);
        assert_eq!(upper_quantile(&s, 0.01), 5.0);
    }

    #[test]
    fn multipliers_have_unit_variance() {
        for law in [MultiplierLaw::StdNormal, MultiplierLaw::Rademacher] {
            let w = draw_multipliers(law, 200_000, 11, 0);
            let m = w.iter().sum::<f64>() / w.len() as f64;
            let v = w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / w.len() as f64;
            assert!(m.abs() < 0.01 && (v - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig::new(99, 0.05, 1).is_err());
        assert!(BootstrapConfig::new(100, 0.0, 1).is_err());
        assert!(BootstrapConfig::new(100, 1.0, 1).is_ok());
    }
}
