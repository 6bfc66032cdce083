//! Plug-in support-function estimators, extreme points and hull-repaired set
//! estimates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::density::{build_score_table, ScoreTable};
use crate::error::{Error, Result};
use crate::kernel::{build_kernel, KernelFunction};
use crate::model::{ConvexSetRepr, DirectionGrid, IntervalSample, KernelSpec, SupportFunctionValues};
use crate::numeric::{dot, NeumaierSum};
use crate::population::gamma_select;

/// Largest accepted condition number of the renormalization matrix.
pub const CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub kernel: KernelSpec,
    pub grid: DirectionGrid,
    pub renormalize: bool,
}

#[derive(Debug, Clone)]
pub struct SetEstimate {
    /// Direct estimates on the grid, before hull repair.
    pub raw_support: SupportFunctionValues,
    pub hull: ConvexSetRepr,
    pub coordinate_bounds: Vec<(f64, f64)>,
}

/// A fitted estimator: the score tables at `h` and `htilde` and, for the
/// renormalized form, the inverse of `(1/n) sum l_i Z_i'`.
#[derive(Debug, Clone)]
pub struct SupportEstimator<'a> {
    sample: &'a IntervalSample,
    config: EstimatorConfig,
    kernel: KernelFunction,
    outer: ScoreTable,
    inner: Option<ScoreTable>,
    renorm_inverse: Option<DMatrix<f64>>,
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    }
}

impl<'a> SupportEstimator<'a> {
    pub fn fit(sample: &'a IntervalSample, config: &EstimatorConfig) -> Result<Self> {
        let ell = sample.ell();
        config.kernel.validate(ell)?;
        if config.grid.ell() != ell {
            return Err(Error::LengthMismatch { expected: ell, got: config.grid.ell() });
        }
        let kernel = build_kernel(config.kernel.family, ell, config.kernel.order)?;
        let (h, ht) = (config.kernel.bandwidth_h, config.kernel.bandwidth_htilde);
        let outer = build_score_table(sample, &kernel, h)?;
        let inner = if ht == h {
            None
        } else {
            Some(build_score_table(sample, &kernel, ht)?)
        };
        let mut est = Self {
            sample,
            config: config.clone(),
            kernel,
            outer,
            inner,
            renorm_inverse: None,
        };
        if config.renormalize {
            let a = est.renormalization_matrix();
            let cond = condition_number(&a);
            if !(cond < CONDITION_LIMIT) {
                return Err(Error::SingularRenormalization(cond));
            }
            est.renorm_inverse = Some(a.try_inverse().ok_or(Error::SingularRenormalization(cond))?);
        }
        Ok(est)
    }

    pub fn sample(&self) -> &IntervalSample {
        self.sample
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn kernel(&self) -> &KernelFunction {
        &self.kernel
    }

    /// Score table at `h`.
    pub fn outer_table(&self) -> &ScoreTable {
        &self.outer
    }

    /// Score table at `htilde` (shared with the outer table when the bandwidths coincide).
    pub fn inner_table(&self) -> &ScoreTable {
        self.inner.as_ref().unwrap_or(&self.outer)
    }

    /// `(1/n) sum l_{i,h}(Z_i) Z_i'`.
    pub fn renormalization_matrix(&self) -> DMatrix<f64> {
        let (n, ell) = (self.sample.n(), self.sample.ell());
        let mut acc = vec![NeumaierSum::new(); ell * ell];
        for i in 0..n {
            let (l, z) = (self.outer.lhat(i), self.sample.z(i));
            for r in 0..ell {
                for c in 0..ell {
                    acc[r * ell + c].add(l[r] * z[c]);
                }
            }
        }
        DMatrix::from_fn(ell, ell, |r, c| acc[r * ell + c].value() / n as f64)
    }

    /// `Y_{p,i} = Gamma(Y_{L,i}, Y_{U,i}, p'l_{i,htilde}(Z_i))`.
    pub fn classify(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_direction(p)?;
        Ok(self.classify_unchecked(p))
    }

    fn classify_unchecked(&self, p: &[f64]) -> Vec<f64> {
        let inner = self.inner_table();
        (0..self.sample.n())
            .map(|i| gamma_select(self.sample.y_lower(i), self.sample.y_upper(i), dot(p, inner.lhat(i))))
            .collect()
    }

    fn check_direction(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.sample.ell() {
            return Err(Error::LengthMismatch { expected: self.sample.ell(), got: p.len() });
        }
        Ok(())
    }

    /// `(1/n) sum p'l_{i,h}(Z_i) Y_{p,i}`.
    pub fn support(&self, p: &[f64]) -> Result<f64> {
        self.check_direction(p)?;
        let y = self.classify_unchecked(p);
        let mut acc = NeumaierSum::new();
        for (i, yi) in y.iter().enumerate() {
            acc.add(dot(p, self.outer.lhat(i)) * yi);
        }
        Ok(acc.value() / self.sample.n() as f64)
    }

    /// `(1/n) sum l_{i,h}(Z_i) Y_{p,i}` before any renormalization.
    fn plain_extreme_point(&self, p: &[f64]) -> Vec<f64> {
        let y = self.classify_unchecked(p);
        let ell = self.sample.ell();
        let mut acc = vec![NeumaierSum::new(); ell];
        for (i, yi) in y.iter().enumerate() {
            for (a, l) in acc.iter_mut().zip(self.outer.lhat(i)) {
                a.add(l * yi);
            }
        }
        let n = self.sample.n() as f64;
        acc.iter().map(|a| a.value() / n).collect()
    }

    fn inverse(&self) -> Result<&DMatrix<f64>> {
        self.renorm_inverse
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("estimator was fitted without renormalization".into()))
    }

    /// `p' A^{-1} (1/n) sum l_{i,h}(Z_i) Y_{p,i}` with `A = (1/n) sum l_i Z_i'`.
    pub fn support_iv(&self, p: &[f64]) -> Result<f64> {
        self.check_direction(p)?;
        Ok(dot(p, &self.iv_extreme_point(p)?))
    }

    fn iv_extreme_point(&self, p: &[f64]) -> Result<Vec<f64>> {
        let theta = DVector::from_vec(self.plain_extreme_point(p));
        Ok((self.inverse()? * theta).iter().copied().collect())
    }

    /// Touching point for direction `p` in the configured form.
    pub fn extreme_point(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_direction(p)?;
        if self.config.renormalize {
            self.iv_extreme_point(p)
        } else {
            Ok(self.plain_extreme_point(p))
        }
    }

    /// Support value in the configured form.
    pub fn value(&self, p: &[f64]) -> Result<f64> {
        if self.config.renormalize {
            self.support_iv(p)
        } else {
            self.support(p)
        }
    }

    /// Extreme points over the whole grid, their hull and the coordinate bounds.
    pub fn estimate_set(&self) -> Result<SetEstimate> {
        let grid = &self.config.grid;
        let rows: Vec<(f64, Vec<f64>)> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let p = grid.direction(k);
                let x = self.extreme_point(p)?;
                let v = if self.config.renormalize { dot(p, &x) } else { self.support(p)? };
                Ok((v, x))
            })
            .collect::<Result<_>>()?;
        let (raw, points): (Vec<f64>, Vec<Vec<f64>>) = rows.into_iter().unzip();
        let hull = ConvexSetRepr::hull_of(grid, &points)?;
        let coordinate_bounds = hull.coordinate_bounds();
        Ok(SetEstimate {
            raw_support: SupportFunctionValues::new(grid.clone(), raw)?,
            hull,
            coordinate_bounds,
        })
    }
}

pub fn classify_outcomes(sample: &IntervalSample, config: &EstimatorConfig, p: &[f64]) -> Result<Vec<f64>> {
    SupportEstimator::fit(sample, config)?.classify(p)
}

pub fn support_estimate(sample: &IntervalSample, config: &EstimatorConfig, p: &[f64]) -> Result<f64> {
    SupportEstimator::fit(sample, config)?.support(p)
}

pub fn support_estimate_iv(sample: &IntervalSample, config: &EstimatorConfig, p: &[f64]) -> Result<f64> {
    let cfg = EstimatorConfig {
        renormalize: true,
        ..config.clone()
    };
    SupportEstimator::fit(sample, &cfg)?.support_iv(p)
}

pub fn extreme_point(sample: &IntervalSample, config: &EstimatorConfig, p: &[f64]) -> Result<Vec<f64>> {
    SupportEstimator::fit(sample, config)?.extreme_point(p)
}

pub fn estimate_set(sample: &IntervalSample, config: &EstimatorConfig) -> Result<SetEstimate> {
    SupportEstimator::fit(sample, config)?.estimate_set()
}
