//! Population-level closed forms: the selector `Gamma`, the support function
//! of the identified set, coordinate bounds, efficient influence functions,
//! the inverse information kernel and the smooth-max approximation for an
//! interval-valued covariate.
//!
//! Integrals over the covariate law are seeded Monte Carlo averages computed
//! in fixed blocks; each block draws from its own substream so results do not
//! depend on the number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ConvexSetRepr, DirectionGrid, SupportFunctionValues};
use crate::numeric::{derive_seed, dot, norm, rng_from_seed, McEstimate, NeumaierSum};

const BLOCK: usize = 4096;
pub const MIN_DRAWS: usize = 10_000;

/// `Gamma(w1, w2, w3) = w1` if `w3 <= 0`, else `w2`.
#[inline]
pub fn gamma_select(w1: f64, w2: f64, w3: f64) -> f64 {
    if w3 <= 0.0 {
        w1
    } else {
        w2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// `w = f`, score `l = -2 grad f`.
    Density,
    /// A user weight with score `l = -grad w - w grad f / f`.
    User,
}

/// A data-generating process described through its conditional bound
/// functions, covariate density and (optionally) weight.
pub trait Population: Sync {
    fn ell(&self) -> usize;

    fn weight_kind(&self) -> WeightKind {
        WeightKind::Density
    }

    fn m_lower(&self, z: &[f64]) -> f64;
    fn m_upper(&self, z: &[f64]) -> f64;
    fn density(&self, z: &[f64]) -> f64;
    fn grad_log_density(&self, z: &[f64]) -> Vec<f64>;

    /// User weight `w(z)`; only consulted for [`WeightKind::User`].
    fn weight(&self, z: &[f64]) -> f64 {
        self.density(z)
    }

    fn grad_weight(&self, z: &[f64]) -> Vec<f64> {
        let f = self.density(z);
        self.grad_log_density(z).into_iter().map(|g| f * g).collect()
    }

    fn grad_m_lower(&self, z: &[f64]) -> Vec<f64> {
        central_difference(|x| self.m_lower(x), z)
    }

    fn grad_m_upper(&self, z: &[f64]) -> Vec<f64> {
        central_difference(|x| self.m_upper(x), z)
    }

    fn sample_covariate(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// A population that can also draw full observations `(y_L, y_U, z)`.
pub trait ObservationModel: Population {
    fn sample_observation(&self, rng: &mut dyn RngCore) -> Observation;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y_lower: f64,
    pub y_upper: f64,
    pub z: Vec<f64>,
}

/// Central differences with step `1e-5 * max(1, |z_d|)`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, z: &[f64]) -> Vec<f64> {
    let mut x = z.to_vec();
    (0..z.len())
        .map(|d| {
            let step = 1e-5 * z[d].abs().max(1.0);
            x[d] = z[d] + step;
            let up = f(&x);
            x[d] = z[d] - step;
            let down = f(&x);
            x[d] = z[d];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Weight `w(z)` entering the average derivative.
pub fn weight_value<P: Population + ?Sized>(pop: &P, z: &[f64]) -> f64 {
    match pop.weight_kind() {
        WeightKind::Density => pop.density(z),
        WeightKind::User => pop.weight(z),
    }
}

/// Score `l(z)`.
pub fn score<P: Population + ?Sized>(pop: &P, z: &[f64]) -> Vec<f64> {
    let glog = pop.grad_log_density(z);
    match pop.weight_kind() {
        WeightKind::Density => {
            let f = pop.density(z);
            glog.into_iter().map(|g| -2.0 * f * g).collect()
        }
        WeightKind::User => {
            let w = pop.weight(z);
            let gw = pop.grad_weight(z);
            gw.iter().zip(glog).map(|(a, g)| -a - w * g).collect()
        }
    }
}

fn check_unit(p: &[f64], ell: usize) -> Result<()> {
    if p.len() != ell {
        return Err(Error::LengthMismatch { expected: ell, got: p.len() });
    }
    let nrm = norm(p);
    if (nrm - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitDirection(nrm));
    }
    Ok(())
}

fn check_draws(n_draws: usize) -> Result<()> {
    if n_draws < MIN_DRAWS {
        return Err(Error::InvalidConfig(format!("n_draws = {n_draws} below the minimum {MIN_DRAWS}")));
    }
    Ok(())
}

fn blocks(n_draws: usize) -> Vec<(usize, usize)> {
    (0..n_draws.div_ceil(BLOCK))
        .map(|b| (b, (BLOCK).min(n_draws - b * BLOCK)))
        .collect()
}

/// Covariate draws with the quantities every support computation needs.
#[derive(Debug, Clone)]
pub struct CovariateDraws {
    pub ell: usize,
    pub z: Vec<f64>,
    pub l: Vec<f64>,
    pub m_lower: Vec<f64>,
    pub m_upper: Vec<f64>,
}

impl CovariateDraws {
    pub fn generate<P: Population + ?Sized>(pop: &P, n_draws: usize, seed: u64) -> Self {
        let ell = pop.ell();
        let parts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = blocks(n_draws)
            .par_iter()
            .map(|&(b, len)| {
                let mut rng = rng_from_seed(derive_seed(seed, &[b as u64]));
                let mut z = Vec::with_capacity(len * ell);
                let mut l = Vec::with_capacity(len * ell);
                let mut ml = Vec::with_capacity(len);
                let mut mu = Vec::with_capacity(len);
                for _ in 0..len {
                    let zi = pop.sample_covariate(&mut rng);
                    l.extend(score(pop, &zi));
                    ml.push(pop.m_lower(&zi));
                    mu.push(pop.m_upper(&zi));
                    z.extend(zi);
                }
                (z, l, ml, mu)
            })
            .collect();
        let mut out = Self {
            ell,
            z: Vec::with_capacity(n_draws * ell),
            l: Vec::with_capacity(n_draws * ell),
            m_lower: Vec::with_capacity(n_draws),
            m_upper: Vec::with_capacity(n_draws),
        };
        for (z, l, ml, mu) in parts {
            out.z.extend(z);
            out.l.extend(l);
            out.m_lower.extend(ml);
            out.m_upper.extend(mu);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.m_lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m_lower.is_empty()
    }

    pub fn z(&self, i: usize) -> &[f64] {
        &self.z[i * self.ell..(i + 1) * self.ell]
    }

    pub fn l(&self, i: usize) -> &[f64] {
        &self.l[i * self.ell..(i + 1) * self.ell]
    }

    /// Monte Carlo value of `E[Gamma(m_L, m_U, p'l) p'l]`.
    pub fn support(&self, p: &[f64]) -> McEstimate {
        let vals: Vec<f64> = (0..self.len())
            .map(|i| {
                let s = dot(p, self.l(i));
                gamma_select(self.m_lower[i], self.m_upper[i], s) * s
            })
            .collect();
        McEstimate::from_values(&vals)
    }

    /// `E[Gamma(m_L, m_U, q'l) l]`, the extreme point for direction `q`.
    pub fn extreme_point(&self, q: &[f64]) -> Vec<f64> {
        let mut acc = vec![NeumaierSum::new(); self.ell];
        for i in 0..self.len() {
            let li = self.l(i);
            let m = gamma_select(self.m_lower[i], self.m_upper[i], dot(q, li));
            for (a, lv) in acc.iter_mut().zip(li) {
                a.add(m * lv);
            }
        }
        let n = self.len() as f64;
        acc.iter().map(|a| a.value() / n).collect()
    }

    /// `E[l(Z) Z']` as an `ell x ell` matrix.
    pub fn score_covariate_moment(&self) -> DMatrix<f64> {
        let ell = self.ell;
        let mut acc = vec![NeumaierSum::new(); ell * ell];
        for i in 0..self.len() {
            let (li, zi) = (self.l(i), self.z(i));
            for r in 0..ell {
                for c in 0..ell {
                    acc[r * ell + c].add(li[r] * zi[c]);
                }
            }
        }
        let n = self.len() as f64;
        DMatrix::from_fn(ell, ell, |r, c| acc[r * ell + c].value() / n)
    }

    pub fn mean_score_norm_sq(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        for i in 0..self.len() {
            acc.add(dot(self.l(i), self.l(i)));
        }
        acc.value() / self.len() as f64
    }
}

/// Support function of the identified set at unit direction `p`, with its
/// Monte Carlo standard error.
pub fn population_support<P: Population + ?Sized>(pop: &P, p: &[f64], n_draws: usize, seed: u64) -> Result<McEstimate> {
    check_unit(p, pop.ell())?;
    check_draws(n_draws)?;
    Ok(CovariateDraws::generate(pop, n_draws, seed).support(p))
}

/// `(theta_L^(j), theta_U^(j))` read from the axis directions `-iota_j`, `+iota_j`.
pub fn population_coordinate_bounds<P: Population + ?Sized>(
    pop: &P,
    j: usize,
    n_draws: usize,
    seed: u64,
) -> Result<(McEstimate, McEstimate)> {
    let ell = pop.ell();
    if j >= ell {
        return Err(Error::IndexOutOfRange { index: j, n: ell });
    }
    let mut axis = vec![0.0; ell];
    axis[j] = 1.0;
    let upper = population_support(pop, &axis, n_draws, seed)?;
    axis[j] = -1.0;
    let lower = population_support(pop, &axis, n_draws, seed)?;
    Ok((McEstimate { mean: -lower.mean, se: lower.se }, upper))
}

/// The population identified set on a grid.
#[derive(Debug, Clone)]
pub struct PopulationSet {
    /// `<p, theta*(p)>` per direction before hull repair.
    pub raw: SupportFunctionValues,
    pub hull: ConvexSetRepr,
}

/// Extreme points `theta*(p)` on the grid and their hull. With `renormalize`
/// the set is mapped through `E[l Z']^{-1}`; the touching point for `p` in the
/// image is the image of the touching point for `E[l Z']^{-T} p`.
pub fn population_set<P: Population + ?Sized>(
    pop: &P,
    grid: &DirectionGrid,
    n_draws: usize,
    seed: u64,
    renormalize: bool,
) -> Result<PopulationSet> {
    check_draws(n_draws)?;
    if grid.ell() != pop.ell() {
        return Err(Error::LengthMismatch { expected: pop.ell(), got: grid.ell() });
    }
    let draws = CovariateDraws::generate(pop, n_draws, seed);
    let ell = pop.ell();
    let inverse = if renormalize {
        let a = draws.score_covariate_moment();
        let svd = a.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(cond < crate::estimator::CONDITION_LIMIT) {
            return Err(Error::SingularRenormalization(cond));
        }
        Some(a.try_inverse().ok_or(Error::SingularRenormalization(cond))?)
    } else {
        None
    };
    let points: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let p = grid.direction(k);
            match &inverse {
                None => draws.extreme_point(p),
                Some(ainv) => {
                    let q = ainv.transpose() * DVector::from_column_slice(p);
                    let theta = draws.extreme_point(q.as_slice());
                    let img = ainv * DVector::from_vec(theta);
                    img.iter().copied().collect()
                }
            }
        })
        .collect();
    debug_assert!(points.iter().all(|x| x.len() == ell));
    let raw_vals = grid.iter().zip(&points).map(|(p, x)| dot(p, x)).collect();
    Ok(PopulationSet {
        raw: SupportFunctionValues::new(grid.clone(), raw_vals)?,
        hull: ConvexSetRepr::hull_of(grid, &points)?,
    })
}

/// Efficient influence function for mean regression with weight `w`:
/// `w p'grad m_p - upsilon + p'l zeta_p` where both `grad m_p` and
/// `zeta_p = Gamma(y_L - m_L, y_U - m_U, p'l)` switch on the sign of `p'l`.
pub fn efficient_influence<P: Population + ?Sized>(pop: &P, p: &[f64], x: &Observation, upsilon_p: f64) -> f64 {
    let z = &x.z;
    let l = score(pop, z);
    let s = dot(p, &l);
    let grad = if s <= 0.0 { pop.grad_m_lower(z) } else { pop.grad_m_upper(z) };
    let zeta = gamma_select(x.y_lower - pop.m_lower(z), x.y_upper - pop.m_upper(z), s);
    weight_value(pop, z) * dot(p, &grad) - upsilon_p + s * zeta
}

/// Influence function under the density weight with unknown density:
/// `2{f p'grad m_p - upsilon} - 2 p'grad f (y_p - m_p)`.
pub fn efficient_influence_density_weight<P: Population + ?Sized>(
    pop: &P,
    p: &[f64],
    x: &Observation,
    upsilon_p: f64,
) -> f64 {
    let z = &x.z;
    let f = pop.density(z);
    let grad_f: Vec<f64> = pop.grad_log_density(z).into_iter().map(|g| f * g).collect();
    let s = -2.0 * dot(p, &grad_f);
    let (grad, y_p, m_p) = if s <= 0.0 {
        (pop.grad_m_lower(z), x.y_lower, pop.m_lower(z))
    } else {
        (pop.grad_m_upper(z), x.y_upper, pop.m_upper(z))
    };
    2.0 * (f * dot(p, &grad) - upsilon_p) - 2.0 * dot(p, &grad_f) * (y_p - m_p)
}

/// Dispatches on the weight kind: the density-weight form for
/// [`WeightKind::Density`], the general form otherwise.
pub fn influence<P: Population + ?Sized>(pop: &P, p: &[f64], x: &Observation, upsilon_p: f64) -> f64 {
    match pop.weight_kind() {
        WeightKind::Density => efficient_influence_density_weight(pop, p, x, upsilon_p),
        WeightKind::User => efficient_influence(pop, p, x, upsilon_p),
    }
}

pub fn draw_observations<M: ObservationModel + ?Sized>(model: &M, n_draws: usize, seed: u64) -> Vec<Observation> {
    blocks(n_draws)
        .par_iter()
        .map(|&(b, len)| {
            let mut rng = rng_from_seed(derive_seed(seed, &[b as u64]));
            (0..len).map(|_| model.sample_observation(&mut rng)).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// `I^{-1}(p1, p2) = E[psi_{p1} psi_{p2}]` by Monte Carlo. The support values
/// entering the influence functions are computed on the same draws.
pub fn inverse_information<M: ObservationModel + ?Sized>(
    model: &M,
    p1: &[f64],
    p2: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_unit(p1, model.ell())?;
    check_unit(p2, model.ell())?;
    check_draws(n_draws)?;
    let obs = draw_observations(model, n_draws, seed);
    let ups = |p: &[f64]| {
        let mut acc = NeumaierSum::new();
        for x in &obs {
            let s = dot(p, &score(model, &x.z));
            acc.add(gamma_select(model.m_lower(&x.z), model.m_upper(&x.z), s) * s);
        }
        acc.value() / obs.len() as f64
    };
    let (u1, u2) = (ups(p1), ups(p2));
    let prods: Vec<f64> = obs
        .par_iter()
        .map(|x| influence(model, p1, x, u1) * influence(model, p2, x, u2))
        .collect();
    Ok(McEstimate::from_values(&prods))
}

/// Pieces of the variance decomposition of `psi_p` on a set of draws.
#[derive(Debug, Clone, Copy)]
pub struct InfluenceDiagnostics {
    /// Sample mean of `psi_p` and its standard error.
    pub mean: McEstimate,
    /// Sample second moment `E[psi_p^2]` (the diagonal of the inverse information).
    pub second_moment: McEstimate,
    /// Sample variance of the smooth term (`w p'grad m_p`, doubled under the density weight).
    pub smooth_variance: f64,
    /// Sample mean of the squared residual term `|p'l zeta_p|^2`.
    pub residual_term: McEstimate,
    /// Standard error of `second_moment - smooth_variance - residual_term`.
    pub decomposition_se: f64,
}

impl InfluenceDiagnostics {
    pub fn decomposition_gap(&self) -> f64 {
        self.second_moment.mean - self.smooth_variance - self.residual_term.mean
    }
}

/// Mean-zero and variance-decomposition diagnostics for `psi_p` at a given
/// support value.
pub fn influence_diagnostics<M: ObservationModel + ?Sized>(
    model: &M,
    p: &[f64],
    upsilon_p: f64,
    n_draws: usize,
    seed: u64,
) -> Result<InfluenceDiagnostics> {
    check_unit(p, model.ell())?;
    check_draws(n_draws)?;
    let obs = draw_observations(model, n_draws, seed);
    let factor = match model.weight_kind() {
        WeightKind::Density => 2.0,
        WeightKind::User => 1.0,
    };
    let parts: Vec<(f64, f64, f64)> = obs
        .par_iter()
        .map(|x| {
            let z = &x.z;
            let psi = influence(model, p, x, upsilon_p);
            let s = dot(p, &score(model, z));
            let grad = if s <= 0.0 { model.grad_m_lower(z) } else { model.grad_m_upper(z) };
            let smooth = factor * weight_value(model, z) * dot(p, &grad);
            let zeta = gamma_select(x.y_lower - model.m_lower(z), x.y_upper - model.m_upper(z), s);
            (psi, smooth, (s * zeta).powi(2))
        })
        .collect();
    let psi: Vec<f64> = parts.iter().map(|t| t.0).collect();
    let smooth: Vec<f64> = parts.iter().map(|t| t.1).collect();
    let resid: Vec<f64> = parts.iter().map(|t| t.2).collect();
    let sq: Vec<f64> = psi.iter().map(|v| v * v).collect();
    let smooth_mean = McEstimate::from_values(&smooth).mean;
    let centered: Vec<f64> = smooth.iter().map(|v| (v - smooth_mean).powi(2)).collect();
    let smooth_var = McEstimate::from_values(&centered);
    let gap: Vec<f64> = (0..psi.len()).map(|i| sq[i] - centered[i] - resid[i]).collect();
    Ok(InfluenceDiagnostics {
        mean: McEstimate::from_values(&psi),
        second_moment: McEstimate::from_values(&sq),
        smooth_variance: smooth_var.mean,
        residual_term: McEstimate::from_values(&resid),
        decomposition_se: McEstimate::from_values(&gap).se,
    })
}

/// Regression of the outcome on `(z, v_L, v_U)` with a finite support for
/// `(v_L, v_U)` and the softmax temperature `kappa`.
pub struct IntervalCovariateSpec {
    pub gamma: Box<dyn Fn(&[f64], f64, f64) -> f64 + Send + Sync>,
    pub support_pairs: Vec<(f64, f64)>,
    pub kappa: f64,
}

impl IntervalCovariateSpec {
    pub fn new<G>(gamma: G, support_pairs: Vec<(f64, f64)>, kappa: f64) -> Result<Self>
    where
        G: Fn(&[f64], f64, f64) -> f64 + Send + Sync + 'static,
    {
        if support_pairs.iter().any(|(a, b)| a > b) {
            return Err(Error::InvalidConfig("support pair with v_L > v_U".into()));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!("kappa must be positive (got {kappa})")));
        }
        Ok(Self {
            gamma: Box::new(gamma),
            support_pairs,
            kappa,
        })
    }

    fn lower_set(&self, v: f64) -> impl Iterator<Item = &(f64, f64)> {
        self.support_pairs.iter().filter(move |(_, vu)| *vu <= v)
    }

    fn upper_set(&self, v: f64) -> impl Iterator<Item = &(f64, f64)> {
        self.support_pairs.iter().filter(move |(vl, _)| *vl >= v)
    }
}

/// Softmax-weighted average of `values` with weights `exp(kappa * value)`,
/// stabilized by subtracting the maximum exponent.
fn softmax_average(values: &[f64], kappa: f64) -> f64 {
    let top = values.iter().map(|v| kappa * v).fold(f64::NEG_INFINITY, f64::max);
    let mut num = NeumaierSum::new();
    let mut den = NeumaierSum::new();
    for &v in values {
        let w = (kappa * v - top).exp();
        num.add(w * v);
        den.add(w);
    }
    num.value() / den.value()
}

/// Smooth approximations `(g_L, g_U)` of the intersection bounds at `(z, v)`:
/// a softmax-weighted average over `{v_U <= v}` and a softmin-weighted
/// average over `{v_L >= v}`.
pub fn smooth_bounds(spec: &IntervalCovariateSpec, z: &[f64], v: f64) -> Result<(f64, f64)> {
    let lower: Vec<f64> = spec.lower_set(v).map(|&(a, b)| (spec.gamma)(z, a, b)).collect();
    let upper: Vec<f64> = spec.upper_set(v).map(|&(a, b)| (spec.gamma)(z, a, b)).collect();
    if lower.is_empty() || upper.is_empty() {
        return Err(Error::EmptyConstraintSet(v));
    }
    Ok((softmax_average(&lower, spec.kappa), -softmax_average(&upper.iter().map(|x| -x).collect::<Vec<_>>(), spec.kappa)))
}

/// The exact intersection bounds `(sup over Xi_L, inf over Xi_U)`.
pub fn hard_bounds(spec: &IntervalCovariateSpec, z: &[f64], v: f64) -> Result<(f64, f64)> {
    let lo = spec
        .lower_set(v)
        .map(|&(a, b)| (spec.gamma)(z, a, b))
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = spec
        .upper_set(v)
        .map(|&(a, b)| (spec.gamma)(z, a, b))
        .fold(f64::INFINITY, f64::min);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::EmptyConstraintSet(v));
    }
    Ok((lo, hi))
}

/// Smoothed support value `E[Gamma(g_L, g_U, p'l) p'l]` and the bias bound
/// `C E|l|^2 / kappa^2` with `C = |support_pairs|`.
pub fn smooth_support_interval_covariate<P: Population + ?Sized>(
    spec: &IntervalCovariateSpec,
    pop: &P,
    p: &[f64],
    v: f64,
    n_draws: usize,
    seed: u64,
) -> Result<(McEstimate, f64)> {
    check_unit(p, pop.ell())?;
    check_draws(n_draws)?;
    let draws = CovariateDraws::generate(pop, n_draws, seed);
    let mut vals = Vec::with_capacity(draws.len());
    for i in 0..draws.len() {
        let (gl, gu) = smooth_bounds(spec, draws.z(i), v)?;
        let s = dot(p, draws.l(i));
        vals.push(gamma_select(gl, gu, s) * s);
    }
    let c = spec.support_pairs.len() as f64;
    let bias = c * draws.mean_score_norm_sq() / (spec.kappa * spec.kappa);
    Ok((McEstimate::from_values(&vals), bias))
}
