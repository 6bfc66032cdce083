//! Product kernels built from a univariate factor `k(t) = P(t^2) phi(t)`.
//!
//! The plain Gaussian kernel has `P = 1`. Higher-order kernels pick the even
//! polynomial `P` so that all univariate moments of degree `1..J-1` vanish;
//! odd moments vanish by symmetry, so only the even ones enter the linear
//! system solved in [`build_kernel`].

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::KernelFamily;
use crate::numeric::gauss_hermite;

/// Kernel order needed for bias removal with `ell` continuous covariates.
pub fn required_order(ell: usize) -> usize {
    if ell % 2 == 0 {
        (ell + 4) / 2
    } else {
        (ell + 3) / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelFunction {
    family: KernelFamily,
    ell: usize,
    order: usize,
    /// `P(s) = sum_m coeffs[m] s^m`, evaluated at `s = t^2`.
    coeffs: Vec<f64>,
    norm_const: f64,
}

/// `E[X^{2k}]` for a standard normal.
fn normal_even_moment(k: usize) -> f64 {
    (1..=k).map(|i| (2 * i - 1) as f64).product()
}

/// Builds the product kernel of the given family and order in `R^ell`.
pub fn build_kernel(family: KernelFamily, ell: usize, order: usize) -> Result<KernelFunction> {
    if ell == 0 {
        return Err(Error::InvalidKernel("ell must be positive".into()));
    }
    let coeffs = match family {
        KernelFamily::Gaussian => {
            if order != 2 {
                return Err(Error::InvalidKernel("the Gaussian kernel has order 2".into()));
            }
            vec![1.0]
        }
        KernelFamily::HigherOrderGaussian => {
            if order != required_order(ell) {
                return Err(Error::InvalidKernel(format!(
                    "order {order} differs from the required order {} for ell = {ell}",
                    required_order(ell)
                )));
            }
            solve_even_coefficients(order)?
        }
    };
    Ok(KernelFunction::with_coefficients(family, ell, order, coeffs))
}

/// Coefficients of the even polynomial factor giving a univariate kernel of
/// the requested order.
fn solve_even_coefficients(order: usize) -> Result<Vec<f64>> {
    let r = (order - 1) / 2 + 1;
    let a = DMatrix::from_fn(r, r, |d, m| normal_even_moment(m + d));
    let mut b = DVector::zeros(r);
    b[0] = 1.0;
    let sol = a.lu().solve(&b).ok_or(Error::MomentSystemSingular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::MomentSystemSingular);
    }
    Ok(sol.iter().copied().collect())
}

impl KernelFunction {
    /// A kernel with an arbitrary even polynomial factor. No moment conditions
    /// are checked; see [`verify_moments`].
    pub fn with_coefficients(family: KernelFamily, ell: usize, order: usize, coeffs: Vec<f64>) -> Self {
        let norm_const = (2.0 * std::f64::consts::PI).powf(-(ell as f64) / 2.0);
        Self {
            family,
            ell,
            order,
            coeffs,
            norm_const,
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    fn poly(&self, s: f64) -> (f64, f64) {
        // P(s) and P'(s) by Horner.
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in self.coeffs.iter().rev() {
            dp = dp * s + p;
            p = p * s + c;
        }
        (p, dp)
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.ell {
            return Err(Error::LengthMismatch { expected: self.ell, got: u.len() });
        }
        Ok(())
    }

    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        Ok(self.value_unchecked(u))
    }

    pub fn eval_gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let mut g = vec![0.0; self.ell];
        self.value_and_gradient(u, &mut g);
        Ok(g)
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, u: &[f64]) -> f64 {
        let mut sq = 0.0;
        let mut prod = 1.0;
        for &t in u {
            let s = t * t;
            sq += s;
            prod *= self.poly(s).0;
        }
        prod * self.norm_const * (-0.5 * sq).exp()
    }

    /// Returns `K(u)` and writes `grad K(u)` into `grad`. Both are computed
    /// from squared coordinates, so `K(-u) == K(u)` and
    /// `grad K(-u) == -grad K(u)` hold bitwise.
    #[inline]
    pub(crate) fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let ell = self.ell;
        let mut sq = 0.0;
        // Small fixed buffers cover every practical dimension without allocating.
        let mut pv = [0.0f64; 8];
        let mut dv = [0.0f64; 8];
        let mut heap_p;
        let mut heap_d;
        let (pvals, dvals): (&mut [f64], &mut [f64]) = if ell <= 8 {
            (&mut pv[..ell], &mut dv[..ell])
        } else {
            heap_p = vec![0.0; ell];
            heap_d = vec![0.0; ell];
            (&mut heap_p[..], &mut heap_d[..])
        };
        for j in 0..ell {
            let s = u[j] * u[j];
            sq += s;
            let (p, dp) = self.poly(s);
            pvals[j] = p;
            // d/dt [P(t^2) e^{-t^2/2}] / e^{-t^2/2} = t (2 P'(s) - P(s))
            dvals[j] = 2.0 * dp - p;
        }
        let gauss = self.norm_const * (-0.5 * sq).exp();
        let mut value = gauss;
        for &p in pvals.iter() {
            value *= p;
        }
        for j in 0..ell {
            let mut g = u[j] * dvals[j] * gauss;
            for (i, &p) in pvals.iter().enumerate() {
                if i != j {
                    g *= p;
                }
            }
            grad[j] = g;
        }
        value
    }
}

/// Quadrature check of the normalization and low-order moments of a kernel.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub integral: f64,
    /// `(multi-index, integral of u^a K(u) du)` for all `1 <= |a| <= order + 1`.
    pub moments: Vec<(Vec<usize>, f64)>,
    /// Smallest degree with a moment exceeding the tolerance, if any.
    pub leading_degree: Option<usize>,
    pub order: usize,
    pub tol: f64,
    pub failures: Vec<String>,
    pub passed: bool,
}

fn multi_indices(ell: usize, max_degree: usize) -> Vec<Vec<usize>> {
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for a in 0..=left {
            cur[pos] = a;
            rec(pos + 1, left - a, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    rec(0, max_degree, &mut vec![0; ell], &mut out);
    out.retain(|a| a.iter().sum::<usize>() >= 1);
    out.sort_by_key(|a| a.iter().sum::<usize>());
    out
}

/// Integrates `K` and its moments up to degree `order + 1` with a tensorized
/// Gauss–Hermite rule (64 nodes per axis for `ell <= 3`, 16 beyond), exact for
/// polynomial-times-Gaussian integrands of the degrees involved.
///
/// The check passes when `|int K - 1| <= tol`, every moment of degree below
/// the order is within `tol` of zero, and the first non-vanishing degree is
/// the order itself, or `order + 1` for odd orders since odd moments of a
/// symmetric kernel are zero.
pub fn verify_moments(k: &KernelFunction, tol: f64) -> MomentReport {
    let ell = k.ell();
    let order = k.order();
    let nodes_per_axis = if ell <= 3 { 64 } else { 16 };
    let (x, w) = gauss_hermite(nodes_per_axis);
    let indices = multi_indices(ell, order + 1);
    let mut sums = vec![0.0; indices.len()];
    let mut integral = 0.0;
    let total = nodes_per_axis.pow(ell as u32);
    let mut idx = vec![0usize; ell];
    let mut u = vec![0.0; ell];
    let norm_const = (2.0 * std::f64::consts::PI).powf(-(ell as f64) / 2.0);
    for _ in 0..total {
        let mut weight = 1.0;
        let mut sq = 0.0;
        for j in 0..ell {
            u[j] = x[idx[j]];
            weight *= w[idx[j]];
            sq += u[j] * u[j];
        }
        // E_phi[K(u) / phi(u) * u^a]
        let g = k.value_unchecked(&u) / (norm_const * (-0.5 * sq).exp());
        let wg = weight * g;
        integral += wg;
        for (s, a) in sums.iter_mut().zip(&indices) {
            let mut mono = 1.0;
            for (uj, &aj) in u.iter().zip(a) {
                mono *= uj.powi(aj as i32);
            }
            *s += wg * mono;
        }
        for j in 0..ell {
            idx[j] += 1;
            if idx[j] < nodes_per_axis {
                break;
            }
            idx[j] = 0;
        }
    }

    let mut failures = Vec::new();
    if (integral - 1.0).abs() > tol {
        failures.push(format!("integral {integral:e} differs from 1"));
    }
    let moments: Vec<(Vec<usize>, f64)> = indices.into_iter().zip(sums).collect();
    for (a, m) in &moments {
        let d: usize = a.iter().sum();
        if d < order && m.abs() > tol {
            failures.push(format!("moment {a:?} = {m:e} should vanish"));
        }
    }
    let leading_degree = moments
        .iter()
        .filter(|(_, m)| m.abs() > tol)
        .map(|(a, _)| a.iter().sum::<usize>())
        .min();
    let expected_leading = if order % 2 == 1 { order + 1 } else { order };
    match leading_degree {
        Some(d) if d == order || d == expected_leading => {}
        Some(d) if d < order => {}
        other => failures.push(format!(
            "first non-vanishing moment degree {other:?}, expected {expected_leading}"
        )),
    }
    MomentReport {
        integral,
        passed: failures.is_empty(),
        moments,
        leading_degree,
        order,
        tol,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn required_orders() {
        assert_eq!(required_order(1), 2);
        assert_eq!(required_order(2), 3);
        assert_eq!(required_order(3), 3);
        assert_eq!(required_order(4), 4);
        assert_eq!(required_order(5), 4);
    }

    #[test]
    fn order_three_coefficients_match_hand_solution() {
        // a + b = 1 and a + 3b = 0
        let k = build_kernel(KernelFamily::HigherOrderGaussian, 2, 3).unwrap();
        let c = k.coefficients();
        assert!((c[0] - 1.5).abs() < 1e-14);
        assert!((c[1] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn point_values() {
        let g = build_kernel(KernelFamily::Gaussian, 1, 2).unwrap();
        assert!((g.eval(&[0.0]).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        let h = build_kernel(KernelFamily::HigherOrderGaussian, 1, 2).unwrap();
        // required_order(1) == 2, so this is the Gaussian kernel again
        assert_eq!(h.coefficients(), &[1.0]);
        let h3 = KernelFunction::with_coefficients(KernelFamily::HigherOrderGaussian, 1, 3, vec![1.5, -0.5]);
        assert!((h3.eval(&[0.0]).unwrap() - 1.5 * 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn dimension_checked() {
        let g = build_kernel(KernelFamily::Gaussian, 2, 2).unwrap();
        assert!(g.eval(&[0.0]).is_err());
        assert!(g.eval_gradient(&[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn wrong_orders_rejected() {
        assert!(build_kernel(KernelFamily::Gaussian, 2, 3).is_err());
        assert!(build_kernel(KernelFamily::HigherOrderGaussian, 2, 4).is_err());
    }

    #[test]
    fn gradient_vanishes_at_origin() {
        for fam in [KernelFamily::Gaussian, KernelFamily::HigherOrderGaussian] {
            let k = build_kernel(fam, 2, if fam == KernelFamily::Gaussian { 2 } else { 3 }).unwrap();
            assert_eq!(k.eval_gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn gaussian_moments_pass() {
        let k = build_kernel(KernelFamily::Gaussian, 2, 2).unwrap();
        let r = verify_moments(&k, 1e-6);
        assert!(r.passed, "{:?}", r.failures);
        assert_eq!(r.leading_degree, Some(2));
    }

    #[test]
    fn corrupted_coefficients_fail() {
        let k = KernelFunction::with_coefficients(KernelFamily::HigherOrderGaussian, 2, 3, vec![1.5, -0.45]);
        let r = verify_moments(&k, 1e-6);
        assert!(!r.passed);
        assert!(!r.failures.is_empty());
    }

    #[test]
    fn multi_index_counts() {
        // degree 1..=3 in two variables: 2 + 3 + 4
        assert_eq!(multi_indices(2, 3).len(), 9);
    }
}
