//! Leave-one-out kernel density and score estimation.
//!
//! Every leave-one-out sum is accumulated in fixed tiles of the index range:
//! a compensated sum within each tile, then a compensated sum over tiles in
//! index order. The pairwise engine and the per-index functions share this
//! order, so they agree bitwise and the result does not depend on how tile
//! pairs are scheduled across threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelFunction;
use crate::model::{IntervalSample, KernelSpec};
use crate::numeric::NeumaierSum;

/// Tile length used for the accumulation order. Depends on `n` only.
pub fn tile_size(n: usize) -> usize {
    64.max(n.div_ceil(128))
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidBandwidth(h));
    }
    Ok(())
}

#[inline]
fn density_scale(n: usize, ell: usize, h: f64) -> f64 {
    (n - 1) as f64 * h.powi(ell as i32)
}

#[inline]
fn gradient_scale(n: usize, ell: usize, h: f64) -> f64 {
    (n - 1) as f64 * h.powi(ell as i32 + 1)
}

fn check_args(sample: &IntervalSample, k: &KernelFunction, h: f64, i: usize, z: &[f64]) -> Result<()> {
    check_bandwidth(h)?;
    if i >= sample.n() {
        return Err(Error::IndexOutOfRange { index: i, n: sample.n() });
    }
    if z.len() != sample.ell() {
        return Err(Error::LengthMismatch { expected: sample.ell(), got: z.len() });
    }
    if k.ell() != sample.ell() {
        return Err(Error::LengthMismatch { expected: sample.ell(), got: k.ell() });
    }
    Ok(())
}

/// Tiled sums of `K((z - Z_j)/h)` and `grad K((z - Z_j)/h)` over `j != skip`.
fn tiled_row_sums(sample: &IntervalSample, k: &KernelFunction, h: f64, skip: usize, z: &[f64]) -> (f64, Vec<f64>) {
    let n = sample.n();
    let ell = sample.ell();
    let t = tile_size(n);
    let mut outer_f = NeumaierSum::new();
    let mut outer_g = vec![NeumaierSum::new(); ell];
    let mut u = vec![0.0; ell];
    let mut g = vec![0.0; ell];
    let mut start = 0;
    while start < n {
        let end = (start + t).min(n);
        let mut acc_f = NeumaierSum::new();
        let mut acc_g = vec![NeumaierSum::new(); ell];
        for j in start..end {
            if j == skip {
                continue;
            }
            let zj = sample.z(j);
            for d in 0..ell {
                u[d] = (z[d] - zj[d]) / h;
            }
            acc_f.add(k.value_and_gradient(&u, &mut g));
            for d in 0..ell {
                acc_g[d].add(g[d]);
            }
        }
        outer_f.add(acc_f.value());
        for d in 0..ell {
            outer_g[d].add(acc_g[d].value());
        }
        start = end;
    }
    (outer_f.value(), outer_g.iter().map(|a| a.value()).collect())
}

/// `f_{i,h}(z) = 1/((n-1) h^ell) sum_{j != i} K((z - Z_j)/h)`.
pub fn loo_density(sample: &IntervalSample, k: &KernelFunction, h: f64, i: usize, z: &[f64]) -> Result<f64> {
    check_args(sample, k, h, i, z)?;
    let (s, _) = tiled_row_sums(sample, k, h, i, z);
    Ok(s / density_scale(sample.n(), sample.ell(), h))
}

/// `l_{i,h}(z) = -2 grad_z f_{i,h}(z)`.
pub fn loo_score(sample: &IntervalSample, k: &KernelFunction, h: f64, i: usize, z: &[f64]) -> Result<Vec<f64>> {
    check_args(sample, k, h, i, z)?;
    let (_, g) = tiled_row_sums(sample, k, h, i, z);
    let scale = gradient_scale(sample.n(), sample.ell(), h);
    Ok(g.into_iter().map(|v| -2.0 * (v / scale)).collect())
}

/// Leave-one-out density, density gradient and score at every sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    ell: usize,
    bandwidth: f64,
    fhat: Vec<f64>,
    grad_fhat: Vec<f64>,
    lhat: Vec<f64>,
}

impl ScoreTable {
    pub fn n(&self) -> usize {
        self.fhat.len()
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn fhat(&self, i: usize) -> f64 {
        self.fhat[i]
    }

    pub fn grad_fhat(&self, i: usize) -> &[f64] {
        &self.grad_fhat[i * self.ell..(i + 1) * self.ell]
    }

    /// `l_{i,h}(Z_i)`.
    #[inline]
    pub fn lhat(&self, i: usize) -> &[f64] {
        &self.lhat[i * self.ell..(i + 1) * self.ell]
    }

    pub fn fhat_all(&self) -> &[f64] {
        &self.fhat
    }
}

struct TileResult {
    /// Partial sums `(K, grad K...)` for rows of the first tile against the second.
    rows_a: Vec<f64>,
    /// Partial sums for rows of the second tile against the first (off-diagonal only).
    rows_b: Vec<f64>,
}

fn tile_pair(sample: &IntervalSample, k: &KernelFunction, h: f64, a: (usize, usize), b: (usize, usize)) -> TileResult {
    let ell = sample.ell();
    let w = ell + 1;
    let (a0, a1) = a;
    let (b0, b1) = b;
    let na = a1 - a0;
    let nb = b1 - b0;
    let diagonal = a0 == b0;
    // Pair values: K and grad K at u = (Z_r - Z_c)/h for r in a, c in b.
    let mut vals = vec![0.0; na * nb * w];
    let mut u = vec![0.0; ell];
    let mut g = vec![0.0; ell];
    for r in 0..na {
        let zr = sample.z(a0 + r);
        let c_start = if diagonal { r + 1 } else { 0 };
        for c in c_start..nb {
            let zc = sample.z(b0 + c);
            for d in 0..ell {
                u[d] = (zr[d] - zc[d]) / h;
            }
            let kv = k.value_and_gradient(&u, &mut g);
            let off = (r * nb + c) * w;
            vals[off] = kv;
            vals[off + 1..off + w].copy_from_slice(&g);
            if diagonal {
                let off2 = (c * nb + r) * w;
                vals[off2] = kv;
                for d in 0..ell {
                    vals[off2 + 1 + d] = -g[d];
                }
            }
        }
    }
    let mut rows_a = vec![0.0; na * w];
    for r in 0..na {
        let mut acc = vec![NeumaierSum::new(); w];
        for c in 0..nb {
            if diagonal && c == r {
                continue;
            }
            let off = (r * nb + c) * w;
            for (q, a) in acc.iter_mut().enumerate() {
                a.add(vals[off + q]);
            }
        }
        for q in 0..w {
            rows_a[r * w + q] = acc[q].value();
        }
    }
    let mut rows_b = Vec::new();
    if !diagonal {
        rows_b = vec![0.0; nb * w];
        for c in 0..nb {
            let mut acc = vec![NeumaierSum::new(); w];
            for r in 0..na {
                let off = (r * nb + c) * w;
                acc[0].add(vals[off]);
                for d in 0..ell {
                    acc[1 + d].add(-vals[off + 1 + d]);
                }
            }
            for q in 0..w {
                rows_b[c * w + q] = acc[q].value();
            }
        }
    }
    TileResult { rows_a, rows_b }
}

/// Builds the leave-one-out table at bandwidth `h`, evaluating the kernel
/// and its gradient once per unordered pair.
pub fn build_score_table(sample: &IntervalSample, k: &KernelFunction, h: f64) -> Result<ScoreTable> {
    check_bandwidth(h)?;
    let n = sample.n();
    let ell = sample.ell();
    if k.ell() != ell {
        return Err(Error::LengthMismatch { expected: ell, got: k.ell() });
    }
    let w = ell + 1;
    let t = tile_size(n);
    let n_tiles = n.div_ceil(t);
    let bounds = |b: usize| (b * t, ((b + 1) * t).min(n));
    let pairs: Vec<(usize, usize)> = (0..n_tiles).flat_map(|a| (a..n_tiles).map(move |b| (a, b))).collect();
    let results: Vec<TileResult> = pairs
        .par_iter()
        .map(|&(a, b)| tile_pair(sample, k, h, bounds(a), bounds(b)))
        .collect();

    // partial[(row * n_tiles + tile) * w + q]
    let mut partial = vec![0.0; n * n_tiles * w];
    for (&(a, b), res) in pairs.iter().zip(&results) {
        let (a0, a1) = bounds(a);
        for r in 0..a1 - a0 {
            let dst = ((a0 + r) * n_tiles + b) * w;
            partial[dst..dst + w].copy_from_slice(&res.rows_a[r * w..(r + 1) * w]);
        }
        if a != b {
            let (b0, b1) = bounds(b);
            for c in 0..b1 - b0 {
                let dst = ((b0 + c) * n_tiles + a) * w;
                partial[dst..dst + w].copy_from_slice(&res.rows_b[c * w..(c + 1) * w]);
            }
        }
    }

    let fscale = density_scale(n, ell, h);
    let gscale = gradient_scale(n, ell, h);
    let mut fhat = vec![0.0; n];
    let mut grad_fhat = vec![0.0; n * ell];
    let mut lhat = vec![0.0; n * ell];
    for i in 0..n {
        let mut acc = vec![NeumaierSum::new(); w];
        for tile in 0..n_tiles {
            let src = (i * n_tiles + tile) * w;
            for q in 0..w {
                acc[q].add(partial[src + q]);
            }
        }
        fhat[i] = acc[0].value() / fscale;
        for d in 0..ell {
            let g = acc[1 + d].value() / gscale;
            grad_fhat[i * ell + d] = g;
            lhat[i * ell + d] = -2.0 * g;
        }
    }
    Ok(ScoreTable {
        ell,
        bandwidth: h,
        fhat,
        grad_fhat,
        lhat,
    })
}

/// Finite-sample heuristics for the bandwidth rate conditions. Each returned
/// string names one condition that looks violated at this `n`.
pub fn rate_condition_flags(n: usize, ell: usize, spec: &KernelSpec) -> Vec<String> {
    let nf = n as f64;
    let h = spec.bandwidth_h;
    let ht = spec.bandwidth_htilde;
    let j = spec.order as i32;
    let mut flags = Vec::new();
    let var_term = nf * h.powi(ell as i32 + 2);
    if var_term < 10.0 {
        flags.push(format!("n*h^(ell+2) = {var_term:.4} < 10: h may be too small"));
    }
    let bias_term = nf * h.powi(2 * j);
    if bias_term > 10.0 {
        flags.push(format!("n*h^(2J) = {bias_term:.4} > 10: smoothing bias may not be negligible"));
    }
    let cls_term = nf * ht.powi(4 * (ell as i32 + 1));
    if cls_term < 10.0 {
        flags.push(format!("n*htilde^(4(ell+1)) = {cls_term:.4} < 10: htilde may be too small"));
    }
    flags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_kernel;
    use crate::model::{validate_sample, KernelFamily, RawRow};

    fn phi(t: f64) -> f64 {
        (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    fn sample_1d(z: &[f64]) -> IntervalSample {
        let rows: Vec<RawRow> = z.iter().map(|&v| RawRow::new(0.0, 1.0, vec![v])).collect();
        validate_sample(&rows).unwrap()
    }

    #[test]
    fn two_point_density_and_score() {
        let s = sample_1d(&[0.0, 1.0]);
        let k = build_kernel(KernelFamily::Gaussian, 1, 2).unwrap();
        let f = loo_density(&s, &k, 1.0, 0, &[0.0]).unwrap();
        assert!((f - phi(-1.0)).abs() < 1e-15);
        // d/dz phi(z - 1) at z = 0 is phi(-1); score = -2 phi(-1)
        let l = loo_score(&s, &k, 1.0, 0, &[0.0]).unwrap();
        assert!((l[0] + 2.0 * phi(-1.0)).abs() < 1e-15);
        // finite-difference oracle on the density
        let step = 1e-5;
        let fd = (loo_density(&s, &k, 1.0, 0, &[step]).unwrap() - loo_density(&s, &k, 1.0, 0, &[-step]).unwrap())
            / (2.0 * step);
        assert!((l[0] + 2.0 * fd).abs() < 1e-9);
    }

    #[test]
    fn identical_points() {
        let s = sample_1d(&[0.3, 0.3, 0.3]);
        let k = build_kernel(KernelFamily::Gaussian, 1, 2).unwrap();
        let f = loo_density(&s, &k, 1.0, 1, &[0.3]).unwrap();
        assert!((f - k.eval(&[0.0]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_configuration_has_zero_score() {
        let s = sample_1d(&[-0.7, 0.0, 0.7]);
        let k = build_kernel(KernelFamily::Gaussian, 1, 2).unwrap();
        let l = loo_score(&s, &k, 0.5, 1, &[0.0]).unwrap();
        assert_eq!(l, vec![0.0]);
    }

    #[test]
    fn errors() {
        let s = sample_1d(&[0.0, 1.0]);
        let k = build_kernel(KernelFamily::Gaussian, 1, 2).unwrap();
        assert!(matches!(loo_density(&s, &k, 1.0, 2, &[0.0]), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(loo_density(&s, &k, 0.0, 0, &[0.0]), Err(Error::InvalidBandwidth(_))));
        assert!(build_score_table(&s, &k, -1.0).is_err());
    }

    #[test]
    fn two_row_table_uses_other_row_only() {
        let s = sample_1d(&[0.0, 2.0]);
        let k = build_kernel(KernelFamily::Gaussian, 1, 2).unwrap();
        let t = build_score_table(&s, &k, 1.0).unwrap();
        assert_eq!(t.fhat(0), k.eval(&[-2.0]).unwrap());
        assert_eq!(t.fhat(1), k.eval(&[2.0]).unwrap());
        assert_eq!(t.lhat(0)[0], -t.lhat(1)[0]);
    }

    #[test]
    fn rate_flags() {
        let spec = KernelSpec::new(KernelFamily::Gaussian, 2, 0.05, 0.05).unwrap();
        let flags = rate_condition_flags(100, 2, &spec);
        assert!(flags.iter().any(|f| f.contains("ell+2")));
        assert!(flags.iter().any(|f| f.contains("htilde")));
        let spec = KernelSpec::new(KernelFamily::Gaussian, 2, 0.6, 0.6).unwrap();
        let flags = rate_condition_flags(1000, 2, &spec);
        assert!(flags.iter().any(|f| f.contains("2J")));
        assert!(!flags.iter().any(|f| f.contains("ell+2")));
    }
}
