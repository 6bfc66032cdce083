//! Core domain types: validated interval samples, direction grids on the unit
//! sphere, support-function values and hull-repaired convex sets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::kernel::required_order;
use crate::numeric::{dot, norm};

/// One unvalidated observation `(y_lower, y_upper, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub y_lower: f64,
    pub y_upper: f64,
    pub z: Vec<f64>,
}

impl RawRow {
    pub fn new(y_lower: f64, y_upper: f64, z: Vec<f64>) -> Self {
        Self { y_lower, y_upper, z }
    }
}

/// A validated sample of interval-censored outcomes with `ell` continuous
/// covariates. Covariates are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSample {
    y_lower: Vec<f64>,
    y_upper: Vec<f64>,
    z: Vec<f64>,
    ell: usize,
}

impl IntervalSample {
    pub fn n(&self) -> usize {
        self.y_lower.len()
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    #[inline]
    pub fn z(&self, i: usize) -> &[f64] {
        &self.z[i * self.ell..(i + 1) * self.ell]
    }

    pub fn z_flat(&self) -> &[f64] {
        &self.z
    }

    #[inline]
    pub fn y_lower(&self, i: usize) -> f64 {
        self.y_lower[i]
    }

    #[inline]
    pub fn y_upper(&self, i: usize) -> f64 {
        self.y_upper[i]
    }

    pub fn y_lower_all(&self) -> &[f64] {
        &self.y_lower
    }

    pub fn y_upper_all(&self) -> &[f64] {
        &self.y_upper
    }

    pub fn rows(&self) -> Vec<RawRow> {
        (0..self.n())
            .map(|i| RawRow::new(self.y_lower[i], self.y_upper[i], self.z(i).to_vec()))
            .collect()
    }

    /// True when every interval is degenerate (`y_lower == y_upper`).
    pub fn is_point_identified(&self) -> bool {
        self.y_lower.iter().zip(&self.y_upper).all(|(l, u)| l == u)
    }
}

/// Validates raw rows into an [`IntervalSample`]. The covariate dimension is
/// taken from the first row.
pub fn validate_sample(rows: &[RawRow]) -> Result<IntervalSample> {
    if rows.len() < 2 {
        return Err(Error::TooFewRows);
    }
    let ell = rows[0].z.len();
    if ell == 0 {
        return Err(Error::DimensionMismatch(0));
    }
    let mut y_lower = Vec::with_capacity(rows.len());
    let mut y_upper = Vec::with_capacity(rows.len());
    let mut z = Vec::with_capacity(rows.len() * ell);
    for (i, row) in rows.iter().enumerate() {
        if row.z.len() != ell {
            return Err(Error::DimensionMismatch(i));
        }
        if !row.y_lower.is_finite() || !row.y_upper.is_finite() || row.z.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite(i));
        }
        if row.y_lower > row.y_upper {
            return Err(Error::RowIntervalViolation(i));
        }
        y_lower.push(row.y_lower);
        y_upper.push(row.y_upper);
        z.extend_from_slice(&row.z);
    }
    Ok(IntervalSample {
        y_lower,
        y_upper,
        z,
        ell,
    })
}

const DUPLICATE_DOT: f64 = 1.0 - 1e-12;

/// A finite set of unit directions in `R^ell` containing every signed axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    ell: usize,
    directions: Vec<f64>,
    includes_axes: bool,
}

impl DirectionGrid {
    /// Builds a grid from user-supplied directions. Each vector must have unit
    /// norm within `1e-12`; duplicates are rejected.
    pub fn from_directions(ell: usize, dirs: &[Vec<f64>]) -> Result<Self> {
        if ell == 0 {
            return Err(Error::UnsupportedDimension(0));
        }
        let mut flat: Vec<f64> = Vec::with_capacity(dirs.len() * ell);
        for d in dirs {
            if d.len() != ell {
                return Err(Error::LengthMismatch { expected: ell, got: d.len() });
            }
            let nrm = norm(d);
            if (nrm - 1.0).abs() > 1e-12 {
                return Err(Error::NonUnitDirection(nrm));
            }
            let dup = flat.chunks(ell).any(|e| dot(e, d) > DUPLICATE_DOT);
            if dup {
                return Err(Error::InvalidConfig("duplicate direction in grid".into()));
            }
            flat.extend_from_slice(d);
        }
        let mut grid = Self {
            ell,
            directions: flat,
            includes_axes: false,
        };
        grid.includes_axes = (0..ell).all(|j| grid.axis_index(j, true).is_some() && grid.axis_index(j, false).is_some());
        Ok(grid)
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn len(&self) -> usize {
        self.directions.len() / self.ell
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn includes_axes(&self) -> bool {
        self.includes_axes
    }

    #[inline]
    pub fn direction(&self, k: usize) -> &[f64] {
        &self.directions[k * self.ell..(k + 1) * self.ell]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.directions.chunks(self.ell)
    }

    pub fn index_of(&self, v: &[f64]) -> Option<usize> {
        self.iter().position(|d| dot(d, v) > DUPLICATE_DOT)
    }

    /// Index of `+iota_j` (`positive`) or `-iota_j`.
    pub fn axis_index(&self, j: usize, positive: bool) -> Option<usize> {
        let mut axis = vec![0.0; self.ell];
        axis[j] = if positive { 1.0 } else { -1.0 };
        self.index_of(&axis)
    }

    pub fn antipode_index(&self, k: usize) -> Option<usize> {
        let neg: Vec<f64> = self.direction(k).iter().map(|v| -v).collect();
        self.index_of(&neg)
    }

    /// Polar angle in `[0, 2pi)` of direction `k` (planar grids only).
    pub fn angle(&self, k: usize) -> Option<f64> {
        if self.ell != 2 {
            return None;
        }
        let d = self.direction(k);
        let a = d[1].atan2(d[0]);
        Some(if a < 0.0 { a + 2.0 * PI } else { a })
    }
}

/// Builds the default grid: `{+1, -1}` for `ell = 1`, `M` equally spaced
/// angles plus the four axes for `ell = 2`, and a Fibonacci lattice of `M`
/// points plus the six axes for `ell = 3`.
pub fn make_direction_grid(ell: usize, m: usize) -> Result<DirectionGrid> {
    if ell == 0 || ell > 3 {
        return Err(Error::UnsupportedDimension(ell));
    }
    if m < 2 * ell {
        return Err(Error::GridTooSmall { ell, m });
    }
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for j in 0..ell {
        for s in [1.0, -1.0] {
            let mut a = vec![0.0; ell];
            a[j] = s;
            dirs.push(a);
        }
    }
    let push_unique = |dirs: &mut Vec<Vec<f64>>, v: Vec<f64>| {
        if !dirs.iter().any(|d| dot(d, &v) > DUPLICATE_DOT) {
            dirs.push(v);
        }
    };
    match ell {
        1 => {}
        2 => {
            for k in 0..m {
                let t = 2.0 * PI * k as f64 / m as f64;
                push_unique(&mut dirs, vec![t.cos(), t.sin()]);
            }
            let angle = |d: &Vec<f64>| {
                let a = d[1].atan2(d[0]);
                if a < 0.0 {
                    a + 2.0 * PI
                } else {
                    a
                }
            };
            dirs.sort_by(|a, b| angle(a).partial_cmp(&angle(b)).unwrap());
        }
        _ => {
            let golden = PI * (3.0 - 5f64.sqrt());
            for k in 0..m {
                let y = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                let r = (1.0 - y * y).sqrt();
                let t = golden * k as f64;
                let v = vec![r * t.cos(), y, r * t.sin()];
                let nrm = norm(&v);
                push_unique(&mut dirs, v.iter().map(|x| x / nrm).collect());
            }
        }
    }
    DirectionGrid::from_directions(ell, &dirs)
}

/// Values of a (candidate) support function on a direction grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportFunctionValues {
    pub grid: DirectionGrid,
    pub values: Vec<f64>,
}

impl SupportFunctionValues {
    pub fn new(grid: DirectionGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { grid, values })
    }

    /// `values[p] + values[-p]` for every direction with an antipode.
    pub fn widths(&self) -> Vec<f64> {
        (0..self.grid.len())
            .filter_map(|k| self.grid.antipode_index(k).map(|a| self.values[k] + self.values[a]))
            .collect()
    }

    /// `(-values[-iota_j], values[iota_j])`.
    pub fn coordinate_bounds(&self, j: usize) -> Option<(f64, f64)> {
        let up = self.grid.axis_index(j, true)?;
        let lo = self.grid.axis_index(j, false)?;
        Some((-self.values[lo], self.values[up]))
    }
}

/// A convex set represented by its support function on a grid together with
/// the touching point for every grid direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSetRepr {
    pub support: SupportFunctionValues,
    pub extreme_points: Vec<Vec<f64>>,
    /// Boundary vertices in counter-clockwise order for `ell = 2`, `[min, max]`
    /// for `ell = 1`, distinct touching points otherwise.
    pub vertices: Vec<Vec<f64>>,
}

impl ConvexSetRepr {
    /// Convex hull of `points`: support values are `max_v <p, v>` over the
    /// points, which is the exact support function of their hull.
    pub fn hull_of(grid: &DirectionGrid, points: &[Vec<f64>]) -> Result<Self> {
        let ell = grid.ell();
        if points.is_empty() {
            return Err(Error::InvalidConfig("hull of an empty point set".into()));
        }
        if let Some(p) = points.iter().find(|p| p.len() != ell) {
            return Err(Error::LengthMismatch { expected: ell, got: p.len() });
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut extreme_points = Vec::with_capacity(grid.len());
        for d in grid.iter() {
            let (best, val) = points
                .iter()
                .enumerate()
                .map(|(i, q)| (i, dot(d, q)))
                .fold((0usize, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            values.push(val);
            extreme_points.push(points[best].clone());
        }
        let vertices = match ell {
            1 => {
                let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
                if lo == hi {
                    vec![vec![lo]]
                } else {
                    vec![vec![lo], vec![hi]]
                }
            }
            2 => {
                let pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
                geometry::monotone_chain(&pts).into_iter().map(|p| p.to_vec()).collect()
            }
            _ => {
                let mut v: Vec<Vec<f64>> = Vec::new();
                for p in &extreme_points {
                    if !v.contains(p) {
                        v.push(p.clone());
                    }
                }
                v
            }
        };
        Ok(Self {
            support: SupportFunctionValues::new(grid.clone(), values)?,
            extreme_points,
            vertices,
        })
    }

    /// Minkowski sum with a closed ball of radius `eps >= 0`.
    pub fn expanded(&self, eps: f64) -> Self {
        let grid = &self.support.grid;
        let values = self.support.values.iter().map(|v| v + eps).collect();
        let extreme_points = self
            .extreme_points
            .iter()
            .enumerate()
            .map(|(k, x)| x.iter().zip(grid.direction(k)).map(|(a, p)| a + eps * p).collect())
            .collect::<Vec<Vec<f64>>>();
        Self {
            support: SupportFunctionValues {
                grid: grid.clone(),
                values,
            },
            vertices: extreme_points.clone(),
            extreme_points,
        }
    }

    pub fn coordinate_bounds(&self) -> Vec<(f64, f64)> {
        (0..self.support.grid.ell())
            .map(|j| self.support.coordinate_bounds(j).unwrap_or((f64::NAN, f64::NAN)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    HigherOrderGaussian,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::HigherOrderGaussian => "higher_order_gaussian",
        }
    }
}

/// Kernel family, order and the two bandwidths (`h` for the outer score,
/// `htilde` for outcome classification).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub order: usize,
    pub bandwidth_h: f64,
    pub bandwidth_htilde: f64,
}

impl KernelSpec {
    /// Picks the order from the family: 2 for the Gaussian kernel and
    /// [`required_order`] for the higher-order family.
    pub fn new(family: KernelFamily, ell: usize, h: f64, htilde: f64) -> Result<Self> {
        let order = match family {
            KernelFamily::Gaussian => 2,
            KernelFamily::HigherOrderGaussian => required_order(ell),
        };
        let spec = Self {
            family,
            order,
            bandwidth_h: h,
            bandwidth_htilde: htilde,
        };
        spec.validate(ell)?;
        Ok(spec)
    }

    pub fn validate(&self, ell: usize) -> Result<()> {
        for b in [self.bandwidth_h, self.bandwidth_htilde] {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidBandwidth(b));
            }
        }
        if self.order < 2 {
            return Err(Error::InvalidKernel(format!("order {} < 2", self.order)));
        }
        match self.family {
            KernelFamily::Gaussian if self.order != 2 => {
                Err(Error::InvalidKernel("the Gaussian kernel has order 2".into()))
            }
            KernelFamily::HigherOrderGaussian if self.order != required_order(ell) => Err(Error::InvalidKernel(
                format!("higher-order kernel for ell = {ell} must have order {}", required_order(ell)),
            )),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows2() -> Vec<RawRow> {
        vec![RawRow::new(0.0, 0.0, vec![1.0]), RawRow::new(-1.0, 2.0, vec![0.5])]
    }

    #[test]
    fn degenerate_interval_is_valid() {
        let s = validate_sample(&rows2()).unwrap();
        assert_eq!(s.n(), 2);
        assert_eq!(s.ell(), 1);
        assert_eq!(s.z(1), &[0.5]);
    }

    #[test]
    fn interval_violation_names_row() {
        let mut rows = rows2();
        rows.push(RawRow::new(1.0, 0.5, vec![0.0]));
        assert_eq!(validate_sample(&rows), Err(Error::RowIntervalViolation(2)));
    }

    #[test]
    fn dimension_mismatch_and_too_few() {
        let rows = vec![RawRow::new(0.0, 1.0, vec![1.0, 2.0]), RawRow::new(0.0, 1.0, vec![1.0, 2.0, 3.0])];
        assert_eq!(validate_sample(&rows), Err(Error::DimensionMismatch(1)));
        assert_eq!(validate_sample(&rows[..1]), Err(Error::TooFewRows));
    }

    #[test]
    fn validation_is_idempotent() {
        let s = validate_sample(&rows2()).unwrap();
        assert_eq!(validate_sample(&s.rows()).unwrap(), s);
    }

    #[test]
    fn grid_ell1_is_two_points() {
        let g = make_direction_grid(1, 2).unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.index_of(&[1.0]).is_some() && g.index_of(&[-1.0]).is_some());
    }

    #[test]
    fn grid_ell2_m8_has_axes() {
        let g = make_direction_grid(2, 8).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.includes_axes());
        for axis in [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]] {
            assert!(g.index_of(&axis).is_some());
        }
    }

    #[test]
    fn grid_ell2_m6_merges_axes() {
        // angles 0, 60, ..., 300 degrees; 0 and 180 coincide with axes, 90 and 270 are added
        let g = make_direction_grid(2, 6).unwrap();
        assert_eq!(g.len(), 8);
    }

    #[test]
    fn grids_are_unit_and_distinct() {
        for (ell, m) in [(1, 2), (2, 6), (2, 128), (3, 50)] {
            let g = make_direction_grid(ell, m).unwrap();
            assert!(g.includes_axes());
            for (a, d) in g.iter().enumerate() {
                assert!((norm(d) - 1.0).abs() < 1e-12);
                for e in g.iter().skip(a + 1) {
                    assert!(dot(d, e) < 1.0 - 1e-12);
                }
            }
        }
        assert_eq!(make_direction_grid(4, 100), Err(Error::UnsupportedDimension(4)));
    }

    #[test]
    fn hull_of_square_reads_bounds() {
        let g = make_direction_grid(2, 16).unwrap();
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 2.0], vec![0.0, 2.0], vec![0.5, 1.0]];
        let h = ConvexSetRepr::hull_of(&g, &pts).unwrap();
        assert_eq!(h.coordinate_bounds(), vec![(0.0, 1.0), (0.0, 2.0)]);
        assert_eq!(h.vertices.len(), 4);
        for (k, d) in g.iter().enumerate() {
            assert_eq!(dot(d, &h.extreme_points[k]), h.support.values[k]);
        }
    }

    #[test]
    fn kernel_spec_orders() {
        let g = KernelSpec::new(KernelFamily::Gaussian, 2, 0.5, 0.5).unwrap();
        assert_eq!(g.order, 2);
        let h = KernelSpec::new(KernelFamily::HigherOrderGaussian, 2, 0.5, 0.5).unwrap();
        assert_eq!(h.order, 3);
        assert!(KernelSpec::new(KernelFamily::Gaussian, 2, 0.0, 0.5).is_err());
        let bad = KernelSpec { order: 4, ..h };
        assert!(bad.validate(2).is_err());
    }
}
