//! Axis-aligned `(x, y, θ)` grids, scalar fields and boolean masks.
//!
//! Cells are laid out row-major in `(x, y, θ)`, so the heading axis is the
//! fastest-varying one and heading stencils are contiguous in memory.
//! The heading axis is periodic over `[-π, π)`; the spatial axes are not.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the `(x, y, θ)` state space (meters, meters, radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl State {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = (theta + PI).rem_euclid(two_pi) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= PI {
        w -= two_pi;
    }
    w
}

/// One grid axis.
///
/// A periodic axis has `count` cells of width `(hi - lo) / count`, and the
/// coordinate `hi` aliases `lo`. A non-periodic axis places its first and
/// last cell centers on `lo` and `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub periodic: bool,
}

impl AxisSpec {
    pub fn new(lo: f64, hi: f64, count: usize, periodic: bool) -> Result<Self> {
        let axis = Self { lo, hi, count, periodic };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo >= self.hi {
            return Err(Error::Config(format!(
                "axis bounds must satisfy lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.count < 3 {
            return Err(Error::Config(format!(
                "axis needs at least 3 cells, got {}",
                self.count
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.hi - self.lo) / self.count as f64
        } else {
            (self.hi - self.lo) / (self.count - 1) as f64
        }
    }

    /// Coordinate of cell center `i`.
    pub fn coord(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.spacing()
    }

    /// Index of the cell whose center is nearest to `v`. Spatial coordinates
    /// are clamped into the axis range; periodic ones wrap.
    pub fn nearest(&self, v: f64) -> usize {
        let h = self.spacing();
        if self.periodic {
            let span = self.hi - self.lo;
            let t = (v - self.lo).rem_euclid(span) / h;
            (t.round() as usize) % self.count
        } else {
            let t = ((v - self.lo) / h).round();
            t.clamp(0.0, (self.count - 1) as f64) as usize
        }
    }
}

/// A 3-D grid over `(x, y, θ)`; the θ axis always spans `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub axes: [AxisSpec; 3],
}

impl Grid3 {
    pub fn new(x: AxisSpec, y: AxisSpec, theta_count: usize) -> Result<Self> {
        if x.periodic || y.periodic {
            return Err(Error::Config("spatial axes must not be periodic".into()));
        }
        let theta = AxisSpec::new(-PI, PI, theta_count, true)?;
        x.validate()?;
        y.validate()?;
        Ok(Self { axes: [x, y, theta] })
    }

    /// Square domain `[-half_width, half_width]²` with the given cell counts.
    pub fn square(half_width: f64, nx: usize, ny: usize, ntheta: usize) -> Result<Self> {
        Self::new(
            AxisSpec::new(-half_width, half_width, nx, false)?,
            AxisSpec::new(-half_width, half_width, ny, false)?,
            ntheta,
        )
    }

    /// Checks the invariants of a grid built field-by-field (e.g. deserialized).
    pub fn validate(&self) -> Result<()> {
        for axis in &self.axes {
            axis.validate()?;
        }
        let t = &self.axes[2];
        if self.axes[0].periodic || self.axes[1].periodic {
            return Err(Error::Config("spatial axes must not be periodic".into()));
        }
        if !t.periodic || t.lo != -PI || t.hi != PI {
            return Err(Error::Config("heading axis must be periodic over [-pi, pi)".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.axes[0].count, self.axes[1].count, self.axes[2].count]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 3] {
        [self.axes[0].spacing(), self.axes[1].spacing(), self.axes[2].spacing()]
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        let [_, ny, nt] = self.shape();
        (i * ny + j) * nt + k
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> (usize, usize, usize) {
        let [_, ny, nt] = self.shape();
        (idx / (ny * nt), (idx / nt) % ny, idx % nt)
    }

    pub fn check_index(&self, i: usize, j: usize, k: usize) -> Result<()> {
        let [nx, ny, nt] = self.shape();
        if i >= nx || j >= ny || k >= nt {
            return Err(Error::Index { index: [i, j, k], shape: [nx, ny, nt] });
        }
        Ok(())
    }

    /// Cell-center coordinates of `(i, j, k)`.
    pub fn index_to_state(&self, i: usize, j: usize, k: usize) -> Result<State> {
        self.check_index(i, j, k)?;
        Ok(self.center(self.flat(i, j, k)))
    }

    /// Cell-center coordinates of a flat index (no bounds check beyond debug).
    pub fn center(&self, idx: usize) -> State {
        debug_assert!(idx < self.len());
        let (i, j, k) = self.unflat(idx);
        State::new(self.axes[0].coord(i), self.axes[1].coord(j), self.axes[2].coord(k))
    }

    /// Flat index of the nearest cell, clamping `(x, y)` into the domain.
    pub fn nearest(&self, s: &State) -> usize {
        self.flat(self.axes[0].nearest(s.x), self.axes[1].nearest(s.y), self.axes[2].nearest(s.theta))
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        let [ax, ay, _] = &self.axes;
        x >= ax.lo && x <= ax.hi && y >= ay.lo && y <= ay.hi
    }

    /// Clamps `(x, y)` into the domain and wraps θ.
    pub fn clamp(&self, s: &State) -> State {
        let [ax, ay, _] = &self.axes;
        State::new(s.x.clamp(ax.lo, ax.hi), s.y.clamp(ay.lo, ay.hi), wrap_angle(s.theta))
    }

    pub fn ensure_same(&self, other: &Grid3) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!(
                "grid mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// Real values on every cell of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid3,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Numeric(format!("NaN at cell {pos}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid3, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    /// Evaluates `f` at every cell center.
    pub fn from_fn(grid: Grid3, mut f: impl FnMut(State) -> f64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.center(idx))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.flat(i, j, k)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Trilinear interpolation; the heading axis wraps across the seam.
    pub fn interpolate(&self, s: &State) -> Result<f64> {
        let [ax, ay, at] = &self.grid.axes;
        if !self.grid.contains_xy(s.x, s.y) {
            return Err(Error::OutOfDomain { x: s.x, y: s.y });
        }
        let (i0, fx) = bracket(ax, s.x);
        let (j0, fy) = bracket(ay, s.y);
        let tt = snap((wrap_angle(s.theta) - at.lo) / at.spacing());
        let k0 = (tt.floor() as usize) % at.count;
        let fz = (tt - tt.floor()).clamp(0.0, 1.0);
        let k1 = (k0 + 1) % at.count;
        let i1 = (i0 + 1).min(ax.count - 1);
        let j1 = (j0 + 1).min(ay.count - 1);

        let g = |i, j, k| self.get(i, j, k);
        let c00 = g(i0, j0, k0) * (1.0 - fz) + g(i0, j0, k1) * fz;
        let c01 = g(i0, j1, k0) * (1.0 - fz) + g(i0, j1, k1) * fz;
        let c10 = g(i1, j0, k0) * (1.0 - fz) + g(i1, j0, k1) * fz;
        let c11 = g(i1, j1, k0) * (1.0 - fz) + g(i1, j1, k1) * fz;
        let c0 = c00 * (1.0 - fy) + c01 * fy;
        let c1 = c10 * (1.0 - fy) + c11 * fy;
        Ok(c0 * (1.0 - fx) + c1 * fx)
    }

    /// Measure of `{value < threshold}` under the trilinear interpolant,
    /// estimated with `samples³` midpoint samples per cell. Cell boxes are
    /// clipped to the spatial domain.
    pub fn sublevel_volume(&self, threshold: f64, samples: usize) -> Result<f64> {
        if samples == 0 {
            return Err(Error::Config("need at least one sample per axis".into()));
        }
        let h = self.grid.spacing();
        let n = samples as f64;
        let offset = |i: usize| (i as f64 + 0.5) / n - 0.5;
        let mut inside = 0usize;
        for idx in 0..self.grid.len() {
            let c = self.grid.center(idx);
            for a in 0..samples {
                let x = c.x + h[0] * offset(a);
                for b in 0..samples {
                    let y = c.y + h[1] * offset(b);
                    if !self.grid.contains_xy(x, y) {
                        continue;
                    }
                    for e in 0..samples {
                        let q = State::new(x, y, c.theta + h[2] * offset(e));
                        inside += (self.interpolate(&q)? < threshold) as usize;
                    }
                }
            }
        }
        Ok(inside as f64 * h[0] * h[1] * h[2] / (n * n * n))
    }

    /// Central-difference gradient at a cell.
    ///
    /// Non-periodic boundaries fall back to one-sided differences; the
    /// heading axis wraps.
    pub fn gradient_central(&self, i: usize, j: usize, k: usize) -> Result<[f64; 3]> {
        self.grid.check_index(i, j, k)?;
        let idx = self.grid.flat(i, j, k);
        let mut out = [0.0; 3];
        for (axis, slot) in out.iter_mut().enumerate() {
            let (minus, plus) = self.one_sided(idx, axis);
            *slot = 0.5 * (minus + plus);
        }
        Ok(out)
    }

    /// Backward and forward differences `(D⁻, D⁺)` along `axis` at a flat
    /// index. At a spatial boundary the missing side copies the present one.
    #[inline]
    pub(crate) fn one_sided(&self, idx: usize, axis: usize) -> (f64, f64) {
        let spec = &self.grid.axes[axis];
        let h = spec.spacing();
        let (i, j, k) = self.grid.unflat(idx);
        let pos = [i, j, k][axis];
        let stride = match axis {
            0 => self.grid.axes[1].count * self.grid.axes[2].count,
            1 => self.grid.axes[2].count,
            _ => 1,
        };
        let v = self.values[idx];
        let n = spec.count;
        let (prev, next) = if spec.periodic {
            let p = if pos == 0 { idx + (n - 1) * stride } else { idx - stride };
            let q = if pos == n - 1 { idx + 1 - n * stride } else { idx + stride };
            (Some(self.values[p]), Some(self.values[q]))
        } else {
            let p = (pos > 0).then(|| self.values[idx - stride]);
            let q = (pos + 1 < n).then(|| self.values[idx + stride]);
            (p, q)
        };
        match (prev, next) {
            (Some(p), Some(q)) => ((v - p) / h, (q - v) / h),
            (None, Some(q)) => ((q - v) / h, (q - v) / h),
            (Some(p), None) => ((v - p) / h, (v - p) / h),
            (None, None) => (0.0, 0.0),
        }
    }

    /// Cells with value strictly below `threshold`.
    pub fn sublevel_set(&self, threshold: f64) -> BoolMask {
        BoolMask { grid: self.grid, bits: self.values.iter().map(|&v| v < threshold).collect() }
    }

    /// Cells with value strictly above `threshold`.
    pub fn superlevel_set(&self, threshold: f64) -> BoolMask {
        BoolMask { grid: self.grid, bits: self.values.iter().map(|&v| v > threshold).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }
}

fn bracket(axis: &AxisSpec, v: f64) -> (usize, f64) {
    let t = snap((v - axis.lo) / axis.spacing());
    let i0 = (t.floor().max(0.0) as usize).min(axis.count - 2);
    (i0, (t - i0 as f64).clamp(0.0, 1.0))
}

/// Rounds positions within round-off of a node so nodes reproduce stored values.
fn snap(t: f64) -> f64 {
    let r = t.round();
    if (t - r).abs() <= 1e-9 {
        r
    } else {
        t
    }
}

/// Sublevel set of a field; see [`ScalarField::sublevel_set`].
pub fn sublevel_set(field: &ScalarField, threshold: f64) -> BoolMask {
    field.sublevel_set(threshold)
}

/// A boolean flag per grid cell, laid out like [`ScalarField`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoolMask {
    grid: Grid3,
    bits: Vec<bool>,
}

impl BoolMask {
    pub fn new(grid: Grid3, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            return Err(Error::Shape(format!(
                "mask has {} cells, grid has {}",
                bits.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, bits })
    }

    pub fn empty(grid: Grid3) -> Self {
        Self { grid, bits: vec![false; grid.len()] }
    }

    pub fn full(grid: Grid3) -> Self {
        Self { grid, bits: vec![true; grid.len()] }
    }

    pub fn from_fn(grid: Grid3, mut f: impl FnMut(State) -> bool) -> Self {
        let bits = (0..grid.len()).map(|idx| f(grid.center(idx))).collect();
        Self { grid, bits }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        self.bits[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn and(&self, other: &BoolMask) -> Result<Self> {
        self.combine(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BoolMask) -> Result<Self> {
        self.combine(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &BoolMask) -> Result<Self> {
        self.combine(other, |a, b| a && !b)
    }

    pub fn not(&self) -> Self {
        Self { grid: self.grid, bits: self.bits.iter().map(|b| !b).collect() }
    }

    /// True when every set cell of `self` is also set in `other`.
    pub fn is_subset(&self, other: &BoolMask) -> Result<bool> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b))
    }

    fn combine(&self, other: &BoolMask, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, bits })
    }
}

/// Overlap statistics between two masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub iou: f64,
    /// `|a ∩ b| / |a|`, 1 when `a` is empty.
    pub frac_a_in_b: f64,
    /// `|a ∩ b| / |b|`, 1 when `b` is empty.
    pub frac_b_in_a: f64,
}

pub fn set_metrics(a: &BoolMask, b: &BoolMask) -> Result<SetMetrics> {
    a.grid.ensure_same(&b.grid)?;
    let (mut inter, mut union, mut na, mut nb) = (0usize, 0usize, 0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
        na += x as usize;
        nb += y as usize;
    }
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(SetMetrics {
        iou: ratio(inter, union),
        frac_a_in_b: ratio(inter, na),
        frac_b_in_a: ratio(inter, nb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid998() -> Grid3 {
        Grid3::square(4.0, 9, 9, 8).unwrap()
    }

    #[test]
    fn index_to_state_examples() {
        let g = grid998();
        let s = g.index_to_state(4, 4, 0).unwrap();
        assert_eq!((s.x, s.y, s.theta), (0.0, 0.0, -PI));
        let s = g.index_to_state(0, 0, 0).unwrap();
        assert_eq!((s.x, s.y, s.theta), (-4.0, -4.0, -PI));
        let s = g.index_to_state(0, 0, 4).unwrap();
        assert_eq!((s.x, s.y, s.theta), (-4.0, -4.0, 0.0));
        assert!(matches!(g.index_to_state(9, 0, 0), Err(Error::Index { .. })));
        assert!(matches!(g.index_to_state(0, 0, 8), Err(Error::Index { .. })));
    }

    #[test]
    fn axis_validation() {
        assert!(AxisSpec::new(1.0, 1.0, 5, false).is_err());
        assert!(AxisSpec::new(0.0, 1.0, 2, false).is_err());
        assert!(Grid3::new(
            AxisSpec::new(0.0, 1.0, 5, true).unwrap(),
            AxisSpec::new(0.0, 1.0, 5, false).unwrap(),
            8
        )
        .is_err());
    }

    #[test]
    fn wrap_angle_range() {
        for &t in &[-PI, PI, 3.0 * PI, -3.0 * PI, 0.0, 7.1, -1e-18] {
            let w = wrap_angle(t);
            assert!((-PI..PI).contains(&w), "{t} -> {w}");
        }
        assert!((wrap_angle(3.25) - (3.25 - 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn interpolation_examples() {
        let g = grid998();
        let c = ScalarField::constant(g, 3.0);
        assert!((c.interpolate(&State::new(0.3, -1.7, 2.9)).unwrap() - 3.0).abs() < 1e-12);

        let f = ScalarField::from_fn(g, |s| s.x * 2.0 + s.y - s.theta.sin());
        let s = g.index_to_state(3, 5, 6).unwrap();
        assert_eq!(f.interpolate(&s).unwrap(), f.get(3, 5, 6));

        let lin = ScalarField::from_fn(g, |s| s.x);
        let mid = State::new(0.5, 0.0, 0.0);
        assert!((lin.interpolate(&mid).unwrap() - 0.5 * (0.0 + 1.0)).abs() < 1e-12);

        assert!(matches!(
            lin.interpolate(&State::new(4.5, 0.0, 0.0)),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn gradient_examples() {
        let g = grid998();
        let c = ScalarField::constant(g, 1.5);
        assert_eq!(c.gradient_central(2, 3, 1).unwrap(), [0.0, 0.0, 0.0]);
        let lin = ScalarField::from_fn(g, |s| s.x);
        assert_eq!(lin.gradient_central(4, 4, 3).unwrap(), [1.0, 0.0, 0.0]);
        // one-sided at the boundary is still exact for a linear field
        assert_eq!(lin.gradient_central(0, 0, 0).unwrap(), [1.0, 0.0, 0.0]);

        let g64 = Grid3::square(4.0, 5, 5, 64).unwrap();
        let sine = ScalarField::from_fn(g64, |s| s.theta.sin());
        let k0 = g64.axes[2].nearest(0.0);
        let p = sine.gradient_central(2, 2, k0).unwrap();
        // central difference of sin at 0 is sin(h)/h
        let h = g64.axes[2].spacing();
        assert!((p[2] - h.sin() / h).abs() < 1e-12);
        assert!((p[2] - 1.0).abs() <= 0.01);
        assert_eq!((p[0], p[1]), (0.0, 0.0));
        // seam cell wraps: derivative of sin at -π is -1
        let p = sine.gradient_central(2, 2, 0).unwrap();
        assert!((p[2] + 1.0).abs() <= 0.01);
    }

    #[test]
    fn sublevel_examples() {
        let g = Grid3::square(1.0, 3, 3, 3).unwrap();
        assert!(ScalarField::constant(g, 1.0).sublevel_set(0.0).is_empty());
        assert_eq!(ScalarField::constant(g, -1.0).sublevel_set(0.0).count(), g.len());
        let mut vals = vec![1.0; g.len()];
        vals[0] = -0.1;
        vals[1] = 0.0;
        vals[2] = 0.1;
        let m = ScalarField::new(g, vals).unwrap().sublevel_set(0.0);
        assert_eq!(&m.bits()[..3], &[true, false, false]);
    }

    #[test]
    fn set_metric_examples() {
        let g = Grid3::square(1.0, 5, 4, 4).unwrap();
        assert_eq!(g.len(), 80);
        let a = BoolMask::from_fn(g, |_| false);
        let mut a_bits = a.bits().to_vec();
        let mut b_bits = a_bits.clone();
        for idx in 0..40 {
            b_bits[idx] = true;
        }
        for bit in a_bits.iter_mut().take(10) {
            *bit = true;
        }
        let a = BoolMask::new(g, a_bits).unwrap();
        let b = BoolMask::new(g, b_bits).unwrap();
        let m = set_metrics(&a, &b).unwrap();
        assert_eq!((m.iou, m.frac_a_in_b, m.frac_b_in_a), (0.25, 1.0, 0.25));
        let m = set_metrics(&b, &b).unwrap();
        assert_eq!((m.iou, m.frac_a_in_b, m.frac_b_in_a), (1.0, 1.0, 1.0));
        let disjoint = b.not();
        assert_eq!(set_metrics(&b, &disjoint).unwrap().iou, 0.0);
        let e = BoolMask::empty(g);
        assert_eq!(set_metrics(&e, &e).unwrap().iou, 1.0);

        let other = BoolMask::empty(Grid3::square(1.0, 5, 5, 4).unwrap());
        assert!(matches!(set_metrics(&a, &other), Err(Error::Shape(_))));
    }

    #[test]
    fn nan_rejected() {
        let g = Grid3::square(1.0, 3, 3, 3).unwrap();
        let mut v = vec![0.0; g.len()];
        v[4] = f64::NAN;
        assert!(matches!(ScalarField::new(g, v), Err(Error::Numeric(_))));
    }

    #[test]
    fn sublevel_volume_of_half_space() {
        let g = Grid3::square(2.0, 9, 9, 8).unwrap();
        let f = ScalarField::from_fn(g, |s| s.x - 0.25);
        let v = f.sublevel_volume(0.0, 4).unwrap();
        let expect = (0.25 + 2.0) * 4.0 * std::f64::consts::TAU;
        assert!((v - expect).abs() < 1e-9, "{v} vs {expect}");
        let all = ScalarField::constant(g, -1.0).sublevel_volume(0.0, 2).unwrap();
        assert!((all - 16.0 * std::f64::consts::TAU).abs() < 1e-9);
    }
}
