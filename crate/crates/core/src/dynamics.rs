//! Control-affine Dubins-car dynamics with a bounded planar disturbance.
//!
//! ```text
//! ẋ = (v_nominal + v) cos θ + dˣ
//! ẏ = (v_nominal + v) sin θ + dʸ
//! θ̇ = ω
//! ```
//!
//! written as `f(s, a, d) = f₀(s) + G_u(s)·a + G_d·d` with `a = (v, ω)` and
//! `d = (dˣ, dʸ)`. The Hamiltonian `max_a min_d p·f` is separable over the
//! box-bounded inputs, so each input component is extremized independently
//! at a bound of its box.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{wrap_angle, State};

/// Linear and angular velocity command `(v, ω)`.
pub type Action = [f64; 2];
/// Planar disturbance `(dˣ, dʸ)`.
pub type Disturbance = [f64; 2];

const BOUND_SLACK: f64 = 1e-9;

/// Componentwise box `lo ≤ u ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl BoxBounds {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate()?;
        Ok(b)
    }

    /// `[-m₀, m₀] × [-m₁, m₁]`.
    pub fn symmetric(max: [f64; 2]) -> Self {
        Self { lo: [-max[0], -max[1]], hi: max }
    }

    pub fn validate(&self) -> Result<()> {
        for j in 0..2 {
            if !(self.lo[j].is_finite() && self.hi[j].is_finite()) || self.lo[j] > self.hi[j] {
                return Err(Error::Config(format!(
                    "box component {j} has lo {} > hi {}",
                    self.lo[j], self.hi[j]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, u: &[f64; 2]) -> bool {
        (0..2).all(|j| u[j] >= self.lo[j] - BOUND_SLACK && u[j] <= self.hi[j] + BOUND_SLACK)
    }

    pub fn midpoint(&self) -> [f64; 2] {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    /// Largest magnitude per component, `max(|lo|, |hi|)`.
    pub fn magnitude(&self) -> [f64; 2] {
        [self.lo[0].abs().max(self.hi[0].abs()), self.lo[1].abs().max(self.hi[1].abs())]
    }

    /// `n` evenly spaced samples per component (tensor grid, row-major).
    /// With `n = 3` these are the corners, edge midpoints and center.
    pub fn lattice(&self, n: usize) -> Vec<[f64; 2]> {
        let axis = |j: usize| -> Vec<f64> {
            if n <= 1 {
                return vec![0.5 * (self.lo[j] + self.hi[j])];
            }
            (0..n)
                .map(|t| self.lo[j] + (self.hi[j] - self.lo[j]) * t as f64 / (n - 1) as f64)
                .collect()
        };
        let (u0, u1) = (axis(0), axis(1));
        u0.iter().flat_map(|&a| u1.iter().map(move |&b| [a, b])).collect()
    }

    /// The four corners followed by the center.
    pub fn corners_and_center(&self) -> Vec<[f64; 2]> {
        vec![
            [self.lo[0], self.lo[1]],
            [self.lo[0], self.hi[1]],
            [self.hi[0], self.lo[1]],
            [self.hi[0], self.hi[1]],
            self.midpoint(),
        ]
    }
}

/// Dubins dynamics with nominal forward speed, control box and disturbance box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlAffineModel {
    pub v_nominal: f64,
    pub action_bounds: BoxBounds,
    pub disturbance_bounds: BoxBounds,
}

/// Output of [`ControlAffineModel::hamiltonian`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianValue {
    pub value: f64,
    pub a_star: Action,
    pub d_star: Disturbance,
}

impl ControlAffineModel {
    pub fn new(v_nominal: f64, action_bounds: BoxBounds, disturbance_bounds: BoxBounds) -> Result<Self> {
        let m = Self { v_nominal, action_bounds, disturbance_bounds };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.v_nominal.is_finite() {
            return Err(Error::Config("v_nominal must be finite".into()));
        }
        self.action_bounds.validate()?;
        self.disturbance_bounds.validate()
    }

    pub fn drift(&self, s: &State) -> [f64; 3] {
        let (sin, cos) = s.theta.sin_cos();
        [self.v_nominal * cos, self.v_nominal * sin, 0.0]
    }

    /// Columns of `G_u`: the `v` column and the `ω` column.
    pub fn control_columns(&self, s: &State) -> [[f64; 3]; 2] {
        let (sin, cos) = s.theta.sin_cos();
        [[cos, sin, 0.0], [0.0, 0.0, 1.0]]
    }

    /// Columns of `G_d` (state independent).
    pub fn disturbance_columns(&self) -> [[f64; 3]; 2] {
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
    }

    /// Unchecked `f₀ + G_u·a + G_d·d`.
    pub fn flow_unchecked(&self, s: &State, a: &Action, d: &Disturbance) -> [f64; 3] {
        let mut f = self.drift(s);
        let gu = self.control_columns(s);
        let gd = self.disturbance_columns();
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += gu[0][i] * a[0] + gu[1][i] * a[1] + gd[0][i] * d[0] + gd[1][i] * d[1];
        }
        f
    }

    /// State derivative; rejects inputs outside their boxes.
    pub fn flow(&self, s: &State, a: &Action, d: &Disturbance) -> Result<[f64; 3]> {
        self.check_inputs(a, d)?;
        Ok(self.flow_unchecked(s, a, d))
    }

    fn check_inputs(&self, a: &Action, d: &Disturbance) -> Result<()> {
        if !self.action_bounds.contains(a) {
            return Err(Error::Domain(format!("action {a:?} outside {:?}", self.action_bounds)));
        }
        if !self.disturbance_bounds.contains(d) {
            return Err(Error::Domain(format!(
                "disturbance {d:?} outside {:?}",
                self.disturbance_bounds
            )));
        }
        Ok(())
    }

    /// `max_a min_d p·f(s, a, d)` together with the attaining inputs.
    ///
    /// When a switching coefficient is exactly zero the extremizer is the
    /// box midpoint; the value does not depend on it.
    pub fn hamiltonian(&self, s: &State, p: &[f64; 3]) -> HamiltonianValue {
        let dot = |g: &[f64; 3]| g[0] * p[0] + g[1] * p[1] + g[2] * p[2];
        let mut value = dot(&self.drift(s));
        let mut a_star = [0.0; 2];
        let mut d_star = [0.0; 2];
        let (ab, db) = (&self.action_bounds, &self.disturbance_bounds);
        for (j, g) in self.control_columns(s).iter().enumerate() {
            let c = dot(g);
            a_star[j] = if c > 0.0 {
                ab.hi[j]
            } else if c < 0.0 {
                ab.lo[j]
            } else {
                0.5 * (ab.lo[j] + ab.hi[j])
            };
            value += c * a_star[j];
        }
        for (j, g) in self.disturbance_columns().iter().enumerate() {
            let c = dot(g);
            d_star[j] = if c > 0.0 {
                db.lo[j]
            } else if c < 0.0 {
                db.hi[j]
            } else {
                0.5 * (db.lo[j] + db.hi[j])
            };
            value += c * d_star[j];
        }
        HamiltonianValue { value, a_star, d_star }
    }

    /// Per-axis bound on `|∂H/∂pᵢ|` used as Lax–Friedrichs dissipation.
    pub fn dissipation_bounds(&self, s: &State) -> [f64; 3] {
        let f0 = self.drift(s);
        let gu = self.control_columns(s);
        let gd = self.disturbance_columns();
        let am = self.action_bounds.magnitude();
        let dm = self.disturbance_bounds.magnitude();
        let mut alpha = [0.0; 3];
        for (i, a) in alpha.iter_mut().enumerate() {
            *a = f0[i].abs()
                + gu[0][i].abs() * am[0]
                + gu[1][i].abs() * am[1]
                + gd[0][i].abs() * dm[0]
                + gd[1][i].abs() * dm[1];
        }
        alpha
    }

    /// Forward-Euler step with θ wrapped into `[-π, π)`.
    pub fn euler_step(&self, s: &State, a: &Action, d: &Disturbance, dt: f64) -> Result<State> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        self.check_inputs(a, d)?;
        Ok(self.euler_step_unchecked(s, a, d, dt))
    }

    pub(crate) fn euler_step_unchecked(&self, s: &State, a: &Action, d: &Disturbance, dt: f64) -> State {
        let f = self.flow_unchecked(s, a, d);
        State::new(s.x + dt * f[0], s.y + dt * f[1], wrap_angle(s.theta + dt * f[2]))
    }
}

/// Named dynamics presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelPreset {
    /// `v, ω ∈ [-1.5, 1.5]`.
    Agile,
    /// `v, ω ∈ [-0.7, 0.7]`.
    NonAgile,
    /// `v, ω ∈ [-5, 5]`; enough authority that the tube hugs the failure set.
    UltraAgile,
}

impl ModelPreset {
    pub const V_NOMINAL: f64 = 0.6;
    pub const DISTURBANCE: f64 = 0.6;

    pub const ALL: [ModelPreset; 3] = [ModelPreset::UltraAgile, ModelPreset::Agile, ModelPreset::NonAgile];

    pub fn name(&self) -> &'static str {
        match self {
            ModelPreset::Agile => "agile",
            ModelPreset::NonAgile => "non_agile",
            ModelPreset::UltraAgile => "ultra_agile",
        }
    }

    pub fn authority(&self) -> f64 {
        match self {
            ModelPreset::Agile => 1.5,
            ModelPreset::NonAgile => 0.7,
            ModelPreset::UltraAgile => 5.0,
        }
    }

    pub fn model(&self) -> ControlAffineModel {
        let m = self.authority();
        ControlAffineModel {
            v_nominal: Self::V_NOMINAL,
            action_bounds: BoxBounds::symmetric([m, m]),
            disturbance_bounds: BoxBounds::symmetric([Self::DISTURBANCE, Self::DISTURBANCE]),
        }
    }
}

impl fmt::Display for ModelPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agile" => Ok(ModelPreset::Agile),
            "non_agile" => Ok(ModelPreset::NonAgile),
            "ultra_agile" => Ok(ModelPreset::UltraAgile),
            other => Err(Error::Config(format!("unknown model preset `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn flow_examples() {
        let m = ModelPreset::Agile.model();
        let o = State::new(0.0, 0.0, 0.0);
        assert!(close(m.flow(&o, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), [0.6, 0.0, 0.0], 1e-15));
        let up = State::new(0.0, 0.0, FRAC_PI_2);
        assert!(close(m.flow(&up, &[0.4, 0.0], &[0.0, 0.0]).unwrap(), [0.0, 1.0, 0.0], 1e-12));
        assert!(close(m.flow(&o, &[0.0, 1.5], &[0.6, -0.6]).unwrap(), [1.2, -0.6, 1.5], 1e-15));
        assert!(matches!(m.flow(&o, &[2.0, 0.0], &[0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(m.flow(&o, &[0.0, 0.0], &[0.0, 0.7]), Err(Error::Domain(_))));
    }

    #[test]
    fn hamiltonian_examples() {
        let agile = ModelPreset::Agile.model();
        let o = State::new(0.0, 0.0, 0.0);
        let h = agile.hamiltonian(&o, &[0.0, 0.0, 0.0]);
        assert_eq!(h.value, 0.0);
        assert_eq!(h.a_star, agile.action_bounds.midpoint());
        assert_eq!(h.d_star, agile.disturbance_bounds.midpoint());

        let h = agile.hamiltonian(&o, &[1.0, 0.0, 0.0]);
        assert!((h.value - 1.5).abs() < 1e-12);
        assert_eq!(h.a_star[0], 1.5);
        assert_eq!(h.d_star, [-0.6, 0.0]);

        let h = ModelPreset::NonAgile.model().hamiltonian(&o, &[1.0, 0.0, 0.0]);
        assert!((h.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn dissipation_examples() {
        let a = ModelPreset::Agile.model().dissipation_bounds(&State::new(0.0, 0.0, 0.0));
        assert!(close(a, [2.7, 0.6, 1.5], 1e-12));
        let n = ModelPreset::NonAgile.model().dissipation_bounds(&State::new(0.0, 0.0, FRAC_PI_2));
        assert!(close(n, [0.6, 1.9, 0.7], 1e-12));
    }

    #[test]
    fn euler_examples() {
        let m = ModelPreset::Agile.model();
        let s = m.euler_step(&State::new(0.0, 0.0, 0.0), &[0.0, 0.0], &[0.0, 0.0], 0.1).unwrap();
        assert!(close([s.x, s.y, s.theta], [0.06, 0.0, 0.0], 1e-15));

        let s = m.euler_step(&State::new(0.0, 0.0, 3.1), &[0.0, 1.5], &[0.0, 0.0], 0.1).unwrap();
        assert!((s.theta - (3.25 - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
        assert!((s.theta + 3.033).abs() < 1e-3);

        let mut s = State::new(0.0, 0.0, 0.0);
        for _ in 0..10 {
            s = m.euler_step(&s, &[0.0, 0.0], &[0.0, 0.0], 0.1).unwrap();
        }
        assert!(close([s.x, s.y, s.theta], [0.6, 0.0, 0.0], 1e-12));

        assert!(m.euler_step(&s, &[0.0, 0.0], &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn preset_bounds() {
        for p in ModelPreset::ALL {
            let m = p.model();
            assert_eq!(m.v_nominal, 0.6);
            assert_eq!(m.disturbance_bounds, BoxBounds::symmetric([0.6, 0.6]));
            assert_eq!(m.action_bounds.hi, [p.authority(); 2]);
            assert_eq!(p.name().parse::<ModelPreset>().unwrap(), p);
        }
        assert!("turbo".parse::<ModelPreset>().is_err());
    }

    #[test]
    fn lattice_shapes() {
        let b = BoxBounds::symmetric([1.0, 2.0]);
        let l = b.lattice(3);
        assert_eq!(l.len(), 9);
        assert!(l.contains(&[-1.0, 2.0]) && l.contains(&[0.0, 0.0]) && l.contains(&[1.0, -2.0]));
        assert_eq!(b.corners_and_center().len(), 5);
    }
}
