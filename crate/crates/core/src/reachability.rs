//! Infinite-horizon avoid tubes.
//!
//! The value function solves the variational inequality
//!
//! ```text
//! min{ h(s) − V(s,t),  ∂V/∂t + max_a min_d ∇V·f(s,a,d) } = 0,   V(s,0) = h(s)
//! ```
//!
//! backwards in time until it stops changing. Each step is an explicit
//! Lax–Friedrichs update followed by `min(·, h)`; the tube is the strict
//! sub-zero level set of the converged value.
//!
//! [`brute_force_brt`] is an independent check: it iterates the discrete
//! avoid game on snapped grid states and never touches the PDE machinery.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ControlAffineModel;
use crate::error::{Error, Result};
use crate::grid::{BoolMask, Grid3, ScalarField, State};

/// Circular obstacle in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Obstacle {
    pub fn new(center: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!("obstacle radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// Signed distance to the obstacle boundary (negative inside).
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        (x - self.center[0]).hypot(y - self.center[1]) - self.radius
    }

    /// The failure set on a grid: cells whose center lies strictly inside.
    pub fn failure_mask(&self, grid: &Grid3) -> BoolMask {
        BoolMask::from_fn(*grid, |s| self.signed_distance(s.x, s.y) < 0.0)
    }
}

impl Default for Obstacle {
    fn default() -> Self {
        Self { center: [0.0, 0.0], radius: 1.0 }
    }
}

/// Signed distance field of the obstacle, constant along θ.
pub fn failure_sdf(obstacle: &Obstacle, grid: &Grid3) -> ScalarField {
    ScalarField::from_fn(*grid, |s| obstacle.signed_distance(s.x, s.y))
}

/// Iteration controls for [`solve_brt`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Stop once the max-norm change per unit time falls below this.
    pub tolerance: f64,
    /// Fraction of the stability limit used to pick the time step.
    pub cfl: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tolerance: 1e-4, cfl: 0.8, max_iters: 4000 }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        Ok(())
    }
}

/// Converged (or abandoned) tube computation.
#[derive(Debug, Clone, PartialEq)]
pub struct BrtResult {
    pub value: ScalarField,
    /// `value < 0`.
    pub unsafe_set: BoolMask,
    pub iterations: usize,
    /// Max-norm change of the last step.
    pub residual: f64,
    pub converged: bool,
}

/// One Lax–Friedrichs step plus the `min` with `h` and the previous iterate.
#[derive(Debug, Clone)]
pub struct ViStep {
    pub value: ScalarField,
    /// `max |V' − V|`.
    pub delta: f64,
}

/// Per-heading-slice coefficients; α and the Hamiltonian depend on θ only
/// through the cell center.
struct SliceCoefficients {
    alpha: Vec<[f64; 3]>,
}

impl SliceCoefficients {
    fn new(model: &ControlAffineModel, grid: &Grid3) -> Self {
        let at = &grid.axes[2];
        let alpha = (0..at.count)
            .map(|k| model.dissipation_bounds(&State::new(0.0, 0.0, at.coord(k))))
            .collect();
        Self { alpha }
    }

    /// `max over cells of Σᵢ αᵢ / Δxᵢ`.
    fn cfl_rate(&self, grid: &Grid3) -> f64 {
        let h = grid.spacing();
        self.alpha
            .iter()
            .map(|a| a[0] / h[0] + a[1] / h[1] + a[2] / h[2])
            .fold(0.0, f64::max)
    }
}

/// Largest stable time step for `model` on `grid` at the given CFL number.
pub fn stable_time_step(model: &ControlAffineModel, grid: &Grid3, cfl: f64) -> f64 {
    let rate = SliceCoefficients::new(model, grid).cfl_rate(grid);
    if rate > 0.0 {
        cfl / rate
    } else {
        f64::INFINITY
    }
}

/// Advances `value` by `dt` of backward time: `V' = min(Ṽ, h, V)`, so
/// iterates never increase.
///
/// Fails with a configuration error when `dt` violates the CFL bound
/// `dt·Σᵢ αᵢ/Δxᵢ ≤ 1` at some cell.
pub fn vi_step(
    model: &ControlAffineModel,
    value: &ScalarField,
    target: &ScalarField,
    dt: f64,
) -> Result<ViStep> {
    value.grid().ensure_same(target.grid())?;
    let coeffs = SliceCoefficients::new(model, value.grid());
    let rate = coeffs.cfl_rate(value.grid());
    if !(dt > 0.0) || dt * rate > 1.0 + 1e-12 {
        return Err(Error::Config(format!(
            "time step {dt} violates the CFL bound (max stable step {})",
            1.0 / rate
        )));
    }
    Ok(lax_friedrichs_step(model, &coeffs, value, target, dt))
}

fn lax_friedrichs_step(
    model: &ControlAffineModel,
    coeffs: &SliceCoefficients,
    value: &ScalarField,
    target: &ScalarField,
    dt: f64,
) -> ViStep {
    let grid = *value.grid();
    let h = target.values();
    let old = value.values();
    let next: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let mut p = [0.0; 3];
            let mut dissipation = 0.0;
            let (_, _, k) = grid.unflat(idx);
            let alpha = &coeffs.alpha[k];
            for axis in 0..3 {
                let (minus, plus) = value.one_sided(idx, axis);
                p[axis] = 0.5 * (minus + plus);
                dissipation += alpha[axis] * 0.5 * (plus - minus);
            }
            let ham = model.hamiltonian(&grid.center(idx), &p).value;
            let updated = old[idx] + dt * (ham + dissipation);
            // also min with the previous iterate: the extrapolated outer
            // boundary is not a monotone stencil and could otherwise creep up
            updated.min(h[idx]).min(old[idx])
        })
        .collect();
    let delta = next
        .par_iter()
        .zip(old.par_iter())
        .map(|(a, b)| (a - b).abs())
        .reduce(|| 0.0, f64::max);
    ViStep { value: ScalarField::new(grid, next).expect("finite update"), delta }
}

/// Runs [`vi_step`] from `V = h` until the value stops changing.
///
/// Non-convergence within `max_iters` is reported through
/// [`BrtResult::converged`], not as an error.
pub fn solve_brt(
    model: &ControlAffineModel,
    target: &ScalarField,
    settings: &SolverSettings,
) -> Result<BrtResult> {
    settings.validate()?;
    let grid = *target.grid();
    let coeffs = SliceCoefficients::new(model, &grid);
    let rate = coeffs.cfl_rate(&grid);
    let dt = if rate > 0.0 { settings.cfl / rate } else { 1.0 };

    let mut value = target.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < settings.max_iters {
        let step = lax_friedrichs_step(model, &coeffs, &value, target, dt);
        value = step.value;
        residual = step.delta;
        iterations += 1;
        if residual < settings.tolerance * dt {
            converged = true;
            break;
        }
    }
    if value.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("value function diverged".into()));
    }
    let unsafe_set = value.sublevel_set(0.0);
    Ok(BrtResult { value, unsafe_set, iterations, residual, converged })
}

/// The `g_a` operator: the tube of an arbitrary avoid set under `model`.
///
/// The mask is turned into a signed-distance-like initializer with an
/// exact Euclidean distance transform in each θ slice, then solved like any
/// other target. An empty mask yields an empty tube immediately.
pub fn brt_of_set(
    model: &ControlAffineModel,
    target: &BoolMask,
    settings: &SolverSettings,
) -> Result<BrtResult> {
    let grid = *target.grid();
    if target.is_empty() {
        let value = ScalarField::constant(grid, domain_diameter(&grid));
        return Ok(BrtResult {
            unsafe_set: BoolMask::empty(grid),
            value,
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let init = mask_signed_distance(target);
    solve_brt(model, &init, settings)
}

fn domain_diameter(grid: &Grid3) -> f64 {
    let [ax, ay, _] = &grid.axes;
    (ax.hi - ax.lo).hypot(ay.hi - ay.lo)
}

/// Signed distance to a mask, computed per θ slice over cell centers.
///
/// Negative inside the mask, positive outside, with the zero crossing
/// half a cell from the boundary cells.
pub fn mask_signed_distance(mask: &BoolMask) -> ScalarField {
    let grid = *mask.grid();
    let [nx, ny, nt] = grid.shape();
    let [hx, hy, _] = grid.spacing();
    let half = 0.5 * hx.min(hy);
    let cap = domain_diameter(&grid);
    let mut values = vec![0.0; grid.len()];
    let mut inside = vec![false; nx * ny];
    for k in 0..nt {
        for i in 0..nx {
            for j in 0..ny {
                inside[i * ny + j] = mask.get(grid.flat(i, j, k));
            }
        }
        let to_inside = squared_edt(&inside, nx, ny, hx, hy, true);
        let to_outside = squared_edt(&inside, nx, ny, hx, hy, false);
        for i in 0..nx {
            for j in 0..ny {
                let c = i * ny + j;
                let v = if inside[c] {
                    -(to_outside[c].sqrt().min(cap) - half)
                } else {
                    to_inside[c].sqrt().min(cap) - half
                };
                values[grid.flat(i, j, k)] = v;
            }
        }
    }
    ScalarField::new(grid, values).expect("finite distances")
}

/// Squared distance from each cell to the nearest cell whose flag equals
/// `feature`, via two separable passes (x then y).
fn squared_edt(flags: &[bool], nx: usize, ny: usize, hx: f64, hy: f64, feature: bool) -> Vec<f64> {
    let mut rows = vec![f64::INFINITY; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let mut best = f64::INFINITY;
            for q in 0..nx {
                if flags[q * ny + j] == feature {
                    let d = (i as f64 - q as f64) * hx;
                    best = best.min(d * d);
                }
            }
            rows[i * ny + j] = best;
        }
    }
    let mut out = vec![f64::INFINITY; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let mut best = f64::INFINITY;
            for q in 0..ny {
                let g = rows[i * ny + q];
                if g.is_finite() {
                    let d = (j as f64 - q as f64) * hy;
                    best = best.min(g + d * d);
                }
            }
            out[i * ny + j] = best;
        }
    }
    out
}

/// Discrete avoid game on snapped grid states.
///
/// A cell joins the unsafe set when, for every sampled action, some
/// sampled disturbance sends its center (after one Euler step and
/// nearest-cell snapping) into the current unsafe set. Iterates to the
/// least fixed point above the failure mask or until `max_iters` sweeps.
pub fn brute_force_brt(
    model: &ControlAffineModel,
    failure: &BoolMask,
    n_actions: usize,
    n_disturbances: usize,
    dt: f64,
    max_iters: usize,
) -> Result<BoolMask> {
    brute_force_sweeps(model, failure, n_actions, n_disturbances, dt, max_iters, true)
}

fn brute_force_sweeps(
    model: &ControlAffineModel,
    failure: &BoolMask,
    n_actions: usize,
    n_disturbances: usize,
    dt: f64,
    max_iters: usize,
    jacobi: bool,
) -> Result<BoolMask> {
    if n_actions < 2 || n_disturbances < 2 {
        return Err(Error::Config("need at least 2 samples per input dimension".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let grid = *failure.grid();
    let actions = model.action_bounds.lattice(n_actions);
    let disturbances = model.disturbance_bounds.lattice(n_disturbances);
    let (na, nd) = (actions.len(), disturbances.len());
    let successors: Vec<u32> = (0..grid.len())
        .into_par_iter()
        .flat_map_iter(|idx| {
            let s = grid.center(idx);
            let mut out = Vec::with_capacity(na * nd);
            for a in &actions {
                for d in &disturbances {
                    let next = model.euler_step_unchecked(&s, a, d, dt);
                    out.push(grid.nearest(&grid.clamp(&next)) as u32);
                }
            }
            out
        })
        .collect();

    let forced = |unsafe_bits: &[bool], idx: usize| {
        let row = &successors[idx * na * nd..(idx + 1) * na * nd];
        row.chunks(nd).all(|ds| ds.iter().any(|&n| unsafe_bits[n as usize]))
    };

    let mut bits = failure.bits().to_vec();
    for _ in 0..max_iters {
        let mut changed = false;
        if jacobi {
            let next: Vec<bool> =
                (0..grid.len()).into_par_iter().map(|idx| bits[idx] || forced(&bits, idx)).collect();
            changed = next != bits;
            bits = next;
        } else {
            for idx in 0..grid.len() {
                if !bits[idx] && forced(&bits, idx) {
                    bits[idx] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    BoolMask::new(grid, bits)
}
