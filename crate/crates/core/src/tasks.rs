//! Navigation tasks as finite-horizon tabular MDPs on the grid.
//!
//! Transitions push a cell center through one Euler step of the dynamics,
//! clamp `(x, y)` into the domain and snap to the nearest cell. Disturbances
//! are drawn from a small set of equally weighted atoms, so the transition
//! kernel is exact and finite.
//!
//! Policies are entropy-regularized (soft) optimal under a penalized reward:
//! constrained cells cost `λ` per step and are absorbing, as are goal cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Action, ControlAffineModel, Disturbance};
use crate::error::{Error, Result};
use crate::grid::{BoolMask, Grid3, ScalarField, State};

/// How disturbances act while demonstrations are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceMode {
    /// Disturbance fixed at the center of its box.
    None,
    /// Independent draws from the four box corners and the center.
    IidUniform,
}

/// Discretization and solver constants for the task MDPs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdpParams {
    pub dt: f64,
    pub horizon: usize,
    pub temperature: f64,
    pub penalty: f64,
    pub goal_bonus: f64,
    /// Samples per action dimension (3 gives corners, edge midpoints and center).
    pub action_levels: usize,
    pub disturbance_mode: DisturbanceMode,
}

impl Default for MdpParams {
    fn default() -> Self {
        Self {
            dt: 0.2,
            horizon: 60,
            temperature: 0.05,
            penalty: 500.0,
            goal_bonus: 10.0,
            action_levels: 3,
            disturbance_mode: DisturbanceMode::IidUniform,
        }
    }
}

impl MdpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !(self.penalty > 0.0) {
            return Err(Error::Config("penalty must be positive".into()));
        }
        if self.action_levels < 2 {
            return Err(Error::Config("need at least 2 action levels per dimension".into()));
        }
        Ok(())
    }
}

/// A start state and a goal disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub start: [f64; 3],
    pub goal: [f64; 2],
    pub goal_radius: f64,
}

impl Task {
    pub fn start_state(&self) -> State {
        State::new(self.start[0], self.start[1], self.start[2])
    }

    pub fn goal_distance(&self, s: &State) -> f64 {
        (s.x - self.goal[0]).hypot(s.y - self.goal[1])
    }

    pub fn in_goal(&self, s: &State) -> bool {
        self.goal_distance(s) <= self.goal_radius
    }
}

/// `count` tasks with starts evenly spaced on a ring around `center`, each
/// heading toward the diametrically opposite goal. The seed rotates the
/// whole ring.
pub fn ring_tasks(
    count: usize,
    center: [f64; 2],
    ring_radius: f64,
    goal_radius: f64,
    seed: u64,
) -> Vec<Task> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.gen_range(0.0..std::f64::consts::TAU);
    (0..count)
        .map(|id| {
            let phi = offset + std::f64::consts::TAU * id as f64 / count as f64;
            let start = [center[0] + ring_radius * phi.cos(), center[1] + ring_radius * phi.sin()];
            let goal = [center[0] - ring_radius * phi.cos(), center[1] - ring_radius * phi.sin()];
            let heading = (goal[1] - start[1]).atan2(goal[0] - start[0]);
            Task { id, start: [start[0], start[1], crate::grid::wrap_angle(heading)], goal, goal_radius }
        })
        .collect()
}

/// Finite transition kernel: `successors[(s·A + a)·D + d]` with atom weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    pub n_states: usize,
    pub n_actions: usize,
    pub weights: Vec<f64>,
    pub successors: Vec<u32>,
}

impl TransitionKernel {
    pub fn new(n_states: usize, n_actions: usize, weights: Vec<f64>, successors: Vec<u32>) -> Result<Self> {
        let n_atoms = weights.len();
        if n_atoms == 0 || n_actions == 0 {
            return Err(Error::Config("kernel needs at least one action and one atom".into()));
        }
        if successors.len() != n_states * n_actions * n_atoms {
            return Err(Error::Shape(format!(
                "expected {} successors, got {}",
                n_states * n_actions * n_atoms,
                successors.len()
            )));
        }
        if successors.iter().any(|&s| s as usize >= n_states) {
            return Err(Error::Shape("successor index out of range".into()));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config("atom weights must form a distribution".into()));
        }
        Ok(Self { n_states, n_actions, weights, successors })
    }

    pub fn n_atoms(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[u32] {
        let d = self.n_atoms();
        let base = (s * self.n_actions + a) * d;
        &self.successors[base..base + d]
    }
}

/// Stochastic stationary policy with the absorbing flags it was solved under.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub n_actions: usize,
    /// `probs[s·A + a] = π(a|s)`.
    pub probs: Vec<f64>,
    pub absorbing: Vec<bool>,
}

impl PolicyTable {
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn n_states(&self) -> usize {
        self.absorbing.len()
    }
}

/// Result of soft value iteration.
#[derive(Debug, Clone)]
pub struct SoftSolution {
    /// The first-stage policy, used as a stationary policy.
    pub policy: PolicyTable,
    /// Soft value of the first stage.
    pub values: Vec<f64>,
}

/// Finite-horizon soft Bellman recursion on a generic kernel.
///
/// `Q_h(s,a) = r(s) + Σ_d w_d V_{h+1}(s'_d)`, `V_h = τ log Σ_a exp(Q_h/τ)`,
/// `V_H = 0`. Absorbing states keep their own successor under every action.
pub fn soft_value_iteration(
    kernel: &TransitionKernel,
    rewards: &[f64],
    absorbing: &[bool],
    horizon: usize,
    temperature: f64,
) -> Result<SoftSolution> {
    let n = kernel.n_states;
    if rewards.len() != n || absorbing.len() != n {
        return Err(Error::Shape("rewards and absorbing flags must cover every state".into()));
    }
    if horizon == 0 || !(temperature > 0.0) {
        return Err(Error::Config("horizon ≥ 1 and temperature > 0 required".into()));
    }
    let na = kernel.n_actions;
    let mut next = vec![0.0; n];
    let mut probs = vec![0.0; n * na];
    for stage in (0..horizon).rev() {
        let first = stage == 0;
        let results: Vec<(f64, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|s| {
                let mut q = vec![0.0; na];
                if absorbing[s] {
                    q.iter_mut().for_each(|v| *v = rewards[s] + next[s]);
                } else {
                    for (a, qa) in q.iter_mut().enumerate() {
                        let row = kernel.row(s, a);
                        let ev: f64 = row.iter().zip(&kernel.weights).map(|(&t, w)| w * next[t as usize]).sum();
                        *qa = rewards[s] + ev;
                    }
                }
                let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = q.iter().map(|&v| ((v - m) / temperature).exp()).sum();
                let v = m + temperature * z.ln();
                let pi = if first {
                    q.iter().map(|&qa| ((qa - v) / temperature).exp()).collect()
                } else {
                    Vec::new()
                };
                (v, pi)
            })
            .collect();
        for (s, (v, pi)) in results.into_iter().enumerate() {
            next[s] = v;
            if first {
                let total: f64 = pi.iter().sum();
                for (a, p) in pi.into_iter().enumerate() {
                    probs[s * na + a] = p / total;
                }
            }
        }
    }
    Ok(SoftSolution {
        policy: PolicyTable { n_actions: na, probs, absorbing: absorbing.to_vec() },
        values: next,
    })
}

/// Expected visit counts over `horizon` steps from a start distribution.
/// Mass in absorbing states stays put.
pub fn push_forward(
    kernel: &TransitionKernel,
    policy: &PolicyTable,
    start: &[f64],
    horizon: usize,
) -> Vec<f64> {
    let n = kernel.n_states;
    let mut density = vec![0.0; n];
    let mut current = start.to_vec();
    for t in 0..horizon {
        for (d, c) in density.iter_mut().zip(&current) {
            *d += c;
        }
        if t + 1 == horizon {
            break;
        }
        let mut following = vec![0.0; n];
        for (s, &mass) in current.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            if policy.absorbing[s] {
                following[s] += mass;
                continue;
            }
            for (a, &pa) in policy.row(s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (&t, &w) in kernel.row(s, a).iter().zip(&kernel.weights) {
                    following[t as usize] += mass * pa * w;
                }
            }
        }
        current = following;
    }
    density
}

/// Discrete avoid tube of a kernel: the largest set containing `failure`
/// from which every action has some atom landing back in the set.
pub fn kernel_tube(kernel: &TransitionKernel, failure: &[bool]) -> Result<Vec<bool>> {
    if failure.len() != kernel.n_states {
        return Err(Error::Shape("failure flags must cover every state".into()));
    }
    let mut tube = failure.to_vec();
    loop {
        let grown: Vec<bool> = (0..kernel.n_states)
            .into_par_iter()
            .map(|s| {
                tube[s]
                    || (0..kernel.n_actions).all(|a| kernel.row(s, a).iter().any(|&t| tube[t as usize]))
            })
            .collect();
        if grown == tube {
            return Ok(tube);
        }
        tube = grown;
    }
}

/// A task MDP over the grid cells.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub grid: Grid3,
    pub model: ControlAffineModel,
    pub params: MdpParams,
    pub actions: Vec<Action>,
    pub atoms: Vec<Disturbance>,
    pub kernel: TransitionKernel,
}

impl TabularMdp {
    pub fn new(grid: Grid3, model: ControlAffineModel, params: MdpParams) -> Result<Self> {
        params.validate()?;
        model.validate()?;
        let actions = model.action_bounds.lattice(params.action_levels);
        let atoms = match params.disturbance_mode {
            DisturbanceMode::None => vec![model.disturbance_bounds.midpoint()],
            DisturbanceMode::IidUniform => model.disturbance_bounds.corners_and_center(),
        };
        let weights = vec![1.0 / atoms.len() as f64; atoms.len()];
        let successors: Vec<u32> = (0..grid.len())
            .into_par_iter()
            .flat_map_iter(|idx| {
                let s = grid.center(idx);
                let mut row = Vec::with_capacity(actions.len() * atoms.len());
                for a in &actions {
                    for d in &atoms {
                        let next = model.euler_step_unchecked(&s, a, d, params.dt);
                        row.push(grid.nearest(&grid.clamp(&next)) as u32);
                    }
                }
                row
            })
            .collect();
        let kernel = TransitionKernel::new(grid.len(), actions.len(), weights, successors)?;
        Ok(Self { grid, model, params, actions, atoms, kernel })
    }

    pub fn n_states(&self) -> usize {
        self.grid.len()
    }

    pub fn start_index(&self, task: &Task) -> Result<usize> {
        let s = task.start_state();
        if !self.grid.contains_xy(s.x, s.y) {
            return Err(Error::OutOfDomain { x: s.x, y: s.y });
        }
        Ok(self.grid.nearest(&s))
    }

    pub fn goal_mask(&self, task: &Task) -> BoolMask {
        BoolMask::from_fn(self.grid, |s| task.in_goal(&s))
    }

    /// Per-cell task reward (actions do not enter).
    pub fn reward_field(&self, task: &Task) -> ScalarField {
        ScalarField::from_fn(self.grid, |s| reward(&self.params, task, &s, &[0.0, 0.0]))
    }
}

/// `−dt·‖p − goal‖ + bonus·1[inside goal disk]`.
pub fn reward(params: &MdpParams, task: &Task, s: &State, _action: &Action) -> f64 {
    let dist = task.goal_distance(s);
    let bonus = if dist <= task.goal_radius { params.goal_bonus } else { 0.0 };
    -params.dt * dist + bonus
}

/// Soft-optimal policy for one task under a penalized constraint mask.
#[derive(Debug, Clone)]
pub struct SoftPolicy {
    pub policy: PolicyTable,
    pub value: ScalarField,
}

/// Soft value iteration with penalty `λ` on `constraint` cells, which are
/// absorbing along with goal cells.
pub fn soft_cvi(
    mdp: &TabularMdp,
    task: &Task,
    constraint: &BoolMask,
    penalty: f64,
    temperature: f64,
) -> Result<SoftPolicy> {
    mdp.grid.ensure_same(constraint.grid())?;
    if !(penalty > 0.0) || !(temperature > 0.0) {
        return Err(Error::Config("penalty and temperature must be positive".into()));
    }
    let goal = mdp.goal_mask(task);
    let mut rewards = mdp.reward_field(task).into_values();
    let mut absorbing = goal.bits().to_vec();
    for (idx, r) in rewards.iter_mut().enumerate() {
        if constraint.get(idx) {
            *r -= penalty;
            absorbing[idx] = true;
        }
    }
    let sol = soft_value_iteration(&mdp.kernel, &rewards, &absorbing, mdp.params.horizon, temperature)?;
    Ok(SoftPolicy { policy: sol.policy, value: ScalarField::new(mdp.grid, sol.values)? })
}

/// Expected per-cell visit counts; sums to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationField {
    pub density: ScalarField,
}

impl VisitationField {
    pub fn mass(&self) -> f64 {
        self.density.sum()
    }

    /// Densities scaled to unit mass (zero field stays zero).
    pub fn normalized(&self) -> Vec<f64> {
        let m = self.mass();
        if m > 0.0 {
            self.density.values().iter().map(|v| v / m).collect()
        } else {
            vec![0.0; self.density.values().len()]
        }
    }

    /// Mass inside `mask`.
    pub fn mass_in(&self, mask: &BoolMask) -> f64 {
        self.density.values().iter().zip(mask.bits()).filter(|(_, &b)| b).map(|(v, _)| v).sum()
    }

    /// `Σ ρ(s) r(s)`, the expected undiscounted return of a state reward.
    pub fn expectation(&self, reward: &ScalarField) -> f64 {
        self.density.values().iter().zip(reward.values()).map(|(p, r)| p * r).sum()
    }
}

/// Exact forward propagation of the start state through policy and kernel.
pub fn visitation_exact(mdp: &TabularMdp, policy: &PolicyTable, task: &Task) -> Result<VisitationField> {
    if policy.n_states() != mdp.n_states() || policy.n_actions != mdp.actions.len() {
        return Err(Error::Shape("policy does not match the MDP".into()));
    }
    let mut start = vec![0.0; mdp.n_states()];
    start[mdp.start_index(task)?] = 1.0;
    let density = push_forward(&mdp.kernel, policy, &start, mdp.params.horizon);
    Ok(VisitationField { density: ScalarField::new(mdp.grid, density)? })
}

/// Pointwise sum of visitation fields.
pub fn aggregate_density(fields: &[VisitationField]) -> Result<VisitationField> {
    let first = fields.first().ok_or_else(|| Error::Config("no fields to aggregate".into()))?;
    let mut acc = first.density.clone();
    for f in &fields[1..] {
        acc = acc.zip_with(&f.density, |a, b| a + b)?;
    }
    Ok(VisitationField { density: acc })
}

/// Expected task return of a policy's visitation.
pub fn expected_return(mdp: &TabularMdp, task: &Task, visits: &VisitationField) -> f64 {
    visits.expectation(&mdp.reward_field(task))
}

/// One logged step of a demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub task: usize,
    pub step: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

/// Samples one trajectory. Stops after recording a goal state or at the
/// horizon; deterministic in `seed`.
pub fn rollout(mdp: &TabularMdp, policy: &PolicyTable, task: &Task, seed: u64) -> Result<Vec<TrajectoryRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let goal = mdp.goal_mask(task);
    let mut s = mdp.start_index(task)?;
    let mut out = Vec::with_capacity(mdp.params.horizon);
    for step in 0..mdp.params.horizon {
        let a = sample_index(policy.row(s), &mut rng);
        let d = sample_index(&mdp.kernel.weights, &mut rng);
        let c = mdp.grid.center(s);
        let action = mdp.actions[a];
        out.push(TrajectoryRecord {
            task: task.id,
            step,
            t: step as f64 * mdp.params.dt,
            x: c.x,
            y: c.y,
            theta: c.theta,
            v: action[0],
            omega: action[1],
        });
        if goal.get(s) {
            break;
        }
        if !policy.absorbing[s] {
            s = mdp.kernel.row(s, a)[d] as usize;
        }
    }
    Ok(out)
}

fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the last cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Visit counts of logged records snapped to cells.
pub fn empirical_visitation(grid: &Grid3, records: &[TrajectoryRecord]) -> Result<VisitationField> {
    let mut counts = vec![0.0; grid.len()];
    for r in records {
        if !grid.contains_xy(r.x, r.y) {
            return Err(Error::OutOfDomain { x: r.x, y: r.y });
        }
        counts[grid.nearest(&State::new(r.x, r.y, r.theta))] += 1.0;
    }
    Ok(VisitationField { density: ScalarField::new(*grid, counts)? })
}
