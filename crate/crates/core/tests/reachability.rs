use reachkit::dynamics::{BoxBounds, ControlAffineModel, ModelPreset};
use reachkit::grid::{set_metrics, BoolMask, Grid3, ScalarField, State};
use reachkit::reachability::{
    brt_of_set, failure_sdf, solve_brt, stable_time_step, vi_step, BrtResult, Obstacle, SolverSettings,
};

fn grid() -> Grid3 {
    Grid3::square(4.0, 31, 31, 15).unwrap()
}

fn solve(model: &ControlAffineModel) -> BrtResult {
    let h = failure_sdf(&Obstacle::default(), &grid());
    let r = solve_brt(model, &h, &SolverSettings::default()).unwrap();
    assert!(r.converged);
    r
}

fn custom(action: [f64; 2], disturbance: [f64; 2]) -> ControlAffineModel {
    ControlAffineModel::new(0.6, BoxBounds::symmetric(action), BoxBounds::symmetric(disturbance)).unwrap()
}

/// `|a △ b|` as a fraction of all grid cells.
fn mismatch_fraction(a: &BoolMask, b: &BoolMask) -> f64 {
    let diff = a.and_not(b).unwrap().count() + b.and_not(a).unwrap().count();
    diff as f64 / a.grid().len() as f64
}

/// `|a ∖ b| / |a|`.
fn escape_fraction(a: &BoolMask, b: &BoolMask) -> f64 {
    a.and_not(b).unwrap().count() as f64 / a.count().max(1) as f64
}

#[test]
fn one_step_tracks_semi_lagrangian_backup() {
    let g = grid();
    let model = ModelPreset::Agile.model();
    let h = failure_sdf(&Obstacle::default(), &g);
    let dt = stable_time_step(&model, &g, 0.8);
    let step = vi_step(&model, &h, &h, dt).unwrap();
    assert!(step.delta > 0.0);

    // max over action corners, min over disturbance corners of h after one Euler step
    let corners = |b: &BoxBounds| [[b.lo[0], b.lo[1]], [b.lo[0], b.hi[1]], [b.hi[0], b.lo[1]], [b.hi[0], b.hi[1]]];
    let mut worst: f64 = 0.0;
    for idx in 0..g.len() {
        let s = g.center(idx);
        if s.x.abs() > 3.0 || s.y.abs() > 3.0 {
            continue;
        }
        let backup = corners(&model.action_bounds)
            .iter()
            .map(|a| {
                corners(&model.disturbance_bounds)
                    .iter()
                    .map(|d| {
                        let n = model.euler_step(&s, a, d, dt).unwrap();
                        h.interpolate(&State::new(n.x, n.y, s.theta)).unwrap()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::NEG_INFINITY, f64::max)
            .min(h.values()[idx]);
        worst = worst.max((backup - step.value.values()[idx]).abs());
    }
    // both are first-order in the step; they differ by dissipation of order α·dt·Δx
    let bound = 2.0 * dt * 2.2 * g.spacing()[0];
    assert!(worst <= bound, "max gap {worst} exceeds {bound}");
}

#[test]
fn iterates_decrease_and_stay_below_target() {
    let g = grid();
    let model = ModelPreset::NonAgile.model();
    let h = failure_sdf(&Obstacle::default(), &g);
    let dt = stable_time_step(&model, &g, 0.8);
    let mut v = h.clone();
    for _ in 0..40 {
        let next = vi_step(&model, &v, &h, dt).unwrap().value;
        assert!(next.values().iter().zip(v.values()).all(|(a, b)| a <= b));
        v = next;
    }
    let r = solve(&model);
    assert!(r.value.values().iter().zip(h.values()).all(|(v, h)| v <= h));
}

#[test]
fn tube_shrinks_with_authority_and_grows_with_disturbance() {
    let weak = solve(&custom([0.5, 0.5], [0.6, 0.6])).unsafe_set;
    let strong = solve(&custom([1.2, 1.2], [0.6, 0.6])).unsafe_set;
    assert!(escape_fraction(&strong, &weak) <= 0.01);
    assert!(strong.count() < weak.count());

    let calm = solve(&custom([0.7, 0.7], [0.2, 0.2])).unsafe_set;
    let rough = solve(&custom([0.7, 0.7], [0.6, 0.6])).unsafe_set;
    assert!(escape_fraction(&calm, &rough) <= 0.01);
    assert!(calm.count() < rough.count());
}

#[test]
fn positive_target_has_empty_tube() {
    let g = grid();
    let h = ScalarField::from_fn(g, |s| 0.5 + s.x.abs());
    let r = solve_brt(&ModelPreset::NonAgile.model(), &h, &SolverSettings::default()).unwrap();
    assert_eq!(r.unsafe_set.count(), 0);
}

#[test]
fn tube_of_failure_mask_matches_sdf_solve() {
    let g = grid();
    let model = ModelPreset::Agile.model();
    let direct = solve(&model).unsafe_set;
    let lifted = brt_of_set(&model, &Obstacle::default().failure_mask(&g), &SolverSettings::default()).unwrap();
    let off = mismatch_fraction(&direct, &lifted.unsafe_set);
    eprintln!("failure mask lift: {off:.4} of cells differ");
    assert!(off <= 0.02);
}

#[test]
fn lifting_is_nearly_idempotent() {
    for preset in [ModelPreset::Agile, ModelPreset::NonAgile] {
        let model = preset.model();
        let brt = solve(&model).unsafe_set;
        let again = brt_of_set(&model, &brt, &SolverSettings::default()).unwrap().unsafe_set;
        let off = mismatch_fraction(&brt, &again);
        eprintln!("{}: {} -> {} cells, {off:.4} of cells differ", preset.name(), brt.count(), again.count());
        assert!(off <= 0.02);
    }
}

#[test]
fn lifting_a_tube_covers_the_weaker_tube() {
    let settings = SolverSettings::default();
    let agile = solve(&ModelPreset::Agile.model()).unsafe_set;
    let slow_model = ModelPreset::NonAgile.model();
    let slow = solve(&slow_model).unsafe_set;
    let lifted = brt_of_set(&slow_model, &agile, &settings).unwrap().unsafe_set;
    let m = set_metrics(&slow, &lifted).unwrap();
    assert!(m.frac_a_in_b >= 0.98, "{m:?}");
}
