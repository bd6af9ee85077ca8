use reachkit::dynamics::ModelPreset;
use reachkit::eval::{classification_report, intersect_constraints, nesting_report, transfer_experiment, Restriction};
use reachkit::grid::{BoolMask, Grid3, ScalarField};
use reachkit::icl::ConstraintField;
use reachkit::reachability::{failure_sdf, solve_brt, Obstacle, SolverSettings};
use reachkit::tasks::{ring_tasks, soft_cvi, visitation_exact, MdpParams, TabularMdp};

fn grid() -> Grid3 {
    Grid3::square(4.0, 31, 31, 15).unwrap()
}

fn params() -> MdpParams {
    MdpParams { dt: 0.4, horizon: 30, ..MdpParams::default() }
}

#[test]
fn report_degenerate_cases() {
    let g = Grid3::square(1.0, 3, 3, 3).unwrap();
    let labels = BoolMask::from_fn(g, |s| s.x > 0.0);
    let same = classification_report(&labels, &labels, None).unwrap();
    assert_eq!((same.accuracy, same.precision, same.recall, same.f1, same.iou), (1.0, 1.0, 1.0, 1.0, 1.0));
    assert_eq!(same.restriction, Restriction::FullGrid);

    let none = classification_report(&BoolMask::empty(g), &labels, None).unwrap();
    assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));

    let other = Grid3::square(1.0, 4, 3, 3).unwrap();
    assert!(classification_report(&BoolMask::empty(other), &labels, None).is_err());
}

#[test]
fn nesting_of_identical_tubes_is_exact() {
    let brt = solve_brt(&ModelPreset::Agile.model(), &failure_sdf(&Obstacle::default(), &grid()), &SolverSettings::default()).unwrap();
    let report = nesting_report(&[("a", &brt), ("b", &brt), ("c", &brt)]).unwrap();
    for pair in &report.pairs {
        assert_eq!(pair.frac_smaller_in_larger, 1.0);
        assert_eq!(pair.cell_volume_ratio, 1.0);
        assert_eq!(pair.level_set_volume_ratio, 1.0);
    }
    assert!(!report.level_set_volumes_increasing());
}

#[test]
fn intersection_is_set_intersection() {
    let g = grid();
    let a = ConstraintField::new(ScalarField::from_fn(g, |s| (s.x * 1.3).sin() * 0.95), 0.6).unwrap();
    let b = ConstraintField::new(ScalarField::from_fn(g, |s| (s.y - s.theta).cos() * 0.9), 0.6).unwrap();
    let both = intersect_constraints(&[a.clone(), b.clone()]).unwrap();
    assert_eq!(both.unsafe_mask(), a.unsafe_mask().and(&b.unsafe_mask()).unwrap());
    assert_eq!(intersect_constraints(&[a.clone()]).unwrap(), a);

    let left = ConstraintField::new(ScalarField::from_fn(g, |s| if s.x < 0.0 { 1.0 } else { -1.0 }), 0.6).unwrap();
    let right = ConstraintField::new(ScalarField::from_fn(g, |s| if s.x > 0.0 { 1.0 } else { -1.0 }), 0.6).unwrap();
    assert!(intersect_constraints(&[left, right]).unwrap().unsafe_mask().is_empty());
    assert!(intersect_constraints(&[a.clone(), a.with_threshold(0.5)]).is_err());
}

#[test]
fn own_tube_transfers_without_loss() {
    let model = ModelPreset::NonAgile.model();
    let obstacle = Obstacle::default();
    let settings = SolverSettings::default();
    let own = solve_brt(&model, &failure_sdf(&obstacle, &grid()), &settings).unwrap();
    let tasks = ring_tasks(4, [0.0, 0.0], 3.0, 0.3, 2);
    let report = transfer_experiment("self", "non_agile", &model, &own.unsafe_set, &tasks, &obstacle, &params(), &settings).unwrap();
    assert!(report.infeasible.is_empty());
    for t in &report.per_task {
        assert!((t.return_transferred - t.return_own).abs() <= 1e-9);
        assert!(t.failure_mass_transferred >= 0.0 && t.failure_mass_own >= 0.0);
    }
    assert_eq!(report.containment_of_own, 1.0);
}

#[test]
fn wider_constraint_never_adds_failure_mass() {
    let model = ModelPreset::NonAgile.model();
    let obstacle = Obstacle::default();
    let settings = SolverSettings::default();
    let own = solve_brt(&model, &failure_sdf(&obstacle, &grid()), &settings).unwrap();
    let wider = own.unsafe_set.or(&BoolMask::from_fn(grid(), |s| s.x.hypot(s.y) < 1.6)).unwrap();
    let tasks = ring_tasks(4, [0.0, 0.0], 3.0, 0.3, 3);
    let report = transfer_experiment("wide", "non_agile", &model, &wider, &tasks, &obstacle, &params(), &settings).unwrap();

    let mdp = TabularMdp::new(grid(), model, params()).unwrap();
    let failure = obstacle.failure_mask(&grid());
    let empty = BoolMask::empty(grid());
    for t in &report.per_task {
        let task = tasks.iter().find(|k| k.id == t.task).unwrap();
        let free = soft_cvi(&mdp, task, &empty, params().penalty, params().temperature).unwrap();
        let free_mass = visitation_exact(&mdp, &free.policy, task).unwrap().mass_in(&failure);
        assert!(t.failure_mass_transferred <= free_mass + 1e-12, "task {}", t.task);
    }
}
