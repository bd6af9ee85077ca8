use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use reachkit::dynamics::{ControlAffineModel, ModelPreset};
use reachkit::eval::{classification_report, summarize, transfer_experiment, ClassificationReport, Summary, TransferReport};
use reachkit::grid::{BoolMask, Grid3};
use reachkit::icl::{run_icl_with_expert, solve_tasks, starts_inside, IclHistory};
use reachkit::io::{self, BrtSidecar, ConstraintSidecar};
use reachkit::reachability::{failure_sdf, solve_brt, BrtResult};
use reachkit::tasks::{empirical_visitation, rollout, soft_cvi, TabularMdp, TrajectoryRecord, VisitationField};

use crate::config::{derive_seed, splitmix64, RunConfig, Stage};
use crate::exit::{CliError, ExitKind};
use crate::svg::{slice_name, slice_svg, Layer};

pub type CmdResult = Result<(), CliError>;

/// Minimum learner-plus-expert density for a cell to count as visited.
pub const SUPPORT_DENSITY: f64 = 1e-6;

#[derive(Debug, Serialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub stages: Vec<StageTiming>,
    pub artifacts: Vec<String>,
}

/// Collects artifacts and timings while a subcommand runs.
pub struct Run {
    out: PathBuf,
    manifest: RunManifest,
    clock: Instant,
}

impl Run {
    pub fn start(command: &str, config: &RunConfig, out: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out)
            .map_err(|e| CliError::input(format!("cannot create output directory {}: {e}", out.display())))?;
        Ok(Self {
            out: out.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: config.seed,
                config: config.clone(),
                stages: Vec::new(),
                artifacts: Vec::new(),
            },
            clock: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn record(&mut self, name: &str) -> PathBuf {
        self.manifest.artifacts.push(name.to_string());
        self.path(name)
    }

    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.manifest.stages.push(StageTiming { name: name.to_string(), seconds: (now - self.clock).as_secs_f64() });
        self.clock = now;
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CmdResult {
        io::write_json(self.record(name), value)?;
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> CmdResult {
        std::fs::write(self.record(name), text)?;
        Ok(())
    }

    pub fn field(&mut self, name: &str, field: &reachkit::grid::ScalarField) -> CmdResult {
        io::write_field(self.record(name), field)?;
        Ok(())
    }

    pub fn mask(&mut self, name: &str, mask: &BoolMask) -> CmdResult {
        io::write_mask(self.record(name), mask)?;
        Ok(())
    }

    pub fn finish(self) -> CmdResult {
        let path = self.out.join(format!("manifest_{}.json", self.manifest.command));
        io::write_json(path, &self.manifest)?;
        Ok(())
    }
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::input(format!("missing input artifact {}", path.display())))
    }
}

fn read_mask_checked(path: &Path, grid: &Grid3) -> Result<BoolMask, CliError> {
    let mask = io::read_mask(path).map_err(|e| CliError::from(e).context(format!("reading {}", path.display())))?;
    ensure_grid(path, mask.grid(), grid)?;
    Ok(mask)
}

fn read_field_checked(path: &Path, grid: &Grid3) -> Result<reachkit::grid::ScalarField, CliError> {
    let field = io::read_field(path).map_err(|e| CliError::from(e).context(format!("reading {}", path.display())))?;
    ensure_grid(path, field.grid(), grid)?;
    Ok(field)
}

fn ensure_grid(path: &Path, found: &Grid3, expected: &Grid3) -> Result<(), CliError> {
    if found != expected {
        return Err(CliError::new(
            ExitKind::Mismatch,
            anyhow::anyhow!("{} has grid {:?}, expected {:?}", path.display(), found.shape(), expected.shape()),
        ));
    }
    Ok(())
}

fn write_slices(run: &mut Run, config: &RunConfig, prefix: &str, layers: &[Layer]) -> CmdResult {
    let grid = config.grid3();
    for &theta in &config.output.slices {
        let svg = slice_svg(&grid, theta, &config.obstacle, layers);
        run.text(&slice_name(prefix, theta), &svg)?;
    }
    Ok(())
}

fn solve(config: &RunConfig, model: &ControlAffineModel) -> Result<BrtResult, CliError> {
    Ok(solve_brt(model, &failure_sdf(&config.obstacle, &config.grid3()), &config.solver)?)
}

pub fn cmd_brt(config: &RunConfig, out: &Path) -> CmdResult {
    let mut run = Run::start("brt", config, out)?;
    let brt = solve(config, &config.model())?;
    run.stage("solve");
    run.field("value.vfld", &brt.value)?;
    run.mask("mask.vfld", &brt.unsafe_set)?;
    run.json(
        "brt.json",
        &BrtSidecar {
            model: config.model.name(),
            iterations: brt.iterations,
            residual: brt.residual,
            converged: brt.converged,
            unsafe_cells: brt.unsafe_set.count(),
            total_cells: brt.unsafe_set.bits().len(),
        },
    )?;
    write_slices(&mut run, config, "slice", &[Layer { mask: &brt.unsafe_set, fill: "#f4a6a6", stroke: "none" }])?;
    run.stage("write");
    run.finish()?;
    if !brt.converged {
        return Err(CliError::new(
            ExitKind::NonConvergence,
            anyhow::anyhow!("solver stopped after {} iterations with residual {:.3e}", brt.iterations, brt.residual),
        ));
    }
    Ok(())
}

/// The tube used to vet task starts: `mask.vfld` from a previous `brt` run
/// if present, otherwise solved now.
fn tube_for(config: &RunConfig, out: &Path) -> Result<BoolMask, CliError> {
    let path = out.join("mask.vfld");
    if path.exists() {
        read_mask_checked(&path, &config.grid3())
    } else {
        Ok(solve(config, &config.model())?.unsafe_set)
    }
}

fn check_starts(mdp: &TabularMdp, config: &RunConfig, tube: &BoolMask) -> CmdResult {
    let bad = starts_inside(mdp, &config.task_list(), tube)?;
    if !bad.is_empty() {
        return Err(CliError::new(ExitKind::Infeasible, anyhow::anyhow!("task starts inside the tube: {bad:?}")));
    }
    Ok(())
}

/// Expert policies against the failure set, their exact aggregate density
/// and seeded rollouts.
fn expert_stage(config: &RunConfig, mdp: &TabularMdp) -> Result<(VisitationField, Vec<TrajectoryRecord>), CliError> {
    let tasks = config.task_list();
    let failure = config.obstacle.failure_mask(&mdp.grid);
    let density = solve_tasks(mdp, &tasks, &failure, config.mdp.penalty, config.mdp.temperature)?;
    let base = derive_seed(config.seed, Stage::Rollouts);
    let per_task = config.tasks.rollouts_per_task;
    let mut records = Vec::new();
    for task in &tasks {
        if per_task == 0 {
            break;
        }
        let sol = soft_cvi(mdp, task, &failure, config.mdp.penalty, config.mdp.temperature)?;
        for r in 0..per_task {
            let seed = splitmix64(base ^ (task.id * per_task + r) as u64);
            records.extend(rollout(mdp, &sol.policy, task, seed)?);
        }
    }
    Ok((density, records))
}

pub fn cmd_demos(config: &RunConfig, out: &Path) -> CmdResult {
    let mut run = Run::start("demos", config, out)?;
    let mdp = TabularMdp::new(config.grid3(), config.model(), config.mdp)?;
    check_starts(&mdp, config, &tube_for(config, out)?)?;
    run.stage("setup");
    let (density, records) = expert_stage(config, &mdp)?;
    run.stage("experts");
    run.json("tasks.json", &config.task_list())?;
    io::write_jsonl(run.record("demos.jsonl"), &records)?;
    run.field("expert_density.vfld", &density.density)?;
    run.stage("write");
    run.finish()
}

/// Expert density for learning: explicit demonstrations, else the exact
/// density from `demos`, else the logged trajectories.
fn load_expert(config: &RunConfig, out: &Path, demos: Option<&Path>) -> Result<VisitationField, CliError> {
    let grid = config.grid3();
    if let Some(path) = demos {
        require(path)?;
        let records: Vec<TrajectoryRecord> = io::read_jsonl(path)?;
        return Ok(empirical_visitation(&grid, &records)?);
    }
    let exact = out.join("expert_density.vfld");
    if exact.exists() {
        return Ok(VisitationField { density: read_field_checked(&exact, &grid)? });
    }
    let logged = out.join("demos.jsonl");
    require(&logged).map_err(|e| e.context("run `demos` first or pass --demos"))?;
    let records: Vec<TrajectoryRecord> = io::read_jsonl(&logged)?;
    Ok(empirical_visitation(&grid, &records)?)
}

fn run_icl(config: &RunConfig, mdp: &TabularMdp, expert: VisitationField) -> Result<IclHistory, CliError> {
    Ok(run_icl_with_expert(&config.icl_config(), mdp, expert)?)
}

pub fn cmd_icl(config: &RunConfig, out: &Path, demos: Option<&Path>) -> CmdResult {
    let expert = load_expert(config, out, demos)?;
    let mut run = Run::start("icl", config, out)?;
    let mdp = TabularMdp::new(config.grid3(), config.model(), config.mdp)?;
    run.stage("setup");
    let history = run_icl(config, &mdp, expert)?;
    run.stage("learn");
    for (n, (c, learner)) in history.constraints.iter().zip(&history.learner_densities).enumerate() {
        let epoch = n + 1;
        run.field(&format!("constraint_epoch_{epoch}.vfld"), &c.values)?;
        run.json(
            &format!("constraint_epoch_{epoch}.json"),
            &ConstraintSidecar { threshold: c.threshold, epsilon: config.icl.epsilon, epoch },
        )?;
        run.field(&format!("learner_density_epoch_{epoch}.vfld"), &learner.density)?;
    }
    run.json("icl_metrics.json", &history.metrics)?;
    run.stage("write");
    run.finish()
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelReports {
    pub full_grid: ClassificationReport,
    pub visited_support: ClassificationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalMetrics {
    pub unsafe_cells: usize,
    pub support_cells: usize,
    pub vs_brt: LabelReports,
    pub vs_failure: LabelReports,
}

fn evaluate(predicted: &BoolMask, brt: &BoolMask, failure: &BoolMask, support: &BoolMask) -> Result<EvalMetrics, CliError> {
    let both = |labels: &BoolMask| -> Result<LabelReports, CliError> {
        Ok(LabelReports {
            full_grid: classification_report(predicted, labels, None)?,
            visited_support: classification_report(predicted, labels, Some(support))?,
        })
    };
    Ok(EvalMetrics {
        unsafe_cells: predicted.count(),
        support_cells: support.count(),
        vs_brt: both(brt)?,
        vs_failure: both(failure)?,
    })
}

fn support_of(expert: &VisitationField, learners: &[VisitationField]) -> Result<BoolMask, CliError> {
    let mut h = IclHistory::new(expert.clone());
    h.learner_densities = learners.to_vec();
    Ok(h.visited_support(SUPPORT_DENSITY)?)
}

pub fn cmd_eval(config: &RunConfig, out: &Path, seeds: &[u64]) -> CmdResult {
    if !seeds.is_empty() {
        return eval_seeds(config, out, seeds);
    }
    let grid = config.grid3();
    let epochs = config.icl.epochs;
    let constraint_path = out.join(format!("constraint_epoch_{epochs}.vfld"));
    let mask_path = out.join("mask.vfld");
    let expert_path = out.join("expert_density.vfld");
    for p in [&constraint_path, &mask_path, &expert_path] {
        require(p)?;
    }
    let sidecar: ConstraintSidecar = io::read_json(out.join(format!("constraint_epoch_{epochs}.json")))?;
    let constraint = read_field_checked(&constraint_path, &grid)?;
    let brt = read_mask_checked(&mask_path, &grid)?;
    let expert = VisitationField { density: read_field_checked(&expert_path, &grid)? };
    let mut learners = Vec::new();
    for n in 1..=epochs {
        let p = out.join(format!("learner_density_epoch_{n}.vfld"));
        require(&p)?;
        learners.push(VisitationField { density: read_field_checked(&p, &grid)? });
    }
    let mut run = Run::start("eval", config, out)?;
    let predicted = constraint.superlevel_set(sidecar.threshold);
    let failure = config.obstacle.failure_mask(&grid);
    let support = support_of(&expert, &learners)?;
    let metrics = evaluate(&predicted, &brt, &failure, &support)?;
    run.stage("score");
    run.json("metrics.json", &metrics)?;
    write_slices(
        &mut run,
        config,
        "overlay",
        &[
            Layer { mask: &brt, fill: "#f4a6a6", stroke: "none" },
            Layer { mask: &predicted, fill: "none", stroke: "#1f4fd1" },
        ],
    )?;
    run.stage("write");
    run.finish()
}

#[derive(Debug, Serialize)]
struct SeedRun {
    seed: u64,
    metrics: EvalMetrics,
}

#[derive(Debug, Serialize)]
struct SeedSummary {
    seeds: Vec<u64>,
    runs: Vec<SeedRun>,
    /// `"<labels>.<restriction>.<score>"` → mean and standard deviation.
    summary: std::collections::BTreeMap<String, Summary>,
}

/// The whole pipeline once per seed, scored and aggregated.
fn eval_seeds(config: &RunConfig, out: &Path, seeds: &[u64]) -> CmdResult {
    let mut run = Run::start("eval", config, out)?;
    let grid = config.grid3();
    let model = config.model();
    let brt = solve(config, &model)?.unsafe_set;
    let failure = config.obstacle.failure_mask(&grid);
    let mdp = TabularMdp::new(grid, model, config.mdp)?;
    run.stage("setup");
    let mut runs = Vec::new();
    for &seed in seeds {
        let cfg = config.clone().with_seed(Some(seed));
        check_starts(&mdp, &cfg, &brt)?;
        let tasks = cfg.task_list();
        let expert = solve_tasks(&mdp, &tasks, &failure, cfg.mdp.penalty, cfg.mdp.temperature)?;
        let history = run_icl(&cfg, &mdp, expert)?;
        let predicted = history.final_constraint().expect("at least one epoch").unsafe_mask();
        let support = history.visited_support(SUPPORT_DENSITY)?;
        runs.push(SeedRun { seed, metrics: evaluate(&predicted, &brt, &failure, &support)? });
        run.stage(&format!("seed_{seed}"));
    }
    let mut summary = std::collections::BTreeMap::new();
    type Pick = fn(&EvalMetrics) -> &LabelReports;
    let labels: [(&str, Pick); 2] = [("vs_brt", |m| &m.vs_brt), ("vs_failure", |m| &m.vs_failure)];
    for (label, pick) in labels {
        for restriction in ["full_grid", "visited_support"] {
            let reports: Vec<&ClassificationReport> = runs
                .iter()
                .map(|r| {
                    let l = pick(&r.metrics);
                    if restriction == "full_grid" { &l.full_grid } else { &l.visited_support }
                })
                .collect();
            type Score = fn(&ClassificationReport) -> f64;
            let scores: [(&str, Score); 5] = [
                ("accuracy", |r| r.accuracy),
                ("precision", |r| r.precision),
                ("recall", |r| r.recall),
                ("f1", |r| r.f1),
                ("iou", |r| r.iou),
            ];
            for (name, f) in scores {
                let values: Vec<f64> = reports.iter().map(|r| f(r)).collect();
                summary.insert(format!("{label}.{restriction}.{name}"), summarize(&values));
            }
        }
    }
    run.json("metrics_seeds.json", &SeedSummary { seeds: seeds.to_vec(), runs, summary })?;
    run.finish()
}

#[derive(Debug, Serialize)]
struct Scenario {
    name: String,
    report: Option<TransferReport>,
    error: Option<String>,
    /// `|R_transferred − R_own| / |R_own|` on mean returns.
    relative_return_gap: Option<f64>,
    conservative: Option<bool>,
}

/// Relative gap above which a transferred constraint counts as conservative.
pub const CONSERVATIVE_GAP: f64 = 0.05;

pub fn cmd_transfer(config: &RunConfig, out: &Path) -> CmdResult {
    use ModelPreset::{Agile, NonAgile, UltraAgile};
    let mut run = Run::start("transfer", config, out)?;
    let mut tubes = std::collections::HashMap::new();
    for p in ModelPreset::ALL {
        tubes.insert(p, solve(config, &p.model())?.unsafe_set);
    }
    run.stage("tubes");
    let scenarios = [
        ("agile_to_less_agile", NonAgile, UltraAgile),
        ("non_agile_to_more_agile", UltraAgile, NonAgile),
        ("moderate_to_non_agile", NonAgile, Agile),
    ];
    let tasks = config.task_list();
    let mut blocks = Vec::new();
    for (name, target, source) in scenarios {
        let result = transfer_experiment(
            source.name(),
            target.name(),
            &target.model(),
            &tubes[&source],
            &tasks,
            &config.obstacle,
            &config.mdp,
            &config.solver,
        );
        blocks.push(match result {
            Ok(report) => {
                let own = report.mean_return_own();
                let gap = (report.mean_return_transferred() - own).abs() / own.abs().max(f64::MIN_POSITIVE);
                Scenario {
                    name: name.to_string(),
                    report: Some(report),
                    error: None,
                    relative_return_gap: Some(gap),
                    conservative: Some(gap > CONSERVATIVE_GAP),
                }
            }
            Err(e @ reachkit::Error::Infeasible { .. }) => Scenario {
                name: name.to_string(),
                report: None,
                error: Some(e.to_string()),
                relative_return_gap: None,
                conservative: None,
            },
            Err(e) => return Err(e.into()),
        });
        run.stage(name);
    }
    let all_failed = blocks.iter().all(|b| b.report.is_none());
    run.json("transfer.json", &blocks)?;
    run.finish()?;
    if all_failed {
        return Err(CliError::new(ExitKind::Infeasible, anyhow::anyhow!("every transfer scenario was infeasible")));
    }
    Ok(())
}
