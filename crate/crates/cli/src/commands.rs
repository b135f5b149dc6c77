use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context as _, Result};
use clap::{ArgGroup, Args};
use serde::Serialize;
use shapesense::modal::Config;
use shapesense::optimizer::{
    brute_force_search, even_anchors, improvement_beta, planar_landscape, planar_table,
    planar_value, table_samples, PlanarDesign, PlanarObjective, GRID_STEP,
};
use shapesense::rodsim::{
    convergence_study, spatial_study as run_spatial, synthetic_spatial_truth, wrench_grid,
};
use shapesense::sensing::{
    forward_kinematics, lengths as string_lengths, solve_shape, Measurement, Reference,
};
use shapesense::sensitivity::{is_admissible, sample_admissible, WorkspaceSamples};
use shapesense::ShapeError;

use crate::config::{Robot, Space};
use crate::table::{check_width, indexed, num, read_rows, Sink};
use crate::{Context, Inadmissible};

fn seed(ctx: &Context, robot: &Robot) -> u64 {
    ctx.seed.unwrap_or(robot.config.seed)
}

fn read_coefficients(robot: &Robot, path: &Path) -> Result<Vec<Config>> {
    let rows = read_rows(path)?;
    check_width(path, &rows, robot.basis.dim(), "coefficient")?;
    Ok(rows)
}

fn check_admissible(robot: &Robot, rows: &[Config]) -> Result<()> {
    let Some(constraints) = &robot.constraints else {
        return Ok(());
    };
    let paths = robot.paths();
    for (i, c) in rows.iter().enumerate() {
        if !is_admissible(&robot.basis, constraints, &paths, c)? {
            return Err(Inadmissible(format!(
                "coefficient sample {i} violates the workspace constraints"
            ))
            .into());
        }
    }
    Ok(())
}

fn coefficient_header(n: usize) -> Vec<String> {
    let mut h = vec!["sample".to_string()];
    h.extend(indexed("c", n, "_per_m"));
    h
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    /// Robot description (JSON).
    pub robot: PathBuf,
    /// Coefficient rows (CSV).
    pub coefficients: PathBuf,
    /// Output poses (CSV); standard output if omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Evenly spaced arc-length points from base to tip.
    #[arg(long, default_value_t = 11)]
    pub points: usize,
}

pub fn shape(_ctx: &Context, a: ShapeArgs) -> Result<()> {
    let robot = Robot::load(&a.robot)?;
    ensure!(a.points >= 2, "--points must be at least 2");
    let rows = read_coefficients(&robot, &a.coefficients)?;
    check_admissible(&robot, &rows)?;
    let l = robot.length();
    let s: Vec<f64> = (0..a.points)
        .map(|k| l * k as f64 / (a.points - 1) as f64)
        .collect();
    let header: Vec<String> = ["sample", "s_m", "x_m", "y_m", "z_m", "qw", "qx", "qy", "qz"]
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut out = Sink::create(a.output.as_deref(), &header)?;
    for (i, c) in rows.iter().enumerate() {
        let poses = forward_kinematics(&robot.basis, c, &s, robot.config.n_steps)?;
        for (sk, pose) in s.iter().zip(&poses) {
            let q = pose.quaternion();
            let mut rec = vec![i.to_string(), num(*sk)];
            rec.extend(pose.position.iter().map(|v| num(*v)));
            rec.extend(q.iter().map(|v| num(*v)));
            out.row(rec)?;
        }
    }
    out.finish()
}

#[derive(Debug, Args)]
pub struct LengthsArgs {
    pub robot: PathBuf,
    pub coefficients: PathBuf,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Report absolute lengths instead of changes from the straight shape.
    #[arg(long)]
    pub absolute: bool,
}

fn reference(absolute: bool) -> Reference {
    if absolute {
        Reference::Absolute
    } else {
        Reference::DeltaFromStraight
    }
}

pub fn lengths(_ctx: &Context, a: LengthsArgs) -> Result<()> {
    let robot = Robot::load(&a.robot)?;
    let array = robot.array()?;
    let rows = read_coefficients(&robot, &a.coefficients)?;
    check_admissible(&robot, &rows)?;
    let mut header = vec!["sample".to_string()];
    header.extend(indexed("l", array.p(), "_m"));
    let mut out = Sink::create(a.output.as_deref(), &header)?;
    for (i, c) in rows.iter().enumerate() {
        let l = string_lengths(&array, &robot.basis, c, reference(a.absolute))?;
        let mut rec = vec![i.to_string()];
        rec.extend(l.iter().map(|v| num(*v)));
        out.row(rec)?;
    }
    out.finish()
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub robot: PathBuf,
    /// Measurement rows (CSV).
    pub measurements: PathBuf,
    /// Output coefficients (CSV); standard output if omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Solver diagnostics (JSON).
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Start each row from the previous row's solution.
    #[arg(long)]
    pub warm_start: bool,
    /// Measurements are absolute lengths rather than changes from straight.
    #[arg(long)]
    pub absolute: bool,
}

#[derive(Debug, Serialize)]
struct RowDiagnostics {
    row: usize,
    iterations: usize,
    residual: f64,
    aleph: f64,
    linear: bool,
}

#[derive(Debug, Serialize)]
struct Failure {
    row: usize,
    kind: String,
    message: String,
}

#[derive(Debug, Serialize)]
struct SolveReport {
    status: &'static str,
    warm_start: bool,
    rows: Vec<RowDiagnostics>,
    error: Option<Failure>,
}

/// Variant name of a solver error, e.g. `SingularDesign`.
fn kind(e: &ShapeError) -> String {
    let debug = format!("{e:?}");
    debug
        .split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or_default()
        .to_string()
}

pub fn solve(_ctx: &Context, a: SolveArgs) -> Result<()> {
    let robot = Robot::load(&a.robot)?;
    let array = robot.array()?;
    let rows = read_rows(&a.measurements)?;
    check_width(&a.measurements, &rows, array.p(), "measurement")?;
    let m = robot.basis.dim();
    let mut initial = Config::zeros(m);
    let mut solved = Vec::new();
    let mut report = SolveReport {
        status: "ok",
        warm_start: a.warm_start,
        rows: Vec::new(),
        error: None,
    };
    let mut failure = None;
    for (i, values) in rows.into_iter().enumerate() {
        let measurement = Measurement::new(values, reference(a.absolute));
        match solve_shape(&array, &robot.basis, &measurement, &initial) {
            Ok(sol) => {
                report.rows.push(RowDiagnostics {
                    row: i,
                    iterations: sol.diagnostics.iterations,
                    residual: sol.diagnostics.residual,
                    aleph: sol.diagnostics.aleph,
                    linear: sol.diagnostics.linear,
                });
                if a.warm_start {
                    initial = sol.c.clone();
                }
                solved.push(sol.c);
            }
            Err(e) => {
                report.status = "failed";
                report.error = Some(Failure {
                    row: i,
                    kind: kind(&e),
                    message: e.to_string(),
                });
                failure = Some((i, e));
                break;
            }
        }
    }
    if let Some(path) = &a.diagnostics {
        let text = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some((i, e)) = failure {
        return Err(anyhow::Error::new(e).context(format!("measurement sample {i}")));
    }
    let mut out = Sink::create(a.output.as_deref(), &coefficient_header(m))?;
    for (i, c) in solved.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(c.iter().map(|v| num(*v)));
        out.row(rec)?;
    }
    out.finish()
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("study").required(true).args(["table1", "table2", "convergence"])))]
pub struct PlanarArgs {
    /// Robot description; needed for the full-map table and the convergence study.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Anchor table maximizing the configuration-space index.
    #[arg(long)]
    pub table1: bool,
    /// Anchor table maximizing the full-map index at the tip.
    #[arg(long)]
    pub table2: bool,
    /// Tip error of elastic-rod shapes against the number of strings.
    #[arg(long)]
    pub convergence: bool,
    /// Segment length for the first table when no config is given.
    #[arg(long, default_value_t = 1.0)]
    pub length: f64,
    /// Workspace samples for the full-map table.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Wrench grid size per axis for the convergence study.
    #[arg(long, default_value_t = 10)]
    pub wrenches: usize,
    /// Largest tip force (N).
    #[arg(long, default_value_t = 60.0)]
    pub max_force: f64,
    /// Largest tip moment (N·m).
    #[arg(long, default_value_t = 6.0)]
    pub max_moment: f64,
    /// Largest string count in the convergence study.
    #[arg(long, default_value_t = 4)]
    pub max_strings: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn table_header(value: &str) -> Vec<String> {
    [
        "r1_over_L",
        "r2_over_L",
        "sa1_over_L",
        "sa2_over_L",
        value,
        "beta_pct",
    ]
    .iter()
    .map(|h| h.to_string())
    .collect()
}

pub fn planar_study(ctx: &Context, a: PlanarArgs) -> Result<()> {
    let robot = a.config.as_ref().map(|p| Robot::load(p)).transpose()?;
    if a.table1 {
        let length = robot.as_ref().map_or(a.length, Robot::length);
        ensure!(length > 0.0, "--length must be positive");
        let rows = planar_table(length, &PlanarObjective::ConfigSpace)?;
        let mut out = Sink::create(a.output.as_deref(), &table_header("aleph_config_m2"))?;
        for r in rows {
            out.row(
                [
                    r.radii[0],
                    r.radii[1],
                    r.anchors[0],
                    r.anchors[1],
                    r.value,
                    r.beta,
                ]
                .map(num),
            )?;
        }
        return out.finish();
    }
    let robot = robot.context("--config is required for this study")?;
    if a.table2 {
        let l = robot.length();
        let samples = table_samples(l, robot.constraints()?, a.samples, seed(ctx, &robot))?;
        let objective = PlanarObjective::FullMap {
            samples: &samples,
            s: l,
            c_ell: robot.c_ell()?,
            n_steps: robot.config.n_steps,
        };
        let rows = planar_table(l, &objective)?;
        let mut out = Sink::create(a.output.as_deref(), &table_header("aleph_full_tip"))?;
        for r in rows {
            out.row(
                [
                    r.radii[0],
                    r.radii[1],
                    r.anchors[0],
                    r.anchors[1],
                    r.value,
                    r.beta,
                ]
                .map(num),
            )?;
        }
        return out.finish();
    }
    ensure!(
        a.wrenches >= 1 && a.max_strings >= 1,
        "--wrenches and --max-strings must be positive"
    );
    let rod = robot.rod()?;
    let wrenches = wrench_grid(a.max_force, a.max_moment, a.wrenches);
    let counts: Vec<usize> = (1..=a.max_strings).collect();
    let rows = convergence_study(&rod, &wrenches, &counts, robot.config.n_steps)?;
    let header: Vec<String> = [
        "p",
        "mean_tip_error_pct_L",
        "max_tip_error_pct_L",
        "max_tip_rotation_error_rad",
        "aleph_config_m2",
        "anchors_over_L",
    ]
    .iter()
    .map(|h| h.to_string())
    .collect();
    let mut out = Sink::create(a.output.as_deref(), &header)?;
    for r in rows {
        let anchors: Vec<String> = r.anchors.iter().map(|v| num(*v)).collect();
        out.row([
            r.p.to_string(),
            num(r.mean()),
            num(r.max()),
            num(r.max_rotation()),
            num(r.aleph),
            anchors.join(";"),
        ])?;
    }
    out.finish()
}

#[derive(Debug, Args)]
pub struct RoutingArgs {
    pub robot: PathBuf,
    /// Design space (JSON).
    pub space: PathBuf,
    /// Ranked designs (CSV).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Override the workspace sample count.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Keep only the best designs in the CSV.
    #[arg(long)]
    pub top: Option<usize>,
}

pub fn routing_opt(ctx: &Context, a: RoutingArgs) -> Result<()> {
    let robot = Robot::load(&a.robot)?;
    let space = Space::load(&a.space, &robot)?;
    let n = a.samples.unwrap_or(space.samples);
    ensure!(n > 0, "--samples must be positive");
    let samples = sample_admissible(
        &robot.basis,
        robot.constraints()?,
        &space.space.candidate_paths(),
        n,
        seed(ctx, &robot),
    )?;
    let outcome = brute_force_search(
        &space.space,
        &robot.template(),
        &robot.basis,
        &samples,
        robot.c_ell()?,
        robot.config.n_steps,
    )?;
    println!("{} designs evaluated", outcome.evaluated);
    let feasible = outcome.ranked.iter().filter(|r| !r.report.singular).count();
    println!("{feasible} designs above the singularity threshold");
    for (k, s) in space.space.s_obj.iter().enumerate() {
        let best = outcome
            .ranked
            .iter()
            .filter(|r| !r.report.singular)
            .max_by(|x, y| {
                x.objective(k)
                    .total_cmp(&y.objective(k))
                    .then(y.design.id.cmp(&x.design.id))
            });
        if let Some(b) = best {
            let values: Vec<String> = b
                .report
                .aleph_full
                .iter()
                .map(|(s, v)| format!("{v:.3e} at {s:.4} m"))
                .collect();
            println!(
                "best at s = {s:.4} m: design {} ({})",
                b.design.id,
                values.join(", ")
            );
        }
    }

    let Some(path) = &a.output else {
        return Ok(());
    };
    let strings = space.space.strings.len();
    let mut header = vec!["rank".to_string(), "id".to_string()];
    header.extend(indexed("anchor", strings, "_m"));
    header.extend([
        "n_omega".to_string(),
        "twist_rate_rad_per_m".to_string(),
        "aleph_config_m2".to_string(),
    ]);
    header.extend(
        space
            .space
            .s_obj
            .iter()
            .map(|s| format!("aleph_full_at_{s:.4}_m")),
    );
    header.push("singular".to_string());
    let mut out = Sink::create(Some(path), &header)?;
    let keep = a.top.unwrap_or(outcome.ranked.len());
    for (rank, r) in outcome.ranked.iter().take(keep).enumerate() {
        let mut rec = vec![(rank + 1).to_string(), r.design.id.to_string()];
        rec.extend(r.design.anchors.iter().map(|v| num(*v)));
        rec.push(r.design.n_omega.map_or(String::new(), |n| n.to_string()));
        rec.push(num(r.design.twist_rate));
        rec.push(num(r.report.aleph_config));
        rec.extend(r.report.aleph_full.iter().map(|(_, v)| num(*v)));
        rec.push(r.report.singular.to_string());
        out.row(rec)?;
    }
    out.finish()
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Robot description; needed for the full-map objective.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Free string radii as fractions of L, e.g. `0.1,-0.2`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, -0.1], allow_negative_numbers = true)]
    pub radii: Vec<f64>,
    /// Anchor grid spacing as a fraction of L.
    #[arg(long, default_value_t = GRID_STEP)]
    pub step: f64,
    /// Map the full-map index at the tip instead of the configuration-space index.
    #[arg(long)]
    pub full_map: bool,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Segment length when no config is given.
    #[arg(long, default_value_t = 1.0)]
    pub length: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn sensitivity_map(ctx: &Context, a: MapArgs) -> Result<()> {
    let robot = a.config.as_ref().map(|p| Robot::load(p)).transpose()?;
    let l = robot.as_ref().map_or(a.length, Robot::length);
    ensure!(l > 0.0, "--length must be positive");
    ensure!(a.radii.len() == 2, "--radii takes exactly two values");
    let design = PlanarDesign::new(l, a.radii.iter().map(|r| r * l).collect());
    design.validate()?;
    let samples: WorkspaceSamples;
    let (objective, column) = if a.full_map {
        let robot = robot
            .as_ref()
            .context("--config is required for --full-map")?;
        samples = table_samples(l, robot.constraints()?, a.samples, seed(ctx, robot))?;
        let objective = PlanarObjective::FullMap {
            samples: &samples,
            s: l,
            c_ell: robot.c_ell()?,
            n_steps: robot.config.n_steps,
        };
        (objective, "aleph_full_tip")
    } else {
        (PlanarObjective::ConfigSpace, "aleph_config_m2")
    };
    let land = planar_landscape(&design, &objective, a.step)?;
    let baseline = planar_value(&design, &objective, &even_anchors(&design))?;
    eprintln!(
        "{} x {} grid; evenly spaced anchors give {baseline:.4e}",
        land.axis.len(),
        land.axis.len()
    );
    let header: Vec<String> = ["sa1_over_L", "sa2_over_L", column, "beta_pct"]
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut out = Sink::create(a.output.as_deref(), &header)?;
    for (i, x) in land.axis.iter().enumerate() {
        for (j, y) in land.axis.iter().enumerate() {
            let v = land.values[(i, j)];
            let beta = if baseline > 0.0 {
                improvement_beta(v, baseline)?
            } else {
                f64::NAN
            };
            out.row([num(*x), num(*y), num(v), num(beta)])?;
        }
    }
    out.finish()
}

#[derive(Debug, Args)]
pub struct SpatialArgs {
    pub robot: PathBuf,
    /// Number of synthetic shapes.
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    /// Arc lengths (m) at which poses are scored; the tip if omitted.
    #[arg(long, value_delimiter = ',')]
    pub at: Vec<f64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn spatial_study(ctx: &Context, a: SpatialArgs) -> Result<()> {
    let robot = Robot::load(&a.robot)?;
    ensure!(a.cases > 0, "--cases must be positive");
    let array = robot.array()?;
    let l = robot.length();
    let s_eval = if a.at.is_empty() {
        vec![l]
    } else {
        a.at.clone()
    };
    if let Some(s) = s_eval.iter().find(|s| !(0.0..=l).contains(*s)) {
        bail!("--at {s} lies outside [0, {l}]");
    }
    let c_ell = robot.c_ell()?;
    let cases = synthetic_spatial_truth(
        &robot.truth_basis,
        &array,
        robot.constraints()?,
        a.cases,
        seed(ctx, &robot),
    )?;
    let results = run_spatial(
        &robot.truth_basis,
        &cases,
        &array,
        &robot.basis,
        &s_eval,
        c_ell,
        robot.config.n_steps,
    )?;
    let header: Vec<String> = [
        "case",
        "s_m",
        "iterations",
        "position_error_pct_L",
        "rotation_error_rad",
        "normalized_error_sqrt_m",
    ]
    .iter()
    .map(|h| h.to_string())
    .collect();
    let mut out = Sink::create(a.output.as_deref(), &header)?;
    let mut worst = 0.0f64;
    for (i, r) in results.iter().enumerate() {
        for (s, m) in s_eval.iter().zip(&r.metrics) {
            worst = worst.max(m.e_p);
            out.row([
                i.to_string(),
                num(*s),
                r.iterations.to_string(),
                num(m.e_p),
                num(m.theta_e),
                num(m.e_n),
            ])?;
        }
    }
    out.finish()?;
    eprintln!(
        "{} cases; worst position error {worst:.3} % of L",
        results.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kind_is_the_variant_name() {
        assert_eq!(
            kind(&ShapeError::SingularDesign {
                aleph: 0.0,
                ratio: 1.0
            }),
            "SingularDesign"
        );
        assert_eq!(kind(&ShapeError::EmptySamples), "EmptySamples");
        assert_eq!(kind(&ShapeError::Invalid("x".into())), "Invalid");
    }
}
