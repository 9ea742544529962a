//! `latmg`: generate periodic voxel lattices, homogenize them with the
//! matrix-free multigrid solver, benchmark schedule/smoother combinations,
//! run SIMP inverse design, and produce dense ground truth for small grids.
//!
//! Exit codes: 0 success, 2 validation/usage error, 3 solver-flagged
//! non-convergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use latmg::cycles::{
    fmg_init, load_warm_start, CycleConfig, MgSolver, Schedule, SolveReport,
};
use latmg::fem::{element_kernel, Physics, DENSE_DOF_CAP};
use latmg::homog::{
    build_loads, homogenize_dense_oracle, homogenize_with_warm_start, EffectiveTensor, HomogConfig,
    Interpolation,
};
use latmg::hierarchy::{auto_depth, build_hierarchy};
use latmg::simp::{optimize, Objective, SimpConfig};
use latmg::smooth::{SmootherConfig, SmootherKind};
use latmg::voxgeom::{
    generate_laminate, generate_random_density, generate_tpms, generate_tpms_with_volume_fraction,
    load_grid, save_grid, Axis, MaterialModel, TpmsKind, VoxelGrid,
};

#[derive(Parser)]
#[command(name = "latmg", version, about = "Periodic lattice homogenization via matrix-free multigrid")]
struct Cli {
    /// Worker threads for batch items and inner loops (capped by LATMG_THREADS).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Accepted for compatibility; results are bitwise deterministic in
    /// every execution mode, so this changes nothing.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhysicsArg {
    Elastic,
    Thermal,
}

impl From<PhysicsArg> for Physics {
    fn from(p: PhysicsArg) -> Self {
        match p {
            PhysicsArg::Elastic => Physics::Elasticity,
            PhysicsArg::Thermal => Physics::Thermal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    V,
    #[value(name = "half-v")]
    HalfV,
    Fmg,
    W,
    F,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::V => Schedule::V,
            ScheduleArg::HalfV => Schedule::HalfV,
            ScheduleArg::Fmg => Schedule::Fmg,
            ScheduleArg::W => Schedule::W,
            ScheduleArg::F => Schedule::F,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SmootherArg {
    Jacobi,
    Gs8,
    Sor,
    Cg,
    Pcg,
}

impl From<SmootherArg> for SmootherKind {
    fn from(s: SmootherArg) -> Self {
        match s {
            SmootherArg::Jacobi => SmootherKind::Jacobi,
            SmootherArg::Gs8 => SmootherKind::Gs8,
            SmootherArg::Sor => SmootherKind::Sor,
            SmootherArg::Cg => SmootherKind::Cg,
            SmootherArg::Pcg => SmootherKind::PcgJacobi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Gyroid,
    #[value(name = "schwarz-p")]
    SchwarzP,
    Diamond,
    Laminate,
    Solid,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
    Z,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
            AxisArg::Z => Axis::Z,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Young,
    Shear,
    Bulk,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Young => Objective::Young,
            ObjectiveArg::Shear => Objective::Shear,
            ObjectiveArg::Bulk => Objective::Bulk,
        }
    }
}

/// Solver knobs shared by homogenize/bench/optimize.
#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "v")]
    schedule: ScheduleArg,
    #[arg(long, value_enum, default_value = "gs8")]
    smoother: SmootherArg,
    /// Smoothing sweeps per level (one value, or comma-separated per level).
    #[arg(long, default_value = "2", value_delimiter = ',')]
    iters: Vec<usize>,
    /// Relaxation factor; defaults to 0.6 for Jacobi and 1.0 otherwise.
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_cycles: usize,
    /// Hierarchy depth; defaults to the deepest stack with coarsest N >= 4.
    #[arg(long)]
    levels: Option<usize>,
}

impl SolverArgs {
    fn cycle_config(&self) -> Result<CycleConfig> {
        let kind: SmootherKind = self.smoother.into();
        if self.iters.is_empty() {
            bail!("--iters needs at least one value");
        }
        let mk = |it: usize| {
            let mut cfg = SmootherConfig::new(kind, it);
            if let Some(omega) = self.omega {
                cfg = cfg.with_omega(omega);
            }
            cfg
        };
        let pre: Vec<SmootherConfig> = self.iters.iter().map(|&i| mk(i)).collect();
        let cfg = CycleConfig {
            schedule: self.schedule.into(),
            pre: pre.clone(),
            post: pre,
            coarsest: mk(10),
            max_cycles: self.max_cycles,
            tol: self.tol,
            divergence_guard: 1e12,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a voxel grid file.
    Gen {
        #[arg(value_enum)]
        kind: GenKind,
        /// Voxels per axis.
        n: usize,
        /// Level-set threshold (TPMS kinds).
        #[arg(long, allow_hyphen_values = true)]
        level: Option<f64>,
        /// Target volume fraction (TPMS via bisection, or random density).
        #[arg(long)]
        vf: Option<f64>,
        /// Solid layers (laminate).
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long, value_enum, default_value = "x")]
        axis: AxisArg,
        /// Seed for `random`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Physical period per axis.
        #[arg(long, num_args = 3, value_delimiter = ',', default_values_t = [1.0, 1.0, 1.0])]
        period: Vec<f64>,
        /// Material as E,nu,kappa.
        #[arg(long, num_args = 3, value_delimiter = ',', default_values_t = [1.0, 0.3, 1.0])]
        material: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the cell problems and report the effective tensor.
    Homogenize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "elastic")]
        physics: PhysicsArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Warm-start directory of level_<l>.gmtf files.
        #[arg(long)]
        warm_start: Option<PathBuf>,
        /// Interpret density values through SIMP interpolation.
        #[arg(long)]
        simp: bool,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit a one-line CSV record instead of JSON.
        #[arg(long)]
        csv: bool,
        /// Include wall-clock timing in the JSON output.
        #[arg(long)]
        timing: bool,
    },
    /// Sweep schedules x smoothers over a directory of grid files.
    Bench {
        /// Directory of .vox grid files.
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ScheduleArg::V])]
        schedules: Vec<ScheduleArg>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [SmootherArg::Gs8])]
        smoothers: Vec<SmootherArg>,
        #[arg(long, value_enum, default_value = "thermal")]
        physics: PhysicsArg,
        /// Cycles to run per combination.
        #[arg(long, default_value_t = 1)]
        cycles: usize,
        /// Initial guess: zero or an FMG cascade shared per geometry.
        #[arg(long, value_parser = ["zero", "fmg"], default_value = "fmg")]
        warm: String,
        #[arg(long, default_value = "2", value_delimiter = ',')]
        iters: Vec<usize>,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// SIMP inverse design toward an effective-modulus target.
    Optimize {
        /// Starting density grid; mutually exclusive with --random.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Start from seeded random densities at this resolution.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        objective: ObjectiveArg,
        #[arg(long, default_value_t = 0.3)]
        vf: f64,
        #[arg(long, default_value_t = 30)]
        iterations: usize,
        #[arg(long, default_value_t = 3.0)]
        penalization: f64,
        #[arg(long, default_value_t = 1.5)]
        filter_radius: f64,
        #[arg(long = "move", default_value_t = 0.2)]
        move_limit: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        levels: Option<usize>,
        /// Write a density snapshot every K iterations.
        #[arg(long, default_value_t = 10)]
        snapshot_every: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Dense-solve ground truth for small grids.
    Oracle {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "elastic")]
        physics: PhysicsArg,
        #[arg(long)]
        simp: bool,
        #[arg(long, default_value_t = DENSE_DOF_CAP)]
        dof_cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the active element/node coordinates of every hierarchy level.
    HierDump {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.jobs);
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads(jobs: Option<usize>) {
    let cap = std::env::var("LATMG_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    let threads = match (jobs, cap) {
        (Some(j), Some(c)) => Some(j.min(c)),
        (Some(j), None) => Some(j),
        (None, Some(c)) => Some(c),
        (None, None) => None,
    };
    if let Some(t) = threads {
        let t = t.max(1);
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        if t == 1 {
            latmg::parallel::set_parallel_enabled(false);
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen { kind, n, level, vf, layers, axis, seed, period, material, out } => {
            let grid = match kind {
                GenKind::Gyroid | GenKind::SchwarzP | GenKind::Diamond => {
                    let tpms = match kind {
                        GenKind::Gyroid => TpmsKind::Gyroid,
                        GenKind::SchwarzP => TpmsKind::SchwarzP,
                        _ => TpmsKind::Diamond,
                    };
                    match (level, vf) {
                        (Some(l), None) => generate_tpms(tpms, n, l)?,
                        (None, Some(v)) => generate_tpms_with_volume_fraction(tpms, n, v)?,
                        (None, None) => generate_tpms(tpms, n, 0.0)?,
                        (Some(_), Some(_)) => bail!("--level and --vf are mutually exclusive"),
                    }
                }
                GenKind::Laminate => {
                    let layers = layers.ok_or_else(|| anyhow!("laminate needs --layers"))?;
                    generate_laminate(n, axis.into(), layers)?
                }
                GenKind::Solid => generate_tpms(TpmsKind::Gyroid, n, f64::INFINITY)?,
                GenKind::Random => {
                    let v = vf.unwrap_or(0.5);
                    generate_random_density(n, seed, v)?
                }
            };
            let grid = with_period(grid, &period)?;
            let mat = MaterialModel { e: material[0], nu: material[1], kappa: material[2] };
            mat.validate()?;
            save_grid(&grid, &mat, &out)?;
            eprintln!(
                "wrote {} ({}^3, vf = {:.4})",
                out.display(),
                grid.resolution(),
                grid.volume_fraction()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Homogenize {
            input,
            physics,
            solver,
            warm_start,
            simp,
            out,
            csv,
            timing,
        } => {
            let file = load_grid(&input)?;
            let physics: Physics = physics.into();
            let cfg = HomogConfig {
                cycle: solver.cycle_config()?,
                levels: solver.levels,
                interpolation: interp(simp),
            };
            let warm = match &warm_start {
                Some(dir) => {
                    let levels = cfg.levels.unwrap_or_else(|| auto_depth(file.grid.resolution()));
                    let hierarchy = build_hierarchy(&file.grid, levels)?;
                    let (w, missing) =
                        load_warm_start(dir, &hierarchy, physics.dof(), physics.modes())?;
                    if !missing.is_empty() {
                        eprintln!("warning: warm-start levels {missing:?} missing; using zeros");
                    }
                    Some(w)
                }
                None => None,
            };
            let (tensor, report) =
                homogenize_with_warm_start(&file.grid, &file.material, physics, &cfg, warm.as_ref())?;
            let vf = file.grid.volume_fraction();
            let payload = render_result(&input, physics, &tensor, &report, vf, timing)?;
            if csv {
                let line = result_csv(&input, physics, &tensor, &report, vf);
                emit(out.as_deref(), &line)?;
            } else {
                emit(out.as_deref(), &payload)?;
            }
            if report.converged {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "non-convergence: r = {:.3e} after {} cycles",
                    report.history.last().copied().unwrap_or(f64::NAN),
                    report.cycles
                );
                Ok(ExitCode::from(3))
            }
        }

        Command::Bench {
            suite,
            schedules,
            smoothers,
            physics,
            cycles,
            warm,
            iters,
            omega,
            levels,
            out,
        } => {
            let physics: Physics = physics.into();
            let mut entries: Vec<PathBuf> = std::fs::read_dir(&suite)
                .with_context(|| format!("reading suite dir {}", suite.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map(|x| x == "vox").unwrap_or(false))
                .collect();
            entries.sort();
            if entries.is_empty() {
                bail!("suite dir {} holds no .vox files", suite.display());
            }
            let process = |path: &PathBuf| -> Result<Vec<String>> {
                let file = load_grid(path)?;
                let depth = levels.unwrap_or_else(|| auto_depth(file.grid.resolution()));
                let hierarchy = build_hierarchy(&file.grid, depth)?;
                let kernel = element_kernel(physics, &file.material, file.grid.element_size())?;
                let scales: Vec<f64> = hierarchy
                    .level(1)
                    .elements
                    .iter()
                    .map(|&e| file.grid.values()[e as usize])
                    .collect();
                let solver = MgSolver::new(hierarchy, kernel, scales)?;
                let f = build_loads(solver.finest_op())?;
                let mut rows = Vec::new();
                for &schedule in &schedules {
                    for &smoother in &smoothers {
                        let args = SolverArgs {
                            schedule,
                            smoother,
                            iters: iters.clone(),
                            omega,
                            tol: 1e-30, // run the full cycle budget
                            max_cycles: cycles,
                            levels,
                        };
                        let cfg = args.cycle_config()?;
                        let warm_start = match warm.as_str() {
                            "fmg" => Some(fmg_init(&solver, &f, &cfg)?),
                            _ => None,
                        };
                        let start = std::time::Instant::now();
                        let mut u = match warm_start.as_ref().and_then(|w| w.finest.clone()) {
                            Some(g) => g,
                            None => solver.finest_op().zeros_like(f.modes),
                        };
                        let r0 = solver.relative_residual(&u, &f)?;
                        for cycle in 0..cycles {
                            let w = if cycle == 0 { warm_start.as_ref() } else { None };
                            solver.run_cycle(cfg.schedule, &mut u, &f, w, &cfg)?;
                        }
                        let r = solver.relative_residual(&u, &f)?;
                        let seconds = start.elapsed().as_secs_f64();
                        rows.push(bench_csv_row(
                            path, physics, schedule, smoother, &iters, cycles, r0, r, seconds,
                        ));
                    }
                }
                Ok(rows)
            };
            // batch items in parallel, output in input order
            use rayon::prelude::*;
            let per_entry: Vec<Result<Vec<String>>> = entries.par_iter().map(process).collect();
            let mut rows = vec![bench_csv_header()];
            let mut any_nonfinite = false;
            for group in per_entry {
                for row in group? {
                    if row.contains("NaN") || row.contains("inf") {
                        any_nonfinite = true;
                    }
                    rows.push(row);
                }
            }
            std::fs::write(&out, rows.join("\n") + "\n")?;
            eprintln!("wrote {} ({} rows)", out.display(), rows.len() - 1);
            Ok(if any_nonfinite { ExitCode::from(3) } else { ExitCode::SUCCESS })
        }

        Command::Optimize {
            input,
            random,
            seed,
            objective,
            vf,
            iterations,
            penalization,
            filter_radius,
            move_limit,
            tol,
            levels,
            snapshot_every,
            out_dir,
        } => {
            let (grid, material) = match (input, random) {
                (Some(path), None) => {
                    let f = load_grid(&path)?;
                    (f.grid, f.material)
                }
                (None, Some(n)) => (generate_random_density(n, seed, vf)?, MaterialModel::default()),
                _ => bail!("exactly one of --input or --random is required"),
            };
            let cfg = SimpConfig {
                penalization,
                target_vf: vf,
                filter_radius,
                move_limit,
                max_iterations: iterations,
                seed,
                cycle: CycleConfig::default().with_tol(tol).with_max_cycles(300),
                levels,
                ..Default::default()
            };
            std::fs::create_dir_all(&out_dir)?;
            let snapshots_dir = out_dir.clone();
            let mat = material;
            let mut snapshot = move |iter: usize, g: &VoxelGrid| {
                if snapshot_every > 0 && iter % snapshot_every == 0 {
                    let p = snapshots_dir.join(format!("density_{iter:04}.vox"));
                    if let Err(e) = save_grid(g, &mat, &p) {
                        eprintln!("warning: snapshot {} failed: {e}", p.display());
                    }
                }
            };
            let run = optimize(&grid, &material, objective.into(), &cfg, Some(&mut snapshot))?;

            let mut csv = vec!["iter,objective,vf,max_drho,residual,pruned".to_string()];
            for r in &run.history {
                csv.push(format!(
                    "{},{:.12e},{:.8},{:.6e},{:.6e},{}",
                    r.iteration, r.objective, r.volume_fraction, r.max_density_change, r.residual, r.pruned
                ));
            }
            std::fs::write(out_dir.join("history.csv"), csv.join("\n") + "\n")?;
            save_grid(&run.grid, &material, &out_dir.join("final.vox"))?;
            eprintln!(
                "finished {} iterations, objective {:.6}",
                run.history.len(),
                run.final_objective
            );
            if run.completed {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("aborted: {}", run.abort_reason.as_deref().unwrap_or("unknown"));
                Ok(ExitCode::from(3))
            }
        }

        Command::Oracle { input, physics, simp, dof_cap, out } => {
            let file = load_grid(&input)?;
            let physics: Physics = physics.into();
            let tensor = homogenize_dense_oracle(
                &file.grid,
                &file.material,
                physics,
                interp(simp),
                dof_cap,
            )?;
            let payload = serde_json::to_string_pretty(&serde_json::json!({
                "input": input.display().to_string(),
                "physics": physics,
                "method": "dense_pseudo_inverse",
                "vf": file.grid.volume_fraction(),
                "tensor": tensor.rows(),
                "asymmetry": tensor.asymmetry,
                "moduli": moduli_json(&tensor)?,
            }))?;
            emit(out.as_deref(), &payload)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::HierDump { input, levels, out } => {
            let file = load_grid(&input)?;
            let depth = levels.unwrap_or_else(|| auto_depth(file.grid.resolution()));
            let hierarchy = build_hierarchy(&file.grid, depth)?;
            let mut dump = Vec::new();
            for level in hierarchy.levels() {
                let elements: Vec<[usize; 3]> =
                    (0..level.num_elements()).map(|e| level.element_coord(e)).collect();
                let nodes: Vec<[usize; 3]> =
                    (0..level.num_nodes()).map(|n| level.node_coord(n)).collect();
                dump.push(serde_json::json!({
                    "level": level.level,
                    "resolution": level.resolution,
                    "elements": elements,
                    "nodes": nodes,
                }));
            }
            let payload = serde_json::to_string_pretty(&serde_json::Value::Array(dump))?;
            emit(out.as_deref(), &payload)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn interp(simp: bool) -> Interpolation {
    if simp {
        Interpolation::Simp { penalization: 3.0, rho_min: 1e-5 }
    } else {
        Interpolation::Identity
    }
}

fn with_period(grid: VoxelGrid, period: &[f64]) -> Result<VoxelGrid> {
    if period == [1.0, 1.0, 1.0] {
        return Ok(grid);
    }
    Ok(VoxelGrid::new(
        grid.resolution(),
        [period[0], period[1], period[2]],
        grid.kind(),
        grid.values().to_vec(),
    )?)
}

fn moduli_json(tensor: &EffectiveTensor) -> Result<serde_json::Value> {
    if tensor.physics == Physics::Elasticity {
        let (e, g, k) = tensor.derived_moduli()?;
        Ok(serde_json::json!({ "E": e, "G": g, "K": k }))
    } else {
        Ok(serde_json::Value::Null)
    }
}

fn render_result(
    input: &Path,
    physics: Physics,
    tensor: &EffectiveTensor,
    report: &SolveReport,
    vf: f64,
    timing: bool,
) -> Result<String> {
    let mut report_json = serde_json::json!({
        "initial_residual": report.initial_residual,
        "history": report.history,
        "cycles": report.cycles,
        "converged": report.converged,
        "gauge_deviation": report.gauge_deviation,
    });
    if timing {
        report_json["wall_seconds"] = serde_json::json!(report.wall_seconds);
    }
    Ok(serde_json::to_string_pretty(&serde_json::json!({
        "input": input.display().to_string(),
        "physics": physics,
        "vf": vf,
        "tensor": tensor.rows(),
        "asymmetry": tensor.asymmetry,
        "moduli": moduli_json(tensor)?,
        "report": report_json,
    }))?)
}

/// CSV schema (frozen): input, physics, vf, r_final, cycles, converged,
/// then the row-major tensor entries (36 elastic, 9 thermal).
fn result_csv(
    input: &Path,
    physics: Physics,
    tensor: &EffectiveTensor,
    report: &SolveReport,
    vf: f64,
) -> String {
    let mut cols = vec![
        input.display().to_string(),
        match physics {
            Physics::Elasticity => "elastic".into(),
            Physics::Thermal => "thermal".into(),
        },
        format!("{vf:.8}"),
        format!("{:.6e}", report.history.last().copied().unwrap_or(f64::NAN)),
        report.cycles.to_string(),
        report.converged.to_string(),
    ];
    for row in tensor.rows() {
        for v in row {
            cols.push(format!("{v:.12e}"));
        }
    }
    cols.join(",")
}

/// Bench CSV schema (frozen column order).
fn bench_csv_header() -> String {
    "geometry,physics,schedule,smoother,iters,cycles,r_initial,r_final,seconds".into()
}

#[allow(clippy::too_many_arguments)]
fn bench_csv_row(
    path: &Path,
    physics: Physics,
    schedule: ScheduleArg,
    smoother: SmootherArg,
    iters: &[usize],
    cycles: usize,
    r0: f64,
    r: f64,
    seconds: f64,
) -> String {
    let schedule = match schedule {
        ScheduleArg::V => "v",
        ScheduleArg::HalfV => "half-v",
        ScheduleArg::Fmg => "fmg",
        ScheduleArg::W => "w",
        ScheduleArg::F => "f",
    };
    let smoother = match smoother {
        SmootherArg::Jacobi => "jacobi",
        SmootherArg::Gs8 => "gs8",
        SmootherArg::Sor => "sor",
        SmootherArg::Cg => "cg",
        SmootherArg::Pcg => "pcg",
    };
    let iters = iters.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";");
    format!(
        "{},{},{schedule},{smoother},{iters},{cycles},{r0:.6e},{r:.6e},{seconds:.6}",
        path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        match physics {
            Physics::Elasticity => "elastic",
            Physics::Thermal => "thermal",
        },
    )
}

fn emit(out: Option<&Path>, payload: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, format!("{payload}\n"))?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{payload}"),
    }
    Ok(())
}
