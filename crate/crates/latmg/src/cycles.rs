//! Multigrid schedules and the convergence driver.
//!
//! The V-cycle follows the classic recursion: pre-smooth, restrict the
//! residual, solve the coarse error equation, prolongate-and-correct,
//! post-smooth, with the coarsest level handled by a smoother budget rather
//! than a direct solve. The other schedules differ only in the recursion
//! tree. Level visits over a 3-level stack (`1` finest, `3` coarsest,
//! `o` = smoothing visit, `*` = coarsest budget):
//!
//! ```text
//!  V               W                     F                Half-V        FMG
//!  1 o     o       o         o          o        o        o    o        (rhs restricted to
//!  2  o   o         o   o   o            o   o  o          o  .          all levels first)
//!  3   *               *   *   *             *  *  *           *              * o *o o
//!                   (two chained          (F visit, then   (no post-     3->2: prolongate,
//!                    coarse visits)        V visit)         smoothing     V-cycle; 2->1:
//!                                                           on ascent,    prolongate,
//!                                                           one final     V-cycle
//!                                                           fine smooth)
//! ```
//!
//! - `V`: one recursive coarse visit per level.
//! - `W`: two chained recursive visits per level (the second continues from
//!   the first's coarse iterate).
//! - `F`: one F visit followed by one V visit per level.
//! - `Half-V`: pre-smoothing descent, coarsest solve, then a straight
//!   prolongate-and-correct ascent with a single post-smoothing pass at the
//!   finest level only.
//! - `FMG`: restrict the right-hand side to every level, solve the
//!   coarsest, then per level prolongate the coarse solution as the initial
//!   guess and run one V-cycle from that level down.
//!
//! A warm start supplies the finest-level initial guess and, per coarse
//! level, a correction that replaces the zero initialization of the first
//! coarse visit of the first cycle.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{galerkin_coarse_operator, EbeOperator, ElementKernel};
use crate::field::Field;
use crate::hierarchy::GmgHierarchy;
use crate::smooth::{color_nodes, smooth, ColorPartition, SmootherConfig, SmootherKind};
use crate::transfer::{build_stencil, TransferStencil};

/// Recursion shape of one multigrid cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    V,
    HalfV,
    Fmg,
    W,
    F,
}

/// Cycle and convergence parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleConfig {
    pub schedule: Schedule,
    /// Pre-smoother per level (1-based index minus one); the last entry
    /// repeats for deeper levels.
    pub pre: Vec<SmootherConfig>,
    /// Post-smoother per level, same indexing.
    pub post: Vec<SmootherConfig>,
    /// Coarsest-level smoother budget (no direct solve).
    pub coarsest: SmootherConfig,
    pub max_cycles: usize,
    /// Target relative residual.
    pub tol: f64,
    /// Abort when an intermediate norm exceeds `guard *` the input scale.
    pub divergence_guard: f64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        // Inference-style budget: 2 sweeps of 8-color GS per level, 10 at
        // the coarsest.
        Self {
            schedule: Schedule::V,
            pre: vec![SmootherConfig::new(SmootherKind::Gs8, 2)],
            post: vec![SmootherConfig::new(SmootherKind::Gs8, 2)],
            coarsest: SmootherConfig::new(SmootherKind::Gs8, 10),
            max_cycles: 50,
            tol: 1e-5,
            divergence_guard: 1e12,
        }
    }
}

impl CycleConfig {
    pub fn new(schedule: Schedule) -> Self {
        Self { schedule, ..Default::default() }
    }

    /// Same smoother kind/omega at every level with the given sweep count.
    pub fn with_smoother(mut self, cfg: SmootherConfig) -> Self {
        self.pre = vec![cfg];
        self.post = vec![cfg];
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_cycles(mut self, max_cycles: usize) -> Self {
        self.max_cycles = max_cycles;
        self
    }

    pub fn pre_at(&self, level: usize) -> &SmootherConfig {
        let i = (level - 1).min(self.pre.len() - 1);
        &self.pre[i]
    }

    pub fn post_at(&self, level: usize) -> &SmootherConfig {
        let i = (level - 1).min(self.post.len() - 1);
        &self.post[i]
    }

    pub fn validate(&self) -> Result<()> {
        if self.pre.is_empty() || self.post.is_empty() {
            return Err(Error::InvalidConfig("smoother lists must not be empty".into()));
        }
        for cfg in self.pre.iter().chain(&self.post).chain(std::iter::once(&self.coarsest)) {
            cfg.validate()?;
        }
        if self.max_cycles == 0 {
            return Err(Error::InvalidConfig("max_cycles must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        Ok(())
    }
}

/// Externally supplied initialization: finest-level guess and per-level
/// coarse corrections. Missing entries act as zeros.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    /// Initial guess at level 1.
    pub finest: Option<Field>,
    /// `coarse[l - 2]` is the correction injected at level `l`.
    pub coarse: Vec<Option<Field>>,
}

impl WarmStart {
    pub fn correction_for(&self, level: usize) -> Option<&Field> {
        if level < 2 {
            return None;
        }
        self.coarse.get(level - 2).and_then(Option::as_ref)
    }
}

/// Convergence record of one solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Relative residual before the first cycle.
    pub initial_residual: f64,
    /// Relative residual after each cycle.
    pub history: Vec<f64>,
    pub cycles: usize,
    pub converged: bool,
    pub wall_seconds: f64,
    /// |sum over nodes of u| per mode (max over components), after the
    /// gauge projection.
    pub gauge_deviation: Vec<f64>,
}

/// Operators, transfer stencils and color partitions for every level of a
/// hierarchy, ready to run cycles.
pub struct MgSolver {
    hierarchy: GmgHierarchy,
    ops: Vec<EbeOperator>,
    stencils: Vec<TransferStencil>,
    colors: Vec<ColorPartition>,
}

impl MgSolver {
    /// Build the level stack from a finest-level kernel and per-active-
    /// element scales; coarse operators come from Galerkin projection.
    pub fn new(hierarchy: GmgHierarchy, kernel: ElementKernel, scales: Vec<f64>) -> Result<Self> {
        let finest = EbeOperator::with_uniform_kernel(hierarchy.level_shared(1), kernel, scales)?;
        let mut ops = vec![finest];
        for l in 2..=hierarchy.depth() {
            let coarse = galerkin_coarse_operator(&ops[l - 2], hierarchy.level_shared(l))?;
            ops.push(coarse);
        }
        let mut stencils = Vec::new();
        for l in 1..hierarchy.depth() {
            stencils.push(build_stencil(&hierarchy, l)?);
        }
        let colors = hierarchy
            .levels()
            .iter()
            .map(|t| color_nodes(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { hierarchy, ops, stencils, colors })
    }

    /// Refresh the finest-level scales (SIMP iterations) and re-project the
    /// coarse operators; topology, stencils and colors are reused.
    pub fn update_scales(&mut self, scales: Vec<f64>) -> Result<()> {
        self.ops[0].set_scales(scales)?;
        for l in 2..=self.hierarchy.depth() {
            self.ops[l - 1] =
                galerkin_coarse_operator(&self.ops[l - 2], self.hierarchy.level_shared(l))?;
        }
        Ok(())
    }

    pub fn hierarchy(&self) -> &GmgHierarchy {
        &self.hierarchy
    }

    pub fn depth(&self) -> usize {
        self.hierarchy.depth()
    }

    /// 1-based level operator.
    pub fn op(&self, level: usize) -> &EbeOperator {
        &self.ops[level - 1]
    }

    pub fn stencil(&self, fine_level: usize) -> &TransferStencil {
        &self.stencils[fine_level - 1]
    }

    pub fn finest_op(&self) -> &EbeOperator {
        &self.ops[0]
    }

    fn smooth_level(&self, level: usize, u: &mut Field, f: &Field, cfg: &SmootherConfig) -> Result<()> {
        smooth(&self.ops[level - 1], &self.colors[level - 1], u, f, cfg)
    }

    fn guard(&self, u: &Field, scale: f64, cfg: &CycleConfig) -> Result<()> {
        let m = u.max_abs();
        if !m.is_finite() {
            return Err(Error::NonFinite("cycle intermediate".into()));
        }
        if m > cfg.divergence_guard * scale.max(1e-300) {
            return Err(Error::Diverged);
        }
        Ok(())
    }

    /// V/W/F recursion starting at `level` with `u` as the current iterate
    /// of `K u = f` on that level.
    fn vwf(
        &self,
        schedule: Schedule,
        level: usize,
        u: &mut Field,
        f: &Field,
        warm: Option<&WarmStart>,
        cfg: &CycleConfig,
        scale: f64,
    ) -> Result<()> {
        let depth = self.depth();
        if level == depth {
            return self.smooth_level(level, u, f, &cfg.coarsest);
        }
        self.smooth_level(level, u, f, cfg.pre_at(level))?;
        let r = self.ops[level - 1].residual(u, f)?;
        let fc = self.stencil(level).restrict(&r)?;
        let mut ec = match warm.and_then(|w| w.correction_for(level + 1)) {
            Some(e) => {
                e.check_same_shape(&fc)?;
                e.clone()
            }
            None => Field::zeros(level + 1, fc.num_nodes(), fc.dof, fc.modes),
        };
        match schedule {
            Schedule::V | Schedule::HalfV | Schedule::Fmg => {
                self.vwf(Schedule::V, level + 1, &mut ec, &fc, warm, cfg, scale)?;
            }
            Schedule::W => {
                self.vwf(Schedule::W, level + 1, &mut ec, &fc, warm, cfg, scale)?;
                // second visit continues from the first coarse iterate
                self.vwf(Schedule::W, level + 1, &mut ec, &fc, None, cfg, scale)?;
            }
            Schedule::F => {
                self.vwf(Schedule::F, level + 1, &mut ec, &fc, warm, cfg, scale)?;
                self.vwf(Schedule::V, level + 1, &mut ec, &fc, None, cfg, scale)?;
            }
        }
        let correction = self.stencil(level).prolongate(&ec)?;
        u.axpy(1.0, &correction);
        self.smooth_level(level, u, f, cfg.post_at(level))?;
        self.guard(u, scale, cfg)?;
        Ok(())
    }

    /// One V-cycle on the finest level.
    pub fn v_cycle(
        &self,
        u: &mut Field,
        f: &Field,
        warm: Option<&WarmStart>,
        cfg: &CycleConfig,
    ) -> Result<()> {
        self.run_cycle(Schedule::V, u, f, warm, cfg)
    }

    /// One cycle of the given schedule, updating `u` in place. When `warm`
    /// is supplied, coarse corrections are injected at the first visit of
    /// each coarse level (the finest-level guess is the caller's `u`).
    pub fn run_cycle(
        &self,
        schedule: Schedule,
        u: &mut Field,
        f: &Field,
        warm: Option<&WarmStart>,
        cfg: &CycleConfig,
    ) -> Result<()> {
        cfg.validate()?;
        u.check_same_shape(f)?;
        let scale = f.max_abs().max(u.max_abs());
        match schedule {
            Schedule::V | Schedule::W | Schedule::F => self.vwf(schedule, 1, u, f, warm, cfg, scale),
            Schedule::HalfV => self.half_v(u, f, warm, cfg, scale),
            Schedule::Fmg => {
                *u = self.fmg(f, cfg, scale)?;
                Ok(())
            }
        }
    }

    /// Half-V: smoothing on the way down, plain corrections on the way up,
    /// one post-smoothing pass at the finest level.
    fn half_v(
        &self,
        u: &mut Field,
        f: &Field,
        warm: Option<&WarmStart>,
        cfg: &CycleConfig,
        scale: f64,
    ) -> Result<()> {
        let depth = self.depth();
        if depth == 1 {
            return self.smooth_level(1, u, f, &cfg.coarsest);
        }
        let mut rhs = vec![f.clone()];
        let mut iterates: Vec<Field> = vec![std::mem::replace(u, Field::zeros(1, 0, 1, 1))];
        for level in 1..depth {
            self.smooth_level(level, &mut iterates[level - 1], &rhs[level - 1], cfg.pre_at(level))?;
            let r = self.ops[level - 1].residual(&iterates[level - 1], &rhs[level - 1])?;
            let fc = self.stencil(level).restrict(&r)?;
            let ec = match warm.and_then(|w| w.correction_for(level + 1)) {
                Some(e) => {
                    e.check_same_shape(&fc)?;
                    e.clone()
                }
                None => Field::zeros(level + 1, fc.num_nodes(), fc.dof, fc.modes),
            };
            rhs.push(fc);
            iterates.push(ec);
        }
        self.smooth_level(depth, &mut iterates[depth - 1], &rhs[depth - 1], &cfg.coarsest)?;
        for level in (1..depth).rev() {
            let correction = self.stencil(level).prolongate(&iterates[level])?;
            iterates[level - 1].axpy(1.0, &correction);
        }
        *u = iterates.swap_remove(0);
        self.smooth_level(1, u, f, cfg.post_at(1))?;
        self.guard(u, scale, cfg)?;
        Ok(())
    }

    /// Full multigrid cascade: coarsest-first, prolongating each level's
    /// solution as the next finer initial guess, one V-cycle per level.
    fn fmg(&self, f: &Field, cfg: &CycleConfig, scale: f64) -> Result<Field> {
        let depth = self.depth();
        let mut rhs = vec![f.clone()];
        for level in 1..depth {
            let fc = self.stencil(level).restrict(&rhs[level - 1])?;
            rhs.push(fc);
        }
        let coarsest = self.hierarchy.level(depth);
        let mut u = Field::zeros(depth, coarsest.num_nodes(), f.dof, f.modes);
        self.smooth_level(depth, &mut u, &rhs[depth - 1], &cfg.coarsest)?;
        for level in (1..depth).rev() {
            let mut uf = self.stencil(level).prolongate(&u)?;
            self.vwf(Schedule::V, level, &mut uf, &rhs[level - 1], None, cfg, scale)?;
            u = uf;
        }
        self.guard(&u, scale, cfg)?;
        Ok(u)
    }

    /// Aggregate relative residual over all modes.
    pub fn relative_residual(&self, u: &Field, f: &Field) -> Result<f64> {
        let fnorm = f.norm();
        let r = self.finest_op().residual(u, f)?;
        if fnorm == 0.0 {
            return Ok(r.norm());
        }
        Ok(r.norm() / fnorm)
    }

    /// Repeat the configured cycle until the relative residual reaches
    /// `cfg.tol` or `cfg.max_cycles` is exhausted. Returns the best iterate
    /// with a flagged report on non-convergence. Warm-start corrections are
    /// injected during the first cycle only; the FMG schedule builds its own
    /// initial guess and ignores the warm start, falling back to V-cycles
    /// after the first cascade.
    pub fn solve(
        &self,
        f: &Field,
        warm: Option<&WarmStart>,
        cfg: &CycleConfig,
    ) -> Result<(Field, SolveReport)> {
        cfg.validate()?;
        let start = Instant::now();
        let mut u = match warm.and_then(|w| w.finest.as_ref()) {
            Some(g) => {
                g.check_same_shape(&self.finest_op().zeros_like(f.modes))?;
                g.clone()
            }
            None => self.finest_op().zeros_like(f.modes),
        };
        u.check_same_shape(f)?;

        let fnorm = f.norm();
        if fnorm == 0.0 {
            // r is defined as 0 for a zero load; nothing to do.
            let mut zero = self.finest_op().zeros_like(f.modes);
            let gauge = gauge_deviation(&zero);
            zero.subtract_mean();
            return Ok((
                zero,
                SolveReport {
                    initial_residual: 0.0,
                    history: vec![0.0],
                    cycles: 1,
                    converged: true,
                    wall_seconds: start.elapsed().as_secs_f64(),
                    gauge_deviation: gauge,
                },
            ));
        }

        let initial_residual = self.relative_residual(&u, f)?;
        let mut history = Vec::new();
        let mut best = u.clone();
        let mut best_r = initial_residual;
        let mut converged = false;
        let mut cycles = 0;
        for cycle in 1..=cfg.max_cycles {
            let warm_now = if cycle == 1 { warm } else { None };
            let schedule = if cfg.schedule == Schedule::Fmg && cycle > 1 {
                Schedule::V
            } else {
                cfg.schedule
            };
            self.run_cycle(schedule, &mut u, f, warm_now, cfg)?;
            cycles = cycle;
            let r = self.relative_residual(&u, f)?;
            history.push(r);
            if r < best_r {
                best_r = r;
                best.clone_from(&u);
            }
            if r <= cfg.tol {
                converged = true;
                break;
            }
        }

        let mut out = if converged { u } else { best };
        out = project_zero_mean(&out);
        let gauge = gauge_deviation(&out);
        Ok((
            out,
            SolveReport {
                initial_residual,
                history,
                cycles,
                converged,
                wall_seconds: start.elapsed().as_secs_f64(),
                gauge_deviation: gauge,
            },
        ))
    }
}

/// Subtract the per-(component, mode) mean over active nodes. On a fully
/// periodic topology the subtracted field is in the operator's null space,
/// so the residual is unchanged.
pub fn project_zero_mean(u: &Field) -> Field {
    let mut out = u.clone();
    out.subtract_mean();
    out
}

/// |sum over nodes of u| per mode, maximized over DOF components.
pub fn gauge_deviation(u: &Field) -> Vec<f64> {
    let means = u.mean_per_component_mode();
    let n = u.num_nodes() as f64;
    let mut out = vec![0.0f64; u.modes];
    for c in 0..u.dof {
        for m in 0..u.modes {
            let sum = means[c * u.modes + m] * n;
            out[m] = out[m].max(sum.abs());
        }
    }
    out
}

const FIELD_MAGIC: &[u8; 4] = b"GMTF";

/// Write a field: 16-byte header (magic "GMTF", u32 level, u32 dof, u32
/// modes, little-endian) followed by binary32 values in node order.
pub fn save_field(field: &Field, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(field.level as u32).to_le_bytes())?;
    w.write_all(&(field.dof as u32).to_le_bytes())?;
    w.write_all(&(field.modes as u32).to_le_bytes())?;
    for &v in field.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a field written by [`save_field`], validating the expected shape.
pub fn load_field(path: &Path, expect_nodes: usize, expect_dof: usize, expect_modes: usize) -> Result<Field> {
    let bad = |reason: String| Error::MalformedFile { path: path.display().to_string(), reason };
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() < 16 || &raw[0..4] != FIELD_MAGIC {
        return Err(bad("missing GMTF header".into()));
    }
    let read_u32 = |off: usize| u32::from_le_bytes([raw[off], raw[off + 1], raw[off + 2], raw[off + 3]]);
    let level = read_u32(4) as usize;
    let dof = read_u32(8) as usize;
    let modes = read_u32(12) as usize;
    if dof != expect_dof || modes != expect_modes {
        return Err(bad(format!(
            "field has dof {dof}, modes {modes}; expected dof {expect_dof}, modes {expect_modes}"
        )));
    }
    let expect_len = expect_nodes * dof * modes * 4;
    if raw.len() - 16 != expect_len {
        return Err(bad(format!(
            "payload is {} bytes, expected {expect_len} ({expect_nodes} nodes)",
            raw.len() - 16
        )));
    }
    let data: Vec<f64> = raw[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Field::from_data(level, expect_nodes, dof, modes, data)
}

fn warm_level_path(dir: &Path, level: usize) -> std::path::PathBuf {
    dir.join(format!("level_{level}.gmtf"))
}

/// Write a warm start as one field file per provided level under `dir`
/// (`level_1.gmtf` for the finest guess, `level_l.gmtf` for corrections).
pub fn save_warm_start(warm: &WarmStart, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if let Some(finest) = &warm.finest {
        save_field(finest, &warm_level_path(dir, 1))?;
    }
    for (i, entry) in warm.coarse.iter().enumerate() {
        if let Some(field) = entry {
            save_field(field, &warm_level_path(dir, i + 2))?;
        }
    }
    Ok(())
}

/// Load a warm start directory against a hierarchy. Missing level files
/// stay zero-initialized; their level indices are returned for reporting.
pub fn load_warm_start(
    dir: &Path,
    hierarchy: &GmgHierarchy,
    dof: usize,
    modes: usize,
) -> Result<(WarmStart, Vec<usize>)> {
    let mut warm = WarmStart::default();
    let mut missing = Vec::new();
    for level in 1..=hierarchy.depth() {
        let path = warm_level_path(dir, level);
        if !path.exists() {
            missing.push(level);
            if level >= 2 {
                warm.coarse.push(None);
            }
            continue;
        }
        let field = load_field(&path, hierarchy.level(level).num_nodes(), dof, modes)?;
        if field.level != level {
            return Err(Error::MalformedFile {
                path: path.display().to_string(),
                reason: format!("file says level {}, expected {level}", field.level),
            });
        }
        if level == 1 {
            warm.finest = Some(field);
        } else {
            warm.coarse.push(Some(field));
        }
    }
    Ok((warm, missing))
}

/// Build an FMG-based warm start: run one FMG cascade from zero and use the
/// result as the finest-level initial guess.
pub fn fmg_init(solver: &MgSolver, f: &Field, cfg: &CycleConfig) -> Result<WarmStart> {
    let mut u = solver.finest_op().zeros_like(f.modes);
    solver.run_cycle(Schedule::Fmg, &mut u, f, None, cfg)?;
    Ok(WarmStart { finest: Some(u), coarse: Vec::new() })
}
