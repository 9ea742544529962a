//! Inverse homogenization: SIMP interpolation, analytic sensitivities,
//! periodic sensitivity filtering, Optimality-Criteria updates with move
//! limits, pruning, and the optimization loop for E/G/K_B targets.
//!
//! All three targets are compliance-minimization forms over the compliance
//! matrix `S = C_H^{-1}`; maximizing a modulus minimizes its compliance
//! combination, so the raw compliance sensitivities feed the OC update
//! directly.

use nalgebra::DMatrix;

use crate::cycles::CycleConfig;
use crate::error::{Error, Result};
use crate::fem::Physics;
use crate::field::Field;
use crate::homog::{EffectiveTensor, HomogConfig, HomogPipeline, Interpolation};
use crate::voxgeom::{GridKind, MaterialModel, VoxelGrid, RHO_MIN};

/// Optimization target, as a function of the compliance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Mean of the principal normal compliances (S00, S11, S22).
    Young,
    /// Mean of the shear compliances (S33, S44, S55).
    Shear,
    /// Sum of the upper-left 3x3 compliance block.
    Bulk,
}

impl Objective {
    /// Objective value J(S), to be minimized.
    pub fn value(&self, s: &DMatrix<f64>) -> f64 {
        match self {
            Objective::Young => (s[(0, 0)] + s[(1, 1)] + s[(2, 2)]) / 3.0,
            Objective::Shear => (s[(3, 3)] + s[(4, 4)] + s[(5, 5)]) / 3.0,
            Objective::Bulk => {
                let mut acc = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        acc += s[(i, j)];
                    }
                }
                acc
            }
        }
    }

    /// dJ/dS as a constant 6x6 matrix.
    fn gradient_wrt_compliance(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(6, 6);
        match self {
            Objective::Young => {
                for i in 0..3 {
                    g[(i, i)] = 1.0 / 3.0;
                }
            }
            Objective::Shear => {
                for i in 3..6 {
                    g[(i, i)] = 1.0 / 3.0;
                }
            }
            Objective::Bulk => {
                for i in 0..3 {
                    for j in 0..3 {
                        g[(i, j)] = 1.0;
                    }
                }
            }
        }
        g
    }
}

/// SIMP and OC parameters.
#[derive(Debug, Clone)]
pub struct SimpConfig {
    pub penalization: f64,
    pub rho_min: f64,
    pub target_vf: f64,
    /// Filter radius in voxel units.
    pub filter_radius: f64,
    pub move_limit: f64,
    /// OC damping exponent.
    pub damping: f64,
    pub max_iterations: usize,
    pub prune_period: usize,
    pub prune_threshold: f64,
    /// Seed for random initializations (reproducibility contract).
    pub seed: u64,
    /// Cell-problem solve settings; the tolerance is tightened to at most
    /// 1e-6 for gradient fidelity.
    pub cycle: CycleConfig,
    pub levels: Option<usize>,
}

impl Default for SimpConfig {
    fn default() -> Self {
        Self {
            penalization: 3.0,
            rho_min: RHO_MIN,
            target_vf: 0.3,
            filter_radius: 1.5,
            move_limit: 0.2,
            damping: 0.5,
            max_iterations: 50,
            prune_period: 20,
            prune_threshold: 1e-5,
            seed: 0,
            cycle: CycleConfig::default().with_tol(1e-6).with_max_cycles(200),
            levels: None,
        }
    }
}

impl SimpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalization > 1.0) {
            return Err(Error::InvalidConfig("penalization must be > 1".into()));
        }
        if !(self.rho_min > 0.0 && self.rho_min < 1.0) {
            return Err(Error::InvalidConfig("rho_min must lie in (0, 1)".into()));
        }
        if !(self.target_vf > 0.0 && self.target_vf < 1.0) {
            return Err(Error::InvalidConfig("target volume fraction must lie in (0, 1)".into()));
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return Err(Error::InvalidConfig("move limit must lie in (0, 1]".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidConfig("OC damping must lie in (0, 1)".into()));
        }
        if self.max_iterations == 0 || self.prune_period == 0 {
            return Err(Error::InvalidConfig("iteration counts must be >= 1".into()));
        }
        self.cycle.validate()
    }

    pub fn interpolation(&self) -> Interpolation {
        Interpolation::Simp { penalization: self.penalization, rho_min: self.rho_min }
    }

    fn homog_config(&self) -> HomogConfig {
        let mut cycle = self.cycle.clone();
        cycle.tol = cycle.tol.min(1e-6);
        HomogConfig { cycle, levels: self.levels, interpolation: self.interpolation() }
    }
}

/// SIMP stiffness scale `rho_min + rho^p`.
pub fn interpolate(rho: f64, cfg: &SimpConfig) -> f64 {
    cfg.rho_min + rho.powf(cfg.penalization)
}

/// Analytic objective gradient per element, densely indexed by flat voxel
/// coordinate (zero on inactive voxels):
/// `dJ/drho_e = p rho^(p-1) / |Omega| * sum_ij (dJ/dC)_ij G_e[i][j]`
/// with `dJ/dC = -S (dJ/dS) S` and `G_e` the unit-material Gram matrices
/// of the solved correctors.
pub fn sensitivities(
    pipeline: &HomogPipeline,
    rho: &[f64],
    u: &Field,
    tensor: &EffectiveTensor,
    objective: Objective,
    cfg: &SimpConfig,
) -> Result<Vec<f64>> {
    if pipeline.physics() != Physics::Elasticity {
        return Err(Error::InvalidConfig("SIMP objectives need elasticity".into()));
    }
    let s = tensor
        .matrix
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidConfig("effective tensor is singular".into()))?;
    let g_s = objective.gradient_wrt_compliance();
    // dJ/dC = -S (dJ/dS) S (S symmetric)
    let dj_dc = -(&s * g_s * &s);

    let grams = pipeline.element_grams(u)?;
    let topo = pipeline.solver().finest_op().topology();
    let volume = pipeline.domain_volume();
    let p = cfg.penalization;

    let mut out = vec![0.0; rho.len()];
    for (e, gram) in grams.iter().enumerate() {
        let flat = topo.elements[e] as usize;
        let rho_e = rho[flat];
        debug_assert!(rho_e > 0.0);
        let mut contracted = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                contracted += dj_dc[(i, j)] * gram[(i, j)];
            }
        }
        out[flat] = p * rho_e.powf(p - 1.0) / volume * contracted;
    }
    Ok(out)
}

/// Density-weighted sensitivity filter with periodic distances:
/// `g_e <- sum_j w_ej rho_j g_j / (rho_e sum_j w_ej)`,
/// `w_ej = max(0, radius - dist(e, j))`. Radii below 1 reduce to the
/// identity. Operates on dense arrays; inactive voxels stay zero.
pub fn filter_sensitivities(
    rho: &[f64],
    sens: &[f64],
    n_res: usize,
    radius: f64,
) -> Vec<f64> {
    assert_eq!(rho.len(), n_res * n_res * n_res);
    assert_eq!(sens.len(), rho.len());
    // Integer offsets within the radius; center distance equals the offset
    // norm in voxel units.
    let reach = radius.ceil() as i64;
    let mut offsets = Vec::new();
    for dz in -reach..=reach {
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let dist = ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                if dist < radius {
                    offsets.push(([dx, dy, dz], radius - dist));
                }
            }
        }
    }
    let n = n_res as i64;
    let mut out = vec![0.0; rho.len()];
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let e = (x + n * (y + n * z)) as usize;
                if rho[e] <= 0.0 {
                    continue;
                }
                let mut num = 0.0;
                let mut den = 0.0;
                for ([dx, dy, dz], w) in &offsets {
                    let j = ((x + dx).rem_euclid(n)
                        + n * ((y + dy).rem_euclid(n) + n * (z + dz).rem_euclid(n)))
                        as usize;
                    if rho[j] <= 0.0 {
                        continue;
                    }
                    num += w * rho[j] * sens[j];
                    den += w;
                }
                out[e] = num / (rho[e] * den);
            }
        }
    }
    out
}

/// One Optimality-Criteria update: multiplicative step with move limits and
/// a bisected multiplier pinning the volume fraction to the target within
/// 1e-6 (or as close as the move limits allow).
pub fn oc_update(rho: &[f64], sens: &[f64], cfg: &SimpConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if rho.iter().zip(sens).all(|(&r, &g)| r <= 0.0 || g == 0.0) {
        return Err(Error::ZeroSensitivities);
    }
    let total = rho.len() as f64;
    let candidate = |lambda: f64| -> Vec<f64> {
        rho.iter()
            .zip(sens)
            .map(|(&r, &g)| {
                if r <= 0.0 {
                    return 0.0; // pruned voxels stay out
                }
                let b = (-g / lambda).max(0.0);
                let trial = r * b.powf(cfg.damping);
                trial
                    .max(r - cfg.move_limit)
                    .min(r + cfg.move_limit)
                    .max(cfg.rho_min)
                    .min(1.0)
            })
            .collect()
    };
    // vf(lambda) is non-increasing; bisect geometrically over a wide range.
    let (mut lo, mut hi) = (1e-30f64, 1e30f64);
    let mut best = candidate(1.0);
    for _ in 0..200 {
        let mid = (lo.ln() + hi.ln()).mul_add(0.5, 0.0).exp();
        best = candidate(mid);
        let vf = best.iter().sum::<f64>() / total;
        if (vf - cfg.target_vf).abs() <= 1e-6 {
            return Ok(best);
        }
        if vf > cfg.target_vf {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Per-iteration record of an optimization run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub volume_fraction: f64,
    pub max_density_change: f64,
    pub residual: f64,
    pub pruned: usize,
}

/// Outcome of [`optimize`].
pub struct OptimizeRun {
    pub grid: VoxelGrid,
    pub history: Vec<IterationRecord>,
    /// False when the loop aborted on a non-converged cell problem.
    pub completed: bool,
    pub abort_reason: Option<String>,
    /// Densities per iteration snapshot requests are handled by the caller.
    pub final_objective: f64,
}

/// Inverse homogenization loop: solve the cell problems, evaluate the
/// objective and analytic sensitivities, filter, OC-update, and prune
/// sub-threshold voxels every `prune_period` iterations. Stops at
/// `max_iterations` or when |dJ|/|J| stays below 1e-5 for 5 iterations.
pub fn optimize(
    grid0: &VoxelGrid,
    material: &MaterialModel,
    objective: Objective,
    cfg: &SimpConfig,
    mut per_iteration: Option<&mut dyn FnMut(usize, &VoxelGrid)>,
) -> Result<OptimizeRun> {
    cfg.validate()?;
    let n = grid0.resolution();
    // Work on a density copy of the input field.
    let mut rho: Vec<f64> = grid0
        .values()
        .iter()
        .map(|&v| if v > 0.0 { v.clamp(cfg.rho_min, 1.0) } else { 0.0 })
        .collect();

    let make_grid = |rho: &[f64]| -> Result<VoxelGrid> {
        VoxelGrid::new(n, grid0.period(), GridKind::Density, rho.to_vec())
    };

    let mut grid = make_grid(&rho)?;
    let mut pipeline = HomogPipeline::new(&grid, material, Physics::Elasticity, &cfg.homog_config())?;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut last_objectives: Vec<f64> = Vec::new();
    let mut completed = true;
    let mut abort_reason = None;

    let cycle_cfg = {
        let mut c = cfg.cycle.clone();
        c.tol = c.tol.min(1e-6);
        c
    };

    for iteration in 1..=cfg.max_iterations {
        let (u, report) = pipeline.solve(None, &cycle_cfg)?;
        if !report.converged {
            completed = false;
            abort_reason = Some(format!(
                "cell problem failed to converge at iteration {iteration} (r = {:.3e})",
                report.history.last().copied().unwrap_or(f64::NAN)
            ));
            break;
        }
        let tensor = pipeline.effective_tensor(&u)?;
        let s = tensor
            .matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("effective tensor is singular".into()))?;
        let objective_value = objective.value(&s);

        let sens = sensitivities(&pipeline, &rho, &u, &tensor, objective, cfg)?;
        let filtered = filter_sensitivities(&rho, &sens, n, cfg.filter_radius);
        let new_rho = oc_update(&rho, &filtered, cfg)?;

        let max_change = rho
            .iter()
            .zip(&new_rho)
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
        rho = new_rho;

        // Pruning pass: drop sub-threshold voxels from the active set.
        let mut pruned = 0usize;
        if iteration % cfg.prune_period == 0 {
            for v in rho.iter_mut() {
                if *v > 0.0 && *v < cfg.prune_threshold {
                    *v = 0.0;
                    pruned += 1;
                }
            }
        }

        let vf = rho.iter().sum::<f64>() / rho.len() as f64;
        history.push(IterationRecord {
            iteration,
            objective: objective_value,
            volume_fraction: vf,
            max_density_change: max_change,
            residual: report.history.last().copied().unwrap_or(0.0),
            pruned,
        });

        grid = make_grid(&rho)?;
        if let Some(cb) = per_iteration.as_deref_mut() {
            cb(iteration, &grid);
        }

        if pruned > 0 {
            // Active set changed: rebuild the hierarchy and operators.
            pipeline = HomogPipeline::new(&grid, material, Physics::Elasticity, &cfg.homog_config())?;
        } else {
            let scales: Vec<f64> = rho
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| interpolate(v, cfg))
                .collect();
            pipeline.update_scales(scales)?;
        }

        last_objectives.push(objective_value);
        if last_objectives.len() >= 6 {
            let recent = &last_objectives[last_objectives.len() - 6..];
            let settled = recent.windows(2).all(|w| {
                let denom = w[0].abs().max(1e-300);
                ((w[1] - w[0]) / denom).abs() < 1e-5
            });
            if settled {
                break;
            }
        }
    }

    let final_objective = history.last().map(|r| r.objective).unwrap_or(f64::NAN);
    Ok(OptimizeRun { grid, history, completed, abort_reason, final_objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxgeom::generate_tpms;
    use crate::voxgeom::TpmsKind;

    fn simp_cfg(target_vf: f64) -> SimpConfig {
        SimpConfig { target_vf, ..Default::default() }
    }

    #[test]
    fn interpolation_hand_values() {
        let cfg = simp_cfg(0.3);
        assert!((interpolate(1.0, &cfg) - (1.0 + 1e-5)).abs() < 1e-15);
        assert!((interpolate(0.5, &cfg) - (1e-5 + 0.125)).abs() < 1e-15);
        let at_min = interpolate(1e-5, &cfg);
        assert!((at_min - (1e-5 + 1e-15)).abs() < 1e-16);
    }

    #[test]
    fn filter_small_radius_is_identity_and_uniform_is_fixed() {
        let n = 4;
        let rho = vec![0.5; n * n * n];
        let sens: Vec<f64> = (0..n * n * n).map(|i| (i % 5) as f64 - 2.0).collect();
        let out = filter_sensitivities(&rho, &sens, n, 0.9);
        for (a, b) in out.iter().zip(&sens) {
            assert!((a - b).abs() < 1e-12);
        }
        // uniform sensitivities are unchanged by any radius
        let sens = vec![-1.5; n * n * n];
        let out = filter_sensitivities(&rho, &sens, n, 1.5);
        for v in &out {
            assert!((v - -1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn filter_wraps_around_the_period() {
        let n = 4;
        let rho = vec![1.0; n * n * n];
        let mut sens = vec![0.0; n * n * n];
        // spike at x = 3 (face); its weight must reach x = 0 via the wrap
        sens[3] = 8.0;
        let out = filter_sensitivities(&rho, &sens, n, 1.5);
        assert!(out[0] > 0.0, "no periodic spillover: {:?}", &out[..4]);
        assert!(out[2] > 0.0);
        assert!((out[0] - out[2]).abs() < 1e-12, "wrap asymmetry");
    }

    #[test]
    fn oc_update_hits_target_volume_and_respects_moves() {
        let n = 4;
        let cfg = SimpConfig { target_vf: 0.4, ..Default::default() };
        let rho = vec![0.5; n * n * n];
        let sens = vec![-1.0; n * n * n];
        let out = oc_update(&rho, &sens, &cfg).unwrap();
        let vf = out.iter().sum::<f64>() / out.len() as f64;
        assert!((vf - 0.4).abs() <= 1e-6);
        for (&a, &b) in rho.iter().zip(&out) {
            assert!((a - b).abs() <= cfg.move_limit + 1e-12);
            assert!((cfg.rho_min..=1.0).contains(&b));
        }

        // uniform inputs stay uniform
        let spread = out.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!((spread.1 - spread.0).abs() < 1e-12);
    }

    #[test]
    fn oc_rejects_all_zero_sensitivities() {
        let cfg = simp_cfg(0.3);
        let rho = vec![0.5; 8];
        let sens = vec![0.0; 8];
        assert!(matches!(oc_update(&rho, &sens, &cfg), Err(Error::ZeroSensitivities)));
    }

    #[test]
    fn full_solid_sensitivities_are_uniform() {
        let g = generate_tpms(TpmsKind::Gyroid, 4, f64::INFINITY).unwrap();
        let mut dens = Vec::new();
        for &v in g.values() {
            dens.push(v * 0.8);
        }
        let grid = VoxelGrid::new(4, [1.0; 3], GridKind::Density, dens.clone()).unwrap();
        let cfg = simp_cfg(0.3);
        let pipeline =
            HomogPipeline::new(&grid, &MaterialModel::default(), Physics::Elasticity, &cfg.homog_config())
                .unwrap();
        let (u, report) = pipeline.solve(None, &cfg.cycle).unwrap();
        assert!(report.converged);
        let tensor = pipeline.effective_tensor(&u).unwrap();
        for objective in [Objective::Young, Objective::Shear, Objective::Bulk] {
            let sens = sensitivities(&pipeline, &dens, &u, &tensor, objective, &cfg).unwrap();
            let active: Vec<f64> = sens.iter().copied().filter(|&v| v != 0.0).collect();
            assert_eq!(active.len(), 64);
            let (lo, hi) = active.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            assert!((hi - lo).abs() <= 1e-8 * hi.abs().max(1e-30), "{objective:?}: spread {lo}..{hi}");
            assert!(hi < 0.0, "{objective:?}: densifying must reduce compliance");
        }
    }
}
