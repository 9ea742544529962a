//! Cell problems and effective-property extraction.
//!
//! For each canonical loading mode the affine reference field `x0` is
//! evaluated element-locally, the load is `f = sum_e A_e^T s_e K_e x0_e`,
//! and after solving `K u = f` the effective tensor entry (i, j) is the
//! volume-averaged quadratic form
//! `C_H[i][j] = (1/|Omega|) sum_e s_e (x0^i - u_e^i)^T K_e (x0^j - u_e^j)`.
//! Evaluating `x0` per element keeps the periodic seam out of the formulas.

use nalgebra::DMatrix;

use crate::cycles::{CycleConfig, MgSolver, SolveReport, WarmStart};
use crate::error::{Error, Result};
use crate::fem::{assemble_dense, element_kernel, DensePseudoSolver, EbeOperator, Physics};
use crate::field::Field;
use crate::hierarchy::{auto_depth, build_hierarchy};
use crate::parallel::map_indexed;
use crate::voxgeom::{MaterialModel, VoxelGrid};

/// Canonical loading modes of one physics with the element-local reference
/// responses: the affine nodal field `x0` of each unit strain/gradient and
/// the element load `K_e x0` it induces. The elastic modes are exactly the
/// canonical Voigt basis (11, 22, 33, 23, 13, 12).
#[derive(Debug, Clone)]
pub struct LoadModeSet {
    pub physics: Physics,
    affine: Vec<Vec<f64>>,
    loads: Vec<Vec<f64>>,
}

impl LoadModeSet {
    pub fn new(kernel: &crate::fem::ElementKernel) -> Self {
        let physics = kernel.physics;
        let affine: Vec<Vec<f64>> = (0..physics.modes()).map(|m| kernel.affine_mode(m)).collect();
        let loads: Vec<Vec<f64>> = (0..physics.modes()).map(|m| kernel.mode_load(m)).collect();
        Self { physics, affine, loads }
    }

    pub fn modes(&self) -> usize {
        self.physics.modes()
    }

    /// Element-local affine nodal values of mode `m`.
    pub fn affine_mode(&self, m: usize) -> &[f64] {
        &self.affine[m]
    }

    /// Unit-material element load of mode `m`.
    pub fn element_load(&self, m: usize) -> &[f64] {
        &self.loads[m]
    }
}

/// How voxel values become per-element operator scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interpolation {
    /// Use the stored value directly (occupancy 0/1, or a plain density).
    Identity,
    /// SIMP stiffness interpolation `rho_min + rho^p`.
    Simp { penalization: f64, rho_min: f64 },
}

impl Interpolation {
    pub fn scale(&self, value: f64) -> f64 {
        match self {
            Interpolation::Identity => value,
            Interpolation::Simp { penalization, rho_min } => rho_min + value.powf(*penalization),
        }
    }
}

/// Scales for the active elements of `grid`, in active-element order.
pub fn element_scales(grid: &VoxelGrid, interpolation: Interpolation) -> Vec<f64> {
    grid.values()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| interpolation.scale(v))
        .collect()
}

/// Homogenization solve configuration.
#[derive(Debug, Clone)]
pub struct HomogConfig {
    pub cycle: CycleConfig,
    /// Hierarchy depth; `None` selects the deepest stack with coarsest
    /// resolution >= 4 (capped at 5, or 6 from 512^3).
    pub levels: Option<usize>,
    pub interpolation: Interpolation,
}

impl Default for HomogConfig {
    fn default() -> Self {
        Self { cycle: CycleConfig::default(), levels: None, interpolation: Interpolation::Identity }
    }
}

/// Homogenized tensor: 6x6 elasticity or 3x3 conductivity, symmetrized,
/// with the pre-symmetrization skew recorded.
#[derive(Debug, Clone)]
pub struct EffectiveTensor {
    pub physics: Physics,
    pub matrix: DMatrix<f64>,
    /// max |C - C^T| relative to the largest entry, before symmetrization.
    pub asymmetry: f64,
}

impl EffectiveTensor {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.matrix.nrows())
            .map(|r| (0..self.matrix.ncols()).map(|c| self.matrix[(r, c)]).collect())
            .collect()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = nalgebra::SymmetricEigen::new(self.matrix.clone());
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// (E, G, K_B) from the compliance matrix; elasticity only.
    pub fn derived_moduli(&self) -> Result<(f64, f64, f64)> {
        if self.physics != Physics::Elasticity {
            return Err(Error::InvalidConfig("derived moduli need an elasticity tensor".into()));
        }
        derived_moduli(&self.matrix)
    }
}

/// Hierarchy + operators + loads for one grid, reusable across scale
/// updates (SIMP) and solves.
pub struct HomogPipeline {
    physics: Physics,
    material: MaterialModel,
    period: [f64; 3],
    solver: MgSolver,
    loads: Field,
    /// Norm of the element loads before scatter cancellation; the assembled
    /// load is treated as zero below 1e-13 of this scale (uniform-strain
    /// equilibrium, e.g. the full solid).
    loads_scale: f64,
}

impl HomogPipeline {
    pub fn new(
        grid: &VoxelGrid,
        material: &MaterialModel,
        physics: Physics,
        cfg: &HomogConfig,
    ) -> Result<Self> {
        material.validate()?;
        let levels = cfg.levels.unwrap_or_else(|| auto_depth(grid.resolution()));
        let hierarchy = build_hierarchy(grid, levels)?;
        let kernel = element_kernel(physics, material, grid.element_size())?;
        let scales = element_scales(grid, cfg.interpolation);
        let solver = MgSolver::new(hierarchy, kernel, scales)?;
        let loads = build_loads(solver.finest_op())?;
        let loads_scale = unassembled_load_norm(solver.finest_op())?;
        Ok(Self { physics, material: *material, period: grid.period(), solver, loads, loads_scale })
    }

    pub fn physics(&self) -> Physics {
        self.physics
    }

    pub fn material(&self) -> &MaterialModel {
        &self.material
    }

    pub fn solver(&self) -> &MgSolver {
        &self.solver
    }

    pub fn loads(&self) -> &Field {
        &self.loads
    }

    /// Physical cell volume.
    pub fn domain_volume(&self) -> f64 {
        self.period[0] * self.period[1] * self.period[2]
    }

    /// Swap in new element scales (same active set) and rebuild the coarse
    /// operators and loads.
    pub fn update_scales(&mut self, scales: Vec<f64>) -> Result<()> {
        self.solver.update_scales(scales)?;
        self.loads = build_loads(self.solver.finest_op())?;
        self.loads_scale = unassembled_load_norm(self.solver.finest_op())?;
        Ok(())
    }

    /// Solve the multi-mode cell problem. A load that cancels to roundoff
    /// of its unassembled scale means the affine field is already in
    /// equilibrium; the corrector is zero and no cycles run.
    pub fn solve(&self, warm: Option<&WarmStart>, cycle: &CycleConfig) -> Result<(Field, SolveReport)> {
        if self.loads.norm() <= 1e-13 * self.loads_scale {
            let u = self.solver.finest_op().zeros_like(self.physics.modes());
            return Ok((
                u,
                SolveReport {
                    initial_residual: 0.0,
                    history: vec![0.0],
                    cycles: 1,
                    converged: true,
                    wall_seconds: 0.0,
                    gauge_deviation: vec![0.0; self.physics.modes()],
                },
            ));
        }
        self.solver.solve(&self.loads, warm, cycle)
    }

    /// Canonical modes with their element-local reference responses.
    pub fn load_modes(&self) -> Result<LoadModeSet> {
        let kernel = self
            .solver
            .finest_op()
            .kernel()
            .ok_or_else(|| Error::InvalidConfig("finest operator has no uniform kernel".into()))?;
        Ok(LoadModeSet::new(kernel))
    }

    /// Unit-material per-element Gram matrices
    /// `G_e[i][j] = (x0^i - u_e^i)^T K0 (x0^j - u_e^j)`.
    pub fn element_grams(&self, u: &Field) -> Result<Vec<DMatrix<f64>>> {
        let op = self.solver.finest_op();
        let kernel = op
            .kernel()
            .ok_or_else(|| Error::InvalidConfig("finest operator has no uniform kernel".into()))?;
        let topo = op.topology();
        u.check_same_shape(&op.zeros_like(self.physics.modes()))?;
        let dim = self.physics.element_dim();
        let dof = self.physics.dof();
        let modes = self.physics.modes();
        let mode_set = LoadModeSet::new(kernel);
        let x0 = &mode_set.affine;
        let kmat = &kernel.matrix;
        let grams = map_indexed(topo.num_elements(), |e| {
            // d[m] = x0^m - u_e^m
            let inc = &topo.element_nodes[e];
            let mut d = vec![0.0; dim * modes];
            for (a, &ni) in inc.iter().enumerate() {
                for c in 0..dof {
                    for m in 0..modes {
                        d[(a * dof + c) * modes + m] = x0[m][a * dof + c] - u.get(ni as usize, c, m);
                    }
                }
            }
            // t = K0 d, then G = d^T t
            let mut t = vec![0.0; dim * modes];
            for r in 0..dim {
                for c in 0..dim {
                    let k = kmat[(r, c)];
                    if k == 0.0 {
                        continue;
                    }
                    for m in 0..modes {
                        t[r * modes + m] += k * d[c * modes + m];
                    }
                }
            }
            let mut g = DMatrix::zeros(modes, modes);
            for i in 0..modes {
                for j in 0..modes {
                    let mut acc = 0.0;
                    for r in 0..dim {
                        acc += d[r * modes + i] * t[r * modes + j];
                    }
                    g[(i, j)] = acc;
                }
            }
            g
        });
        Ok(grams)
    }

    /// Volume-averaged effective tensor from a solved corrector field.
    pub fn effective_tensor(&self, u: &Field) -> Result<EffectiveTensor> {
        let grams = self.element_grams(u)?;
        let scales = self
            .solver
            .finest_op()
            .scales()
            .ok_or_else(|| Error::InvalidConfig("finest operator has no scales".into()))?;
        let modes = self.physics.modes();
        let mut q = DMatrix::zeros(modes, modes);
        for (g, &s) in grams.iter().zip(scales) {
            q += g * s;
        }
        q /= self.domain_volume();
        Ok(finish_tensor(self.physics, q))
    }
}

fn finish_tensor(physics: Physics, raw: DMatrix<f64>) -> EffectiveTensor {
    let n = raw.nrows();
    let mut skew = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            skew = skew.max((raw[(i, j)] - raw[(j, i)]).abs());
            scale = scale.max(raw[(i, j)].abs());
        }
    }
    let asymmetry = if scale > 0.0 { skew / scale } else { 0.0 };
    let mut m = raw;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    EffectiveTensor { physics, matrix: m, asymmetry }
}

/// Norm of the concatenated per-element loads `s_e K_e x0_e` before
/// scatter-adding; the meaningful zero scale for assembled loads.
pub fn unassembled_load_norm(op: &EbeOperator) -> Result<f64> {
    let kernel = op
        .kernel()
        .ok_or_else(|| Error::InvalidConfig("loads need a uniform-kernel operator".into()))?;
    let scales = op.scales().expect("uniform operator always has scales");
    let mode_set = LoadModeSet::new(kernel);
    let per_element: f64 = (0..mode_set.modes())
        .map(|m| mode_set.element_load(m).iter().map(|v| v * v).sum::<f64>())
        .sum();
    let scale_sq: f64 = scales.iter().map(|s| s * s).sum();
    Ok((per_element * scale_sq).sqrt())
}

/// Multi-mode load field `f = sum_e A_e^T s_e K_e x0_e` over the active
/// elements of the operator's level, built as a node-centric gather.
pub fn build_loads(op: &EbeOperator) -> Result<Field> {
    let kernel = op
        .kernel()
        .ok_or_else(|| Error::InvalidConfig("loads need a uniform-kernel operator".into()))?;
    let scales = op.scales().expect("uniform operator always has scales");
    let physics = op.physics();
    let modes = physics.modes();
    let dof = physics.dof();
    let topo = op.topology();
    // f_e per mode, shared by all elements (affine reproduction).
    let mode_set = LoadModeSet::new(kernel);
    let mut f = op.zeros_like(modes);
    let stride = dof * modes;
    crate::parallel::for_each_chunk_mut(f.data_mut(), stride, |node, row| {
        for &(e, a) in topo.node_elements(node) {
            let s = scales[e as usize];
            let a = a as usize;
            for d in 0..dof {
                for m in 0..modes {
                    row[d * modes + m] += s * mode_set.element_load(m)[a * dof + d];
                }
            }
        }
    });
    Ok(f)
}

/// Homogenize with the multigrid pipeline.
pub fn homogenize(
    grid: &VoxelGrid,
    material: &MaterialModel,
    physics: Physics,
    cfg: &HomogConfig,
) -> Result<(EffectiveTensor, SolveReport)> {
    homogenize_with_warm_start(grid, material, physics, cfg, None)
}

pub fn homogenize_with_warm_start(
    grid: &VoxelGrid,
    material: &MaterialModel,
    physics: Physics,
    cfg: &HomogConfig,
    warm: Option<&WarmStart>,
) -> Result<(EffectiveTensor, SolveReport)> {
    let pipeline = HomogPipeline::new(grid, material, physics, cfg)?;
    let (u, report) = pipeline.solve(warm, &cfg.cycle)?;
    let tensor = pipeline.effective_tensor(&u)?;
    Ok((tensor, report))
}

/// Six-mode elasticity solve yielding `C_H`.
pub fn homogenize_elastic(
    grid: &VoxelGrid,
    material: &MaterialModel,
    cfg: &HomogConfig,
) -> Result<(EffectiveTensor, SolveReport)> {
    homogenize(grid, material, Physics::Elasticity, cfg)
}

/// Three-mode thermal solve yielding `kappa_H`.
pub fn homogenize_thermal(
    grid: &VoxelGrid,
    material: &MaterialModel,
    cfg: &HomogConfig,
) -> Result<(EffectiveTensor, SolveReport)> {
    homogenize(grid, material, Physics::Thermal, cfg)
}

/// Ground-truth path for small grids: one-level assembly, eigendecomposition
/// pseudo-inverse solve, same volume averaging. Capped by `dof_cap`.
pub fn homogenize_dense_oracle(
    grid: &VoxelGrid,
    material: &MaterialModel,
    physics: Physics,
    interpolation: Interpolation,
    dof_cap: usize,
) -> Result<EffectiveTensor> {
    let cfg = HomogConfig {
        cycle: CycleConfig::default(),
        levels: Some(1),
        interpolation,
    };
    let pipeline = HomogPipeline::new(grid, material, physics, &cfg)?;
    let k = assemble_dense(pipeline.solver.finest_op(), dof_cap)?;
    let solver = DensePseudoSolver::new(&k);
    let u = solver.solve_field(pipeline.loads());
    pipeline.effective_tensor(&u)
}

/// Aggregate relative residual `||f - K u||_F / ||f||_F` over all modes.
pub fn relative_residual(op: &EbeOperator, u: &Field, f: &Field) -> Result<f64> {
    let r = op.residual(u, f)?;
    let fnorm = f.norm();
    if fnorm == 0.0 {
        return Ok(r.norm());
    }
    Ok(r.norm() / fnorm)
}

/// Entrywise relative property error (delta_mean, delta_max), skipping
/// reference entries below `1e-8 * ||ref||_F`.
pub fn property_error(phi: &DMatrix<f64>, phi_ref: &DMatrix<f64>) -> (f64, f64) {
    assert_eq!(phi.shape(), phi_ref.shape());
    let floor = 1e-8 * phi_ref.norm();
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut max = 0.0f64;
    for i in 0..phi.nrows() {
        for j in 0..phi.ncols() {
            let r = phi_ref[(i, j)];
            if r.abs() < floor {
                continue;
            }
            let d = (phi[(i, j)] - r).abs() / r.abs();
            sum += d;
            count += 1;
            max = max.max(d);
        }
    }
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };
    (mean, max)
}

/// (E, G, K_B) from a 6x6 stiffness matrix via its compliance inverse:
/// `E = 3 / (S00 + S11 + S22)`, `G = 3 / (S33 + S44 + S55)`,
/// `K_B = 1 / sum of the upper-left 3x3 block of S`.
pub fn derived_moduli(c: &DMatrix<f64>) -> Result<(f64, f64, f64)> {
    if c.nrows() != 6 || c.ncols() != 6 {
        return Err(Error::InvalidConfig("derived moduli need a 6x6 tensor".into()));
    }
    let s = c
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidConfig("stiffness tensor is singular".into()))?;
    let e = 3.0 / (s[(0, 0)] + s[(1, 1)] + s[(2, 2)]);
    let g = 3.0 / (s[(3, 3)] + s[(4, 4)] + s[(5, 5)]);
    let mut bulk_compliance = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            bulk_compliance += s[(i, j)];
        }
    }
    let k_b = 1.0 / bulk_compliance;
    Ok((e, g, k_b))
}

/// Voigt index map induced by relabeling old axis `d` as new axis
/// `perm[d]`: `C_new[map[i]][map[j]] = C_old[i][j]`.
pub fn voigt_permutation(perm: [usize; 3]) -> [usize; 6] {
    let pair_to_shear = |a: usize, b: usize| -> usize {
        match (a.min(b), a.max(b)) {
            (1, 2) => 3,
            (0, 2) => 4,
            (0, 1) => 5,
            _ => unreachable!("shear needs two distinct axes"),
        }
    };
    let shear_pairs = [(1usize, 2usize), (0, 2), (0, 1)];
    let mut map = [0usize; 6];
    for d in 0..3 {
        map[d] = perm[d];
    }
    for (v, &(a, b)) in shear_pairs.iter().enumerate() {
        map[3 + v] = pair_to_shear(perm[a], perm[b]);
    }
    map
}
