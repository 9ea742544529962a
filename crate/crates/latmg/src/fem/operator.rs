//! Matrix-free element-by-element operator application.
//!
//! The global matrix is never stored. `K u` is evaluated node-wise: each
//! active node gathers the rows it owns from the (scaled) matrices of its
//! incident elements. Every output slot is written by exactly one task with
//! a fixed accumulation order, so apply/residual/diagonal are data-parallel
//! and bitwise deterministic at the same time.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fem::kernel::{corner_offset, ElementKernel, Physics};
use crate::field::Field;
use crate::hierarchy::LevelTopology;
use crate::parallel::for_each_chunk_mut;

/// Row-major square matrix, sized for unchecked hot-loop access.
#[derive(Debug, Clone)]
struct FlatMatrix {
    dim: usize,
    a: Vec<f64>,
}

impl FlatMatrix {
    fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let dim = m.nrows();
        let mut a = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                a.push(m[(r, c)]);
            }
        }
        Self { dim, a }
    }

    #[inline]
    fn get(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.dim + c]
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| self.get(r, c))
    }
}

#[derive(Debug, Clone)]
enum OperatorBody {
    /// One shared kernel, one scale per active element (finest level).
    Uniform { kernel: ElementKernel, flat: FlatMatrix, scales: Vec<f64> },
    /// One matrix per active element (Galerkin-coarsened levels).
    PerElement { matrices: Vec<FlatMatrix> },
}

/// Matrix-free discrete operator over the active elements of one level.
#[derive(Debug, Clone)]
pub struct EbeOperator {
    topo: Arc<LevelTopology>,
    physics: Physics,
    body: OperatorBody,
    /// Per-DOF diagonal, strictly positive on active DOFs.
    diag: Vec<f64>,
}

impl EbeOperator {
    /// Finest-level operator: shared unit-material kernel plus per-element
    /// scales (occupancy values or SIMP factors), ordered like
    /// `topo.elements`.
    pub fn with_uniform_kernel(
        topo: Arc<LevelTopology>,
        kernel: ElementKernel,
        scales: Vec<f64>,
    ) -> Result<Self> {
        if scales.len() != topo.num_elements() {
            return Err(Error::ShapeMismatch(format!(
                "{} scales for {} active elements",
                scales.len(),
                topo.num_elements()
            )));
        }
        if scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig("element scales must be positive".into()));
        }
        let physics = kernel.physics;
        let flat = FlatMatrix::from_dmatrix(&kernel.matrix);
        let body = OperatorBody::Uniform { kernel, flat, scales };
        let mut op = Self { topo, physics, body, diag: Vec::new() };
        op.diag = op.compute_diagonal()?;
        Ok(op)
    }

    /// Coarse operator from explicit per-element matrices.
    pub fn from_element_matrices(
        topo: Arc<LevelTopology>,
        physics: Physics,
        matrices: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if matrices.len() != topo.num_elements() {
            return Err(Error::ShapeMismatch(format!(
                "{} matrices for {} active elements",
                matrices.len(),
                topo.num_elements()
            )));
        }
        let dim = physics.element_dim();
        for m in &matrices {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "element matrix is {}x{}, expected {dim}x{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let body =
            OperatorBody::PerElement { matrices: matrices.iter().map(FlatMatrix::from_dmatrix).collect() };
        let mut op = Self { topo, physics, body, diag: Vec::new() };
        op.diag = op.compute_diagonal()?;
        Ok(op)
    }

    pub fn physics(&self) -> Physics {
        self.physics
    }

    pub fn topology(&self) -> &LevelTopology {
        &self.topo
    }

    pub fn topology_shared(&self) -> Arc<LevelTopology> {
        Arc::clone(&self.topo)
    }

    pub fn level(&self) -> usize {
        self.topo.level
    }

    pub fn num_dofs(&self) -> usize {
        self.topo.num_nodes() * self.physics.dof()
    }

    /// The element matrix and scale factor for one active element; the two
    /// multiply together, kept apart to avoid materializing scaled copies
    /// on the finest level.
    fn element_parts(&self, e: usize) -> (&FlatMatrix, f64) {
        match &self.body {
            OperatorBody::Uniform { flat, scales, .. } => (flat, scales[e]),
            OperatorBody::PerElement { matrices } => (&matrices[e], 1.0),
        }
    }

    /// Scaled element matrix as a dense copy (Galerkin assembly, oracles).
    pub fn element_matrix(&self, e: usize) -> DMatrix<f64> {
        let (m, s) = self.element_parts(e);
        let mut d = m.to_dmatrix();
        if s != 1.0 {
            d *= s;
        }
        d
    }

    /// Per-element scales when the operator is kernel-backed.
    pub fn scales(&self) -> Option<&[f64]> {
        match &self.body {
            OperatorBody::Uniform { scales, .. } => Some(scales),
            OperatorBody::PerElement { .. } => None,
        }
    }

    pub fn kernel(&self) -> Option<&ElementKernel> {
        match &self.body {
            OperatorBody::Uniform { kernel, .. } => Some(kernel),
            OperatorBody::PerElement { .. } => None,
        }
    }

    /// Replace the per-element scales (SIMP updates); topology unchanged.
    pub fn set_scales(&mut self, scales: Vec<f64>) -> Result<()> {
        match &mut self.body {
            OperatorBody::Uniform { scales: s, .. } => {
                if scales.len() != s.len() {
                    return Err(Error::ShapeMismatch("scale count changed".into()));
                }
                if scales.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidConfig("element scales must be positive".into()));
                }
                *s = scales;
            }
            OperatorBody::PerElement { .. } => {
                return Err(Error::InvalidConfig(
                    "cannot set scales on a per-element-matrix operator".into(),
                ));
            }
        }
        self.diag = self.compute_diagonal()?;
        Ok(())
    }

    pub fn zeros_like(&self, modes: usize) -> Field {
        Field::zeros(self.topo.level, self.topo.num_nodes(), self.physics.dof(), modes)
    }

    fn check_field(&self, u: &Field) -> Result<()> {
        if u.level != self.topo.level
            || u.num_nodes() != self.topo.num_nodes()
            || u.dof != self.physics.dof()
        {
            return Err(Error::ShapeMismatch(format!(
                "field (level {}, {} nodes, dof {}) does not match operator (level {}, {} nodes, dof {})",
                u.level,
                u.num_nodes(),
                u.dof,
                self.topo.level,
                self.topo.num_nodes(),
                self.physics.dof()
            )));
        }
        Ok(())
    }

    /// `out = K u`.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        let mut out = self.zeros_like(u.modes);
        self.apply_into(u, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, u: &Field, out: &mut Field) -> Result<()> {
        self.check_field(u)?;
        self.check_field(out)?;
        if u.modes != out.modes {
            return Err(Error::ShapeMismatch("mode count mismatch".into()));
        }
        let dof = self.physics.dof();
        let modes = u.modes;
        let stride = dof * modes;
        let topo = &*self.topo;
        let udata = u.data();
        let out_data = out.data_mut();
        for_each_chunk_mut(out_data, stride, |node, row| {
            row.fill(0.0);
            for &(e, a) in topo.node_elements(node) {
                let (m, s) = self.element_parts(e as usize);
                let inc = &topo.element_nodes[e as usize];
                let a = a as usize;
                for (b, &nj) in inc.iter().enumerate() {
                    let ubase = nj as usize * stride;
                    for di in 0..dof {
                        for dj in 0..dof {
                            let k = s * m.get(a * dof + di, b * dof + dj);
                            let urow = &udata[ubase + dj * modes..ubase + dj * modes + modes];
                            let orow = &mut row[di * modes..di * modes + modes];
                            for (o, uu) in orow.iter_mut().zip(urow) {
                                *o += k * uu;
                            }
                        }
                    }
                }
            }
        });
        Ok(())
    }

    /// `r = f - K u`.
    pub fn residual(&self, u: &Field, f: &Field) -> Result<Field> {
        let mut r = self.apply(u)?;
        f.check_same_shape(&r)?;
        for (rv, fv) in r.data_mut().iter_mut().zip(f.data()) {
            *rv = fv - *rv;
        }
        Ok(r)
    }

    /// Rows of `K u` for a subset of nodes, written into `out` rows indexed
    /// the same way as `nodes` (used by color sweeps).
    pub(crate) fn apply_rows(&self, u: &Field, nodes: &[u32], out: &mut [f64]) {
        let dof = self.physics.dof();
        let modes = u.modes;
        let stride = dof * modes;
        debug_assert_eq!(out.len(), nodes.len() * stride);
        let topo = &*self.topo;
        let udata = u.data();
        for_each_chunk_mut(out, stride, |row_idx, row| {
            let node = nodes[row_idx] as usize;
            row.fill(0.0);
            for &(e, a) in topo.node_elements(node) {
                let (m, s) = self.element_parts(e as usize);
                let inc = &topo.element_nodes[e as usize];
                let a = a as usize;
                for (b, &nj) in inc.iter().enumerate() {
                    let ubase = nj as usize * stride;
                    for di in 0..dof {
                        for dj in 0..dof {
                            let k = s * m.get(a * dof + di, b * dof + dj);
                            let urow = &udata[ubase + dj * modes..ubase + dj * modes + modes];
                            let orow = &mut row[di * modes..di * modes + modes];
                            for (o, uu) in orow.iter_mut().zip(urow) {
                                *o += k * uu;
                            }
                        }
                    }
                }
            }
        });
    }

    /// Per-DOF diagonal of the assembled operator as a 1-mode field.
    pub fn diagonal(&self) -> Field {
        let dof = self.physics.dof();
        let mut f = Field::zeros(self.topo.level, self.topo.num_nodes(), dof, 1);
        f.data_mut().copy_from_slice(&self.diag);
        f
    }

    pub(crate) fn diag_slice(&self) -> &[f64] {
        &self.diag
    }

    fn compute_diagonal(&self) -> Result<Vec<f64>> {
        let dof = self.physics.dof();
        let topo = &*self.topo;
        let mut diag = vec![0.0; topo.num_nodes() * dof];
        for_each_chunk_mut(&mut diag, dof, |node, row| {
            for &(e, a) in topo.node_elements(node) {
                let (m, s) = self.element_parts(e as usize);
                let a = a as usize;
                for (d, slot) in row.iter_mut().enumerate() {
                    *slot += s * m.get(a * dof + d, a * dof + d);
                }
            }
        });
        for (i, &d) in diag.iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::ZeroDiagonal { node: i / dof, component: i % dof });
            }
        }
        Ok(diag)
    }
}

/// Local trilinear prolongation from the 8 corners of a coarse element to
/// the 3x3x3 fine node patch, expanded per DOF component.
pub fn local_patch_prolongation(physics: Physics) -> DMatrix<f64> {
    let dof = physics.dof();
    let mut p = DMatrix::zeros(27 * dof, 8 * dof);
    for qz in 0..3usize {
        for qy in 0..3usize {
            for qx in 0..3usize {
                let q = [qx, qy, qz];
                let qi = qx + 3 * qy + 9 * qz;
                for c in 0..8usize {
                    let o = corner_offset(c);
                    let mut w = 1.0;
                    for d in 0..3 {
                        let xi = q[d] as f64 / 2.0;
                        w *= 1.0 - (xi - o[d] as f64).abs();
                    }
                    if w == 0.0 {
                        continue;
                    }
                    for d in 0..dof {
                        p[(qi * dof + d, c * dof + d)] = w;
                    }
                }
            }
        }
    }
    p
}

/// Galerkin coarse matrix `R_loc K_patch P_loc` for one active coarse
/// element: the 2x2x2 patch of active fine children is assembled on the
/// 27-node fine patch and projected through the local trilinear transfer.
pub fn galerkin_coarse_kernel(
    fine_op: &EbeOperator,
    coarse_topo: &LevelTopology,
    coarse_element: usize,
) -> Result<DMatrix<f64>> {
    if coarse_element >= coarse_topo.num_elements() {
        return Err(Error::InvalidConfig(format!(
            "coarse element {coarse_element} out of range ({} active)",
            coarse_topo.num_elements()
        )));
    }
    let p_loc = local_patch_prolongation(fine_op.physics());
    Ok(galerkin_kernel_with(fine_op, coarse_topo, coarse_element, &p_loc))
}

fn galerkin_kernel_with(
    fine_op: &EbeOperator,
    coarse_topo: &LevelTopology,
    coarse_element: usize,
    p_loc: &DMatrix<f64>,
) -> DMatrix<f64> {
    let dof = fine_op.physics().dof();
    let fine_topo = fine_op.topology();
    let cc = coarse_topo.element_coord(coarse_element);
    let mut k_patch = DMatrix::zeros(27 * dof, 27 * dof);
    for child in 0..8usize {
        let a = corner_offset(child);
        let fc = [2 * cc[0] + a[0], 2 * cc[1] + a[1], 2 * cc[2] + a[2]];
        let Some(fe) = fine_topo.element_index(fc) else {
            continue;
        };
        let m = fine_op.element_matrix(fe);
        // Scatter the child's 8 corners into the 3^3 patch.
        let mut patch_nodes = [0usize; 8];
        for (k, slot) in patch_nodes.iter_mut().enumerate() {
            let o = corner_offset(k);
            *slot = (a[0] + o[0]) + 3 * (a[1] + o[1]) + 9 * (a[2] + o[2]);
        }
        for (r, &pr) in patch_nodes.iter().enumerate() {
            for (c, &pc) in patch_nodes.iter().enumerate() {
                for dr in 0..dof {
                    for dc in 0..dof {
                        k_patch[(pr * dof + dr, pc * dof + dc)] += m[(r * dof + dr, c * dof + dc)];
                    }
                }
            }
        }
    }
    let mut kc = p_loc.transpose() * k_patch * p_loc;
    // Exact symmetry, drop roundoff skew from the triple product.
    let n = kc.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (kc[(i, j)] + kc[(j, i)]);
            kc[(i, j)] = v;
            kc[(j, i)] = v;
        }
    }
    kc
}

/// Build the whole coarse operator by Galerkin projection of `fine_op`
/// onto `coarse_topo`.
pub fn galerkin_coarse_operator(
    fine_op: &EbeOperator,
    coarse_topo: Arc<LevelTopology>,
) -> Result<EbeOperator> {
    if coarse_topo.resolution * 2 != fine_op.topology().resolution
        || coarse_topo.level != fine_op.topology().level + 1
    {
        return Err(Error::ShapeMismatch(format!(
            "coarse level {} (N={}) is not the child of fine level {} (N={})",
            coarse_topo.level,
            coarse_topo.resolution,
            fine_op.topology().level,
            fine_op.topology().resolution
        )));
    }
    let p_loc = local_patch_prolongation(fine_op.physics());
    let matrices = crate::parallel::map_indexed(coarse_topo.num_elements(), |e| {
        galerkin_kernel_with(fine_op, &coarse_topo, e, &p_loc)
    });
    EbeOperator::from_element_matrices(coarse_topo, fine_op.physics(), matrices)
}
