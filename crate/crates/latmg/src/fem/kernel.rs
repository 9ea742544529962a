//! Element matrices for the trilinear 8-node hexahedron.
//!
//! Elements are axis-aligned boxes of size `h = period / N_res`. Local
//! corner `k` sits at offset `(k & 1, k >> 1 & 1, k >> 2 & 1) * h`. All
//! integrals use 2x2x2 Gauss quadrature, exact for the trilinear basis.
//!
//! Voigt order is (11, 22, 33, 23, 13, 12) with engineering shear strains
//! (gamma = 2 epsilon), so the isotropic stiffness has lambda + 2 mu on the
//! first diagonal block and mu on the shear diagonal.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::voxgeom::MaterialModel;

/// Which cell problem the operator discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Physics {
    Elasticity,
    Thermal,
}

impl Physics {
    /// DOF components per node.
    pub fn dof(&self) -> usize {
        match self {
            Physics::Elasticity => 3,
            Physics::Thermal => 1,
        }
    }

    /// Canonical loading modes: 6 unit strains or 3 unit gradients.
    pub fn modes(&self) -> usize {
        match self {
            Physics::Elasticity => 6,
            Physics::Thermal => 3,
        }
    }

    /// Element matrix dimension (8 nodes x dof).
    pub fn element_dim(&self) -> usize {
        8 * self.dof()
    }
}

/// Unit-material element matrix plus the geometry it was integrated on.
/// Per-element occupancy/SIMP scales are applied by the operator, not here.
#[derive(Debug, Clone)]
pub struct ElementKernel {
    pub physics: Physics,
    /// Physical element edge lengths.
    pub h: [f64; 3],
    /// 24x24 (elasticity) or 8x8 (thermal) symmetric matrix.
    pub matrix: DMatrix<f64>,
    material: MaterialModel,
}

/// Local corner offset of node `k` in `{0,1}^3`.
#[inline]
pub fn corner_offset(k: usize) -> [usize; 3] {
    [k & 1, k >> 1 & 1, k >> 2 & 1]
}

/// Trilinear shape-function gradients (physical) at local point `t` in
/// `[0,1]^3` of an `h`-sized box.
fn shape_gradients(t: [f64; 3], h: [f64; 3]) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for (k, gk) in g.iter_mut().enumerate() {
        let o = corner_offset(k);
        let f = [
            if o[0] == 0 { 1.0 - t[0] } else { t[0] },
            if o[1] == 0 { 1.0 - t[1] } else { t[1] },
            if o[2] == 0 { 1.0 - t[2] } else { t[2] },
        ];
        let df = [
            if o[0] == 0 { -1.0 } else { 1.0 },
            if o[1] == 0 { -1.0 } else { 1.0 },
            if o[2] == 0 { -1.0 } else { 1.0 },
        ];
        gk[0] = df[0] * f[1] * f[2] / h[0];
        gk[1] = f[0] * df[1] * f[2] / h[1];
        gk[2] = f[0] * f[1] * df[2] / h[2];
    }
    g
}

const GAUSS_1D: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_88, // (1 - 1/sqrt(3)) / 2
    0.5 + 0.288_675_134_594_812_88,
];

/// Isotropic elasticity tensor in Voigt form (engineering shear).
pub fn isotropic_voigt(material: &MaterialModel) -> DMatrix<f64> {
    let (lambda, mu) = material.lame();
    let mut c = DMatrix::zeros(6, 6);
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = lambda;
        }
        c[(i, i)] = lambda + 2.0 * mu;
        c[(i + 3, i + 3)] = mu;
    }
    c
}

/// Element stiffness `K_e = integral of B^T C B` for the base material.
pub fn element_stiffness_elastic(material: &MaterialModel, h: [f64; 3]) -> Result<ElementKernel> {
    material.validate()?;
    check_h(h)?;
    let c = isotropic_voigt(material);
    let mut k = DMatrix::zeros(24, 24);
    let w = 0.125 * h[0] * h[1] * h[2]; // (1/2)^3 quadrature weight x volume
    for &tx in &GAUSS_1D {
        for &ty in &GAUSS_1D {
            for &tz in &GAUSS_1D {
                let g = shape_gradients([tx, ty, tz], h);
                let mut b = DMatrix::zeros(6, 24);
                for (a, ga) in g.iter().enumerate() {
                    b[(0, 3 * a)] = ga[0];
                    b[(1, 3 * a + 1)] = ga[1];
                    b[(2, 3 * a + 2)] = ga[2];
                    b[(3, 3 * a + 1)] = ga[2];
                    b[(3, 3 * a + 2)] = ga[1];
                    b[(4, 3 * a)] = ga[2];
                    b[(4, 3 * a + 2)] = ga[0];
                    b[(5, 3 * a)] = ga[1];
                    b[(5, 3 * a + 1)] = ga[0];
                }
                k += w * b.transpose() * &c * b;
            }
        }
    }
    symmetrize(&mut k);
    Ok(ElementKernel { physics: Physics::Elasticity, h, matrix: k, material: *material })
}

/// Element conductivity `K_e = integral of grad(N)^T kappa grad(N)`.
pub fn element_matrix_thermal(material: &MaterialModel, h: [f64; 3]) -> Result<ElementKernel> {
    material.validate()?;
    check_h(h)?;
    let mut k = DMatrix::zeros(8, 8);
    let w = 0.125 * h[0] * h[1] * h[2] * material.kappa;
    for &tx in &GAUSS_1D {
        for &ty in &GAUSS_1D {
            for &tz in &GAUSS_1D {
                let g = shape_gradients([tx, ty, tz], h);
                for a in 0..8 {
                    for b in 0..8 {
                        k[(a, b)] += w * (g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2]);
                    }
                }
            }
        }
    }
    symmetrize(&mut k);
    Ok(ElementKernel { physics: Physics::Thermal, h, matrix: k, material: *material })
}

/// Kernel for a given physics.
pub fn element_kernel(physics: Physics, material: &MaterialModel, h: [f64; 3]) -> Result<ElementKernel> {
    match physics {
        Physics::Elasticity => element_stiffness_elastic(material, h),
        Physics::Thermal => element_matrix_thermal(material, h),
    }
}

fn check_h(h: [f64; 3]) -> Result<()> {
    if h.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("element size must be positive, got {h:?}")));
    }
    Ok(())
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

impl ElementKernel {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn material(&self) -> &MaterialModel {
        &self.material
    }

    /// Element-local nodal values of the affine reference field for one
    /// canonical loading mode: displacements of a unit Voigt strain, or the
    /// linear temperature ramp of a unit gradient. The constant offset is
    /// irrelevant because it sits in the element null space.
    pub fn affine_mode(&self, mode: usize) -> Vec<f64> {
        match self.physics {
            Physics::Elasticity => {
                assert!(mode < 6);
                // Symmetric strain matrix of the Voigt unit mode; engineering
                // shears put 1/2 on the off-diagonals.
                let mut eps = [[0.0f64; 3]; 3];
                match mode {
                    0 => eps[0][0] = 1.0,
                    1 => eps[1][1] = 1.0,
                    2 => eps[2][2] = 1.0,
                    3 => {
                        eps[1][2] = 0.5;
                        eps[2][1] = 0.5;
                    }
                    4 => {
                        eps[0][2] = 0.5;
                        eps[2][0] = 0.5;
                    }
                    _ => {
                        eps[0][1] = 0.5;
                        eps[1][0] = 0.5;
                    }
                }
                let mut out = vec![0.0; 24];
                for k in 0..8 {
                    let o = corner_offset(k);
                    let x = [o[0] as f64 * self.h[0], o[1] as f64 * self.h[1], o[2] as f64 * self.h[2]];
                    for i in 0..3 {
                        out[3 * k + i] = eps[i][0] * x[0] + eps[i][1] * x[1] + eps[i][2] * x[2];
                    }
                }
                out
            }
            Physics::Thermal => {
                assert!(mode < 3);
                let mut out = vec![0.0; 8];
                for (k, slot) in out.iter_mut().enumerate() {
                    let o = corner_offset(k);
                    *slot = o[mode] as f64 * self.h[mode];
                }
                out
            }
        }
    }

    /// Element load vector for one mode: `f_e = K_e x0`. Exact because the
    /// trilinear basis reproduces affine fields.
    pub fn mode_load(&self, mode: usize) -> Vec<f64> {
        let x0 = self.affine_mode(mode);
        let dim = self.dim();
        let mut f = vec![0.0; dim];
        for (r, fr) in f.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..dim {
                acc += self.matrix[(r, c)] * x0[c];
            }
            *fr = acc;
        }
        f
    }
}
