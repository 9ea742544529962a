//! Dense assembly and pseudo-inverse solves.
//!
//! Test-oracle and ground-truth path only: the solver itself never stores a
//! global matrix. Capped so it cannot be applied to large problems by
//! accident.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fem::operator::EbeOperator;
use crate::field::Field;

/// Default DOF cap for dense assembly.
pub const DENSE_DOF_CAP: usize = 4096;

/// Assemble the full symmetric matrix of an operator. Errors above `cap`
/// DOFs (pass [`DENSE_DOF_CAP`] for the default).
pub fn assemble_dense(op: &EbeOperator, cap: usize) -> Result<DMatrix<f64>> {
    let dof = op.physics().dof();
    let n = op.num_dofs();
    if n > cap {
        return Err(Error::DenseCapExceeded { dofs: n, cap });
    }
    let topo = op.topology();
    let mut k = DMatrix::zeros(n, n);
    for e in 0..topo.num_elements() {
        let m = op.element_matrix(e);
        let inc = &topo.element_nodes[e];
        for (a, &na) in inc.iter().enumerate() {
            for (b, &nb) in inc.iter().enumerate() {
                for da in 0..dof {
                    for db in 0..dof {
                        k[(na as usize * dof + da, nb as usize * dof + db)] +=
                            m[(a * dof + da, b * dof + db)];
                    }
                }
            }
        }
    }
    Ok(k)
}

/// Minimum-norm solution of the symmetric positive semidefinite system
/// `K x = b` via an eigendecomposition pseudo-inverse. Eigenvalues below
/// `1e-10 * lambda_max` are treated as null space, which covers the gauge
/// modes and any floating-fragment mechanisms of disconnected geometry.
pub struct DensePseudoSolver {
    basis: DMatrix<f64>,
    inv_eigs: Vec<f64>,
}

impl DensePseudoSolver {
    pub fn new(k: &DMatrix<f64>) -> Self {
        let eig = nalgebra::SymmetricEigen::new(k.clone());
        let max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let cut = 1e-10 * max;
        let inv_eigs = eig
            .eigenvalues
            .iter()
            .map(|&v| if v.abs() <= cut { 0.0 } else { 1.0 / v })
            .collect();
        Self { basis: eig.eigenvectors, inv_eigs }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let bv = nalgebra::DVector::from_column_slice(b);
        let mut coeffs = self.basis.transpose() * bv;
        for (c, &iv) in coeffs.iter_mut().zip(&self.inv_eigs) {
            *c *= iv;
        }
        let x = &self.basis * coeffs;
        let mut out = vec![0.0; n];
        out.copy_from_slice(x.as_slice());
        out
    }

    /// Solve every mode of a multi-mode field.
    pub fn solve_field(&self, f: &Field) -> Field {
        let mut out = Field::zeros(f.level, f.num_nodes(), f.dof, f.modes);
        for mode in 0..f.modes {
            let b = f.mode_vector(mode);
            out.set_mode_vector(mode, &self.solve_vec(&b));
        }
        out
    }
}
