//! Element matrices and matrix-free element-by-element operators, for
//! elasticity (3 DOF/node) and heat conduction (1 DOF/node), plus Galerkin
//! coarse operators and a dense-assembly oracle for small problems.

mod dense;
mod kernel;
mod operator;

pub use dense::{assemble_dense, DensePseudoSolver, DENSE_DOF_CAP};
pub use kernel::{
    corner_offset, element_kernel, element_matrix_thermal, element_stiffness_elastic,
    isotropic_voigt, ElementKernel, Physics,
};
pub use operator::{
    galerkin_coarse_kernel, galerkin_coarse_operator, local_patch_prolongation, EbeOperator,
};
