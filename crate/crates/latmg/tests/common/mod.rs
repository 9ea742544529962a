//! Shared oracles and fixtures for the integration suites.
//!
//! The element-matrix oracle integrates the full fourth-order isotropic
//! tensor contraction with 4-point Gauss quadrature - a different route
//! from the library's Voigt B-matrix assembly with 2-point quadrature -
//! so agreement pins both the quadrature and the shear convention.

#![allow(dead_code)]

use latmg::cycles::{CycleConfig, MgSolver};
use latmg::fem::{element_kernel, EbeOperator, Physics};
use latmg::field::Field;
use latmg::hierarchy::build_hierarchy;
use latmg::voxgeom::{
    generate_laminate, generate_tpms_with_volume_fraction, Axis, GridKind, MaterialModel,
    TpmsKind, VoxelGrid,
};
use nalgebra::DMatrix;

/// 4-point Gauss-Legendre rule on [0, 1].
const GAUSS4_X: [f64; 4] = [
    0.5 - 0.430_568_155_797_026_3, // (1 - 0.8611363115940526) / 2
    0.5 - 0.169_990_521_792_428_13,
    0.5 + 0.169_990_521_792_428_13,
    0.5 + 0.430_568_155_797_026_3,
];
const GAUSS4_W: [f64; 4] = [
    0.173_927_422_568_726_9, // 0.3478548451374538 / 2
    0.326_072_577_431_273_1,
    0.326_072_577_431_273_1,
    0.173_927_422_568_726_9,
];

fn corner(k: usize) -> [usize; 3] {
    [k & 1, k >> 1 & 1, k >> 2 & 1]
}

/// Physical shape-function gradients at local point `t` (independent
/// implementation; see the library kernel for the production one).
fn grad_n(t: [f64; 3], h: [f64; 3]) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for (k, gk) in g.iter_mut().enumerate() {
        let o = corner(k);
        let v = |d: usize| if o[d] == 0 { 1.0 - t[d] } else { t[d] };
        let s = |d: usize| if o[d] == 0 { -1.0 } else { 1.0 };
        gk[0] = s(0) * v(1) * v(2) / h[0];
        gk[1] = v(0) * s(1) * v(2) / h[1];
        gk[2] = v(0) * v(1) * s(2) / h[2];
    }
    g
}

/// Isotropic stiffness tensor entry `C_{ijkl}`.
fn c_ijkl(lambda: f64, mu: f64, i: usize, j: usize, k: usize, l: usize) -> f64 {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    lambda * d(i, j) * d(k, l) + mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k))
}

/// Oracle elastic element stiffness via the full tensor contraction:
/// `K[3a+i][3b+j] = integral sum_{k,l} C_{ikjl} dN_a/dx_k dN_b/dx_l`.
pub fn oracle_elastic_kernel(material: &MaterialModel, h: [f64; 3]) -> DMatrix<f64> {
    let (lambda, mu) = material.lame();
    let mut k = DMatrix::zeros(24, 24);
    for (gx, &tx) in GAUSS4_X.iter().enumerate() {
        for (gy, &ty) in GAUSS4_X.iter().enumerate() {
            for (gz, &tz) in GAUSS4_X.iter().enumerate() {
                let w = GAUSS4_W[gx] * GAUSS4_W[gy] * GAUSS4_W[gz] * h[0] * h[1] * h[2];
                let g = grad_n([tx, ty, tz], h);
                for a in 0..8 {
                    for b in 0..8 {
                        for i in 0..3 {
                            for j in 0..3 {
                                let mut acc = 0.0;
                                for kk in 0..3 {
                                    for ll in 0..3 {
                                        acc += c_ijkl(lambda, mu, i, kk, j, ll) * g[a][kk] * g[b][ll];
                                    }
                                }
                                k[(3 * a + i, 3 * b + j)] += w * acc;
                            }
                        }
                    }
                }
            }
        }
    }
    k
}

/// Oracle thermal element matrix with 4-point quadrature.
pub fn oracle_thermal_kernel(material: &MaterialModel, h: [f64; 3]) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(8, 8);
    for (gx, &tx) in GAUSS4_X.iter().enumerate() {
        for (gy, &ty) in GAUSS4_X.iter().enumerate() {
            for (gz, &tz) in GAUSS4_X.iter().enumerate() {
                let w =
                    GAUSS4_W[gx] * GAUSS4_W[gy] * GAUSS4_W[gz] * h[0] * h[1] * h[2] * material.kappa;
                let g = grad_n([tx, ty, tz], h);
                for a in 0..8 {
                    for b in 0..8 {
                        k[(a, b)] += w * (g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2]);
                    }
                }
            }
        }
    }
    k
}

/// Oracle element load for one elastic Voigt mode:
/// `f[3a+i] = integral sum_k sigma_bar_{ik} dN_a/dx_k`
/// with `sigma_bar = lambda tr(eps) I + 2 mu eps`.
pub fn oracle_elastic_mode_load(material: &MaterialModel, h: [f64; 3], mode: usize) -> Vec<f64> {
    let (lambda, mu) = material.lame();
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
    let tr = eps[0][0] + eps[1][1] + eps[2][2];
    let mut sigma = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            sigma[i][j] = 2.0 * mu * eps[i][j] + if i == j { lambda * tr } else { 0.0 };
        }
    }
    let mut f = vec![0.0; 24];
    for (gx, &tx) in GAUSS4_X.iter().enumerate() {
        for (gy, &ty) in GAUSS4_X.iter().enumerate() {
            for (gz, &tz) in GAUSS4_X.iter().enumerate() {
                let w = GAUSS4_W[gx] * GAUSS4_W[gy] * GAUSS4_W[gz] * h[0] * h[1] * h[2];
                let g = grad_n([tx, ty, tz], h);
                for a in 0..8 {
                    for i in 0..3 {
                        let mut acc = 0.0;
                        for k in 0..3 {
                            acc += sigma[i][k] * g[a][k];
                        }
                        f[3 * a + i] += w * acc;
                    }
                }
            }
        }
    }
    f
}

/// Oracle thermal element load for gradient direction `mode`.
pub fn oracle_thermal_mode_load(material: &MaterialModel, h: [f64; 3], mode: usize) -> Vec<f64> {
    let mut f = vec![0.0; 8];
    for (gx, &tx) in GAUSS4_X.iter().enumerate() {
        for (gy, &ty) in GAUSS4_X.iter().enumerate() {
            for (gz, &tz) in GAUSS4_X.iter().enumerate() {
                let w =
                    GAUSS4_W[gx] * GAUSS4_W[gy] * GAUSS4_W[gz] * h[0] * h[1] * h[2] * material.kappa;
                let g = grad_n([tx, ty, tz], h);
                for a in 0..8 {
                    f[a] += w * g[a][mode];
                }
            }
        }
    }
    f
}

/// Deterministic pseudo-random field in [-0.5, 0.5).
pub fn seeded_field(level: usize, nodes: usize, dof: usize, modes: usize, seed: u64) -> Field {
    let mut f = Field::zeros(level, nodes, dof, modes);
    let mut state = seed | 1;
    for v in f.data_mut() {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *v = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
    }
    f
}

/// Long Jacobi-preconditioned CG on the EBE operator, independent of the
/// multigrid machinery; the `r <= tol` exit makes it a truncatable oracle.
pub fn reference_pcg(op: &EbeOperator, f: &Field, tol: f64, max_iters: usize) -> (Field, f64) {
    let fnorm = f.norm();
    let mut u = op.zeros_like(f.modes);
    if fnorm == 0.0 {
        return (u, 0.0);
    }
    let diag = op.diagonal();
    let modes = f.modes;
    let precond = |r: &Field| {
        let mut z = r.clone();
        for (i, v) in z.data_mut().iter_mut().enumerate() {
            *v /= diag.data()[i / modes];
        }
        z
    };
    let mut r = f.clone();
    r.subtract_mean();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot_per_mode(&z);
    let mut rel = r.norm() / fnorm;
    for _ in 0..max_iters {
        if rel <= tol {
            break;
        }
        let q = op.apply(&p).unwrap();
        let pq = p.dot_per_mode(&q);
        let alpha: Vec<f64> = rz
            .iter()
            .zip(&pq)
            .map(|(&n, &d)| if d.abs() < 1e-300 { 0.0 } else { n / d })
            .collect();
        u.axpy_per_mode(&alpha, &p);
        let na: Vec<f64> = alpha.iter().map(|a| -a).collect();
        r.axpy_per_mode(&na, &q);
        r.subtract_mean();
        z = precond(&r);
        let rz_new = r.dot_per_mode(&z);
        let beta: Vec<f64> = rz_new
            .iter()
            .zip(&rz)
            .map(|(&n, &d)| if d.abs() < 1e-300 { 0.0 } else { n / d })
            .collect();
        p.xpby_per_mode(&z, &beta);
        rz = rz_new;
        rel = r.norm() / fnorm;
    }
    (u, rel)
}

/// Axis-aligned cross of square-section rods through the cell center;
/// a truss-like connected unit cell.
pub fn rod_lattice(n: usize, half_width: usize) -> VoxelGrid {
    let c = n / 2;
    let near = |a: usize| -> bool {
        let d = a as i64 - c as i64;
        d.unsigned_abs() as usize <= half_width
    };
    let mut values = vec![0.0; n * n * n];
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let rod_x = near(y) && near(z);
                let rod_y = near(x) && near(z);
                let rod_z = near(x) && near(y);
                if rod_x || rod_y || rod_z {
                    values[x + n * (y + n * z)] = 1.0;
                }
            }
        }
    }
    VoxelGrid::new(n, [1.0; 3], GridKind::Occupancy, values).unwrap()
}

/// The fixed 10-geometry evaluation suite (16^3, connected, deterministic).
pub fn geometry_suite() -> Vec<(String, VoxelGrid)> {
    let n = 16;
    let mut suite: Vec<(String, VoxelGrid)> = Vec::new();
    for (kind, vf) in [
        (TpmsKind::Gyroid, 0.30),
        (TpmsKind::SchwarzP, 0.30),
        (TpmsKind::Diamond, 0.30),
        (TpmsKind::Gyroid, 0.50),
        (TpmsKind::SchwarzP, 0.45),
        (TpmsKind::Diamond, 0.40),
    ] {
        suite.push((
            format!("{kind:?}-vf{vf:.2}"),
            generate_tpms_with_volume_fraction(kind, n, vf).unwrap(),
        ));
    }
    suite.push(("laminate-x8".into(), generate_laminate(n, Axis::X, 8).unwrap()));
    suite.push(("laminate-z6".into(), generate_laminate(n, Axis::Z, 6).unwrap()));
    suite.push(("rods-w1".into(), rod_lattice(n, 1)));
    suite.push(("rods-w2".into(), rod_lattice(n, 2)));
    suite
}

/// Multigrid solver stack for a grid.
pub fn solver_for(grid: &VoxelGrid, physics: Physics, levels: usize) -> MgSolver {
    let hierarchy = build_hierarchy(grid, levels).unwrap();
    let kernel = element_kernel(physics, &MaterialModel::default(), grid.element_size()).unwrap();
    let scales: Vec<f64> =
        hierarchy.level(1).elements.iter().map(|&e| grid.values()[e as usize]).collect();
    MgSolver::new(hierarchy, kernel, scales).unwrap()
}

/// Default cycle config with the given tolerance and cycle cap.
pub fn cycle_cfg(tol: f64, max_cycles: usize) -> CycleConfig {
    CycleConfig::default().with_tol(tol).with_max_cycles(max_cycles)
}
