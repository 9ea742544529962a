//! Smoothers: damped Jacobi, 8-color Gauss-Seidel, SOR, and CG / Jacobi-PCG
//! under a fixed iteration budget.
//!
//! Nodes are colored by coordinate parity
//! `color = (x mod 2) + 2 (y mod 2) + 4 (z mod 2)`; the 8 vertices of any
//! element differ pairwise in at least one coordinate parity, so they carry
//! 8 distinct colors and within-color parallel updates reproduce sequential
//! Gauss-Seidel exactly. Krylov smoothers run exactly `iterations` steps
//! (no tolerance exit) and project the per-mode mean out of the working
//! residual to stay on the range of the singular periodic operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::EbeOperator;
use crate::field::Field;
use crate::hierarchy::LevelTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    Jacobi,
    Gs8,
    Sor,
    Cg,
    PcgJacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub kind: SmootherKind,
    pub iterations: usize,
    /// Relaxation factor in (0, 2). Ignored by cg/pcg.
    pub omega: f64,
}

impl SmootherConfig {
    /// Config with the conventional default damping: 0.6 for Jacobi,
    /// 1.0 otherwise.
    pub fn new(kind: SmootherKind, iterations: usize) -> Self {
        let omega = match kind {
            SmootherKind::Jacobi => 0.6,
            _ => 1.0,
        };
        Self { kind, iterations, omega }
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("smoother iterations must be >= 1".into()));
        }
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::InvalidConfig(format!(
                "relaxation omega must lie in (0, 2), got {}",
                self.omega
            )));
        }
        Ok(())
    }
}

/// Parity color of a node coordinate.
#[inline]
pub fn node_color(coord: [usize; 3]) -> usize {
    (coord[0] % 2) + 2 * (coord[1] % 2) + 4 * (coord[2] % 2)
}

/// The 8 disjoint color classes of a level's active nodes.
#[derive(Debug, Clone)]
pub struct ColorPartition {
    classes: [Vec<u32>; 8],
}

impl ColorPartition {
    pub fn class(&self, color: usize) -> &[u32] {
        &self.classes[color]
    }

    pub fn total(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }
}

/// Partition active nodes by parity and check that every element sees 8
/// distinct colors (valid for even resolutions, which the hierarchy
/// guarantees).
pub fn color_nodes(topo: &LevelTopology) -> Result<ColorPartition> {
    let mut classes: [Vec<u32>; 8] = Default::default();
    for node in 0..topo.num_nodes() {
        classes[node_color(topo.node_coord(node))].push(node as u32);
    }
    let part = ColorPartition { classes };
    for (ei, inc) in topo.element_nodes.iter().enumerate() {
        let mut seen = 0u8;
        for &ni in inc {
            let c = node_color(topo.node_coord(ni as usize));
            if seen >> c & 1 == 1 {
                return Err(Error::InvalidGrid(format!(
                    "element {ei} at level {} has two corners of color {c}; \
                     resolution must be even",
                    topo.level
                )));
            }
            seen |= 1 << c;
        }
    }
    Ok(part)
}

/// Run `cfg.iterations` smoothing sweeps of `K u = f`, updating `u` in
/// place. `colors` must belong to the operator's level.
pub fn smooth(
    op: &EbeOperator,
    colors: &ColorPartition,
    u: &mut Field,
    f: &Field,
    cfg: &SmootherConfig,
) -> Result<()> {
    cfg.validate()?;
    u.check_same_shape(f)?;
    if !u.is_finite() || !f.is_finite() {
        return Err(Error::NonFinite("smoother input".into()));
    }
    match cfg.kind {
        SmootherKind::Jacobi => jacobi(op, u, f, cfg),
        SmootherKind::Gs8 | SmootherKind::Sor => colored_gauss_seidel(op, colors, u, f, cfg),
        SmootherKind::Cg => krylov(op, u, f, cfg, false),
        SmootherKind::PcgJacobi => krylov(op, u, f, cfg, true),
    }
}

fn jacobi(op: &EbeOperator, u: &mut Field, f: &Field, cfg: &SmootherConfig) -> Result<()> {
    let modes = u.modes;
    let diag = op.diag_slice();
    for _ in 0..cfg.iterations {
        let r = op.residual(u, f)?;
        let udata = u.data_mut();
        for (i, rv) in r.data().iter().enumerate() {
            udata[i] += cfg.omega * rv / diag[i / modes];
        }
    }
    Ok(())
}

fn colored_gauss_seidel(
    op: &EbeOperator,
    colors: &ColorPartition,
    u: &mut Field,
    f: &Field,
    cfg: &SmootherConfig,
) -> Result<()> {
    let dof = u.dof;
    let modes = u.modes;
    let stride = dof * modes;
    let diag = op.diag_slice();
    let mut rows = Vec::new();
    for _ in 0..cfg.iterations {
        for color in 0..8 {
            let nodes = colors.class(color);
            if nodes.is_empty() {
                continue;
            }
            rows.resize(nodes.len() * stride, 0.0);
            // K u at this color's nodes against the current iterate; nodes
            // of one color never share an element, so the update below is
            // exact Gauss-Seidel.
            op.apply_rows(u, nodes, &mut rows);
            for (idx, &node) in nodes.iter().enumerate() {
                let base = node as usize * stride;
                for d in 0..dof {
                    let dv = diag[node as usize * dof + d];
                    for m in 0..modes {
                        let k = d * modes + m;
                        let r = f.data()[base + k] - rows[idx * stride + k];
                        u.data_mut()[base + k] += cfg.omega * r / dv;
                    }
                }
            }
        }
    }
    Ok(())
}

/// CG (optionally Jacobi-preconditioned) for exactly `iterations` steps,
/// with per-mode step lengths. Breakdowns freeze the affected mode.
fn krylov(
    op: &EbeOperator,
    u: &mut Field,
    f: &Field,
    cfg: &SmootherConfig,
    preconditioned: bool,
) -> Result<()> {
    let modes = u.modes;
    let diag = op.diag_slice().to_vec();
    let precondition = |r: &Field| -> Field {
        let mut z = r.clone();
        if preconditioned {
            for (i, v) in z.data_mut().iter_mut().enumerate() {
                *v /= diag[i / modes];
            }
        }
        z
    };

    let mut r = op.residual(u, f)?;
    r.subtract_mean();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = r.dot_per_mode(&z);
    let tiny = 1e-300;
    for _ in 0..cfg.iterations {
        if rz.iter().all(|&v| v.abs() <= tiny) {
            break;
        }
        let q = op.apply(&p)?;
        let pq = p.dot_per_mode(&q);
        let alpha: Vec<f64> = rz
            .iter()
            .zip(&pq)
            .map(|(&num, &den)| if den.abs() <= tiny { 0.0 } else { num / den })
            .collect();
        u.axpy_per_mode(&alpha, &p);
        let neg_alpha: Vec<f64> = alpha.iter().map(|a| -a).collect();
        r.axpy_per_mode(&neg_alpha, &q);
        r.subtract_mean();
        z = precondition(&r);
        let rz_new = r.dot_per_mode(&z);
        let beta: Vec<f64> = rz_new
            .iter()
            .zip(&rz)
            .map(|(&num, &den)| if den.abs() <= tiny { 0.0 } else { num / den })
            .collect();
        p.xpby_per_mode(&z, &beta);
        rz = rz_new;
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("krylov smoother iterate".into()));
    }
    Ok(())
}
