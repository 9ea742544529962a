//! Multi-mode nodal arrays.
//!
//! A [`Field`] stores one value per (active node, DOF component, mode) with
//! modes innermost: `index = (node * dof + component) * modes + mode`. The
//! six elastic strain modes (or three thermal gradient modes) of a cell
//! problem travel together through the whole solver stack.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    /// 1-based hierarchy level this field lives on.
    pub level: usize,
    /// DOF components per node (3 elasticity, 1 thermal).
    pub dof: usize,
    /// Number of right-hand-side modes carried side by side.
    pub modes: usize,
    num_nodes: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(level: usize, num_nodes: usize, dof: usize, modes: usize) -> Self {
        Self { level, dof, modes, num_nodes, data: vec![0.0; num_nodes * dof * modes] }
    }

    pub fn from_data(level: usize, num_nodes: usize, dof: usize, modes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_nodes * dof * modes {
            return Err(Error::ShapeMismatch(format!(
                "field data length {} != {num_nodes} nodes x {dof} dof x {modes} modes",
                data.len()
            )));
        }
        Ok(Self { level, dof, modes, num_nodes, data })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, node: usize, component: usize, mode: usize) -> usize {
        (node * self.dof + component) * self.modes + mode
    }

    #[inline]
    pub fn get(&self, node: usize, component: usize, mode: usize) -> f64 {
        self.data[self.idx(node, component, mode)]
    }

    #[inline]
    pub fn set(&mut self, node: usize, component: usize, mode: usize, v: f64) {
        let i = self.idx(node, component, mode);
        self.data[i] = v;
    }

    /// All values of one node, `dof * modes` long.
    #[inline]
    pub fn node_slice(&self, node: usize) -> &[f64] {
        let w = self.dof * self.modes;
        &self.data[node * w..(node + 1) * w]
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.level == other.level
            && self.dof == other.dof
            && self.modes == other.modes
            && self.num_nodes == other.num_nodes
    }

    pub fn check_same_shape(&self, other: &Field) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "field (level {}, {} nodes, dof {}, modes {}) vs (level {}, {} nodes, dof {}, modes {})",
                self.level, self.num_nodes, self.dof, self.modes,
                other.level, other.num_nodes, other.dof, other.modes
            )));
        }
        Ok(())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// `self += alpha * other`, one alpha across all modes.
    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// `self += alpha[mode] * other`.
    pub fn axpy_per_mode(&mut self, alpha: &[f64], other: &Field) {
        debug_assert!(self.same_shape(other) && alpha.len() == self.modes);
        let m = self.modes;
        for (a, b) in self.data.chunks_exact_mut(m).zip(other.data.chunks_exact(m)) {
            for k in 0..m {
                a[k] += alpha[k] * b[k];
            }
        }
    }

    /// `self = other + beta[mode] * self` (CG direction update).
    pub fn xpby_per_mode(&mut self, other: &Field, beta: &[f64]) {
        debug_assert!(self.same_shape(other) && beta.len() == self.modes);
        let m = self.modes;
        for (a, b) in self.data.chunks_exact_mut(m).zip(other.data.chunks_exact(m)) {
            for k in 0..m {
                a[k] = b[k] + beta[k] * a[k];
            }
        }
    }

    /// Euclidean inner product per mode.
    pub fn dot_per_mode(&self, other: &Field) -> Vec<f64> {
        debug_assert!(self.same_shape(other));
        let m = self.modes;
        let mut acc = vec![0.0; m];
        for (a, b) in self.data.chunks_exact(m).zip(other.data.chunks_exact(m)) {
            for k in 0..m {
                acc[k] += a[k] * b[k];
            }
        }
        acc
    }

    /// Euclidean norm per mode.
    pub fn norm_per_mode(&self) -> Vec<f64> {
        self.dot_per_mode(self).into_iter().map(f64::sqrt).collect()
    }

    /// Frobenius norm over everything.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean over nodes for every (component, mode) pair, `dof * modes` long.
    pub fn mean_per_component_mode(&self) -> Vec<f64> {
        let w = self.dof * self.modes;
        let mut acc = vec![0.0; w];
        for chunk in self.data.chunks_exact(w) {
            for (a, v) in acc.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        let n = self.num_nodes.max(1) as f64;
        for a in &mut acc {
            *a /= n;
        }
        acc
    }

    /// Subtract the per-(component, mode) mean over nodes.
    pub fn subtract_mean(&mut self) {
        let means = self.mean_per_component_mode();
        let w = self.dof * self.modes;
        for chunk in self.data.chunks_exact_mut(w) {
            for (a, m) in chunk.iter_mut().zip(&means) {
                *a -= m;
            }
        }
    }

    /// Copy of one mode as a flat vector (node-major then component).
    pub fn mode_vector(&self, mode: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_nodes * self.dof);
        for node in 0..self.num_nodes {
            for c in 0..self.dof {
                out.push(self.get(node, c, mode));
            }
        }
        out
    }

    /// Overwrite one mode from a flat vector (node-major then component).
    pub fn set_mode_vector(&mut self, mode: usize, v: &[f64]) {
        debug_assert_eq!(v.len(), self.num_nodes * self.dof);
        for node in 0..self.num_nodes {
            for c in 0..self.dof {
                self.set(node, c, mode, v[node * self.dof + c]);
            }
        }
    }
}
