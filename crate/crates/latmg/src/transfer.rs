//! Trilinear prolongation/restriction between adjacent hierarchy levels.
//!
//! For a fine node `x_f`, the parent cell is `x_c = floor(x_f / 2)` with
//! local offset `rho = x_f mod 2`; the weight of coarse neighbor
//! `(x_c + o) mod N_c` is the product of 1D hat functions
//! `prod_d (1 - |rho_d/2 - o_d|)`. Restriction is exactly the transpose.
//!
//! Both directions run as gathers over their output nodes: prolongation
//! over fine nodes, restriction over per-coarse-node bins built at stencil
//! time. Accumulation order per output is fixed, so both are deterministic
//! under parallel execution.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::hierarchy::GmgHierarchy;
use crate::parallel::for_each_chunk_mut;

/// Stencil tuple (indices, weights) for one fine->coarse level pair.
#[derive(Debug, Clone)]
pub struct TransferStencil {
    fine_level: usize,
    coarse_level: usize,
    num_fine: usize,
    num_coarse: usize,
    /// CSR over fine nodes: coarse (dense index, weight) entries,
    /// zero-weight entries dropped.
    row_offsets: Vec<u32>,
    row_entries: Vec<(u32, f64)>,
    /// CSR over coarse nodes: (fine dense index, weight), sorted by fine
    /// index within each bin (transpose of the rows above).
    bin_offsets: Vec<u32>,
    bin_entries: Vec<(u32, f64)>,
}

/// Build the transfer stencil between levels `l` and `l + 1`.
pub fn build_stencil(hierarchy: &GmgHierarchy, l: usize) -> Result<TransferStencil> {
    if l < 1 || l + 1 > hierarchy.depth() {
        return Err(Error::InvalidConfig(format!(
            "no level pair ({l}, {}) in a depth-{} hierarchy",
            l + 1,
            hierarchy.depth()
        )));
    }
    let fine = hierarchy.level(l);
    let coarse = hierarchy.level(l + 1);
    let nc = coarse.resolution;

    let mut row_offsets = Vec::with_capacity(fine.num_nodes() + 1);
    let mut row_entries = Vec::new();
    row_offsets.push(0u32);
    for node in 0..fine.num_nodes() {
        let xf = fine.node_coord(node);
        let xc = [xf[0] / 2, xf[1] / 2, xf[2] / 2];
        let rho = [xf[0] % 2, xf[1] % 2, xf[2] % 2];
        for k in 0..8usize {
            let o = [k & 1, k >> 1 & 1, k >> 2 & 1];
            let mut w = 1.0f64;
            for d in 0..3 {
                w *= 1.0 - (rho[d] as f64 / 2.0 - o[d] as f64).abs();
            }
            if w == 0.0 {
                continue;
            }
            let cc = [(xc[0] + o[0]) % nc, (xc[1] + o[1]) % nc, (xc[2] + o[2]) % nc];
            let ci = coarse.node_index(cc).ok_or_else(|| {
                Error::InvalidGrid(format!(
                    "coarse node {cc:?} referenced by fine node {xf:?} is inactive; \
                     conservative coarsening violated"
                ))
            })?;
            row_entries.push((ci as u32, w));
        }
        row_offsets.push(row_entries.len() as u32);
    }

    // Transposed bins, fixed (fine, corner) order per coarse target.
    let mut counts = vec![0u32; coarse.num_nodes() + 1];
    for &(ci, _) in &row_entries {
        counts[ci as usize + 1] += 1;
    }
    for i in 0..coarse.num_nodes() {
        counts[i + 1] += counts[i];
    }
    let bin_offsets = counts.clone();
    let mut cursor = counts;
    let mut bin_entries = vec![(0u32, 0.0f64); row_entries.len()];
    for node in 0..fine.num_nodes() {
        let lo = row_offsets[node] as usize;
        let hi = row_offsets[node + 1] as usize;
        for &(ci, w) in &row_entries[lo..hi] {
            let slot = cursor[ci as usize] as usize;
            bin_entries[slot] = (node as u32, w);
            cursor[ci as usize] += 1;
        }
    }

    Ok(TransferStencil {
        fine_level: l,
        coarse_level: l + 1,
        num_fine: fine.num_nodes(),
        num_coarse: coarse.num_nodes(),
        row_offsets,
        row_entries,
        bin_offsets,
        bin_entries,
    })
}

impl TransferStencil {
    pub fn fine_level(&self) -> usize {
        self.fine_level
    }

    pub fn coarse_level(&self) -> usize {
        self.coarse_level
    }

    /// Stencil row of one fine node: (coarse dense index, weight).
    pub fn row(&self, fine_node: usize) -> &[(u32, f64)] {
        let lo = self.row_offsets[fine_node] as usize;
        let hi = self.row_offsets[fine_node + 1] as usize;
        &self.row_entries[lo..hi]
    }

    fn check_coarse(&self, c: &Field) -> Result<()> {
        if c.level != self.coarse_level || c.num_nodes() != self.num_coarse {
            return Err(Error::ShapeMismatch(format!(
                "coarse field (level {}, {} nodes) vs stencil (level {}, {} nodes)",
                c.level,
                c.num_nodes(),
                self.coarse_level,
                self.num_coarse
            )));
        }
        Ok(())
    }

    fn check_fine(&self, f: &Field) -> Result<()> {
        if f.level != self.fine_level || f.num_nodes() != self.num_fine {
            return Err(Error::ShapeMismatch(format!(
                "fine field (level {}, {} nodes) vs stencil (level {}, {} nodes)",
                f.level,
                f.num_nodes(),
                self.fine_level,
                self.num_fine
            )));
        }
        Ok(())
    }

    /// Weighted gather `u_f(i) = sum_k W_{i,k} u_c(I_{i,k})`.
    pub fn prolongate(&self, coarse: &Field) -> Result<Field> {
        self.check_coarse(coarse)?;
        let mut fine = Field::zeros(self.fine_level, self.num_fine, coarse.dof, coarse.modes);
        let stride = coarse.dof * coarse.modes;
        let cdata = coarse.data();
        let fdata = fine.data_mut();
        for_each_chunk_mut(fdata, stride, |node, row| {
            for &(ci, w) in self.row(node) {
                let src = &cdata[ci as usize * stride..(ci as usize + 1) * stride];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        });
        Ok(fine)
    }

    /// Transpose gather `r_c(j) = sum_{I_{i,k} = j} W_{i,k} r_f(i)`.
    pub fn restrict(&self, fine: &Field) -> Result<Field> {
        self.check_fine(fine)?;
        let mut coarse = Field::zeros(self.coarse_level, self.num_coarse, fine.dof, fine.modes);
        let stride = fine.dof * fine.modes;
        let fdata = fine.data();
        let cdata = coarse.data_mut();
        for_each_chunk_mut(cdata, stride, |cnode, row| {
            let lo = self.bin_offsets[cnode] as usize;
            let hi = self.bin_offsets[cnode + 1] as usize;
            for &(fi, w) in &self.bin_entries[lo..hi] {
                let src = &fdata[fi as usize * stride..(fi as usize + 1) * stride];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        });
        Ok(coarse)
    }
}
