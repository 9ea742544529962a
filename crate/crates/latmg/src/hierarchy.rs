//! Sparse grid hierarchy aligned with the multigrid solver.
//!
//! Level 1 is the finest grid; a coarse voxel is active when any of its
//! 2x2x2 fine children is (conservative coarsening), and each level's node
//! set is the vertex union of its active elements under periodic
//! identification. Node and element indices are dense per level, sorted by
//! flat coordinate (z-major), so layouts are reproducible.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::voxgeom::VoxelGrid;

/// Active topology of one hierarchy level.
#[derive(Debug, Clone)]
pub struct LevelTopology {
    /// 1-based level index; 1 is the finest.
    pub level: usize,
    /// Grid resolution `N_l` at this level.
    pub resolution: usize,
    /// Flat coordinates of active elements, ascending.
    pub elements: Vec<u32>,
    /// Flat coordinates of active nodes, ascending.
    pub nodes: Vec<u32>,
    /// Dense node indices of each element's 8 vertices, local corner `k`
    /// at offset `(k & 1, k >> 1 & 1, k >> 2 & 1)` with periodic wrap.
    pub element_nodes: Vec<[u32; 8]>,
    /// Flat coordinate -> dense node index, `u32::MAX` when inactive.
    node_lookup: Vec<u32>,
    /// Flat coordinate -> dense element index, `u32::MAX` when inactive.
    element_lookup: Vec<u32>,
    /// CSR offsets into `node_element_entries`, one range per node.
    node_element_offsets: Vec<u32>,
    /// (element index, local corner of this node in that element).
    node_element_entries: Vec<(u32, u8)>,
}

impl LevelTopology {
    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, coord: [usize; 3]) -> Option<usize> {
        let flat = self.flatten(coord);
        match self.node_lookup[flat] {
            u32::MAX => None,
            i => Some(i as usize),
        }
    }

    pub fn element_index(&self, coord: [usize; 3]) -> Option<usize> {
        let flat = self.flatten(coord);
        match self.element_lookup[flat] {
            u32::MAX => None,
            i => Some(i as usize),
        }
    }

    pub fn flatten(&self, c: [usize; 3]) -> usize {
        let n = self.resolution;
        debug_assert!(c[0] < n && c[1] < n && c[2] < n);
        c[0] + n * (c[1] + n * c[2])
    }

    pub fn unflatten(&self, flat: u32) -> [usize; 3] {
        let n = self.resolution;
        let f = flat as usize;
        [f % n, f / n % n, f / (n * n)]
    }

    pub fn node_coord(&self, node: usize) -> [usize; 3] {
        self.unflatten(self.nodes[node])
    }

    pub fn element_coord(&self, element: usize) -> [usize; 3] {
        self.unflatten(self.elements[element])
    }

    /// Elements incident to a node, with the node's local corner in each.
    pub fn node_elements(&self, node: usize) -> &[(u32, u8)] {
        let lo = self.node_element_offsets[node] as usize;
        let hi = self.node_element_offsets[node + 1] as usize;
        &self.node_element_entries[lo..hi]
    }

    /// Construct a level from its active element set.
    pub fn from_elements(level: usize, resolution: usize, elements: Vec<u32>) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidGrid(format!(
                "level resolution must be >= 2, got {resolution}"
            )));
        }
        debug_assert!(elements.windows(2).all(|w| w[0] < w[1]), "elements must be sorted unique");
        let n = resolution;
        let n3 = n * n * n;

        let mut node_lookup = vec![u32::MAX; n3];
        // Mark the vertex union, then compact in ascending flat order.
        for &e in &elements {
            let c = [e as usize % n, e as usize / n % n, e as usize / (n * n)];
            for k in 0..8usize {
                let v = [
                    (c[0] + (k & 1)) % n,
                    (c[1] + (k >> 1 & 1)) % n,
                    (c[2] + (k >> 2 & 1)) % n,
                ];
                node_lookup[v[0] + n * (v[1] + n * v[2])] = 0;
            }
        }
        let mut nodes = Vec::new();
        for flat in 0..n3 {
            if node_lookup[flat] == 0 {
                node_lookup[flat] = nodes.len() as u32;
                nodes.push(flat as u32);
            }
        }

        let mut element_nodes = Vec::with_capacity(elements.len());
        for &e in &elements {
            let c = [e as usize % n, e as usize / n % n, e as usize / (n * n)];
            let mut inc = [0u32; 8];
            for (k, slot) in inc.iter_mut().enumerate() {
                let v = [
                    (c[0] + (k & 1)) % n,
                    (c[1] + (k >> 1 & 1)) % n,
                    (c[2] + (k >> 2 & 1)) % n,
                ];
                *slot = node_lookup[v[0] + n * (v[1] + n * v[2])];
            }
            element_nodes.push(inc);
        }

        // Reverse incidence, fixed order: elements ascending per node.
        let mut counts = vec![0u32; nodes.len() + 1];
        for inc in &element_nodes {
            for &ni in inc {
                counts[ni as usize + 1] += 1;
            }
        }
        for i in 0..nodes.len() {
            counts[i + 1] += counts[i];
        }
        let node_element_offsets = counts.clone();
        let mut cursor = counts;
        let mut node_element_entries = vec![(0u32, 0u8); element_nodes.len() * 8];
        for (ei, inc) in element_nodes.iter().enumerate() {
            for (k, &ni) in inc.iter().enumerate() {
                let slot = cursor[ni as usize] as usize;
                node_element_entries[slot] = (ei as u32, k as u8);
                cursor[ni as usize] += 1;
            }
        }

        let mut element_lookup = vec![u32::MAX; n3];
        for (i, &e) in elements.iter().enumerate() {
            element_lookup[e as usize] = i as u32;
        }

        Ok(Self {
            level,
            resolution,
            elements,
            nodes,
            element_nodes,
            node_lookup,
            element_lookup,
            node_element_offsets,
            node_element_entries,
        })
    }
}

/// Conservative 2x2x2 coarsening of an active element set: coarse `(i,j,k)`
/// is active iff any fine `(2i+a, 2j+b, 2k+c)` is.
pub fn coarsen_elements(fine_elements: &[u32], fine_resolution: usize) -> Result<Vec<u32>> {
    if fine_resolution % 2 != 0 {
        return Err(Error::InvalidGrid(format!(
            "cannot coarsen odd resolution {fine_resolution}"
        )));
    }
    let nf = fine_resolution;
    let nc = nf / 2;
    let mut active = vec![false; nc * nc * nc];
    for &e in fine_elements {
        let f = e as usize;
        let (x, y, z) = (f % nf, f / nf % nf, f / (nf * nf));
        active[x / 2 + nc * (y / 2 + nc * (z / 2))] = true;
    }
    Ok(active
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .map(|(i, _)| i as u32)
        .collect())
}

/// Vertex union (mod N) of an element set, ascending flat coordinates.
pub fn derive_node_set(elements: &[u32], resolution: usize) -> Vec<u32> {
    let n = resolution;
    let mut mark = vec![false; n * n * n];
    for &e in elements {
        let c = [e as usize % n, e as usize / n % n, e as usize / (n * n)];
        for k in 0..8usize {
            let v = [
                (c[0] + (k & 1)) % n,
                (c[1] + (k >> 1 & 1)) % n,
                (c[2] + (k >> 2 & 1)) % n,
            ];
            mark[v[0] + n * (v[1] + n * v[2])] = true;
        }
    }
    mark.iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i as u32)
        .collect()
}

/// The full level stack. Immutable once built; a pure function of the grid.
#[derive(Debug, Clone)]
pub struct GmgHierarchy {
    levels: Vec<Arc<LevelTopology>>,
}

impl GmgHierarchy {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// 1-based level accessor; 1 is the finest.
    pub fn level(&self, l: usize) -> &LevelTopology {
        &self.levels[l - 1]
    }

    /// Shared handle to a level, for operators that outlive the hierarchy.
    pub fn level_shared(&self, l: usize) -> Arc<LevelTopology> {
        Arc::clone(&self.levels[l - 1])
    }

    pub fn levels(&self) -> &[Arc<LevelTopology>] {
        &self.levels
    }

    pub fn finest(&self) -> &LevelTopology {
        &self.levels[0]
    }

    pub fn coarsest(&self) -> &LevelTopology {
        self.levels.last().unwrap()
    }
}

/// Default depth: deepest hierarchy whose coarsest level keeps `N >= 4`,
/// capped at 5 levels (6 from `N = 512` up).
pub fn auto_depth(n_res: usize) -> usize {
    let cap = if n_res >= 512 { 6 } else { 5 };
    let mut levels = 1;
    let mut n = n_res;
    while levels < cap && n % 2 == 0 && n / 2 >= 4 {
        n /= 2;
        levels += 1;
    }
    levels
}

/// Build an `levels`-deep hierarchy from the active voxels of `grid`.
pub fn build_hierarchy(grid: &VoxelGrid, levels: usize) -> Result<GmgHierarchy> {
    let n = grid.resolution();
    if levels == 0 {
        return Err(Error::InvalidConfig("hierarchy needs at least one level".into()));
    }
    // Every level is smoothed, so every level must have even resolution for
    // the parity coloring to stay a valid Gauss-Seidel partition.
    let div = 1usize << (levels - 1);
    if n % div != 0 || n / div < 2 || (n / div) % 2 != 0 {
        return Err(Error::NotDivisible { n, levels, depth_minus_one: levels - 1 });
    }

    let mut stack = Vec::with_capacity(levels);
    let mut elements = grid.active_elements();
    let mut resolution = n;
    stack.push(Arc::new(LevelTopology::from_elements(1, resolution, elements.clone())?));
    for l in 2..=levels {
        elements = coarsen_elements(&elements, resolution)?;
        resolution /= 2;
        stack.push(Arc::new(LevelTopology::from_elements(l, resolution, elements.clone())?));
    }
    Ok(GmgHierarchy { levels: stack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxgeom::{generate_laminate, generate_random_occupancy, generate_tpms, Axis, TpmsKind};

    #[test]
    fn all_solid_coarsens_to_all_solid() {
        let fine: Vec<u32> = (0..8u32 * 8 * 8).collect();
        let coarse = coarsen_elements(&fine, 8).unwrap();
        assert_eq!(coarse.len(), 64);
        assert_eq!(coarse, (0..64u32).collect::<Vec<_>>());
    }

    #[test]
    fn single_element_parent_is_floor_division() {
        // fine element (3,0,0) at N=8 -> coarse (1,0,0)
        let coarse = coarsen_elements(&[3], 8).unwrap();
        assert_eq!(coarse, vec![1]);
    }

    #[test]
    fn odd_resolution_rejected() {
        assert!(coarsen_elements(&[0], 6).is_ok());
        assert!(coarsen_elements(&[0], 7).is_err());
    }

    #[test]
    fn coarsening_matches_dense_or_pool() {
        let g = generate_tpms(TpmsKind::Gyroid, 16, 0.0).unwrap();
        let fine = g.active_elements();
        let coarse = coarsen_elements(&fine, 16).unwrap();

        // Dense OR-pool oracle over the full 2x2x2 blocks.
        let mut expected = Vec::new();
        for z in 0..8 {
            for y in 0..8 {
                for x in 0..8 {
                    let mut any = false;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                any |= g.value_at(2 * x + dx, 2 * y + dy, 2 * z + dz) > 0.0;
                            }
                        }
                    }
                    if any {
                        expected.push((x + 8 * (y + 8 * z)) as u32);
                    }
                }
            }
        }
        assert_eq!(coarse, expected);
    }

    #[test]
    fn node_set_trivia() {
        // all-solid N=2: 8 nodes
        assert_eq!(derive_node_set(&(0..8u32).collect::<Vec<_>>(), 2).len(), 8);
        // one element at N>=2: 8 distinct nodes
        assert_eq!(derive_node_set(&[0], 4).len(), 8);
    }

    #[test]
    fn laminate_coarse_nodes_match_enumeration() {
        let g = generate_laminate(8, Axis::X, 2).unwrap();
        let fine = g.active_elements();
        let coarse = coarsen_elements(&fine, 8).unwrap();
        let nodes = derive_node_set(&coarse, 4);

        let mut expected = std::collections::BTreeSet::new();
        for &e in &coarse {
            let c = [e as usize % 4, e as usize / 4 % 4, e as usize / 16];
            for k in 0..8usize {
                let v = [
                    (c[0] + (k & 1)) % 4,
                    (c[1] + (k >> 1 & 1)) % 4,
                    (c[2] + (k >> 2 & 1)) % 4,
                ];
                expected.insert((v[0] + 4 * (v[1] + 4 * v[2])) as u32);
            }
        }
        assert_eq!(nodes, expected.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn hierarchy_level_resolutions() {
        let g = generate_tpms(TpmsKind::Gyroid, 64, 0.0).unwrap();
        let h = build_hierarchy(&g, 5).unwrap();
        let res: Vec<usize> = h.levels().iter().map(|l| l.resolution).collect();
        assert_eq!(res, vec![64, 32, 16, 8, 4]);

        let g = generate_tpms(TpmsKind::Gyroid, 16, 0.0).unwrap();
        let h = build_hierarchy(&g, 3).unwrap();
        let res: Vec<usize> = h.levels().iter().map(|l| l.resolution).collect();
        assert_eq!(res, vec![16, 8, 4]);
    }

    #[test]
    fn hierarchy_rejects_bad_divisibility() {
        let g = generate_tpms(TpmsKind::Gyroid, 12, f64::INFINITY).unwrap();
        assert!(matches!(build_hierarchy(&g, 4), Err(Error::NotDivisible { .. })));
        // 12, 6, 3 would leave an odd coarsest level; rejected as well.
        assert!(matches!(build_hierarchy(&g, 3), Err(Error::NotDivisible { .. })));
        // 12, 6 keeps every level even.
        assert!(build_hierarchy(&g, 2).is_ok());
    }

    #[test]
    fn conservative_coverage_and_shrinking() {
        for seed in 0..3u64 {
            let g = generate_random_occupancy(16, seed, 0.3).unwrap();
            let h = build_hierarchy(&g, 3).unwrap();
            for l in 1..h.depth() {
                let fine = h.level(l);
                let coarse = h.level(l + 1);
                assert!(coarse.num_elements() <= fine.num_elements());
                let nc = coarse.resolution;
                let set: std::collections::BTreeSet<u32> = coarse.elements.iter().copied().collect();
                for &e in &fine.elements {
                    let c = fine.unflatten(e);
                    let parent = (c[0] / 2 + nc * (c[1] / 2 + nc * (c[2] / 2))) as u32;
                    assert!(set.contains(&parent), "parent of {c:?} missing at level {}", l + 1);
                }
            }
        }
    }

    /// Union-find component count under periodic 6-connectivity.
    fn component_count(elements: &[u32], n: usize) -> usize {
        let index: std::collections::BTreeMap<u32, usize> =
            elements.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut parent: Vec<usize> = (0..elements.len()).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            let mut root = i;
            while parent[root] != root {
                root = parent[root];
            }
            let mut cur = i;
            while parent[cur] != root {
                let next = parent[cur];
                parent[cur] = root;
                cur = next;
            }
            root
        }
        for (i, &e) in elements.iter().enumerate() {
            let c = [e as usize % n, e as usize / n % n, e as usize / (n * n)];
            for d in 0..3 {
                let mut nb = c;
                nb[d] = (c[d] + 1) % n;
                let flat = (nb[0] + n * (nb[1] + n * nb[2])) as u32;
                if let Some(&j) = index.get(&flat) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri] = rj;
                    }
                }
            }
        }
        (0..elements.len()).filter(|&i| find(&mut parent, i) == i).count()
    }

    #[test]
    fn coarsening_preserves_or_merges_components() {
        for seed in 0..4u64 {
            let g = generate_random_occupancy(16, seed, 0.2).unwrap();
            let h = build_hierarchy(&g, 3).unwrap();
            for l in 1..h.depth() {
                let fine = h.level(l);
                let coarse = h.level(l + 1);
                let cf = component_count(&fine.elements, fine.resolution);
                let cc = component_count(&coarse.elements, coarse.resolution);
                assert!(cc <= cf, "components grew: {cf} -> {cc} (seed {seed}, level {l})");
            }
        }
    }

    #[test]
    fn hierarchy_is_deterministic() {
        let g = generate_tpms(TpmsKind::Diamond, 16, 0.1).unwrap();
        let a = build_hierarchy(&g, 3).unwrap();
        let b = build_hierarchy(&g, 3).unwrap();
        for (la, lb) in a.levels().iter().zip(b.levels()) {
            assert_eq!(la.elements, lb.elements);
            assert_eq!(la.nodes, lb.nodes);
            assert_eq!(la.element_nodes, lb.element_nodes);
        }
    }

    #[test]
    fn incidence_is_consistent() {
        let g = generate_tpms(TpmsKind::Gyroid, 8, 0.0).unwrap();
        let h = build_hierarchy(&g, 2).unwrap();
        for level in h.levels() {
            // every vertex of every element is an active node at the stated corner
            for (ei, inc) in level.element_nodes.iter().enumerate() {
                let c = level.element_coord(ei);
                for (k, &ni) in inc.iter().enumerate() {
                    let n = level.resolution;
                    let v = [
                        (c[0] + (k & 1)) % n,
                        (c[1] + (k >> 1 & 1)) % n,
                        (c[2] + (k >> 2 & 1)) % n,
                    ];
                    assert_eq!(level.node_coord(ni as usize), v);
                }
            }
            // reverse incidence round-trips
            for node in 0..level.num_nodes() {
                for &(ei, k) in level.node_elements(node) {
                    assert_eq!(level.element_nodes[ei as usize][k as usize] as usize, node);
                }
            }
        }
    }

    #[test]
    fn auto_depth_rules() {
        assert_eq!(auto_depth(16), 3); // 16, 8, 4
        assert_eq!(auto_depth(64), 5); // 64..4
        assert_eq!(auto_depth(128), 5); // capped
        assert_eq!(auto_depth(512), 6); // deep cap
        assert_eq!(auto_depth(4), 1);
        assert_eq!(auto_depth(8), 2);
    }
}
