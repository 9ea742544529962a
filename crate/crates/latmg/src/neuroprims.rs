//! Deterministic index and phase math underneath the neural-geometry
//! machinery: period-aware rotary phase encoding, cyclic Morton
//! serialization views, and hierarchy-aligned pooling stencils. No
//! learnable parameters live here; these are the verified primitives an
//! external training stack can bind to.

use crate::hierarchy::GmgHierarchy;

/// Rotary phase configuration: physical period per axis and the channel
/// pairs allocated to each axis (the axis/head split is a caller choice,
/// so the allocation is explicit). Channels are laid out axis-major:
/// axis 0 pairs first, then axis 1, then axis 2.
#[derive(Debug, Clone)]
pub struct RaRopeSpec {
    pub period: [f64; 3],
    pub pairs: [usize; 3],
}

impl RaRopeSpec {
    /// Equal allocation across the three axes.
    pub fn new(period: [f64; 3], pairs_per_axis: usize) -> Self {
        Self::with_allocation(period, [pairs_per_axis; 3])
    }

    /// Explicit per-axis channel-pair allocation.
    pub fn with_allocation(period: [f64; 3], pairs: [usize; 3]) -> Self {
        assert!(period.iter().all(|&p| p > 0.0));
        assert!(pairs.iter().sum::<usize>() > 0);
        Self { period, pairs }
    }

    /// Total feature width: 2 channels per pair.
    pub fn feature_len(&self) -> usize {
        2 * self.pairs.iter().sum::<usize>()
    }

    fn axis_base(&self, axis: usize) -> usize {
        2 * self.pairs[..axis].iter().sum::<usize>()
    }
}

/// Harmonic rotation angle `2 pi (k+1) p / period` with the phase reduced
/// modulo the period before any trigonometry, so coordinates that differ by
/// whole periods produce identical angles (and therefore identical
/// embeddings, bit for bit, whenever `p + t*period` is exactly
/// representable).
pub fn rarope_angle(p: f64, period: f64, pair_index: usize) -> f64 {
    let reduced = p.rem_euclid(period);
    std::f64::consts::TAU * (pair_index as f64 + 1.0) * reduced / period
}

/// Rotate one channel pair by `theta`.
pub fn rarope_rotate(pair: (f64, f64), theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (pair.0 * c - pair.1 * s, pair.0 * s + pair.1 * c)
}

/// Apply the per-axis harmonic rotations to a feature vector laid out as
/// `spec` describes. `features.len()` must equal `spec.feature_len()`.
pub fn rotate_features(spec: &RaRopeSpec, coord: [f64; 3], features: &mut [f64]) {
    assert_eq!(features.len(), spec.feature_len());
    for axis in 0..3 {
        let base = spec.axis_base(axis);
        for k in 0..spec.pairs[axis] {
            let theta = rarope_angle(coord[axis], spec.period[axis], k);
            let at = base + 2 * k;
            let rotated = rarope_rotate((features[at], features[at + 1]), theta);
            features[at] = rotated.0;
            features[at + 1] = rotated.1;
        }
    }
}

/// One Morton traversal order: a cyclic permutation of the axes and the
/// bit depth per axis. The first axis of the permutation is the most
/// significant in the interleaved code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SerializationView {
    pub permutation: [usize; 3],
    pub bits: u32,
}

impl SerializationView {
    /// The three cyclic views (x,y,z), (y,z,x), (z,x,y).
    pub fn cyclic(index: usize, bits: u32) -> Self {
        let permutation = match index % 3 {
            0 => [0, 1, 2],
            1 => [1, 2, 0],
            _ => [2, 0, 1],
        };
        Self { permutation, bits }
    }
}

/// Interleaved Morton code of a coordinate under the view's axis order.
/// Coordinates must fit in `bits` bits per axis.
pub fn morton_code(coord: [u32; 3], view: &SerializationView) -> u64 {
    let a = coord[view.permutation[0]] as u64;
    let b = coord[view.permutation[1]] as u64;
    let c = coord[view.permutation[2]] as u64;
    debug_assert!(view.bits <= 21);
    debug_assert!(a < (1 << view.bits) && b < (1 << view.bits) && c < (1 << view.bits));
    let mut out = 0u64;
    for bit in 0..view.bits as u64 {
        out |= (a >> bit & 1) << (3 * bit + 2);
        out |= (b >> bit & 1) << (3 * bit + 1);
        out |= (c >> bit & 1) << (3 * bit);
    }
    out
}

/// Inverse of [`morton_code`] for the same view.
pub fn morton_decode(code: u64, view: &SerializationView) -> [u32; 3] {
    let mut abc = [0u32; 3];
    for bit in 0..view.bits as u64 {
        abc[0] |= (((code >> (3 * bit + 2)) & 1) as u32) << bit;
        abc[1] |= (((code >> (3 * bit + 1)) & 1) as u32) << bit;
        abc[2] |= (((code >> (3 * bit)) & 1) as u32) << bit;
    }
    let mut coord = [0u32; 3];
    for (i, &axis) in view.permutation.iter().enumerate() {
        coord[axis] = abc[i];
    }
    coord
}

/// Sort coordinates by their Morton code under a view (stable order for
/// serialized attention windows).
pub fn sort_by_code(coords: &mut [[u32; 3]], view: &SerializationView) {
    coords.sort_by_key(|&c| morton_code(c, view));
}

/// The 27-entry fine-node stencil around a coarse node's anchor `2x`,
/// torus-wrapped, with per-entry activity flags.
#[derive(Debug, Clone)]
pub struct PoolStencil {
    pub coarse_node: [usize; 3],
    /// Wrapped fine coordinates for offsets in {-1,0,1}^3, z-major order.
    pub fine_coords: [[usize; 3]; 27],
    /// Whether the fine node is active at the fine level.
    pub present: [bool; 27],
}

/// Pooling stencil for a coarse node of level `l + 1`: the 3^3 fine-node
/// neighborhood centered at its fine anchor `2x` on level `l`.
pub fn pool_stencil(hierarchy: &GmgHierarchy, l: usize, coarse_node: [usize; 3]) -> PoolStencil {
    let fine = hierarchy.level(l);
    let nf = fine.resolution;
    let anchor = [2 * coarse_node[0], 2 * coarse_node[1], 2 * coarse_node[2]];
    let mut fine_coords = [[0usize; 3]; 27];
    let mut present = [false; 27];
    let mut idx = 0;
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let c = [
                    (anchor[0] as i64 + dx).rem_euclid(nf as i64) as usize,
                    (anchor[1] as i64 + dy).rem_euclid(nf as i64) as usize,
                    (anchor[2] as i64 + dz).rem_euclid(nf as i64) as usize,
                ];
                fine_coords[idx] = c;
                present[idx] = fine.node_index(c).is_some();
                idx += 1;
            }
        }
    }
    PoolStencil { coarse_node, fine_coords, present }
}

/// Unpooling targets of a coarse node: the active members of the same
/// 27-node neighborhood (the symmetric path of the pooling stencil).
pub fn unpool_targets(hierarchy: &GmgHierarchy, l: usize, coarse_node: [usize; 3]) -> Vec<[usize; 3]> {
    let stencil = pool_stencil(hierarchy, l, coarse_node);
    stencil
        .fine_coords
        .iter()
        .zip(stencil.present.iter())
        .filter(|(_, &p)| p)
        .map(|(&c, _)| c)
        .collect()
}
