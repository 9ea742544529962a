//! Periodic voxel geometry: the representative cell, generators for test
//! families, per-node occupancy features, and the grid file format.
//!
//! A grid lives on a torus: voxel `(x, y, z)` with `0 <= x,y,z < N` tiles
//! all of space, and node coordinates are taken modulo `N` per axis.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether voxel values are binary occupancy or SIMP-style densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Occupancy,
    Density,
}

/// Smallest density a live voxel may carry; values below it must be exactly 0
/// (pruned voxels leave the active set entirely).
pub const RHO_MIN: f64 = 1e-5;

/// Isotropic base material for both physics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    /// Young's modulus.
    #[serde(rename = "E")]
    pub e: f64,
    /// Poisson ratio, in (-1, 0.5).
    pub nu: f64,
    /// Thermal conductivity.
    pub kappa: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        Self { e: 1.0, nu: 0.3, kappa: 1.0 }
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.e > 0.0) || !self.e.is_finite() {
            return Err(Error::InvalidConfig(format!("E must be > 0, got {}", self.e)));
        }
        if !(self.nu > -1.0 && self.nu < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "nu must lie in (-1, 0.5), got {}",
                self.nu
            )));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidConfig(format!("kappa must be > 0, got {}", self.kappa)));
        }
        Ok(())
    }

    /// Lamé parameters derived from (E, nu).
    pub fn lame(&self) -> (f64, f64) {
        let lambda = self.e * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu));
        let mu = self.e / (2.0 * (1.0 + self.nu));
        (lambda, mu)
    }
}

/// Periodic voxel cell with one value per element, stored x-fastest:
/// `index = x + N * (y + N * z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    period: [f64; 3],
    kind: GridKind,
    values: Vec<f64>,
}

impl VoxelGrid {
    /// Build a grid from raw values, validating the type invariants.
    pub fn new(resolution: usize, period: [f64; 3], kind: GridKind, values: Vec<f64>) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidGrid(format!(
                "resolution must be >= 2, got {resolution}"
            )));
        }
        if values.len() != resolution * resolution * resolution {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for resolution {resolution}, got {}",
                resolution.pow(3),
                values.len()
            )));
        }
        if period.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {period:?}")));
        }
        for (i, &v) in values.iter().enumerate() {
            let ok = match kind {
                GridKind::Occupancy => v == 0.0 || v == 1.0,
                GridKind::Density => v == 0.0 || (RHO_MIN..=1.0).contains(&v),
            };
            if !ok {
                return Err(Error::InvalidGrid(format!(
                    "value {v} at flat index {i} is out of range for {kind:?}"
                )));
            }
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidGrid("empty structure: no voxel has value > 0".into()));
        }
        Ok(Self { resolution, period, kind, values })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn period(&self) -> [f64; 3] {
        self.period
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flat_index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.resolution && y < self.resolution && z < self.resolution);
        x + self.resolution * (y + self.resolution * z)
    }

    pub fn value_at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.flat_index(x, y, z)]
    }

    /// Physical edge lengths of one voxel.
    pub fn element_size(&self) -> [f64; 3] {
        let n = self.resolution as f64;
        [self.period[0] / n, self.period[1] / n, self.period[2] / n]
    }

    /// Mean of the voxel values.
    pub fn volume_fraction(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Flat indices of voxels with value > 0, ascending (z-major order).
    pub fn active_elements(&self) -> Vec<u32> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| i as u32)
            .collect()
    }

    /// Relabel axes so that old axis `d` becomes new axis `perm[d]`:
    /// `permuted(c) = self(c[perm[0]], c[perm[1]], c[perm[2]])`.
    pub fn permute_axes(&self, perm: [usize; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &p in &perm {
            if p > 2 || seen[p] {
                return Err(Error::InvalidConfig(format!("invalid permutation {perm:?}")));
            }
            seen[p] = true;
        }
        let n = self.resolution;
        let mut values = vec![0.0; n * n * n];
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let new_c = [x, y, z];
                    let old_c = [new_c[perm[0]], new_c[perm[1]], new_c[perm[2]]];
                    values[x + n * (y + n * z)] = self.value_at(old_c[0], old_c[1], old_c[2]);
                }
            }
        }
        let mut period = [0.0; 3];
        for d in 0..3 {
            period[perm[d]] = self.period[d];
        }
        VoxelGrid::new(n, period, self.kind, values)
    }
}

/// One active node with its 8-octant occupancy bits. Bit `k` covers the
/// octant at offset `o_k = (k & 1, k >> 1 & 1, k >> 2 & 1)`, i.e. the voxel
/// `(node - 1 + o_k) mod N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeFeature {
    pub coord: [usize; 3],
    pub bits: u8,
}

impl NodeFeature {
    pub fn is_active(&self) -> bool {
        self.bits != 0
    }

    pub fn octant(&self, k: usize) -> bool {
        debug_assert!(k < 8);
        self.bits >> k & 1 == 1
    }
}

/// Octant occupancy features for every active node, sorted by flat node
/// index (z-major). A node is active iff at least one surrounding voxel is.
pub fn node_features(grid: &VoxelGrid) -> Vec<NodeFeature> {
    let n = grid.resolution();
    let mut out = Vec::new();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let mut bits = 0u8;
                for k in 0..8usize {
                    let o = [k & 1, k >> 1 & 1, k >> 2 & 1];
                    let vx = (x + n - 1 + o[0]) % n;
                    let vy = (y + n - 1 + o[1]) % n;
                    let vz = (z + n - 1 + o[2]) % n;
                    if grid.value_at(vx, vy, vz) > 0.0 {
                        bits |= 1 << k;
                    }
                }
                if bits != 0 {
                    out.push(NodeFeature { coord: [x, y, z], bits });
                }
            }
        }
    }
    out
}

/// Triply periodic minimal surface families used as test geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TpmsKind {
    Gyroid,
    SchwarzP,
    Diamond,
}

impl TpmsKind {
    /// Level-set value at a point of the unit cell (coordinates in [0, 1)).
    pub fn level_set(&self, x: f64, y: f64, z: f64) -> f64 {
        use std::f64::consts::TAU;
        let (sx, cx) = (TAU * x).sin_cos();
        let (sy, cy) = (TAU * y).sin_cos();
        let (sz, cz) = (TAU * z).sin_cos();
        match self {
            TpmsKind::Gyroid => sx * cy + sy * cz + sz * cx,
            TpmsKind::SchwarzP => cx + cy + cz,
            TpmsKind::Diamond => sx * sy * sz + sx * cy * cz + cx * sy * cz + cx * cy * sz,
        }
    }
}

/// Occupancy grid from a TPMS level set: a voxel is solid when the level-set
/// value at its center `(i + 1/2) / N` is below `level`.
pub fn generate_tpms(kind: TpmsKind, n_res: usize, level: f64) -> Result<VoxelGrid> {
    if n_res < 2 {
        return Err(Error::InvalidGrid(format!("resolution must be >= 2, got {n_res}")));
    }
    let mut values = vec![0.0; n_res * n_res * n_res];
    let n = n_res as f64;
    for z in 0..n_res {
        for y in 0..n_res {
            for x in 0..n_res {
                let f = kind.level_set(
                    (x as f64 + 0.5) / n,
                    (y as f64 + 0.5) / n,
                    (z as f64 + 0.5) / n,
                );
                if f < level {
                    values[x + n_res * (y + n_res * z)] = 1.0;
                }
            }
        }
    }
    VoxelGrid::new(n_res, [1.0, 1.0, 1.0], GridKind::Occupancy, values)
}

/// Bisect the level so the counted volume fraction is as close as possible
/// to `target_vf` (quantized to 1/N^3).
pub fn generate_tpms_with_volume_fraction(
    kind: TpmsKind,
    n_res: usize,
    target_vf: f64,
) -> Result<VoxelGrid> {
    if !(0.0 < target_vf && target_vf <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "target volume fraction must lie in (0, 1], got {target_vf}"
        )));
    }
    // All three level sets are bounded well inside [-4, 4].
    let (mut lo, mut hi) = (-4.0f64, 4.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let vf = count_vf(kind, n_res, mid);
        if vf < target_vf {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    generate_tpms(kind, n_res, hi)
}

fn count_vf(kind: TpmsKind, n_res: usize, level: f64) -> f64 {
    let n = n_res as f64;
    let mut solid = 0usize;
    for z in 0..n_res {
        for y in 0..n_res {
            for x in 0..n_res {
                let f = kind.level_set(
                    (x as f64 + 0.5) / n,
                    (y as f64 + 0.5) / n,
                    (z as f64 + 0.5) / n,
                );
                if f < level {
                    solid += 1;
                }
            }
        }
    }
    solid as f64 / (n_res * n_res * n_res) as f64
}

/// Grid axis selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(&self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Solid slab of `solid_layers` voxel layers normal to `axis`, void elsewhere.
/// The volume fraction is exactly `solid_layers / N`. At least one void layer
/// must remain so the across-layer path is broken.
pub fn generate_laminate(n_res: usize, axis: Axis, solid_layers: usize) -> Result<VoxelGrid> {
    if n_res < 2 {
        return Err(Error::InvalidGrid(format!("resolution must be >= 2, got {n_res}")));
    }
    if solid_layers == 0 || solid_layers >= n_res {
        return Err(Error::InvalidConfig(format!(
            "solid_layers must lie in [1, {}], got {solid_layers}",
            n_res - 1
        )));
    }
    let ai = axis.index();
    let mut values = vec![0.0; n_res * n_res * n_res];
    for z in 0..n_res {
        for y in 0..n_res {
            for x in 0..n_res {
                let c = [x, y, z];
                if c[ai] < solid_layers {
                    values[x + n_res * (y + n_res * z)] = 1.0;
                }
            }
        }
    }
    VoxelGrid::new(n_res, [1.0, 1.0, 1.0], GridKind::Occupancy, values)
}

/// Seeded random occupancy grid: each voxel is solid with probability
/// `fill_prob`. Deterministic for a given seed.
pub fn generate_random_occupancy(n_res: usize, seed: u64, fill_prob: f64) -> Result<VoxelGrid> {
    if n_res < 2 {
        return Err(Error::InvalidGrid(format!("resolution must be >= 2, got {n_res}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..n_res * n_res * n_res)
        .map(|_| if rng.random::<f64>() < fill_prob { 1.0 } else { 0.0 })
        .collect();
    VoxelGrid::new(n_res, [1.0, 1.0, 1.0], GridKind::Occupancy, values)
}

/// Seeded random density field: a sum of random-phase low-frequency
/// periodic cosines, shifted and scaled so the mean equals `target_vf`
/// exactly and all values stay inside `[RHO_MIN, 1]`.
///
/// The long wavelengths matter: structure below the sensitivity-filter
/// radius is erased by the first SIMP iterations, and a field without
/// surviving structure collapses into the uniform (translation-invariant)
/// equilibrium of inverse homogenization.
pub fn generate_random_density(n_res: usize, seed: u64, target_vf: f64) -> Result<VoxelGrid> {
    if n_res < 2 {
        return Err(Error::InvalidGrid(format!("resolution must be >= 2, got {n_res}")));
    }
    if !(RHO_MIN..1.0).contains(&target_vf) {
        return Err(Error::InvalidConfig(format!(
            "target volume fraction must lie in [{RHO_MIN}, 1), got {target_vf}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Random wavevectors with components in [-2, 2], excluding the DC mode.
    let mut modes: Vec<([f64; 3], f64, f64)> = Vec::new();
    while modes.len() < 8 {
        let k = [
            rng.random_range(-2i32..=2) as f64,
            rng.random_range(-2i32..=2) as f64,
            rng.random_range(-2i32..=2) as f64,
        ];
        if k == [0.0, 0.0, 0.0] {
            continue;
        }
        let amplitude = 0.5 + rng.random::<f64>();
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        modes.push((k, amplitude, phase));
    }
    let n = n_res as f64;
    let raw: Vec<f64> = (0..n_res * n_res * n_res)
        .map(|i| {
            let x = (i % n_res) as f64 / n;
            let y = (i / n_res % n_res) as f64 / n;
            let z = (i / (n_res * n_res)) as f64 / n;
            modes
                .iter()
                .map(|([kx, ky, kz], a, phi)| {
                    a * (std::f64::consts::TAU * (kx * x + ky * y + kz * z) + phi).cos()
                })
                .sum()
        })
        .collect();
    // Soft-threshold into a high-contrast blob field: smooth, intermediate
    // densities sit in the basin of the uniform equilibrium and dissolve.
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / raw.len() as f64).sqrt();
    let width = 0.25 * sd.max(1e-12);
    let lo = RHO_MIN.max(0.25 * target_vf);
    let hi = 1.0 - 0.05 * (1.0 - target_vf);
    let field = |theta: f64| -> Vec<f64> {
        raw.iter()
            .map(|&v| lo + (hi - lo) * 0.5 * (1.0 + ((v - theta) / width).tanh()))
            .collect()
    };
    // mean(theta) is monotone decreasing; bisect the threshold onto the
    // target volume fraction.
    let span = raw.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let (mut t_lo, mut t_hi) = (span.0 - 10.0 * width, span.1 + 10.0 * width);
    let mut values = field(0.5 * (t_lo + t_hi));
    for _ in 0..90 {
        let mid = 0.5 * (t_lo + t_hi);
        values = field(mid);
        let m = values.iter().sum::<f64>() / values.len() as f64;
        if m > target_vf {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
    }
    VoxelGrid::new(n_res, [1.0, 1.0, 1.0], GridKind::Density, values)
}

/// Serialized grid header. The data payload follows the header line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridMeta {
    resolution: usize,
    kind: GridKind,
    period: [f64; 3],
    material: MaterialModel,
}

/// A grid together with its material, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub grid: VoxelGrid,
    pub material: MaterialModel,
}

/// Write a grid file: one UTF-8 JSON meta line, `\n`, then the raw data
/// block (x-fastest). Occupancy stores one byte per voxel (0 or 1), density
/// stores a little-endian IEEE-754 binary32 per voxel.
pub fn save_grid(grid: &VoxelGrid, material: &MaterialModel, path: &Path) -> Result<()> {
    material.validate()?;
    let meta = GridMeta {
        resolution: grid.resolution(),
        kind: grid.kind(),
        period: grid.period(),
        material: *material,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut file, &meta)?;
    file.write_all(b"\n")?;
    match grid.kind() {
        GridKind::Occupancy => {
            let bytes: Vec<u8> = grid.values().iter().map(|&v| v as u8).collect();
            file.write_all(&bytes)?;
        }
        GridKind::Density => {
            let mut bytes = Vec::with_capacity(grid.values().len() * 4);
            for &v in grid.values() {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
            file.write_all(&bytes)?;
        }
    }
    file.flush()?;
    Ok(())
}

/// Read a grid file written by [`save_grid`].
pub fn load_grid(path: &Path) -> Result<GridFile> {
    let bad = |reason: String| Error::MalformedFile {
        path: path.display().to_string(),
        reason,
    };
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let newline = raw
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let meta: GridMeta = serde_json::from_slice(&raw[..newline])
        .map_err(|e| bad(format!("invalid header: {e}")))?;
    meta.material.validate()?;
    let data = &raw[newline + 1..];
    let n3 = meta
        .resolution
        .checked_pow(3)
        .ok_or_else(|| bad("resolution overflow".into()))?;
    let values = match meta.kind {
        GridKind::Occupancy => {
            if data.len() != n3 {
                return Err(bad(format!("expected {n3} occupancy bytes, found {}", data.len())));
            }
            data.iter()
                .map(|&b| match b {
                    0 => Ok(0.0),
                    1 => Ok(1.0),
                    other => Err(bad(format!("occupancy byte {other} is not 0 or 1"))),
                })
                .collect::<Result<Vec<f64>>>()?
        }
        GridKind::Density => {
            if data.len() != n3 * 4 {
                return Err(bad(format!(
                    "expected {} density bytes, found {}",
                    n3 * 4,
                    data.len()
                )));
            }
            data.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        }
    };
    let grid = VoxelGrid::new(meta.resolution, meta.period, meta.kind, values).map_err(|e| match e
    {
        Error::InvalidGrid(reason) => bad(reason),
        other => other,
    })?;
    Ok(GridFile { grid, material: meta.material })
}
