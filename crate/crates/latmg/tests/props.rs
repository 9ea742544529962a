//! Property tests for the structural invariants.

mod common;

use latmg::fem::{element_kernel, EbeOperator, Physics};
use latmg::field::Field;
use latmg::hierarchy::build_hierarchy;
use latmg::neuroprims::{morton_code, morton_decode, SerializationView};
use latmg::smooth::{color_nodes, node_color};
use latmg::transfer::build_stencil;
use latmg::voxgeom::{GridKind, MaterialModel, VoxelGrid};
use proptest::prelude::*;

/// Nonempty occupancy grid of resolution 4 with at least one solid voxel.
fn occupancy_grid() -> impl Strategy<Value = VoxelGrid> {
    (proptest::collection::vec(proptest::bool::weighted(0.45), 64), 0usize..64).prop_map(
        |(bits, forced)| {
            let mut values: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            values[forced] = 1.0;
            VoxelGrid::new(4, [1.0; 3], GridKind::Occupancy, values).unwrap()
        },
    )
}

fn field_for(op: &EbeOperator, modes: usize, seed: u64) -> Field {
    common::seeded_field(op.level(), op.topology().num_nodes(), op.physics().dof(), modes, seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operator_is_self_adjoint(grid in occupancy_grid(), seed in 0u64..1_000_000) {
        for physics in [Physics::Thermal, Physics::Elasticity] {
            let hierarchy = build_hierarchy(&grid, 1).unwrap();
            let kernel = element_kernel(physics, &MaterialModel::default(), grid.element_size()).unwrap();
            let scales: Vec<f64> = hierarchy.level(1).elements.iter().map(|&e| grid.values()[e as usize]).collect();
            let op = EbeOperator::with_uniform_kernel(hierarchy.level_shared(1), kernel, scales).unwrap();
            let u = field_for(&op, 1, seed);
            let v = field_for(&op, 1, seed ^ 0xabcdef);
            let ku = op.apply(&u).unwrap();
            let kv = op.apply(&v).unwrap();
            let a = ku.dot_per_mode(&v)[0];
            let b = u.dot_per_mode(&kv)[0];
            prop_assert!((a - b).abs() <= 1e-10 * u.norm() * v.norm() + 1e-14);
        }
    }

    #[test]
    fn transfer_is_adjoint_and_partitions_unity(grid in occupancy_grid(), seed in 0u64..1_000_000) {
        let hierarchy = build_hierarchy(&grid, 2).unwrap();
        let stencil = build_stencil(&hierarchy, 1).unwrap();

        // partition of unity: constants prolongate exactly
        let mut c = Field::zeros(2, hierarchy.level(2).num_nodes(), 1, 1);
        c.fill(1.25);
        let p = stencil.prolongate(&c).unwrap();
        prop_assert!(p.data().iter().all(|&v| v == 1.25));

        // adjoint identity on random fields
        let uc = common::seeded_field(2, hierarchy.level(2).num_nodes(), 3, 2, seed);
        let vf = common::seeded_field(1, hierarchy.level(1).num_nodes(), 3, 2, seed ^ 0x5a5a);
        let pu = stencil.prolongate(&uc).unwrap();
        let rv = stencil.restrict(&vf).unwrap();
        let lhs: f64 = pu.dot_per_mode(&vf).iter().sum();
        let rhs: f64 = uc.dot_per_mode(&rv).iter().sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn every_element_sees_eight_distinct_colors(grid in occupancy_grid()) {
        let hierarchy = build_hierarchy(&grid, 2).unwrap();
        for level in hierarchy.levels() {
            let colors = color_nodes(level).unwrap();
            prop_assert_eq!(colors.total(), level.num_nodes());
            for inc in &level.element_nodes {
                let mut seen = [false; 8];
                for &n in inc {
                    let c = node_color(level.node_coord(n as usize));
                    prop_assert!(!seen[c]);
                    seen[c] = true;
                }
            }
        }
    }

    #[test]
    fn conservative_coarsening_covers_children(grid in occupancy_grid()) {
        let hierarchy = build_hierarchy(&grid, 2).unwrap();
        let fine = hierarchy.level(1);
        let coarse = hierarchy.level(2);
        for e in 0..fine.num_elements() {
            let c = fine.element_coord(e);
            let parent = [c[0] / 2, c[1] / 2, c[2] / 2];
            prop_assert!(coarse.element_index(parent).is_some());
        }
    }

    #[test]
    fn morton_codes_are_bijective(view_idx in 0usize..3, bits in 1u32..4) {
        let view = SerializationView::cyclic(view_idx, bits);
        let n = 1u32 << bits;
        let mut seen = std::collections::BTreeSet::new();
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let code = morton_code([x, y, z], &view);
                    prop_assert!(seen.insert(code));
                    prop_assert_eq!(morton_decode(code, &view), [x, y, z]);
                }
            }
        }
        prop_assert_eq!(seen.len() as u32, n * n * n);
    }

    #[test]
    fn grid_io_round_trips(grid in occupancy_grid(), tag in 0u32..1_000_000) {
        let dir = std::env::temp_dir().join(format!("latmg-prop-{}-{tag}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("grid.vox");
        let mat = MaterialModel::default();
        latmg::voxgeom::save_grid(&grid, &mat, &path).unwrap();
        let back = latmg::voxgeom::load_grid(&path).unwrap();
        prop_assert_eq!(back.grid, grid);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rarope_rotation_preserves_norm(a in -5.0f64..5.0, b in -5.0f64..5.0, theta in -50.0f64..50.0) {
        let (x, y) = latmg::neuroprims::rarope_rotate((a, b), theta);
        let before = (a * a + b * b).sqrt();
        let after = (x * x + y * y).sqrt();
        prop_assert!((before - after).abs() <= 1e-12 * before.max(1.0));
    }
}
