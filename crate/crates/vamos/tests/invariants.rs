//! Property-based invariants over randomized inputs.

use proptest::prelude::*;

use vamos::aneurysm::stand_off_distance;
use vamos::io::{read_volume, write_volume};
use vamos::volume::{Dims, VoxelVolume};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Volume files round-trip bit-exactly: dims, spacing, origin, payload.
    #[test]
    fn volume_io_round_trip(
        dx in 1usize..8,
        dy in 1usize..8,
        dz in 1usize..8,
        spacing in prop::array::uniform3(0.1f64..2.0),
        origin in prop::array::uniform3(-10.0f64..10.0),
        seed in any::<u32>(),
    ) {
        let dims = Dims { x: dx, y: dy, z: dz };
        let mut vol = VoxelVolume::zeros(dims, spacing);
        vol.origin = origin;
        // cheap deterministic fill; values must survive the raw payload
        let mut s = seed as u64 + 1;
        for v in &mut vol.data {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = ((s >> 40) as f32) / 256.0 - 32768.0;
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.vvol");
        write_volume(&vol, &path).unwrap();
        let back = read_volume(&path).unwrap();
        prop_assert_eq!(back.dims, vol.dims);
        prop_assert_eq!(back.spacing, vol.spacing);
        prop_assert_eq!(back.origin, vol.origin);
        prop_assert_eq!(back.data, vol.data);
    }

    /// Sac stand-off never undershoots the wall clearance term and grows
    /// monotonically with the sac radius.
    #[test]
    fn stand_off_bounds_and_monotonicity(
        r in 0.4f64..2.0,
        gamma in 0.7f64..1.0,
        radius in 0.5f64..3.0,
        theta in 0.05f64..std::f64::consts::PI,
        bump in 0.01f64..1.0,
    ) {
        let d = stand_off_distance(r, gamma, radius, theta).unwrap();
        prop_assert!(d >= r * gamma + radius - 1e-12);
        let d2 = stand_off_distance(r, gamma, radius + bump, theta).unwrap();
        prop_assert!(d2 > d);
    }
}
