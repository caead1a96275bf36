use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use panofuse::geom::{PointCloud, Vec3};
use panofuse::world::{
    build_world, decode_ply, encode_ply, load_ply, load_world, quantize_channel, save_ply,
    save_world, WorldConfig, PROVENANCE_FILE, TIMINGS_FILE, WORLD_FILE,
};
use panofuse::Error;

fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = PointCloud::with_capacity(n);
    for _ in 0..n {
        let p = Vec3::new(
            rng.random_range(-100.0..100.0),
            rng.random_range(-100.0..100.0),
            rng.random_range(-100.0..100.0),
        );
        c.push(p, [rng.random(), rng.random(), rng.random()]);
    }
    c
}

#[test]
fn ten_thousand_points_round_trip() {
    let cloud = random_cloud(10_000, 1);
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.ply");
    save_ply(&cloud, &path).unwrap();
    let back = load_ply(&path).unwrap();
    assert_eq!(back.len(), 10_000);
    for i in 0..cloud.len() {
        let (p, q) = (cloud.positions[i], back.positions[i]);
        for k in 0..3 {
            assert_eq!(q[k], p[k] as f32 as f64, "point {i} axis {k}");
        }
        for k in 0..3 {
            let level = quantize_channel(cloud.colors[i][k]);
            assert_eq!(back.colors[i][k], level as f32 / 255.0);
            assert!((back.colors[i][k] - cloud.colors[i][k]).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
    assert_eq!(
        std::fs::metadata(&path).unwrap().len() as usize,
        encode_ply(&cloud).unwrap().len()
    );
    assert_eq!(encode_ply(&back).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn damaged_files_are_parse_errors() {
    let bytes = encode_ply(&random_cloud(50, 2)).unwrap();
    let truncated = &bytes[..bytes.len() - 7];
    assert!(matches!(decode_ply(truncated), Err(Error::Parse { .. })));
    let mut trailing = bytes.clone();
    trailing.extend_from_slice(&[0; 15]);
    assert!(matches!(decode_ply(&trailing), Err(Error::Parse { .. })));
    assert!(matches!(decode_ply(b"plx\n"), Err(Error::Parse { .. })));
    let text = String::from_utf8_lossy(&bytes).replace("element vertex 50", "element vertex 5x");
    assert!(matches!(
        decode_ply(text.as_bytes()),
        Err(Error::Parse { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_is_a_fixed_point_after_one_trip(n in 0usize..200, seed in any::<u64>()) {
        let bytes = encode_ply(&random_cloud(n, seed)).unwrap();
        let again = encode_ply(&decode_ply(&bytes).unwrap()).unwrap();
        prop_assert_eq!(bytes, again);
    }
}

fn small_config() -> WorldConfig {
    WorldConfig {
        n: 2,
        width: 64,
        height: 32,
        seed: 4,
        ..Default::default()
    }
}

#[test]
fn saved_worlds_load_back() {
    let config = small_config();
    let world = build_world(&config, &config.oracles().unwrap()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    save_world(&world, tmp.path()).unwrap();
    let back = load_world(tmp.path()).unwrap();
    assert_eq!(back.poses, world.poses);
    assert_eq!(back.provenance, world.provenance);
    assert_eq!(back.timings, world.timings);
    assert_eq!(
        encode_ply(&back.cloud).unwrap(),
        encode_ply(&world.cloud).unwrap()
    );
    assert_eq!(back.splat(), world.splat());

    std::fs::remove_file(tmp.path().join(TIMINGS_FILE)).unwrap();
    assert!(load_world(tmp.path()).unwrap().timings.is_empty());

    let mut fewer = world.cloud.clone();
    fewer.positions.pop();
    fewer.colors.pop();
    save_ply(&fewer, &tmp.path().join(WORLD_FILE)).unwrap();
    assert!(load_world(tmp.path()).is_err());

    std::fs::write(tmp.path().join(PROVENANCE_FILE), "{\n  \"format\": 3,\n}").unwrap();
    assert!(matches!(load_world(tmp.path()), Err(Error::Parse { .. })));
}
