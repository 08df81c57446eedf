use proptest::prelude::*;
use trisoup::connectivity::{build_graph_brute_force, build_graph_from_layouts, GraphParams};
use trisoup::io::{load_sfm, save_sfm};
use trisoup::scene::{init_from_points, InitOptions};
use trisoup::synthetic::SceneSpec;
use trisoup::train::checkpoint::{read, write_state};
use trisoup::train::{TrainConfig, TrainState, Trainer};

fn tiny_spec() -> SceneSpec {
    SceneSpec { width: 16, height: 16, focal: 16.0, views: 4, held_out: 0, seed_points: 60, ..SceneSpec::quad() }
}

/// Every schedule phase (SH unlock, geometric losses, connectivity, graph
/// rebuilds, densification and opacity resets) happens within 40 iterations.
fn compressed_config() -> TrainConfig {
    TrainConfig { iterations: 40, ..Default::default() }
        .with_overrides(&[
            "init.sh_unlock_every=5",
            "loss.normal_from=3",
            "loss.smooth_from=5",
            "loss.connectivity_from=8",
            "connectivity.rebuild_every=7",
            "densify.from=10",
            "densify.every=10",
            "densify.grad_threshold=1e-3",
            "densify.opacity_reset_every=25",
        ])
        .unwrap()
}

fn state_bytes(st: &TrainState<f64>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_state(st, &mut buf).unwrap();
    buf
}

#[test]
fn resumed_run_matches_uninterrupted_run_bitwise() {
    let scene = tiny_spec().generate::<f64>();
    let cfg = compressed_config();
    let mut straight = Trainer::new(&cfg, &scene.dataset, scene.train.clone()).unwrap();
    straight.run(|_, _| Ok(())).unwrap();
    let events = straight.state.history.iter().filter(|m| m.densify.is_some()).count();
    assert_eq!(events, 3);
    assert!(straight.state.history.iter().any(|m| m.connectivity > 0.0));

    let mut first = Trainer::new(&cfg, &scene.dataset, scene.train.clone()).unwrap();
    for _ in 0..23 {
        first.step().unwrap();
    }
    let (state, _) = read::<f64>(state_bytes(&first.state).as_slice()).unwrap();
    let mut second = Trainer::resume(&cfg, &scene.dataset, scene.train.clone(), state.unwrap()).unwrap();
    second.run(|_, _| Ok(())).unwrap();

    let (a, b) = (state_bytes(&second.state), state_bytes(&straight.state));
    let first_diff = a.iter().zip(&b).position(|(x, y)| x != y);
    assert!(a.len() == b.len() && first_diff.is_none(), "lengths {} {}, first difference at {first_diff:?}", a.len(), b.len());
    let tail: Vec<u64> = straight.state.history[23..].iter().map(|m| m.total.to_bits()).collect();
    let resumed: Vec<u64> = second.state.history.iter().map(|m| m.total.to_bits()).collect();
    assert_eq!(resumed, tail);
}

#[test]
fn f32_training_stays_finite() {
    let scene = tiny_spec().generate::<f32>();
    let cfg = compressed_config();
    let mut tr = Trainer::new(&cfg, &scene.dataset, scene.train.clone()).unwrap();
    tr.run(|_, m| {
        assert!(m.total.is_finite(), "iteration {} loss {}", m.iteration, m.total);
        Ok(())
    })
    .unwrap();
    assert!(tr.state.soup.params.groups.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn training_reduces_photometric_loss() {
    let scene = tiny_spec().generate::<f64>();
    let cfg = TrainConfig { iterations: 200, ..Default::default() };
    let mut tr = Trainer::new(&cfg, &scene.dataset, scene.train.clone()).unwrap();
    tr.run(|_, _| Ok(())).unwrap();
    let h = &tr.state.history;
    let mean = |r: &[trisoup::train::IterMetrics]| r.iter().map(|m| m.photometric).sum::<f64>() / r.len() as f64;
    assert!(mean(&h[h.len() - 20..]) < 0.7 * mean(&h[..20]));
}

#[test]
fn dataset_survives_disk_round_trip() {
    let scene = tiny_spec().generate::<f64>();
    let dir = tempfile::tempdir().unwrap();
    save_sfm(&scene.dataset, dir.path()).unwrap();
    let back = load_sfm::<f64>(dir.path(), 1.0).unwrap();
    assert_eq!(back.views.len(), scene.dataset.views.len());
    for (a, b) in back.views.iter().zip(&scene.dataset.views) {
        assert_eq!(a.name, b.name);
        assert_eq!((a.camera.width, a.camera.height), (b.camera.width, b.camera.height));
        assert!((a.camera.rot - b.camera.rot).amax() < 1e-9);
        assert!((a.camera.trans - b.camera.trans).amax() < 1e-9);
        assert!((a.camera.fx - b.camera.fx).abs() < 1e-9);
        // images are stored as 8-bit PNG
        for (p, q) in a.image.iter().zip(&b.image) {
            assert!((p - q).amax() <= 0.5 / 255.0 + 1e-12);
        }
    }
    assert_eq!(back.seed.points.len(), scene.dataset.seed.points.len());
    for (p, q) in back.seed.points.iter().zip(&scene.dataset.seed.points) {
        assert!((p - q).amax() < 1e-9);
    }
}

#[test]
fn scaled_load_halves_resolution() {
    let scene = tiny_spec().generate::<f64>();
    let dir = tempfile::tempdir().unwrap();
    save_sfm(&scene.dataset, dir.path()).unwrap();
    let back = load_sfm::<f64>(dir.path(), 0.5).unwrap();
    let (a, b) = (&back.views[0].camera, &scene.dataset.views[0].camera);
    assert_eq!((a.width, a.height), (8, 8));
    assert!((a.fx - b.fx / 2.0).abs() < 1e-12);
    assert_eq!(back.views[0].image.len(), 64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grid_graph_equals_brute_force(seed in 0u64..1_000_000, n in 10usize..120, spread in 0.2f64..3.0) {
        let scene = SceneSpec { seed_points: n, rng_seed: seed, seed_noise: spread * 0.05, ..tiny_spec() };
        let pts = scene.seed();
        let soup = init_from_points::<f64>(&pts, &InitOptions::default(), seed).unwrap();
        let layouts = soup.layouts();
        let params = GraphParams::default();
        prop_assert_eq!(build_graph_from_layouts(&layouts, &params, 0), build_graph_brute_force(&layouts, &params, 0));
    }
}
