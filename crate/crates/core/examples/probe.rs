//! Trains a synthetic scene and reports progress.
//!
//! `cargo run --release --example probe -- <quad|two-planes> <iterations> [key=value ...]`

use std::time::Instant;

use trisoup::io::fusion::FusionParams;
use trisoup::io::psnr;
use trisoup::raster::render;
use trisoup::synthetic::SceneSpec;
use trisoup::train::{checkpoint, TrainConfig, Trainer};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let spec = match args.get(1).map(String::as_str) {
        Some("two-planes") => SceneSpec::two_planes(),
        _ => SceneSpec::quad(),
    };
    let iters: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let scene = spec.generate::<f64>();
    let mut cfg = TrainConfig { iterations: iters, ..Default::default() };
    cfg = cfg.with_overrides(&args[3.min(args.len())..]).expect("bad override");
    // PROBE_LOAD resumes from a checkpoint, PROBE_SAVE writes one at the end
    let mut tr = match std::env::var("PROBE_LOAD") {
        Ok(path) => {
            let (state, _) = checkpoint::load::<f64>(std::path::Path::new(&path)).unwrap();
            Trainer::resume(&cfg, &scene.dataset, scene.train.clone(), state.expect("not a training checkpoint")).unwrap()
        }
        Err(_) => Trainer::new(&cfg, &scene.dataset, scene.train.clone()).unwrap(),
    };
    let start = Instant::now();
    let data = &scene.dataset;
    let cams: Vec<_> = data.views.iter().map(|v| v.camera.clone()).collect();
    tr.run(|st, m| {
        if m.iteration % 250 == 0 || m.iteration == iters {
            let p = scene
                .held_out
                .iter()
                .map(|&i| psnr(&render(&st.soup, &data.views[i].camera, &cfg.render_config()).color, &data.views[i].image))
                .sum::<f64>()
                / scene.held_out.len() as f64;
            let (g, _) = spec.evaluate_geometry(&st.soup, &cams, &cfg.render_config(), &FusionParams::default(), 0.95);
            println!(
                "{} psnr={p:.2} mae={:.4} depth={:.3} cov={:.3} acc={:.5} comp={:.5} chamfer={:.5} ext={:.3} t={:.1}s",
                m.log_line(),
                g.depth_mae,
                g.mean_depth,
                g.coverage,
                g.accuracy,
                g.completeness,
                g.chamfer,
                spec.extent(),
                start.elapsed().as_secs_f64()
            );
        }
        Ok(())
    })
    .unwrap();
    if let Ok(path) = std::env::var("PROBE_SAVE") {
        checkpoint::save_state(&tr.state, std::path::Path::new(&path)).unwrap();
    }
}
