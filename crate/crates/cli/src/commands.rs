use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use trisoup::connectivity::build_graph;
use trisoup::io::colmap::find_sparse_dir;
use trisoup::io::fusion::{fuse_depth_maps, DepthView, FusionParams};
use trisoup::io::images::{load_rgb, read_pfm, save_png, write_pfm, FloatRaster};
use trisoup::io::ply::{read_points, write_points, write_soup, PointCloud};
use trisoup::io::{chamfer, load_sfm, psnr, save_sfm, Dataset, SfmModel};
use trisoup::losses::ssim;
use trisoup::raster::{render, Camera};
use trisoup::synthetic::SceneSpec;
use trisoup::train::checkpoint::{load, load_soup, save_state};
use trisoup::train::{TrainConfig, Trainer};
use trisoup::{Error, Real, Result};

use crate::{Command, EvalCommand, FuseArgs, InspectArgs, Precision, RenderArgs, SynthArgs, SynthScene, TrainArgs, EXIT_INPUT, EXIT_RUNTIME};

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Contract(_) => EXIT_RUNTIME,
        _ => EXIT_INPUT,
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => match a.precision {
            Precision::F32 => train::<f32>(&a),
            Precision::F64 => train::<f64>(&a),
        },
        Command::Render(a) => render_cmd(&a),
        Command::Fuse(a) => fuse(&a),
        Command::Eval(EvalCommand::Images { pred, gt, out }) => eval_images(&pred, &gt, out.as_deref()),
        Command::Eval(EvalCommand::Cloud { pred, gt, out }) => eval_cloud(&pred, &gt, out.as_deref()),
        Command::Inspect(a) => inspect(&a),
        Command::Synth(a) => synth(&a),
    }
}

fn resolve_config(path: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let base = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    let cfg = base.with_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn mean_psnr<T: Real>(soup: &trisoup::scene::TriangleSoup<T>, data: &Dataset<T>, views: &[usize], cfg: &TrainConfig) -> Option<f64> {
    if views.is_empty() {
        return None;
    }
    let rc = cfg.render_config();
    let total: f64 = views.iter().map(|&i| psnr(&render(soup, &data.views[i].camera, &rc).color, &data.views[i].image)).sum();
    Some(total / views.len() as f64)
}

fn train<T: Real>(a: &TrainArgs) -> Result<()> {
    let mut cfg = resolve_config(a.config.as_deref(), &a.overrides)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let data: Dataset<T> = load_sfm(&a.data, a.scale)?;
    let held = data.every_kth(a.holdout);
    let train_views = data.training_indices(&held);
    if train_views.is_empty() {
        return Err(Error::Config(format!("--holdout {} leaves no training views", a.holdout)));
    }
    fs::create_dir_all(&a.out)?;
    write_text(&a.out.join("config.toml"), &cfg.to_toml())?;
    log::info!("views={} train={} heldout={} seed_points={}", data.views.len(), train_views.len(), held.len(), data.seed.points.len());

    let mut trainer = match &a.resume {
        Some(p) => {
            let (state, _) = load::<T>(p)?;
            let state = state.ok_or_else(|| Error::Checkpoint(format!("{} holds no training state", p.display())))?;
            Trainer::resume(&cfg, &data, train_views, state)?
        }
        None => Trainer::new(&cfg, &data, train_views)?,
    };
    let mut metrics = fs::File::create(a.out.join("metrics.log"))?;
    let out = a.out.clone();
    trainer.run(|st, m| {
        if (cfg.log_every > 0 && m.iteration % cfg.log_every == 0) || m.iteration == cfg.iterations {
            let mut line = m.log_line();
            if let Some(&h) = held.first() {
                line += &format!(" heldout_psnr={:.3}", mean_psnr(&st.soup, &data, &[h], &cfg).unwrap_or(0.0));
            }
            log::info!("{line}");
            writeln!(metrics, "{line}")?;
        }
        if cfg.checkpoint_every > 0 && m.iteration % cfg.checkpoint_every == 0 {
            save_state(st, &out.join(format!("checkpoint_{:07}.bin", m.iteration)))?;
        }
        Ok(())
    })?;
    let st = &trainer.state;
    save_state(st, &a.out.join("checkpoint.bin"))?;
    write_soup(&a.out.join("soup.ply"), &st.soup)?;
    let line = match mean_psnr(&st.soup, &data, &held, &cfg) {
        Some(p) => format!("final iter={} triangles={} heldout_views={} heldout_psnr={p:.3}", st.iteration, st.soup.count(), held.len()),
        None => format!("final iter={} triangles={}", st.iteration, st.soup.count()),
    };
    log::info!("{line}");
    writeln!(metrics, "{line}")?;
    Ok(())
}

fn stem(name: &str) -> String {
    Path::new(name).file_stem().map_or_else(|| name.to_string(), |s| s.to_string_lossy().into_owned())
}

fn render_cmd(a: &RenderArgs) -> Result<()> {
    let cfg = resolve_config(a.config.as_deref(), &a.overrides)?;
    let soup = load_soup::<f64>(&a.checkpoint)?;
    let model = SfmModel::read(&find_sparse_dir(&a.data)?)?;
    fs::create_dir_all(&a.out)?;
    write_text(&a.out.join("config.toml"), &cfg.to_toml())?;
    let rc = cfg.render_config();
    let mut views = Vec::new();
    let mut images = model.images.clone();
    images.sort_by(|x, y| x.name.cmp(&y.name));
    for im in &images {
        let cam: Camera<f64> = model.camera(im, a.scale)?;
        let out = render(&soup, &cam, &rc);
        let s = stem(&im.name);
        let (w, h) = (cam.width, cam.height);
        save_png(&a.out.join(format!("{s}.png")), w, h, &out.color)?;
        let depth = FloatRaster { width: w, height: h, channels: 1, data: out.depth.iter().map(|d| *d as f32).collect() };
        write_pfm(&a.out.join(format!("{s}.depth.pfm")), &depth)?;
        let normal = FloatRaster { width: w, height: h, channels: 3, data: out.normal.iter().flat_map(|n| [n.x as f32, n.y as f32, n.z as f32]).collect() };
        write_pfm(&a.out.join(format!("{s}.normal.pfm")), &normal)?;
        log::info!("rendered view={} valid_depth={}", im.name, out.depth.iter().filter(|d| **d > 0.0).count());
        views.push((format!("{s}.png"), cam));
    }
    SfmModel::from_views(&views, &trisoup::Seed::default()).write(&a.out.join("sparse/0"))?;
    Ok(())
}

fn fuse(a: &FuseArgs) -> Result<()> {
    let model = SfmModel::read(&find_sparse_dir(&a.renders)?)?;
    let mut views = Vec::new();
    let mut images = model.images.clone();
    images.sort_by(|x, y| x.name.cmp(&y.name));
    for im in &images {
        let cam: Camera<f64> = model.camera(im, 1.0)?;
        let s = stem(&im.name);
        let depth = read_pfm(&a.renders.join(format!("{s}.depth.pfm")))?;
        if depth.channels != 1 || depth.width != cam.width || depth.height != cam.height {
            return Err(Error::Validation(format!("depth map of `{}` does not match its {}x{} camera", im.name, cam.width, cam.height)));
        }
        let color = load_rgb::<f64>(&a.renders.join(&im.name), Some((cam.width, cam.height)))?;
        views.push(DepthView { camera: cam, depth: depth.data.iter().map(|d| *d as f64).collect(), color: color.pixels });
    }
    let params = FusionParams { px_thresh: a.px_thresh, min_views: a.min_views, neighbors: a.neighbors, rel_depth: a.rel_depth };
    let cloud = fuse_depth_maps(&views, &params);
    log::info!("fused views={} points={}", views.len(), cloud.len());
    write_points(&a.out, &PointCloud { points: cloud.points, colors: cloud.colors })
}

fn report(lines: &[String], out: Option<&Path>) -> Result<()> {
    for l in lines {
        println!("{l}");
    }
    if let Some(p) = out {
        write_text(p, &(lines.join("\n") + "\n"))?;
    }
    Ok(())
}

fn eval_images(pred: &Path, gt: &Path, out: Option<&Path>) -> Result<()> {
    for d in [pred, gt] {
        if !d.is_dir() {
            return Err(Error::Missing(d.to_path_buf()));
        }
    }
    let mut names: Vec<PathBuf> = fs::read_dir(pred)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    names.sort();
    let mut lines = Vec::new();
    let (mut sp, mut ss) = (0.0, 0.0);
    let mut n = 0;
    for p in &names {
        let name = p.file_name().unwrap();
        let g = gt.join(name);
        if !g.is_file() {
            continue;
        }
        let a = load_rgb::<f64>(p, None)?;
        let b = load_rgb::<f64>(&g, None)?;
        if (a.width, a.height) != (b.width, b.height) {
            return Err(Error::Validation(format!("{} is {}x{} but its reference is {}x{}", name.to_string_lossy(), a.width, a.height, b.width, b.height)));
        }
        let (ps, s) = (psnr(&a.pixels, &b.pixels), ssim(&a.pixels, &b.pixels, a.width, a.height));
        lines.push(format!("image={} psnr={ps:.4} ssim={s:.5}", name.to_string_lossy()));
        sp += ps;
        ss += s;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Validation(format!("no same-named PNG images in {} and {}", pred.display(), gt.display())));
    }
    lines.push(format!("images={n} mean_psnr={:.4} mean_ssim={:.5}", sp / n as f64, ss / n as f64));
    report(&lines, out)
}

fn eval_cloud(pred: &Path, gt: &Path, out: Option<&Path>) -> Result<()> {
    let a = read_points(pred)?;
    let b = read_points(gt)?;
    for (c, p) in [(&a, pred), (&b, gt)] {
        if c.points.is_empty() {
            return Err(Error::Validation(format!("{} has no points", p.display())));
        }
    }
    let c = chamfer(&a.points, &b.points);
    report(
        &[format!("pred_points={} gt_points={} accuracy={:.6e} completeness={:.6e} chamfer={:.6e}", a.points.len(), b.points.len(), c.accuracy, c.completeness, c.mean)],
        out,
    )
}

/// `min p10 p50 p90 max` of a sample.
fn quantiles(mut v: Vec<f64>) -> String {
    if v.is_empty() {
        return "empty".into();
    }
    v.sort_by(f64::total_cmp);
    let q = |f: f64| v[((v.len() - 1) as f64 * f).round() as usize];
    format!("min={:.4e} p10={:.4e} p50={:.4e} p90={:.4e} max={:.4e}", q(0.0), q(0.1), q(0.5), q(0.9), q(1.0))
}

/// Counts over fixed bins `edges[i] <= x < edges[i+1]`.
fn histogram(v: &[f64], edges: &[f64]) -> String {
    let mut counts = vec![0usize; edges.len() - 1];
    for x in v {
        if let Some(i) = edges.windows(2).position(|e| *x >= e[0] && *x < e[1]) {
            counts[i] += 1;
        }
    }
    edges.windows(2).zip(&counts).map(|(e, c)| format!("[{},{})={c}", e[0], e[1])).collect::<Vec<_>>().join(" ")
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let (state, soup) = load::<f64>(&a.checkpoint)?;
    let soup = match (&state, soup) {
        (Some(s), _) => s.soup.clone(),
        (None, Some(s)) => s,
        (None, None) => return Err(Error::Checkpoint("empty checkpoint".into())),
    };
    let n = soup.count();
    let acts: Vec<_> = (0..n).map(|i| soup.activated(i)).collect();
    let alphas: Vec<f64> = acts.iter().map(|x| x.alpha).collect();
    let degenerate = soup.layouts().iter().filter(|l| l.degenerate).count();
    println!("triangles={n} sh_degree={} active_sh={} degenerate={degenerate}", soup.sh_degree, soup.active_sh);
    println!("alpha {}", quantiles(alphas.clone()));
    println!("alpha_hist {}", histogram(&alphas, &[0.0, 0.005, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0 + 1e-12]));
    println!("sigma {}", quantiles(acts.iter().map(|x| x.sigma).collect()));
    println!("scale {}", quantiles(acts.iter().flat_map(|x| x.scales.iter().copied().collect::<Vec<_>>()).collect()));
    if let Some(st) = &state {
        println!(
            "iteration={} adam_step={} connections={} graph_stale={}",
            st.iteration,
            st.adam_step,
            st.graph.connections.len(),
            st.graph.stale
        );
    }
    if a.graph {
        let cfg = TrainConfig::default();
        let g = build_graph(&soup, &cfg.graph_params(), 0);
        let reversed = g.connections.iter().filter(|c| c.reversed).count();
        println!("rebuilt_connections={} reversed={reversed} edges={}", g.connections.len(), 3 * n);
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    if a.views < 2 || a.size < 8 {
        return Err(Error::Config("synth needs at least 2 views of at least 8x8 pixels".into()));
    }
    let base = match a.scene {
        SynthScene::Quad => SceneSpec::quad(),
        SynthScene::TwoPlanes => SceneSpec::two_planes(),
    };
    let spec = SceneSpec {
        views: a.views,
        held_out: 0,
        width: a.size,
        height: a.size,
        focal: base.focal * a.size as f64 / base.width as f64,
        ..base
    };
    let scene = spec.generate::<f64>();
    save_sfm(&scene.dataset, &a.out)?;
    // reference surface: every pixel of the analytic depth maps, unprojected
    let mut reference = PointCloud::default();
    for (v, depth) in scene.dataset.views.iter().zip(&scene.depths) {
        let cam = &v.camera;
        for y in 0..cam.height {
            for x in 0..cam.width {
                let d = depth[y * cam.width + x];
                if d > 0.0 {
                    reference.points.push(cam.unproject(x as f64 + 0.5, y as f64 + 0.5, d));
                    reference.colors.push(Vector3::repeat(0.5));
                }
            }
        }
    }
    write_points(&a.out.join("surface.ply"), &reference)?;
    log::info!("synth scene={:?} views={} size={} extent={:.4} surface_points={}", a.scene, a.views, a.size, spec.extent(), reference.points.len());
    Ok(())
}
