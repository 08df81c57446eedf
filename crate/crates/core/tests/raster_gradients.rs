use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trisoup::raster::{render, render_backward, Camera, DepthMode, ImageGrads, RenderConfig};
use trisoup::scene::{ParamGroup, TriangleSoup};

fn random_soup(rng: &mut ChaCha8Rng, n: usize, degree: usize) -> TriangleSoup<f64> {
    let mut s = TriangleSoup::new(degree);
    s.active_sh = degree;
    let w = s.widths()[1];
    for _ in 0..n {
        let mu = Vector3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.5..0.5));
        let sh: Vec<f64> = (0..w).map(|_| rng.random_range(-0.4..0.4)).collect();
        let scale = Vector3::from_fn(|_, _| rng.random_range(-1.2f64..-0.4));
        let q = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        s.push(mu, &sh, scale, q, rng.random_range(-1.0..1.5), rng.random_range(1.0f64..2.5));
    }
    s
}

/// Central difference of the linear image loss, differenced per pixel before
/// summation to limit cancellation.
fn loss_diff(p: &TriangleSoup<f64>, m: &TriangleSoup<f64>, cam: &Camera<f64>, cfg: &RenderConfig, g: &ImageGrads<f64>) -> f64 {
    let a = render(p, cam, cfg);
    let b = render(m, cam, cfg);
    let mut l = 0.0;
    for i in 0..a.color.len() {
        l += (a.color[i] - b.color[i]).dot(&g.color[i])
            + (a.depth[i] - b.depth[i]) * g.depth[i]
            + (a.normal[i] - b.normal[i]).dot(&g.normal[i]);
    }
    l
}

fn check(cfg: RenderConfig, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let soup = random_soup(&mut rng, 10, 2);
    let cam = Camera::look_at(16, 16, 14.0, Vector3::new(0.3, -0.2, -3.0), Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0));
    let px = 256;
    let mut g = ImageGrads::zeros(px);
    for i in 0..px {
        g.color[i] = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        g.depth[i] = rng.random_range(-1.0..1.0);
        g.normal[i] = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    }
    let mut analytic = soup.clone();
    let out = render(&analytic, &cam, &cfg);
    render_backward(&mut analytic, &out, &g).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for group in ParamGroup::ALL {
        let len = soup.params.get(group).len();
        for k in 0..len {
            let mut p = soup.clone();
            p.params.get_mut(group)[k] += h;
            let mut m = soup.clone();
            m.params.get_mut(group)[k] -= h;
            let fd = loss_diff(&p, &m, &cam, &cfg, &g) / (2.0 * h);
            let an = analytic.grads.get(group)[k];
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            if (fd - an).abs() > 1e-8 {
                worst = worst.max(err);
                assert!(err < 1e-4, "{group:?}[{k}]: fd {fd} analytic {an}");
            }
        }
    }
    let nonzero: usize = ParamGroup::ALL.iter().map(|g| analytic.grads.get(*g).iter().filter(|x| x.abs() > 1e-6).count()).sum();
    assert!(nonzero > 100, "scene barely visible: {nonzero}");
    eprintln!("worst relative error {worst:e} over {nonzero} nonzero gradients");
}

#[test]
fn render_gradients_match_finite_differences_median() {
    check(RenderConfig::default(), 1);
}

#[test]
fn render_gradients_match_finite_differences_mean() {
    check(RenderConfig { depth_mode: DepthMode::Mean, background: [0.2, 0.5, 0.9], ..Default::default() }, 2);
}

#[test]
fn render_gradients_literal_transmittance_per_vertex_dirs() {
    check(RenderConfig { transmittance_uses_diffuse: false, per_vertex_view_dir: true, ..Default::default() }, 3);
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut soup = random_soup(&mut rng, 10, 1);
    let cam = Camera::look_at(16, 16, 14.0, Vector3::new(0.0, 0.0, -3.0), Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0));
    let out = render(&soup, &cam, &RenderConfig::default());
    render_backward(&mut soup, &out, &ImageGrads::zeros(256)).unwrap();
    assert!(soup.grads.groups.iter().all(|g| g.iter().all(|x| *x == 0.0)));
}
