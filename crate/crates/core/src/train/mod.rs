//! The optimization loop.

pub mod checkpoint;
pub mod config;
pub mod optim;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::TrainConfig;
pub use optim::{adam_step, lr_exp_decay, AdamParams, Schedule};

use crate::connectivity::{build_graph, circumradius, EdgeGraph};
use crate::density::{densify_and_prune, reset_opacity, DensifyParams, DensifyReport, DensifyStats};
use crate::error::{Error, Result};
use crate::io::{Dataset, View};
use crate::losses::{apply_vertex_grads, connectivity_loss, normal_consistency_loss, photometric_loss, smoothness_loss};
use crate::raster::{render, render_backward, ImageGrads};
use crate::scalar::Real;
use crate::scene::{init_from_points, TriangleSoup};

/// Loss terms of one iteration (unweighted) and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IterMetrics {
    pub iteration: u64,
    pub view: usize,
    pub photometric: f64,
    pub normal: f64,
    pub smooth: f64,
    pub connectivity: f64,
    pub total: f64,
    pub triangles: usize,
    pub connections: usize,
    pub densify: Option<DensifyReport>,
}

impl IterMetrics {
    /// `key=value` log line.
    pub fn log_line(&self) -> String {
        let mut s = format!(
            "iter={} view={} loss={:.6e} photometric={:.6e} normal={:.6e} smooth={:.6e} connectivity={:.6e} triangles={} connections={}",
            self.iteration,
            self.view,
            self.total,
            self.photometric,
            self.normal,
            self.smooth,
            self.connectivity,
            self.triangles,
            self.connections
        );
        if let Some(d) = self.densify {
            s += &format!(" split={} cloned={} pruned={}", d.split, d.cloned, d.pruned);
        }
        s
    }
}

/// Everything needed to continue training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T: Real> {
    /// Last completed iteration (0 before training).
    pub iteration: u64,
    pub adam_step: u64,
    /// Circumradius above which densified triangles are split.
    pub split_radius: f64,
    pub soup: TriangleSoup<T>,
    pub stats: DensifyStats<T>,
    pub graph: EdgeGraph<T>,
    pub history: Vec<IterMetrics>,
}

impl<T: Real> TrainState<T> {
    /// Fresh state seeded from the dataset's sparse points.
    pub fn initialize(data: &Dataset<T>, cfg: &TrainConfig) -> Result<Self> {
        let soup = init_from_points(&data.seed, &cfg.init_options(), cfg.seed)?;
        let mut radii: Vec<f64> = soup.layouts().iter().map(|l| circumradius(l).as_f64()).collect();
        radii.sort_by(f64::total_cmp);
        let median = radii.get(radii.len() / 2).copied().unwrap_or(0.0);
        let n = soup.count();
        let mut graph = EdgeGraph::empty(n);
        graph.stale = true;
        Ok(Self {
            iteration: 0,
            adam_step: 0,
            split_radius: median * cfg.densify.split_radius_factor,
            soup,
            stats: DensifyStats::new(n),
            graph,
            history: Vec::new(),
        })
    }
}

/// Zeroes and then fills `soup.grads` with the gradient of the scheduled
/// total loss for `view` at iteration `t`; also sets the active SH bands.
/// Returns the loss terms and the render-only reference-point gradients.
/// `graph` must be current whenever connectivity is active at `t`.
pub fn evaluate<T: Real>(
    soup: &mut TriangleSoup<T>,
    graph: &EdgeGraph<T>,
    view: &View<T>,
    cfg: &TrainConfig,
    t: u64,
) -> Result<(IterMetrics, Vec<Vector3<T>>)> {
    let sched = Schedule(cfg);
    soup.active_sh = sched.active_sh(t);
    soup.zero_grads();
    let out = render(soup, &view.camera, &cfg.render_config());
    let (w, h) = (out.width, out.height);
    let mut m = IterMetrics { iteration: t, ..Default::default() };

    let (lp, g_col) = photometric_loss(&out.color, &view.image, w, h, cfg.loss.gamma)?;
    m.photometric = lp.as_f64();
    let wp = T::lit(cfg.loss.w_photometric);
    let mut grads = ImageGrads::zeros(w * h);
    for (g, c) in grads.color.iter_mut().zip(&g_col) {
        *g = c * wp;
    }
    let mut total = cfg.loss.w_photometric * m.photometric;
    if sched.normal_active(t) {
        let (ln, gn, gd) = normal_consistency_loss(&out.normal, &out.depth, &view.camera)?;
        m.normal = ln.as_f64();
        total += cfg.loss.w_normal * m.normal;
        let wn = T::lit(cfg.loss.w_normal);
        for i in 0..w * h {
            grads.normal[i] += gn[i] * wn;
            grads.depth[i] += gd[i] * wn;
        }
    }
    if sched.smooth_active(t) {
        let (ls, gd) = smoothness_loss(&out.depth, &view.image, w, h, cfg.loss.smoothness_positive_exponent)?;
        m.smooth = ls.as_f64();
        total += cfg.loss.w_smooth * m.smooth;
        let ws = T::lit(cfg.loss.w_smooth);
        for i in 0..w * h {
            grads.depth[i] += gd[i] * ws;
        }
    }
    let mu_grads = render_backward(soup, &out, &grads)?;
    if sched.connectivity_active(t) {
        let eye = view.camera.center();
        let (lc, vg) = connectivity_loss(soup, graph, &out.visible(), cfg.connectivity.orient_normals.then_some(&eye))?;
        m.connectivity = lc.as_f64();
        total += cfg.loss.w_connectivity * m.connectivity;
        apply_vertex_grads(soup, &vg, T::lit(cfg.loss.w_connectivity));
        m.connections = graph.connections.len();
    }
    m.total = total;
    m.triangles = soup.count();
    Ok((m, mu_grads))
}

/// Runs iterations of the optimization over a dataset.
pub struct Trainer<'a, T: Real> {
    pub cfg: &'a TrainConfig,
    pub data: &'a Dataset<T>,
    pub train_views: Vec<usize>,
    pub state: TrainState<T>,
    epoch_order: Option<(u64, Vec<usize>)>,
}

impl<'a, T: Real> Trainer<'a, T> {
    pub fn new(cfg: &'a TrainConfig, data: &'a Dataset<T>, train_views: Vec<usize>) -> Result<Self> {
        let state = TrainState::initialize(data, cfg)?;
        Self::resume(cfg, data, train_views, state)
    }

    pub fn resume(cfg: &'a TrainConfig, data: &'a Dataset<T>, train_views: Vec<usize>, state: TrainState<T>) -> Result<Self> {
        cfg.validate()?;
        data.validate()?;
        if train_views.is_empty() || train_views.iter().any(|i| *i >= data.views.len()) {
            return Err(Error::Validation("training view selection is empty or out of range".into()));
        }
        Ok(Self { cfg, data, train_views, state, epoch_order: None })
    }

    /// View used at 1-based iteration `t`: a per-epoch shuffle seeded from
    /// the config seed and the epoch number.
    pub fn view_for(&mut self, t: u64) -> usize {
        let n = self.train_views.len() as u64;
        let epoch = (t - 1) / n;
        if self.epoch_order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut order = self.train_views.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            order.shuffle(&mut rng);
            self.epoch_order = Some((epoch, order));
        }
        self.epoch_order.as_ref().unwrap().1[((t - 1) % n) as usize]
    }

    /// Runs one iteration.
    pub fn step(&mut self) -> Result<IterMetrics> {
        let cfg = self.cfg;
        let sched = Schedule(cfg);
        let t = self.state.iteration + 1;
        let vi = self.view_for(t);
        let view = &self.data.views[vi];
        let st = &mut self.state;

        let conn_on = sched.connectivity_active(t);
        if conn_on && (st.graph.stale || st.graph.triangle_count != st.soup.count() || sched.graph_rebuild_due(t)) {
            st.graph = build_graph(&st.soup, &cfg.graph_params(), t);
        }

        let (mut m, mu_grads) = evaluate(&mut st.soup, &st.graph, view, cfg, t)?;
        m.view = vi;
        st.stats.accumulate(&mu_grads)?;

        st.adam_step += 1;
        let skipped = optim::step_soup(&mut st.soup, &sched.learning_rates(t), st.adam_step, &sched.adam());
        if skipped > 0 {
            log::warn!("iter={t} skipped_nonfinite_grads={skipped}");
        }

        if sched.densify_at(t) {
            let params = DensifyParams {
                grad_threshold: cfg.densify.grad_threshold,
                split_radius: st.split_radius,
                clone_offset: cfg.densify.clone_offset,
                prune_alpha: cfg.densify.prune_alpha,
                max_count: cfg.densify.max_triangles,
            };
            let report = densify_and_prune(&mut st.soup, &mut st.stats, &mut st.graph, &params)?;
            log::info!("iter={t} densify split={} cloned={} pruned={} triangles={}", report.split, report.cloned, report.pruned, report.count);
            m.densify = Some(report);
        }
        if sched.opacity_reset_at(t) {
            reset_opacity(&mut st.soup, cfg.densify.opacity_reset_value, cfg.densify.opacity_reset_exact);
            log::info!("iter={t} opacity_reset");
        }
        m.triangles = st.soup.count();
        st.iteration = t;
        st.history.push(m);
        Ok(m)
    }

    /// Runs until `cfg.iterations`, calling `hook` after every iteration.
    pub fn run(&mut self, mut hook: impl FnMut(&TrainState<T>, &IterMetrics) -> Result<()>) -> Result<()> {
        while self.state.iteration < self.cfg.iterations {
            let m = self.step()?;
            hook(&self.state, &m)?;
        }
        Ok(())
    }
}

/// Trains on all views of `data` from a fresh initialization.
pub fn train<T: Real>(data: &Dataset<T>, cfg: &TrainConfig) -> Result<TrainState<T>> {
    let views = (0..data.views.len()).collect();
    let mut trainer = Trainer::new(cfg, data, views)?;
    trainer.run(|_, _| Ok(()))?;
    Ok(trainer.state)
}
