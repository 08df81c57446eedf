//! Training configuration: every hyperparameter with its default, loadable
//! from TOML and overridable with `section.key=value` pairs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::connectivity::{CriteriaMode, GraphParams};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::raster::{DepthMode, RenderConfig};
use crate::scene::InitOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    pub seed: u64,
    /// Emit a metrics line every this many iterations (0 disables).
    pub log_every: u64,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: u64,
    pub init: InitSection,
    pub loss: LossSection,
    pub lr: LrSection,
    pub densify: DensifySection,
    pub connectivity: ConnectivitySection,
    pub render: RenderSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    pub sh_degree: usize,
    /// Unlock one more SH band every this many iterations.
    pub sh_unlock_every: u64,
    pub sigma_fraction: f64,
    pub opacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub w_photometric: f64,
    pub w_normal: f64,
    pub w_smooth: f64,
    pub w_connectivity: f64,
    pub gamma: f64,
    pub normal_from: u64,
    pub smooth_from: u64,
    pub connectivity_from: u64,
    pub smoothness_positive_exponent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSection {
    pub sh: f64,
    pub opacity: f64,
    pub mu_start: f64,
    pub mu_end: f64,
    pub rotation: f64,
    pub scale: f64,
    pub sigma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifySection {
    /// Densify at iterations strictly after this one...
    pub from: u64,
    /// ...that are multiples of this cadence...
    pub every: u64,
    /// ...up to and including this iteration (0 = no limit).
    pub until: u64,
    pub grad_threshold: f64,
    /// Split radius as a multiple of the median initial circumradius.
    pub split_radius_factor: f64,
    pub clone_offset: f64,
    pub prune_alpha: f64,
    pub opacity_reset_every: u64,
    pub opacity_reset_value: f64,
    pub opacity_reset_exact: bool,
    /// Skip densification while the soup is this large (0 = no limit).
    pub max_triangles: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectivitySection {
    pub tau: f64,
    pub rho: f64,
    pub radius_factor: f64,
    pub rebuild_every: u64,
    pub mode: CriteriaMode,
    /// Compare camera-facing normals instead of raw winding normals.
    pub orient_normals: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub depth_mode: DepthMode,
    pub background: [f64; 3],
    pub tile_size: usize,
    pub t_min: f64,
    pub alpha_min: f64,
    pub transmittance_uses_diffuse: bool,
    pub per_vertex_view_dir: bool,
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 25_000,
            seed: 0,
            log_every: 100,
            checkpoint_every: 0,
            init: InitSection::default(),
            loss: LossSection::default(),
            lr: LrSection::default(),
            densify: DensifySection::default(),
            connectivity: ConnectivitySection::default(),
            render: RenderSection::default(),
        }
    }
}

impl Default for InitSection {
    fn default() -> Self {
        Self { sh_degree: 3, sh_unlock_every: 1000, sigma_fraction: 0.5, opacity: 0.1 }
    }
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            w_photometric: 1.0,
            w_normal: 0.05,
            w_smooth: 0.8,
            w_connectivity: 10.0,
            gamma: 0.2,
            normal_from: 7000,
            smooth_from: 10_000,
            connectivity_from: 10_000,
            smoothness_positive_exponent: false,
        }
    }
}

impl Default for LrSection {
    fn default() -> Self {
        Self {
            sh: 2.5e-3,
            opacity: 5e-2,
            mu_start: 1.5e-4,
            mu_end: 2e-6,
            rotation: 1e-3,
            scale: 4e-3,
            sigma: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

impl Default for DensifySection {
    fn default() -> Self {
        Self {
            from: 2000,
            every: 250,
            until: 0,
            grad_threshold: 7.5e-5,
            split_radius_factor: 1.0,
            clone_offset: 0.1,
            prune_alpha: 0.005,
            opacity_reset_every: 3000,
            opacity_reset_value: 0.1,
            opacity_reset_exact: false,
            max_triangles: 0,
        }
    }
}

impl Default for ConnectivitySection {
    fn default() -> Self {
        Self { tau: 0.0, rho: 0.0, radius_factor: 3.0, rebuild_every: 500, mode: CriteriaMode::Outward, orient_normals: true }
    }
}

impl Default for RenderSection {
    fn default() -> Self {
        let r = RenderConfig::default();
        Self {
            depth_mode: r.depth_mode,
            background: r.background,
            tile_size: r.tile_size,
            t_min: r.t_min,
            alpha_min: r.alpha_min,
            transmittance_uses_diffuse: r.transmittance_uses_diffuse,
            per_vertex_view_dir: r.per_vertex_view_dir,
            deterministic: r.deterministic,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Applies `section.key=value` overrides (values in TOML syntax; bare
    /// words are taken as strings).
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(&self.to_toml()).expect("round trip");
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let parts: Vec<&str> = key.trim().split('.').collect();
            let mut table = &mut doc;
            for p in &parts[..parts.len() - 1] {
                table = table
                    .get_mut(*p)
                    .and_then(|v| v.as_table_mut())
                    .ok_or_else(|| Error::Config(format!("unknown section `{p}` in override `{o}`; valid: {}", Self::valid_keys().join(", "))))?;
            }
            let leaf = parts[parts.len() - 1];
            if !table.contains_key(leaf) {
                return Err(Error::Config(format!("unknown key `{key}`; valid keys: {}", Self::valid_keys().join(", "))));
            }
            table.insert(leaf.to_string(), value);
        }
        let text = toml::to_string(&doc).expect("table serializes");
        Self::from_toml(&text)
    }

    /// Every settable `section.key` path.
    pub fn valid_keys() -> Vec<String> {
        let doc: toml::Table = toml::from_str(&Self::default().to_toml()).expect("round trip");
        let mut keys = Vec::new();
        for (k, v) in &doc {
            match v.as_table() {
                Some(t) => keys.extend(t.keys().map(|s| format!("{k}.{s}"))),
                None => keys.push(k.clone()),
            }
        }
        keys
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.init.sh_degree > crate::geometry::sh::MAX_SH_DEGREE {
            return bad("init.sh_degree must be at most 3");
        }
        let cadences = [
            ("init.sh_unlock_every", self.init.sh_unlock_every),
            ("densify.every", self.densify.every),
            ("densify.opacity_reset_every", self.densify.opacity_reset_every),
            ("connectivity.rebuild_every", self.connectivity.rebuild_every),
        ];
        for (name, v) in cadences {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let l = &self.loss;
        let weights = [l.w_photometric, l.w_normal, l.w_smooth, l.w_connectivity];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("loss weights must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&l.gamma) {
            return bad("loss.gamma must lie in [0, 1]");
        }
        let lr = &self.lr;
        let rates = [lr.sh, lr.opacity, lr.mu_start, lr.mu_end, lr.rotation, lr.scale, lr.sigma];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || !(lr.mu_start > 0.0 && lr.mu_end > 0.0) {
            return bad("learning rates must be finite and non-negative (mu rates positive)");
        }
        if !(0.0..1.0).contains(&lr.beta1) || !(0.0..1.0).contains(&lr.beta2) || !(lr.eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps be positive");
        }
        if !(self.init.opacity > 0.0 && self.init.opacity < 1.0 && self.init.sigma_fraction > 0.0) {
            return bad("init.opacity must lie in (0, 1) and init.sigma_fraction be positive");
        }
        if !(self.densify.opacity_reset_value > 0.0 && self.densify.opacity_reset_value < 1.0) {
            return bad("densify.opacity_reset_value must lie in (0, 1)");
        }
        if self.render.tile_size == 0 {
            return bad("render.tile_size must be at least 1");
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            photometric: self.loss.w_photometric,
            normal: self.loss.w_normal,
            smooth: self.loss.w_smooth,
            connectivity: self.loss.w_connectivity,
            gamma: self.loss.gamma,
        }
    }

    pub fn render_config(&self) -> RenderConfig {
        let r = &self.render;
        RenderConfig {
            depth_mode: r.depth_mode,
            background: r.background,
            tile_size: r.tile_size,
            t_min: r.t_min,
            alpha_min: r.alpha_min,
            transmittance_uses_diffuse: r.transmittance_uses_diffuse,
            per_vertex_view_dir: r.per_vertex_view_dir,
            deterministic: r.deterministic,
            ..RenderConfig::default()
        }
    }

    pub fn init_options(&self) -> InitOptions {
        InitOptions { sh_degree: self.init.sh_degree, sigma_fraction: self.init.sigma_fraction, opacity: self.init.opacity }
    }

    pub fn graph_params(&self) -> GraphParams {
        let c = &self.connectivity;
        GraphParams { tau: c.tau, rho: c.rho, radius_factor: c.radius_factor, mode: c.mode }
    }
}
