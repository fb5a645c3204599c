//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear
//! at most once and unknown keys are errors. Relative paths resolve against
//! the directory passed to [`validate_config`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dynamics::{AccelParams, Method};
use crate::error::{Error, Result};
use crate::fields::GFSF_DEFAULT_RELATIVE_REG;
use crate::kernel::{BandwidthPolicy, KernelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Svgd,
    Blob,
    Gfsd,
    Gfsf,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Svgd => "svgd",
            EstimatorKind::Blob => "blob",
            EstimatorKind::Gfsd => "gfsd",
            EstimatorKind::Gfsf => "gfsf",
        }
    }
}

/// GFSF diagonal regularization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GfsfReg {
    Absolute(f64),
    /// Multiple of the kernel peak `(2 pi h)^(-D/2)`.
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlrData {
    Csv {
        path: PathBuf,
        header: bool,
    },
    Synthetic {
        points: usize,
        features: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        var: Vec<f64>,
    },
    Bimodal,
    Blr {
        data: BlrData,
        a0: f64,
        b0: f64,
        batch_size: usize,
        train_fraction: f64,
        split_seed: u64,
    },
}

impl TargetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TargetSpec::Gaussian { .. } => "gaussian",
            TargetSpec::Bimodal => "bimodal",
            TargetSpec::Blr { .. } => "blr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Gaussian {
        mean: Vec<f64>,
        std: f64,
    },
    /// Sample from the BLR prior.
    Prior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub estimator: EstimatorKind,
    pub gfsf_reg: GfsfReg,
    pub dynamics: AccelParams,
    pub bandwidth: BandwidthPolicy,
    /// Initial bandwidth; `None` uses the median heuristic on the initial ensemble.
    pub bandwidth_init: Option<f64>,
    pub he_trust_ratio: f64,
    pub he_probe_delta: f64,
    pub target: TargetSpec,
    pub n_particles: usize,
    pub n_iterations: u64,
    pub seed: u64,
    pub init: InitSpec,
    pub output_dir: PathBuf,
    pub snapshot_stride: u64,
    pub metrics_stride: u64,
    pub record_wall_clock: bool,
}

impl RunConfig {
    pub fn kernel_config(&self, initial: f64) -> KernelConfig {
        KernelConfig {
            bandwidth: initial,
            policy: self.bandwidth,
            he_trust_ratio: self.he_trust_ratio,
            he_probe_delta: self.he_probe_delta,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.target {
            TargetSpec::Gaussian { mean, .. } => mean.len(),
            TargetSpec::Bimodal => 2,
            TargetSpec::Blr { data, .. } => match data {
                // raw features + bias + log precision
                BlrData::Synthetic { features, .. } => features + 2,
                BlrData::Csv { .. } => 0,
            },
        }
    }

    /// Renders the fully resolved configuration in the same key-value format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("estimator", self.estimator.name().into());
        match self.gfsf_reg {
            GfsfReg::Absolute(v) => kv("gfsf_reg", fmt(v)),
            GfsfReg::Relative(v) => kv("gfsf_reg_relative", fmt(v)),
        }
        let d = &self.dynamics;
        kv("dynamics", d.method.name().into());
        kv("step_size", fmt(d.step));
        kv("step_decay", fmt(d.decay));
        kv("step_burn_in", d.burn_in.to_string());
        kv("wag_alpha", fmt(d.wag_alpha));
        kv("wnes_mu", fmt(d.wnes_mu));
        kv("wnes_beta", fmt(d.wnes_beta));
        kv("wnes_freeze", d.wnes_freeze.to_string());
        if let Some(c) = d.wnes_combined {
            kv("wnes_coefficient", fmt(c));
        }
        kv("po_momentum", fmt(d.po_momentum));
        kv("po_noise_variance", fmt(d.po_noise_std * d.po_noise_std));
        kv("adagrad_rate", fmt(d.adagrad_rate));
        kv(
            "bandwidth",
            match self.bandwidth {
                BandwidthPolicy::Fixed => "fixed",
                BandwidthPolicy::Median => "median",
                BandwidthPolicy::HeatEquation => "he",
            }
            .into(),
        );
        if let Some(h) = self.bandwidth_init {
            kv("bandwidth_init", fmt(h));
        }
        kv("he_trust_ratio", fmt(self.he_trust_ratio));
        kv("he_probe_delta", fmt(self.he_probe_delta));
        kv("target", self.target.name().into());
        match &self.target {
            TargetSpec::Gaussian { mean, var } => {
                kv("target_mean", fmt_list(mean));
                kv("target_var", fmt_list(var));
            }
            TargetSpec::Bimodal => {}
            TargetSpec::Blr {
                data,
                a0,
                b0,
                batch_size,
                train_fraction,
                split_seed,
            } => {
                match data {
                    BlrData::Csv { path, header } => {
                        kv("dataset", path.display().to_string());
                        kv("dataset_header", header.to_string());
                    }
                    BlrData::Synthetic {
                        points,
                        features,
                        seed,
                    } => {
                        kv("synthetic_points", points.to_string());
                        kv("synthetic_features", features.to_string());
                        kv("synthetic_seed", seed.to_string());
                    }
                }
                kv("blr_a0", fmt(*a0));
                kv("blr_b0", fmt(*b0));
                kv("batch_size", batch_size.to_string());
                kv("train_fraction", fmt(*train_fraction));
                kv("split_seed", split_seed.to_string());
            }
        }
        kv("n_particles", self.n_particles.to_string());
        kv("n_iterations", self.n_iterations.to_string());
        kv("seed", self.seed.to_string());
        match &self.init {
            InitSpec::Gaussian { mean, std } => {
                kv("init", "gaussian".into());
                kv("init_mean", fmt_list(mean));
                kv("init_std", fmt(*std));
            }
            InitSpec::Prior => kv("init", "prior".into()),
        }
        kv("output_dir", self.output_dir.display().to_string());
        kv("snapshot_stride", self.snapshot_stride.to_string());
        kv("metrics_stride", self.metrics_stride.to_string());
        kv("record_wall_clock", self.record_wall_clock.to_string());
        out
    }
}

fn fmt(v: f64) -> String {
    // Debug keeps a decimal point or exponent and round-trips exactly.
    format!("{v:?}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(",")
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Fields {
    entries: BTreeMap<String, Entry>,
    errors: Vec<String>,
}

impl Fields {
    fn parse(text: &str) -> Self {
        let mut entries = BTreeMap::new();
        let mut errors = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((k, v)) = trimmed.split_once('=') else {
                errors.push(format!("line {line}: expected 'key = value'"));
                continue;
            };
            let key = k.trim().to_string();
            let value = v.trim().to_string();
            if key.is_empty() {
                errors.push(format!("line {line}: empty key"));
                continue;
            }
            if let Some(prev) = entries.get(&key) {
                let prev: &Entry = prev;
                errors.push(format!(
                    "line {line}: duplicate key '{key}' (first set on line {})",
                    prev.line
                ));
                continue;
            }
            entries.insert(
                key,
                Entry {
                    line,
                    value,
                    used: false,
                },
            );
        }
        Self { entries, errors }
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let (line, v) = self.raw(key)?;
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.errors
                    .push(format!("line {line}: {key} = '{v}' is not {what}"));
                None
            }
        }
    }

    fn real(&mut self, key: &str) -> Option<f64> {
        let v: f64 = self.parsed(key, "a number")?;
        if v.is_finite() {
            Some(v)
        } else {
            self.errors.push(format!("{key} must be finite"));
            None
        }
    }

    fn real_or(&mut self, key: &str, default: f64) -> f64 {
        self.real(key).unwrap_or(default)
    }

    fn uint(&mut self, key: &str) -> Option<u64> {
        self.parsed(key, "a non-negative integer")
    }

    fn boolean(&mut self, key: &str, default: bool) -> bool {
        self.parsed(key, "true or false").unwrap_or(default)
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        let (line, v) = self.raw(key)?;
        let parsed: std::result::Result<Vec<f64>, _> =
            v.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(xs) if !xs.is_empty() && xs.iter().all(|x| x.is_finite()) => Some(xs),
            _ => {
                self.errors.push(format!(
                    "line {line}: {key} = '{v}' is not a comma-separated list of numbers"
                ));
                None
            }
        }
    }

    fn choice(&mut self, key: &str, options: &[&str]) -> Option<String> {
        let (line, v) = self.raw(key)?;
        if options.contains(&v.as_str()) {
            Some(v)
        } else {
            self.errors.push(format!(
                "line {line}: {key} = '{v}' must be one of {}",
                options.join(", ")
            ));
            None
        }
    }

    fn require<T>(&mut self, key: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && !self.has(key) {
            self.errors.push(format!("missing required key '{key}'"));
        }
        v
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.errors.push(msg.into());
        }
    }
}

/// Broadcasts a scalar list to `dim` entries.
fn broadcast(v: Vec<f64>, dim: usize) -> std::result::Result<Vec<f64>, usize> {
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v),
        n => Err(n),
    }
}

/// Parses and validates configuration text, applying defaults.
///
/// Collects every violation before failing.
pub fn validate_config(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let mut f = Fields::parse(text);

    let estimator = f.choice("estimator", &["svgd", "blob", "gfsd", "gfsf"]);
    let estimator = f.require("estimator", estimator).map(|s| match s.as_str() {
        "svgd" => EstimatorKind::Svgd,
        "blob" => EstimatorKind::Blob,
        "gfsd" => EstimatorKind::Gfsd,
        _ => EstimatorKind::Gfsf,
    });
    let gfsf_abs = f.real("gfsf_reg");
    let gfsf_rel = f.real("gfsf_reg_relative");
    let gfsf_reg = match (gfsf_abs, gfsf_rel) {
        (Some(_), Some(_)) => {
            f.errors
                .push("set at most one of gfsf_reg and gfsf_reg_relative".into());
            GfsfReg::Relative(GFSF_DEFAULT_RELATIVE_REG)
        }
        (Some(a), None) => GfsfReg::Absolute(a),
        (None, Some(r)) => GfsfReg::Relative(r),
        (None, None) => GfsfReg::Relative(GFSF_DEFAULT_RELATIVE_REG),
    };
    let reg_value = match gfsf_reg {
        GfsfReg::Absolute(v) | GfsfReg::Relative(v) => v,
    };
    f.check(reg_value >= 0.0, "GFSF regularization must be non-negative");

    let method = f.choice("dynamics", &["wgd", "po", "wag", "wnes", "adagrad"]);
    let method = f.require("dynamics", method).map(|s| match s.as_str() {
        "wgd" => Method::Wgd,
        "po" => Method::Po,
        "wag" => Method::Wag,
        "wnes" => Method::Wnes,
        _ => Method::AdagradMomentum,
    });
    let step = f.real("step_size");
    let step = f.require("step_size", step);
    let mut dynamics = AccelParams::new(method.unwrap_or(Method::Wgd), step.unwrap_or(1.0));
    dynamics.decay = f.real_or("step_decay", 0.0);
    dynamics.burn_in = f.uint("step_burn_in").unwrap_or(0);
    dynamics.wag_alpha = f.real_or("wag_alpha", dynamics.wag_alpha);
    dynamics.wnes_mu = f.real_or("wnes_mu", dynamics.wnes_mu);
    dynamics.wnes_beta = f.real_or("wnes_beta", dynamics.wnes_beta);
    dynamics.wnes_freeze = f.boolean("wnes_freeze", false);
    dynamics.wnes_combined = f.real("wnes_coefficient");
    dynamics.po_momentum = f.real_or("po_momentum", dynamics.po_momentum);
    let noise_var = f.real_or("po_noise_variance", 0.0);
    f.check(noise_var >= 0.0, "po_noise_variance must be non-negative");
    dynamics.po_noise_std = noise_var.max(0.0).sqrt();
    dynamics.adagrad_rate = f.real_or("adagrad_rate", dynamics.adagrad_rate);
    if method.is_some() && step.is_some() {
        if let Err(e) = dynamics.validate() {
            f.errors.push(e.to_string());
        }
    }

    let bandwidth = match f.choice("bandwidth", &["fixed", "median", "he"]).as_deref() {
        Some("fixed") => BandwidthPolicy::Fixed,
        Some("he") => BandwidthPolicy::HeatEquation,
        _ => BandwidthPolicy::Median,
    };
    let bandwidth_init = f.real("bandwidth_init");
    if let Some(h) = bandwidth_init {
        f.check(h > 0.0, format!("bandwidth_init must be positive, got {h}"));
    }
    if bandwidth == BandwidthPolicy::Fixed {
        f.check(
            bandwidth_init.is_some(),
            "bandwidth = fixed requires bandwidth_init",
        );
    }
    let he_trust_ratio = f.real_or("he_trust_ratio", KernelConfig::DEFAULT_TRUST_RATIO);
    let he_probe_delta = f.real_or("he_probe_delta", KernelConfig::DEFAULT_PROBE_DELTA);
    f.check(he_trust_ratio > 1.0, "he_trust_ratio must exceed 1");
    f.check(
        he_probe_delta > 0.0 && he_probe_delta < 1.0,
        "he_probe_delta must lie in (0, 1)",
    );

    let seed = f.uint("seed").unwrap_or(0);
    let n_particles = f.uint("n_particles");
    let n_particles = f.require("n_particles", n_particles).unwrap_or(1) as usize;
    f.check(n_particles >= 1, "n_particles must be at least 1");
    let n_iterations = f.uint("n_iterations");
    let n_iterations = f.require("n_iterations", n_iterations).unwrap_or(0);

    let target_name = f.choice("target", &["gaussian", "bimodal", "blr"]);
    let target_name = f.require("target", target_name);
    let target = match target_name.as_deref() {
        Some("bimodal") => TargetSpec::Bimodal,
        Some("blr") => {
            let dataset = f.raw("dataset").map(|(_, v)| v);
            let header = f.boolean("dataset_header", false);
            let points = f.uint("synthetic_points");
            let features = f.uint("synthetic_features").unwrap_or(10) as usize;
            let synth_seed = f.uint("synthetic_seed").unwrap_or(seed);
            let data = match (dataset, points) {
                (Some(p), None) => {
                    let path = base_dir.join(p);
                    f.check(
                        path.is_file(),
                        format!("dataset '{}' does not exist", path.display()),
                    );
                    BlrData::Csv { path, header }
                }
                (None, Some(points)) => {
                    f.check(points >= 2, "synthetic_points must be at least 2");
                    f.check(features >= 1, "synthetic_features must be at least 1");
                    BlrData::Synthetic {
                        points: points as usize,
                        features,
                        seed: synth_seed,
                    }
                }
                (Some(_), Some(_)) => {
                    f.errors
                        .push("set exactly one of dataset and synthetic_points".into());
                    BlrData::Synthetic {
                        points: 0,
                        features,
                        seed: synth_seed,
                    }
                }
                (None, None) => {
                    f.errors
                        .push("target = blr requires dataset or synthetic_points".into());
                    BlrData::Synthetic {
                        points: 0,
                        features,
                        seed: synth_seed,
                    }
                }
            };
            let a0 = f.real_or("blr_a0", 1.0);
            let b0 = f.real_or("blr_b0", 100.0);
            f.check(a0 > 0.0 && b0 > 0.0, "blr_a0 and blr_b0 must be positive");
            let batch_size = f.uint("batch_size").unwrap_or(50) as usize;
            f.check(batch_size >= 1, "batch_size must be positive");
            let train_fraction = f.real_or("train_fraction", 0.8);
            f.check(
                train_fraction > 0.0 && train_fraction < 1.0,
                "train_fraction must lie in (0, 1)",
            );
            let split_seed = f.uint("split_seed").unwrap_or(seed);
            TargetSpec::Blr {
                data,
                a0,
                b0,
                batch_size,
                train_fraction,
                split_seed,
            }
        }
        _ => {
            let mean = f.list("target_mean");
            let var = f.list("target_var");
            let dim = f.uint("target_dim").map(|d| d as usize);
            let dim = dim
                .or_else(|| mean.as_ref().filter(|m| m.len() > 1).map(Vec::len))
                .or_else(|| var.as_ref().filter(|m| m.len() > 1).map(Vec::len))
                .unwrap_or(1);
            f.check(dim >= 1, "target_dim must be at least 1");
            let vec_for =
                |f: &mut Fields, key: &str, v: Option<Vec<f64>>, default: f64| match broadcast(
                    v.unwrap_or_else(|| vec![default]),
                    dim.max(1),
                ) {
                    Ok(v) => v,
                    Err(n) => {
                        f.errors
                            .push(format!("{key} has {n} entries, expected 1 or {dim}"));
                        vec![default; dim.max(1)]
                    }
                };
            let mean = vec_for(&mut f, "target_mean", mean, 0.0);
            let var = vec_for(&mut f, "target_var", var, 1.0);
            f.check(
                var.iter().all(|v| *v > 0.0),
                "target_var entries must be positive",
            );
            TargetSpec::Gaussian { mean, var }
        }
    };

    let init = match f.choice("init", &["gaussian", "prior"]).as_deref() {
        Some("prior") => {
            f.check(
                matches!(target, TargetSpec::Blr { .. }),
                "init = prior is only available for target = blr",
            );
            InitSpec::Prior
        }
        _ => {
            let mean = f.list("init_mean").unwrap_or_else(|| vec![0.0]);
            let std = f.real_or("init_std", 1.0);
            f.check(std >= 0.0, "init_std must be non-negative");
            let dim = match &target {
                TargetSpec::Gaussian { mean, .. } => mean.len(),
                TargetSpec::Bimodal => 2,
                TargetSpec::Blr { .. } => 0,
            };
            let mean = if dim == 0 {
                f.check(
                    mean.len() == 1,
                    "init_mean must be a scalar for target = blr",
                );
                mean
            } else {
                match broadcast(mean, dim) {
                    Ok(m) => m,
                    Err(n) => {
                        f.errors
                            .push(format!("init_mean has {n} entries, expected 1 or {dim}"));
                        vec![0.0; dim]
                    }
                }
            };
            InitSpec::Gaussian { mean, std }
        }
    };

    let output_dir = base_dir.join(
        f.raw("output_dir")
            .map(|(_, v)| v)
            .unwrap_or_else(|| "output".into()),
    );
    let snapshot_stride = f.uint("snapshot_stride").unwrap_or(n_iterations.max(1));
    let metrics_stride = f.uint("metrics_stride").unwrap_or(1);
    f.check(snapshot_stride >= 1, "snapshot_stride must be at least 1");
    f.check(metrics_stride >= 1, "metrics_stride must be at least 1");
    let record_wall_clock = f.boolean("record_wall_clock", false);

    let unknown: Vec<String> = f
        .entries
        .iter()
        .filter(|(_, e)| !e.used)
        .map(|(k, e)| format!("line {}: unknown key '{k}'", e.line))
        .collect();
    f.errors.extend(unknown);

    if !f.errors.is_empty() {
        return Err(Error::Validation(f.errors));
    }
    Ok(RunConfig {
        estimator: estimator.expect("checked"),
        gfsf_reg,
        dynamics,
        bandwidth,
        bandwidth_init,
        he_trust_ratio,
        he_probe_delta,
        target,
        n_particles,
        n_iterations,
        seed,
        init,
        output_dir,
        snapshot_stride,
        metrics_stride,
        record_wall_clock,
    })
}

/// Reads a config file; relative paths resolve against its directory, so the
/// resolved paths are absolute.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = std::path::absolute(path)?;
    validate_config(&text, base.parent().unwrap_or_else(|| Path::new("/")))
}
