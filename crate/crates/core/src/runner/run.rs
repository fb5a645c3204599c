use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use serde_json::{json, Map, Value};

use super::config::{BlrData, EstimatorKind, GfsfReg, InitSpec, RunConfig, TargetSpec};
use super::diagnostics::{gaussian_w2_proxy, mean_nn_distance, mode_balance};
use crate::dynamics::{step, DynamicsState};
use crate::ensemble::{ParticleEnsemble, VectorField};
use crate::error::{Error, Result};
use crate::fields::Estimator;
use crate::kernel::{kernel_peak, median_bandwidth};
use crate::targets::{
    blr_metrics, load_dataset, synthetic_logistic, BlrModel, Dataset, GaussianTarget, Target,
    ToyBimodal,
};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved.conf";

pub fn snapshot_file_name(iter: u64) -> String {
    format!("snap_{iter}.csv")
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// A non-finite value or failed solve stopped the run after `iteration`
    /// completed iterations.
    BlowUp {
        iteration: u64,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub iter: u64,
    pub h: f64,
    pub field_norm: f64,
    /// Target-specific named metrics, in output order.
    pub metrics: Vec<(String, f64)>,
    pub wall_ms: Option<f64>,
}

impl MetricRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("iter".into(), json!(self.iter));
        m.insert("h".into(), json!(self.h));
        m.insert("field_norm".into(), json!(self.field_norm));
        for (k, v) in &self.metrics {
            m.insert(k.clone(), json!(v));
        }
        m.insert("wall_ms".into(), json!(self.wall_ms));
        Value::Object(m)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub status: RunStatus,
    pub metrics: Vec<MetricRecord>,
    pub final_ensemble: ParticleEnsemble,
    pub final_bandwidth: f64,
    pub snapshots: Vec<(u64, ParticleEnsemble)>,
}

/// What gets measured on the ensemble besides the field norm.
enum Evaluation {
    Gaussian {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    },
    Bimodal,
    Blr {
        test: Dataset,
    },
    None,
}

impl Evaluation {
    fn measure(&self, p: &ParticleEnsemble) -> Vec<(String, f64)> {
        match self {
            Evaluation::Gaussian { mean, cov } => match gaussian_w2_proxy(p, mean, cov) {
                Ok(w) => vec![
                    ("w2".into(), w.distance),
                    (
                        "w2_regularized".into(),
                        if w.regularized { 1.0 } else { 0.0 },
                    ),
                ],
                Err(_) => vec![("w2".into(), f64::NAN)],
            },
            Evaluation::Bimodal => vec![
                ("mode_balance".into(), mode_balance(p)),
                ("mean_nn_dist".into(), mean_nn_distance(p)),
            ],
            Evaluation::Blr { test } => match blr_metrics(p, test) {
                Ok(m) => vec![
                    ("accuracy".into(), m.accuracy),
                    ("log_lik".into(), m.log_likelihood),
                ],
                Err(_) => vec![],
            },
            Evaluation::None => vec![],
        }
    }
}

/// A configured run: target, evaluation and initial ensemble.
pub struct Experiment {
    config: RunConfig,
    target: Box<dyn Target>,
    evaluation: Evaluation,
    initial: ParticleEnsemble,
}

impl Experiment {
    pub fn from_config(config: RunConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (target, evaluation): (Box<dyn Target>, Evaluation) = match &config.target {
            TargetSpec::Gaussian { mean, var } => {
                let t = GaussianTarget::new(
                    DVector::from_vec(mean.clone()),
                    DMatrix::from_diagonal(&DVector::from_vec(var.clone())),
                )?;
                let eval = Evaluation::Gaussian {
                    mean: t.mean().clone(),
                    cov: t.cov().clone(),
                };
                (Box::new(t), eval)
            }
            TargetSpec::Bimodal => (Box::new(ToyBimodal), Evaluation::Bimodal),
            TargetSpec::Blr {
                data,
                a0,
                b0,
                batch_size,
                train_fraction,
                split_seed,
            } => {
                let (train, test) = match data {
                    BlrData::Csv { path, header } => {
                        load_dataset(path, *header, *split_seed, *train_fraction)?
                    }
                    BlrData::Synthetic {
                        points,
                        features,
                        seed,
                    } => synthetic_logistic(*points, *features, *seed)
                        .0
                        .split(*split_seed, *train_fraction)?,
                };
                let model = BlrModel::new(train, *a0, *b0, *batch_size)?;
                let eval = if test.is_empty() {
                    Evaluation::None
                } else {
                    Evaluation::Blr { test }
                };
                (Box::new(model), eval)
            }
        };
        let initial = initial_ensemble(&config, target.dim(), &mut rng)?;
        Ok(Self {
            config,
            target,
            evaluation,
            initial,
        })
    }

    /// Replaces the target's score oracle, keeping everything else.
    pub fn with_target(mut self, target: Box<dyn Target>) -> Result<Self> {
        if target.dim() != self.target.dim() {
            return Err(Error::InvalidInput(format!(
                "replacement target has dimension {}, expected {}",
                target.dim(),
                self.target.dim()
            )));
        }
        self.target = target;
        Ok(self)
    }

    pub fn initial(&self) -> &ParticleEnsemble {
        &self.initial
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Runs the configured dynamics. With `out` set, metrics, snapshots, the
    /// resolved config and a summary are written there as the run proceeds.
    pub fn run(mut self, out: Option<&Path>) -> Result<RunOutput> {
        let cfg = self.config.clone();
        let start = Instant::now();
        let mut sink = match out {
            Some(dir) => Some(OutputSink::create(dir, &cfg)?),
            None => None,
        };
        let d = self.initial.dim();

        let mut output = RunOutput {
            status: RunStatus::Completed,
            metrics: Vec::new(),
            final_ensemble: self.initial.clone(),
            final_bandwidth: f64::NAN,
            snapshots: Vec::new(),
        };

        let h0 = match cfg.bandwidth_init {
            Some(h) => Ok(h),
            None => median_bandwidth(&self.initial),
        };
        let h0 = match h0 {
            Ok(h) => h,
            Err(e) => {
                output.status = RunStatus::BlowUp {
                    iteration: 0,
                    message: e.to_string(),
                };
                if let Some(s) = sink.as_mut() {
                    s.finish(&output)?;
                }
                return Ok(output);
            }
        };
        let mut kernel = cfg.kernel_config(h0);
        let estimator_for = |h: f64| match cfg.estimator {
            EstimatorKind::Svgd => Estimator::Svgd,
            EstimatorKind::Blob => Estimator::Blob,
            EstimatorKind::Gfsd => Estimator::Gfsd,
            EstimatorKind::Gfsf => Estimator::Gfsf {
                reg: Some(match cfg.gfsf_reg {
                    GfsfReg::Absolute(v) => v,
                    GfsfReg::Relative(r) => r * kernel_peak(d, h),
                }),
            },
        };

        let mut state = DynamicsState::new(self.initial.clone(), cfg.dynamics.method, cfg.seed);
        let elapsed = |start: &Instant| {
            cfg.record_wall_clock
                .then(|| start.elapsed().as_secs_f64() * 1e3)
        };

        // Record and snapshot the initial ensemble.
        let initial_field = estimator_for(h0).field(&state.x, self.target.as_ref(), h0);
        let record = MetricRecord {
            iter: 0,
            h: h0,
            field_norm: initial_field
                .as_ref()
                .map_or(f64::NAN, VectorField::mean_norm),
            metrics: self.evaluation.measure(&state.x),
            wall_ms: elapsed(&start),
        };
        if let Some(s) = sink.as_mut() {
            s.record(&record)?;
            s.snapshot(0, &state.x)?;
        }
        output.metrics.push(record);
        output.snapshots.push((0, state.x.clone()));

        while state.k < cfg.n_iterations {
            self.target.resample(state.rng());
            let target = self.target.as_ref();
            let h = match kernel.update(state.eval_point()) {
                Ok(h) => h,
                Err(e) => {
                    output.status = RunStatus::BlowUp {
                        iteration: state.k,
                        message: e.to_string(),
                    };
                    break;
                }
            };
            let estimator = estimator_for(h);
            let v = match step(&mut state, |p| estimator.field(p, target, h), &cfg.dynamics) {
                Ok(v) => v,
                Err(e) => {
                    output.status = RunStatus::BlowUp {
                        iteration: state.k,
                        message: e.to_string(),
                    };
                    break;
                }
            };
            let k = state.k;
            if k.is_multiple_of(cfg.metrics_stride) {
                let record = MetricRecord {
                    iter: k,
                    h,
                    field_norm: v.mean_norm(),
                    metrics: self.evaluation.measure(&state.x),
                    wall_ms: elapsed(&start),
                };
                if let Some(s) = sink.as_mut() {
                    s.record(&record)?;
                }
                output.metrics.push(record);
            }
            if k.is_multiple_of(cfg.snapshot_stride) {
                if let Some(s) = sink.as_mut() {
                    s.snapshot(k, &state.x)?;
                }
                output.snapshots.push((k, state.x.clone()));
            }
        }

        output.final_bandwidth = kernel.bandwidth;
        output.final_ensemble = state.x;
        if let Some(s) = sink.as_mut() {
            s.finish(&output)?;
        }
        Ok(output)
    }
}

fn initial_ensemble(cfg: &RunConfig, dim: usize, rng: &mut ChaCha8Rng) -> Result<ParticleEnsemble> {
    let n = cfg.n_particles;
    match &cfg.init {
        InitSpec::Gaussian { mean, std } => {
            let mean = if mean.len() == 1 {
                vec![mean[0]; dim]
            } else {
                mean.clone()
            };
            if mean.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "init_mean has {} entries, target dimension is {dim}",
                    mean.len()
                )));
            }
            let mut m = DMatrix::zeros(n, dim);
            for i in 0..n {
                for c in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    m[(i, c)] = mean[c] + std * z;
                }
            }
            ParticleEnsemble::new(m)
        }
        InitSpec::Prior => {
            let TargetSpec::Blr { a0, b0, .. } = cfg.target else {
                return Err(Error::InvalidInput(
                    "prior initialization needs a BLR target".into(),
                ));
            };
            let gamma = Gamma::new(a0, b0)
                .map_err(|e| Error::InvalidParameter(format!("Gamma prior: {e}")))?;
            let mut m = DMatrix::zeros(n, dim);
            for i in 0..n {
                let alpha: f64 = rng.sample(gamma).max(f64::MIN_POSITIVE);
                let sd = alpha.sqrt().recip();
                for c in 0..dim - 1 {
                    let z: f64 = rng.sample(StandardNormal);
                    m[(i, c)] = sd * z;
                }
                m[(i, dim - 1)] = alpha.ln();
            }
            ParticleEnsemble::new(m)
        }
    }
}

/// Validates nothing further and runs with outputs under `config.output_dir`.
pub fn run_experiment(config: &RunConfig) -> Result<RunOutput> {
    let dir = config.output_dir.clone();
    Experiment::from_config(config.clone())?.run(Some(&dir))
}

struct OutputSink {
    dir: PathBuf,
    metrics: BufWriter<File>,
}

impl OutputSink {
    fn create(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(RESOLVED_CONFIG_FILE), cfg.render())?;
        let metrics = BufWriter::new(File::create(dir.join(METRICS_FILE))?);
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics,
        })
    }

    fn record(&mut self, r: &MetricRecord) -> Result<()> {
        writeln!(self.metrics, "{}", r.to_json())?;
        Ok(())
    }

    fn snapshot(&mut self, iter: u64, p: &ParticleEnsemble) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(snapshot_file_name(iter)))?);
        for row in p.positions().row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    fn finish(&mut self, out: &RunOutput) -> Result<()> {
        self.metrics.flush()?;
        let (status, iterations, message) = match &out.status {
            RunStatus::Completed => ("completed", out.metrics.last().map_or(0, |r| r.iter), None),
            RunStatus::BlowUp { iteration, message } => {
                ("blowup", *iteration, Some(message.clone()))
            }
        };
        let summary = json!({
            "status": status,
            "iterations": iterations,
            "message": message,
            "final_h": out.final_bandwidth,
        });
        fs::write(self.dir.join(SUMMARY_FILE), format!("{summary}\n"))?;
        Ok(())
    }
}
