//! End-to-end experiment: simulate data, train the learned methods,
//! reconstruct the evaluation set with every method, and tabulate metrics.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! manifest.json                 config, its SHA-256, seed, versions
//! data/{train,eval}/{truth,input}/NNNN.f32 (+ .json, .pgm)
//! train/<method>/history.csv    loss history
//! train/<method>/final/         checkpoint
//! eval/<method>/NNNN.f32        reconstructions (+ previews)
//! eval/metrics.csv              mean absolute metrics per method
//! report.csv, report.md         normalized comparison table
//! FAILED                        present only after a failed stage
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use texgan_imaging::baselines::{blend, nlm_filter, NlmConfig};
use texgan_imaging::io::{load_image, save_image};
use texgan_imaging::metrics::{evaluate_against, mean_metrics, MetricConfig, MetricSet};
use texgan_imaging::ImageGrid;

use crate::data::{make_synthetic_dataset, Acquisition, Dataset, Pair, Split, TextureLevel};
use crate::error::{CoreError, Result};
use crate::report::{emit_report, parse_csv, render_csv, MetricReport};
use crate::seed;
use crate::trainer::{load_checkpoint, reconstruct, train, History, NetworkConfig, Networks, TrainConfig, TrainState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Original,
    Fbp,
    Mse100,
    Mse50,
    Nlm,
    TextureWgan,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Original,
        Method::Fbp,
        Method::Mse100,
        Method::Mse50,
        Method::Nlm,
        Method::TextureWgan,
    ];

    /// Identifier used in configs and directory names.
    pub fn id(self) -> &'static str {
        match self {
            Method::Original => "original",
            Method::Fbp => "fbp",
            Method::Mse100 => "mse100",
            Method::Mse50 => "mse50",
            Method::Nlm => "nlm",
            Method::TextureWgan => "texturewgan",
        }
    }

    /// Row label in reports.
    pub fn label(self) -> &'static str {
        match self {
            Method::Original => "Original",
            Method::Fbp => "FBP",
            Method::Mse100 => "MSE 100%",
            Method::Mse50 => "MSE 50%",
            Method::Nlm => "NLM Filter",
            Method::TextureWgan => "TextureWGAN",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| CoreError::Config(format!("unknown method `{s}`")))
    }
}

/// Learned models needed for the configured methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Mse,
    TextureWgan,
}

impl Model {
    pub fn id(self) -> &'static str {
        match self {
            Model::Mse => "mse",
            Model::TextureWgan => "texturewgan",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    /// Random ellipse phantoms.
    Synthetic {
        n_train: usize,
        n_eval: usize,
        size: usize,
        #[serde(default)]
        texture: Option<TextureLevel>,
    },
    /// `<path>/{train,eval}/truth/*.f32` ground-truth images in the raw
    /// format; inputs are simulated with the configured acquisition.
    Directory { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub acquisition: Acquisition,
    /// Report rows, in order.
    pub methods: Vec<Method>,
    pub networks: NetworkConfig,
    /// Regularizer-only training for the MSE rows. Its `seed` is replaced by
    /// one derived from the experiment seed.
    pub mse: TrainConfig,
    pub texturewgan: TrainConfig,
    /// Start the adversarial generator from the trained MSE generator
    /// instead of a fresh initialization.
    pub warm_start: bool,
    pub nlm: NlmConfig,
    pub metrics: MetricConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Laptop-sized experiment: 64×64 phantoms, 16 training and 8
    /// evaluation pairs, small networks.
    pub fn desk() -> Self {
        use crate::nn::{CriticConfig, GeneratorConfig};
        let nets = NetworkConfig {
            generator: GeneratorConfig {
                depth: 2,
                base_channels: 8,
                ..Default::default()
            },
            critic: CriticConfig {
                depth: 2,
                base_channels: 8,
                ..Default::default()
            },
            ..Default::default()
        };
        Self {
            dataset: DatasetSource::Synthetic {
                n_train: 16,
                n_eval: 8,
                size: 64,
                texture: Some(TextureLevel {
                    amplitude: 0.06,
                    correlation: 0.5,
                }),
            },
            acquisition: Acquisition {
                n_angles: 90,
                filter: Default::default(),
                noise: Some(texgan_imaging::ct::NoiseModel {
                    n0: 1e3,
                    sigma: 5.0,
                    seed: 0,
                    mu_scale: 0.1,
                }),
            },
            methods: Method::ALL.to_vec(),
            networks: nets,
            mse: TrainConfig {
                steps: 1500,
                lr: 1e-3,
                ..TrainConfig::mse_only()
            },
            texturewgan: TrainConfig {
                steps: 3000,
                ..TrainConfig::default()
            },
            warm_start: true,
            nlm: NlmConfig::default(),
            metrics: MetricConfig::default(),
            output_dir: PathBuf::from("texgan-out"),
            seed: 0,
        }
    }

    /// Reads a config file, or the `config` field of a run manifest.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CoreError::format(path, e.to_string()))?;
        let value = match value.get("config") {
            Some(inner) if value.get("config_sha256").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CoreError::format(path, e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(CoreError::Config("method list is empty".into()));
        }
        if let Some(m) = self.methods.iter().enumerate().find_map(|(i, m)| self.methods[..i].contains(m).then_some(m)) {
            return Err(CoreError::Config(format!("method `{m}` listed twice")));
        }
        match &self.dataset {
            DatasetSource::Synthetic { n_train, n_eval, .. } => {
                if *n_eval == 0 || (*n_train == 0 && !self.models().is_empty()) {
                    return Err(CoreError::Config("dataset sizes must be >= 1".into()));
                }
            }
            DatasetSource::Directory { path } => {
                for split in [Split::Train, Split::Eval] {
                    let dir = path.join(split.as_str()).join("truth");
                    if !dir.is_dir() {
                        return Err(CoreError::Config(format!("{} does not exist", dir.display())));
                    }
                }
            }
        }
        for model in self.models() {
            self.train_config(model).validate()?;
        }
        Ok(())
    }

    pub fn models(&self) -> Vec<Model> {
        let adversarial = self.methods.contains(&Method::TextureWgan);
        let mut out = Vec::new();
        if self.methods.iter().any(|m| matches!(m, Method::Mse100 | Method::Mse50)) || (adversarial && self.warm_start) {
            out.push(Model::Mse);
        }
        if adversarial {
            out.push(Model::TextureWgan);
        }
        out
    }

    /// Training config with its seed derived from the experiment seed.
    pub fn train_config(&self, model: Model) -> TrainConfig {
        let base = match model {
            Model::Mse => &self.mse,
            Model::TextureWgan => &self.texturewgan,
        };
        TrainConfig {
            seed: seed::derive(self.seed, model.id(), 0),
            ..base.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        Sha256::digest(self.to_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Stage names, in execution order.
pub const STAGES: [&str; 4] = ["simulate", "train", "evaluate", "report"];

pub const FAILED_MARKER: &str = "FAILED";

fn stage<T>(name: &'static str, out: &Path, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|source| {
        let err = CoreError::Stage {
            stage: name,
            source: Box::new(source),
        };
        // Best effort: the original error matters more than the marker.
        let _ = fs::create_dir_all(out).and_then(|_| fs::write(out.join(FAILED_MARKER), format!("{err}\n")));
        err
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CoreError::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ExperimentConfig,
    config_sha256: String,
    seed: u64,
    versions: Versions,
}

#[derive(Serialize, Deserialize)]
struct Versions {
    texgan: String,
    image_format: u32,
    checkpoint_format: u32,
}

pub fn write_manifest(config: &ExperimentConfig) -> Result<()> {
    let manifest = Manifest {
        config: config.clone(),
        config_sha256: config.sha256(),
        seed: config.seed,
        versions: Versions {
            texgan: env!("CARGO_PKG_VERSION").to_string(),
            image_format: texgan_imaging::io::FORMAT_VERSION,
            checkpoint_format: 1,
        },
    };
    write_text(
        &config.output_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
}

fn image_name(i: usize) -> String {
    format!("{i:04}.f32")
}

fn split_dir(out: &Path, split: Split) -> PathBuf {
    out.join("data").join(split.as_str())
}

fn save_dataset(data: &Dataset, out: &Path) -> Result<()> {
    let dir = split_dir(out, data.split);
    for (i, p) in data.pairs.iter().enumerate() {
        save_image(&p.truth, &dir.join("truth").join(image_name(i)))?;
        save_image(&p.input, &dir.join("input").join(image_name(i)))?;
    }
    Ok(())
}

/// Sorted `*.f32` files of a directory.
fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CoreError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "f32"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CoreError::Config(format!("no .f32 images in {}", dir.display())));
    }
    Ok(files)
}

/// Loads the pairs written by [`simulate_stage`].
pub fn load_dataset(out: &Path, split: Split) -> Result<Dataset> {
    let dir = split_dir(out, split);
    let pairs = list_images(&dir.join("truth"))?
        .into_iter()
        .map(|truth_path| {
            let name = truth_path.file_name().expect("listed file has a name");
            Ok(Pair {
                truth: load_image(&truth_path)?,
                input: load_image(&dir.join("input").join(name))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { split, pairs })
}

fn build_dataset(config: &ExperimentConfig, split: Split) -> Result<Dataset> {
    match &config.dataset {
        DatasetSource::Synthetic {
            n_train,
            n_eval,
            size,
            texture,
        } => {
            let n = if split == Split::Train { *n_train } else { *n_eval };
            make_synthetic_dataset(n, *size, &config.acquisition, texture.as_ref(), config.seed, split)
        }
        DatasetSource::Directory { path } => {
            let pairs = list_images(&path.join(split.as_str()).join("truth"))?
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let truth = load_image(p)?;
                    let noise_seed = seed::derive(config.seed, split.as_str(), i as u64);
                    let input = config.acquisition.simulate(&truth, noise_seed)?;
                    Ok(Pair { truth, input })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Dataset { split, pairs })
        }
    }
}

/// Builds both splits and writes them under `data/`.
pub fn simulate_stage(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    stage("simulate", &config.output_dir, || {
        config.validate()?;
        let train = build_dataset(config, Split::Train)?;
        let eval = build_dataset(config, Split::Eval)?;
        save_dataset(&train, &config.output_dir)?;
        save_dataset(&eval, &config.output_dir)?;
        Ok((train, eval))
    })
}

fn model_dir(out: &Path, model: Model) -> PathBuf {
    out.join("train").join(model.id())
}

/// Trains every model the methods need; `train` is loaded from `data/` when
/// not given.
pub fn train_stage(config: &ExperimentConfig, train_set: Option<&Dataset>) -> Result<()> {
    let out = &config.output_dir;
    stage("train", out, || {
        config.validate()?;
        let models = config.models();
        if models.is_empty() {
            return Ok(());
        }
        let loaded;
        let data = match train_set {
            Some(d) => d,
            None => {
                loaded = load_dataset(out, Split::Train)?;
                &loaded
            }
        };
        let nets = Networks::build(&config.networks)?;
        for model in models {
            train_model(config, model, &nets, data)?;
        }
        Ok(())
    })
}

/// Trains one model into `train/<model>/` and writes its history. With
/// `warm_start`, the adversarial generator starts from the MSE model's
/// final checkpoint, which must already exist.
pub fn train_model(config: &ExperimentConfig, model: Model, nets: &Networks, data: &Dataset) -> Result<(TrainState, History)> {
    let out = &config.output_dir;
    let train_config = config.train_config(model);
    let start = if model == Model::TextureWgan && config.warm_start {
        let (mse, _) = load_checkpoint(&model_dir(out, Model::Mse).join("final"))?;
        mse.generator.check_against(&nets.generator)?;
        let mut state = TrainState::init(nets, &train_config);
        state.generator = mse.generator;
        Some((state, History::default()))
    } else {
        None
    };
    let dir = model_dir(out, model);
    let (state, history) = train(&train_config, nets, data, Some(&dir), start)?;
    write_text(&dir.join("history.csv"), &history.to_csv())?;
    Ok((state, history))
}

fn method_images(
    config: &ExperimentConfig,
    method: Method,
    eval: &Dataset,
    nets: &Networks,
    cache: &mut Vec<(Model, Vec<ImageGrid>)>,
) -> Result<Vec<ImageGrid>> {
    let mut learned = |model: Model| -> Result<Vec<ImageGrid>> {
        if let Some((_, imgs)) = cache.iter().find(|(m, _)| *m == model) {
            return Ok(imgs.clone());
        }
        let (state, _) = load_checkpoint(&model_dir(&config.output_dir, model).join("final"))?;
        state.generator.check_against(&nets.generator)?;
        let imgs = reconstruct(&nets.generator, &state.generator, eval)?;
        cache.push((model, imgs.clone()));
        Ok(imgs)
    };
    match method {
        Method::Original => Ok(eval.pairs.iter().map(|p| p.truth.clone()).collect()),
        Method::Fbp => Ok(eval.pairs.iter().map(|p| p.input.clone()).collect()),
        Method::Nlm => eval
            .pairs
            .iter()
            .map(|p| Ok(nlm_filter(&p.input, &config.nlm)?))
            .collect(),
        Method::Mse100 => learned(Model::Mse),
        Method::Mse50 => {
            let mse = learned(Model::Mse)?;
            eval.pairs
                .iter()
                .zip(&mse)
                .map(|(p, m)| Ok(blend(&p.input, m, 0.5)?))
                .collect()
        }
        Method::TextureWgan => learned(Model::TextureWgan),
    }
}

/// Mean absolute metrics per method, in config order.
pub type MethodMetrics = Vec<(Method, MetricSet)>;

/// Reconstructs the evaluation set with each method, writes the images and
/// `eval/metrics.csv`. The original's metrics are always computed (they
/// normalize the texture columns) and come first in the result.
pub fn evaluate_stage(config: &ExperimentConfig, eval_set: Option<&Dataset>) -> Result<MethodMetrics> {
    let out = &config.output_dir;
    stage("evaluate", out, || {
        config.validate()?;
        let loaded;
        let eval = match eval_set {
            Some(d) => d,
            None => {
                loaded = load_dataset(out, Split::Eval)?;
                &loaded
            }
        };
        let nets = Networks::build(&config.networks)?;
        let mut cache = Vec::new();
        let mut rows = Vec::new();
        let methods = std::iter::once(Method::Original).chain(config.methods.iter().copied().filter(|&m| m != Method::Original));
        for method in methods {
            let images = method_images(config, method, eval, &nets, &mut cache)?;
            let listed = config.methods.contains(&method);
            let dir = out.join("eval").join(method.id());
            let mut sets = Vec::new();
            for (i, (img, pair)) in images.iter().zip(&eval.pairs).enumerate() {
                if listed {
                    save_image(img, &dir.join(image_name(i)))?;
                }
                sets.push(evaluate_against(img, &pair.truth, &config.metrics, None)?);
            }
            rows.push((method, mean_metrics(&sets)?));
        }
        let table: Vec<MetricReport> = rows
            .iter()
            .map(|(m, s)| MetricReport {
                method: m.id().to_string(),
                values: s.clone(),
            })
            .collect();
        write_text(&out.join("eval").join("metrics.csv"), &render_csv(&table)?)?;
        Ok(rows)
    })
}

/// Normalizes against the original and writes `report.csv` / `report.md`
/// with one row per configured method. Metrics are read from
/// `eval/metrics.csv` when not given.
pub fn report_stage(config: &ExperimentConfig, metrics: Option<&MethodMetrics>) -> Result<Vec<MetricReport>> {
    let out = &config.output_dir;
    stage("report", out, || {
        let loaded;
        let rows = match metrics {
            Some(m) => m,
            None => {
                let path = out.join("eval").join("metrics.csv");
                let text = fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
                loaded = parse_csv(&text)?
                    .into_iter()
                    .map(|r| Ok((r.method.parse::<Method>()?, r.values)))
                    .collect::<Result<Vec<_>>>()?;
                &loaded
            }
        };
        let reports = normalize(rows, &config.methods)?;
        emit_report(&reports, out)?;
        Ok(reports)
    })
}

/// Report rows for `methods` (in that order) from absolute metrics, which
/// must include the original's.
pub fn normalize(rows: &MethodMetrics, methods: &[Method]) -> Result<Vec<MetricReport>> {
    let lookup = |method: Method| {
        rows.iter()
            .find(|(m, _)| *m == method)
            .map(|(_, s)| s)
            .ok_or_else(|| CoreError::Config(format!("no metrics for `{method}`")))
    };
    let original = lookup(Method::Original)?;
    methods
        .iter()
        .map(|&m| match m {
            Method::Original => Ok(MetricReport::original(m.label())),
            _ => MetricReport::normalized(m.label(), lookup(m)?, original),
        })
        .collect()
}

/// Removes a failure marker left by an earlier run.
pub fn clear_failed_marker(out: &Path) -> Result<()> {
    let marker = out.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| CoreError::io(&marker, e))?;
    }
    Ok(())
}

/// Writes the manifest, then runs every stage in order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricReport>> {
    clear_failed_marker(&config.output_dir)?;
    write_manifest(config)?;
    let (train_set, eval_set) = simulate_stage(config)?;
    train_stage(config, Some(&train_set))?;
    let metrics = evaluate_stage(config, Some(&eval_set))?;
    report_stage(config, Some(&metrics))
}
