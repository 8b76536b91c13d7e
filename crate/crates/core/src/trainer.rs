//! Alternating critic/generator optimization with checkpoints and a loss
//! history.
//!
//! Every random draw (batch indices, interpolation factors) comes from a
//! stream derived from `(seed, purpose, step)`, so a run is a pure function
//! of its configuration, data and seed, and resuming from a checkpoint
//! continues exactly as the uninterrupted run would.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use texgan_tensor::{Graph, Tensor};

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::losses::{critic_loss, generator_loss, GeneratorLossInputs, InterpolationRule, RegularizerConfig};
use crate::nn::{
    build_critic, build_generator, build_perceptual, forward, init_params, CriticConfig, GeneratorConfig, InitScheme,
    NetworkSpec, ParamStore, PerceptualNetConfig,
};
use crate::optim::{adam_update, Moments};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Generator steps.
    pub steps: usize,
    /// Critic steps per generator step.
    pub n_critic: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    /// Learning rate of the balancing log-variances.
    pub mle_lr: f64,
    /// Gradient-penalty coefficient.
    pub mu: f64,
    pub regularizer: RegularizerConfig,
    /// Train a critic and add the adversarial term. Off for regularizer-only
    /// baselines.
    pub adversarial: bool,
    pub mle_init: f64,
    pub seed: u64,
    /// Generator steps between checkpoints; 0 writes only the final one.
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            n_critic: 5,
            batch_size: 4,
            lr: 1e-4,
            betas: (0.0, 0.9),
            mle_lr: 1e-2,
            mu: 10.0,
            regularizer: RegularizerConfig::with_mle(),
            adversarial: true,
            mle_init: 0.0,
            seed: 0,
            checkpoint_interval: 0,
        }
    }
}

impl TrainConfig {
    /// Pixel-loss-only baseline (no critic, no balancing, no perceptual term).
    pub fn mse_only() -> Self {
        Self {
            adversarial: false,
            regularizer: RegularizerConfig {
                lambda1: 1.0,
                lambda2: 0.0,
                mle_enabled: false,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if self.n_critic == 0 {
            return bad("n_critic must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.lr > 0.0) || !(self.mle_lr > 0.0) {
            return bad("learning rates must be > 0");
        }
        if !(0.0..1.0).contains(&self.betas.0) || !(0.0..1.0).contains(&self.betas.1) {
            return bad("moment decays must lie in [0, 1)");
        }
        if !(self.mu >= 0.0) {
            return bad("mu must be >= 0");
        }
        self.regularizer.validate()
    }

    /// Regularizer terms carrying a learnable log-variance.
    pub fn mle_terms(&self) -> Vec<&'static str> {
        let r = &self.regularizer;
        if !r.mle_enabled {
            return Vec::new();
        }
        let mut terms = Vec::new();
        if r.lambda1 > 0.0 {
            terms.push("mse");
        }
        if r.lambda2 > 0.0 {
            terms.push("perceptual");
        }
        terms
    }
}

/// Network architectures shared by all training runs of an experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub generator: GeneratorConfig,
    pub critic: CriticConfig,
    pub perceptual: PerceptualNetConfig,
}

#[derive(Clone, Debug)]
pub struct Networks {
    pub generator: NetworkSpec,
    pub critic: NetworkSpec,
    pub perceptual: NetworkSpec,
    pub perceptual_params: ParamStore<f32>,
}

impl Networks {
    pub fn build(config: &NetworkConfig) -> Result<Self> {
        let (perceptual, perceptual_params) = build_perceptual(&config.perceptual)?;
        Ok(Self {
            generator: build_generator(&config.generator)?,
            critic: build_critic(&config.critic)?,
            perceptual,
            perceptual_params,
        })
    }
}

/// Everything needed to continue training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Completed generator steps.
    pub step: usize,
    pub seed: u64,
    pub generator: ParamStore<f32>,
    pub critic: ParamStore<f32>,
    /// Scalar log-variance per balanced term, named by term.
    pub mle: ParamStore<f32>,
    pub adam_generator: Moments<f32>,
    pub adam_critic: Moments<f32>,
    pub adam_mle: Moments<f32>,
}

impl TrainState {
    pub fn init(nets: &Networks, config: &TrainConfig) -> Self {
        let generator = init_params(&nets.generator, seed::derive(config.seed, "init-generator", 0), InitScheme::UniformFanIn);
        let critic = init_params(&nets.critic, seed::derive(config.seed, "init-critic", 0), InitScheme::UniformFanIn);
        let mle = ParamStore::from_slots(
            config
                .mle_terms()
                .iter()
                .map(|t| (t.to_string(), Tensor::scalar(config.mle_init as f32)))
                .collect(),
            config.seed,
            InitScheme::Zeros,
        );
        Self {
            step: 0,
            seed: config.seed,
            adam_generator: Moments::zeros_like(&generator),
            adam_critic: Moments::zeros_like(&critic),
            adam_mle: Moments::zeros_like(&mle),
            generator,
            critic,
            mle,
        }
    }

    /// Current `sᵢ` per balanced term.
    pub fn mle_values(&self) -> BTreeMap<String, f64> {
        self.mle.iter().map(|(n, t)| (n.to_string(), t.item() as f64)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CriticStats {
    pub total: f64,
    pub em: f64,
    pub gp: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeneratorStats {
    pub adversarial: Option<f64>,
    pub mse: f64,
    pub perceptual: f64,
    pub combined: f64,
}

/// Uniform draw with replacement.
pub fn sample_indices(n: usize, count: usize, seed: u64, purpose: &str, index: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed, purpose, index);
    (0..count).map(|_| rng.random_range(0..n)).collect()
}

fn finite(value: f64, what: &str, step: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(CoreError::NonFinite {
            what: what.to_string(),
            step,
        })
    }
}

/// One critic update against the current (frozen) generator. `update` is the
/// 1-based critic update count used for bias correction and the
/// interpolation stream.
pub fn train_step_critic(
    state: &mut TrainState,
    nets: &Networks,
    config: &TrainConfig,
    real: &Tensor<f32>,
    fake: &Tensor<f32>,
    update: u64,
) -> Result<CriticStats> {
    let graph = Graph::<f32>::with_higher_order();
    let bound = state.critic.bind(&graph, true);
    let rule = InterpolationRule {
        seed: seed::derive(config.seed, "interpolation", update),
    };
    let terms = critic_loss(&graph, &nets.critic, &bound, real, fake, config.mu, &rule)?;
    let step = state.step;
    let stats = CriticStats {
        total: finite(graph.value(terms.total).item() as f64, "critic loss", step)?,
        em: graph.value(terms.em).item() as f64,
        gp: graph.value(terms.gp).item() as f64,
        grad_norm: terms.grad_norm,
    };
    let grads = graph.backward(terms.total, bound.vars())?;
    adam_update(&mut state.critic, &grads, &mut state.adam_critic, update, config.lr, config.betas)
        .map_err(|e| at_step(e, step))?;
    Ok(stats)
}

/// Selects leading-axis rows of `t`, in order.
fn gather_rows(t: &Tensor<f32>, rows: impl ExactSizeIterator<Item = usize>) -> Result<Tensor<f32>> {
    let mut shape = t.shape().to_vec();
    let stride = t.len() / shape[0];
    shape[0] = rows.len();
    let mut data = Vec::with_capacity(shape[0] * stride);
    for r in rows {
        data.extend_from_slice(&t.data()[r * stride..(r + 1) * stride]);
    }
    Ok(Tensor::new(shape, data)?)
}

fn at_step(e: CoreError, step: usize) -> CoreError {
    match e {
        CoreError::NonFinite { what, .. } => CoreError::NonFinite { what, step },
        other => other,
    }
}

/// One generator update; the critic and perceptual parameters are bound as
/// constants and never change here.
pub fn train_step_generator(
    state: &mut TrainState,
    nets: &Networks,
    config: &TrainConfig,
    real: &Tensor<f32>,
    fbp: &Tensor<f32>,
) -> Result<GeneratorStats> {
    let graph = Graph::<f32>::new();
    let g_bound = state.generator.bind(&graph, true);
    let d_bound = state.critic.bind(&graph, false);
    let psi_bound = nets.perceptual_params.bind(&graph, false);
    let mle_bound = state.mle.bind(&graph, true);
    let weights: BTreeMap<String, _> = state
        .mle
        .names()
        .zip(mle_bound.vars())
        .map(|(n, &v)| (n.to_string(), v))
        .collect();
    let x = graph.constant(real.clone());
    let x_fbp = graph.constant(fbp.clone());
    let inputs = GeneratorLossInputs {
        generator: (&nets.generator, &g_bound),
        critic: config.adversarial.then_some((&nets.critic, &d_bound)),
        perceptual: (&nets.perceptual, &psi_bound),
    };
    let bundle = generator_loss(&graph, &inputs, x, x_fbp, &config.regularizer, Some(&weights))?;
    let step = state.step;
    let value = |v| graph.value(v).item() as f64;
    let stats = GeneratorStats {
        adversarial: bundle.adversarial.map(value),
        mse: value(bundle.mse),
        perceptual: value(bundle.perceptual),
        combined: finite(value(bundle.combined), "generator loss", step)?,
    };
    let mut wrt = g_bound.vars().to_vec();
    wrt.extend_from_slice(mle_bound.vars());
    let mut grads = graph.backward(bundle.combined, &wrt)?;
    let mle_grads = grads.split_off(g_bound.vars().len());
    let t = step as u64 + 1;
    adam_update(&mut state.generator, &grads, &mut state.adam_generator, t, config.lr, config.betas)
        .map_err(|e| at_step(e, step))?;
    if !state.mle.is_empty() {
        adam_update(&mut state.mle, &mle_grads, &mut state.adam_mle, t, config.mle_lr, config.betas)
            .map_err(|e| at_step(e, step))?;
    }
    Ok(stats)
}

/// Per-step named loss values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub rows: Vec<(usize, String, f64)>,
}

impl History {
    pub fn push(&mut self, step: usize, name: &str, value: f64) {
        self.rows.push((step, name.to_string(), value));
    }

    /// Values of one loss term in step order.
    pub fn series(&self, name: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|(_, n, _)| n == name)
            .map(|&(s, _, v)| (s, v))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,value\n");
        for (step, name, value) in &self.rows {
            writeln!(out, "{step},{name},{value:e}").unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let parts: Vec<&str> = line.split(',').collect();
            let parsed = match parts[..] {
                [s, n, v] => s.parse().ok().zip(v.parse().ok()).map(|(s, v)| (s, n.to_string(), v)),
                _ => None,
            };
            rows.push(parsed.ok_or_else(|| CoreError::Config(format!("bad history line `{line}`")))?);
        }
        Ok(Self { rows })
    }
}

/// Runs generator steps `state.step..config.steps`.
pub fn train(
    config: &TrainConfig,
    nets: &Networks,
    data: &Dataset,
    checkpoint_dir: Option<&Path>,
    resume: Option<(TrainState, History)>,
) -> Result<(TrainState, History)> {
    config.validate()?;
    if data.is_empty() {
        return Err(CoreError::Config("training set is empty".into()));
    }
    let (mut state, mut history) = match resume {
        Some(r) => r,
        None => (TrainState::init(nets, config), History::default()),
    };
    if state.seed != config.seed {
        return Err(CoreError::Config(format!(
            "checkpoint seed {} differs from configured seed {}",
            state.seed, config.seed
        )));
    }
    while state.step < config.steps {
        let step = state.step;
        if let Err(e) = train_one(&mut state, &mut history, config, nets, data) {
            if let (Some(dir), CoreError::NonFinite { .. }) = (checkpoint_dir, &e) {
                save_checkpoint(&dir.join("diagnostic"), &state, &history)?;
            }
            return Err(e);
        }
        state.step = step + 1;
        let interval = config.checkpoint_interval;
        if let Some(dir) = checkpoint_dir {
            if interval > 0 && state.step % interval == 0 && state.step < config.steps {
                save_checkpoint(&dir.join(format!("step-{:06}", state.step)), &state, &history)?;
            }
        }
    }
    if let Some(dir) = checkpoint_dir {
        save_checkpoint(&dir.join("final"), &state, &history)?;
    }
    Ok((state, history))
}

fn train_one(
    state: &mut TrainState,
    history: &mut History,
    config: &TrainConfig,
    nets: &Networks,
    data: &Dataset,
) -> Result<()> {
    let step = state.step;
    if config.adversarial {
        let updates: Vec<u64> = (0..config.n_critic).map(|k| (step * config.n_critic + k) as u64 + 1).collect();
        let batches: Vec<Vec<usize>> = updates
            .iter()
            .map(|&u| sample_indices(data.len(), config.batch_size, config.seed, "critic-batch", u))
            .collect();
        // The generator is fixed across critic updates: run it once per image.
        let mut unique: Vec<usize> = batches.iter().flatten().copied().collect();
        unique.sort_unstable();
        unique.dedup();
        let (_, fbp) = data.batch(&unique)?;
        let fakes = forward(&nets.generator, &state.generator, &fbp)?;
        let mut acc = CriticStats::default();
        for (idx, &update) in batches.iter().zip(&updates) {
            let (real, _) = data.batch(idx)?;
            let fake = gather_rows(&fakes, idx.iter().map(|i| unique.binary_search(i).expect("index sampled")))?;
            let s = train_step_critic(state, nets, config, &real, &fake, update)?;
            acc.total += s.total;
            acc.em += s.em;
            acc.gp += s.gp;
            acc.grad_norm += s.grad_norm;
        }
        let n = config.n_critic as f64;
        history.push(step, "critic_total", acc.total / n);
        history.push(step, "critic_em", acc.em / n);
        history.push(step, "critic_gp", acc.gp / n);
        history.push(step, "critic_grad_norm", acc.grad_norm / n);
    }
    let idx = sample_indices(data.len(), config.batch_size, config.seed, "generator-batch", step as u64);
    let (real, fbp) = data.batch(&idx)?;
    let s = train_step_generator(state, nets, config, &real, &fbp)?;
    if let Some(a) = s.adversarial {
        history.push(step, "adversarial", a);
    }
    history.push(step, "mse", s.mse);
    history.push(step, "perceptual", s.perceptual);
    history.push(step, "combined", s.combined);
    for (name, t) in state.mle.iter() {
        history.push(step, &format!("s_{name}"), t.item() as f64);
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    version: u32,
    step: usize,
    seed: u64,
    /// Initialization seed and scheme of each parameter group.
    groups: BTreeMap<String, (u64, String)>,
}

const GROUPS: [&str; 9] = [
    "generator",
    "critic",
    "mle",
    "adam.generator.m",
    "adam.generator.v",
    "adam.critic.m",
    "adam.critic.v",
    "adam.mle.m",
    "adam.mle.v",
];

/// Writes `state.bin` / `state.manifest` (all parameter groups, slot names
/// prefixed `<group>/`), `state.json` and `history.csv` into `dir`.
pub fn save_checkpoint(dir: &Path, state: &TrainState, history: &History) -> Result<()> {
    let stores = [
        &state.generator,
        &state.critic,
        &state.mle,
        &state.adam_generator.m,
        &state.adam_generator.v,
        &state.adam_critic.m,
        &state.adam_critic.v,
        &state.adam_mle.m,
        &state.adam_mle.v,
    ];
    let mut slots = Vec::new();
    let mut groups = BTreeMap::new();
    for (group, store) in GROUPS.iter().zip(stores) {
        for (name, t) in store.iter() {
            slots.push((format!("{group}/{name}"), t.clone()));
        }
        groups.insert(group.to_string(), (store.seed, store.scheme.as_str().to_string()));
    }
    ParamStore::from_slots(slots, state.seed, InitScheme::UniformFanIn).save(&dir.join("state"))?;
    let meta = StateMeta {
        version: 1,
        step: state.step,
        seed: state.seed,
        groups,
    };
    write_file(&dir.join("state.json"), serde_json::to_string_pretty(&meta).expect("serializable").as_bytes())?;
    write_file(&dir.join("history.csv"), history.to_csv().as_bytes())
}

pub fn load_checkpoint(dir: &Path) -> Result<(TrainState, History)> {
    let meta_path = dir.join("state.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| CoreError::io(&meta_path, e))?;
    let meta: StateMeta = serde_json::from_str(&text).map_err(|e| CoreError::format(&meta_path, e.to_string()))?;
    if meta.version != 1 {
        return Err(CoreError::format(&meta_path, format!("unsupported version {}", meta.version)));
    }
    let all = ParamStore::<f32>::load(&dir.join("state"))?;
    let mut groups: BTreeMap<&str, Vec<(String, Tensor<f32>)>> = GROUPS.iter().map(|g| (*g, Vec::new())).collect();
    for (name, t) in all.iter() {
        let (group, slot) = name
            .split_once('/')
            .ok_or_else(|| CoreError::format(dir, format!("slot `{name}` has no group prefix")))?;
        groups
            .get_mut(group)
            .ok_or_else(|| CoreError::format(dir, format!("unknown group `{group}`")))?
            .push((slot.to_string(), t.clone()));
    }
    let mut take = |g: &str| -> Result<ParamStore<f32>> {
        let (seed, scheme) = meta
            .groups
            .get(g)
            .ok_or_else(|| CoreError::format(&meta_path, format!("missing group `{g}`")))?;
        Ok(ParamStore::from_slots(groups.remove(g).unwrap_or_default(), *seed, scheme.parse()?))
    };
    let state = TrainState {
        step: meta.step,
        seed: meta.seed,
        generator: take("generator")?,
        critic: take("critic")?,
        mle: take("mle")?,
        adam_generator: Moments {
            m: take("adam.generator.m")?,
            v: take("adam.generator.v")?,
        },
        adam_critic: Moments {
            m: take("adam.critic.m")?,
            v: take("adam.critic.v")?,
        },
        adam_mle: Moments {
            m: take("adam.mle.m")?,
            v: take("adam.mle.v")?,
        },
    };
    let hist_path = dir.join("history.csv");
    let history = History::from_csv(&fs::read_to_string(&hist_path).map_err(|e| CoreError::io(&hist_path, e))?)?;
    Ok((state, history))
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
}

/// Generator outputs for every input of `data`, one image at a time.
pub fn reconstruct(spec: &NetworkSpec, generator: &ParamStore<f32>, data: &Dataset) -> Result<Vec<texgan_imaging::ImageGrid>> {
    data.pairs
        .iter()
        .map(|p| {
            let x = crate::data::stack_images(&[&p.input])?;
            let y = forward(spec, generator, &x)?;
            Ok(crate::data::unstack_images(&y)?.remove(0))
        })
        .collect()
}
