use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Real, Tape, TensorId};
use crate::env::EnvironmentSpec;
use crate::model::{
    sample_loss_graph, save_checkpoint, CheckpointError, Model, ModelConfig, ModelError, Phase,
    SampleInput, SpecConditioning,
};
use crate::model::cosine_grads;
use crate::oracle::{records_from_jsonl, verify_records, DatasetRecord, VerifyError};
use crate::stl::Vocab;
use crate::{derive_seed, label_hash};

use super::optim::{warmup_cosine_lr, Adam, AdamConfig};

/// Everything the training run needs; every field has a CLI flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// JSON-Lines dataset files, concatenated in order.
    pub dataset: Vec<PathBuf>,
    /// Environment file (fixes the vocabulary's region names).
    pub env: PathBuf,
    pub model: ModelConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Peak learning rate; linear warmup over `warmup_frac` of total steps,
    /// then cosine decay.
    pub lr: f64,
    pub warmup_frac: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Save an intermediate checkpoint every this many epochs (0 = final only).
    pub checkpoint_every: usize,
    /// Fraction of trajectories held out for validation.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset: Vec::new(),
            env: PathBuf::new(),
            model: ModelConfig::default(),
            batch_size: 32,
            epochs: 50,
            lr: 3e-4,
            warmup_frac: 0.05,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            checkpoint_every: 0,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(TrainError::Config("val_fraction must be in (0, 1)".into()));
        }
        if !(self.lr > 0.0) {
            return Err(TrainError::Config("lr must be positive".into()));
        }
        self.model.validate().map_err(TrainError::Config)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("train config invalid: {0}")]
    Config(String),
    #[error("dataset io `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("dataset audit failed: {0}")]
    Audit(#[from] VerifyError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("dataset/vocabulary mismatch: {0}")]
    Vocab(String),
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("non-finite loss at epoch {epoch}, step {step}; last good checkpoint: {last_checkpoint:?}")]
    NonFinite { epoch: usize, step: usize, last_checkpoint: Option<PathBuf> },
}

/// Loss components, all non-negative; `total` is their unweighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub state: f64,
    pub action: f64,
    pub spec: f64,
    pub total: f64,
    /// A zero-norm embedding was guarded during the cosine.
    pub spec_degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: String,
    pub l_state: f64,
    pub l_action: f64,
    pub l_spec: f64,
    pub l_total: f64,
    pub wall_time_s: f64,
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("epoch,split,l_state,l_action,l_spec,l_total,wall_time_s\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.3}\n",
            r.epoch, r.split, r.l_state, r.l_action, r.l_spec, r.l_total, r.wall_time_s
        ));
    }
    out
}

#[derive(Debug)]
pub struct TrainOutput {
    pub checkpoint_path: PathBuf,
    pub fingerprint: String,
    pub metrics_path: PathBuf,
    pub metrics: Vec<MetricsRow>,
    pub train_count: usize,
    pub val_count: usize,
}

// One record preprocessed for the network.
struct Prepared {
    input: SampleInput,
    target_states: Vec<[f64; 4]>,
    target_actions: Vec<[f64; 2]>,
    horizon: usize,
}

fn prepare<T: Real>(model: &Model<T>, records: &[DatasetRecord]) -> Result<Vec<Prepared>, TrainError> {
    records
        .iter()
        .map(|r| {
            let stream = crate::stl::TokenStream { tokens: r.tokens.clone() };
            let ids = model
                .vocab
                .encode(&stream)
                .map_err(|e| TrainError::Vocab(format!("spec `{}`: {e}", r.spec_id)))?;
            let n = r.actions.len();
            if r.states.len() != n + 1 {
                return Err(TrainError::Vocab(format!(
                    "record for `{}` has {} states for {} actions",
                    r.spec_id,
                    r.states.len(),
                    n
                )));
            }
            if n > model.cfg.h_max {
                return Err(TrainError::Vocab(format!(
                    "record horizon {n} exceeds model h_max {}",
                    model.cfg.h_max
                )));
            }
            Ok(Prepared {
                input: SampleInput {
                    spec: SpecConditioning::Tokens(ids),
                    states: r.states[..n].to_vec(),
                    actions: r.actions.clone(),
                },
                target_states: r.states[1..].to_vec(),
                target_actions: r.actions.clone(),
                horizon: n,
            })
        })
        .collect()
}

struct SamplePass<T: Real> {
    tape: Tape<T>,
    bound: crate::model::BoundParams,
    l_state: TensorId,
    l_action: TensorId,
    spec_nodes: Option<(TensorId, TensorId)>,
    l_state_v: f64,
    l_action_v: f64,
    t_v: Vec<f64>,
    c_v: Vec<f64>,
}

fn forward_batch<T: Real>(
    model: &Model<T>,
    batch: &[&Prepared],
    dropout_seeds: Option<Vec<u64>>,
    jobs: Option<usize>,
) -> Vec<SamplePass<T>> {
    let items: Vec<(usize, SampleInput, Vec<[f64; 4]>, Vec<[f64; 2]>)> = batch
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.input.clone(), p.target_states.clone(), p.target_actions.clone()))
        .collect();
    crate::par::map_indexed(items, jobs, |_, (i, input, ts, ta)| {
        let mut tape: Tape<T> = Tape::new();
        let bound = model.bind(&mut tape);
        let mut rng_store;
        let mut phase = match &dropout_seeds {
            Some(seeds) => {
                rng_store = ChaCha12Rng::seed_from_u64(seeds[i]);
                Phase::Train(&mut rng_store)
            }
            None => Phase::Eval,
        };
        let out = model
            .forward(&mut tape, &bound, &input, &mut phase, false)
            .expect("prepared inputs are forward-compatible");
        let loss = sample_loss_graph(&mut tape, &out, &ts, &ta);
        let spec_nodes = match (out.spec_pooled, out.cross_pooled) {
            (t, Some(c)) if !model.cfg.ablation => Some((t, c)),
            _ => None,
        };
        let t_v = spec_nodes
            .map(|(t, _)| tape.value(t).iter().map(|x| x.as_f64()).collect())
            .unwrap_or_default();
        let c_v = spec_nodes
            .map(|(_, c)| tape.value(c).iter().map(|x| x.as_f64()).collect())
            .unwrap_or_default();
        SamplePass {
            l_state_v: tape.value_scalar(loss.l_state).as_f64(),
            l_action_v: tape.value_scalar(loss.l_action).as_f64(),
            l_state: loss.l_state,
            l_action: loss.l_action,
            spec_nodes,
            t_v,
            c_v,
            tape,
            bound,
        }
    })
}

// Batch loss values plus the cotangents for the batch-pooled relevance term.
fn batch_loss<T: Real>(
    model: &Model<T>,
    passes: &[SamplePass<T>],
) -> (LossBreakdown, Option<(Vec<f64>, Vec<f64>)>) {
    let b = passes.len() as f64;
    let l_state = passes.iter().map(|p| p.l_state_v).sum::<f64>() / b;
    let l_action = passes.iter().map(|p| p.l_action_v).sum::<f64>() / b;
    if model.cfg.ablation || passes.iter().any(|p| p.spec_nodes.is_none()) {
        return (
            LossBreakdown {
                state: l_state,
                action: l_action,
                spec: 0.0,
                total: l_state + l_action,
                spec_degenerate: false,
            },
            None,
        );
    }
    let d = passes[0].t_v.len();
    let mut u = vec![0.0; d];
    let mut v = vec![0.0; d];
    for p in passes {
        for j in 0..d {
            u[j] += p.t_v[j] / b;
            v[j] += p.c_v[j] / b;
        }
    }
    let (l_spec, du, dv, degenerate) = cosine_grads(&u, &v);
    (
        LossBreakdown {
            state: l_state,
            action: l_action,
            spec: l_spec,
            total: l_state + l_action + l_spec,
            spec_degenerate: degenerate,
        },
        Some((du, dv)),
    )
}

// Backward over every sample tape; parameter gradients reduce in sample order.
fn backward_batch<T: Real>(
    passes: Vec<SamplePass<T>>,
    spec_seeds: Option<(Vec<f64>, Vec<f64>)>,
    jobs: Option<usize>,
) -> Vec<T> {
    let b = passes.len() as f64;
    let inv_b = T::from_f64(1.0 / b);
    let per_sample: Vec<Vec<T>> = crate::par::map_indexed(passes, jobs, |_, mut pass| {
        let mut seeds: Vec<(TensorId, Vec<T>)> =
            vec![(pass.l_state, vec![inv_b]), (pass.l_action, vec![inv_b])];
        if let (Some((t_node, c_node)), Some((du, dv))) = (pass.spec_nodes, &spec_seeds) {
            seeds.push((t_node, du.iter().map(|g| T::from_f64(*g / b)).collect()));
            seeds.push((c_node, dv.iter().map(|g| T::from_f64(*g / b)).collect()));
        }
        pass.tape.backward_seeded(&seeds);
        pass.bound.grads_flat(&pass.tape)
    });
    let mut total = vec![T::zero(); per_sample[0].len()];
    for sample in &per_sample {
        for (acc, g) in total.iter_mut().zip(sample) {
            *acc += *g;
        }
    }
    total
}

/// Average losses over a split, batched in dataset order with the training
/// reduction. Read-only on the model.
pub fn evaluate_losses<T: Real>(
    model: &Model<T>,
    records: &[DatasetRecord],
    batch_size: usize,
    jobs: Option<usize>,
) -> Result<LossBreakdown, TrainError> {
    if records.is_empty() {
        return Err(TrainError::EmptySplit("no records to evaluate".into()));
    }
    let prepared = prepare(model, records)?;
    let mut state = 0.0;
    let mut action = 0.0;
    let mut spec = 0.0;
    let mut degenerate = false;
    let mut count = 0usize;
    for batch_idx in buckets(&prepared, batch_size) {
        let batch: Vec<&Prepared> = batch_idx.iter().map(|i| &prepared[*i]).collect();
        let passes = forward_batch(model, &batch, None, jobs);
        let (losses, _) = batch_loss(model, &passes);
        let b = batch.len() as f64;
        state += losses.state * b;
        action += losses.action * b;
        spec += losses.spec * b;
        degenerate |= losses.spec_degenerate;
        count += batch.len();
    }
    let n = count as f64;
    let (state, action, spec) = (state / n, action / n, spec / n);
    Ok(LossBreakdown {
        state,
        action,
        spec,
        total: state + action + spec,
        spec_degenerate: degenerate,
    })
}

// Groups sample indices into same-horizon batches, preserving input order
// within each bucket.
fn buckets(prepared: &[Prepared], batch_size: usize) -> Vec<Vec<usize>> {
    use std::collections::BTreeMap;
    let mut open: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, p) in prepared.iter().enumerate() {
        let bucket = open.entry(p.horizon).or_default();
        bucket.push(i);
        if bucket.len() == batch_size {
            out.push(std::mem::take(bucket));
        }
    }
    for (_, rest) in open {
        if !rest.is_empty() {
            out.push(rest);
        }
    }
    out
}

/// Deterministic trajectory-level split: validation fraction rounded to at
/// least one record on each side.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[label_hash("split")]));
    idx.shuffle(&mut rng);
    let val_count = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let val = idx[..val_count].to_vec();
    let train = idx[val_count..].to_vec();
    (train, val)
}

fn load_records(paths: &[PathBuf]) -> Result<Vec<DatasetRecord>, TrainError> {
    let mut records = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        records.extend(records_from_jsonl(&text)?);
    }
    Ok(records)
}

/// Runs supervised training, writing `model.ckpt` (plus cadence checkpoints)
/// and `metrics.csv` into `out_dir`. Deterministic for a fixed config: data
/// order, init, dropout, and optimizer state all derive from `cfg.seed`.
pub fn train<T: Real>(
    cfg: &TrainConfig,
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    let env = EnvironmentSpec::load(&cfg.env)?;
    let records = load_records(&cfg.dataset)?;
    if records.len() < 2 {
        return Err(TrainError::EmptySplit(format!(
            "need at least 2 records to split, got {}",
            records.len()
        )));
    }
    // Precondition: the dataset must pass the oracle audit.
    verify_records(&records, &env, 0.0)?;

    std::fs::create_dir_all(out_dir).map_err(|e| TrainError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;

    let vocab = Vocab::build(cfg.model.h_max, &env.region_names());
    let mut model: Model<T> =
        Model::new(cfg.model.clone(), vocab, derive_seed(cfg.seed, &[label_hash("init")]))?;
    let prepared = prepare(&model, &records)?;

    let (train_idx, val_idx) = split_indices(records.len(), cfg.val_fraction, cfg.seed);
    let train_records: Vec<DatasetRecord> = train_idx.iter().map(|i| records[*i].clone()).collect();
    let val_records: Vec<DatasetRecord> = val_idx.iter().map(|i| records[*i].clone()).collect();

    let horizons: Vec<usize> = train_idx.iter().map(|i| prepared[*i].horizon).collect();
    let per_epoch_batches = batch_count(&horizons, cfg.batch_size);
    let total_steps = per_epoch_batches * cfg.epochs as u64;
    let warmup_steps = ((total_steps as f64) * cfg.warmup_frac).round() as u64;

    let mut flat = model.params.flatten();
    let mut adam: Adam<T> = Adam::new(
        flat.len(),
        AdamConfig { beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps, weight_decay: cfg.weight_decay },
    );

    let started = Instant::now();
    let mut metrics: Vec<MetricsRow> = Vec::new();
    let mut last_checkpoint: Option<PathBuf> = None;
    let mut global_step = 0u64;

    for epoch in 0..cfg.epochs {
        // Shuffle training order, then bucket into same-horizon batches.
        let mut order = train_idx.clone();
        {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(
                cfg.seed,
                &[label_hash("epoch"), epoch as u64],
            ));
            order.shuffle(&mut rng);
        }
        let order_prepared: Vec<&Prepared> = order.iter().map(|i| &prepared[*i]).collect();
        let batch_sets = buckets_by_ref(&order_prepared, cfg.batch_size);

        for (step, batch_rows) in batch_sets.iter().enumerate() {
            let batch: Vec<&Prepared> = batch_rows.iter().map(|r| order_prepared[*r]).collect();
            let dropout_seeds: Vec<u64> = (0..batch.len())
                .map(|i| {
                    derive_seed(
                        cfg.seed,
                        &[label_hash("dropout"), epoch as u64, step as u64, i as u64],
                    )
                })
                .collect();
            let passes = forward_batch(&model, &batch, Some(dropout_seeds), jobs);
            let (losses, spec_seeds) = batch_loss(&model, &passes);
            if !losses.total.is_finite() {
                return Err(TrainError::NonFinite { epoch, step, last_checkpoint });
            }
            let grads = backward_batch(passes, spec_seeds, jobs);
            let lr = warmup_cosine_lr(global_step, total_steps, warmup_steps, cfg.lr);
            adam.step(&mut flat, &grads, lr);
            model.params.unflatten(&flat);
            global_step += 1;
        }

        // Post-epoch metrics over both splits, same reduction as training.
        let train_losses = evaluate_losses(&model, &train_records, cfg.batch_size, jobs)?;
        let val_losses = evaluate_losses(&model, &val_records, cfg.batch_size, jobs)?;
        let wall = started.elapsed().as_secs_f64();
        metrics.push(MetricsRow {
            epoch,
            split: "train".into(),
            l_state: train_losses.state,
            l_action: train_losses.action,
            l_spec: train_losses.spec,
            l_total: train_losses.total,
            wall_time_s: wall,
        });
        metrics.push(MetricsRow {
            epoch,
            split: "val".into(),
            l_state: val_losses.state,
            l_action: val_losses.action,
            l_spec: val_losses.spec,
            l_total: val_losses.total,
            wall_time_s: wall,
        });

        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            let path = out_dir.join(format!("checkpoint_epoch{epoch}.ckpt"));
            save_checkpoint(&model, &path)?;
            last_checkpoint = Some(path);
        }
    }

    let checkpoint_path = out_dir.join("model.ckpt");
    let fingerprint = save_checkpoint(&model, &checkpoint_path)?;
    let metrics_path = out_dir.join("metrics.csv");
    std::fs::write(&metrics_path, metrics_to_csv(&metrics)).map_err(|e| TrainError::Io {
        path: metrics_path.display().to_string(),
        message: e.to_string(),
    })?;

    Ok(TrainOutput {
        checkpoint_path,
        fingerprint,
        metrics_path,
        metrics,
        train_count: train_records.len(),
        val_count: val_records.len(),
    })
}

// Number of batches the bucketing yields for a multiset of horizons.
fn batch_count(horizons: &[usize], batch_size: usize) -> u64 {
    use std::collections::BTreeMap;
    let mut per_n: BTreeMap<usize, usize> = BTreeMap::new();
    for h in horizons {
        *per_n.entry(*h).or_default() += 1;
    }
    per_n.values().map(|count| count.div_ceil(batch_size) as u64).sum()
}

// Same bucketing, but over positions of an already-ordered slice.
fn buckets_by_ref(ordered: &[&Prepared], batch_size: usize) -> Vec<Vec<usize>> {
    use std::collections::BTreeMap;
    let mut open: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, p) in ordered.iter().enumerate() {
        let bucket = open.entry(p.horizon).or_default();
        bucket.push(i);
        if bucket.len() == batch_size {
            out.push(std::mem::take(bucket));
        }
    }
    for (_, rest) in open {
        if !rest.is_empty() {
            out.push(rest);
        }
    }
    out
}
