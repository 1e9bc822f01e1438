use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::autodiff::{Real, Shape, Tape, TensorId};
use crate::stl::{linearize, Formula, TokenError, TraversalStyle, Vocab, WordForm};

use super::params::{BoundParams, ParamSet};
use super::{ModelConfig, SpecConditioning};

const LN_EPS: f64 = 1e-5;
const MASKED: f64 = -1e9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config invalid: {0}")]
    Config(String),
    #[error("sequence horizon {n} exceeds model capacity h_max={h_max}")]
    HorizonCapacity { n: usize, h_max: usize },
    #[error("inputs inconsistent: {0}")]
    BadInput(String),
    #[error(transparent)]
    Token(#[from] TokenError),
}

/// One trajectory sample as the network consumes it: `states.len()` is the
/// number of (SPEC, STATE) pairs, `actions.len()` either equals it (full
/// triplets, training) or is one less (rollout query for the next action).
#[derive(Debug, Clone)]
pub struct SampleInput {
    pub spec: SpecConditioning,
    pub states: Vec<[f64; 4]>,
    pub actions: Vec<[f64; 2]>,
}

/// Dropout phase. `Train` consumes the rng even when masks are all-keep, so
/// batch determinism does not depend on dropout probability.
pub enum Phase<'a> {
    Train(&'a mut ChaCha12Rng),
    Eval,
}

pub struct ForwardOutput {
    /// Predicted actions at STATE positions, `[n_states, 2]`.
    pub actions_hat: TensorId,
    /// Predicted next states at ACTION positions, `[n_actions, 4]`.
    pub states_hat: TensorId,
    /// Backbone rows after the final norm, `[S, d_model]`.
    pub backbone: TensorId,
    /// Pooled specification embedding (the repeated SPEC token), `[1, d_model]`.
    pub spec_pooled: TensorId,
    /// Projected per-token specification embeddings (cross-attention queries).
    pub spec_rows: Option<TensorId>,
    /// Cross-attention output rows `[L, d_model]` and their mean.
    pub cross_rows: Option<TensorId>,
    pub cross_pooled: Option<TensorId>,
    /// Self-attention weights per (layer, head), `[S, S]`; captured on demand.
    pub self_attention: Vec<((usize, usize), TensorId)>,
    /// Cross-attention weights per head, `[L, S]`; captured on demand.
    pub cross_attention: Vec<(usize, TensorId)>,
}

pub struct Model<T: Real> {
    pub cfg: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamSet<T>,
}

impl<T: Real> Model<T> {
    /// Fresh model with seeded init. The parameter layout is identical for
    /// PASTEL and the PACT ablation, so checkpoints stay interchangeable.
    pub fn new(cfg: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self, ModelError> {
        cfg.validate().map_err(ModelError::Config)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let d = cfg.d_model;
        let dh = cfg.head_dim();
        let dt = cfg.d_tok;
        let v = vocab.len();
        let ff = 4 * d;

        let mut normal = |shape: Shape, params: &mut ParamSet<T>, name: &str| {
            let data = (0..shape.numel()).map(|_| T::from_f64(0.02 * normal01(&mut rng))).collect();
            params.register(name, shape, data);
        };
        let zeros = |shape: Shape, params: &mut ParamSet<T>, name: &str| {
            params.register(name, shape, vec![T::zero(); shape.numel()]);
        };
        let ones = |shape: Shape, params: &mut ParamSet<T>, name: &str| {
            params.register(name, shape, vec![T::one(); shape.numel()]);
        };

        normal(Shape(v, dt), &mut params, "tok_embed");
        normal(Shape(cfg.max_spec_tokens, dt), &mut params, "spec_pos_embed");
        normal(Shape(dt, d), &mut params, "spec_proj.w1");
        zeros(Shape(1, d), &mut params, "spec_proj.b1");
        normal(Shape(d, d), &mut params, "spec_proj.w2");
        zeros(Shape(1, d), &mut params, "spec_proj.b2");
        normal(Shape(1, d), &mut params, "null_token");
        normal(Shape(4, d), &mut params, "state_enc.w1");
        zeros(Shape(1, d), &mut params, "state_enc.b1");
        normal(Shape(d, d), &mut params, "state_enc.w2");
        zeros(Shape(1, d), &mut params, "state_enc.b2");
        normal(Shape(2, d), &mut params, "action_enc.w1");
        zeros(Shape(1, d), &mut params, "action_enc.b1");
        normal(Shape(d, d), &mut params, "action_enc.w2");
        zeros(Shape(1, d), &mut params, "action_enc.b2");
        normal(Shape(3 * cfg.h_max, d), &mut params, "pos_embed");
        for l in 0..cfg.n_layers {
            ones(Shape(1, d), &mut params, &format!("layer{l}.ln1.g"));
            zeros(Shape(1, d), &mut params, &format!("layer{l}.ln1.b"));
            for h in 0..cfg.n_heads {
                normal(Shape(d, dh), &mut params, &format!("layer{l}.head{h}.wq"));
                normal(Shape(d, dh), &mut params, &format!("layer{l}.head{h}.wk"));
                normal(Shape(d, dh), &mut params, &format!("layer{l}.head{h}.wv"));
                normal(Shape(dh, d), &mut params, &format!("layer{l}.head{h}.wo"));
            }
            zeros(Shape(1, d), &mut params, &format!("layer{l}.attn.bo"));
            ones(Shape(1, d), &mut params, &format!("layer{l}.ln2.g"));
            zeros(Shape(1, d), &mut params, &format!("layer{l}.ln2.b"));
            normal(Shape(d, ff), &mut params, &format!("layer{l}.ffn.w1"));
            zeros(Shape(1, ff), &mut params, &format!("layer{l}.ffn.b1"));
            normal(Shape(ff, d), &mut params, &format!("layer{l}.ffn.w2"));
            zeros(Shape(1, d), &mut params, &format!("layer{l}.ffn.b2"));
        }
        ones(Shape(1, d), &mut params, "final_ln.g");
        zeros(Shape(1, d), &mut params, "final_ln.b");
        normal(Shape(d, d), &mut params, "action_head.w1");
        zeros(Shape(1, d), &mut params, "action_head.b1");
        normal(Shape(d, 2), &mut params, "action_head.w2");
        zeros(Shape(1, 2), &mut params, "action_head.b2");
        normal(Shape(d, d), &mut params, "state_head.w1");
        zeros(Shape(1, d), &mut params, "state_head.b1");
        normal(Shape(d, 4), &mut params, "state_head.w2");
        zeros(Shape(1, 4), &mut params, "state_head.b2");
        for h in 0..cfg.n_heads {
            normal(Shape(d, dh), &mut params, &format!("cross.head{h}.wq"));
            normal(Shape(d, dh), &mut params, &format!("cross.head{h}.wk"));
            normal(Shape(d, dh), &mut params, &format!("cross.head{h}.wv"));
            normal(Shape(dh, d), &mut params, &format!("cross.head{h}.wo"));
        }
        zeros(Shape(1, d), &mut params, "cross.bo");
        ones(Shape(1, d), &mut params, "cross_ln.g");
        zeros(Shape(1, d), &mut params, "cross_ln.b");

        Ok(Model { cfg, vocab, params })
    }

    /// Canonical tokenization: in-order symbol stream encoded by the
    /// vocabulary. Fails on out-of-vocabulary region names or interval bounds
    /// beyond `h_max`.
    pub fn tokenize(&self, f: &Formula) -> Result<Vec<usize>, ModelError> {
        if f.horizon() > self.cfg.h_max {
            return Err(ModelError::HorizonCapacity { n: f.horizon(), h_max: self.cfg.h_max });
        }
        let stream = linearize(f, TraversalStyle::InOrder, WordForm::Symbol)?;
        if stream.len() > self.cfg.max_spec_tokens {
            return Err(ModelError::BadInput(format!(
                "specification has {} tokens, capacity is {}",
                stream.len(),
                self.cfg.max_spec_tokens
            )));
        }
        Ok(self.vocab.encode(&stream)?)
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        self.params.bind(tape)
    }

    fn p(&self, bound: &BoundParams, name: &str) -> TensorId {
        bound.ids[self.params.index_of(name)]
    }

    /// Forward pass over one sample. `capture` materializes attention
    /// matrices for export.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        input: &SampleInput,
        phase: &mut Phase,
        capture: bool,
    ) -> Result<ForwardOutput, ModelError> {
        let n_states = input.states.len();
        let n_actions = input.actions.len();
        if n_states == 0 {
            return Err(ModelError::BadInput("at least one state required".into()));
        }
        if n_actions != n_states && n_actions + 1 != n_states {
            return Err(ModelError::BadInput(format!(
                "{n_actions} actions incompatible with {n_states} states"
            )));
        }
        if n_states > self.cfg.h_max {
            return Err(ModelError::HorizonCapacity { n: n_states, h_max: self.cfg.h_max });
        }

        // Specification path.
        let (spec_pooled, spec_rows) = match (&input.spec, self.cfg.ablation) {
            (SpecConditioning::Tokens(ids), false) => {
                if ids.is_empty() {
                    return Err(ModelError::BadInput("empty specification token list".into()));
                }
                if ids.len() > self.cfg.max_spec_tokens {
                    return Err(ModelError::BadInput(format!(
                        "specification has {} tokens, capacity is {}",
                        ids.len(),
                        self.cfg.max_spec_tokens
                    )));
                }
                let table = self.p(bound, "tok_embed");
                let tok = tape.gather_rows(table, ids);
                let pos_table = self.p(bound, "spec_pos_embed");
                let pos = tape.slice_rows(pos_table, 0..ids.len());
                let tok = tape.add(tok, pos);
                let h = self.linear(tape, bound, tok, "spec_proj.w1", "spec_proj.b1");
                let h = tape.gelu(h);
                let rows = self.linear(tape, bound, h, "spec_proj.w2", "spec_proj.b2");
                let l = ids.len();
                let pool =
                    tape.constant(Shape(1, l), vec![T::from_f64(1.0 / l as f64); l]);
                let pooled = tape.matmul(pool, rows);
                (pooled, Some(rows))
            }
            _ => (self.p(bound, "null_token"), None),
        };

        // State/action encoders.
        let states_flat: Vec<T> =
            input.states.iter().flatten().map(|v| T::from_f64(*v)).collect();
        let states_in = tape.constant(Shape(n_states, 4), states_flat);
        let state_emb = {
            let h = self.linear(tape, bound, states_in, "state_enc.w1", "state_enc.b1");
            let h = tape.gelu(h);
            self.linear(tape, bound, h, "state_enc.w2", "state_enc.b2")
        };
        let action_emb = if n_actions > 0 {
            let actions_flat: Vec<T> =
                input.actions.iter().flatten().map(|v| T::from_f64(*v)).collect();
            let actions_in = tape.constant(Shape(n_actions, 2), actions_flat);
            let h = self.linear(tape, bound, actions_in, "action_enc.w1", "action_enc.b1");
            let h = tape.gelu(h);
            Some(self.linear(tape, bound, h, "action_enc.w2", "action_enc.b2"))
        } else {
            None
        };

        // Interleave: (SPEC_t, STATE_t, ACTION_t) triplets via one gather.
        let mut blocks = vec![spec_pooled, state_emb];
        if let Some(a) = action_emb {
            blocks.push(a);
        }
        let base = tape.concat_rows(&blocks);
        let mut pattern = Vec::with_capacity(2 * n_states + n_actions);
        for t in 0..n_states {
            pattern.push(0);
            pattern.push(1 + t);
            if t < n_actions {
                pattern.push(1 + n_states + t);
            }
        }
        let seq_len = pattern.len();
        let tokens = tape.gather_rows(base, &pattern);
        let pos_table = self.p(bound, "pos_embed");
        let pos = tape.slice_rows(pos_table, 0..seq_len);
        let x = tape.add(tokens, pos);
        let mut x = self.dropout(tape, x, phase);

        // Causal mask constant: position i attends to j <= i.
        let mut mask_data = vec![T::zero(); seq_len * seq_len];
        for i in 0..seq_len {
            for j in (i + 1)..seq_len {
                mask_data[i * seq_len + j] = T::from_f64(MASKED);
            }
        }
        let mask = tape.constant(Shape(seq_len, seq_len), mask_data);

        let mut self_attention = Vec::new();
        for l in 0..self.cfg.n_layers {
            let normed = self.layer_norm(tape, bound, x, &format!("layer{l}.ln1"));
            let attn_out = self.attention(
                tape,
                bound,
                normed,
                normed,
                &format!("layer{l}.head"),
                Some(mask),
                capture.then_some((l, &mut self_attention)),
            );
            let attn_out = {
                let biased = tape.add_bias(attn_out, self.p(bound, &format!("layer{l}.attn.bo")));
                self.dropout(tape, biased, phase)
            };
            x = tape.add(x, attn_out);
            let normed = self.layer_norm(tape, bound, x, &format!("layer{l}.ln2"));
            let ff = {
                let h = self.linear(
                    tape,
                    bound,
                    normed,
                    &format!("layer{l}.ffn.w1"),
                    &format!("layer{l}.ffn.b1"),
                );
                let h = tape.gelu(h);
                let h = self.linear(
                    tape,
                    bound,
                    h,
                    &format!("layer{l}.ffn.w2"),
                    &format!("layer{l}.ffn.b2"),
                );
                self.dropout(tape, h, phase)
            };
            x = tape.add(x, ff);
        }
        let backbone = self.layer_norm(tape, bound, x, "final_ln");

        // Prediction heads read backbone rows at STATE / ACTION positions.
        let state_positions: Vec<usize> = (0..n_states).map(|t| row_of(t, n_actions, 1)).collect();
        let action_positions: Vec<usize> = (0..n_actions).map(|t| row_of(t, n_actions, 2)).collect();
        let state_rows = tape.gather_rows(backbone, &state_positions);
        let actions_hat = {
            let h = self.linear(tape, bound, state_rows, "action_head.w1", "action_head.b1");
            let h = tape.gelu(h);
            self.linear(tape, bound, h, "action_head.w2", "action_head.b2")
        };
        let states_hat = if n_actions > 0 {
            let rows = tape.gather_rows(backbone, &action_positions);
            let h = self.linear(tape, bound, rows, "state_head.w1", "state_head.b1");
            let h = tape.gelu(h);
            self.linear(tape, bound, h, "state_head.w2", "state_head.b2")
        } else {
            tape.constant(Shape(0, 4), Vec::new())
        };

        // Specification cross-attention: queries are the projected spec
        // tokens, keys/values the full backbone; normalization on outputs.
        let mut cross_attention = Vec::new();
        let (cross_rows, cross_pooled) = match spec_rows {
            Some(queries) if !self.cfg.ablation => {
                let out = self.attention(tape, bound, queries, backbone, "cross.head", None, None);
                let out = tape.add_bias(out, self.p(bound, "cross.bo"));
                let rows = self.layer_norm(tape, bound, out, "cross_ln");
                let l = tape.shape(rows).0;
                let pool = tape.constant(Shape(1, l), vec![T::from_f64(1.0 / l as f64); l]);
                let pooled = tape.matmul(pool, rows);
                (Some(rows), Some(pooled))
            }
            _ => (None, None),
        };
        // Capture cross-attention weights separately (simpler than routing
        // through the shared helper's layer index).
        if capture && cross_rows.is_some() {
            if let Some(queries) = spec_rows {
                for h in 0..self.cfg.n_heads {
                    let a = self.attention_weights(
                        tape,
                        bound,
                        queries,
                        backbone,
                        &format!("cross.head{h}"),
                        None,
                    );
                    cross_attention.push((h, a));
                }
            }
        }

        Ok(ForwardOutput {
            actions_hat,
            states_hat,
            backbone,
            spec_pooled,
            spec_rows,
            cross_rows,
            cross_pooled,
            self_attention,
            cross_attention,
        })
    }

    fn linear(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        x: TensorId,
        w: &str,
        b: &str,
    ) -> TensorId {
        let y = tape.matmul(x, self.p(bound, w));
        tape.add_bias(y, self.p(bound, b))
    }

    fn layer_norm(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        x: TensorId,
        prefix: &str,
    ) -> TensorId {
        let normed = tape.layer_norm_rows(x, T::from_f64(LN_EPS));
        let scaled = tape.mul_rows(normed, self.p(bound, &format!("{prefix}.g")));
        tape.add_bias(scaled, self.p(bound, &format!("{prefix}.b")))
    }

    fn attention_weights(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        queries: TensorId,
        keys: TensorId,
        head_prefix: &str,
        mask: Option<TensorId>,
    ) -> TensorId {
        let dh = self.cfg.head_dim();
        let q = tape.matmul(queries, self.p(bound, &format!("{head_prefix}.wq")));
        let k = tape.matmul(keys, self.p(bound, &format!("{head_prefix}.wk")));
        let kt = tape.transpose(k);
        let scores = tape.matmul(q, kt);
        let scores = tape.scale(scores, T::from_f64(1.0 / (dh as f64).sqrt()));
        let scores = match mask {
            Some(m) => tape.add(scores, m),
            None => scores,
        };
        tape.softmax_rows(scores)
    }

    // Multi-head attention; output projections are summed over heads
    // (equivalent to concat + single projection).
    #[allow(clippy::too_many_arguments)]
    fn attention(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        queries: TensorId,
        keys: TensorId,
        head_base: &str,
        mask: Option<TensorId>,
        capture: Option<(usize, &mut Vec<((usize, usize), TensorId)>)>,
    ) -> TensorId {
        let mut out = None;
        let mut cap = capture;
        for h in 0..self.cfg.n_heads {
            let prefix = format!("{head_base}{h}");
            let weights = self.attention_weights(tape, bound, queries, keys, &prefix, mask);
            if let Some((layer, store)) = cap.as_mut() {
                store.push(((*layer, h), weights));
            }
            let v = tape.matmul(keys, self.p(bound, &format!("{prefix}.wv")));
            let ctx = tape.matmul(weights, v);
            let proj = tape.matmul(ctx, self.p(bound, &format!("{prefix}.wo")));
            out = Some(match out {
                None => proj,
                Some(acc) => tape.add(acc, proj),
            });
        }
        out.expect("at least one head")
    }

    fn dropout(&self, tape: &mut Tape<T>, x: TensorId, phase: &mut Phase) -> TensorId {
        match phase {
            Phase::Eval => x,
            Phase::Train(rng) => {
                let p = self.cfg.dropout;
                let numel = tape.shape(x).numel();
                let keep = T::from_f64(1.0 / (1.0 - p));
                let mask: Vec<T> = (0..numel)
                    .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
                    .collect();
                if p == 0.0 {
                    return x;
                }
                let shape = tape.shape(x);
                let m = tape.constant(shape, mask);
                tape.mul(x, m)
            }
        }
    }
}

/// Sequence row index of timestep `t`'s SPEC (0), STATE (1) or ACTION (2)
/// slot, for a prefix with `n_actions` action rows.
fn row_of(t: usize, n_actions: usize, kind: usize) -> usize {
    // Triplets are complete for t < n_actions; the last (t == n_actions)
    // group has only SPEC and STATE rows.
    debug_assert!(kind <= 2);
    3 * t.min(n_actions) + (t.saturating_sub(n_actions)) * 2 + kind
}

/// Kind labels for sequence rows, for attention export.
pub fn position_labels(n_states: usize, n_actions: usize) -> Vec<String> {
    let mut labels = Vec::new();
    for t in 0..n_states {
        labels.push(format!("SPEC_{t}"));
        labels.push(format!("STATE_{t}"));
        if t < n_actions {
            labels.push(format!("ACTION_{t}"));
        }
    }
    labels
}

fn normal01(rng: &mut ChaCha12Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse;

    fn test_vocab() -> Vocab {
        Vocab::build(32, &["R1".into(), "R2".into(), "R3".into(), "O1".into()])
    }

    fn tiny_cfg() -> ModelConfig {
        ModelConfig { d_model: 16, n_heads: 2, n_layers: 2, d_tok: 8, h_max: 8, max_spec_tokens: 64, dropout: 0.0, ablation: false }
    }

    fn sample(n: usize, with_last_action: bool, model: &Model<f64>) -> SampleInput {
        let f = parse("F[0,4](R1)").unwrap();
        let ids = model.tokenize(&f).unwrap();
        SampleInput {
            spec: SpecConditioning::Tokens(ids),
            states: (0..n).map(|t| [t as f64 * 0.1, 0.2, 0.0, 0.1]).collect(),
            actions: (0..if with_last_action { n } else { n - 1 })
                .map(|t| [0.05 * t as f64, -0.02])
                .collect(),
        }
    }

    #[test]
    fn forward_shapes_match_the_layout_contract() {
        let model: Model<f64> = Model::new(tiny_cfg(), test_vocab(), 1).unwrap();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let input = sample(5, true, &model);
        let out = model.forward(&mut tape, &bound, &input, &mut Phase::Eval, false).unwrap();
        assert_eq!(tape.shape(out.actions_hat), Shape(5, 2));
        assert_eq!(tape.shape(out.states_hat), Shape(5, 4));
        assert_eq!(tape.shape(out.backbone), Shape(15, 16));
        assert_eq!(tape.shape(out.spec_pooled), Shape(1, 16));
        let l = input_len(&input);
        assert_eq!(tape.shape(out.cross_rows.unwrap()), Shape(l, 16));
        assert_eq!(tape.shape(out.cross_pooled.unwrap()), Shape(1, 16));
    }

    fn input_len(input: &SampleInput) -> usize {
        match &input.spec {
            SpecConditioning::Tokens(ids) => ids.len(),
            SpecConditioning::Null => 0,
        }
    }

    #[test]
    fn ablation_drops_cross_attention_but_stays_well_formed() {
        let cfg = ModelConfig { ablation: true, ..tiny_cfg() };
        let model: Model<f64> = Model::new(cfg, test_vocab(), 1).unwrap();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let input = sample(4, true, &model);
        let out = model.forward(&mut tape, &bound, &input, &mut Phase::Eval, false).unwrap();
        assert!(out.cross_rows.is_none());
        assert!(out.cross_pooled.is_none());
        assert_eq!(tape.shape(out.actions_hat), Shape(4, 2));
    }

    #[test]
    fn ablation_backbone_equals_pastel_backbone_on_null_spec() {
        let vocab = test_vocab();
        let pastel: Model<f64> = Model::new(tiny_cfg(), vocab.clone(), 7).unwrap();
        let pact: Model<f64> =
            Model::new(ModelConfig { ablation: true, ..tiny_cfg() }, vocab, 7).unwrap();
        // Same seed -> identical parameters (layout is mode-independent).
        let mut input = sample(4, true, &pastel);
        input.spec = SpecConditioning::Null;

        let mut t1 = Tape::new();
        let b1 = pastel.bind(&mut t1);
        let o1 = pastel.forward(&mut t1, &b1, &input, &mut Phase::Eval, false).unwrap();
        let mut t2 = Tape::new();
        let b2 = pact.bind(&mut t2);
        let o2 = pact.forward(&mut t2, &b2, &input, &mut Phase::Eval, false).unwrap();

        assert_eq!(t1.value(o1.backbone), t2.value(o2.backbone));
        assert_eq!(t1.value(o1.actions_hat), t2.value(o2.actions_hat));
        assert_eq!(t1.value(o1.states_hat), t2.value(o2.states_hat));
    }

    #[test]
    fn causal_mask_blocks_future_influence() {
        for n_layers in 1..=3 {
            let cfg = ModelConfig { n_layers, ..tiny_cfg() };
            let model: Model<f64> = Model::new(cfg, test_vocab(), 5).unwrap();
            let base = sample(6, true, &model);
            let mut perturbed = base.clone();
            // Perturb states and actions from timestep 3 onward.
            for t in 3..6 {
                perturbed.states[t][0] += 1.5;
                perturbed.actions[t][1] -= 0.7;
            }
            let run = |input: &SampleInput| {
                let mut tape = Tape::new();
                let bound = model.bind(&mut tape);
                let out = model.forward(&mut tape, &bound, input, &mut Phase::Eval, false).unwrap();
                (
                    tape.value(out.actions_hat).to_vec(),
                    tape.value(out.states_hat).to_vec(),
                )
            };
            let (a0, s0) = run(&base);
            let (a1, s1) = run(&perturbed);
            // Outputs at sequence positions < 3t correspond to rows tau < t.
            for tau in 0..3 {
                assert_eq!(a0[tau * 2..tau * 2 + 2], a1[tau * 2..tau * 2 + 2], "layer count {n_layers}");
                assert_eq!(s0[tau * 4..tau * 4 + 4], s1[tau * 4..tau * 4 + 4], "layer count {n_layers}");
            }
            // And the perturbation does reach later rows.
            assert_ne!(a0, a1);
        }
    }

    #[test]
    fn attention_rows_are_convex_combinations() {
        let model: Model<f64> = Model::new(tiny_cfg(), test_vocab(), 3).unwrap();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let input = sample(4, true, &model);
        let out = model.forward(&mut tape, &bound, &input, &mut Phase::Eval, true).unwrap();
        assert!(!out.self_attention.is_empty());
        for ((_, _), id) in &out.self_attention {
            let Shape(rows, cols) = tape.shape(*id);
            let data = tape.value(*id);
            for i in 0..rows {
                let sum: f64 = data[i * cols..(i + 1) * cols].iter().sum();
                assert!((sum - 1.0).abs() < 1e-6, "row sum {sum}");
            }
        }
        for (_, id) in &out.cross_attention {
            let Shape(rows, cols) = tape.shape(*id);
            let data = tape.value(*id);
            for i in 0..rows {
                let sum: f64 = data[i * cols..(i + 1) * cols].iter().sum();
                assert!((sum - 1.0).abs() < 1e-6, "cross row sum {sum}");
            }
        }
    }

    #[test]
    fn tokenize_is_deterministic_and_distinct_across_specs() {
        let model: Model<f64> = Model::new(tiny_cfg(), test_vocab(), 2).unwrap();
        let f2 = parse("F[0,4](G[0,3](R1)) & G[0,8](!O1)").unwrap();
        let f3 = parse("F[0,4](R1 & F[0,4](R2))").unwrap();
        assert_eq!(model.tokenize(&f2).unwrap(), model.tokenize(&f2).unwrap());
        assert_ne!(model.tokenize(&f2).unwrap(), model.tokenize(&f3).unwrap());
    }

    #[test]
    fn horizon_capacity_is_enforced() {
        let model: Model<f64> = Model::new(tiny_cfg(), test_vocab(), 2).unwrap();
        let f = parse("F[0,30](R1)").unwrap();
        assert!(matches!(model.tokenize(&f), Err(ModelError::HorizonCapacity { .. })));
    }
}
