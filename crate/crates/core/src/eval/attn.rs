//! Attention matrix export: one CSV per (layer, head), one per cross
//! head, with rows/columns labeled by token kind, plus summary statistics of
//! attention mass landing on SPEC columns.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Shape, Tape};
use crate::model::{Model, ModelError, Phase, SampleInput, SpecConditioning};
use crate::stl::Formula;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionStats {
    /// Per (layer, head): mean over query rows of total weight on SPEC columns.
    pub spec_mass_per_head: Vec<SpecMass>,
    /// Mean of `spec_mass` over all self-attention heads.
    pub mean_spec_mass: f64,
    /// Fraction of sequence positions that are SPEC slots (the uniform-
    /// attention baseline for the masses above).
    pub spec_column_fraction: f64,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecMass {
    pub layer: usize,
    pub head: usize,
    pub spec_mass: f64,
}

/// Runs one captured forward pass over a trajectory sample and writes the
/// attention matrices as labeled CSVs into `out_dir`.
pub fn export_attention<T: Real>(
    model: &Model<T>,
    f: &Formula,
    states: &[[f64; 4]],
    actions: &[[f64; 2]],
    out_dir: &Path,
) -> Result<AttentionStats, ModelError> {
    let token_ids = model.tokenize(f)?;
    let token_labels: Vec<String> =
        token_ids.iter().map(|id| model.vocab.token(*id).to_string()).collect();
    let n = actions.len();
    let input = SampleInput {
        spec: SpecConditioning::Tokens(token_ids),
        states: states[..n.min(states.len())].to_vec(),
        actions: actions.to_vec(),
    };
    let mut tape: Tape<T> = Tape::new();
    let bound = model.bind(&mut tape);
    let out = model.forward(&mut tape, &bound, &input, &mut Phase::Eval, true)?;

    std::fs::create_dir_all(out_dir).map_err(|e| {
        ModelError::BadInput(format!("cannot create {}: {e}", out_dir.display()))
    })?;

    let seq_labels = crate::model::position_labels(input.states.len(), input.actions.len());
    let mut files = Vec::new();
    let mut masses = Vec::new();
    for ((layer, head), id) in &out.self_attention {
        let Shape(rows, cols) = tape.shape(*id);
        let data: Vec<f64> = tape.value(*id).iter().map(|v| v.as_f64()).collect();
        let csv = matrix_csv(&data, rows, cols, &seq_labels, &seq_labels);
        let path = out_dir.join(format!("self_attn_layer{layer}_head{head}.csv"));
        std::fs::write(&path, csv)
            .map_err(|e| ModelError::BadInput(format!("write {}: {e}", path.display())))?;
        files.push(path);
        masses.push(SpecMass {
            layer: *layer,
            head: *head,
            spec_mass: spec_mass(&data, rows, cols, &seq_labels),
        });
    }
    for (head, id) in &out.cross_attention {
        let Shape(rows, cols) = tape.shape(*id);
        let data: Vec<f64> = tape.value(*id).iter().map(|v| v.as_f64()).collect();
        let csv = matrix_csv(&data, rows, cols, &token_labels, &seq_labels);
        let path = out_dir.join(format!("cross_attn_head{head}.csv"));
        std::fs::write(&path, csv)
            .map_err(|e| ModelError::BadInput(format!("write {}: {e}", path.display())))?;
        files.push(path);
    }

    let mean = if masses.is_empty() {
        0.0
    } else {
        masses.iter().map(|m| m.spec_mass).sum::<f64>() / masses.len() as f64
    };
    let spec_cols = seq_labels.iter().filter(|l| l.starts_with("SPEC_")).count();
    Ok(AttentionStats {
        spec_mass_per_head: masses,
        mean_spec_mass: mean,
        spec_column_fraction: spec_cols as f64 / seq_labels.len() as f64,
        files,
    })
}

fn matrix_csv(
    data: &[f64],
    rows: usize,
    cols: usize,
    row_labels: &[String],
    col_labels: &[String],
) -> String {
    let mut out = String::new();
    out.push_str("query");
    for label in col_labels.iter().take(cols) {
        let _ = write!(out, ",{label}");
    }
    out.push('\n');
    for i in 0..rows {
        out.push_str(row_labels.get(i).map(String::as_str).unwrap_or("?"));
        for j in 0..cols {
            let _ = write!(out, ",{:.6}", data[i * cols + j]);
        }
        out.push('\n');
    }
    out
}

fn spec_mass(data: &[f64], rows: usize, cols: usize, labels: &[String]) -> f64 {
    let spec_cols: Vec<usize> = (0..cols).filter(|j| labels[*j].starts_with("SPEC_")).collect();
    let mut total = 0.0;
    for i in 0..rows {
        for j in &spec_cols {
            total += data[i * cols + j];
        }
    }
    total / rows as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvironmentSpec;
    use crate::model::ModelConfig;
    use crate::stl::{parse, Vocab};

    #[test]
    fn export_writes_labeled_matrices_and_stats() {
        let env = EnvironmentSpec::default_world();
        let vocab = Vocab::build(32, &env.region_names());
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 2,
            d_tok: 8,
            h_max: 32,
            max_spec_tokens: 64,
            dropout: 0.0,
            ablation: false,
        };
        let model: Model<f64> = Model::new(cfg, vocab, 3).unwrap();
        let f = parse("F[0,3](R1)").unwrap();
        let states: Vec<[f64; 4]> = (0..4).map(|t| [t as f64, 1.0, 0.5, 0.0]).collect();
        let actions: Vec<[f64; 2]> = (0..3).map(|_| [0.2, 0.0]).collect();
        let dir = std::env::temp_dir().join(format!("pastel-attn-{}", std::process::id()));
        let stats = export_attention(&model, &f, &states, &actions, &dir).unwrap();
        // 2 layers x 2 heads self + 2 cross heads.
        assert_eq!(stats.files.len(), 6);
        assert_eq!(stats.spec_mass_per_head.len(), 4);
        for m in &stats.spec_mass_per_head {
            assert!((0.0..=1.0 + 1e-9).contains(&m.spec_mass));
        }
        let csv = std::fs::read_to_string(&stats.files[0]).unwrap();
        assert!(csv.starts_with("query,SPEC_0,STATE_0,ACTION_0,"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
