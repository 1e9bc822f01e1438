//! Evaluation protocol: satisfaction-rate benchmarking over seeded initial
//! states, actuation audits, specification-perturbation studies, attention
//! export, and SVG plotting.

mod attn;
mod perturb;
mod plots;
mod satisfaction;

pub use attn::{export_attention, AttentionStats};
pub use perturb::{perturbation_study, PerturbRow, PerturbationReport};
pub use plots::{export_plots, trajectory_csv, trajectory_svg};
pub use satisfaction::{
    actuation_audit, satisfaction_rate, ActuationAudit, EvalError, EvalReport, RolloutRow,
};
