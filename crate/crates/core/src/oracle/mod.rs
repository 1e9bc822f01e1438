//! Dataset synthesis: smoothed-robustness gradient ascent over action
//! sequences, verified by the exact boolean monitor before anything is
//! emitted. Soundness comes from the verification pass; the optimizer only
//! proposes.

mod dataset;
mod plan;
mod stl_tape;

pub use dataset::{
    generate_dataset, records_from_jsonl, records_to_jsonl, verify_records, DatasetError,
    DatasetRecord, DatasetSummary, SpecSummary, VerifyError,
};
pub use plan::{plan, OracleConfig, OracleError, PlanOutcome};
pub use stl_tape::smooth_robustness_graph;
