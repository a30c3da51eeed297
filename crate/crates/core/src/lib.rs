//! Lifecycle-located data quality assessment for clinical EHR extracts.
//!
//! The crate places every data quality statement on the clinical data
//! lifecycle: which organization (data-generating or data-receiving), which
//! phase (generation, transformation, reuse) and which actor. It provides
//!
//! - [`taxonomy`]: organizations, phases, actors and the nine core parameters,
//! - [`notation`]: parser and canonical serializer for assertions such as
//!   `DGO-DG-Clinician (Completeness: 94%)`,
//! - [`ingest`]: manifests and typed CSV snapshots,
//! - [`assess`]: deterministic checks with optional per-actor strata,
//! - [`attribute`]: priority-ordered decision rules that assign failures to loci,
//! - [`report`]: coverage matrices and machine-readable reports,
//! - [`simulate`]: synthetic extracts with a ground-truth defect ledger,
//! - [`cli`]: the `lifecycle-dq` command line.

pub mod rational;
pub mod taxonomy;
pub mod notation;
pub mod ingest;
pub mod assess;
pub mod attribute;
pub mod report;
pub mod simulate;
pub mod cli;
