//! Validation studies of a full device against its fitted equivalent.

mod cases;
mod pv;
mod step;

pub use cases::{
    case_study, CaseId, CaseParams, CaseReport, CaseVariant, PeakMetrics, VariantKind,
    Z_FILTER_RANGE, Z_GFM_RANGE,
};
pub use pv::{pv_equivalent_emf, pv_trace, PvConfig, PvCurve, PvSubject, PvTermination};
pub use step::{
    default_step_event, equivalent_model, step_compare, StepStudyResult, StepSummary,
    OPERATING_POINT_TOL,
};
