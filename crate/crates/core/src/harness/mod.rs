//! Configuration, eps sweeps with rate fits, layer studies and the
//! verification suite.

pub mod config;
pub mod fit;
pub mod layer;
pub mod plan;
pub mod verify;

pub use config::{BoundarySpec, CoefficientEntries, Config, ExperimentPlan, GridSection, RowNorm};
pub use fit::{fit_rate, Model, RateFit};
pub use layer::{l_shape_benchmark, layer_study, LayerReport, LayerRow};
pub use plan::{
    fit_report, run_plan, run_plan_with, LogComparison, PlanContext, RateReport, RateRow, Richardson, RowFailure,
    SlopeEntry, RICHARDSON_LIMIT,
};
pub use verify::{layer_area, verify_all, Check, Stage, Status, SuiteReport};
