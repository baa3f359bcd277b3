//! End-to-end verification runs shared by the command-line tool and the
//! acceptance tests. Each run returns a serializable report with a list of
//! named checks; the run passes iff every check does.

mod marine;
mod model;
mod weak;

use serde::Serialize;

pub use marine::{marine_verify, MarineVerifyOptions, MarineVerifyReport};
pub use model::{
    composition_containment, model_structure, model_verify, ContainmentReport, ModelVerifyOptions,
    ModelVerifyReport, StructureReport, TwoSidedSummary,
};
pub use weak::{compose_verify, default_perturbations, ComposeVerifyReport, PerturbationReport, WeakNormalSpec};

/// One named pass/fail decision with the measured value and its bound.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
    pub detail: String,
}

impl Check {
    /// Passes iff `value ≤ bound`.
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), pass: value <= bound, value, bound, detail: String::new() }
    }

    /// Passes iff `value ≥ bound`.
    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), pass: value >= bound, value, bound, detail: String::new() }
    }

    pub fn flag(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, value: f64::from(u8::from(pass)), bound: 1.0, detail: detail.into() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Names of the failing checks.
pub fn failing(checks: &[Check]) -> Vec<String> {
    checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect()
}
