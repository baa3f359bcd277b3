//! Rays, the `(x1, x2, p3)` Lagrangian chart and fold caustics for a smooth
//! background soundspeed.

mod cache;
mod caustic;
mod chart;
mod flow;
mod marine;
mod soundspeed;

pub use caustic::{
    fan_spreading_zeros, fold_caustic_scan, marine_critical_point, marine_fold_check, spreading_zero_near, CausticGrid,
    CausticKind, CausticPoint, FanSpec, MarineCritical, MarineFoldReport, SpreadingZero,
};
pub use chart::{chart_round_trip, lagrangian_chart, ChartOptions, ChartPoint, IncidentChart, TakeoffSeed};
pub use flow::{bicharacteristic_flow, flow_state, FlowOptions, FlowStop, RayState, Trajectory};
pub use soundspeed::{hamiltonian_value, Mat3, SoundspeedModel, SpeedField, Vec3};
pub use marine::{
    build_marine_relation, marine_chart, MarineEvaluator, MarineRelation, MarineSummary, MarineWindow, MARINE_PARAMS,
};
