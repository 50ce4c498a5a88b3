//! Deterministic discrete-event simulation: clock and event queue, 3-D
//! Gauss-Markov mobility, link and energy models, fault/attack injection,
//! scenario validation, and report generation.

pub mod energy;
pub mod engine;
pub mod events;
pub mod link;
pub mod mobility;
pub mod presets;
pub mod report;
pub mod scenario;

pub use energy::{EnergyMeter, EnergyParams, UavEnergy};
pub use engine::{run, sub_rng};
pub use events::EventQueue;
pub use link::{in_range, link_delay_ms, LinkParams};
pub use mobility::{CylinderBounds, MobilityParams, MobilityState};
pub use report::RunReport;
pub use scenario::{FaultEvent, FaultKind, InvalidScenario, Scenario, Target};
