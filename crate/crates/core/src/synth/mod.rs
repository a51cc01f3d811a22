//! Synthetic plasma-momentum plant standing in for archived discharges.

pub mod machine;
pub mod scenario;
pub mod session;
pub mod shot;
pub mod transport;

pub use machine::MachineParams;
pub use scenario::{PlasmaSettings, Program, ScenarioSpec, ACTUATOR_LIMITS};
pub use session::{generate_corpus, generate_sessions, make_session, CorpusManifest, Session};
pub use shot::{integrate_rotation, simulate_shot, Shot, SUBSTEPS_PER_FRAME};
pub use transport::{momentum_step, Transport};
