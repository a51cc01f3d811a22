//! Deployment export: portable policy bundle, reference interpreter, C99 source
//! generation and parity checks.

pub mod bundle;
pub mod codegen;
pub mod interp;
pub mod parity;

pub use bundle::{flatten_policy, ExportBundle, LayerDesc};
pub use codegen::{emit_c_source, C_ENTRY};
pub use interp::{Interpreter, Workspace};
pub use parity::{parity_cases, parity_check, read_cases, write_cases, ParityCase, ParityReport};
