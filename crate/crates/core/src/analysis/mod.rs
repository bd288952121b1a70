//! Offline analysis of runtime traces: validation, traffic matrices,
//! broadcast detection and protocol/ordering checks.

mod broadcast;
pub mod checks;
mod load;
mod matrix;
mod summary;

pub use broadcast::{detect_broadcast, BroadcastGroup, Destination};
pub use load::{load_trace, parse_trace, Trace, TraceError};
pub use matrix::{traffic_matrix, Cell, TrafficMatrix};
pub use summary::{render_text, summarize, Summary};
