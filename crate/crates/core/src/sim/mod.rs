//! Session simulation: click model, phase tracking, per-window Monte Carlo
//! and count-level sampling.

pub mod cells;
pub mod clicks;
pub mod phase;
pub mod session;

pub use cells::{expected_tally, sample_tally, CellModel, TallyTruth};
pub use clicks::{click_probabilities, Detection};
pub use phase::{estimate_phase, phase_walk, PhaseModel, Schedule};
pub use session::{simulate_session, simulate_tally, HeraldEvent, SessionConfig, SessionTruth};
