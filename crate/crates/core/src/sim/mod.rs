//! Multi-day grant-round simulator.
//!
//! Agents contribute day by day against the k announced the night before; pool
//! events fire at the start of their day and k is recomputed every night.

mod config;
mod engine;
mod output;

pub use config::{
    generate_population, AgentKind, AgentSpec, CategoryConfig, PoolEvent, PopulationSpec, ProjectValuation,
    RoundConfig,
};
pub use engine::{run_round, run_round_with_memory, run_rounds, DayRecord, RingMemory, RoundTrajectory};
pub use output::{
    deficit_curve, emit_panel, write_deficit_curve, write_k_series, write_panel, write_round_outputs, DeficitCurve,
    DeficitRow, RoundOutputs, PANEL_COLUMNS,
};
