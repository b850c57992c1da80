//! Delay-differential engine for the switched pendulum.

mod analysis;
mod history;
mod sim;

pub use analysis::{
    classify_oscillation, dead_zone_return_map, dead_zone_return_map_with, detect_short_off, one_oscillation, zigzag_return_map,
    zigzag_return_map_with, DeadZoneReturn, OscillationReturn, OscillationTag, ReturnMapError, ReturnOptions,
    ZigzagReturn,
};
pub use history::HistorySegment;
pub use sim::{
    simulate, simulate_with, EngineError, Event, EventKind, InitialHistory, SimConfig, SimResult, Simulator,
    Termination,
};
