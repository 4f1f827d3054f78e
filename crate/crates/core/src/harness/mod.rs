//! Scenario orchestration, export and the command line front end.

mod cli;
pub mod config;
pub mod export;
pub mod population;
pub mod sweep;

pub use cli::{cli_main, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK};
pub use config::{AssumptionPolicy, ConsensusConfig, SimConfig};
pub use export::{export_csv, export_json, export_sweep_csv, write_records_csv, write_sweep_csv, EPOCH_COLUMNS, SWEEP_COLUMNS};
pub use population::{run_game_batch, run_population_game, summarize, EpochRecord, GameRun, GameSummary};
pub use sweep::{run_bias_sweep, sample_sweep_graph, sweep_graph, Crossing, Plateau, SweepReport};
