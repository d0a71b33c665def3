//! Episode driver and multi-realization experiments.

pub mod episode;
pub mod experiment;

pub use episode::{
    read_frame_rows, realization_topology, replay_check, run_episode, EpisodeLog, EpisodeOptions,
    EpisodeSummary, FrameRow, FRAME_LOG_HEADER,
};
pub use experiment::{
    aggregate, run_experiment, write_experiment_csv, write_outputs, ExperimentKind,
    ExperimentOutput, ExperimentRow, ExperimentSpec, Manifest, PlotTable, EXPERIMENT_HEADER,
};
