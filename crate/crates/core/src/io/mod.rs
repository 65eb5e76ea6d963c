//! Persistence: dataset and checkpoint files, run configuration, CSV output.

mod atomic;
mod binary;
mod checkpoint;
mod csv;
mod dataset_file;
mod run_config;

pub use atomic::write_atomic;
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, LogDigest, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use csv::{opt, CsvTable};
pub use dataset_file::{
    decode_dataset, read_dataset, write_dataset, DatasetContents, DatasetHeader, DatasetWriter, DATASET_MAGIC,
    DATASET_VERSION,
};
pub use run_config::{
    parse_train_config, render_train_config, BenchSettings, LandscapeSettings, NoiseSettings, RunConfig,
};
