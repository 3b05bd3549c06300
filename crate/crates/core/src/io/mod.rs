//! File formats: scene descriptions, WAV audio, operator containers and reports.

pub mod matrix;
pub mod report;
pub mod scene_file;
pub mod wav;

pub use matrix::{read_operator, write_operator, OperatorSidecar};
pub use report::{write_csv, write_json, MetricRow};
pub use scene_file::{parse_scene, read_scene, GridSpec, SceneConfig, SignalSpec, SourceSpec};
pub use wav::{read_wav, write_wav};
