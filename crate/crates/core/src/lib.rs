//! Continuous piano-rolls, monotone alignment functions, temporal and
//! note-based alignment metrics, tempo-regularized ground-truth alignment and
//! feature-based baseline aligners.

mod dtw;

pub mod alignment;
pub mod error;
pub mod features;
pub mod fixtures;
pub mod groundtruth;
pub mod io;
pub mod metrics;
pub mod midi;
pub mod pianoroll;
pub mod svg;
pub mod warp;

pub use alignment::{AlignmentFn, Knot, WarpPath};
pub use error::{Error, Result};
pub use features::{FeatureKind, Waveform};
pub use groundtruth::{GtConfig, GtResult};
pub use metrics::MetricReport;
pub use pianoroll::{NoteEvent, NoteList, PianoRoll, PitchSet, TimeAxis};
pub use warp::WarpKind;
