//! Multi-source frame ingestion and observation stacking.

pub mod fgrid;
pub mod fuse;

pub use fgrid::{parse_frame, read_frame, write_frame, ObservationFrame, ParseOptions, AOD_BOUNDS};
pub use fuse::{
    build_downsample_mask, common_times, fuse, load_streams, DownsampleMask, FusedObservation,
    SourceRows, SourceStream,
};
