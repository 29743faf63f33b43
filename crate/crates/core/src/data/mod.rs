//! Skeleton ingestion, projection, windowing, splitting and synthetic generation.

pub mod camera;
pub mod dataset;
pub mod skeleton;
pub mod split;
pub mod synth;
pub mod windows;

pub use camera::{project_to_2d, CameraModel};
pub use dataset::{load_dataset, write_dataset, Dataset};
pub use skeleton::{parse_fphab_skeleton, parse_frames, write_fphab_skeleton, SkeletonSequence};
pub use split::split_train_eval;
pub use synth::generate_synthetic;
pub use windows::{build_windows, make_windows, normalize_window, WindowMeta, WindowSample};
