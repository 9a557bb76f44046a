//! Window-level curation: statistics and filters, entropy and padding-mix
//! rebalancing, sliding-window extraction and temporal splits.

pub mod filter;
pub mod sampling;
pub mod stats;
pub mod windows;

pub use filter::{filter_window, DropReason, FilterDecision, FilterPolicy};
pub use sampling::{entropy_downsample, padding_mix_sampler, TargetProfile};
pub use stats::{compute_window_stats, spectral_entropy, WindowStats};
pub use windows::{global_time_split, sliding_windows, temporal_split, Split, SplitAssignment, SplitFractions, WindowGeometry};
