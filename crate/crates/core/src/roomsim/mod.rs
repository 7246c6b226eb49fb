//! Shoebox image-source simulator producing FOA impulse-response grids.

pub mod dataset;
pub mod images;
pub mod render;
pub mod room;

pub use dataset::{build_dataset, FoaDataset, GridSpec, CHANNELS, CHANNEL_NAMES};
pub use images::{image_sources, ImageSource};
pub use render::{fractional_delay, render_foa, render_foa_rir, DELAY_TAPS};
pub use room::{sample_room, sample_room_with_dims, RoomSpec, CUBE_SIZE, SOURCE_CLEARANCE, WALL_BUFFER};
