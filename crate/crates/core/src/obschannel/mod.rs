//! Camera frames, bandwidth-reducing transforms and the information they
//! keep.

pub mod image;
pub mod info;
pub mod pnm;
pub mod select;
pub mod synthetic;
pub mod transform;

pub use image::{bits_required, ChannelModel, ImageFrame};
pub use info::{entropy, expected_preserved_info, mutual_information, preserved_info};
pub use select::{select_transform, BudgetStep, ChannelBudget, Selection};
pub use transform::{
    binarize, downsample, edge_detect, to_grayscale, upsample_to, ThresholdInfo, ThresholdMode, Transform,
    TransformSpec,
};
