//! Network-input assembly: the three-channel overlay image, the 34-element
//! side vector, the binary feature container, and the BerHu training loss.

use thiserror::Error;

pub mod container;
pub mod loss;
pub mod overlay;
pub mod patch;
pub mod side;

pub use container::{sha256_hex, FeatureBundle, IndexEntry};
pub use loss::{berhu, data_loss, data_loss_with_c, DataLoss, LossValue};
pub use overlay::{make_overlay, OverlayTensor, OVERLAY_SIZE};
pub use patch::GrayPatch;
pub use side::{make_side_vector, SideVector, SIDE_VECTOR_LEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("degenerate patch: {0}")]
    DegeneratePatch(String),
    #[error("image decode: {0}")]
    Image(String),
    #[error("BerHu threshold must be positive, got {0}")]
    NonPositiveC(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("feature container: {0}")]
    Container(String),
}
