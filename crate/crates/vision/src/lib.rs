//! Contour features of binary digit images as observation SPNs.

pub mod contour;
pub mod features;
pub mod idx;

pub use contour::{approximate_contours, binarize, Binary, Contour};
pub use features::{build_observation_spn, image_to_spn, type_name, FeatureNode, FeatureType, SN_KEYS};
pub use idx::{load_mnist, IdxError, ImageSet, Split};
