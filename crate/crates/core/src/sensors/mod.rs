//! Sensor synthesis: the oblique orthographic camera, the marker-based
//! tactile pads, and the frozen linear projection that turns raw marker flow
//! into the compact tactile feature vector.

pub mod pca;
pub mod render;
pub mod tactile;
