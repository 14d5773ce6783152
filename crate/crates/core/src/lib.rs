//! Desk-scale simulator and analysis engine for drive-by radiological
//! source attribution. Synthetic urban scenarios produce object
//! detections, platform poses, and Poisson gamma-ray counts; the engine
//! tracks objects in a world-fixed frame, fits physics-based count models
//! per detector, ranks tracks by goodness of fit, and computes
//! track-informed SNR-optimal integration windows across the detector
//! array.

pub mod anomaly;
pub mod attribution;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod response;
pub mod scene;
pub mod snr;
pub mod spectrum;
pub mod stats;
pub mod tracking;
pub mod types;
pub mod util;

pub use error::{Error, Result};
