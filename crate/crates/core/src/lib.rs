//! Extraction of handwritten zones from color images of bank checks.
//!
//! The bank is identified from the CMC7 marking band at the bottom of the
//! check, the handwriting color is found by differencing the filled check's
//! color histogram against the bank's blank template, and the bank's zone
//! template is clipped and then widened with binary morphology so that no
//! handwritten stroke is cut.

pub mod bankid;
pub mod efd;
pub mod error;
pub mod eval;
pub mod handwriting;
pub mod io;
pub mod morphology;
pub mod pipeline;
pub mod preprocess;
pub mod projection;
pub mod raster;
pub mod synthgen;

pub use error::{Error, Result};
