pub mod detect;
pub mod config;
pub mod direction;
pub mod error;
pub mod eval;
pub mod fdif;
pub mod fracnn;
pub mod fractal;
pub mod image;
pub mod io;
pub mod synth;

pub use error::{Error, Result};
pub use image::{Image, Kernel};
