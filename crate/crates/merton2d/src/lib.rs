pub mod convolve;
pub mod error;
pub mod kernel;
pub mod model;
pub mod pricer;
