pub mod bench;
pub mod cli;
pub mod error;
pub mod feature;
pub mod index;
pub mod io;
pub mod samples;
pub mod series;
pub mod spectral;
pub mod transform;
