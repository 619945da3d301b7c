//! Small fixed sequences used in the examples and regression tests.

/// Closing prices of the first stock in the moving-average pair.
pub const S1: [f64; 15] = [
    36.0, 38.0, 40.0, 38.0, 42.0, 38.0, 36.0, 36.0, 37.0, 38.0, 39.0, 38.0, 40.0, 38.0, 37.0,
];

/// Closing prices of the second stock in the moving-average pair.
pub const S2: [f64; 15] = [
    40.0, 37.0, 37.0, 42.0, 41.0, 35.0, 40.0, 35.0, 34.0, 42.0, 38.0, 35.0, 45.0, 36.0, 34.0,
];

/// A series sampled every other day.
pub const WARP_P: [f64; 4] = [20.0, 21.0, 20.0, 23.0];

/// The daily series that `WARP_P` stretches onto when each sample is doubled.
pub const WARP_S: [f64; 8] = [20.0, 20.0, 21.0, 21.0, 20.0, 20.0, 23.0, 23.0];
