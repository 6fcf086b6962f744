//! Metric catalogue: pose accuracy and trajectory statistics in [`pose`],
//! robustness and stability in [`system`].

pub mod pose;
pub mod system;

use serde::{Deserialize, Serialize};

/// Per-axis plus 3D value of one statistic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(rename = "3d")]
    pub d3: f64,
}

impl Axes {
    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.d3]
    }
}
