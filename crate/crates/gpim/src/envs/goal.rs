//! Perceptual goal values produced by the relabeling functions.

/// A goal fed to the goal-conditioned policy. Which variant an environment
/// produces is part of its relabeling function: identity coordinates for the
/// navigation family, descriptor bits for color-shape tasks, raster images
/// when image goals are enabled, and per-timestep sequences for dynamic
/// goal tracking.
#[derive(Clone, Debug, PartialEq)]
pub enum Goal {
    Coordinate(Vec<f64>),
    OneHot(Vec<f64>),
    /// Descriptor bits plus a target coordinate (object manipulation).
    Descriptor {
        bits: Vec<f64>,
        coord: Vec<f64>,
    },
    Image {
        width: usize,
        height: usize,
        pixels: Vec<u8>, // RGB, row-major
    },
    Sequence(Vec<Goal>),
}

impl Goal {
    /// Flat numeric encoding used for policy conditioning and the codec.
    /// Image pixels are scaled to [0,1].
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Goal::Coordinate(c) => c.clone(),
            Goal::OneHot(bits) => bits.clone(),
            Goal::Descriptor { bits, coord } => {
                let mut v = bits.clone();
                v.extend_from_slice(coord);
                v
            }
            Goal::Image { pixels, .. } => pixels.iter().map(|&p| p as f64 / 255.0).collect(),
            Goal::Sequence(goals) => goals.iter().flat_map(|g| g.to_vec()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Goal::Coordinate(c) => c.len(),
            Goal::OneHot(bits) => bits.len(),
            Goal::Descriptor { bits, coord } => bits.len() + coord.len(),
            Goal::Image { width, height, .. } => width * height * 3,
            Goal::Sequence(goals) => goals.iter().map(Goal::dim).sum(),
        }
    }

    /// Coordinate payload, if this goal lives in coordinate space.
    pub fn coordinate(&self) -> Option<&[f64]> {
        match self {
            Goal::Coordinate(c) => Some(c),
            Goal::Descriptor { coord, .. } => Some(coord),
            _ => None,
        }
    }
}
