//! Low-resolution software rasterizer for image goals. Scenes are drawn as
//! colored primitives on a fixed-size RGB grid; everything is deterministic.

pub const BACKGROUND: [u8; 3] = [255, 255, 255];
pub const WALL: [u8; 3] = [120, 120, 120];
pub const AGENT: [u8; 3] = [0, 0, 0];

pub const PALETTE: [[u8; 3]; 5] = [
    [220, 40, 40],  // red
    [40, 80, 220],  // blue
    [40, 180, 60],  // green
    [240, 150, 30], // orange
    [200, 40, 200], // magenta
];

pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    // world-to-pixel transform
    x0: f64,
    y0: f64,
    sx: f64,
    sy: f64,
}

impl Canvas {
    pub fn new(width: usize, height: usize, bounds: (f64, f64, f64, f64)) -> Canvas {
        let (xmin, xmax, ymin, ymax) = bounds;
        Canvas {
            width,
            height,
            pixels: vec![0; width * height * 3]
                .iter()
                .enumerate()
                .map(|(i, _)| BACKGROUND[i % 3])
                .collect(),
            x0: xmin,
            y0: ymin,
            sx: width as f64 / (xmax - xmin),
            sy: height as f64 / (ymax - ymin),
        }
    }

    fn set(&mut self, px: usize, py: usize, color: [u8; 3]) {
        if px < self.width && py < self.height {
            let i = (py * self.width + px) * 3;
            self.pixels[i..i + 3].copy_from_slice(&color);
        }
    }

    /// World coordinate at the center of pixel (px, py).
    pub fn pixel_center(&self, px: usize, py: usize) -> (f64, f64) {
        (
            self.x0 + (px as f64 + 0.5) / self.sx,
            self.y0 + (py as f64 + 0.5) / self.sy,
        )
    }

    pub fn fill_rect(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, color: [u8; 3]) {
        for py in 0..self.height {
            for px in 0..self.width {
                let (wx, wy) = self.pixel_center(px, py);
                if wx >= x0 && wx <= x1 && wy >= y0 && wy <= y1 {
                    self.set(px, py, color);
                }
            }
        }
    }

    pub fn fill_circle(&mut self, cx: f64, cy: f64, radius: f64, color: [u8; 3]) {
        for py in 0..self.height {
            for px in 0..self.width {
                let (wx, wy) = self.pixel_center(px, py);
                if (wx - cx).powi(2) + (wy - cy).powi(2) <= radius * radius {
                    self.set(px, py, color);
                }
            }
        }
    }

    pub fn fill_square(&mut self, cx: f64, cy: f64, half: f64, color: [u8; 3]) {
        self.fill_rect(cx - half, cx + half, cy - half, cy + half, color);
    }

    /// Pixel-centroid of all pixels matching `color`, mapped back to world
    /// coordinates. Used as an inverse-mapping oracle in tests.
    pub fn centroid_of(&self, color: [u8; 3]) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for py in 0..self.height {
            for px in 0..self.width {
                let i = (py * self.width + px) * 3;
                if self.pixels[i..i + 3] == color {
                    let (wx, wy) = self.pixel_center(px, py);
                    sx += wx;
                    sy += wy;
                    n += 1;
                }
            }
        }
        if n == 0 {
            None
        } else {
            Some((sx / n as f64, sy / n as f64))
        }
    }
}
