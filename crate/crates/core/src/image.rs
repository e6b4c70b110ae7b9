//! Linear-light RGB float image buffer.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major RGB image with linear, unclamped float values. Clamping to
/// [0, 1] happens at write time, not during blending.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    data: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Image { width, height, data: vec![[0.0; 3]; (width * height) as usize] }
    }

    pub fn filled(width: u32, height: u32, value: [f64; 3]) -> Self {
        Image { width, height, data: vec![value; (width * height) as usize] }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: [f64; 3]) {
        self.data[(y * self.width + x) as usize] = value;
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}
