use serde::{Deserialize, Serialize};

use super::WorldError;

/// Binary ground-truth occupancy over a row-major pixel field.
///
/// Pixel `(col, row)` covers `[col*r, (col+1)*r) x [row*r, (row+1)*r)` in
/// meters, with `r` the resolution. A cell value of 1 marks an obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    cells: Vec<u8>,
}

impl OccupancyGrid {
    /// An all-free grid.
    pub fn free(width: usize, height: usize, resolution: f64) -> Result<Self, WorldError> {
        Self::from_cells(width, height, resolution, vec![0; width * height])
    }

    pub fn from_cells(width: usize, height: usize, resolution: f64, cells: Vec<u8>) -> Result<Self, WorldError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(WorldError::InvalidResolution(resolution));
        }
        if width == 0 || height == 0 || width * height != cells.len() {
            return Err(WorldError::DimensionMismatch {
                width,
                height,
                cells: cells.len(),
            });
        }
        let cells = cells.into_iter().map(|c| u8::from(c != 0)).collect();
        Ok(Self {
            width,
            height,
            resolution,
            cells,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Meters per pixel.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * self.resolution
    }

    pub fn height_m(&self) -> f64 {
        self.height as f64 * self.resolution
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn is_occupied(&self, index: usize) -> bool {
        self.cells[index] != 0
    }

    pub fn set(&mut self, col: usize, row: usize, occupied: bool) {
        let i = self.index(col, row);
        self.cells[i] = u8::from(occupied);
    }

    /// Center of a pixel in meters.
    #[inline]
    pub fn pixel_center(&self, index: usize) -> (f64, f64) {
        let col = index % self.width;
        let row = index / self.width;
        (
            (col as f64 + 0.5) * self.resolution,
            (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= self.width_m() && y <= self.height_m()
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    pub fn occupancy_fraction(&self) -> f64 {
        self.occupied_count() as f64 / self.cells.len() as f64
    }

    /// Marks every pixel whose center lies within `radius` of `(cx, cy)`.
    pub fn fill_disc(&mut self, cx: f64, cy: f64, radius: f64, occupied: bool) {
        let r = self.resolution;
        let c0 = ((cx - radius) / r).floor().max(0.0) as usize;
        let r0 = ((cy - radius) / r).floor().max(0.0) as usize;
        let c1 = (((cx + radius) / r).ceil().max(0.0) as usize).min(self.width);
        let r1 = (((cy + radius) / r).ceil().max(0.0) as usize).min(self.height);
        let r2 = radius * radius;
        for row in r0..r1 {
            let py = (row as f64 + 0.5) * r - cy;
            for col in c0..c1 {
                let px = (col as f64 + 0.5) * r - cx;
                if px * px + py * py <= r2 {
                    let i = self.index(col, row);
                    self.cells[i] = u8::from(occupied);
                }
            }
        }
    }
}
