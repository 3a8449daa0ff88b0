//! Road grid geometry relative to the base station.
//!
//! The BS sits at the origin with its array on the yz-plane. The road runs
//! parallel to the y-axis at `x = road_offset_x_m`; the UE antenna sits at
//! `z = ue_height_m - bs_height_m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub bs_height_m: f64,
    pub road_offset_x_m: f64,
    pub road_y_min_m: f64,
    pub road_y_max_m: f64,
    pub ue_height_m: f64,
    pub num_cells: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            bs_height_m: 10.0,
            road_offset_x_m: 10.0,
            road_y_min_m: -120.0,
            road_y_max_m: 120.0,
            ue_height_m: 1.5,
            num_cells: 12,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_cells < 2 {
            return Err(Error::invalid("scene.num_cells", "need at least 2 cells"));
        }
        if !(self.road_y_max_m > self.road_y_min_m) {
            return Err(Error::invalid("scene.road_y_max_m", "road extent is empty or inverted"));
        }
        if !(self.bs_height_m >= 0.0) {
            return Err(Error::invalid("scene.bs_height_m", "must be >= 0"));
        }
        if !(self.ue_height_m >= 0.0) {
            return Err(Error::invalid("scene.ue_height_m", "must be >= 0"));
        }
        if !self.road_offset_x_m.is_finite() {
            return Err(Error::invalid("scene.road_offset_x_m", "must be finite"));
        }
        Ok(())
    }

    pub fn road_length_m(&self) -> f64 {
        self.road_y_max_m - self.road_y_min_m
    }

    pub fn cell_length_m(&self) -> f64 {
        self.road_length_m() / self.num_cells as f64
    }
}

/// A road cell represented by the spherical coordinates of its center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCoord {
    /// 1-based cell index along increasing y.
    pub index: usize,
    pub r: f64,
    /// Azimuth, counterclockwise from the x-axis.
    pub theta: f64,
    /// Elevation, upwards from the xy-plane.
    pub phi: f64,
}

impl CellCoord {
    pub fn from_cartesian(index: usize, x: f64, y: f64, z: f64) -> Self {
        let horizontal = x.hypot(y);
        Self {
            index,
            r: (x * x + y * y + z * z).sqrt(),
            theta: y.atan2(x),
            phi: z.atan2(horizontal),
        }
    }

    pub fn to_cartesian(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [self.r * cp * ct, self.r * cp * st, self.r * sp]
    }
}

/// The discretized road: cell centers in order of increasing y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub scene: SceneConfig,
    pub cells: Vec<CellCoord>,
}

impl Road {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, zero_based: usize) -> Result<&CellCoord> {
        self.cells.get(zero_based).ok_or(Error::CellOutOfRange {
            index: zero_based,
            num_cells: self.cells.len(),
        })
    }

    /// Cartesian center of 0-based cell `i`.
    pub fn cell_center_cartesian(&self, i: usize) -> [f64; 3] {
        let s = &self.scene;
        let y = s.road_y_min_m + (i as f64 + 0.5) * s.cell_length_m();
        [s.road_offset_x_m, y, s.ue_height_m - s.bs_height_m]
    }

    /// 0-based cell containing road coordinate `y`, using half-open cells
    /// `[y_i, y_{i+1})`. The far end of the road belongs to the last cell.
    pub fn cell_containing(&self, y: f64) -> Option<usize> {
        let s = &self.scene;
        if !(y >= s.road_y_min_m) || y > s.road_y_max_m {
            return None;
        }
        let idx = ((y - s.road_y_min_m) / s.cell_length_m()).floor() as usize;
        Some(idx.min(self.cells.len() - 1))
    }
}

/// Splits the road into equal segments and converts each midpoint to spherical coordinates.
pub fn build_road(scene: &SceneConfig) -> Result<Road> {
    scene.validate()?;
    let z = scene.ue_height_m - scene.bs_height_m;
    let len = scene.cell_length_m();
    let cells = (0..scene.num_cells)
        .map(|i| {
            let y = scene.road_y_min_m + (i as f64 + 0.5) * len;
            CellCoord::from_cartesian(i + 1, scene.road_offset_x_m, y, z)
        })
        .collect::<Vec<_>>();
    if cells.iter().any(|c| !(c.r > 0.0)) {
        return Err(Error::invalid("scene", "a cell center coincides with the base station"));
    }
    Ok(Road {
        scene: scene.clone(),
        cells,
    })
}
