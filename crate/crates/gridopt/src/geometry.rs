//! Spatial extent and the (n, m, N) partition arithmetic.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Rectangular study area in decimal degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialExtent {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl SpatialExtent {
    pub fn new(lon_min: f64, lon_max: f64, lat_min: f64, lat_max: f64) -> Result<Self> {
        let vals = [lon_min, lon_max, lat_min, lat_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("extent", "coordinates must be finite"));
        }
        if lon_min >= lon_max || lat_min >= lat_max {
            return Err(Error::invalid(
                "extent",
                format!("require lon_min < lon_max and lat_min < lat_max, got [{lon_min},{lon_max}]x[{lat_min},{lat_max}]"),
            ));
        }
        Ok(Self {
            lon_min,
            lon_max,
            lat_min,
            lat_max,
        })
    }

    /// Inclusive on all edges; events exactly on the max boundary belong to
    /// the last cell rather than falling outside.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.lon_min && lon <= self.lon_max && lat >= self.lat_min && lat <= self.lat_max
    }

    /// Cell of a point on a `side` x `side` grid over this extent. Cells are
    /// half-open with the top edge closed (max boundary clamps to the last
    /// cell, so no in-extent event is ever lost).
    pub fn cell_of(&self, lon: f64, lat: f64, side: u32) -> (u32, u32) {
        let fx = (lon - self.lon_min) / (self.lon_max - self.lon_min) * side as f64;
        let fy = (lat - self.lat_min) / (self.lat_max - self.lat_min) * side as f64;
        let cx = (fx.floor() as i64).clamp(0, side as i64 - 1) as u32;
        let cy = (fy.floor() as i64).clamp(0, side as i64 - 1) as u32;
        (cx, cy)
    }
}

/// Partition arithmetic linking HGrids to MGrids.
///
/// The space is cut into `n_side^2` model grids; each model grid is cut into
/// `m_side^2` homogeneous grids, with `m_side` the smallest value satisfying
/// `n * m >= N_ref`. The homogeneous resolution per side is
/// `h_side = n_side * m_side`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGeometry {
    n_side: u32,
    m_side: u32,
    h_side: u32,
    n_ref_side: u32,
}

impl GridGeometry {
    /// Geometry for a candidate `n_side` against the reference resolution,
    /// with `m_side = ceil(n_ref_side / n_side)`.
    pub fn new(n_side: u32, n_ref_side: u32) -> Result<Self> {
        if n_side == 0 || n_ref_side == 0 {
            return Err(Error::invalid("geometry", "sides must be positive"));
        }
        if n_side > n_ref_side {
            return Err(Error::invalid(
                "geometry",
                format!("n_side {n_side} exceeds reference side {n_ref_side}"),
            ));
        }
        let m_side = n_ref_side.div_ceil(n_side);
        Ok(Self {
            n_side,
            m_side,
            h_side: n_side * m_side,
            n_ref_side,
        })
    }

    /// A flat geometry used when a field is handled at its own resolution
    /// (one HGrid per MGrid).
    pub fn at_resolution(side: u32) -> Result<Self> {
        Self::new(side, side)
    }

    pub fn with_sides(n_side: u32, m_side: u32) -> Result<Self> {
        if n_side == 0 || m_side == 0 {
            return Err(Error::invalid("geometry", "sides must be positive"));
        }
        Ok(Self {
            n_side,
            m_side,
            h_side: n_side * m_side,
            n_ref_side: n_side * m_side,
        })
    }

    pub fn n_side(&self) -> u32 {
        self.n_side
    }

    pub fn m_side(&self) -> u32 {
        self.m_side
    }

    pub fn h_side(&self) -> u32 {
        self.h_side
    }

    pub fn n_ref_side(&self) -> u32 {
        self.n_ref_side
    }

    /// Number of MGrids.
    pub fn n(&self) -> u64 {
        self.n_side as u64 * self.n_side as u64
    }

    /// HGrids per MGrid.
    pub fn m(&self) -> u64 {
        self.m_side as u64 * self.m_side as u64
    }

    /// Reference HGrid count backing the `n * m >= N_ref` constraint.
    pub fn n_ref(&self) -> u64 {
        self.n_ref_side as u64 * self.n_ref_side as u64
    }

    /// MGrid containing a given HGrid cell.
    pub fn mgrid_of(&self, hx: u32, hy: u32) -> (u32, u32) {
        (hx / self.m_side, hy / self.m_side)
    }
}
