//! Unevenness metric over rate fields and the reference-resolution pick.
//!
//! The metric is the total absolute deviation of per-cell rates from their
//! grand mean. It grows as the grid is refined while real structure is still
//! being resolved, and goes flat once cells are uniform inside; the
//! reference resolution N is chosen at that plateau.

use crate::error::{Error, Result};
use crate::field::AlphaField;
use crate::geometry::{GridGeometry, SpatialExtent};
use crate::ingest::{bin_events, estimate_alpha, EventRecord};
use crate::numeric::CompensatedSum;
use crate::timeslot::TimeSlotSpec;
use serde::{Deserialize, Serialize};

/// Unevenness values over increasing candidate resolutions.
/// Points are `(N, d_alpha)` with `N` the total HGrid count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DAlphaCurve {
    pub points: Vec<(u64, f64)>,
}

impl DAlphaCurve {
    pub fn new(points: Vec<(u64, f64)>) -> Result<Self> {
        if !points.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(Error::invalid("curve", "N values must strictly increase"));
        }
        if points.iter().any(|&(_, d)| !d.is_finite() || d < 0.0) {
            return Err(Error::invalid(
                "curve",
                "d_alpha values must be finite and non-negative",
            ));
        }
        Ok(Self { points })
    }
}

/// Sum of |alpha_ij - mean| over all cells. Zero exactly when the field is
/// constant; scales linearly with the field.
pub fn d_alpha(field: &AlphaField) -> f64 {
    let data = field.alphas.data();
    if data.is_empty() {
        return 0.0;
    }
    let mean = CompensatedSum::sum_iter(data.iter().copied()) / data.len() as f64;
    CompensatedSum::sum_iter(data.iter().map(|&a| (a - mean).abs()))
}

/// Compute the unevenness metric at each candidate resolution, re-binning
/// the raw events and re-estimating the rate field every time.
pub fn scan_d_alpha(
    events: &[EventRecord],
    extent: &SpatialExtent,
    spec: &TimeSlotSpec,
    slot_of_day: u32,
    side_candidates: &[u32],
    window_end_day: Option<i64>,
) -> Result<DAlphaCurve> {
    if side_candidates.is_empty() {
        return Err(Error::invalid("candidates", "need at least one side"));
    }
    if !side_candidates.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("candidates", "sides must strictly increase"));
    }
    let mut points = Vec::with_capacity(side_candidates.len());
    for &side in side_candidates {
        let geometry = GridGeometry::at_resolution(side)?;
        let series = bin_events(events, extent, geometry, spec);
        let alpha = estimate_alpha(&series, slot_of_day, window_end_day)?;
        points.push((side as u64 * side as u64, d_alpha(&alpha)));
    }
    DAlphaCurve::new(points)
}

pub const DEFAULT_GROWTH_THRESHOLD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NSelection {
    /// Recommended HGrid count N.
    pub n: u64,
    /// Whether a plateau was actually found; when false, the largest
    /// candidate was returned as a fallback and finer scans may be needed.
    pub plateau_found: bool,
}

/// Pick the smallest candidate after which the relative growth of the curve
/// stays below `rel_growth_threshold` for every remaining step. With no such
/// plateau the largest candidate is returned, flagged.
pub fn select_n(curve: &DAlphaCurve, rel_growth_threshold: f64) -> Result<NSelection> {
    let pts = &curve.points;
    if pts.len() < 3 {
        return Err(Error::invalid(
            "curve",
            format!("need at least 3 points, got {}", pts.len()),
        ));
    }
    let growth: Vec<f64> = pts
        .windows(2)
        .map(|w| {
            let (prev, cur) = (w[0].1, w[1].1);
            if prev > 0.0 {
                (cur - prev) / prev
            } else if cur <= prev {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    // growth[i] is the step into point i+1; candidate j needs every later
    // step quiet, and at least one later step to confirm the plateau
    for j in 0..pts.len() - 1 {
        if growth[j..].iter().all(|&g| g < rel_growth_threshold) {
            return Ok(NSelection {
                n: pts[j].0,
                plateau_found: true,
            });
        }
    }
    Ok(NSelection {
        n: pts[pts.len() - 1].0,
        plateau_found: false,
    })
}
