//! Row-major square grids and the count / rate fields built on them.

use crate::error::{Error, Result};
use crate::geometry::GridGeometry;
use crate::numeric::CompensatedSum;

/// Dense square matrix, row-major, indexed as (x, y) with `y` the row.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    side: u32,
    data: Vec<T>,
}

impl<T: Copy + Default> Grid<T> {
    pub fn zeros(side: u32) -> Self {
        Self {
            side,
            data: vec![T::default(); (side as usize) * (side as usize)],
        }
    }

    pub fn from_vec(side: u32, data: Vec<T>) -> Result<Self> {
        if data.len() != (side as usize) * (side as usize) {
            return Err(Error::ShapeMismatch {
                expected: format!("{side}x{side} = {} values", (side as u64) * (side as u64)),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Self { side, data })
    }

    pub fn side(&self) -> u32 {
        self.side
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.side && y < self.side);
        y as usize * self.side as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> T {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: T) {
        let i = self.idx(x, y);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Iterate cells in row-major order as (x, y, value).
    pub fn cells(&self) -> impl Iterator<Item = (u32, u32, T)> + '_ {
        let side = self.side;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, &v)| ((i as u32) % side, (i as u32) / side, v))
    }
}

/// Sum each `factor x factor` block into one cell of a coarser grid.
pub fn block_sum_u32(grid: &Grid<u32>, factor: u32) -> Grid<u64> {
    assert!(factor >= 1 && grid.side.is_multiple_of(factor));
    let out_side = grid.side / factor;
    let mut out = Grid::<u64>::zeros(out_side);
    for (x, y, v) in grid.cells() {
        let i = out.idx(x / factor, y / factor);
        out.data_mut()[i] += v as u64;
    }
    out
}

pub fn block_sum_f64(grid: &Grid<f64>, factor: u32) -> Grid<f64> {
    assert!(factor >= 1 && grid.side.is_multiple_of(factor));
    let out_side = grid.side / factor;
    let mut sums = vec![CompensatedSum::new(); (out_side as usize).pow(2)];
    for (x, y, v) in grid.cells() {
        sums[(y / factor) as usize * out_side as usize + (x / factor) as usize].add(v);
    }
    Grid {
        side: out_side,
        data: sums.into_iter().map(|s| s.value()).collect(),
    }
}

/// Spread each coarse value evenly over a `factor x factor` block of the
/// finer grid (each fine cell receives value / factor^2).
pub fn spread_f64(grid: &Grid<f64>, factor: u32) -> Grid<f64> {
    assert!(factor >= 1);
    let out_side = grid.side * factor;
    let share = 1.0 / (factor as f64 * factor as f64);
    let mut out = Grid::<f64>::zeros(out_side);
    for (x, y, v) in grid.cells() {
        let cell = v * share;
        for dy in 0..factor {
            for dx in 0..factor {
                out.set(x * factor + dx, y * factor + dy, cell);
            }
        }
    }
    out
}

/// Observed event counts on the HGrid lattice for one time slot.
#[derive(Clone, Debug, PartialEq)]
pub struct CountField {
    pub geometry: GridGeometry,
    pub slot_index: i64,
    pub counts: Grid<u32>,
}

impl CountField {
    pub fn new(geometry: GridGeometry, slot_index: i64, counts: Grid<u32>) -> Result<Self> {
        if counts.side() != geometry.h_side() {
            return Err(Error::ShapeMismatch {
                expected: format!("side {}", geometry.h_side()),
                got: format!("side {}", counts.side()),
            });
        }
        Ok(Self {
            geometry,
            slot_index,
            counts,
        })
    }

    pub fn zeros(geometry: GridGeometry, slot_index: i64) -> Self {
        Self {
            geometry,
            slot_index,
            counts: Grid::zeros(geometry.h_side()),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.data().iter().map(|&v| v as u64).sum()
    }

    /// Aggregate to the MGrid lattice.
    pub fn to_mgrid(&self) -> MGridCounts {
        let sums = block_sum_u32(&self.counts, self.geometry.m_side());
        MGridCounts {
            n_side: self.geometry.n_side(),
            slot_index: self.slot_index,
            counts: sums,
        }
    }
}

/// Event counts aggregated to the MGrid lattice; the unit a predictor sees.
#[derive(Clone, Debug, PartialEq)]
pub struct MGridCounts {
    pub n_side: u32,
    pub slot_index: i64,
    pub counts: Grid<u64>,
}

impl MGridCounts {
    pub fn total(&self) -> u64 {
        self.counts.data().iter().sum()
    }
}

/// Per-HGrid mean event rates for one slot of the day.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaField {
    pub geometry: GridGeometry,
    pub slot_of_day: u32,
    pub alphas: Grid<f64>,
}

impl AlphaField {
    pub fn new(geometry: GridGeometry, slot_of_day: u32, alphas: Grid<f64>) -> Result<Self> {
        if alphas.side() != geometry.h_side() {
            return Err(Error::ShapeMismatch {
                expected: format!("side {}", geometry.h_side()),
                got: format!("side {}", alphas.side()),
            });
        }
        if alphas.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "alpha field",
                "entries must be finite and non-negative",
            ));
        }
        Ok(Self {
            geometry,
            slot_of_day,
            alphas,
        })
    }

    /// Total rate of each MGrid.
    pub fn mgrid_sums(&self) -> Grid<f64> {
        block_sum_f64(&self.alphas, self.geometry.m_side())
    }

    pub fn total(&self) -> f64 {
        CompensatedSum::sum_iter(self.alphas.data().iter().copied())
    }

    /// Reinterpret the same values under a different MGrid split. The
    /// partition must tile the field exactly.
    pub fn with_geometry(&self, geometry: GridGeometry) -> Result<Self> {
        Self::new(geometry, self.slot_of_day, self.alphas.clone())
    }
}
