//! Empirical error measurement and the synthetic Poisson generator.
//!
//! Real, model and expression error are all measured the same way: average
//! the per-cell absolute deviation over slots first, then sum over cells.
//! The three differ only in which pair of values is compared:
//!
//! * real:       forecast-per-cell vs actual count
//! * model:      forecast-per-cell vs spread of the actual MGrid total
//! * expression: spread of the actual MGrid total vs actual count
//!
//! The triangle inequality holds per sample, so real <= model + expression
//! on every evaluation set.

use crate::error::{Error, Result};
use crate::field::{block_sum_u32, spread_f64, AlphaField, CountField, Grid};
use crate::geometry::GridGeometry;
use crate::numeric::CompensatedSum;
use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};

/// Paired per-slot forecasts and actuals at HGrid resolution.
#[derive(Clone, Debug)]
pub struct EvaluationSet {
    pub geometry: GridGeometry,
    /// (forecast spread to HGrids, actual HGrid counts) per slot.
    pub pairs: Vec<(Grid<f64>, Grid<u32>)>,
}

impl EvaluationSet {
    pub fn new(geometry: GridGeometry, pairs: Vec<(Grid<f64>, Grid<u32>)>) -> Result<Self> {
        for (f, a) in &pairs {
            if f.side() != geometry.h_side() || a.side() != geometry.h_side() {
                return Err(Error::ShapeMismatch {
                    expected: format!("side {}", geometry.h_side()),
                    got: format!("forecast side {}, actual side {}", f.side(), a.side()),
                });
            }
            if f.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid(
                    "forecast",
                    "entries must be finite and non-negative",
                ));
            }
        }
        Ok(Self { geometry, pairs })
    }

    /// Build from per-MGrid forecasts by spreading each forecast evenly over
    /// its m homogeneous grids.
    pub fn from_mgrid_forecasts(
        geometry: GridGeometry,
        slots: Vec<(Grid<f64>, Grid<u32>)>,
    ) -> Result<Self> {
        let mut pairs = Vec::with_capacity(slots.len());
        for (mgrid_forecast, actual) in slots {
            if mgrid_forecast.side() != geometry.n_side() {
                return Err(Error::ShapeMismatch {
                    expected: format!("n_side {}", geometry.n_side()),
                    got: format!("forecast side {}", mgrid_forecast.side()),
                });
            }
            pairs.push((spread_f64(&mgrid_forecast, geometry.m_side()), actual));
        }
        Self::new(geometry, pairs)
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.pairs.is_empty() {
            Err(Error::EmptyEvaluation)
        } else {
            Ok(())
        }
    }

    /// Spread of the actual MGrid totals for one slot.
    fn spread_actual(&self, actual: &Grid<u32>) -> Grid<f64> {
        let m_side = self.geometry.m_side();
        let sums = block_sum_u32(actual, m_side);
        let as_f64 = Grid::from_vec(sums.side(), sums.data().iter().map(|&v| v as f64).collect())
            .expect("same shape");
        spread_f64(&as_f64, m_side)
    }

    fn sum_of_cell_means<F>(&self, per_sample: F) -> f64
    where
        F: Fn(f64, f64, u32) -> f64,
    {
        let cells = self.pairs[0].0.len();
        let slots = self.pairs.len() as f64;
        let mut cell_sums = vec![CompensatedSum::new(); cells];
        for (forecast, actual) in &self.pairs {
            let estimated = self.spread_actual(actual);
            for (i, sum) in cell_sums.iter_mut().enumerate() {
                sum.add(per_sample(
                    forecast.data()[i],
                    estimated.data()[i],
                    actual.data()[i],
                ));
            }
        }
        let mut total = CompensatedSum::new();
        for s in cell_sums {
            total.add(s.value() / slots);
        }
        total.value()
    }
}

/// Sum over cells of the mean |forecast - actual|.
pub fn empirical_real_error(ev: &EvaluationSet) -> Result<f64> {
    ev.require_nonempty()?;
    Ok(ev.sum_of_cell_means(|fc, _est, act| (fc - act as f64).abs()))
}

/// Sum over cells of the mean |estimated - actual|, the estimate being the
/// actual MGrid total spread evenly.
pub fn empirical_expression_error(ev: &EvaluationSet) -> Result<f64> {
    ev.require_nonempty()?;
    Ok(ev.sum_of_cell_means(|_fc, est, act| (est - act as f64).abs()))
}

/// Sum over cells of the mean |forecast - estimated|. Equals the MGrid-level
/// sum of |forecast_i - actual_i| because both values are constant across a
/// model grid's cells.
pub fn empirical_model_error(ev: &EvaluationSet) -> Result<f64> {
    ev.require_nonempty()?;
    Ok(ev.sum_of_cell_means(|fc, est, _act| (fc - est).abs()))
}

/// Per-partition error decomposition, analytic and (optionally) empirical.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n_side: u32,
    pub n: u64,
    pub m: u64,
    pub k: u32,
    pub slots_evaluated: usize,
    pub mae: f64,
    /// Analytic expression-error total.
    pub e_e_total: f64,
    /// n * MAE.
    pub e_m_total: f64,
    /// e_e_total + e_m_total.
    pub e_u_total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_r_empirical: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_e_empirical: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_m_empirical: Option<f64>,
}

/// Independent Poisson draws per cell per slot. Slot streams are derived
/// from (seed, slot position), so any subset of slots can be generated in
/// any order, serial or parallel, with identical results.
pub fn generate_poisson_field(alpha: &AlphaField, slots: usize, seed: u64) -> Vec<CountField> {
    assert!(slots >= 1);
    let side = alpha.geometry.h_side();
    let root = CounterRng::new(seed);
    (0..slots)
        .map(|s| {
            let mut grid = Grid::<u32>::zeros(side);
            for (x, y, a) in alpha.alphas.cells() {
                let mut rng = root.derive(&[0x706f_6973u64, s as u64, (y as u64) << 32 | x as u64]);
                grid.set(x, y, rng.poisson(a) as u32);
            }
            CountField {
                geometry: alpha.geometry,
                slot_index: s as i64,
                counts: grid,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The worked 4x4 instance: 2x2 model grids forecast as (8, 2, 4, 4),
    /// actual per-cell counts with MGrid totals (9, 1, 4, 5).
    pub(crate) fn fig_instance() -> EvaluationSet {
        let geometry = GridGeometry::new(2, 4).unwrap();
        let forecast_mgrid = Grid::from_vec(2, vec![8.0, 2.0, 4.0, 4.0]).unwrap();
        let actual = Grid::from_vec(
            4,
            vec![
                3, 2, 0, 0, //
                3, 1, 0, 1, //
                0, 3, 1, 1, //
                0, 1, 1, 2,
            ],
        )
        .unwrap();
        EvaluationSet::from_mgrid_forecasts(geometry, vec![(forecast_mgrid, actual)]).unwrap()
    }

    #[test]
    fn fig_instance_errors() {
        let ev = fig_instance();
        let e_m = empirical_model_error(&ev).unwrap();
        let e_r = empirical_real_error(&ev).unwrap();
        let e_e = empirical_expression_error(&ev).unwrap();
        assert_eq!(e_m, 3.0);
        assert_eq!(e_r, 10.0);
        // the bound, not equality: 10 <= 3 + e_e
        assert!(e_r <= e_m + e_e);
    }

    #[test]
    fn perfect_forecasts_zero_everything() {
        let geometry = GridGeometry::new(2, 4).unwrap();
        // per-cell uniform actuals so the spread matches exactly
        let actual = Grid::from_vec(4, vec![2u32; 16]).unwrap();
        let forecast = Grid::from_vec(2, vec![8.0, 8.0, 8.0, 8.0]).unwrap();
        let ev = EvaluationSet::from_mgrid_forecasts(geometry, vec![(forecast, actual)]).unwrap();
        assert_eq!(empirical_real_error(&ev).unwrap(), 0.0);
        assert_eq!(empirical_model_error(&ev).unwrap(), 0.0);
        assert_eq!(empirical_expression_error(&ev).unwrap(), 0.0);
    }

    #[test]
    fn forecasting_the_spread_makes_real_equal_expression() {
        let geometry = GridGeometry::new(2, 4).unwrap();
        let actual =
            Grid::from_vec(4, vec![3, 2, 0, 0, 3, 1, 0, 1, 0, 3, 1, 1, 0, 1, 1, 2]).unwrap();
        let forecast = Grid::from_vec(2, vec![9.0, 1.0, 4.0, 5.0]).unwrap();
        let ev = EvaluationSet::from_mgrid_forecasts(geometry, vec![(forecast, actual)]).unwrap();
        let e_r = empirical_real_error(&ev).unwrap();
        let e_e = empirical_expression_error(&ev).unwrap();
        assert_eq!(e_r, e_e);
        assert_eq!(empirical_model_error(&ev).unwrap(), 0.0);
    }

    #[test]
    fn model_error_equals_mgrid_total_identity() {
        let mut rng = CounterRng::new(12);
        let geometry = GridGeometry::new(2, 8).unwrap(); // m_side 4, m = 16
        let mut slots = Vec::new();
        for _ in 0..3 {
            let actual =
                Grid::from_vec(8, (0..64).map(|_| rng.poisson(3.0) as u32).collect()).unwrap();
            let forecast =
                Grid::from_vec(2, (0..4).map(|_| rng.range_f64(0.0, 50.0)).collect()).unwrap();
            slots.push((forecast, actual));
        }
        let mgrid_level: f64 = slots
            .iter()
            .map(|(f, a)| {
                let sums = block_sum_u32(a, 4);
                f.data()
                    .iter()
                    .zip(sums.data())
                    .map(|(&fc, &ac)| (fc - ac as f64).abs())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / 3.0;
        let ev = EvaluationSet::from_mgrid_forecasts(geometry, slots).unwrap();
        let e_m = empirical_model_error(&ev).unwrap();
        assert!(
            (e_m - mgrid_level).abs() <= 1e-9 * mgrid_level.max(1.0),
            "{e_m} vs {mgrid_level}"
        );
    }

    #[test]
    fn triangle_inequality_on_random_sets() {
        let mut rng = CounterRng::new(55);
        for trial in 0..20 {
            let geometry = GridGeometry::new(2, 8).unwrap();
            let slots: Vec<(Grid<f64>, Grid<u32>)> = (0..4)
                .map(|_| {
                    let actual =
                        Grid::from_vec(8, (0..64).map(|_| rng.poisson(2.5) as u32).collect())
                            .unwrap();
                    let forecast =
                        Grid::from_vec(2, (0..4).map(|_| rng.range_f64(0.0, 60.0)).collect())
                            .unwrap();
                    (forecast, actual)
                })
                .collect();
            let ev = EvaluationSet::from_mgrid_forecasts(geometry, slots).unwrap();
            let e_r = empirical_real_error(&ev).unwrap();
            let e_m = empirical_model_error(&ev).unwrap();
            let e_e = empirical_expression_error(&ev).unwrap();
            assert!(
                e_r <= (e_m + e_e) * (1.0 + 1e-12) + 1e-12,
                "trial {trial}: {e_r} > {e_m} + {e_e}"
            );
        }
    }

    #[test]
    fn empty_set_is_an_error() {
        let geometry = GridGeometry::new(2, 4).unwrap();
        let ev = EvaluationSet::new(geometry, vec![]).unwrap();
        assert!(matches!(
            empirical_real_error(&ev).unwrap_err(),
            Error::EmptyEvaluation
        ));
    }

    fn uniform_alpha(side: u32, n_side: u32, value: f64) -> AlphaField {
        let geo = GridGeometry::new(n_side, side).unwrap();
        AlphaField::new(
            geo,
            16,
            Grid::from_vec(side, vec![value; (side as usize).pow(2)]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn generator_zero_rate_and_determinism() {
        let alpha = uniform_alpha(4, 2, 0.0);
        let fields = generate_poisson_field(&alpha, 3, 5);
        assert!(fields.iter().all(|f| f.total() == 0));

        let alpha = uniform_alpha(4, 2, 2.0);
        let a = generate_poisson_field(&alpha, 3, 5);
        let b = generate_poisson_field(&alpha, 3, 5);
        assert_eq!(a, b);
        let c = generate_poisson_field(&alpha, 3, 6);
        assert_ne!(a, c);
    }

    #[test]
    fn generator_law_of_large_numbers() {
        let alpha = uniform_alpha(8, 4, 3.0);
        let slots = 10_000;
        let fields = generate_poisson_field(&alpha, slots, 42);
        let mut per_cell = vec![0.0f64; 64];
        for f in &fields {
            for (i, &c) in f.counts.data().iter().enumerate() {
                per_cell[i] += c as f64;
            }
        }
        let band = 4.0 * (3.0f64 / slots as f64).sqrt();
        for (i, sum) in per_cell.iter().enumerate() {
            let mean = sum / slots as f64;
            assert!(
                (mean - 3.0).abs() <= band,
                "cell {i}: mean {mean} outside 3 +- {band}"
            );
        }
    }

    #[test]
    fn generator_mgrid_totals_match_additivity() {
        // MGrid totals should behave like Poisson draws with the summed rate
        let alpha = uniform_alpha(8, 2, 1.5); // m = 16, MGrid rate 24
        let slots = 4000;
        let fields = generate_poisson_field(&alpha, slots, 101);
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        for f in &fields {
            let mg = f.to_mgrid();
            for &v in mg.counts.data() {
                sum += v as f64;
                sumsq += (v as f64) * (v as f64);
            }
        }
        let count = (slots * 4) as f64;
        let mean = sum / count;
        let var = sumsq / count - mean * mean;
        let rate = 24.0;
        let band = 4.0 * (rate / count).sqrt();
        assert!((mean - rate).abs() <= band, "mean {mean} vs {rate}");
        // variance of a Poisson equals its mean; allow a loose band
        assert!((var - rate).abs() < 1.5, "variance {var} vs {rate}");
    }

    #[test]
    fn generator_cells_are_uncorrelated() {
        let alpha = uniform_alpha(4, 2, 4.0);
        let slots = 10_000;
        let fields = generate_poisson_field(&alpha, slots, 7);
        let series = |x: u32, y: u32| -> Vec<f64> {
            fields.iter().map(|f| f.counts.get(x, y) as f64).collect()
        };
        for (a, b) in [((0, 0), (1, 0)), ((0, 0), (3, 3)), ((2, 1), (1, 2))] {
            let xs = series(a.0, a.1);
            let ys = series(b.0, b.1);
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let cov = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - mx) * (y - my))
                .sum::<f64>()
                / n;
            // SE of the sample covariance of independent Poissons ~ rate/sqrt(n)
            let se = 4.0 / n.sqrt();
            assert!(cov.abs() <= 4.0 * se, "cov {cov} for cells {a:?},{b:?}");
        }
    }

    #[test]
    fn analytic_total_matches_empirical_expression_error() {
        // Poisson data generated from the same rates the analytic engine
        // sees: the two expression-error routes must agree statistically
        let mut rng = CounterRng::new(88);
        let side = 8u32;
        let geo = GridGeometry::new(4, side).unwrap(); // m = 4
        let data: Vec<f64> = (0..side * side).map(|_| rng.range_f64(0.0, 6.0)).collect();
        let alpha = AlphaField::new(geo, 16, Grid::from_vec(side, data).unwrap()).unwrap();
        let analytic = crate::expression::total_expression_error(&alpha, 250)
            .unwrap()
            .total;

        let slots = 3000;
        let fields = generate_poisson_field(&alpha, slots, 1234);
        // per-slot totals give a standard error for the empirical estimate
        let mut slot_totals = Vec::with_capacity(slots);
        for f in &fields {
            let ev = EvaluationSet::new(geo, vec![(Grid::<f64>::zeros(side), f.counts.clone())])
                .unwrap();
            slot_totals.push(empirical_expression_error(&ev).unwrap());
        }
        let n = slots as f64;
        let mean = slot_totals.iter().sum::<f64>() / n;
        let var = slot_totals
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(
            (analytic - mean).abs() <= 3.0 * se,
            "analytic {analytic} vs empirical {mean} +- {se}"
        );
    }
}
