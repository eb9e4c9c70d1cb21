//! Predictor abstraction and the model-error side of the bound.
//!
//! The tuning loop only needs a model's mean absolute error over model
//! grids; the per-cell model error aggregates to `n * MAE`. Two built-in
//! predictors cover the harness needs (a historical-mean baseline and a
//! noise-controlled oracle), and externally computed forecasts can be
//! imported from matrix files without linking the model that produced them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::{Grid, MGridCounts};
use crate::numeric::CompensatedSum;
use crate::rng::CounterRng;
use crate::timeslot::TimeSlotSpec;
use serde::{Deserialize, Serialize};

/// Forecasts per-MGrid counts for a target slot. Outputs are finite and
/// non-negative, shaped `n_side x n_side`.
///
/// `predict` receives the target slot's actual counts because harness
/// predictors (the noisy oracle) are defined in terms of them; honest
/// predictors must only look at `target.slot_index`.
pub trait Predictor {
    fn fit(&mut self, train: &[MGridCounts]) -> Result<()>;
    fn predict(&self, target: &MGridCounts) -> Result<Grid<f64>>;
}

/// Predicts the mean of qualifying historical slots with the same
/// slot-of-day.
pub struct HistoricalMeanPredictor {
    spec: TimeSlotSpec,
    means: BTreeMap<u32, Grid<f64>>,
}

impl HistoricalMeanPredictor {
    pub fn new(spec: TimeSlotSpec) -> Self {
        Self {
            spec,
            means: BTreeMap::new(),
        }
    }
}

impl Predictor for HistoricalMeanPredictor {
    fn fit(&mut self, train: &[MGridCounts]) -> Result<()> {
        self.means.clear();
        let mut sums: BTreeMap<u32, (Vec<f64>, u32, usize)> = BTreeMap::new();
        for field in train {
            let day = self.spec.day_index(field.slot_index);
            if !self.spec.day_qualifies(day) {
                continue;
            }
            let sod = self.spec.slot_of_day(field.slot_index);
            let entry = sums
                .entry(sod)
                .or_insert_with(|| (vec![0.0; field.counts.len()], field.counts.side(), 0usize));
            if entry.1 != field.counts.side() {
                return Err(Error::ShapeMismatch {
                    expected: format!("side {}", entry.1),
                    got: format!("side {}", field.counts.side()),
                });
            }
            for (i, &c) in field.counts.data().iter().enumerate() {
                entry.0[i] += c as f64;
            }
            entry.2 += 1;
        }
        for (sod, (sum, side, n)) in sums {
            let mean = sum.into_iter().map(|s| s / n as f64).collect();
            self.means.insert(sod, Grid::from_vec(side, mean)?);
        }
        Ok(())
    }

    fn predict(&self, target: &MGridCounts) -> Result<Grid<f64>> {
        let sod = self.spec.slot_of_day(target.slot_index);
        self.means
            .get(&sod)
            .cloned()
            .ok_or(Error::InsufficientHistory {
                slot_of_day: sod,
                window_days: self.spec.window_days,
                end_day: self.spec.day_index(target.slot_index),
            })
    }
}

/// Returns actual counts plus zero-mean Laplace noise with E|noise| equal to
/// `noise_scale`, clamped at zero. Per-slot expected absolute error is then
/// close to `noise_scale`, so total model error grows about linearly in n.
pub struct NoisyOraclePredictor {
    noise_scale: f64,
    seed: u64,
}

impl NoisyOraclePredictor {
    pub fn new(noise_scale: f64, seed: u64) -> Self {
        assert!(noise_scale >= 0.0);
        Self { noise_scale, seed }
    }
}

impl Predictor for NoisyOraclePredictor {
    fn fit(&mut self, _train: &[MGridCounts]) -> Result<()> {
        Ok(())
    }

    fn predict(&self, target: &MGridCounts) -> Result<Grid<f64>> {
        let root = CounterRng::new(self.seed);
        let side = target.counts.side();
        let mut out = Grid::<f64>::zeros(side);
        for (x, y, c) in target.counts.cells() {
            let mut rng = root.derive(&[
                0x6f72_6163u64,
                target.slot_index as u64,
                (y as u64) << 32 | x as u64,
            ]);
            let noise = rng.laplace(self.noise_scale);
            out.set(x, y, (c as f64 + noise).max(0.0));
        }
        Ok(out)
    }
}

/// Reads forecasts produced outside this crate, one matrix file per slot
/// named `forecast-<slot_index>.txt` (header `n_side slot_index`, row-major
/// values). Negative entries are clamped to zero with a warning.
pub struct ExternalForecastPredictor {
    dir: PathBuf,
    n_side: u32,
}

impl ExternalForecastPredictor {
    pub fn new(dir: impl Into<PathBuf>, n_side: u32) -> Self {
        Self {
            dir: dir.into(),
            n_side,
        }
    }

    pub fn forecast_path(dir: &Path, slot_index: i64) -> PathBuf {
        dir.join(format!("forecast-{slot_index}.txt"))
    }
}

impl Predictor for ExternalForecastPredictor {
    fn fit(&mut self, _train: &[MGridCounts]) -> Result<()> {
        Ok(())
    }

    fn predict(&self, target: &MGridCounts) -> Result<Grid<f64>> {
        let path = Self::forecast_path(&self.dir, target.slot_index);
        let (_, mut grid) = crate::io::read_matrix_f64(&path)?;
        if grid.side() != self.n_side {
            return Err(Error::ShapeMismatch {
                expected: format!("side {}", self.n_side),
                got: format!("side {} in {}", grid.side(), path.display()),
            });
        }
        let mut clamped = 0usize;
        for v in grid.data_mut() {
            if !v.is_finite() {
                return Err(Error::Format {
                    path,
                    why: "non-finite forecast value".into(),
                });
            }
            if *v < 0.0 {
                *v = 0.0;
                clamped += 1;
            }
        }
        if clamped > 0 {
            eprintln!(
                "warning: clamped {clamped} negative forecast value(s) to 0 in {}",
                path.display()
            );
        }
        Ok(grid)
    }
}

/// MAE over all (MGrid, slot) pairs and its n-fold aggregate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub mae: f64,
    pub n: u64,
    /// Exactly n * mae.
    pub total_model_error: f64,
    pub slots_evaluated: usize,
}

/// Mean absolute error of a fitted predictor over the test slots.
pub fn compute_mae(pred: &dyn Predictor, test: &[MGridCounts]) -> Result<MaeReport> {
    let first = test.first().ok_or(Error::EmptyEvaluation)?;
    let n_side = first.counts.side();
    let n = n_side as u64 * n_side as u64;
    let mut acc = CompensatedSum::new();
    for field in test {
        if field.counts.side() != n_side {
            return Err(Error::ShapeMismatch {
                expected: format!("side {n_side}"),
                got: format!("side {}", field.counts.side()),
            });
        }
        let forecast = pred.predict(field)?;
        if forecast.side() != n_side {
            return Err(Error::ShapeMismatch {
                expected: format!("side {n_side}"),
                got: format!("forecast side {}", forecast.side()),
            });
        }
        for (i, &c) in field.counts.data().iter().enumerate() {
            let f = forecast.data()[i];
            if !f.is_finite() || f < 0.0 {
                return Err(Error::invalid(
                    "forecast",
                    "entries must be finite and non-negative",
                ));
            }
            acc.add((f - c as f64).abs());
        }
    }
    let mae = acc.value() / (test.len() as f64 * n as f64);
    Ok(MaeReport {
        mae,
        n,
        total_model_error: n as f64 * mae,
        slots_evaluated: test.len(),
    })
}
