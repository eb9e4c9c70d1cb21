//! Command-line front end: ingest -> alpha/dalpha -> errors -> tune, plus
//! synthetic-data utilities. All heavy lifting lives in the library; this
//! binary parses flags, wires the pipeline and writes files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gridopt::dataset::EventDataset;
use gridopt::error::Error;
use gridopt::evaluation::{
    empirical_expression_error, empirical_model_error, empirical_real_error, ErrorReport,
    EvaluationSet,
};
use gridopt::expression::total_expression_error;
use gridopt::field::AlphaField;
use gridopt::geometry::{GridGeometry, SpatialExtent};
use gridopt::ingest::{bin_events, estimate_alpha, parse_events, EventRecord, ParsePolicy};
use gridopt::io;
use gridopt::prediction::{
    compute_mae, ExternalForecastPredictor, HistoricalMeanPredictor, NoisyOraclePredictor,
    Predictor,
};
use gridopt::synth;
use gridopt::timeslot::{DayFilter, TimeSlotSpec};
use gridopt::tuner::{
    brute_force_search, iterative_search, ternary_search, PredictorFactory, SearchMethod,
    SearchResult, UpperBoundEvaluator, DEFAULT_BOUND, DEFAULT_P0,
};
use gridopt::uniformity::{scan_d_alpha, select_n, DEFAULT_GROWTH_THRESHOLD};

#[derive(Parser)]
#[command(
    name = "gridopt",
    about = "Grid-size tuning for spatiotemporal event prediction",
    version
)]
struct Cli {
    /// Optional key=value config file; explicit flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Study area as lonmin,latmin,lonmax,latmax.
    #[arg(long, value_parser = parse_extent, default_value = "0,0,1,1")]
    extent: SpatialExtent,

    /// Slot length in minutes; must divide 1440.
    #[arg(long, default_value_t = 30)]
    slot_minutes: u32,

    /// Which days count as estimation history.
    #[arg(long, value_parser = parse_day_filter, default_value = "weekdays")]
    day_filter: DayFilter,

    /// Trailing estimation window, in days.
    #[arg(long, default_value_t = 30)]
    window_days: u32,

    /// Timezone offset applied before slotting, in minutes.
    #[arg(long, default_value_t = 0)]
    utc_offset_minutes: i32,

    /// Reference HGrid resolution per side (N = nref_side^2).
    #[arg(long, default_value_t = 128)]
    nref_side: u32,

    /// Series truncation index K.
    #[arg(long, default_value_t = 250)]
    k: u32,

    /// Slot of the day whose rate field drives expression error
    /// (16 = 08:00-08:30 at 30-minute slots).
    #[arg(long, default_value_t = 16)]
    slot_of_day: u32,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl CommonArgs {
    fn spec(&self) -> Result<TimeSlotSpec, Error> {
        TimeSlotSpec::new(
            self.slot_minutes,
            self.day_filter,
            self.window_days,
            self.utc_offset_minutes,
        )
    }

    fn out_dir(&self) -> Result<&Path, Error> {
        std::fs::create_dir_all(&self.out).map_err(|source| Error::FileWrite {
            path: self.out.clone(),
            source,
        })?;
        Ok(&self.out)
    }
}

fn parse_extent(s: &str) -> Result<SpatialExtent, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err("expected lonmin,latmin,lonmax,latmax".into());
    }
    let mut vals = [0.0f64; 4];
    for (i, p) in parts.iter().enumerate() {
        vals[i] = p.trim().parse().map_err(|_| format!("bad number {p:?}"))?;
    }
    SpatialExtent::new(vals[0], vals[2], vals[1], vals[3]).map_err(|e| e.to_string())
}

fn parse_day_filter(s: &str) -> Result<DayFilter, String> {
    match s {
        "weekdays" => Ok(DayFilter::Weekdays),
        "all" => Ok(DayFilter::All),
        other => Err(format!("{other:?} (expected weekdays|all)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse an event file and write per-slot count fields.
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        events: PathBuf,
        /// Binning resolution per side; defaults to nref-side.
        #[arg(long)]
        h_side: Option<u32>,
        /// skip: drop malformed lines with a warning; abort: fail fast.
        #[arg(long, default_value = "skip")]
        on_error: String,
    },
    /// Estimate the rate field for one slot of the day.
    Alpha {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        h_side: Option<u32>,
    },
    /// Unevenness curve over candidate resolutions and a recommended N.
    Dalpha {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        events: PathBuf,
        /// Candidate sides, strictly increasing, at least 3.
        #[arg(long, value_delimiter = ',')]
        sides: Vec<u32>,
        #[arg(long, default_value_t = DEFAULT_GROWTH_THRESHOLD)]
        threshold: f64,
    },
    /// Per-cell expression error of a stored rate field.
    Ee {
        #[command(flatten)]
        common: CommonArgs,
        /// Rate-field matrix file (header `h_side slot_of_day`).
        #[arg(long)]
        alpha: PathBuf,
        /// MGrid side; must divide the field's side.
        #[arg(long)]
        n_side: u32,
    },
    /// Error decomposition at one partition size, on held-out days.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        n_side: u32,
        /// First held-out day index.
        #[arg(long)]
        test_start_day: i64,
        /// mean | oracle | external
        #[arg(long, default_value = "mean")]
        predictor: String,
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        /// Directory of forecast-<slot>.txt files (predictor = external).
        #[arg(long)]
        forecasts: Option<PathBuf>,
    },
    /// Search for the partition size minimizing the error upper bound.
    Tune {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        test_start_day: i64,
        /// ternary | iterative | brute
        #[arg(long, default_value = "ternary")]
        method: String,
        #[arg(long, default_value_t = DEFAULT_P0)]
        p0: u32,
        #[arg(long, default_value_t = DEFAULT_BOUND)]
        bound: u32,
        /// Candidate sides for brute force (default: all).
        #[arg(long, value_delimiter = ',')]
        candidates: Option<Vec<u32>>,
        /// mean | oracle
        #[arg(long, default_value = "mean")]
        predictor: String,
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        /// Dry-run model errors: `side,mae` file replacing predictor runs.
        #[arg(long)]
        mae_table: Option<PathBuf>,
    },
    /// Draw a synthetic event file from a rate field.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// Rate-field matrix file; omit to use the block preset.
        #[arg(long)]
        alpha: Option<PathBuf>,
        /// Preset field side (used when --alpha is absent).
        #[arg(long, default_value_t = 64)]
        preset_side: u32,
        /// Preset block side.
        #[arg(long, default_value_t = 8)]
        preset_block: u32,
        #[arg(long, default_value_t = 0.5)]
        alpha_lo: f64,
        #[arg(long, default_value_t = 6.0)]
        alpha_hi: f64,
        #[arg(long, default_value_t = 0)]
        first_day: i64,
        #[arg(long, default_value_t = 40)]
        days: u32,
    },
}

#[derive(Serialize)]
struct IngestSummary {
    events_total: u64,
    out_of_extent: usize,
    skipped_lines: usize,
    slots_written: usize,
    h_side: u32,
}

#[derive(Serialize)]
struct AlphaSummary {
    h_side: u32,
    slot_of_day: u32,
    total_rate: f64,
    file: String,
}

#[derive(Serialize)]
struct DalphaSummary {
    selected_n: u64,
    plateau_found: bool,
    threshold: f64,
    curve_file: String,
}

#[derive(Serialize)]
struct EeSummary {
    n_side: u32,
    m_side: u32,
    m: u64,
    k: u32,
    total: f64,
    aggregate_bound: f64,
    cells_file: String,
}

#[derive(Serialize)]
struct SynthSummary {
    events_total: usize,
    days: u32,
    expected_per_day: f64,
    file: String,
}

#[derive(Serialize)]
struct TuneSummary {
    method: SearchMethod,
    chosen_side: u32,
    chosen_n: u64,
    chosen_value: f64,
    probes: usize,
    trace_file: String,
}

fn load_events(
    path: &Path,
    extent: &SpatialExtent,
    spec: &TimeSlotSpec,
    policy: ParsePolicy,
) -> Result<Vec<EventRecord>, Error> {
    let report = parse_events(path, extent, spec, policy).map_err(|e| e.in_stage("parse"))?;
    for s in report.skipped.iter().take(10) {
        eprintln!("warning: skipped line {}: {}", s.line, s.reason);
    }
    if report.skipped.len() > 10 {
        eprintln!("warning: ... and {} more", report.skipped.len() - 10);
    }
    Ok(report.events)
}

fn make_factory<'a>(
    predictor: &str,
    noise_scale: f64,
    seed: u64,
    spec: TimeSlotSpec,
) -> Result<Box<dyn PredictorFactory + 'a>, Error> {
    match predictor {
        "mean" => Ok(Box::new(move |_side: u32| {
            Box::new(HistoricalMeanPredictor::new(spec)) as Box<dyn Predictor>
        })),
        "oracle" => Ok(Box::new(move |_side: u32| {
            Box::new(NoisyOraclePredictor::new(noise_scale, seed)) as Box<dyn Predictor>
        })),
        other => Err(Error::invalid(
            "predictor",
            format!("{other:?} (expected mean|oracle)"),
        )),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest {
            common,
            events,
            h_side,
            on_error,
        } => {
            let spec = common.spec()?;
            let policy = match on_error.as_str() {
                "skip" => ParsePolicy::SkipAndWarn,
                "abort" => ParsePolicy::Abort,
                other => {
                    return Err(Error::invalid(
                        "on-error",
                        format!("{other:?} (expected skip|abort)"),
                    ))
                }
            };
            let report = parse_events(&events, &common.extent, &spec, policy)
                .map_err(|e| e.in_stage("parse"))?;
            let side = h_side.unwrap_or(common.nref_side);
            let geometry = GridGeometry::at_resolution(side)?;
            let series = bin_events(&report.events, &common.extent, geometry, &spec);
            let dir = common.out_dir()?;
            for field in series.iter() {
                io::write_matrix_u32(
                    &dir.join(format!("counts-{}.txt", field.slot_index)),
                    field.slot_index,
                    &field.counts,
                )?;
            }
            let summary = IngestSummary {
                events_total: series.total_events(),
                out_of_extent: report.out_of_extent,
                skipped_lines: report.skipped.len(),
                slots_written: series.len(),
                h_side: side,
            };
            io::write_json(&dir.join("ingest-summary.json"), &summary)?;
            println!(
                "ingested {} events ({} out of extent, {} skipped) into {} slot fields at side {}",
                summary.events_total,
                summary.out_of_extent,
                summary.skipped_lines,
                summary.slots_written,
                side
            );
            Ok(())
        }

        Command::Alpha {
            common,
            events,
            h_side,
        } => {
            let spec = common.spec()?;
            let evs = load_events(&events, &common.extent, &spec, ParsePolicy::SkipAndWarn)?;
            let side = h_side.unwrap_or(common.nref_side);
            let geometry = GridGeometry::at_resolution(side)?;
            let series = bin_events(&evs, &common.extent, geometry, &spec);
            let alpha = estimate_alpha(&series, common.slot_of_day, None)
                .map_err(|e| e.in_stage("alpha estimation"))?;
            let dir = common.out_dir()?;
            let file = format!("alpha-{}.txt", common.slot_of_day);
            io::write_matrix_f64(&dir.join(&file), common.slot_of_day as i64, &alpha.alphas)?;
            let summary = AlphaSummary {
                h_side: side,
                slot_of_day: common.slot_of_day,
                total_rate: alpha.total(),
                file,
            };
            io::write_json(&dir.join("alpha-summary.json"), &summary)?;
            println!(
                "estimated rate field at side {side}: total rate {:.12}",
                summary.total_rate
            );
            Ok(())
        }

        Command::Dalpha {
            common,
            events,
            sides,
            threshold,
        } => {
            if sides.len() < 3 {
                return Err(Error::invalid("sides", "need at least 3 candidates"));
            }
            let spec = common.spec()?;
            let evs = load_events(&events, &common.extent, &spec, ParsePolicy::SkipAndWarn)?;
            let curve = scan_d_alpha(
                &evs,
                &common.extent,
                &spec,
                common.slot_of_day,
                &sides,
                None,
            )
            .map_err(|e| e.in_stage("scan"))?;
            let sel = select_n(&curve, threshold)?;
            let dir = common.out_dir()?;
            io::write_curve(&dir.join("dalpha-curve.csv"), &curve)?;
            let summary = DalphaSummary {
                selected_n: sel.n,
                plateau_found: sel.plateau_found,
                threshold,
                curve_file: "dalpha-curve.csv".into(),
            };
            io::write_json(&dir.join("dalpha-summary.json"), &summary)?;
            if sel.plateau_found {
                println!("recommended N = {}", sel.n);
            } else {
                println!(
                    "warning: no plateau below threshold {threshold}; falling back to N = {}",
                    sel.n
                );
            }
            Ok(())
        }

        Command::Ee {
            common,
            alpha,
            n_side,
        } => {
            let (slot, grid) = io::read_matrix_f64(&alpha)?;
            let h_side = grid.side();
            if n_side == 0 || h_side % n_side != 0 {
                return Err(Error::invalid(
                    "n-side",
                    format!("{n_side} must divide the field side {h_side}"),
                ));
            }
            let geometry = GridGeometry::with_sides(n_side, h_side / n_side)?;
            let field = AlphaField::new(geometry, slot.max(0) as u32, grid)?;
            let out = total_expression_error(&field, common.k)
                .map_err(|e| e.in_stage("expression error"))?;
            let dir = common.out_dir()?;
            io::write_matrix_f64(&dir.join("ee-cells.txt"), slot, &out.per_cell)?;
            let summary = EeSummary {
                n_side,
                m_side: geometry.m_side(),
                m: geometry.m(),
                k: common.k,
                total: out.total,
                aggregate_bound: 2.0 * (1.0 - 1.0 / geometry.m() as f64) * field.total(),
                cells_file: "ee-cells.txt".into(),
            };
            io::write_json(&dir.join("ee-summary.json"), &summary)?;
            println!(
                "expression error total {:.12} over {} cells (m = {})",
                out.total,
                out.per_cell.len(),
                geometry.m()
            );
            Ok(())
        }

        Command::Eval {
            common,
            events,
            n_side,
            test_start_day,
            predictor,
            noise_scale,
            forecasts,
        } => {
            let spec = common.spec()?;
            let evs = load_events(&events, &common.extent, &spec, ParsePolicy::SkipAndWarn)?;
            let data =
                EventDataset::new(evs, common.extent, spec, test_start_day, common.slot_of_day)?;
            let geometry = GridGeometry::new(n_side, common.nref_side)?;
            let series = data.binned(geometry);
            let (train, test) = data.split_mgrids(&series);

            let mut pred: Box<dyn Predictor> = match predictor.as_str() {
                "mean" => Box::new(HistoricalMeanPredictor::new(spec)),
                "oracle" => Box::new(NoisyOraclePredictor::new(noise_scale, common.seed)),
                "external" => {
                    let dir = forecasts.ok_or_else(|| {
                        Error::invalid("forecasts", "required for predictor=external")
                    })?;
                    Box::new(ExternalForecastPredictor::new(dir, n_side))
                }
                other => {
                    return Err(Error::invalid(
                        "predictor",
                        format!("{other:?} (expected mean|oracle|external)"),
                    ))
                }
            };
            pred.fit(&train).map_err(|e| e.in_stage("model fit"))?;
            let mae_report =
                compute_mae(pred.as_ref(), &test).map_err(|e| e.in_stage("model eval"))?;

            let alpha = data
                .train_alpha(&series)
                .map_err(|e| e.in_stage("alpha estimation"))?;
            let expression = total_expression_error(&alpha, common.k)
                .map_err(|e| e.in_stage("expression error"))?;

            // held-out evaluation set at HGrid resolution
            let mut pairs = Vec::new();
            for mg in &test {
                let forecast = pred.predict(mg).map_err(|e| e.in_stage("predict"))?;
                let actual = series
                    .get(mg.slot_index)
                    .expect("test slot came from the series")
                    .counts
                    .clone();
                pairs.push((forecast, actual));
            }
            let ev = EvaluationSet::from_mgrid_forecasts(geometry, pairs)?;
            let report = ErrorReport {
                n_side,
                n: geometry.n(),
                m: geometry.m(),
                k: common.k,
                slots_evaluated: mae_report.slots_evaluated,
                mae: mae_report.mae,
                e_e_total: expression.total,
                e_m_total: mae_report.total_model_error,
                e_u_total: expression.total + mae_report.total_model_error,
                e_r_empirical: Some(empirical_real_error(&ev)?),
                e_e_empirical: Some(empirical_expression_error(&ev)?),
                e_m_empirical: Some(empirical_model_error(&ev)?),
            };
            let dir = common.out_dir()?;
            io::write_json(&dir.join("eval-report.json"), &report)?;
            println!(
                "n_side {n_side}: E_e {:.12}, n*MAE {:.12}, bound {:.12}, empirical real {:.12}",
                report.e_e_total,
                report.e_m_total,
                report.e_u_total,
                report.e_r_empirical.unwrap()
            );
            Ok(())
        }

        Command::Tune {
            common,
            events,
            test_start_day,
            method,
            p0,
            bound,
            candidates,
            predictor,
            noise_scale,
            mae_table,
        } => {
            let spec = common.spec()?;
            let method: SearchMethod = method.parse()?;
            let evs = load_events(&events, &common.extent, &spec, ParsePolicy::SkipAndWarn)?;
            let data =
                EventDataset::new(evs, common.extent, spec, test_start_day, common.slot_of_day)?;
            let factory = make_factory(&predictor, noise_scale, common.seed, spec)?;
            let mut eval = UpperBoundEvaluator::new(&data, common.nref_side, common.k, factory);
            if let Some(path) = mae_table {
                eval = eval.with_mae_table(io::read_mae_table(&path)?);
            }

            let result: SearchResult = match method {
                SearchMethod::Ternary => ternary_search(&mut eval),
                SearchMethod::Iterative => iterative_search(&mut eval, p0, bound),
                SearchMethod::Brute => brute_force_search(&mut eval, candidates.as_deref()),
            };
            let trace = result.map_err(|f| {
                eprintln!("search failed after {} probes", f.probes.len());
                f.error
            })?;

            let dir = common.out_dir()?;
            io::write_json(&dir.join("tune-trace.json"), &trace)?;
            for b in eval.breakdowns() {
                let report = ErrorReport {
                    n_side: b.side,
                    n: b.side as u64 * b.side as u64,
                    m: GridGeometry::new(b.side, common.nref_side)?.m(),
                    k: common.k,
                    slots_evaluated: b.test_slots,
                    mae: b.mae,
                    e_e_total: b.expression_total,
                    e_m_total: b.model_total,
                    e_u_total: b.value,
                    e_r_empirical: None,
                    e_e_empirical: None,
                    e_m_empirical: None,
                };
                io::write_json(&dir.join(format!("tune-report-{}.json", b.side)), &report)?;
            }
            let summary = TuneSummary {
                method,
                chosen_side: trace.chosen_side,
                chosen_n: trace.chosen_n,
                chosen_value: trace.chosen_value,
                probes: trace.probes.len(),
                trace_file: "tune-trace.json".into(),
            };
            io::write_json(&dir.join("tune-summary.json"), &summary)?;
            println!(
                "{method:?} search chose n = {} (side {}) with bound {:.12} after {} probes",
                trace.chosen_n,
                trace.chosen_side,
                trace.chosen_value,
                trace.probes.len()
            );
            Ok(())
        }

        Command::Synth {
            common,
            alpha,
            preset_side,
            preset_block,
            alpha_lo,
            alpha_hi,
            first_day,
            days,
        } => {
            let spec = common.spec()?;
            let field = match alpha {
                Some(path) => {
                    let (slot, grid) = io::read_matrix_f64(&path)?;
                    AlphaField::new(
                        GridGeometry::at_resolution(grid.side())?,
                        slot.max(0) as u32,
                        grid,
                    )?
                }
                None => synth::block_alpha_field(
                    preset_side,
                    preset_block,
                    alpha_lo,
                    alpha_hi,
                    common.slot_of_day,
                    common.seed,
                )?,
            };
            let events = synth::events_from_alpha(
                &field,
                &common.extent,
                &spec,
                first_day,
                days,
                common.seed,
            );
            let dir = common.out_dir()?;
            let file = dir.join("events.csv");
            synth::write_events_csv(&file, &events)?;
            let summary = SynthSummary {
                events_total: events.len(),
                days,
                expected_per_day: field.total(),
                file: "events.csv".into(),
            };
            io::write_json(&dir.join("synth-summary.json"), &summary)?;
            println!(
                "wrote {} events over {days} days (expected {:.12} per day)",
                summary.events_total, summary.expected_per_day
            );
            Ok(())
        }
    }
}

/// Merge `--config key=value` entries into argv for any flag not given
/// explicitly; explicit flags win.
fn merged_args() -> Vec<String> {
    let mut args: Vec<String> = std::env::args().collect();
    let config_path = args
        .iter()
        .position(|a| a == "--config")
        .and_then(|i| args.get(i + 1).cloned());
    let Some(path) = config_path else {
        return args;
    };
    let Ok(text) = std::fs::read_to_string(&path) else {
        return args; // clap will surface the bad path when parsing
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            let flag = format!("--{}", key.trim());
            if !args.contains(&flag) {
                args.push(flag);
                args.push(value.trim().to_string());
            }
        }
    }
    args
}

fn main() {
    let cli = Cli::parse_from(merged_args());
    if let Err(err) = run(cli) {
        eprintln!("gridopt: {err}");
        let mut source = std::error::Error::source(&err);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(1);
    }
}
