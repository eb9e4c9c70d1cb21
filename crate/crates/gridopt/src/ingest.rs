//! Event parsing, grid binning and rate estimation.
//!
//! Event files are comma-separated text with a `timestamp,lon,lat` header;
//! timestamps are ISO-8601 (either with an explicit offset, or naive and
//! interpreted in the configured timezone).

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{AlphaField, CountField, Grid};
use crate::geometry::{GridGeometry, SpatialExtent};
use crate::timeslot::TimeSlotSpec;

pub const EVENT_FILE_HEADER: &str = "timestamp,lon,lat";

/// One spatial event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRecord {
    pub unix_secs: i64,
    pub lon: f64,
    pub lat: f64,
}

/// What to do with a malformed line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParsePolicy {
    SkipAndWarn,
    Abort,
}

#[derive(Clone, Debug)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

/// Records inside the extent, plus counts of what was filtered out.
#[derive(Clone, Debug, Default)]
pub struct ParseReport {
    pub events: Vec<EventRecord>,
    pub out_of_extent: usize,
    pub skipped: Vec<SkippedLine>,
}

fn parse_timestamp(s: &str, utc_offset_minutes: i32) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
            // naive stamps are local wall time in the configured zone
            return Some(naive.and_utc().timestamp() - utc_offset_minutes as i64 * 60);
        }
    }
    None
}

fn parse_line(line: &str, utc_offset_minutes: i32) -> std::result::Result<EventRecord, String> {
    let mut parts = line.split(',');
    let (ts, lon, lat) = match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err("expected 3 comma-separated fields".into()),
    };
    if parts.next().is_some() {
        return Err("expected exactly 3 fields".into());
    }
    let unix_secs = parse_timestamp(ts, utc_offset_minutes)
        .ok_or_else(|| format!("unparseable timestamp {ts:?}"))?;
    let lon: f64 = lon
        .trim()
        .parse()
        .map_err(|_| format!("unparseable lon {lon:?}"))?;
    let lat: f64 = lat
        .trim()
        .parse()
        .map_err(|_| format!("unparseable lat {lat:?}"))?;
    if !lon.is_finite() || !lat.is_finite() {
        return Err("coordinates must be finite".into());
    }
    Ok(EventRecord {
        unix_secs,
        lon,
        lat,
    })
}

/// Parse an event file, keeping records inside `extent`. Records outside the
/// extent are counted, not returned; malformed lines follow `policy`.
pub fn parse_events(
    path: &Path,
    extent: &SpatialExtent,
    spec: &TimeSlotSpec,
    policy: ParsePolicy,
) -> Result<ParseReport> {
    let file = std::fs::File::open(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    parse_events_reader(std::io::BufReader::new(file), path, extent, spec, policy)
}

pub fn parse_events_reader<R: BufRead>(
    reader: R,
    path: &Path,
    extent: &SpatialExtent,
    spec: &TimeSlotSpec,
    policy: ParsePolicy,
) -> Result<ParseReport> {
    let mut report = ParseReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| Error::FileRead {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if line_no == 1 && trimmed.eq_ignore_ascii_case(EVENT_FILE_HEADER) {
            continue;
        }
        match parse_line(trimmed, spec.utc_offset_minutes) {
            Ok(rec) => {
                if extent.contains(rec.lon, rec.lat) {
                    report.events.push(rec);
                } else {
                    report.out_of_extent += 1;
                }
            }
            Err(reason) => match policy {
                ParsePolicy::Abort => {
                    return Err(Error::Record {
                        path: path.to_path_buf(),
                        line: line_no,
                        why: reason,
                    })
                }
                ParsePolicy::SkipAndWarn => report.skipped.push(SkippedLine {
                    line: line_no,
                    reason,
                }),
            },
        }
    }
    Ok(report)
}

/// Per-slot count fields. Only slots with at least one event are
/// materialized; anything else inside the covered range is an all-zero field.
#[derive(Clone, Debug)]
pub struct SlotSeries {
    pub geometry: GridGeometry,
    pub spec: TimeSlotSpec,
    fields: BTreeMap<i64, CountField>,
}

impl SlotSeries {
    pub fn empty(geometry: GridGeometry, spec: TimeSlotSpec) -> Self {
        Self {
            geometry,
            spec,
            fields: BTreeMap::new(),
        }
    }

    pub fn get(&self, slot_index: i64) -> Option<&CountField> {
        self.fields.get(&slot_index)
    }

    pub fn insert(&mut self, field: CountField) {
        self.fields.insert(field.slot_index, field);
    }

    pub fn iter(&self) -> impl Iterator<Item = &CountField> {
        self.fields.values()
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn total_events(&self) -> u64 {
        self.fields.values().map(|f| f.total()).sum()
    }

    pub fn slot_range(&self) -> Option<(i64, i64)> {
        match (self.fields.keys().next(), self.fields.keys().next_back()) {
            (Some(&a), Some(&b)) => Some((a, b)),
            _ => None,
        }
    }

    pub fn day_range(&self) -> Option<(i64, i64)> {
        self.slot_range()
            .map(|(a, b)| (self.spec.day_index(a), self.spec.day_index(b)))
    }
}

/// Bin events into per-slot HGrid count fields. The cell of an event is the
/// floor of the affine map onto `[0, h_side)^2`, with the max boundary
/// clamped into the last cell; the grand total over all slots equals the
/// number of events.
pub fn bin_events(
    events: &[EventRecord],
    extent: &SpatialExtent,
    geometry: GridGeometry,
    spec: &TimeSlotSpec,
) -> SlotSeries {
    let side = geometry.h_side();
    let mut grids: BTreeMap<i64, Grid<u32>> = BTreeMap::new();
    for ev in events {
        let slot = spec.slot_index(ev.unix_secs);
        let (cx, cy) = extent.cell_of(ev.lon, ev.lat, side);
        let grid = grids.entry(slot).or_insert_with(|| Grid::zeros(side));
        let i = grid.idx(cx, cy);
        grid.data_mut()[i] += 1;
    }
    let mut series = SlotSeries::empty(geometry, *spec);
    for (slot, grid) in grids {
        series.insert(CountField {
            geometry,
            slot_index: slot,
            counts: grid,
        });
    }
    series
}

/// Mean count per cell for one slot of the day, over the qualifying days of
/// the trailing window.
///
/// The window covers the `window_days` calendar days ending at
/// `window_end_day` (default: the last day present in the series), filtered
/// by the spec's day filter and clipped to the series' day range. Days inside
/// the window with no events contribute zero counts; if no day qualifies at
/// all, this is an error rather than a silent zero field.
pub fn estimate_alpha(
    series: &SlotSeries,
    slot_of_day: u32,
    window_end_day: Option<i64>,
) -> Result<AlphaField> {
    let spec = &series.spec;
    if slot_of_day >= spec.slots_per_day() {
        return Err(Error::invalid(
            "slot_of_day",
            format!(
                "{slot_of_day} out of range for {} slots per day",
                spec.slots_per_day()
            ),
        ));
    }
    let (day_min, day_max) = series.day_range().ok_or(Error::InsufficientHistory {
        slot_of_day,
        window_days: spec.window_days,
        end_day: window_end_day.unwrap_or(0),
    })?;
    let end = window_end_day.unwrap_or(day_max);
    let start = end - spec.window_days as i64 + 1;
    let days: Vec<i64> = (start.max(day_min)..=end.min(day_max))
        .filter(|&d| spec.day_qualifies(d))
        .collect();
    if days.is_empty() {
        return Err(Error::InsufficientHistory {
            slot_of_day,
            window_days: spec.window_days,
            end_day: end,
        });
    }

    let side = series.geometry.h_side();
    // integer counts sum exactly in f64; the mean is then bit-deterministic
    let mut sums = vec![0.0f64; (side as usize).pow(2)];
    for &day in &days {
        if let Some(field) = series.get(spec.slot_for(day, slot_of_day)) {
            for (i, &c) in field.counts.data().iter().enumerate() {
                sums[i] += c as f64;
            }
        }
    }
    let denom = days.len() as f64;
    let alphas = Grid::from_vec(side, sums.into_iter().map(|s| s / denom).collect())?;
    AlphaField::new(series.geometry, slot_of_day, alphas)
}

/// Re-bin raw events at the HGrid resolution of a candidate partition and
/// estimate the rate field there, with the same estimator as
/// [`estimate_alpha`].
pub fn rebin_alpha(
    events: &[EventRecord],
    extent: &SpatialExtent,
    n_side: u32,
    n_ref_side: u32,
    spec: &TimeSlotSpec,
    slot_of_day: u32,
    window_end_day: Option<i64>,
) -> Result<AlphaField> {
    let geometry = GridGeometry::new(n_side, n_ref_side)?;
    let series = bin_events(events, extent, geometry, spec);
    estimate_alpha(&series, slot_of_day, window_end_day)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::timeslot::DayFilter;
    use std::io::Cursor;
    use std::path::PathBuf;

    fn extent() -> SpatialExtent {
        SpatialExtent::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    fn spec() -> TimeSlotSpec {
        TimeSlotSpec::default()
    }

    fn fake_path() -> PathBuf {
        PathBuf::from("<test>")
    }

    #[test]
    fn empty_file_is_empty_report() {
        let r = parse_events_reader(
            Cursor::new(""),
            &fake_path(),
            &extent(),
            &spec(),
            ParsePolicy::Abort,
        )
        .unwrap();
        assert!(r.events.is_empty());
        assert_eq!(r.out_of_extent, 0);
        assert!(r.skipped.is_empty());
    }

    #[test]
    fn out_of_extent_rows_are_counted_not_returned() {
        let text = "timestamp,lon,lat\n\
                    1970-01-05T08:10:00Z,0.5,0.5\n\
                    1970-01-05T08:11:00Z,0.1,0.9\n\
                    1970-01-05T08:12:00Z,0.9,0.1\n\
                    1970-01-05T08:13:00Z,1.5,0.5\n";
        let r = parse_events_reader(
            Cursor::new(text),
            &fake_path(),
            &extent(),
            &spec(),
            ParsePolicy::Abort,
        )
        .unwrap();
        assert_eq!(r.events.len(), 3);
        assert_eq!(r.out_of_extent, 1);
    }

    #[test]
    fn malformed_line_policies() {
        let text = "timestamp,lon,lat\n1970-01-05T08:10:00Z,0.5\n1970-01-05T08:10:00Z,0.5,0.5\n";
        let err = parse_events_reader(
            Cursor::new(text),
            &fake_path(),
            &extent(),
            &spec(),
            ParsePolicy::Abort,
        )
        .unwrap_err();
        match err {
            Error::Record { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let r = parse_events_reader(
            Cursor::new(text),
            &fake_path(),
            &extent(),
            &spec(),
            ParsePolicy::SkipAndWarn,
        )
        .unwrap();
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].line, 2);
    }

    #[test]
    fn naive_timestamps_use_configured_offset() {
        let off = TimeSlotSpec::new(30, DayFilter::All, 30, 60).unwrap();
        let text = "timestamp,lon,lat\n1970-01-05 08:00:00,0.5,0.5\n";
        let r = parse_events_reader(
            Cursor::new(text),
            &fake_path(),
            &extent(),
            &off,
            ParsePolicy::Abort,
        )
        .unwrap();
        // local 08:00 at +60min offset is 07:00 UTC
        assert_eq!(r.events[0].unix_secs, 4 * 86_400 + 7 * 3600);
        // and it lands back in local slot-of-day 16
        assert_eq!(off.slot_of_day(off.slot_index(r.events[0].unix_secs)), 16);
    }

    #[test]
    fn binning_boundary_and_conservation() {
        let geo = GridGeometry::at_resolution(8).unwrap();
        let ev = |lon: f64, lat: f64| EventRecord {
            unix_secs: 4 * 86_400,
            lon,
            lat,
        };
        let series = bin_events(&[ev(0.0, 0.0)], &extent(), geo, &spec());
        let field = series.iter().next().unwrap();
        assert_eq!(field.counts.get(0, 0), 1);

        // max-boundary event clamps into the last cell
        let series = bin_events(&[ev(1.0, 1.0)], &extent(), geo, &spec());
        assert_eq!(series.iter().next().unwrap().counts.get(7, 7), 1);

        // 1000 uniform events conserve the grand total at any geometry
        let mut rng = CounterRng::new(11);
        let events: Vec<EventRecord> = (0..1000)
            .map(|i| EventRecord {
                unix_secs: 4 * 86_400 + i * 13 % 86_000,
                lon: rng.range_f64(0.0, 1.0),
                lat: rng.range_f64(0.0, 1.0),
            })
            .collect();
        for n_side in [1u32, 3, 8] {
            let geo = GridGeometry::new(n_side, 8).unwrap();
            let series = bin_events(&events, &extent(), geo, &spec());
            assert_eq!(series.total_events(), 1000, "n_side={n_side}");
        }
    }

    #[test]
    fn no_events_means_no_fields() {
        let geo = GridGeometry::at_resolution(4).unwrap();
        let series = bin_events(&[], &extent(), geo, &spec());
        assert!(series.is_empty());
        assert_eq!(series.total_events(), 0);
    }

    #[test]
    fn rebinning_consistency_with_direct_mgrid_binning() {
        let mut rng = CounterRng::new(3);
        let events: Vec<EventRecord> = (0..500)
            .map(|_| EventRecord {
                unix_secs: 4 * 86_400 + 1000,
                lon: rng.range_f64(0.0, 1.0),
                lat: rng.range_f64(0.0, 1.0),
            })
            .collect();
        let fine_geo = GridGeometry::new(4, 16).unwrap(); // h_side 16, m_side 4
        let coarse_geo = GridGeometry::at_resolution(4).unwrap();
        let fine = bin_events(&events, &extent(), fine_geo, &spec());
        let coarse = bin_events(&events, &extent(), coarse_geo, &spec());
        let slot = fine.slot_range().unwrap().0;
        let summed = fine.get(slot).unwrap().to_mgrid();
        let direct = coarse.get(slot).unwrap();
        for (x, y, v) in summed.counts.cells() {
            assert_eq!(v, direct.counts.get(x, y) as u64);
        }
    }

    fn series_with_counts(day_counts: &[(i64, u32)]) -> SlotSeries {
        let geo = GridGeometry::at_resolution(2).unwrap();
        let sp = TimeSlotSpec::default();
        let mut series = SlotSeries::empty(geo, sp);
        for &(day, c) in day_counts {
            let mut g = Grid::<u32>::zeros(2);
            g.set(0, 0, c);
            series.insert(CountField {
                geometry: geo,
                slot_index: sp.slot_for(day, 16),
                counts: g,
            });
        }
        series
    }

    #[test]
    fn alpha_mean_of_one_and_two_days() {
        // day 4 = Monday 1970-01-05, day 5 = Tuesday: both weekdays
        let series = series_with_counts(&[(4, 3)]);
        let alpha = estimate_alpha(&series, 16, None).unwrap();
        assert_eq!(alpha.alphas.get(0, 0), 3.0);

        let series = series_with_counts(&[(4, 2), (5, 4)]);
        let alpha = estimate_alpha(&series, 16, None).unwrap();
        assert_eq!(alpha.alphas.get(0, 0), 3.0);
        assert_eq!(alpha.alphas.get(1, 1), 0.0);
    }

    #[test]
    fn alpha_requires_qualifying_history() {
        // day 2 = Saturday, day 3 = Sunday: filtered out by Weekdays
        let series = series_with_counts(&[(2, 5), (3, 5)]);
        let err = estimate_alpha(&series, 16, None).unwrap_err();
        assert!(matches!(err, Error::InsufficientHistory { .. }));
    }

    #[test]
    fn alpha_estimate_concentrates_around_rate() {
        // 30 days of Poisson(5) per cell: at least 99% of cells within
        // 5 +- 3*sqrt(5/30)
        let geo = GridGeometry::at_resolution(16).unwrap();
        let sp = TimeSlotSpec::new(30, DayFilter::All, 30, 0).unwrap();
        let mut series = SlotSeries::empty(geo, sp);
        let root = CounterRng::new(99);
        for day in 0..30i64 {
            let mut g = Grid::<u32>::zeros(16);
            for y in 0..16u32 {
                for x in 0..16u32 {
                    let mut rng = root.derive(&[day as u64, (y * 16 + x) as u64]);
                    g.set(x, y, rng.poisson(5.0) as u32);
                }
            }
            series.insert(CountField {
                geometry: geo,
                slot_index: sp.slot_for(day, 16),
                counts: g,
            });
        }
        let alpha = estimate_alpha(&series, 16, None).unwrap();
        let band = 3.0 * (5.0f64 / 30.0).sqrt();
        let ok = alpha
            .alphas
            .data()
            .iter()
            .filter(|&&a| (a - 5.0).abs() <= band)
            .count();
        assert!(
            ok as f64 >= 0.99 * 256.0,
            "only {ok}/256 cells inside the band"
        );
    }

    #[test]
    fn rebin_preserves_uniform_fields() {
        // deterministic lattice of events: 4 per finest cell on a 16x16 grid
        let mut events = Vec::new();
        for y in 0..16 {
            for x in 0..16 {
                for (dx, dy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                    events.push(EventRecord {
                        unix_secs: 4 * 86_400 + 8 * 3600,
                        lon: (x as f64 + dx) / 16.0,
                        lat: (y as f64 + dy) / 16.0,
                    });
                }
            }
        }
        for side in [2u32, 4, 8, 16] {
            let alpha = rebin_alpha(&events, &extent(), side, side, &spec(), 16, None).unwrap();
            let first = alpha.alphas.data()[0];
            assert!(alpha.alphas.data().iter().all(|&a| a == first));
        }
    }

    #[test]
    fn alpha_linearity_under_merging() {
        let mut rng = CounterRng::new(21);
        let events: Vec<EventRecord> = (0..2000)
            .map(|_| EventRecord {
                unix_secs: 4 * 86_400 + 8 * 3600 + 600,
                lon: rng.range_f64(0.0, 1.0),
                lat: rng.range_f64(0.0, 1.0),
            })
            .collect();
        let fine = rebin_alpha(&events, &extent(), 8, 8, &spec(), 16, None).unwrap();
        let coarse = rebin_alpha(&events, &extent(), 4, 4, &spec(), 16, None).unwrap();
        for y in 0..4u32 {
            for x in 0..4u32 {
                let merged: f64 = (0..2)
                    .flat_map(|dy| (0..2).map(move |dx| (dx, dy)))
                    .map(|(dx, dy)| fine.alphas.get(x * 2 + dx, y * 2 + dy))
                    .sum();
                assert!((merged - coarse.alphas.get(x, y)).abs() < 1e-12);
            }
        }
    }
}
