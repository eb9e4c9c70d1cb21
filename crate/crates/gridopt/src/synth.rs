//! Synthetic data: block-structured rate fields and event files drawn from
//! them. This is what desk-scale experiments and the test oracles run on.

use crate::error::Result;
use crate::field::{AlphaField, Grid};
use crate::geometry::{GridGeometry, SpatialExtent};
use crate::ingest::EventRecord;
use crate::rng::CounterRng;
use crate::timeslot::TimeSlotSpec;

/// Rate field that is constant inside square blocks of `block_side` cells,
/// with block values drawn uniformly from `[lo, hi]`. Heterogeneous across
/// blocks, uniform within them.
pub fn block_alpha_field(
    side: u32,
    block_side: u32,
    lo: f64,
    hi: f64,
    slot_of_day: u32,
    seed: u64,
) -> Result<AlphaField> {
    assert!(block_side >= 1 && side.is_multiple_of(block_side));
    let blocks = side / block_side;
    let root = CounterRng::new(seed);
    let mut values = Grid::<f64>::zeros(side);
    for by in 0..blocks {
        for bx in 0..blocks {
            let mut rng = root.derive(&[0x626c_6f63u64, (by as u64) << 32 | bx as u64]);
            let v = rng.range_f64(lo, hi);
            for dy in 0..block_side {
                for dx in 0..block_side {
                    values.set(bx * block_side + dx, by * block_side + dy, v);
                }
            }
        }
    }
    AlphaField::new(GridGeometry::at_resolution(side)?, slot_of_day, values)
}

/// Multiplicative cascade: a base rate modulated by independent uniform
/// factors at each given block scale. Unlike a single-scale block field,
/// every refinement of the partition keeps revealing rate variance, which is
/// what city-like demand surfaces do.
pub fn cascade_alpha_field(
    side: u32,
    block_sides: &[u32],
    spread: f64,
    base: f64,
    slot_of_day: u32,
    seed: u64,
) -> Result<AlphaField> {
    assert!((0.0..1.0).contains(&spread) && base >= 0.0);
    let root = CounterRng::new(seed);
    let mut values = vec![base; (side as usize).pow(2)];
    for (layer, &block) in block_sides.iter().enumerate() {
        assert!(block >= 1 && side.is_multiple_of(block));
        let blocks = side / block;
        for by in 0..blocks {
            for bx in 0..blocks {
                let mut rng =
                    root.derive(&[0x6361_7363u64, layer as u64, (by as u64) << 32 | bx as u64]);
                let w = rng.range_f64(1.0 - spread, 1.0 + spread);
                for dy in 0..block {
                    for dx in 0..block {
                        values[((by * block + dy) * side + bx * block + dx) as usize] *= w;
                    }
                }
            }
        }
    }
    AlphaField::new(
        GridGeometry::at_resolution(side)?,
        slot_of_day,
        Grid::from_vec(side, values)?,
    )
}

/// Draw events for `days` consecutive days at the field's slot of the day:
/// per day and cell, a Poisson count of events placed uniformly inside the
/// cell and the slot. Deterministic per seed, independent streams per
/// (day, cell).
pub fn events_from_alpha(
    alpha: &AlphaField,
    extent: &SpatialExtent,
    spec: &TimeSlotSpec,
    first_day: i64,
    days: u32,
    seed: u64,
) -> Vec<EventRecord> {
    let side = alpha.geometry.h_side();
    let cell_w = (extent.lon_max - extent.lon_min) / side as f64;
    let cell_h = (extent.lat_max - extent.lat_min) / side as f64;
    let slot_secs = spec.slot_minutes as i64 * 60;
    let root = CounterRng::new(seed);
    let mut events = Vec::new();
    for d in 0..days {
        let day = first_day + d as i64;
        let slot = spec.slot_for(day, alpha.slot_of_day);
        let start = spec.slot_start_unix(slot);
        for (x, y, a) in alpha.alphas.cells() {
            if a == 0.0 {
                continue;
            }
            let mut rng = root.derive(&[0x6576_656eu64, day as u64, (y as u64) << 32 | x as u64]);
            let count = rng.poisson(a);
            for _ in 0..count {
                let lon = extent.lon_min + (x as f64 + rng.next_f64()) * cell_w;
                let lat = extent.lat_min + (y as f64 + rng.next_f64()) * cell_h;
                let offset = (rng.next_u64() % slot_secs as u64) as i64;
                events.push(EventRecord {
                    unix_secs: start + offset,
                    lon,
                    lat,
                });
            }
        }
    }
    events
}

/// Write events as a `timestamp,lon,lat` file (RFC 3339 timestamps, UTC).
pub fn write_events_csv(path: &std::path::Path, events: &[EventRecord]) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|source| crate::error::Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |source| crate::error::Error::FileWrite {
        path: path.to_path_buf(),
        source,
    };
    writeln!(w, "{}", crate::ingest::EVENT_FILE_HEADER).map_err(io_err)?;
    for ev in events {
        let ts = chrono::DateTime::from_timestamp(ev.unix_secs, 0)
            .expect("timestamp in range")
            .format("%Y-%m-%dT%H:%M:%SZ");
        writeln!(w, "{ts},{},{}", ev.lon, ev.lat).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
