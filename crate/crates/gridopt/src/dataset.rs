//! Event dataset with a train/test day split, as consumed by the tuner.

use crate::error::{Error, Result};
use crate::field::MGridCounts;
use crate::geometry::{GridGeometry, SpatialExtent};
use crate::ingest::{bin_events, estimate_alpha, EventRecord, SlotSeries};
use crate::timeslot::TimeSlotSpec;

/// Raw events plus the split and estimation policy. Days strictly before
/// `test_start_day` are training history; days at or after it are held out.
#[derive(Clone, Debug)]
pub struct EventDataset {
    pub events: Vec<EventRecord>,
    pub extent: SpatialExtent,
    pub spec: TimeSlotSpec,
    pub test_start_day: i64,
    /// Slot of the day whose rate field drives the expression-error term.
    pub alpha_slot_of_day: u32,
}

impl EventDataset {
    pub fn new(
        events: Vec<EventRecord>,
        extent: SpatialExtent,
        spec: TimeSlotSpec,
        test_start_day: i64,
        alpha_slot_of_day: u32,
    ) -> Result<Self> {
        if alpha_slot_of_day >= spec.slots_per_day() {
            return Err(Error::invalid(
                "alpha_slot_of_day",
                format!("{alpha_slot_of_day} out of range"),
            ));
        }
        Ok(Self {
            events,
            extent,
            spec,
            test_start_day,
            alpha_slot_of_day,
        })
    }

    /// Bin at the HGrid resolution of one candidate partition.
    pub fn binned(&self, geometry: GridGeometry) -> SlotSeries {
        bin_events(&self.events, &self.extent, geometry, &self.spec)
    }

    /// Training and test MGrid series derived from one binning pass, so the
    /// MGrid counts are exactly the block sums of the HGrid counts.
    pub fn split_mgrids(&self, series: &SlotSeries) -> (Vec<MGridCounts>, Vec<MGridCounts>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for field in series.iter() {
            let day = self.spec.day_index(field.slot_index);
            if day < self.test_start_day {
                train.push(field.to_mgrid());
            } else {
                test.push(field.to_mgrid());
            }
        }
        (train, test)
    }

    /// Rate field over the training window ending the day before the split.
    pub fn train_alpha(&self, series: &SlotSeries) -> Result<crate::field::AlphaField> {
        estimate_alpha(
            series,
            self.alpha_slot_of_day,
            Some(self.test_start_day - 1),
        )
    }
}
