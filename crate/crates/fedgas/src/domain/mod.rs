//! Core data model shared by every other module: date-indexed datasets,
//! participants, hierarchy topology, and sample/feature partitioning.
//!
//! All types are immutable after construction and safe to share across
//! threads; the operations are pure functions.

mod dataset;
mod participant;
mod partition;

pub use dataset::{align_by_date, load_csv, write_csv, CsvSchema, TargetColumn, TimeSeriesDataset};
pub use participant::{HierarchyConfig, Participant, ParticipantId, Role, Tier};
pub use partition::{partition_horizontal, partition_vertical};

#[cfg(test)]
mod thread_safety {
    use super::*;

    fn assert_shareable<T: Send + Sync>() {}

    #[test]
    fn domain_types_are_shareable_across_threads() {
        assert_shareable::<TimeSeriesDataset>();
        assert_shareable::<Participant>();
        assert_shareable::<HierarchyConfig>();
        assert_shareable::<crate::forecaster::ForecasterParams>();
        assert_shareable::<crate::incentive::ScoreCard>();
        assert_shareable::<crate::simnet::Transcript>();
    }
}
