//! Predictive features for a bike-sharing product line.
//!
//! The crate covers the whole loop from usage data to product selection:
//!
//! * [`domain`] holds stations, trips, GPS trajectories and the live
//!   docked/in-transit system state behind the `AllBikesNow` feature.
//! * [`datagen`] produces deterministic synthetic usage logs and
//!   trajectories, and reads/writes the on-disk formats.
//! * [`learners`] implements the `UserProfile` feature (per-user naive Bayes
//!   or logistic-regression destination classifiers plus a ridge duration
//!   regressor) and the `LocationPreview` feature (an echo state network over
//!   trajectory prefixes, with a sliding-window static baseline).
//! * [`evaluation`] runs training, K-fold model selection and final
//!   assessment on an external hold-out set.
//! * [`featuremodel`] enumerates products of the attributed feature model,
//!   fills measured attributes from evaluation reports and ranks products by
//!   a cost/performance score.

pub mod datagen;
pub mod domain;
pub mod evaluation;
pub mod featuremodel;
pub mod learners;
pub mod linalg;
pub mod persist;
pub mod rng;

pub use domain::{
    BikeId, Event, GpsTrajectory, GroundTruth, Point, StateError, Station, StationId, StationMap,
    SystemState, Timestamp, TrajectoryPoint, TripRecord, UserId,
};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
