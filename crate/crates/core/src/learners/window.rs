//! Sliding-window baseline for `LocationPreview`.
//!
//! Each trajectory point contributes one static sample: the encoded features
//! of the last `window_len` points up to and including it, zero-padded at the
//! start of the sequence and flattened oldest first.

use serde::{Deserialize, Serialize};

use super::{
    train_classifier, ClassifierModel, ClassifierSetting, DestinationPrediction, FeatureKind,
    LearnError, SequenceEncoder, StaticInput,
};
use crate::domain::{GpsTrajectory, StationMap, TrajectoryPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowClassifier {
    pub window_len: usize,
    pub encoder: SequenceEncoder,
    pub classifier: ClassifierModel,
}

/// Flattened windows ending at every point of `points`.
pub fn windows(
    encoder: &SequenceEncoder,
    points: &[TrajectoryPoint],
    window_len: usize,
) -> Vec<Vec<f64>> {
    let steps = encoder.encode(points);
    let d = encoder.dim();
    (0..steps.len())
        .map(|end| {
            let mut w = vec![0.0; window_len * d];
            for slot in 0..window_len {
                let back = window_len - 1 - slot;
                if back <= end {
                    w[slot * d..(slot + 1) * d].copy_from_slice(&steps[end - back]);
                }
            }
            w
        })
        .collect()
}

pub fn sliding_window_baseline(
    stations: &StationMap,
    trajectories: &[GpsTrajectory],
    window_len: usize,
    setting: &ClassifierSetting,
) -> Result<WindowClassifier, LearnError> {
    if window_len == 0 {
        return Err(LearnError::InvalidConfig(
            "window_len must be positive".into(),
        ));
    }
    let encoder = SequenceEncoder::fit(stations.clone(), trajectories);
    let mut data = Vec::new();
    for tr in trajectories {
        let truth = tr.truth.as_ref().ok_or_else(|| {
            LearnError::InsufficientData(format!("trajectory {} has no ground truth", tr.trip_id))
        })?;
        let class = stations
            .index_of(&truth.destination)
            .ok_or_else(|| LearnError::UnknownStation(truth.destination.clone()))?;
        data.extend(
            windows(&encoder, &tr.points, window_len)
                .into_iter()
                .map(|w| (StaticInput(w), class)),
        );
    }
    let schema = vec![FeatureKind::Continuous; window_len * encoder.dim()];
    let classifier = train_classifier(&data, &schema, &stations.ids(), setting)?;
    Ok(WindowClassifier {
        window_len,
        encoder,
        classifier,
    })
}

impl WindowClassifier {
    /// Classifies a prefix by its last window.
    pub fn predict_prefix(
        &self,
        points: &[TrajectoryPoint],
    ) -> Result<DestinationPrediction, LearnError> {
        if points.is_empty() {
            return Err(LearnError::InsufficientData("empty prefix".into()));
        }
        let last = windows(&self.encoder, points, self.window_len)
            .pop()
            .expect("non-empty prefix");
        self.classifier.predict(&last)
    }
}
