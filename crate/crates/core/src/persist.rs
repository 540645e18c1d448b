//! Self-describing JSON model files.
//!
//! A document names its format and model type and carries a fingerprint of
//! the payload (number of numeric parameters and SHA-256 of its canonical
//! JSON), checked on load.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{StationMap, UserId};
use crate::learners::{EsnModel, UserModels, WindowClassifier};

pub const MODEL_FORMAT: &str = "bss-model/1";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format {0:?}")]
    Format(String),
    #[error("model fingerprint does not match its contents")]
    FingerprintMismatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfileBundle {
    pub stations: StationMap,
    pub users: BTreeMap<UserId, UserModels>,
    pub global: Option<UserModels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", rename_all = "kebab-case")]
pub enum ModelPayload {
    UserProfile(UserProfileBundle),
    LocationPreview(EsnModel),
    WindowBaseline(WindowClassifier),
}

impl ModelPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelPayload::UserProfile(_) => "user-profile",
            ModelPayload::LocationPreview(_) => "location-preview",
            ModelPayload::WindowBaseline(_) => "window-baseline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub parameter_count: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub fingerprint: Fingerprint,
    pub model: ModelPayload,
}

fn count_numbers(v: &serde_json::Value) -> usize {
    match v {
        serde_json::Value::Number(_) => 1,
        serde_json::Value::Array(a) => a.iter().map(count_numbers).sum(),
        serde_json::Value::Object(o) => o.values().map(count_numbers).sum(),
        _ => 0,
    }
}

pub fn fingerprint(model: &ModelPayload) -> Result<Fingerprint, PersistError> {
    let value = serde_json::to_value(model)?;
    let bytes = serde_json::to_vec(&value)?;
    Ok(Fingerprint {
        parameter_count: count_numbers(&value),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

pub fn save_model(model: ModelPayload) -> Result<Vec<u8>, PersistError> {
    let doc = ModelDocument {
        format: MODEL_FORMAT.into(),
        fingerprint: fingerprint(&model)?,
        model,
    };
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn load_model(bytes: &[u8]) -> Result<ModelPayload, PersistError> {
    let raw: serde_json::Value = serde_json::from_slice(bytes)?;
    match raw.get("format").and_then(|f| f.as_str()) {
        Some(MODEL_FORMAT) => {}
        other => return Err(PersistError::Format(other.unwrap_or("").to_owned())),
    }
    let doc: ModelDocument = serde_json::from_value(raw)?;
    if fingerprint(&doc.model)? != doc.fingerprint {
        return Err(PersistError::FingerprintMismatch);
    }
    Ok(doc.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::ForkScenario;
    use crate::learners::{
        fit_location_preview, sliding_window_baseline, ClassifierSetting, ReservoirConfig,
    };

    #[test]
    fn esn_round_trip() {
        let (map, _, trajs) = ForkScenario::new(1, 10).generate().unwrap();
        let cfg = ReservoirConfig {
            n_reservoir: 15,
            ..ReservoirConfig::default()
        };
        let m = fit_location_preview(&cfg, &map, &trajs).unwrap();
        let bytes = save_model(ModelPayload::LocationPreview(m.clone())).unwrap();
        let back = load_model(&bytes).unwrap();
        assert_eq!(back, ModelPayload::LocationPreview(m.clone()));
        let p1 = m.predict_prefix(&trajs[0].points).unwrap();
        let ModelPayload::LocationPreview(m2) = back else {
            panic!()
        };
        assert_eq!(p1, m2.predict_prefix(&trajs[0].points).unwrap());
    }

    #[test]
    fn window_round_trip_and_tamper() {
        let (map, _, trajs) = ForkScenario::new(2, 10).generate().unwrap();
        let w =
            sliding_window_baseline(&map, &trajs, 2, &ClassifierSetting::logistic(0.1)).unwrap();
        let bytes = save_model(ModelPayload::WindowBaseline(w.clone())).unwrap();
        assert_eq!(load_model(&bytes).unwrap(), ModelPayload::WindowBaseline(w));

        let mut doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        doc["model"]["window_len"] = serde_json::json!(3);
        let tampered = serde_json::to_vec(&doc).unwrap();
        assert!(matches!(
            load_model(&tampered),
            Err(PersistError::FingerprintMismatch)
        ));
    }

    #[test]
    fn wrong_format() {
        assert!(matches!(
            load_model(br#"{"format":"other"}"#),
            Err(PersistError::Format(_))
        ));
        assert!(matches!(
            load_model(b"not json"),
            Err(PersistError::Json(_))
        ));
    }
}
