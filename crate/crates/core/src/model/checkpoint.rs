use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{MlpConfig, MlpModel, ModelError, ParamLayout, ParamVector};

/// JSON checkpoint: architecture, layout, and raw parameter values.
/// `f64` values survive the JSON round trip bit-exactly (shortest
/// round-trip formatting).
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    config: MlpConfig,
    layout: ParamLayout,
    values: Vec<f64>,
}

impl MlpModel {
    pub fn to_checkpoint_json(&self) -> String {
        let ck = Checkpoint {
            config: self.config().clone(),
            layout: self.layout().as_ref().clone(),
            values: self.params().values().to_vec(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(json: &str) -> Result<Self, ModelError> {
        let ck: Checkpoint = serde_json::from_str(json)
            .map_err(|e| ModelError::MalformedCheckpoint(e.to_string()))?;
        let model = MlpModel::from_parts(
            ck.config,
            ParamVector::new(ck.values, Arc::new(ck.layout.clone()))?,
        )?;
        if model.layout().as_ref() != &ck.layout {
            return Err(ModelError::MalformedCheckpoint(
                "layout does not match architecture".into(),
            ));
        }
        Ok(model)
    }
}
