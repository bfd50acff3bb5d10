// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::model::{Backend, CapturePlan};
use super::{ActivationSet, BackendConfig, PositionMode};
use crate::corpus::PromptRecord;
use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::scale::Scale;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedPrompt {
    pub prompt_id: String,
    pub reason: String,
}

/// Run manifest written next to every capture, sweep, and classification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BackendConfig,
    pub seed: u64,
    pub decoding: String,
    pub direction_hash: Option<String>,
    pub layer: Option<usize>,
    pub scales: Vec<Scale>,
    pub position_mode: Option<PositionMode>,
    pub max_new_tokens: Option<usize>,
    pub failed_prompts: Vec<FailedPrompt>,
    pub plan_hash: Option<String>,
    pub version: String,
}

impl RunManifest {
    pub fn new(config: &BackendConfig) -> Self {
        RunManifest {
            config: config.clone(),
            seed: config.seed,
            decoding: "greedy".into(),
            direction_hash: None,
            layer: None,
            scales: Vec::new(),
            position_mode: None,
            max_new_tokens: None,
            failed_prompts: Vec::new(),
            plan_hash: None,
            version: crate::VERSION.into(),
        }
    }

    /// Stable reference stored on rows produced under this manifest.
    pub fn reference(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

pub struct CaptureOutput {
    pub activations: ActivationSet,
    pub manifest: RunManifest,
}

/// Captures unsteered residual vectors for every prompt.
///
/// Prompts that overflow the context are skipped and listed in the manifest;
/// the run continues.
pub fn capture_activations(
    backend: &Backend,
    prompts: &[&PromptRecord],
    layers: &[usize],
    mode: PositionMode,
    exec: Exec,
) -> Result<CaptureOutput> {
    let layers: Vec<usize> = layers.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if layers.is_empty() {
        return Err(LabError::Invalid("no capture layers".into()));
    }
    let n_layers = backend.config().n_layers;
    if let Some(&bad) = layers.iter().find(|&&l| l >= n_layers) {
        return Err(LabError::LayerOutOfRange { layer: bad, n_layers });
    }
    let plan = CapturePlan {
        layers: layers.clone(),
        mode,
    };

    let results = exec.map(prompts, |rec| backend.run_text(&rec.id, &rec.text, None, Some(&plan), 0));

    let mut activations = ActivationSet::new(backend.config().d_model, backend.producer_tag());
    let mut manifest = RunManifest::new(backend.config());
    manifest.position_mode = Some(mode);
    for (rec, result) in prompts.iter().zip(results) {
        match result {
            Ok(gen) => {
                // records arrive layer-major from the pass; store prompt-major, layer-sorted
                let mut captured = gen.captured;
                captured.sort_by_key(|r| (r.layer, r.position));
                for r in captured {
                    activations.insert(r)?;
                }
            }
            Err(e @ LabError::ContextOverflow { .. }) => manifest.failed_prompts.push(FailedPrompt {
                prompt_id: rec.id.clone(),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(CaptureOutput {
        activations,
        manifest,
    })
}
