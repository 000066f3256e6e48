//! Learner checkpoints.
//!
//! A checkpoint is a directory:
//!
//! ```text
//! learner.json              config, phase count, buffer metadata
//! buffer.projection.dsal    projection matrix
//! main.json / comp.json     stream sidecar: tag, gamma, column layout
//! main.weights.dsal, main.iacm.dsal, comp.weights.dsal, comp.iacm.dsal
//! ```
//!
//! Matrices use the store's matrix format at `f64` precision (version 2), so
//! a save/load cycle reproduces the state bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::buffer::{ActivationKind, BufferLayer};
use crate::error::{DsalError, Result};
use crate::learner::{Learner, LearnerConfig};
use crate::store::format::{read_matrix, write_matrix, Precision};
use crate::store::ClassId;
use crate::stream::StreamState;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamTag {
    Main,
    Comp,
}

impl StreamTag {
    fn name(self) -> &'static str {
        match self {
            StreamTag::Main => "main",
            StreamTag::Comp => "comp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSidecar {
    pub stream: StreamTag,
    pub gamma: f64,
    pub column_layout: Vec<ClassId>,
    pub weights: String,
    pub iacm: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSidecar {
    pub format_version: u32,
    pub phases_seen: usize,
    pub config: LearnerConfig,
    pub buffer_seed: u64,
    pub sigma_main: ActivationKind,
    pub sigma_comp: ActivationKind,
    pub projection: String,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("sidecar serializes");
    fs::write(path, text + "\n").map_err(|e| DsalError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| DsalError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DsalError::format(path, e.to_string()))
}

pub fn save_stream(dir: &Path, tag: StreamTag, state: &StreamState) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| DsalError::io(dir, e))?;
    let sidecar = StreamSidecar {
        stream: tag,
        gamma: state.gamma(),
        column_layout: state.layout().to_vec(),
        weights: format!("{}.weights.dsal", tag.name()),
        iacm: format!("{}.iacm.dsal", tag.name()),
    };
    write_matrix(&dir.join(&sidecar.weights), state.weights(), Precision::F64)?;
    write_matrix(&dir.join(&sidecar.iacm), state.iacm(), Precision::F64)?;
    write_json(&dir.join(format!("{}.json", tag.name())), &sidecar)
}

pub fn load_stream(dir: &Path, tag: StreamTag) -> Result<StreamState> {
    let path = dir.join(format!("{}.json", tag.name()));
    let sidecar: StreamSidecar = read_json(&path)?;
    if sidecar.stream != tag {
        return Err(DsalError::format(path, format!("expected stream tag {:?}", tag.name())));
    }
    let weights = read_matrix(&dir.join(&sidecar.weights))?;
    let iacm = read_matrix(&dir.join(&sidecar.iacm))?;
    StreamState::from_parts(weights, iacm, sidecar.column_layout, sidecar.gamma)
}

pub fn save_learner(dir: &Path, learner: &Learner) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| DsalError::io(dir, e))?;
    let buffer = learner.buffer();
    let sidecar = LearnerSidecar {
        format_version: CHECKPOINT_VERSION,
        phases_seen: learner.phases_seen(),
        config: learner.config().clone(),
        buffer_seed: buffer.seed(),
        sigma_main: buffer.sigma_main(),
        sigma_comp: buffer.sigma_comp(),
        projection: "buffer.projection.dsal".into(),
    };
    write_matrix(&dir.join(&sidecar.projection), buffer.projection(), Precision::F64)?;
    save_stream(dir, StreamTag::Main, learner.main())?;
    save_stream(dir, StreamTag::Comp, learner.comp())?;
    write_json(&dir.join("learner.json"), &sidecar)
}

pub fn load_learner(dir: &Path) -> Result<Learner> {
    let path = dir.join("learner.json");
    let sidecar: LearnerSidecar = read_json(&path)?;
    if sidecar.format_version != CHECKPOINT_VERSION {
        return Err(DsalError::format(
            path,
            format!("unsupported checkpoint version {}", sidecar.format_version),
        ));
    }
    let projection = read_matrix(&dir.join(&sidecar.projection))?;
    let buffer = BufferLayer::from_projection(projection, sidecar.buffer_seed, sidecar.sigma_main, sidecar.sigma_comp)?;
    let main = load_stream(dir, StreamTag::Main)?;
    let comp = load_stream(dir, StreamTag::Comp)?;
    Learner::from_parts(sidecar.config, buffer, main, comp, sidecar.phases_seen)
}

/// Human-readable summary used by `inspect-checkpoint`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckpointSummary {
    pub phases_seen: usize,
    pub classes: usize,
    pub input_dim: usize,
    pub buffer_dim: usize,
    pub config: LearnerConfig,
    pub main_weight_norm: f64,
    pub comp_weight_norm: f64,
    pub main_iacm_asymmetry: f64,
    pub comp_iacm_asymmetry: f64,
}

pub fn summarize(learner: &Learner) -> CheckpointSummary {
    CheckpointSummary {
        phases_seen: learner.phases_seen(),
        classes: learner.classes().len(),
        input_dim: learner.buffer().input_dim(),
        buffer_dim: learner.buffer().output_dim(),
        config: learner.config().clone(),
        main_weight_norm: learner.main().weights().norm(),
        comp_weight_norm: learner.comp().weights().norm(),
        main_iacm_asymmetry: crate::linalg::asymmetry(learner.main().iacm()),
        comp_iacm_asymmetry: crate::linalg::asymmetry(learner.comp().iacm()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::synth::{SynthSpec, SyntheticTask};

    #[test]
    fn learner_round_trips_exactly() {
        let t = SyntheticTask::generate(&SynthSpec { classes: 6, per_class: 8, dim: 5, phases: 3, ..Default::default() })
            .unwrap();
        let mut l = Learner::init_base(LearnerConfig { buffer_dim: 20, ..Default::default() }, &t.train[0]).unwrap();
        l.learn_phase(&t.train[1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_learner(dir.path(), &l).unwrap();
        assert_eq!(load_learner(dir.path()).unwrap(), l);
        let s = summarize(&l);
        assert_eq!((s.phases_seen, s.classes, s.buffer_dim), (2, 4, 20));
    }

    #[test]
    fn wrong_stream_tag_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = StreamState::empty(3, 1.0).unwrap();
        save_stream(dir.path(), StreamTag::Main, &s).unwrap();
        fs::copy(dir.path().join("main.json"), dir.path().join("comp.json")).unwrap();
        assert!(matches!(load_stream(dir.path(), StreamTag::Comp), Err(DsalError::Format { .. })));
        assert_eq!(load_stream(dir.path(), StreamTag::Main).unwrap(), s);
    }

    #[test]
    fn missing_checkpoint_is_io_error() {
        assert!(matches!(load_learner(Path::new("/nonexistent/ckpt")), Err(DsalError::Io { .. })));
    }
}
