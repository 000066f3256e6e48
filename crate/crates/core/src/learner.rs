//! Phase-by-phase orchestration of both streams.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::buffer::{ActivationKind, BufferLayer};
use crate::compensation::{apply_plc, compute_residue, dac_update, fit_base_comp, ResidueLabels};
use crate::error::{DsalError, Result};
use crate::store::{one_hot, ClassId, PhaseDataset};
use crate::stream::StreamState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Ridge regularization of the main stream.
    pub gamma: f64,
    /// Ridge regularization of the compensation stream; defaults to `gamma`.
    pub comp_gamma: Option<f64>,
    pub buffer_dim: usize,
    pub seed: u64,
    pub sigma_main: ActivationKind,
    pub sigma_comp: ActivationKind,
    /// Weight of the compensation scores at inference.
    pub comp_ratio: f64,
    /// Largest row block fed to one recursive step.
    pub chunk_rows: usize,
    pub enable_dac: bool,
    pub enable_plc: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 1.0,
            comp_gamma: None,
            buffer_dim: 512,
            seed: 0,
            sigma_main: ActivationKind::Relu,
            sigma_comp: ActivationKind::Tanh,
            comp_ratio: 0.6,
            chunk_rows: 4096,
            enable_dac: true,
            enable_plc: true,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.gamma) || !self.comp_gamma.is_none_or(positive) {
            return Err(DsalError::Config("gamma must be positive and finite".into()));
        }
        if !(self.comp_ratio >= 0.0 && self.comp_ratio.is_finite()) {
            return Err(DsalError::Config(format!(
                "comp_ratio must be finite and >= 0, got {}",
                self.comp_ratio
            )));
        }
        if self.buffer_dim == 0 {
            return Err(DsalError::Config("buffer_dim must be at least 1".into()));
        }
        if self.chunk_rows == 0 {
            return Err(DsalError::Config("chunk_rows must be at least 1".into()));
        }
        Ok(())
    }

    pub fn comp_gamma(&self) -> f64 {
        self.comp_gamma.unwrap_or(self.gamma)
    }
}

/// What the compensation stream was trained on in one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrace {
    pub phase_index: usize,
    /// Residue before cleansing; `None` when DAC is disabled.
    pub raw_residue: Option<ResidueLabels>,
    /// Targets actually fed to the compensation stream.
    pub comp_targets: Option<ResidueLabels>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    config: LearnerConfig,
    buffer: BufferLayer,
    main: StreamState,
    comp: StreamState,
    registry: Vec<ClassId>,
    phases_seen: usize,
}

impl Learner {
    /// Builds the buffer and fits both streams on the base phase.
    pub fn init_base(config: LearnerConfig, phase0: &PhaseDataset) -> Result<Self> {
        Self::init_base_traced(config, phase0).map(|(l, _)| l)
    }

    pub fn init_base_traced(config: LearnerConfig, phase0: &PhaseDataset) -> Result<(Self, PhaseTrace)> {
        config.validate()?;
        if phase0.is_empty() {
            return Err(DsalError::Config("base phase has no samples".into()));
        }
        let buffer = BufferLayer::new(
            phase0.dim(),
            config.buffer_dim,
            config.seed,
            config.sigma_main,
            config.sigma_comp,
        )?;
        let layout = phase0.classes.clone();
        let (xm, xc) = buffer.activate_both(&phase0.embeddings)?;
        let y = one_hot(&phase0.labels, &layout)?;
        let main = StreamState::fit_base(&xm, &y, layout.clone(), config.gamma)?;
        let (comp, raw) = if config.enable_dac {
            let residue = compute_residue(&main, &xm, &y, layout.len())?;
            let comp = fit_base_comp(&xc, &residue, layout.clone(), config.comp_gamma())?;
            (comp, Some(residue))
        } else {
            let mut comp = StreamState::empty(config.buffer_dim, config.comp_gamma())?;
            comp.expand_classes(&layout)?;
            (comp, None)
        };
        let trace = PhaseTrace {
            phase_index: 0,
            comp_targets: raw.clone(),
            raw_residue: raw,
        };
        Ok((
            Learner {
                config,
                buffer,
                main,
                comp,
                registry: layout,
                phases_seen: 1,
            },
            trace,
        ))
    }

    /// Reassembles a learner from checkpointed parts.
    pub fn from_parts(
        config: LearnerConfig,
        buffer: BufferLayer,
        main: StreamState,
        comp: StreamState,
        phases_seen: usize,
    ) -> Result<Self> {
        config.validate()?;
        if main.layout() != comp.layout() {
            return Err(DsalError::Manifest("stream class layouts differ".into()));
        }
        if main.dim() != buffer.output_dim() || comp.dim() != buffer.output_dim() {
            return Err(DsalError::dim("stream dimension differs from buffer output"));
        }
        if phases_seen == 0 {
            return Err(DsalError::Manifest("learner state has no phases".into()));
        }
        Ok(Learner {
            registry: main.layout().to_vec(),
            config,
            buffer,
            main,
            comp,
            phases_seen,
        })
    }

    pub fn learn_phase(&mut self, phase: &PhaseDataset) -> Result<()> {
        self.learn_phase_traced(phase).map(|_| ())
    }

    /// Runs one incremental phase: main expand and update, residue from the
    /// updated main stream, cleansing, then compensation expand and update.
    /// The learner is unchanged if any step fails.
    pub fn learn_phase_traced(&mut self, phase: &PhaseDataset) -> Result<PhaseTrace> {
        if phase.dim() != self.buffer.input_dim() {
            return Err(DsalError::dim(format!(
                "phase has {} features, learner expects {}",
                phase.dim(),
                self.buffer.input_dim()
            )));
        }
        if let Some(&c) = phase.classes.iter().find(|c| self.registry.contains(c)) {
            return Err(DsalError::ClassOverlap(c));
        }
        let k = self.phases_seen;
        let chunk = self.config.chunk_rows;
        let new = phase.classes.len();
        let (xm, xc) = self.buffer.activate_both(&phase.embeddings)?;

        let mut main = self.main.clone();
        main.expand_classes(&phase.classes)?;
        let y = one_hot(&phase.labels, main.layout())?;
        main.rls_update_chunked(&xm, &y, chunk)?;

        let mut comp = self.comp.clone();
        comp.expand_classes(&phase.classes)?;
        let mut trace = PhaseTrace {
            phase_index: k,
            raw_residue: None,
            comp_targets: None,
        };
        if self.config.enable_dac {
            let raw = compute_residue(&main, &xm, &y, new)?;
            let targets = if self.config.enable_plc {
                apply_plc(raw.clone(), k)
            } else {
                raw.clone()
            };
            dac_update(&mut comp, &xc, &targets, chunk)?;
            trace.raw_residue = Some(raw);
            trace.comp_targets = Some(targets);
        }

        self.main = main;
        self.comp = comp;
        self.registry.extend_from_slice(&phase.classes);
        self.phases_seen += 1;
        Ok(trace)
    }

    /// Main and compensation scores, kept apart so the ratio can be swept.
    pub fn stream_scores(&self, embeddings: &DMatrix<f64>) -> Result<StreamScores> {
        let (xm, xc) = self.buffer.activate_both(embeddings)?;
        Ok(StreamScores {
            main: self.main.predict(&xm)?,
            comp: self.comp.predict(&xc)?,
        })
    }

    /// `X_M W_M + C * X_C W_C` with the configured ratio.
    pub fn predict_combined(&self, embeddings: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.stream_scores(embeddings)?.combine(self.config.comp_ratio))
    }

    pub fn classify(&self, embeddings: &DMatrix<f64>) -> Result<Vec<ClassId>> {
        Ok(argmax_classes(&self.predict_combined(embeddings)?, &self.registry))
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    /// Changes the inference-time compensation ratio; no retraining needed.
    pub fn set_comp_ratio(&mut self, ratio: f64) -> Result<()> {
        let mut config = self.config.clone();
        config.comp_ratio = ratio;
        config.validate()?;
        self.config = config;
        Ok(())
    }

    pub fn buffer(&self) -> &BufferLayer {
        &self.buffer
    }

    pub fn main(&self) -> &StreamState {
        &self.main
    }

    pub fn comp(&self) -> &StreamState {
        &self.comp
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.registry
    }

    /// Number of phases learned, base included.
    pub fn phases_seen(&self) -> usize {
        self.phases_seen
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamScores {
    pub main: DMatrix<f64>,
    pub comp: DMatrix<f64>,
}

impl StreamScores {
    pub fn combine(&self, ratio: f64) -> DMatrix<f64> {
        if ratio == 0.0 {
            return self.main.clone();
        }
        &self.main + &self.comp * ratio
    }
}

/// Row-wise argmax mapped through `layout`; exact ties go to the lowest
/// class id.
pub fn argmax_classes(scores: &DMatrix<f64>, layout: &[ClassId]) -> Vec<ClassId> {
    assert_eq!(scores.ncols(), layout.len(), "score columns must match layout");
    (0..scores.nrows())
        .map(|i| {
            let mut best: Option<(f64, ClassId)> = None;
            for (j, &c) in layout.iter().enumerate() {
                let s = scores[(i, j)];
                best = match best {
                    Some((bs, bc)) if bs > s || (bs == s && bc < c) => Some((bs, bc)),
                    _ => Some((s, c)),
                };
            }
            best.map(|(_, c)| c).expect("at least one class")
        })
        .collect()
}
