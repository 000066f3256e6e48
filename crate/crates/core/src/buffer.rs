//! Frozen random buffer layer: `sigma(X * P)` with `P` a fixed
//! `d_cnn x d_B` standard-normal projection.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DsalError, Result};

/// Elementwise activation applied after the projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Tanh,
    Mish,
    Hardswish,
    Sigmoid,
    Identity,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 6] = [
        ActivationKind::Relu,
        ActivationKind::Tanh,
        ActivationKind::Mish,
        ActivationKind::Hardswish,
        ActivationKind::Sigmoid,
        ActivationKind::Identity,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Mish => x * softplus(x).tanh(),
            ActivationKind::Hardswish => x * (x + 3.0).clamp(0.0, 6.0) / 6.0,
            ActivationKind::Sigmoid => {
                // Split by sign so exp never overflows.
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            ActivationKind::Identity => x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Mish => "mish",
            ActivationKind::Hardswish => "hardswish",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Identity => "identity",
        }
    }
}

fn softplus(x: f64) -> f64 {
    // log(1 + e^x) without overflow for large x
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = DsalError;

    fn from_str(s: &str) -> Result<Self> {
        ActivationKind::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| DsalError::Config(format!("unknown activation {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferLayer {
    projection: DMatrix<f64>,
    sigma_main: ActivationKind,
    sigma_comp: ActivationKind,
    seed: u64,
}

impl BufferLayer {
    /// Draws a `d_cnn x d_B` projection with i.i.d. standard normal entries.
    pub fn new(
        d_cnn: usize,
        d_b: usize,
        seed: u64,
        sigma_main: ActivationKind,
        sigma_comp: ActivationKind,
    ) -> Result<Self> {
        if d_cnn == 0 || d_b == 0 {
            return Err(DsalError::Config(format!(
                "buffer dimensions must be positive, got {d_cnn}x{d_b}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Row-major draw order, so a dumped file lists entries in draw order.
        let values: Vec<f64> = (0..d_cnn * d_b)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Ok(BufferLayer {
            projection: DMatrix::from_row_slice(d_cnn, d_b, &values),
            sigma_main,
            sigma_comp,
            seed,
        })
    }

    /// Wraps an explicit projection, e.g. one reloaded from a checkpoint.
    pub fn from_projection(
        projection: DMatrix<f64>,
        seed: u64,
        sigma_main: ActivationKind,
        sigma_comp: ActivationKind,
    ) -> Result<Self> {
        if projection.nrows() == 0 || projection.ncols() == 0 {
            return Err(DsalError::Config("projection must be non-empty".into()));
        }
        if projection.iter().any(|v| !v.is_finite()) {
            return Err(DsalError::NonFinite("projection"));
        }
        Ok(BufferLayer {
            projection,
            sigma_main,
            sigma_comp,
            seed,
        })
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn input_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigma_main(&self) -> ActivationKind {
        self.sigma_main
    }

    pub fn sigma_comp(&self) -> ActivationKind {
        self.sigma_comp
    }

    /// Raw projection `X * P`, shared by both streams.
    pub fn project(&self, embeddings: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if embeddings.ncols() != self.input_dim() {
            return Err(DsalError::dim(format!(
                "embeddings have {} columns, buffer expects {}",
                embeddings.ncols(),
                self.input_dim()
            )));
        }
        Ok(embeddings * &self.projection)
    }

    pub fn activate_main(&self, embeddings: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(activate(self.project(embeddings)?, self.sigma_main))
    }

    pub fn activate_comp(&self, embeddings: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(activate(self.project(embeddings)?, self.sigma_comp))
    }

    /// Both activations from a single projection.
    pub fn activate_both(&self, embeddings: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let z = self.project(embeddings)?;
        let comp = activate(z.clone(), self.sigma_comp);
        Ok((activate(z, self.sigma_main), comp))
    }
}

pub fn activate(mut z: DMatrix<f64>, kind: ActivationKind) -> DMatrix<f64> {
    z.apply(|v| *v = kind.apply(*v));
    z
}
