//! JSON checkpoints for [`Mlp`] networks.
//!
//! The on-disk format is a single JSON object:
//!
//! ```json
//! {
//!   "layer_sizes": [2, 8, 8, 1],
//!   "leak": 0.1,
//!   "weights": [[[...]]],
//!   "biases": [[...]],
//!   "zero_bias": true
//! }
//! ```
//!
//! `weights[l][r][c]` is row `r`, column `c` of layer `l`.  Saturated
//! controllers additionally carry a `"saturation"` key holding the clamp
//! bound, since the two appended clamp layers use exact (not leaky) ReLU
//! and that cannot be recovered from the weights alone.  Values are
//! written with shortest round-trip formatting, so save → load → save is
//! byte-identical.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Mlp, NnError};
use crate::scalar::Scalar;

/// Serialisable view of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub layer_sizes: Vec<usize>,
    pub leak: f64,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub zero_bias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
}

impl Checkpoint {
    /// Captures a network's parameters.
    pub fn from_net<T: Scalar>(net: &Mlp<T>) -> Self {
        Self {
            layer_sizes: net.layer_sizes(),
            leak: net.leak().to_f64_lossy(),
            weights: net
                .layers()
                .iter()
                .map(|l| l.w.rows().into_iter().map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect())
                .collect(),
            biases: net
                .layers()
                .iter()
                .map(|l| l.b.iter().map(|v| v.to_f64_lossy()).collect())
                .collect(),
            zero_bias: net.zero_bias(),
            saturation: net.saturation().map(|u| u.to_f64_lossy()),
        }
    }

    /// Reconstructs a network, validating shape consistency.
    pub fn into_net<T: Scalar>(self) -> Result<Mlp<T>, NnError> {
        let n = self.weights.len();
        if n == 0 || self.biases.len() != n {
            return Err(NnError::BadCheckpoint("weights/biases layer counts disagree".into()));
        }
        if self.layer_sizes.len() != n + 1 {
            return Err(NnError::BadCheckpoint("layer_sizes does not match weight count".into()));
        }
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        for (l, (wl, bl)) in self.weights.iter().zip(&self.biases).enumerate() {
            let rows = self.layer_sizes[l + 1];
            let cols = self.layer_sizes[l];
            if wl.len() != rows || wl.iter().any(|r| r.len() != cols) || bl.len() != rows {
                return Err(NnError::BadCheckpoint(format!(
                    "layer {l} does not have shape {rows}x{cols}"
                )));
            }
            let flat: Vec<T> =
                wl.iter().flat_map(|r| r.iter().map(|&v| T::from_f64_lossy(v))).collect();
            weights.push(Array2::from_shape_vec((rows, cols), flat).unwrap());
            biases.push(Array1::from(
                bl.iter().map(|&v| T::from_f64_lossy(v)).collect::<Vec<_>>(),
            ));
        }
        if let Some(u) = self.saturation {
            if !(u > 0.0) {
                return Err(NnError::BadCheckpoint("saturation bound must be positive".into()));
            }
            if n < 3 || self.layer_sizes[n - 1] != 2 || self.layer_sizes[n] != 1 {
                return Err(NnError::BadCheckpoint(
                    "saturated checkpoint must end in the 2-then-1 clamp layers".into(),
                ));
            }
            if self.zero_bias {
                return Err(NnError::BadCheckpoint(
                    "zero-bias networks cannot carry saturation".into(),
                ));
            }
            // Rebuild the inner network, then re-append the clamp so the
            // exact-ReLU activations are restored.
            let clamp_w = weights.split_off(n - 2);
            let clamp_b = biases.split_off(n - 2);
            let inner = Mlp::from_parts(
                weights,
                biases,
                T::from_f64_lossy(self.leak),
                self.zero_bias,
            )?;
            let net = inner.saturate_output(T::from_f64_lossy(u));
            // The appended layers are canonical; honour stored values if
            // they match, reject otherwise so silent drift is caught.
            let canon = Checkpoint::from_net(&net);
            let stored_tail_w: Vec<Vec<Vec<f64>>> = clamp_w
                .iter()
                .map(|w| w.rows().into_iter().map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect())
                .collect();
            let stored_tail_b: Vec<Vec<f64>> =
                clamp_b.iter().map(|b| b.iter().map(|v| v.to_f64_lossy()).collect()).collect();
            if canon.weights[n - 2..] != stored_tail_w[..] || canon.biases[n - 2..] != stored_tail_b[..] {
                return Err(NnError::BadCheckpoint(
                    "clamp layers do not match the saturation bound".into(),
                ));
            }
            return Ok(net);
        }
        let net = Mlp::from_parts(weights, biases, T::from_f64_lossy(self.leak), self.zero_bias)?;
        Ok(net)
    }
}

/// Writes a network checkpoint as pretty-printed JSON.
pub fn save_checkpoint<T: Scalar>(net: &Mlp<T>, path: &Path) -> Result<(), NnError> {
    let ckpt = Checkpoint::from_net(net);
    let text = serde_json::to_string_pretty(&ckpt)?;
    fs::write(path, text)?;
    Ok(())
}

/// Loads a network checkpoint.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Mlp<T>, NnError> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.into_net()
}
