//! JSON persistence of trained networks.
//!
//! Weights are written as `f64` numbers regardless of the training precision;
//! widening `f32` is exact and `f64` values round-trip through the shortest
//! representation, so loading restores every weight bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MdnArchitecture, MdnParams, TrainedMdn};
use crate::error::{invalid, Result};
use crate::real::Real;
use crate::window::NormStats;

const FORMAT: &str = "simest-mdn";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    shape: [usize; 2],
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    version: u32,
    dtype: String,
    lag: usize,
    arch: MdnArchitecture,
    norm: NormStats<f64>,
    layers: Vec<LayerDoc>,
    epoch_losses: Vec<f64>,
}

impl<T: Real> TrainedMdn<T> {
    pub fn to_json(&self) -> String {
        let p = &self.params;
        let widen = |v: &[T]| v.iter().map(|x| x.f64()).collect();
        let layers = (0..p.num_layers())
            .map(|l| {
                let (i, o) = p.shape(l);
                LayerDoc { shape: [i, o], weights: widen(p.weights(l)), bias: widen(p.bias(l)) }
            })
            .collect();
        let doc = ModelDoc {
            format: FORMAT.into(),
            version: VERSION,
            dtype: T::NAME.into(),
            lag: self.lag,
            arch: p.arch().clone(),
            norm: self.stats.cast(),
            layers,
            epoch_losses: self.epoch_losses.clone(),
        };
        serde_json::to_string(&doc).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| invalid(format!("malformed model file: {e}")))?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(invalid(format!("unsupported model format {} v{}", doc.format, doc.version)));
        }
        if doc.dtype != T::NAME {
            return Err(invalid(format!("model was trained in {}, requested {}", doc.dtype, T::NAME)));
        }
        let shapes = doc.arch.layer_shapes();
        if shapes.len() != doc.layers.len() {
            return Err(invalid("layer count does not match the architecture"));
        }
        let mut data = Vec::with_capacity(doc.arch.parameter_count());
        for (layer, (i, o)) in doc.layers.iter().zip(shapes) {
            if layer.shape != [i, o] || layer.weights.len() != i * o || layer.bias.len() != o {
                return Err(invalid("layer shape does not match the architecture"));
            }
            data.extend(layer.weights.iter().chain(&layer.bias).map(|&v| T::cst(v)));
        }
        let params = MdnParams::from_data(&doc.arch, data)?;
        Ok(TrainedMdn { params, stats: doc.norm.cast(), lag: doc.lag, epoch_losses: doc.epoch_losses })
    }
}

pub fn save_model<T: Real>(model: &TrainedMdn<T>, path: &Path) -> Result<()> {
    fs::write(path, model.to_json()).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))
}

pub fn load_model<T: Real>(path: &Path) -> Result<TrainedMdn<T>> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    TrainedMdn::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::init_network;

    fn model<T: Real>(seed: u64) -> TrainedMdn<T> {
        let arch = MdnArchitecture::standard(3, 1);
        let params = init_network::<T>(&arch, seed).unwrap();
        let mut stats = NormStats::identity(3, 1);
        stats.mu_y = vec![T::cst(0.123_456_789_012_345)];
        TrainedMdn { params, stats, lag: 3, epoch_losses: vec![1.5, 1.25] }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m64 = model::<f64>(7);
        assert_eq!(TrainedMdn::<f64>::from_json(&m64.to_json()).unwrap(), m64);
        let m32 = model::<f32>(7);
        let back = TrainedMdn::<f32>::from_json(&m32.to_json()).unwrap();
        let bits = |m: &TrainedMdn<f32>| m.params.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m32));
        assert_eq!(back, m32);
    }

    #[test]
    fn precision_mismatch_is_rejected() {
        let text = model::<f64>(1).to_json();
        assert!(TrainedMdn::<f32>::from_json(&text).is_err());
    }

    #[test]
    fn truncated_document_is_rejected() {
        let text = model::<f64>(1).to_json();
        assert!(TrainedMdn::<f64>::from_json(&text[..text.len() / 2]).is_err());
    }
}
