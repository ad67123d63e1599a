use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, EncoderParams};
use crate::datagen::{read_file, write_file};
use crate::error::{Error, Result};
use crate::graph::FeatureStats;
use crate::matrix::Matrix;

pub const WEIGHTS_FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Serialized encoder: architecture, standardization stats and every tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub format_version: u64,
    pub architecture: Architecture,
    pub feature_stats: FeatureStats,
    pub tensors: Vec<TensorEntry>,
}

impl WeightsFile {
    pub fn new(params: &EncoderParams, stats: &FeatureStats) -> Self {
        let tensors = params
            .tensors()
            .into_iter()
            .map(|(name, t)| TensorEntry {
                name,
                shape: [t.rows(), t.cols()],
                data: t.as_slice().to_vec(),
            })
            .collect();
        Self {
            format_version: WEIGHTS_FORMAT_VERSION,
            architecture: params.arch.clone(),
            feature_stats: *stats,
            tensors,
        }
    }

    /// Rebuilds the parameters, rejecting missing tensors and shape mismatches.
    pub fn to_params(&self) -> Result<(EncoderParams, FeatureStats)> {
        if self.format_version != WEIGHTS_FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                expected: WEIGHTS_FORMAT_VERSION,
            });
        }
        self.architecture.validate()?;
        let mut params = EncoderParams::zeros(&self.architecture);
        let expected = params.tensors().len();
        if self.tensors.len() != expected {
            return Err(Error::Shape(format!(
                "weights file has {} tensors, architecture needs {expected}",
                self.tensors.len()
            )));
        }
        for ((name, t), entry) in params.tensors_mut().into_iter().zip(&self.tensors) {
            if entry.name != name {
                return Err(Error::Shape(format!("expected tensor {name}, found {}", entry.name)));
            }
            if entry.shape != [t.rows(), t.cols()] {
                return Err(Error::Shape(format!(
                    "tensor {name} has shape {:?}, expected [{}, {}]",
                    entry.shape,
                    t.rows(),
                    t.cols()
                )));
            }
            *t = Matrix::from_vec(entry.shape[0], entry.shape[1], entry.data.clone())?;
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("tensor {name}")));
            }
        }
        Ok((params, self.feature_stats))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_json_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_file(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let p = EncoderParams::init(&Architecture::default(), 1);
        let stats = FeatureStats::identity();
        let file = WeightsFile::new(&p, &stats);
        let back: WeightsFile = serde_json::from_str(&file.to_json_string()).unwrap();
        let (q, s) = back.to_params().unwrap();
        assert_eq!(q, p);
        assert_eq!(s, stats);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let p = EncoderParams::init(&Architecture::default(), 1);
        let mut file = WeightsFile::new(&p, &FeatureStats::identity());
        file.architecture.output_dim = 16;
        assert!(matches!(file.to_params(), Err(Error::Shape(_))));

        let mut file = WeightsFile::new(&p, &FeatureStats::identity());
        file.tensors[0].shape = [7, 64];
        assert!(file.to_params().is_err());

        let mut file = WeightsFile::new(&p, &FeatureStats::identity());
        file.format_version = 9;
        assert!(matches!(file.to_params(), Err(Error::Version { .. })));
    }
}
