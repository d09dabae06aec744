use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{check_shape, Classifier, Label};
use crate::error::{Error, Result};
use crate::tensor::{l2_sq_dist, ImageTensor, Shape};

/// Assigns the label of the closest centroid (squared L2); ties go to the
/// earlier centroid.
#[derive(Clone, Debug)]
pub struct NearestCentroidOracle {
    centroids: Vec<(Label, ImageTensor)>,
}

#[derive(Deserialize)]
struct CentroidFile {
    input_shape: Shape,
    #[serde(default = "unit_range")]
    range: f64,
    centroids: Vec<CentroidEntry>,
}

#[derive(Deserialize)]
struct CentroidEntry {
    label: Label,
    pixels: Vec<f64>,
}

fn unit_range() -> f64 {
    1.0
}

impl NearestCentroidOracle {
    pub fn new(centroids: Vec<(Label, ImageTensor)>) -> Result<Self> {
        if centroids.len() < 2 {
            return Err(Error::InvalidConfig(
                "nearest-centroid oracle needs at least two centroids".into(),
            ));
        }
        let first = &centroids[0].1;
        for (_, c) in &centroids[1..] {
            first.check_compatible(c)?;
        }
        Ok(Self { centroids })
    }

    /// Reads `{"input_shape": [H,W,C], "range": L, "centroids": [{"label", "pixels"}]}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: CentroidFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let centroids = file
            .centroids
            .into_iter()
            .map(|c| Ok((c.label, ImageTensor::new(file.input_shape, file.range, c.pixels)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(centroids)
    }
}

impl Classifier for NearestCentroidOracle {
    fn classify(&self, image: &ImageTensor) -> Result<Label> {
        check_shape(self.centroids[0].1.shape(), image)?;
        let mut best = (self.centroids[0].0, f64::INFINITY);
        for (label, c) in &self.centroids {
            let d = l2_sq_dist(c, image)?;
            if d < best.1 {
                best = (*label, d);
            }
        }
        Ok(best.0)
    }

    fn num_classes(&self) -> Option<usize> {
        self.centroids.iter().map(|(l, _)| l.0 + 1).max()
    }
}
