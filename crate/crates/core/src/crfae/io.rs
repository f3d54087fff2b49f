use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{CrfAeModel, FeatureExtractor, Reconstruction, Template};
use crate::error::{Error, Result};
use crate::hmm::io::{check_header, flat, scalar_name, vector, EmissionFile};
use crate::hmm::{Emission, MODEL_VERSION};
use crate::real::Real;

pub const CRFAE_FORMAT: &str = "embtag-crfae";

#[derive(Debug, Serialize, Deserialize)]
struct CrfAeFile {
    format: String,
    version: u32,
    scalar: String,
    num_tags: usize,
    templates: Vec<String>,
    predicates: Vec<String>,
    weights: Vec<f64>,
    reconstruction: EmissionFile,
}

impl<T: Real> CrfAeModel<T> {
    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        let reconstruction = match &self.reconstruction {
            Reconstruction::Gaussian(g) => EmissionFile::from_gaussian(g),
            Reconstruction::Multinomial { labels, probs } => EmissionFile::Multinomial {
                words: labels.clone(),
                probs: flat(probs.iter().copied()),
            },
        };
        let file = CrfAeFile {
            format: CRFAE_FORMAT.into(),
            version: MODEL_VERSION,
            scalar: scalar_name::<T>().into(),
            num_tags: self.num_tags(),
            templates: self.extractor.templates().iter().map(|t| t.name().to_owned()).collect(),
            predicates: self.extractor.predicates().to_vec(),
            weights: flat(self.weights.iter().copied()),
            reconstruction,
        };
        serde_json::to_writer(out, &file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let file: CrfAeFile = serde_json::from_reader(input).map_err(|e| Error::Format(e.to_string()))?;
        check_header::<T>(&file.format, CRFAE_FORMAT, file.version, &file.scalar)?;
        let k = file.num_tags;
        let templates = file
            .templates
            .iter()
            .map(|t| t.parse::<Template>().map_err(|e| Error::Format(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let extractor = FeatureExtractor::from_parts(templates, k, file.predicates)?;
        let weights = vector(&file.weights, extractor.num_features(), "weights")?;
        let reconstruction = match file.reconstruction.to_emission::<T>(k)? {
            Emission::Gaussian(g) => Reconstruction::Gaussian(g),
            Emission::Multinomial(m) => Reconstruction::Multinomial {
                labels: m.words,
                probs: m.probs,
            },
        };
        let model = CrfAeModel {
            extractor,
            weights,
            reconstruction,
        };
        model.validate()?;
        Ok(model)
    }
}
