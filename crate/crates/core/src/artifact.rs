//! Saved fits: a JSON envelope with every float in hex-float form.
//!
//! The covariates themselves are not embedded. The artifact records where
//! they came from and a content hash, and is re-attached to the data with
//! [`FitArtifact::restore`].

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, standardize, Dataset, FeatureGroups, StandardizationSpec, Target};
use crate::error::{BalError, Result};
use crate::path::{BalNetFit, PathFit, PathOptions};
use crate::penalty::PenaltySpec;
use crate::solver::SolverConfig;

pub const FORMAT: &str = "balpath-fit";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub path: PathBuf,
    pub treatment: String,
    pub groups: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub hash: String,
    pub n: usize,
    pub p: usize,
    pub n1: usize,
    pub n0: usize,
    pub feature_names: Vec<String>,
    pub original_order: Vec<usize>,
    pub groups: Option<FeatureGroups>,
    pub source: Option<DataSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub format: String,
    pub version: String,
    pub dataset: DatasetInfo,
    pub target: Target,
    pub options: PathOptions,
    pub penalty: PenaltySpec,
    pub solver: SolverConfig,
    pub standardization: StandardizationSpec,
    pub paths: Vec<PathFit>,
}

impl FitArtifact {
    pub fn from_fit(fit: &BalNetFit, ds: &Dataset, source: Option<DataSource>) -> Self {
        FitArtifact {
            format: FORMAT.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            dataset: DatasetInfo {
                hash: ds.content_hash(),
                n: ds.n(),
                p: ds.p(),
                n1: ds.n1(),
                n0: ds.n0(),
                feature_names: ds.feature_names().to_vec(),
                original_order: ds.original_order().to_vec(),
                groups: ds.groups().cloned(),
                source,
            },
            target: fit.target,
            options: fit.options.clone(),
            penalty: fit.penalty.clone(),
            solver: fit.solver.clone(),
            standardization: fit.design.spec().clone(),
            paths: fit.paths.clone(),
        }
    }

    pub fn to_writer(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(|e| BalError::Artifact(e.to_string()))
    }

    pub fn from_reader(input: impl Read) -> Result<Self> {
        let art: FitArtifact =
            serde_json::from_reader(input).map_err(|e| BalError::Artifact(e.to_string()))?;
        if art.format != FORMAT {
            return Err(BalError::Artifact(format!(
                "unexpected format tag {:?}",
                art.format
            )));
        }
        Ok(art)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| BalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut buf = std::io::BufWriter::new(file);
        self.to_writer(&mut buf)?;
        buf.flush().map_err(|source| BalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| BalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    /// Reload the recorded dataset, or `data` in its place.
    pub fn load_dataset(&self, data: Option<&Path>) -> Result<Dataset> {
        let src = self.dataset.source.as_ref().ok_or_else(|| {
            BalError::Artifact("artifact records no data source; pass the data explicitly".into())
        })?;
        load_csv(
            data.unwrap_or(&src.path),
            &src.treatment,
            src.groups.as_deref(),
        )
    }

    /// Re-attach the fit to its data. The dataset must hash to the recorded
    /// value and standardize to the recorded centers and scales.
    pub fn restore(&self, ds: &Dataset) -> Result<BalNetFit> {
        let hash = ds.content_hash();
        if hash != self.dataset.hash {
            return Err(BalError::Artifact(format!(
                "dataset hash {hash} does not match the fitted data ({})",
                self.dataset.hash
            )));
        }
        let design = standardize(ds, self.target)?;
        if design.spec() != &self.standardization {
            return Err(BalError::Artifact(
                "standardization of the supplied data differs from the saved fit".into(),
            ));
        }
        Ok(BalNetFit {
            target: self.target,
            paths: self.paths.clone(),
            design: Arc::new(design),
            feature_names: self.dataset.feature_names.clone(),
            penalty: self.penalty.clone(),
            options: self.options.clone(),
            solver: self.solver.clone(),
        })
    }
}
