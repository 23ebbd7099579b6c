use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::{lle_embed, pca_embed, EmbeddingResult, REGULARIZATION};
use crate::error::{Error, Result};
use crate::pointset::io::{decode_packed, encode_packed, write_atomic};
use crate::pointset::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedMethod {
    Lle,
    Pca,
}

impl fmt::Display for EmbedMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedMethod::Lle => "lle",
            EmbedMethod::Pca => "pca",
        })
    }
}

impl FromStr for EmbedMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lle" => Ok(EmbedMethod::Lle),
            "pca" => Ok(EmbedMethod::Pca),
            other => Err(Error::InvalidInput(format!(
                "unknown embedding method '{other}' (expected lle or pca)"
            ))),
        }
    }
}

impl EmbedMethod {
    pub fn embed(self, cloud: &PointCloud, k: usize, d: usize) -> Result<EmbeddingResult> {
        match self {
            EmbedMethod::Lle => lle_embed(cloud, k, d),
            EmbedMethod::Pca => pca_embed(cloud, d),
        }
    }
}

/// Content hash of everything an embedding depends on.
pub fn cache_key(cloud: &PointCloud, method: EmbedMethod, k: usize, d: usize) -> String {
    let mut hasher = Sha256::new();
    hasher.update(method.to_string().as_bytes());
    hasher.update((cloud.len() as u64).to_le_bytes());
    for v in cloud.points.iter() {
        hasher.update(v.to_le_bytes());
    }
    hasher.update((k as u64).to_le_bytes());
    hasher.update((d as u64).to_le_bytes());
    hasher.update(REGULARIZATION.to_le_bytes());
    hex::encode(hasher.finalize())
}

/// On-disk store of per-cloud embeddings, one packed container per key plus
/// a `.meta` sidecar with the residual.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

/// A cache hit or a freshly computed embedding.
#[derive(Debug, Clone)]
pub struct CachedEmbedding {
    pub coords: Array2<f64>,
    pub residual: f64,
    pub computed: bool,
}

impl EmbeddingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        EmbeddingCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, cloud: &PointCloud, method: EmbedMethod, k: usize, d: usize) -> PathBuf {
        self.dir
            .join(format!("{}.pmc", cache_key(cloud, method, k, d)))
    }

    /// Reads a cached embedding; `Ok(None)` when absent.
    pub fn load(
        &self,
        cloud: &PointCloud,
        method: EmbedMethod,
        k: usize,
        d: usize,
    ) -> Result<Option<CachedEmbedding>> {
        let path = self.path_for(cloud, method, k, d);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let coords = decode_packed(&bytes)?;
        if coords.dim() != (cloud.len(), d) {
            return Err(Error::Format(format!(
                "{}: cached embedding is {:?}, expected ({}, {d})",
                path.display(),
                coords.dim(),
                cloud.len()
            )));
        }
        let meta = path.with_extension("meta");
        let residual = fs::read_to_string(&meta)
            .ok()
            .and_then(|t| {
                t.trim()
                    .strip_prefix("residual=")
                    .and_then(|v| v.parse().ok())
            })
            .unwrap_or(f64::NAN);
        Ok(Some(CachedEmbedding {
            coords,
            residual,
            computed: false,
        }))
    }

    /// Like [`load`](Self::load) but fails with an actionable error naming
    /// the embed subcommand when the entry is missing.
    pub fn require(
        &self,
        cloud: &PointCloud,
        method: EmbedMethod,
        k: usize,
        d: usize,
    ) -> Result<CachedEmbedding> {
        self.load(cloud, method, k, d)?
            .ok_or_else(|| Error::MissingCache {
                cloud: cloud.id.clone(),
                path: self.path_for(cloud, method, k, d),
            })
    }

    pub fn get_or_compute(
        &self,
        cloud: &PointCloud,
        method: EmbedMethod,
        k: usize,
        d: usize,
    ) -> Result<CachedEmbedding> {
        if let Some(hit) = self.load(cloud, method, k, d)? {
            return Ok(hit);
        }
        let result = method.embed(cloud, k, d)?;
        let path = self.path_for(cloud, method, k, d);
        write_atomic(&path, &encode_packed(&result.coords))?;
        write_atomic(
            &path.with_extension("meta"),
            format!("residual={}\n", result.residual).as_bytes(),
        )?;
        // hand back exactly what a later cache hit will return
        let coords = decode_packed(&encode_packed(&result.coords))?;
        Ok(CachedEmbedding {
            coords,
            residual: result.residual,
            computed: true,
        })
    }
}
