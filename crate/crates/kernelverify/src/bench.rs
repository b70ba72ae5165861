//! Benchmark harness: sweeps a grid of kernel families, sizes and strengths
//! over a set of (network, property) pairs and tallies verified / unsafe /
//! undecided counts per cell, mirroring the layout of the experiment tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{BlurAngle, KernelFamily, KernelSpec, StrengthDomain};
use crate::network::{load_network, Network, NetworkError};
use crate::verify::{
    verify, Method, PropertyFile, VerdictStatus, VerificationQuery, VerifyConfig, VerifyError,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unknown kernel family {0:?}")]
    UnknownFamily(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// Parses a family column name: `box-blur`, `sharpen` or `motion-blur-<deg>`.
pub fn parse_family(name: &str) -> Result<KernelFamily, BenchError> {
    match name {
        "box-blur" => Ok(KernelFamily::BoxBlur),
        "sharpen" => Ok(KernelFamily::Sharpen),
        _ => {
            let deg = name
                .strip_prefix("motion-blur-")
                .and_then(|d| d.parse::<u32>().ok())
                .ok_or_else(|| BenchError::UnknownFamily(name.to_string()))?;
            let angle = BlurAngle::from_degrees(deg)
                .map_err(|_| BenchError::UnknownFamily(name.to_string()))?;
            Ok(KernelFamily::MotionBlur(angle))
        }
    }
}

/// One (network, property) instance of the sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPair {
    pub network: String,
    pub property: String,
}

/// The benchmark description: instances plus the perturbation grid.
/// Relative paths resolve against the manifest file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkManifest {
    pub pairs: Vec<ManifestPair>,
    pub families: Vec<String>,
    pub sizes: Vec<usize>,
    pub strengths: Vec<f64>,
    pub timeout_s: f64,
    pub method: Method,
}

impl BenchmarkManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf), BenchError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| BenchError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok((manifest, base))
    }
}

/// Tally for one (family, size, strength) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub family: String,
    pub size: usize,
    pub strength: f64,
    pub verified: usize,
    pub unsafe_count: usize,
    pub undecided: usize,
    pub mean_time_s: f64,
}

/// Runs the whole grid. Queries inside a cell run sequentially; `config`
/// still controls per-query branch-and-bound parallelism. Per-query
/// verification errors count as undecided without aborting the sweep.
pub fn run_bench(
    manifest: &BenchmarkManifest,
    base_dir: &Path,
    config: &VerifyConfig,
) -> Result<Vec<ResultRow>, BenchError> {
    let mut networks: BTreeMap<String, Network> = BTreeMap::new();
    let mut instances = Vec::new();
    for pair in &manifest.pairs {
        let net_path = base_dir.join(&pair.network);
        let key = net_path.display().to_string();
        if !networks.contains_key(&key) {
            networks.insert(key.clone(), load_network(&net_path)?);
        }
        let property = PropertyFile::load(base_dir.join(&pair.property))?;
        instances.push((key, property));
    }

    let mut cells: Vec<(String, usize, f64)> = Vec::new();
    for family in &manifest.families {
        parse_family(family)?; // validate up front
        for &size in &manifest.sizes {
            for &strength in &manifest.strengths {
                cells.push((family.clone(), size, strength));
            }
        }
    }
    cells.sort_by(|a, b| {
        (&a.0, a.1)
            .cmp(&(&b.0, b.1))
            .then(a.2.partial_cmp(&b.2).expect("strengths are finite"))
    });

    let timeout = Duration::from_secs_f64(manifest.timeout_s.max(0.0));
    let mut rows = Vec::with_capacity(cells.len());
    for (family_name, size, strength) in cells {
        let family = parse_family(&family_name)?;
        let mut verified = 0;
        let mut unsafe_count = 0;
        let mut undecided = 0;
        let mut total_time = 0.0;
        for (net_key, property) in &instances {
            let network = networks[net_key].clone();
            let query = build_query(
                network,
                property,
                family,
                size,
                strength,
                timeout,
                manifest.method,
            );
            match query.and_then(|q| verify(&q, config)) {
                Ok(verdict) => {
                    total_time += verdict.time.as_secs_f64();
                    match verdict.status {
                        VerdictStatus::Safe => verified += 1,
                        VerdictStatus::Unsafe => unsafe_count += 1,
                        VerdictStatus::Undecided => undecided += 1,
                    }
                }
                Err(_) => undecided += 1,
            }
        }
        let queries = instances.len().max(1);
        rows.push(ResultRow {
            family: family_name,
            size,
            strength,
            verified,
            unsafe_count,
            undecided,
            mean_time_s: total_time / queries as f64,
        });
    }
    Ok(rows)
}

fn build_query(
    network: Network,
    property: &PropertyFile,
    family: KernelFamily,
    size: usize,
    strength: f64,
    timeout: Duration,
    method: Method,
) -> Result<VerificationQuery, VerifyError> {
    let image = crate::tensor::Tensor::new(
        property.image_shape.to_vec(),
        property.image.clone(),
    )?;
    Ok(VerificationQuery {
        network,
        image,
        label: property.label,
        kernel: KernelSpec { family, size },
        domain: StrengthDomain::interval(0.0, strength)?,
        timeout,
        method,
    })
}

/// Serialises rows in the fixed CSV layout, sorted by (family, size,
/// strength). The `timeout` column counts every undecided query.
pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("family,size,strength,verified,unsafe,timeout,mean_time_s\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.3}\n",
            row.family,
            row.size,
            row.strength,
            row.verified,
            row.unsafe_count,
            row.undecided,
            row.mean_time_s
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for name in [
            "box-blur",
            "sharpen",
            "motion-blur-0",
            "motion-blur-45",
            "motion-blur-90",
            "motion-blur-135",
        ] {
            let family = parse_family(name).unwrap();
            assert_eq!(family.to_string(), name);
        }
        assert!(parse_family("gaussian").is_err());
        assert!(parse_family("motion-blur-30").is_err());
    }

    #[test]
    fn empty_manifest_yields_header_only_csv() {
        let manifest = BenchmarkManifest {
            pairs: vec![],
            families: vec![],
            sizes: vec![],
            strengths: vec![],
            timeout_s: 10.0,
            method: Method::Param,
        };
        let rows = run_bench(&manifest, Path::new("."), &VerifyConfig::default()).unwrap();
        assert!(rows.is_empty());
        assert_eq!(
            rows_to_csv(&rows),
            "family,size,strength,verified,unsafe,timeout,mean_time_s\n"
        );
    }

    #[test]
    fn rows_render_in_sorted_order() {
        let rows = vec![
            ResultRow {
                family: "box-blur".into(),
                size: 3,
                strength: 0.2,
                verified: 4,
                unsafe_count: 1,
                undecided: 0,
                mean_time_s: 0.0123,
            },
            ResultRow {
                family: "box-blur".into(),
                size: 3,
                strength: 1.0,
                verified: 2,
                unsafe_count: 3,
                undecided: 0,
                mean_time_s: 0.5,
            },
        ];
        let csv = rows_to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "box-blur,3,0.2,4,1,0,0.012");
        assert_eq!(lines[2], "box-blur,3,1,2,3,0,0.500");
    }
}
