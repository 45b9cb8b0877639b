//! Sweep configuration file: an `instance` section naming the input files,
//! plus every [`SweepSpec`] field at the top level. Relative paths resolve
//! against the directory holding the config.
//!
//! ```json
//! { "instance": { "json": "instance.json" }, "k_values": [2, 4], "restarts": 40 }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use recon::harness::SweepSpec;
use recon::metrics::Unreachable;
use recon::{Error, InstanceSource};

// variants are tried in order, so the most specific comes first
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum InstanceEntry {
    Json {
        json: PathBuf,
    },
    Matrices {
        dfc: Option<PathBuf>,
        dff: PathBuf,
    },
    Graph {
        edges: PathBuf,
        facilities: PathBuf,
        clients: PathBuf,
        #[serde(default)]
        unreachable: Unreachable,
    },
    Points {
        facilities: PathBuf,
        clients: Option<PathBuf>,
    },
}

#[derive(Debug, Deserialize)]
struct RawConfig {
    instance: InstanceEntry,
    #[serde(flatten)]
    spec: SweepSpec,
}

#[derive(Debug)]
pub struct SweepConfig {
    pub source: InstanceSource,
    pub spec: SweepSpec,
}

impl SweepConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let raw: RawConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let at = |p: &PathBuf| base.join(p);
        let source = match raw.instance {
            InstanceEntry::Json { json } => InstanceSource::Json(at(&json)),
            InstanceEntry::Matrices { dfc, dff } => InstanceSource::MatrixCsv {
                // F = C when only the facility matrix is given
                dfc: at(dfc.as_ref().unwrap_or(&dff)),
                dff: at(&dff),
            },
            InstanceEntry::Points {
                facilities,
                clients,
            } => InstanceSource::PointEuclidean {
                clients: at(clients.as_ref().unwrap_or(&facilities)),
                facilities: at(&facilities),
            },
            InstanceEntry::Graph {
                edges,
                facilities,
                clients,
                unreachable,
            } => InstanceSource::EdgeListGraph {
                edges: at(&edges),
                facilities: at(&facilities),
                clients: at(&clients),
                unreachable,
            },
        };
        Ok(SweepConfig {
            source,
            spec: raw.spec,
        })
    }
}
