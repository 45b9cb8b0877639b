//! Problem data: the two distance matrices plus optional facility metadata.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, Graph, Unreachable};
use crate::par::Execution;
use crate::DIST_TOL;

/// An immutable reconciliation k-median instance.
///
/// `dfc` is `n_clients x m_facilities`, `dff` is `m x m`, symmetric with an
/// exactly zero diagonal. All entries are finite and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    dfc: Array2<f64>,
    dff: Array2<f64>,
    facility_labels: Option<Vec<String>>,
    client_labels: Option<Vec<String>>,
    facility_groups: Option<Vec<String>>,
    client_groups: Option<Vec<String>>,
    polarity: Option<Vec<f64>>,
    client_weights: Option<Vec<f64>>,
}

impl Instance {
    /// Validates both matrices, replaces `dff` by `(A + A^T) / 2` and zeroes
    /// its diagonal.
    pub fn new(dfc: Array2<f64>, mut dff: Array2<f64>) -> Result<Self> {
        let (n, m) = dfc.dim();
        if n == 0 || m == 0 {
            return Err(Error::DimensionMismatch(format!(
                "need at least one client and one facility, got {n} x {m}"
            )));
        }
        if dff.dim() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "facility-facility matrix is {:?}, expected {m} x {m}",
                dff.dim()
            )));
        }
        check_entries(&dfc)?;
        check_entries(&dff)?;
        for i in 0..m {
            dff[[i, i]] = 0.0;
            for j in (i + 1)..m {
                let avg = 0.5 * (dff[[i, j]] + dff[[j, i]]);
                dff[[i, j]] = avg;
                dff[[j, i]] = avg;
            }
        }
        Ok(Instance {
            dfc,
            dff,
            facility_labels: None,
            client_labels: None,
            facility_groups: None,
            client_groups: None,
            polarity: None,
            client_weights: None,
        })
    }

    /// Instance where facilities and clients are the same point set.
    pub fn shared(d: Array2<f64>) -> Result<Self> {
        let inst = Instance::new(d.clone(), d)?;
        // serve through the symmetrized matrix so both views agree
        let dff = inst.dff.clone();
        Ok(Instance { dfc: dff, ..inst })
    }

    pub fn n_clients(&self) -> usize {
        self.dfc.nrows()
    }

    pub fn n_facilities(&self) -> usize {
        self.dff.nrows()
    }

    pub fn dfc(&self) -> &Array2<f64> {
        &self.dfc
    }

    pub fn dff(&self) -> &Array2<f64> {
        &self.dff
    }

    pub fn facility_labels(&self) -> Option<&[String]> {
        self.facility_labels.as_deref()
    }

    pub fn client_labels(&self) -> Option<&[String]> {
        self.client_labels.as_deref()
    }

    pub fn facility_groups(&self) -> Option<&[String]> {
        self.facility_groups.as_deref()
    }

    pub fn client_groups(&self) -> Option<&[String]> {
        self.client_groups.as_deref()
    }

    pub fn polarity(&self) -> Option<&[f64]> {
        self.polarity.as_deref()
    }

    /// Accepted by the loaders; the objective ignores them.
    pub fn client_weights(&self) -> Option<&[f64]> {
        self.client_weights.as_deref()
    }

    /// Label of facility `i`, falling back to its index.
    pub fn facility_label(&self, i: usize) -> String {
        match &self.facility_labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }

    pub fn with_facility_labels(mut self, labels: Vec<String>) -> Result<Self> {
        expect_len("facility_labels", labels.len(), self.n_facilities())?;
        self.facility_labels = Some(labels);
        Ok(self)
    }

    pub fn with_client_labels(mut self, labels: Vec<String>) -> Result<Self> {
        expect_len("client_labels", labels.len(), self.n_clients())?;
        self.client_labels = Some(labels);
        Ok(self)
    }

    pub fn with_facility_groups(mut self, groups: Vec<String>) -> Result<Self> {
        expect_len("groups", groups.len(), self.n_facilities())?;
        self.facility_groups = Some(groups);
        Ok(self)
    }

    pub fn with_client_groups(mut self, groups: Vec<String>) -> Result<Self> {
        expect_len("client_groups", groups.len(), self.n_clients())?;
        self.client_groups = Some(groups);
        Ok(self)
    }

    pub fn with_polarity(mut self, polarity: Vec<f64>) -> Result<Self> {
        expect_len("polarity", polarity.len(), self.n_facilities())?;
        if let Some(p) = polarity.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite polarity score {p}")));
        }
        self.polarity = Some(polarity);
        Ok(self)
    }

    pub fn with_client_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        expect_len("weights", weights.len(), self.n_clients())?;
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!("invalid client weight {w}")));
        }
        self.client_weights = Some(weights);
        Ok(self)
    }

    /// Group of each client. Explicit client groups win; otherwise, when
    /// facilities and clients carry identical labels (`F = C`), the facility
    /// groups are reused.
    pub fn resolved_client_groups(&self) -> Option<Vec<String>> {
        if let Some(g) = &self.client_groups {
            return Some(g.clone());
        }
        let fg = self.facility_groups.as_ref()?;
        if self.n_clients() != self.n_facilities() {
            return None;
        }
        match (&self.facility_labels, &self.client_labels) {
            (Some(f), Some(c)) if f != c => None,
            _ => Some(fg.clone()),
        }
    }
}

fn expect_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

fn check_entries(a: &Array2<f64>) -> Result<()> {
    for ((row, col), &value) in a.indexed_iter() {
        if !value.is_finite() {
            return Err(Error::InvalidDistance {
                row,
                col,
                value,
                reason: "non-finite distance",
            });
        }
        if value < 0.0 {
            return Err(Error::InvalidDistance {
                row,
                col,
                value,
                reason: "negative distance",
            });
        }
    }
    Ok(())
}

/// Where to read an instance from.
#[derive(Debug, Clone)]
pub enum InstanceSource {
    /// Headerless CSV matrices, one file each.
    MatrixCsv { dfc: PathBuf, dff: PathBuf },
    /// A single JSON object, see [`JsonInstance`].
    Json(PathBuf),
    /// `id,x1,...,xd[,group][,polarity]` CSVs for facilities and clients.
    PointEuclidean {
        facilities: PathBuf,
        clients: PathBuf,
    },
    /// Whitespace separated `u v` edge lines plus one-id-per-line node lists.
    EdgeListGraph {
        edges: PathBuf,
        facilities: PathBuf,
        clients: PathBuf,
        unreachable: Unreachable,
    },
}

pub fn load_instance(source: &InstanceSource) -> Result<Instance> {
    match source {
        InstanceSource::MatrixCsv { dfc, dff } => {
            Instance::new(read_matrix_csv(dfc)?, read_matrix_csv(dff)?)
        }
        InstanceSource::Json(path) => load_json(path),
        InstanceSource::PointEuclidean {
            facilities,
            clients,
        } => load_points(facilities, clients),
        InstanceSource::EdgeListGraph {
            edges,
            facilities,
            clients,
            unreachable,
        } => load_edge_list(edges, facilities, clients, *unreachable),
    }
}

/// Reads a headerless CSV of reals into a dense matrix.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::DimensionMismatch(format!(
                    "{}: row {r} has {} columns, expected {c}",
                    path.display(),
                    record.len()
                )))
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(path, format!("row {r} column {c}: not a number: {field:?}"))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::parse(path, "empty matrix"))?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked per row"))
}

pub fn write_matrix_csv(path: &Path, a: &Array2<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(a))?;
    Ok(())
}

/// Serializes with Rust's shortest round-trip float formatting.
pub fn matrix_to_csv(a: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in a.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// JSON instance file layout.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct JsonInstance {
    pub dfc: Vec<Vec<f64>>,
    pub dff: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facility_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_groups: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl From<&Instance> for JsonInstance {
    fn from(inst: &Instance) -> Self {
        let rows = |a: &Array2<f64>| a.rows().into_iter().map(|r| r.to_vec()).collect();
        JsonInstance {
            dfc: rows(&inst.dfc),
            dff: rows(&inst.dff),
            facility_labels: inst.facility_labels.clone(),
            client_labels: inst.client_labels.clone(),
            groups: inst.facility_groups.clone(),
            client_groups: inst.client_groups.clone(),
            polarity: inst.polarity.clone(),
            weights: inst.client_weights.clone(),
        }
    }
}

impl JsonInstance {
    pub fn into_instance(self) -> Result<Instance> {
        let mut inst = Instance::new(
            nested_to_array("dfc", self.dfc)?,
            nested_to_array("dff", self.dff)?,
        )?;
        if let Some(l) = self.facility_labels {
            inst = inst.with_facility_labels(l)?;
        }
        if let Some(l) = self.client_labels {
            inst = inst.with_client_labels(l)?;
        }
        if let Some(g) = self.groups {
            inst = inst.with_facility_groups(g)?;
        }
        if let Some(g) = self.client_groups {
            inst = inst.with_client_groups(g)?;
        }
        if let Some(p) = self.polarity {
            inst = inst.with_polarity(p)?;
        }
        if let Some(w) = self.weights {
            inst = inst.with_client_weights(w)?;
        }
        Ok(inst)
    }
}

fn nested_to_array(what: &str, rows: Vec<Vec<f64>>) -> Result<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(Error::DimensionMismatch(format!(
            "{what} row {i} has {} entries, expected {c}",
            row.len()
        )));
    }
    Ok(Array2::from_shape_vec((r, c), rows.into_iter().flatten().collect()).expect("rectangular"))
}

fn load_json(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    let raw: JsonInstance = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    raw.into_instance()
}

/// Rows of a point file.
#[derive(Debug, Clone, Default)]
pub struct PointTable {
    pub ids: Vec<String>,
    pub coords: Vec<Vec<f64>>,
    pub groups: Option<Vec<String>>,
    pub polarity: Option<Vec<f64>>,
}

pub fn read_point_csv(path: &Path) -> Result<PointTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let header = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
    if header.get(0) != Some("id") {
        return Err(Error::parse(path, "header must start with `id`"));
    }
    let group_col = header.iter().position(|h| h == "group");
    let polarity_col = header.iter().position(|h| h == "polarity");
    let coord_cols: Vec<usize> = (1..header.len())
        .filter(|c| Some(*c) != group_col && Some(*c) != polarity_col)
        .collect();
    if coord_cols.is_empty() {
        return Err(Error::parse(path, "no coordinate columns"));
    }
    let mut table = PointTable {
        groups: group_col.map(|_| Vec::new()),
        polarity: polarity_col.map(|_| Vec::new()),
        ..Default::default()
    };
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        let num = |c: usize| -> Result<f64> {
            let field = record.get(c).unwrap_or("");
            field.parse().map_err(|_| {
                Error::parse(path, format!("row {r} column {c}: not a number: {field:?}"))
            })
        };
        table.ids.push(record[0].to_string());
        table
            .coords
            .push(coord_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?);
        if let (Some(c), Some(g)) = (group_col, table.groups.as_mut()) {
            g.push(record[c].to_string());
        }
        if let (Some(c), Some(p)) = (polarity_col, table.polarity.as_mut()) {
            p.push(num(c)?);
        }
    }
    if table.ids.is_empty() {
        return Err(Error::parse(path, "no points"));
    }
    Ok(table)
}

fn load_points(facilities: &Path, clients: &Path) -> Result<Instance> {
    let f = read_point_csv(facilities)?;
    let c = read_point_csv(clients)?;
    let dff = metrics::euclidean_distances(&f.coords, &f.coords)?;
    let dfc = metrics::euclidean_distances(&c.coords, &f.coords)?;
    let mut inst = Instance::new(dfc, dff)?
        .with_facility_labels(f.ids)?
        .with_client_labels(c.ids)?;
    if let Some(g) = f.groups {
        inst = inst.with_facility_groups(g)?;
    }
    if let Some(g) = c.groups {
        inst = inst.with_client_groups(g)?;
    }
    if let Some(p) = f.polarity {
        inst = inst.with_polarity(p)?;
    }
    Ok(inst)
}

fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    let ids: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    if ids.is_empty() {
        return Err(Error::parse(path, "empty id list"));
    }
    Ok(ids)
}

/// Reads an undirected edge list with arbitrary node tokens. Node indices are
/// assigned in order of first appearance; self-loops and repeated edges are
/// dropped.
pub fn read_edge_list(path: &Path) -> Result<(Graph, Vec<String>)> {
    let text = fs::read_to_string(path)?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut edges = Vec::new();
    let mut intern = |tok: &str| -> usize {
        *index.entry(tok.to_string()).or_insert_with(|| {
            names.push(tok.to_string());
            names.len() - 1
        })
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty());
        match (parts.next(), parts.next(), parts.next()) {
            (Some(u), Some(v), None) => {
                let (u, v) = (intern(u), intern(v));
                edges.push((u, v));
            }
            _ => {
                return Err(Error::parse(
                    path,
                    format!("line {}: expected `u v`", lineno + 1),
                ))
            }
        }
    }
    let graph = Graph::from_edges(names.len(), edges.into_iter().filter(|(u, v)| u != v))?;
    Ok((graph, names))
}

fn load_edge_list(
    edges: &Path,
    facilities: &Path,
    clients: &Path,
    unreachable: Unreachable,
) -> Result<Instance> {
    let (graph, names) = read_edge_list(edges)?;
    let index: HashMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let resolve = |path: &Path, ids: &[String]| -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::parse(path, format!("node {id:?} not in graph")))
            })
            .collect()
    };
    let f_ids = read_id_list(facilities)?;
    let c_ids = read_id_list(clients)?;
    let f_nodes = resolve(facilities, &f_ids)?;
    let c_nodes = resolve(clients, &c_ids)?;
    let exec = Execution::default();
    let dff = metrics::shortest_path_distances(&graph, &f_nodes, &f_nodes, unreachable, exec)?;
    let dfc = metrics::shortest_path_distances(&graph, &c_nodes, &f_nodes, unreachable, exec)?;
    Instance::new(dfc, dff)?
        .with_facility_labels(f_ids)?
        .with_client_labels(c_ids)
}

/// Outcome of a (possibly sampled) metric-axiom check on the facility matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub is_symmetric: bool,
    pub triangle_violations: u64,
    /// Max of `d(i,j) - d(i,l) - d(l,j)` over checked triples; `-inf` when none
    /// were checked.
    pub worst_violation: f64,
    pub sampled: bool,
    pub checked: u64,
}

/// Checks symmetry exactly and the triangle inequality over all ordered
/// triples when `m^3 <= max_triples`, otherwise over `max_triples` seeded
/// uniform random triples.
pub fn validate_metric(inst: &Instance, max_triples: u64, seed: u64) -> MetricReport {
    let d = inst.dff();
    let m = d.nrows();
    let is_symmetric = (0..m).all(|i| (0..i).all(|j| d[[i, j]] == d[[j, i]]));
    let mut report = MetricReport {
        is_symmetric,
        triangle_violations: 0,
        worst_violation: f64::NEG_INFINITY,
        sampled: false,
        checked: 0,
    };
    let mut check = |i: usize, j: usize, l: usize| {
        let excess = d[[i, j]] - d[[i, l]] - d[[l, j]];
        report.worst_violation = report.worst_violation.max(excess);
        if excess > DIST_TOL {
            report.triangle_violations += 1;
        }
        report.checked += 1;
    };
    let total = (m as u128).pow(3);
    if total <= max_triples as u128 {
        for i in 0..m {
            for j in 0..m {
                for l in 0..m {
                    check(i, j, l);
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..max_triples {
            check(
                rng.random_range(0..m),
                rng.random_range(0..m),
                rng.random_range(0..m),
            );
        }
        report.sampled = true;
    }
    report
}
