//! Experiment sweeps over `(k, lambda)` with restarts, polarity metrics,
//! selection frequencies, synthetic instances and report writers.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::metrics;
use crate::objective::{AssignmentMode, Normalization};
use crate::par::{self, Execution};
use crate::solver::{balanced_quotas, local_search, SolverConfig, Strategy};

/// Quota policy for a sweep. `Balanced` splits each `k` evenly across the
/// facility groups; `Fixed` must sum to every swept `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuotaSpec {
    Balanced,
    Fixed(BTreeMap<String, usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub k_values: Vec<usize>,
    pub lambda_values: Vec<f64>,
    pub restarts: usize,
    pub normalization: Normalization,
    pub strategy: Strategy,
    pub assignment_mode: AssignmentMode,
    pub quotas: Option<QuotaSpec>,
    pub seed: u64,
    pub improvement_tol: f64,
    pub max_iterations: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let base = SolverConfig::default();
        SweepSpec {
            k_values: vec![2, 4, 8],
            lambda_values: default_lambda_grid(),
            restarts: base.restarts,
            normalization: Normalization::Mean,
            strategy: base.strategy,
            assignment_mode: base.assignment_mode,
            quotas: None,
            seed: 0,
            improvement_tol: base.improvement_tol,
            max_iterations: base.max_iterations,
        }
    }
}

/// `0` followed by `2^i / 10` for `i = 1..=6`.
pub fn default_lambda_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((1..=6).map(|i| f64::from(1u32 << i) / 10.0))
        .collect()
}

impl SweepSpec {
    pub fn validate(&self, inst: &Instance) -> Result<()> {
        if self.k_values.is_empty() || self.lambda_values.is_empty() {
            return Err(Error::invalid("sweep needs at least one k and one lambda"));
        }
        if let Some(l) = self
            .lambda_values
            .iter()
            .find(|l| !(**l >= 0.0 && l.is_finite()))
        {
            return Err(Error::invalid(format!(
                "lambda {l} must be finite and >= 0"
            )));
        }
        for &k in &self.k_values {
            self.config(inst, k, 0.0, 0)?.validate(inst)?;
        }
        Ok(())
    }

    /// Solver configuration for one cell; `seed` is the cell seed.
    pub fn config(
        &self,
        inst: &Instance,
        k: usize,
        lambda: f64,
        seed: u64,
    ) -> Result<SolverConfig> {
        let quotas = match &self.quotas {
            None => None,
            Some(QuotaSpec::Fixed(q)) => Some(q.clone()),
            Some(QuotaSpec::Balanced) => {
                let g = inst
                    .facility_groups()
                    .ok_or_else(|| Error::invalid("balanced quotas need facility groups"))?;
                Some(balanced_quotas(g, k))
            }
        };
        Ok(SolverConfig {
            k,
            lambda,
            normalization: self.normalization,
            strategy: self.strategy,
            improvement_tol: self.improvement_tol,
            max_iterations: self.max_iterations,
            restarts: self.restarts,
            seed,
            quotas,
            assignment_mode: self.assignment_mode,
        })
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of restart 0 in every cell with this `k`. Restart `r` uses
/// `cell_seed + r`, so all lambda columns share their starting sets.
pub fn cell_seed(base: u64, k: usize) -> u64 {
    base ^ splitmix64(k as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub k: usize,
    pub lambda: f64,
    pub lambda_index: usize,
    pub restart: usize,
    pub seed: u64,
    pub selected: Vec<String>,
    pub f_term: f64,
    pub g_term: f64,
    pub total: f64,
    pub iterations: usize,
    pub swaps: usize,
    pub converged: bool,
    pub polarity_stddev: Option<f64>,
    pub polarity_l2: Option<f64>,
}

/// One record per `(k, lambda, restart)`, ordered by `k`, then lambda, then
/// restart, in the order given by the spec.
pub fn run_sweep(inst: &Instance, spec: &SweepSpec, exec: Execution) -> Result<Vec<SweepRecord>> {
    spec.validate(inst)?;
    let cells: Vec<(usize, usize)> = spec
        .k_values
        .iter()
        .flat_map(|&k| (0..spec.lambda_values.len()).map(move |li| (k, li)))
        .collect();
    let per_cell = spec.restarts;
    par::try_map_indexed(exec, cells.len() * per_cell, |job| {
        let (k, li) = cells[job / per_cell];
        let restart = job % per_cell;
        let lambda = spec.lambda_values[li];
        let seed = cell_seed(spec.seed, k).wrapping_add(restart as u64);
        let cfg = spec.config(inst, k, lambda, seed)?;
        let run = local_search(inst, &cfg, None).map_err(|e| {
            Error::invalid(format!(
                "sweep cell k={k} lambda={lambda} restart={restart}: {e}"
            ))
        })?;
        let sol = &run.final_solution;
        let scores: Option<Vec<f64>> = inst
            .polarity()
            .map(|p| sol.selected.iter().map(|&f| p[f]).collect());
        Ok(SweepRecord {
            k,
            lambda,
            lambda_index: li,
            restart,
            seed,
            selected: sol
                .selected
                .iter()
                .map(|&f| inst.facility_label(f))
                .collect(),
            f_term: sol.cost.f_term,
            g_term: sol.cost.g_term,
            total: sol.cost.total,
            iterations: run.iterations,
            swaps: run.swaps_performed,
            converged: run.converged,
            polarity_stddev: scores.as_deref().and_then(|s| polarity_stddev(s).ok()),
            polarity_l2: scores.as_deref().and_then(|s| polarity_l2(s).ok()),
        })
    })
}

/// Sample standard deviation (`n - 1` denominator).
pub fn polarity_stddev(scores: &[f64]) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::invalid("standard deviation needs at least 2 scores"));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let ss: f64 = scores.iter().map(|s| (s - mean) * (s - mean)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}

pub fn polarity_l2(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("l2 norm of an empty score vector"));
    }
    Ok(scores.iter().map(|s| s * s).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRecord {
    pub label: String,
    pub frequency: f64,
    pub polarity: Option<f64>,
    pub mentions: Option<u64>,
}

/// Facilities of one cell ranked by how often they were selected, most
/// frequent first (ties by label), never-selected ones omitted.
pub fn frequency_table(
    records: &[SweepRecord],
    k: usize,
    lambda: f64,
    top: usize,
    polarity: Option<&HashMap<String, f64>>,
    mentions: Option<&HashMap<String, u64>>,
) -> Result<Vec<FrequencyRecord>> {
    let cell: Vec<&SweepRecord> = records
        .iter()
        .filter(|r| r.k == k && r.lambda == lambda)
        .collect();
    if cell.is_empty() {
        return Err(Error::invalid(format!(
            "no records for k={k}, lambda={lambda}"
        )));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &cell {
        for l in &r.selected {
            *counts.entry(l.as_str()).or_default() += 1;
        }
    }
    let runs = cell.len() as f64;
    let mut out: Vec<FrequencyRecord> = counts
        .into_iter()
        .map(|(label, c)| FrequencyRecord {
            label: label.to_string(),
            frequency: c as f64 / runs,
            polarity: polarity.and_then(|p| p.get(label).copied()),
            mentions: mentions.and_then(|m| m.get(label).copied()),
        })
        .collect();
    out.sort_by(|a, b| {
        b.frequency
            .total_cmp(&a.frequency)
            .then_with(|| a.label.cmp(&b.label))
    });
    out.truncate(top);
    Ok(out)
}

/// Gaussian blobs on the real line with `F = C`. Each point's polarity is
/// its coordinate and its group is `b<blob index>`.
pub fn generate_synthetic(
    n_per_blob: usize,
    blob_centers: &[f64],
    spread: f64,
    seed: u64,
) -> Result<Instance> {
    if blob_centers.len() < 2 {
        return Err(Error::invalid("need at least two blobs"));
    }
    if n_per_blob == 0 {
        return Err(Error::invalid("blobs must be nonempty"));
    }
    if !(spread > 0.0 && spread.is_finite()) || blob_centers.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid(format!("invalid spread {spread} or center")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::new();
    let mut groups = Vec::new();
    for (b, &center) in blob_centers.iter().enumerate() {
        let normal = Normal::new(center, spread).map_err(|e| Error::invalid(e.to_string()))?;
        for _ in 0..n_per_blob {
            xs.push(normal.sample(&mut rng));
            groups.push(format!("b{b}"));
        }
    }
    let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let labels = (0..xs.len()).map(|i| format!("p{i}")).collect::<Vec<_>>();
    Instance::shared(metrics::euclidean_distances(&pts, &pts)?)?
        .with_facility_labels(labels.clone())?
        .with_client_labels(labels)?
        .with_facility_groups(groups)?
        .with_polarity(xs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub stddev: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stddev = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(MeanStd { mean, stddev })
    }
}

/// Values of the lowest-total restart of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRestart {
    pub restart: usize,
    pub selected: Vec<String>,
    pub f_term: f64,
    pub g_term: f64,
    pub total: f64,
    pub polarity_stddev: Option<f64>,
    pub polarity_l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub k: usize,
    pub lambda: f64,
    pub lambda_index: usize,
    pub restarts: usize,
    /// Averages over all restarts.
    pub per_restart_f_term: MeanStd,
    pub per_restart_g_term: MeanStd,
    pub per_restart_total: MeanStd,
    pub per_restart_iterations: MeanStd,
    pub per_restart_polarity_stddev: Option<MeanStd>,
    pub per_restart_polarity_l2: Option<MeanStd>,
    pub max_iterations: usize,
    pub converged: usize,
    pub best_restart: BestRestart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub spec: SweepSpec,
    pub cells: Vec<CellSummary>,
}

pub fn summarize(spec: &SweepSpec, records: &[SweepRecord]) -> SweepSummary {
    let mut cells: Vec<CellSummary> = Vec::new();
    for chunk in records.chunk_by(|a, b| a.k == b.k && a.lambda_index == b.lambda_index) {
        let col = |f: fn(&SweepRecord) -> f64| chunk.iter().map(f).collect::<Vec<_>>();
        let opt_col = |f: fn(&SweepRecord) -> Option<f64>| {
            let v: Vec<f64> = chunk.iter().filter_map(f).collect();
            MeanStd::of(&v)
        };
        let best = chunk
            .iter()
            .reduce(|a, b| if b.total < a.total { b } else { a })
            .expect("chunks are nonempty");
        cells.push(CellSummary {
            k: chunk[0].k,
            lambda: chunk[0].lambda,
            lambda_index: chunk[0].lambda_index,
            restarts: chunk.len(),
            per_restart_f_term: MeanStd::of(&col(|r| r.f_term)).expect("nonempty"),
            per_restart_g_term: MeanStd::of(&col(|r| r.g_term)).expect("nonempty"),
            per_restart_total: MeanStd::of(&col(|r| r.total)).expect("nonempty"),
            per_restart_iterations: MeanStd::of(&col(|r| r.iterations as f64)).expect("nonempty"),
            per_restart_polarity_stddev: opt_col(|r| r.polarity_stddev),
            per_restart_polarity_l2: opt_col(|r| r.polarity_l2),
            max_iterations: chunk.iter().map(|r| r.iterations).max().unwrap_or(0),
            converged: chunk.iter().filter(|r| r.converged).count(),
            best_restart: BestRestart {
                restart: best.restart,
                selected: best.selected.clone(),
                f_term: best.f_term,
                g_term: best.g_term,
                total: best.total,
                polarity_stddev: best.polarity_stddev,
                polarity_l2: best.polarity_l2,
            },
        });
    }
    SweepSummary {
        spec: spec.clone(),
        cells,
    }
}

pub const CSV_HEADER: &str =
    "k,lambda,lambda_index,restart,seed,selected,f_term,g_term,total,iterations,swaps,converged,polarity_stddev,polarity_l2";

/// One row per record. Floats use shortest round-trip formatting, labels in
/// `selected` are joined with `;`, absent polarity fields are empty.
pub fn records_to_csv(records: &[SweepRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let selected = r.selected.join(";");
        let selected = if selected.contains([',', '"', '\n']) {
            format!("\"{}\"", selected.replace('"', "\"\""))
        } else {
            selected
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.lambda,
            r.lambda_index,
            r.restart,
            r.seed,
            selected,
            r.f_term,
            r.g_term,
            r.total,
            r.iterations,
            r.swaps,
            r.converged,
            opt(r.polarity_stddev),
            opt(r.polarity_l2)
        )
        .expect("writing to a String");
    }
    out
}

/// Writes `records.csv` and `summary.json` into `dir`.
pub fn write_sweep_reports(dir: &Path, spec: &SweepSpec, records: &[SweepRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("records.csv"), records_to_csv(records))?;
    let summary = summarize(spec, records);
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}
