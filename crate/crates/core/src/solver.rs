//! Single-swap local search with restarts.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::objective::{
    self, Assignment, AssignmentMode, CostBreakdown, Normalization, Objective, SwapState,
};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Take the first improving swap in `(s ascending, t ascending)` order.
    #[default]
    First,
    /// Take the most improving swap of each sweep, ties to the lowest `(s, t)`.
    Best,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::First => "first",
            Strategy::Best => "best",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub k: usize,
    pub lambda: f64,
    pub normalization: Normalization,
    pub strategy: Strategy,
    pub improvement_tol: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Exact number of facilities per group; groups not listed get none.
    pub quotas: Option<BTreeMap<String, usize>>,
    pub assignment_mode: AssignmentMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            k: 1,
            lambda: 0.0,
            normalization: Normalization::Sum,
            strategy: Strategy::First,
            improvement_tol: 1e-9,
            max_iterations: 1000,
            restarts: 40,
            seed: 0,
            quotas: None,
            assignment_mode: AssignmentMode::Nearest,
        }
    }
}

impl SolverConfig {
    pub fn new(k: usize, lambda: f64) -> Self {
        SolverConfig {
            k,
            lambda,
            ..Default::default()
        }
    }

    pub fn objective(&self) -> Result<Objective> {
        Objective::new(self.lambda, self.normalization, self.assignment_mode)
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        let m = inst.n_facilities();
        if self.k == 0 || self.k > m {
            return Err(Error::invalid(format!("k = {} outside 1..={m}", self.k)));
        }
        self.objective()?;
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be >= 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        if !(self.improvement_tol >= 0.0 && self.improvement_tol.is_finite()) {
            return Err(Error::invalid("improvement_tol must be finite and >= 0"));
        }
        if let Some(q) = &self.quotas {
            quota_pools(inst, q, self.k)?;
        }
        Ok(())
    }
}

/// Splits `k` across the distinct group labels in sorted order, handing the
/// remainder to the first groups (odd `k` over two groups gives `ceil(k/2)`
/// to the first label).
pub fn balanced_quotas(groups: &[String], k: usize) -> BTreeMap<String, usize> {
    let labels: std::collections::BTreeSet<&String> = groups.iter().collect();
    let g = labels.len().max(1);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), k / g + usize::from(i < k % g)))
        .collect()
}

/// Facilities of each quota group (ascending) paired with the quota.
fn quota_pools(
    inst: &Instance,
    quotas: &BTreeMap<String, usize>,
    k: usize,
) -> Result<Vec<(Vec<usize>, usize)>> {
    let groups = inst
        .facility_groups()
        .ok_or_else(|| Error::invalid("quotas need facility groups"))?;
    let total: usize = quotas.values().sum();
    if total != k {
        return Err(Error::invalid(format!(
            "quotas sum to {total}, expected k = {k}"
        )));
    }
    quotas
        .iter()
        .map(|(label, &q)| {
            let pool: Vec<usize> = (0..groups.len()).filter(|&f| &groups[f] == label).collect();
            if pool.len() < q {
                return Err(Error::Infeasible(format!(
                    "group {label:?} has {} facilities, quota is {q}",
                    pool.len()
                )));
            }
            Ok((pool, q))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub selected: Vec<usize>,
    pub assignment: Assignment,
    pub cost: CostBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Sweeps over the candidate swaps, including the final one that found
    /// nothing to improve.
    pub iterations: usize,
    pub swaps_performed: usize,
    pub converged: bool,
    pub seed: u64,
    /// Total cost at the start and after every performed swap.
    pub cost_trace: Vec<f64>,
    #[serde(rename = "final")]
    pub final_solution: Solution,
}

/// Seeded uniform random initial set; per group under quotas.
pub fn random_initial(inst: &Instance, cfg: &SolverConfig, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = match &cfg.quotas {
        None => {
            let mut all: Vec<usize> = (0..inst.n_facilities()).collect();
            let (head, _) = all.partial_shuffle(&mut rng, cfg.k);
            head.to_vec()
        }
        Some(q) => {
            let mut chosen = Vec::with_capacity(cfg.k);
            for (mut pool, quota) in quota_pools(inst, q, cfg.k)? {
                let (head, _) = pool.partial_shuffle(&mut rng, quota);
                chosen.extend_from_slice(head);
            }
            chosen
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

fn check_initial(inst: &Instance, cfg: &SolverConfig, initial: &[usize]) -> Result<()> {
    objective::check_subset(inst, initial)?;
    if initial.len() != cfg.k {
        return Err(Error::invalid(format!(
            "initial set has {} facilities, expected k = {}",
            initial.len(),
            cfg.k
        )));
    }
    if let (Some(q), Some(groups)) = (&cfg.quotas, inst.facility_groups()) {
        for (label, &want) in q {
            let got = initial.iter().filter(|&&f| &groups[f] == label).count();
            if got != want {
                return Err(Error::invalid(format!(
                    "initial set has {got} facilities of group {label:?}, quota {want}"
                )));
            }
        }
    }
    Ok(())
}

/// Runs one local search from `initial`, or from a random set drawn with
/// `cfg.seed`.
pub fn local_search(
    inst: &Instance,
    cfg: &SolverConfig,
    initial: Option<&[usize]>,
) -> Result<RunStats> {
    cfg.validate(inst)?;
    let start = match initial {
        Some(s) => {
            check_initial(inst, cfg, s)?;
            s.to_vec()
        }
        None => random_initial(inst, cfg, cfg.seed)?,
    };
    let mut state = SwapState::new(inst, &start, cfg.objective()?)?;
    let groups = cfg.quotas.as_ref().and(inst.facility_groups());
    let admissible = |s: usize, t: usize| groups.is_none_or(|g| g[s] == g[t]);
    let m = inst.n_facilities();
    let tol = cfg.improvement_tol;

    let mut trace = vec![state.total()];
    let mut iterations = 0;
    let mut swaps = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let order = state.selected().to_vec();
        let mut improved = false;
        match cfg.strategy {
            Strategy::First => {
                for &s in &order {
                    for t in 0..m {
                        if state.contains(t) || !admissible(s, t) {
                            continue;
                        }
                        if state.delta(s, t) < -tol {
                            state.apply(s, t);
                            trace.push(state.total());
                            swaps += 1;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            Strategy::Best => {
                let mut best: Option<(f64, usize, usize)> = None;
                for &s in &order {
                    for t in 0..m {
                        if state.contains(t) || !admissible(s, t) {
                            continue;
                        }
                        let d = state.delta(s, t);
                        if d < -tol && best.is_none_or(|(bd, _, _)| d < bd) {
                            best = Some((d, s, t));
                        }
                    }
                }
                if let Some((_, s, t)) = best {
                    state.apply(s, t);
                    trace.push(state.total());
                    swaps += 1;
                    improved = true;
                }
            }
        }
        if !improved {
            converged = true;
            break;
        }
    }

    Ok(RunStats {
        iterations,
        swaps_performed: swaps,
        converged,
        seed: cfg.seed,
        cost_trace: trace,
        final_solution: Solution {
            selected: state.selected().to_vec(),
            assignment: state.assignment(),
            cost: state.breakdown(),
        },
    })
}

/// Independent restarts with seeds `cfg.seed + r`; returns the lowest-total
/// solution (earliest restart on ties) and every run.
pub fn solve(inst: &Instance, cfg: &SolverConfig) -> Result<(Solution, Vec<RunStats>)> {
    solve_with(inst, cfg, Execution::default())
}

pub fn solve_with(
    inst: &Instance,
    cfg: &SolverConfig,
    exec: Execution,
) -> Result<(Solution, Vec<RunStats>)> {
    cfg.validate(inst)?;
    let runs = par::try_map_indexed(exec, cfg.restarts, |r| {
        let run_cfg = SolverConfig {
            seed: cfg.seed.wrapping_add(r as u64),
            ..cfg.clone()
        };
        local_search(inst, &run_cfg, None)
    })?;
    let best = best_run(&runs).final_solution.clone();
    Ok((best, runs))
}

pub(crate) fn best_run(runs: &[RunStats]) -> &RunStats {
    runs.iter()
        .reduce(|a, b| {
            if b.final_solution.cost.total < a.final_solution.cost.total {
                b
            } else {
                a
            }
        })
        .expect("at least one run")
}

/// Re-checks every admissible swap of `selected` by full recomputation of
/// the objective. Returns the first swap improving by more than
/// `cfg.improvement_tol`, if any.
pub fn find_improving_swap(
    inst: &Instance,
    cfg: &SolverConfig,
    selected: &[usize],
) -> Result<Option<(usize, usize, f64)>> {
    let cost =
        |s: &[usize]| objective::cost(inst, s, cfg.lambda, cfg.normalization, cfg.assignment_mode);
    let base = cost(selected)?.total;
    let groups = cfg.quotas.as_ref().and(inst.facility_groups());
    for (pos, &s) in selected.iter().enumerate() {
        for t in 0..inst.n_facilities() {
            if selected.contains(&t) || groups.is_some_and(|g| g[s] != g[t]) {
                continue;
            }
            let mut cand = selected.to_vec();
            cand[pos] = t;
            let total = match cost(&cand) {
                Ok(c) => c.total,
                Err(Error::Infeasible(_)) => continue,
                Err(e) => return Err(e),
            };
            if total < base - cfg.improvement_tol {
                return Ok(Some((s, t, total - base)));
            }
        }
    }
    Ok(None)
}
