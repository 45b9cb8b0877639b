//! The reconciliation k-median objective.
//!
//! Sum mode:
//!
//! ```text
//! f(S) = sum_c d(c, s(c))
//! g(S) = (lambda / 2) * sum_{s in S} sum_{t in S} d(s, t)
//! ```
//!
//! Mean mode replaces the client sum by its average and the pair sum by the
//! average over unordered pairs, with `lambda` multiplying that average
//! directly (`g = 0` when `k = 1`).

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentMode {
    #[default]
    Nearest,
    /// Clients may only be served by facilities of their own group.
    SameGroupNearest,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Sum => "sum",
            Normalization::Mean => "mean",
        })
    }
}

impl fmt::Display for AssignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssignmentMode::Nearest => "nearest",
            AssignmentMode::SameGroupNearest => "same-group-nearest",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub f_term: f64,
    pub g_term: f64,
    pub total: f64,
    pub normalization: Normalization,
}

/// Client to facility map with the per-facility served sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `assigned[c]` is the facility serving client `c`.
    pub assigned: Vec<usize>,
    /// `(facility, clients)` for every selected facility, facilities ascending.
    pub served: Vec<(usize, Vec<usize>)>,
}

impl Assignment {
    pub fn served_by(&self, facility: usize) -> &[usize] {
        self.served
            .iter()
            .find(|(f, _)| *f == facility)
            .map_or(&[], |(_, c)| c.as_slice())
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.served.iter().map(|(_, c)| c.len()).collect()
    }
}

/// The three knobs of the objective besides the selected set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub lambda: f64,
    pub normalization: Normalization,
    pub mode: AssignmentMode,
}

impl Objective {
    pub fn new(lambda: f64, normalization: Normalization, mode: AssignmentMode) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Objective {
            lambda,
            normalization,
            mode,
        })
    }

    /// Converts a service-distance sum into f-term units.
    pub fn f_units(&self, raw: f64, n_clients: usize) -> f64 {
        match self.normalization {
            Normalization::Sum => raw,
            Normalization::Mean => raw / n_clients as f64,
        }
    }

    /// Converts an unordered-pair distance sum into g-term units.
    pub fn g_units(&self, unordered: f64, k: usize) -> f64 {
        match self.normalization {
            Normalization::Sum => self.lambda * unordered,
            Normalization::Mean if k < 2 => 0.0,
            Normalization::Mean => self.lambda * unordered / (k * (k - 1) / 2) as f64,
        }
    }

    pub fn breakdown(
        &self,
        f_raw: f64,
        unordered: f64,
        n_clients: usize,
        k: usize,
    ) -> CostBreakdown {
        let f_term = self.f_units(f_raw, n_clients);
        let g_term = self.g_units(unordered, k);
        CostBreakdown {
            f_term,
            g_term,
            total: f_term + g_term,
            normalization: self.normalization,
        }
    }
}

/// Which facilities may serve which clients.
#[derive(Debug, Clone)]
pub(crate) struct Eligibility {
    groups: Option<(Vec<u32>, Vec<u32>)>,
}

impl Eligibility {
    pub(crate) fn new(inst: &Instance, mode: AssignmentMode) -> Result<Self> {
        match mode {
            AssignmentMode::Nearest => Ok(Eligibility { groups: None }),
            AssignmentMode::SameGroupNearest => {
                let fg = inst
                    .facility_groups()
                    .ok_or_else(|| Error::invalid("same-group assignment needs facility groups"))?;
                let cg = inst
                    .resolved_client_groups()
                    .ok_or_else(|| Error::invalid("same-group assignment needs client groups"))?;
                let mut ids: HashMap<String, u32> = HashMap::new();
                let mut intern = |g: &str| {
                    let next = ids.len() as u32;
                    *ids.entry(g.to_string()).or_insert(next)
                };
                let f: Vec<u32> = fg.iter().map(|g| intern(g)).collect();
                let c: Vec<u32> = cg.iter().map(|g| intern(g)).collect();
                Ok(Eligibility {
                    groups: Some((f, c)),
                })
            }
        }
    }

    #[inline]
    pub(crate) fn allows(&self, client: usize, facility: usize) -> bool {
        match &self.groups {
            None => true,
            Some((f, c)) => f[facility] == c[client],
        }
    }
}

pub(crate) fn check_subset(inst: &Instance, s: &[usize]) -> Result<()> {
    let m = inst.n_facilities();
    if s.is_empty() {
        return Err(Error::invalid("selected set is empty"));
    }
    let mut seen = vec![false; m];
    for &f in s {
        if f >= m {
            return Err(Error::invalid(format!(
                "facility {f} out of range for {m} facilities"
            )));
        }
        if std::mem::replace(&mut seen[f], true) {
            return Err(Error::invalid(format!("facility {f} selected twice")));
        }
    }
    Ok(())
}

/// Nearest eligible selected facility per client, ties to the lowest index.
pub fn assign_clients(inst: &Instance, s: &[usize], mode: AssignmentMode) -> Result<Assignment> {
    check_subset(inst, s)?;
    let elig = Eligibility::new(inst, mode)?;
    assign_with(inst, s, &elig)
}

pub(crate) fn assign_with(inst: &Instance, s: &[usize], elig: &Eligibility) -> Result<Assignment> {
    let dfc = inst.dfc();
    let mut sorted = s.to_vec();
    sorted.sort_unstable();
    let mut assigned = Vec::with_capacity(inst.n_clients());
    for c in 0..inst.n_clients() {
        let mut best: Option<usize> = None;
        for &f in &sorted {
            if elig.allows(c, f) && best.is_none_or(|b| dfc[[c, f]] < dfc[[c, b]]) {
                best = Some(f);
            }
        }
        let f = best.ok_or_else(|| {
            Error::Infeasible(format!("client {c} has no eligible selected facility"))
        })?;
        assigned.push(f);
    }
    let mut served: Vec<(usize, Vec<usize>)> = sorted.iter().map(|&f| (f, Vec::new())).collect();
    for (c, &f) in assigned.iter().enumerate() {
        let slot = sorted
            .binary_search(&f)
            .expect("assigned to a selected facility");
        served[slot].1.push(c);
    }
    Ok(Assignment { assigned, served })
}

/// Sum of `d(s_i, s_j)` over unordered pairs `i < j` of `s`.
pub fn unordered_pair_sum(inst: &Instance, s: &[usize]) -> f64 {
    let d = inst.dff();
    let mut total = 0.0;
    for (i, &a) in s.iter().enumerate() {
        for &b in &s[i + 1..] {
            total += d[[a, b]];
        }
    }
    total
}

/// Sum of `d(s_i, s_j)` over all ordered pairs, the quantity the spectral
/// bounds speak about.
pub fn raw_pair_sum(inst: &Instance, s: &[usize]) -> f64 {
    2.0 * unordered_pair_sum(inst, s)
}

pub fn cost(
    inst: &Instance,
    s: &[usize],
    lambda: f64,
    normalization: Normalization,
    mode: AssignmentMode,
) -> Result<CostBreakdown> {
    let obj = Objective::new(lambda, normalization, mode)?;
    check_subset(inst, s)?;
    let elig = Eligibility::new(inst, mode)?;
    cost_with(inst, s, &obj, &elig)
}

pub(crate) fn cost_with(
    inst: &Instance,
    s: &[usize],
    obj: &Objective,
    elig: &Eligibility,
) -> Result<CostBreakdown> {
    let a = assign_with(inst, s, elig)?;
    let dfc = inst.dfc();
    let f_raw: f64 = a
        .assigned
        .iter()
        .enumerate()
        .map(|(c, &f)| dfc[[c, f]])
        .sum();
    let mut sorted = s.to_vec();
    sorted.sort_unstable();
    Ok(obj.breakdown(
        f_raw,
        unordered_pair_sum(inst, &sorted),
        inst.n_clients(),
        s.len(),
    ))
}

/// `cost(S - s_out + t_in) - cost(S)`, evaluated incrementally.
#[allow(clippy::too_many_arguments)]
pub fn swap_delta(
    inst: &Instance,
    s: &[usize],
    s_out: usize,
    t_in: usize,
    lambda: f64,
    normalization: Normalization,
    mode: AssignmentMode,
) -> Result<f64> {
    let obj = Objective::new(lambda, normalization, mode)?;
    let state = SwapState::new(inst, s, obj)?;
    state.check_swap(s_out, t_in)?;
    Ok(state.delta(s_out, t_in))
}

/// Mutable search state with per-client nearest/second-nearest caches and
/// per-facility distance sums to the selected set.
#[derive(Debug, Clone)]
pub struct SwapState<'a> {
    inst: &'a Instance,
    obj: Objective,
    elig: Eligibility,
    selected: Vec<usize>,
    in_set: Vec<bool>,
    nearest: Vec<Option<usize>>,
    second: Vec<Option<usize>>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    /// `to_selected[f] = sum_{s in S} dFF[f][s]`
    to_selected: Vec<f64>,
    f_raw: f64,
    pair_raw: f64,
}

impl<'a> SwapState<'a> {
    pub fn new(inst: &'a Instance, s: &[usize], obj: Objective) -> Result<Self> {
        check_subset(inst, s)?;
        let elig = Eligibility::new(inst, obj.mode)?;
        let m = inst.n_facilities();
        let n = inst.n_clients();
        let mut selected = s.to_vec();
        selected.sort_unstable();
        let mut in_set = vec![false; m];
        for &f in &selected {
            in_set[f] = true;
        }
        let dff = inst.dff();
        let to_selected = (0..m)
            .map(|f| selected.iter().map(|&t| dff[[f, t]]).sum())
            .collect();
        let mut state = SwapState {
            inst,
            obj,
            elig,
            selected,
            in_set,
            nearest: vec![None; n],
            second: vec![None; n],
            d1: vec![f64::INFINITY; n],
            d2: vec![f64::INFINITY; n],
            to_selected,
            f_raw: 0.0,
            pair_raw: 0.0,
        };
        for c in 0..n {
            state.refresh_client(c);
            if state.nearest[c].is_none() {
                return Err(Error::Infeasible(format!(
                    "client {c} has no eligible selected facility"
                )));
            }
        }
        state.f_raw = state.d1.iter().sum();
        state.pair_raw = unordered_pair_sum(inst, &state.selected);
        Ok(state)
    }

    fn refresh_client(&mut self, c: usize) {
        let dfc = self.inst.dfc();
        let (mut b1, mut b2) = (None::<usize>, None::<usize>);
        let (mut v1, mut v2) = (f64::INFINITY, f64::INFINITY);
        for &f in &self.selected {
            if !self.elig.allows(c, f) {
                continue;
            }
            let d = dfc[[c, f]];
            // selected is ascending, so strict comparisons keep the lower index on ties
            if b1.is_none() || d < v1 {
                b2 = b1;
                v2 = v1;
                b1 = Some(f);
                v1 = d;
            } else if b2.is_none() || d < v2 {
                b2 = Some(f);
                v2 = d;
            }
        }
        self.nearest[c] = b1;
        self.second[c] = b2;
        self.d1[c] = v1;
        self.d2[c] = v2;
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn contains(&self, f: usize) -> bool {
        self.in_set[f]
    }

    pub fn objective(&self) -> &Objective {
        &self.obj
    }

    pub fn breakdown(&self) -> CostBreakdown {
        self.obj.breakdown(
            self.f_raw,
            self.pair_raw,
            self.inst.n_clients(),
            self.selected.len(),
        )
    }

    pub fn total(&self) -> f64 {
        self.breakdown().total
    }

    pub fn assignment(&self) -> Assignment {
        assign_with(self.inst, &self.selected, &self.elig).expect("state is feasible")
    }

    fn check_swap(&self, s_out: usize, t_in: usize) -> Result<()> {
        let m = self.inst.n_facilities();
        if s_out >= m || t_in >= m {
            return Err(Error::invalid(format!(
                "swap ({s_out}, {t_in}) out of range"
            )));
        }
        if !self.in_set[s_out] {
            return Err(Error::invalid(format!("facility {s_out} is not selected")));
        }
        if self.in_set[t_in] {
            return Err(Error::invalid(format!(
                "facility {t_in} is already selected"
            )));
        }
        Ok(())
    }

    /// Raw change of the unordered pair sum for the swap.
    fn pair_delta(&self, s_out: usize, t_in: usize) -> f64 {
        let dff = self.inst.dff();
        (self.to_selected[t_in] - dff[[t_in, s_out]]) - self.to_selected[s_out]
    }

    /// Raw change of the service sum; `+inf` if some client loses its last
    /// eligible facility.
    fn service_delta(&self, s_out: usize, t_in: usize) -> f64 {
        let dfc = self.inst.dfc();
        let mut delta = 0.0;
        for c in 0..self.d1.len() {
            let dt = if self.elig.allows(c, t_in) {
                dfc[[c, t_in]]
            } else {
                f64::INFINITY
            };
            let keep = if self.nearest[c] == Some(s_out) {
                self.d2[c]
            } else {
                self.d1[c]
            };
            let new = keep.min(dt);
            if new == f64::INFINITY {
                return f64::INFINITY;
            }
            delta += new - self.d1[c];
        }
        delta
    }

    /// Change of the total for swapping `s_out` (selected) for `t_in`
    /// (unselected). Caller guarantees membership.
    pub fn delta(&self, s_out: usize, t_in: usize) -> f64 {
        let df = self.service_delta(s_out, t_in);
        if df == f64::INFINITY {
            return f64::INFINITY;
        }
        let n = self.inst.n_clients();
        let k = self.selected.len();
        self.obj.f_units(df, n) + self.obj.g_units(self.pair_delta(s_out, t_in), k)
    }

    /// Performs the swap and refreshes only the clients whose caches it can
    /// invalidate.
    pub fn apply(&mut self, s_out: usize, t_in: usize) {
        debug_assert!(self.in_set[s_out] && !self.in_set[t_in]);
        let dff = self.inst.dff();
        let dfc = self.inst.dfc();
        let pos = self.selected.binary_search(&s_out).expect("selected");
        self.selected.remove(pos);
        let ins = self.selected.binary_search(&t_in).unwrap_err();
        self.selected.insert(ins, t_in);
        self.in_set[s_out] = false;
        self.in_set[t_in] = true;
        for f in 0..self.to_selected.len() {
            self.to_selected[f] += dff[[f, t_in]] - dff[[f, s_out]];
        }
        for c in 0..self.d1.len() {
            let touched = self.nearest[c] == Some(s_out)
                || self.second[c] == Some(s_out)
                || (self.elig.allows(c, t_in) && dfc[[c, t_in]] <= self.d2[c]);
            if touched {
                self.refresh_client(c);
            }
        }
        self.f_raw = self.d1.iter().sum();
        self.pair_raw = unordered_pair_sum(self.inst, &self.selected);
    }
}
