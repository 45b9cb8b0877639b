//! Spectral bounds on the pairwise term, trivial bounds on the service term,
//! and exhaustive oracles.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::linalg;
use crate::objective::{self, AssignmentMode, Eligibility, Normalization, Objective};
use crate::par::{self, Execution};
use crate::solver::Solution;

/// Largest number of subsets the oracles will enumerate.
pub const ORACLE_LIMIT: u128 = 1_000_000;

/// Bounds for a given `k`. The pair bounds are in raw ordered-pair units,
/// `sum_{s in S} sum_{t in S} d(s, t)`, without the `lambda / 2` factor; use
/// [`BoundsReport::g_term_bounds`] to convert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub m: usize,
    pub k: usize,
    /// Sum of the `k` smallest squared eigenvalues of the entrywise square
    /// root of `dFF`.
    pub g_lower: f64,
    /// `k` times the absolutely largest eigenvalue of `dFF`.
    pub g_upper: f64,
    pub f_lower: f64,
    pub f_upper: f64,
    pub eigenvalues_d: Vec<f64>,
    pub eigenvalues_dtilde: Vec<f64>,
    /// Set for `k = 1`, where every singleton has pair sum 0 but `g_lower`
    /// can be positive.
    pub singleton_caveat: bool,
}

impl BoundsReport {
    /// `(lower, upper)` on the g-term for the given `lambda` and normalization.
    pub fn g_term_bounds(&self, lambda: f64, normalization: Normalization) -> (f64, f64) {
        let scale = match normalization {
            Normalization::Sum => lambda / 2.0,
            Normalization::Mean if self.k < 2 => 0.0,
            Normalization::Mean => lambda / (self.k * (self.k - 1)) as f64,
        };
        (self.g_lower * scale, self.g_upper * scale)
    }

    /// `(lower, upper)` on the f-term for the given normalization.
    pub fn f_term_bounds(&self, normalization: Normalization, n_clients: usize) -> (f64, f64) {
        match normalization {
            Normalization::Sum => (self.f_lower, self.f_upper),
            Normalization::Mean => (
                self.f_lower / n_clients as f64,
                self.f_upper / n_clients as f64,
            ),
        }
    }
}

pub fn spectral_bounds(inst: &Instance, k: usize) -> Result<BoundsReport> {
    let m = inst.n_facilities();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("k = {k} outside 1..={m}")));
    }
    let d = inst.dff();
    let dtilde = d.mapv(f64::sqrt);
    let eig_d = linalg::eigh(d.view())?.eigenvalues.to_vec();
    let eig_t = linalg::eigh(dtilde.view())?.eigenvalues.to_vec();
    // eigenvalues are ordered absolutely-largest first, so the tail holds
    // indices m-k+1..=m
    let g_lower = eig_t[m - k..].iter().map(|v| v * v).sum();
    let g_upper = k as f64 * eig_d[0];
    let dfc = inst.dfc();
    let f_lower = dfc
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .sum();
    let f_upper = dfc
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(0.0, f64::max))
        .sum();
    Ok(BoundsReport {
        m,
        k,
        g_lower,
        g_upper,
        f_lower,
        f_upper,
        eigenvalues_d: eig_d,
        eigenvalues_dtilde: eig_t,
        singleton_caveat: k == 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub optimum: Solution,
    pub optimum_total: f64,
    pub enumerated: u64,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn guard(m: usize, k: usize) -> Result<()> {
    let count = binomial(m, k);
    if count > ORACLE_LIMIT {
        return Err(Error::GuardExceeded {
            count,
            limit: ORACLE_LIMIT,
        });
    }
    Ok(())
}

/// Advances `s` (strictly increasing, values `< m`) to the next subset in
/// lexicographic order. Positions before `fixed` are left alone.
pub fn next_combination(s: &mut [usize], m: usize, fixed: usize) -> bool {
    let k = s.len();
    let Some(i) = (fixed..k).rev().find(|&i| s[i] < m - k + i) else {
        return false;
    };
    s[i] += 1;
    for j in i + 1..k {
        s[j] = s[j - 1] + 1;
    }
    true
}

/// Exact minimizer of the full objective over all feasible `k`-subsets.
/// Ties go to the lexicographically smallest subset.
#[allow(clippy::too_many_arguments)]
pub fn brute_force(
    inst: &Instance,
    k: usize,
    lambda: f64,
    normalization: Normalization,
    mode: AssignmentMode,
    quotas: Option<&BTreeMap<String, usize>>,
    exec: Execution,
) -> Result<OracleResult> {
    let m = inst.n_facilities();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("k = {k} outside 1..={m}")));
    }
    guard(m, k)?;
    let obj = Objective::new(lambda, normalization, mode)?;
    let elig = Eligibility::new(inst, mode)?;
    let groups = match quotas {
        Some(q) => {
            let g = inst
                .facility_groups()
                .ok_or_else(|| Error::invalid("quotas need facility groups"))?;
            if q.values().sum::<usize>() != k {
                return Err(Error::invalid("quotas must sum to k"));
            }
            Some((g, q))
        }
        None => None,
    };
    let quota_ok = |s: &[usize]| match groups {
        None => true,
        Some((g, q)) => q
            .iter()
            .all(|(label, &want)| s.iter().filter(|&&f| &g[f] == label).count() == want),
    };

    // chunk by first element; each chunk returns (count, best)
    type Chunk = (u64, Option<(f64, Vec<usize>)>);
    let chunks: Vec<Result<Chunk>> = par::map_indexed(exec, m - k + 1, |first| {
        let mut s: Vec<usize> = (first..first + k).collect();
        let mut count = 0u64;
        let mut best: Option<(f64, Vec<usize>)> = None;
        loop {
            if quota_ok(&s) {
                count += 1;
                match objective::cost_with(inst, &s, &obj, &elig) {
                    Ok(c) => {
                        if best.as_ref().is_none_or(|(b, _)| c.total < *b) {
                            best = Some((c.total, s.clone()));
                        }
                    }
                    Err(Error::Infeasible(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            if !next_combination(&mut s, m, 1) {
                break;
            }
        }
        Ok((count, best))
    });

    let mut enumerated = 0;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for chunk in chunks {
        let (count, cand) = chunk?;
        enumerated += count;
        if let Some((t, s)) = cand {
            if best.as_ref().is_none_or(|(b, _)| t < *b) {
                best = Some((t, s));
            }
        }
    }
    let (optimum_total, selected) =
        best.ok_or_else(|| Error::Infeasible("no feasible subset".to_string()))?;
    let assignment = objective::assign_with(inst, &selected, &elig)?;
    let cost = objective::cost_with(inst, &selected, &obj, &elig)?;
    Ok(OracleResult {
        optimum: Solution {
            selected,
            assignment,
            cost,
        },
        optimum_total,
        enumerated,
    })
}

/// Exhaustive minimizer of the ordered-pair distance sum over `k`-subsets,
/// ties to the lexicographically smallest subset.
pub fn mpd_oracle(dff: &Array2<f64>, k: usize) -> Result<(Vec<usize>, f64)> {
    let (m, c) = dff.dim();
    if m != c {
        return Err(Error::DimensionMismatch(format!("{m} x {c} is not square")));
    }
    if k == 0 || k > m {
        return Err(Error::invalid(format!("k = {k} outside 1..={m}")));
    }
    guard(m, k)?;
    let pair_sum = |s: &[usize]| -> f64 {
        let mut t = 0.0;
        for &a in s {
            for &b in s {
                if a != b {
                    t += dff[[a, b]];
                }
            }
        }
        t
    };
    let mut s: Vec<usize> = (0..k).collect();
    let mut best = (pair_sum(&s), s.clone());
    while next_combination(&mut s, m, 0) {
        let v = pair_sum(&s);
        if v < best.0 {
            best = (v, s.clone());
        }
    }
    Ok((best.1, best.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::euclidean_distances;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn points(xs: &[f64]) -> Instance {
        let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        Instance::shared(euclidean_distances(&pts, &pts).unwrap()).unwrap()
    }

    fn all_subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize == k {
                out.push((0..m).filter(|i| mask >> i & 1 == 1).collect());
            }
        }
        out.sort();
        out
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut s = vec![0, 1];
        let mut seen = vec![s.clone()];
        while next_combination(&mut s, 4, 0) {
            seen.push(s.clone());
        }
        assert_eq!(seen, all_subsets(4, 2));
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn two_point_bounds_are_tight() {
        let inst = points(&[0.0, 1.0]);
        let b = spectral_bounds(&inst, 2).unwrap();
        assert!((b.g_lower - 2.0).abs() < 1e-12);
        assert!((b.g_upper - 2.0).abs() < 1e-12);
        assert_eq!(objective::raw_pair_sum(&inst, &[0, 1]), 2.0);
        assert_eq!(b.g_term_bounds(3.0, Normalization::Sum), (3.0, 3.0));
        assert_eq!(b.g_term_bounds(3.0, Normalization::Mean), (3.0, 3.0));
    }

    #[test]
    fn singleton_flagged() {
        let b = spectral_bounds(&points(&[0.0, 1.0, 3.0]), 1).unwrap();
        assert!(b.singleton_caveat);
        assert!(b.g_lower >= 0.0);
        assert!(b.g_upper >= 0.0);
        assert!(spectral_bounds(&points(&[0.0]), 2).is_err());
    }

    #[test]
    fn upper_bound_and_service_bounds_hold_on_random_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random(), rng.random()]).collect();
        let inst = Instance::shared(euclidean_distances(&pts, &pts).unwrap()).unwrap();
        let b = spectral_bounds(&inst, 3).unwrap();
        assert_eq!(b.eigenvalues_d.len(), 6);
        let sums: Vec<f64> = all_subsets(6, 3)
            .iter()
            .map(|s| objective::raw_pair_sum(&inst, s))
            .collect();
        assert_eq!(sums.len(), 20);
        let max = sums.iter().copied().fold(0.0, f64::max);
        assert!(max <= b.g_upper * (1.0 + 1e-7));
        for s in all_subsets(6, 3) {
            let c = objective::cost(&inst, &s, 1.0, Normalization::Sum, AssignmentMode::Nearest)
                .unwrap();
            assert!(b.f_lower <= c.f_term + 1e-12 && c.f_term <= b.f_upper + 1e-12);
        }
    }

    #[test]
    fn line_oracle() {
        let r = brute_force(
            &points(&[0.0, 1.0, 2.0]),
            2,
            1.0,
            Normalization::Sum,
            AssignmentMode::Nearest,
            None,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(r.optimum_total, 2.0);
        assert_eq!(r.optimum.selected, vec![0, 1]);
        assert_eq!(r.enumerated, 3);
    }

    #[test]
    fn full_selection_oracle() {
        let r = brute_force(
            &points(&[0.0, 1.0, 5.0]),
            3,
            1.0,
            Normalization::Sum,
            AssignmentMode::Nearest,
            None,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(r.optimum.selected, vec![0, 1, 2]);
        assert_eq!(r.enumerated, 1);
    }

    #[test]
    fn huge_lambda_picks_closest_pair() {
        let inst = points(&[0.0, 3.0, 3.5, 7.0, 9.0]);
        let r = brute_force(
            &inst,
            2,
            1e6,
            Normalization::Sum,
            AssignmentMode::Nearest,
            None,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(r.optimum.selected, vec![1, 2]);
        assert_eq!(mpd_oracle(inst.dff(), 2).unwrap().0, vec![1, 2]);
    }

    #[test]
    fn mpd_on_constant_service_rows_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..7).map(|_| vec![rng.random(), rng.random()]).collect();
        let dff = euclidean_distances(&pts, &pts).unwrap();
        let inst = Instance::new(Array2::from_elem((5, 7), 2.0), dff).unwrap();
        for k in 2..5 {
            let (s, _) = mpd_oracle(inst.dff(), k).unwrap();
            let r = brute_force(
                &inst,
                k,
                1.0,
                Normalization::Sum,
                AssignmentMode::Nearest,
                None,
                Execution::Parallel,
            )
            .unwrap();
            assert_eq!(r.optimum.selected, s);
        }
    }

    #[test]
    fn mpd_examples() {
        assert_eq!(
            mpd_oracle(&array![[0.0, 1.0], [1.0, 0.0]], 2).unwrap(),
            (vec![0, 1], 2.0)
        );
        let inst = points(&[0.0, 1.0, 3.0]);
        assert_eq!(mpd_oracle(inst.dff(), 2).unwrap(), (vec![0, 1], 2.0));
        let eq = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { 1.0 });
        assert_eq!(mpd_oracle(&eq, 2).unwrap().0, vec![0, 1]);
        assert!(mpd_oracle(&array![[0.0, 1.0]], 1).is_err());
    }

    #[test]
    fn guard_trips() {
        let inst = points(&(0..40).map(f64::from).collect::<Vec<_>>());
        let err = brute_force(
            &inst,
            20,
            1.0,
            Normalization::Sum,
            AssignmentMode::Nearest,
            None,
            Execution::Sequential,
        )
        .unwrap_err();
        assert!(matches!(err, Error::GuardExceeded { .. }));
        assert!(matches!(
            mpd_oracle(inst.dff(), 20),
            Err(Error::GuardExceeded { .. })
        ));
    }

    #[test]
    fn quota_oracle_counts_feasible_subsets() {
        let inst = points(&[0.0, 0.2, 0.4, 1.0, 1.2])
            .with_facility_groups(["D", "D", "D", "R", "R"].map(String::from).to_vec())
            .unwrap();
        let q = BTreeMap::from([("D".to_string(), 2), ("R".to_string(), 1)]);
        let r = brute_force(
            &inst,
            3,
            1.0,
            Normalization::Sum,
            AssignmentMode::SameGroupNearest,
            Some(&q),
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(r.enumerated, 3 * 2);
        let g = inst.facility_groups().unwrap();
        assert_eq!(
            r.optimum.selected.iter().filter(|&&f| g[f] == "D").count(),
            2
        );
    }

    #[test]
    fn parallel_and_sequential_oracles_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec<f64>> = (0..11).map(|_| vec![rng.random(), rng.random()]).collect();
        let inst = Instance::shared(euclidean_distances(&pts, &pts).unwrap()).unwrap();
        let a = brute_force(
            &inst,
            4,
            0.7,
            Normalization::Mean,
            AssignmentMode::Nearest,
            None,
            Execution::Sequential,
        )
        .unwrap();
        let b = brute_force(
            &inst,
            4,
            0.7,
            Normalization::Mean,
            AssignmentMode::Nearest,
            None,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.enumerated as u128, binomial(11, 4));
    }
}
