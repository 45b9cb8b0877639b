//! Dense symmetric eigendecomposition (cyclic Jacobi) and truncated SVD
//! (block subspace iteration on `A^T A`).

use std::cmp::Ordering;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-12;
const SVD_MAX_ITERS: usize = 1000;
const SVD_ANGLE_TOL: f64 = 1e-10;
const SVD_OVERSAMPLE: usize = 4;

/// Eigenpairs of a symmetric matrix, ordered by descending absolute value
/// with ties broken by descending signed value. Column `i` of `eigenvectors`
/// belongs to `eigenvalues[i]`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub v: Array2<f64>,
}

/// Ordering used for eigenvalues everywhere in the crate: "absolutely
/// largest first", ties to the larger signed value.
pub fn abs_desc(a: f64, b: f64) -> Ordering {
    b.abs().total_cmp(&a.abs()).then(b.total_cmp(&a))
}

pub fn max_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn eigh(a: ArrayView2<f64>) -> Result<EigenDecomposition> {
    let (n, c) = a.dim();
    if n != c {
        return Err(Error::DimensionMismatch(format!(
            "eigh needs a square matrix, got {n} x {c}"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("eigh: non-finite entry"));
    }
    for i in 0..n {
        for j in 0..i {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "eigh: matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut m = a.to_owned();
    // work on the exactly symmetric part
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
    let mut q = Array2::<f64>::eye(n);
    let fro = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = JACOBI_REL_TOL * fro;

    let off = |m: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[[i, j]] * m[[i, j]];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    let mut residual = off(&m);
    while residual > tol {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                what: "Jacobi eigensolver",
                iterations: sweeps,
                residual,
            });
        }
        for p in 0..n {
            for r in (p + 1)..n {
                rotate(&mut m, &mut q, p, r);
            }
        }
        sweeps += 1;
        residual = off(&m);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| abs_desc(m[[i, i]], m[[j, j]]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| m[[i, i]]).collect();
    let eigenvectors = q.select(Axis(1), &order);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// One Jacobi rotation annihilating `m[p][r]`.
fn rotate(m: &mut Array2<f64>, q: &mut Array2<f64>, p: usize, r: usize) {
    let apr = m[[p, r]];
    if apr == 0.0 {
        return;
    }
    let app = m[[p, p]];
    let arr = m[[r, r]];
    let theta = (arr - app) / (2.0 * apr);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + theta.hypot(1.0))
    };
    let c = 1.0 / t.hypot(1.0);
    let s = t * c;
    let n = m.nrows();

    m[[p, p]] = app - t * apr;
    m[[r, r]] = arr + t * apr;
    m[[p, r]] = 0.0;
    m[[r, p]] = 0.0;
    for k in 0..n {
        if k == p || k == r {
            continue;
        }
        let akp = m[[k, p]];
        let akr = m[[k, r]];
        let new_p = c * akp - s * akr;
        let new_r = s * akp + c * akr;
        m[[k, p]] = new_p;
        m[[p, k]] = new_p;
        m[[k, r]] = new_r;
        m[[r, k]] = new_r;
    }
    for k in 0..n {
        let qkp = q[[k, p]];
        let qkr = q[[k, r]];
        q[[k, p]] = c * qkp - s * qkr;
        q[[k, r]] = s * qkp + c * qkr;
    }
}

/// Modified Gram-Schmidt in place. Columns that collapse numerically are
/// replaced by the first standard basis vector that is not already spanned.
fn orthonormalize(w: &mut Array2<f64>) {
    let (rows, cols) = w.dim();
    let mut fallback = 0;
    for j in 0..cols {
        let orig = w.column(j).dot(&w.column(j)).sqrt();
        project_out(w, j);
        let mut norm = w.column(j).dot(&w.column(j)).sqrt();
        if norm <= 1e-12 * orig.max(1.0) {
            while norm <= 0.5 && fallback < rows {
                w.column_mut(j).fill(0.0);
                w[[fallback, j]] = 1.0;
                fallback += 1;
                project_out(w, j);
                norm = w.column(j).dot(&w.column(j)).sqrt();
            }
        }
        w.column_mut(j).mapv_inplace(|v| v / norm);
    }
}

fn project_out(w: &mut Array2<f64>, j: usize) {
    // twice is enough
    for _ in 0..2 {
        for i in 0..j {
            let proj = w.column(i).dot(&w.column(j));
            let ci = w.column(i).to_owned();
            w.column_mut(j).scaled_add(-proj, &ci);
        }
    }
}

/// Largest subspace change `max |V_new - V_old V_old^T V_new|`.
fn subspace_change(old: ArrayView2<f64>, new: ArrayView2<f64>) -> f64 {
    let proj = old.dot(&old.t().dot(&new));
    max_abs((&new - &proj).view())
}

/// Top-`r` singular triplets of `a`.
pub fn truncated_svd(a: ArrayView2<f64>, r: usize) -> Result<TruncatedSvd> {
    let (n, m) = a.dim();
    if r == 0 || r > n.min(m) {
        return Err(Error::invalid(format!(
            "truncated_svd: r = {r} outside 1..={}",
            n.min(m)
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("truncated_svd: non-finite entry"));
    }
    let block = m.min(r + SVD_OVERSAMPLE);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5eed);
    let mut v = Array2::from_shape_fn((m, block), |_| rng.random_range(-1.0..1.0));
    orthonormalize(&mut v);

    let mut ritz_prev: Option<Array1<f64>> = None;
    let mut converged = false;
    let mut change = f64::INFINITY;
    for _ in 0..SVD_MAX_ITERS {
        let mut w = a.t().dot(&a.dot(&v));
        orthonormalize(&mut w);
        let (vr, ritz) = rayleigh_ritz(a, &w)?;
        change = subspace_change(v.slice(s![.., ..r]), vr.slice(s![.., ..r]));
        let stalled = ritz_prev.as_ref().is_some_and(|p| {
            (0..r).all(|i| (p[i] - ritz[i]).abs() <= 1e-15 * ritz[0].max(f64::MIN_POSITIVE))
        });
        v = vr;
        ritz_prev = Some(ritz);
        if change < SVD_ANGLE_TOL || stalled {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "truncated SVD subspace iteration",
            iterations: SVD_MAX_ITERS,
            residual: change,
        });
    }

    let v = v.slice(s![.., ..r]).to_owned();
    let av = a.dot(&v);
    let singular_values: Array1<f64> = av.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    let sigma_max = singular_values[0];
    let mut u = Array2::zeros((n, r));
    let mut degenerate = Vec::new();
    for j in 0..r {
        if singular_values[j] > 1e-12 * sigma_max.max(f64::MIN_POSITIVE) {
            let col = av.column(j).mapv(|x| x / singular_values[j]);
            u.column_mut(j).assign(&col);
        } else {
            degenerate.push(j);
        }
    }
    if !degenerate.is_empty() {
        for &j in &degenerate {
            u.column_mut(j).fill(0.0);
        }
        orthonormalize(&mut u);
    }
    Ok(TruncatedSvd {
        u,
        singular_values,
        v,
    })
}

/// Rotates the orthonormal basis `q` onto Ritz vectors of `A^T A`, sorted by
/// descending Ritz value.
fn rayleigh_ritz(a: ArrayView2<f64>, q: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let aq = a.dot(q);
    let h = aq.t().dot(&aq);
    let eig = eigh(h.view())?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });
    let y = eig.eigenvectors.select(Axis(1), &order);
    let ritz = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    Ok((q.dot(&y), ritz))
}

/// Share of `||A||_F^2` captured by the retained singular values.
pub fn frobenius_energy_fraction(svd: &TruncatedSvd, a: ArrayView2<f64>) -> Result<f64> {
    let total: f64 = a.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::invalid(
            "energy fraction of a zero matrix is undefined",
        ));
    }
    let kept: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    Ok((kept / total).clamp(0.0, 1.0))
}

/// Smallest `r` whose leading singular values reach `target` of the energy.
pub fn components_for_energy(a: ArrayView2<f64>, target: f64) -> Result<usize> {
    let full = truncated_svd(a, a.nrows().min(a.ncols()))?;
    let total: f64 = a.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::invalid(
            "energy fraction of a zero matrix is undefined",
        ));
    }
    let mut acc = 0.0;
    for (i, s) in full.singular_values.iter().enumerate() {
        acc += s * s;
        if acc / total >= target - 1e-12 {
            return Ok(i + 1);
        }
    }
    Ok(full.singular_values.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn orth_error(q: &Array2<f64>) -> f64 {
        let g = q.t().dot(q);
        max_abs((&g - &Array2::<f64>::eye(g.nrows())).view())
    }

    fn reconstruct(e: &EigenDecomposition) -> Array2<f64> {
        let lam = Array2::from_diag(&e.eigenvalues);
        e.eigenvectors.dot(&lam).dot(&e.eigenvectors.t())
    }

    fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        a = &a + &a.t();
        a
    }

    #[test]
    fn swap_matrix() {
        let e = eigh(array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap();
        assert_eq!(e.eigenvalues.to_vec(), vec![1.0, -1.0]);
    }

    #[test]
    fn identity() {
        let e = eigh(Array2::<f64>::eye(3).view()).unwrap();
        assert_eq!(e.eigenvalues.to_vec(), vec![1.0, 1.0, 1.0]);
        assert!(orth_error(&e.eigenvectors) < 1e-12);
    }

    #[test]
    fn absolute_order() {
        let e = eigh(array![[2.0, 0.0], [0.0, -3.0]].view()).unwrap();
        assert_eq!(e.eigenvalues.to_vec(), vec![-3.0, 2.0]);
        assert_eq!(e.eigenvectors.column(0).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(eigh(array![[0.0, 1.0], [2.0, 0.0]].view()).is_err());
        assert!(eigh(array![[f64::NAN]].view()).is_err());
        assert!(eigh(array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn empty_and_zero() {
        let e = eigh(Array2::<f64>::zeros((3, 3)).view()).unwrap();
        assert!(e.eigenvalues.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reconstruction_invariants() {
        for (n, seed) in [(5, 1), (17, 2), (40, 3)] {
            let a = random_symmetric(n, seed);
            let e = eigh(a.view()).unwrap();
            let scale = max_abs(a.view()).max(1.0);
            assert!(max_abs((&a - &reconstruct(&e)).view()) <= 1e-7 * scale);
            assert!(orth_error(&e.eigenvectors) <= 1e-7);
        }
    }

    #[test]
    fn recovers_planted_spectrum() {
        // Q from the eigenvectors of an unrelated random symmetric matrix
        let q = eigh(random_symmetric(6, 9).view()).unwrap().eigenvectors;
        let d = [5.0, -4.0, 2.5, 2.5, 0.0, -0.1];
        let a = q
            .dot(&Array2::from_diag(&Array1::from(d.to_vec())))
            .dot(&q.t());
        let mut got = eigh(a.view()).unwrap().eigenvalues.to_vec();
        let mut want = d.to_vec();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-7, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn svd_diagonal() {
        let a = array![[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        let svd = truncated_svd(a.view(), 2).unwrap();
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((svd.singular_values[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn svd_rank_one() {
        let u = array![1.0, 2.0, -2.0];
        let v = array![3.0, 0.0, 4.0, 0.0];
        let a = u
            .clone()
            .insert_axis(Axis(1))
            .dot(&v.clone().insert_axis(Axis(0)));
        let svd = truncated_svd(a.view(), 1).unwrap();
        assert!((svd.singular_values[0] - 15.0).abs() < 1e-10);
    }

    #[test]
    fn svd_full_energy_matches_frobenius() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Array2::from_shape_fn((8, 6), |_| rng.random_range(-1.0..1.0));
        let svd = truncated_svd(a.view(), 6).unwrap();
        let energy: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        let fro: f64 = a.iter().map(|v| v * v).sum();
        assert!((energy - fro).abs() <= 1e-6 * fro);
        assert!(orth_error(&svd.u) <= 1e-6);
        assert!(orth_error(&svd.v) <= 1e-6);
        assert!(svd
            .singular_values
            .windows(2)
            .into_iter()
            .all(|w| w[0] >= w[1]));
        assert!((frobenius_energy_fraction(&svd, a.view()).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn svd_top_r_energy_matches_eigh_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = Array2::from_shape_fn((30, 12), |_| rng.random_range(0.0..1.0));
        let gram = a.t().dot(&a);
        let mut ev = eigh(gram.view()).unwrap().eigenvalues.to_vec();
        ev.sort_by(|x, y| y.total_cmp(x));
        for r in [1, 3, 7] {
            let want: f64 = ev[..r].iter().sum();
            let svd = truncated_svd(a.view(), r).unwrap();
            let got: f64 = svd.singular_values.iter().map(|s| s * s).sum();
            assert!((got - want).abs() <= 1e-6 * want, "r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn svd_rank_deficient_still_orthonormal() {
        let a = array![[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let svd = truncated_svd(a.view(), 3).unwrap();
        assert!((svd.singular_values[0] - 1.0).abs() < 1e-12);
        assert!(svd.singular_values[1].abs() < 1e-12);
        assert!(orth_error(&svd.u) <= 1e-6);
        assert!(orth_error(&svd.v) <= 1e-6);
    }

    #[test]
    fn svd_rank_out_of_range() {
        let a = Array2::<f64>::eye(3);
        assert!(truncated_svd(a.view(), 0).is_err());
        assert!(truncated_svd(a.view(), 4).is_err());
    }

    #[test]
    fn energy_fraction_examples() {
        let a = array![[3.0, 0.0], [0.0, 4.0]];
        let svd = truncated_svd(a.view(), 1).unwrap();
        assert!((frobenius_energy_fraction(&svd, a.view()).unwrap() - 0.64).abs() < 1e-12);

        let eye = Array2::<f64>::eye(4);
        let svd = truncated_svd(eye.view(), 2).unwrap();
        assert!((frobenius_energy_fraction(&svd, eye.view()).unwrap() - 0.5).abs() < 1e-12);

        let zero = Array2::<f64>::zeros((2, 2));
        let svd = truncated_svd(zero.view(), 1).unwrap();
        assert!(frobenius_energy_fraction(&svd, zero.view()).is_err());

        assert_eq!(components_for_energy(a.view(), 0.5).unwrap(), 1);
        assert_eq!(components_for_energy(a.view(), 0.9).unwrap(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn svd_row_permutation_invariant(seed in 0u64..1000, rows in 3usize..10, cols in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0));
            let perm: Vec<usize> = (0..rows).rev().collect();
            let b = a.select(Axis(0), &perm);
            let r = rows.min(cols).min(3);
            let sa = truncated_svd(a.view(), r).unwrap();
            let sb = truncated_svd(b.view(), r).unwrap();
            for i in 0..r {
                prop_assert!((sa.singular_values[i] - sb.singular_values[i]).abs() < 1e-7);
            }
        }

        #[test]
        fn eigh_invariants(seed in 0u64..1000, n in 1usize..12) {
            let a = random_symmetric(n, seed);
            let e = eigh(a.view()).unwrap();
            prop_assert!(max_abs((&a - &reconstruct(&e)).view()) <= 1e-7 * max_abs(a.view()).max(1.0));
            prop_assert!(orth_error(&e.eigenvectors) <= 1e-7);
            let v = e.eigenvalues.to_vec();
            prop_assert!(v.windows(2).all(|w| abs_desc(w[0], w[1]) != Ordering::Greater));
        }
    }
}
