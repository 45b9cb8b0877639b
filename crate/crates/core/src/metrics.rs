//! Distance matrix builders: Euclidean, graph hop counts, spectral embedding,
//! weighted Jaccard over mention counts, latent SVD representations, and
//! mean rescaling for mixing matrices built in different ways.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::par::{self, Execution};

/// Undirected, unweighted simple graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph; self-loops are rejected, duplicate edges collapse.
    pub fn from_edges(
        nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut adj = vec![Vec::new(); nodes];
        for (u, v) in edges {
            if u >= nodes || v >= nodes {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) out of range for {nodes} nodes"
                )));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop at node {u}")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Graph { adj })
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    /// Hop counts from `source`; `None` where unreachable.
    pub fn bfs(&self, source: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.adj.len()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes are labelled");
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.adj.is_empty() || self.bfs(0).iter().all(Option::is_some)
    }
}

/// Policy for unreachable (source, target) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unreachable {
    #[default]
    Error,
    /// Replace with twice the largest finite distance in the matrix.
    Substitute,
}

pub fn euclidean_distances(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Array2<f64>> {
    let dim = a.first().or(b.first()).map_or(0, Vec::len);
    if let Some(bad) = a.iter().chain(b).find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "point of dimension {} among points of dimension {dim}",
            bad.len()
        )));
    }
    Ok(Array2::from_shape_fn((a.len(), b.len()), |(i, j)| {
        a[i].iter()
            .zip(&b[j])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }))
}

/// Same as [`euclidean_distances`] with points given as matrix rows.
pub fn euclidean_rows(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    let to_vecs = |m: ArrayView2<f64>| m.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
    euclidean_distances(&to_vecs(a), &to_vecs(b))
}

/// `sources x targets` hop-count matrix, one BFS per source.
pub fn shortest_path_distances(
    g: &Graph,
    sources: &[usize],
    targets: &[usize],
    unreachable: Unreachable,
    exec: Execution,
) -> Result<Array2<f64>> {
    let n = g.node_count();
    if let Some(bad) = sources.iter().chain(targets).find(|&&v| v >= n) {
        return Err(Error::invalid(format!(
            "node {bad} out of range for {n} nodes"
        )));
    }
    let rows: Vec<Vec<Option<u32>>> = par::map_indexed(exec, sources.len(), |i| {
        let dist = g.bfs(sources[i]);
        targets.iter().map(|&t| dist[t]).collect()
    });
    let mut max_finite = 0u32;
    for (i, row) in rows.iter().enumerate() {
        for (j, d) in row.iter().enumerate() {
            match d {
                Some(d) => max_finite = max_finite.max(*d),
                None if unreachable == Unreachable::Error => {
                    return Err(Error::invalid(format!(
                        "node {} unreachable from node {}",
                        targets[j], sources[i]
                    )))
                }
                None => {}
            }
        }
    }
    // all-zero finite part (e.g. only self pairs): substitute as if max were 1
    let substitute = 2.0 * f64::from(max_finite.max(1));
    Ok(Array2::from_shape_fn(
        (sources.len(), targets.len()),
        |(i, j)| rows[i][j].map_or(substitute, f64::from),
    ))
}

/// Laplacian eigenmap: node `v` becomes row `v` of the eigenvectors of
/// `I - D^{-1/2} A D^{-1/2}` for the `gamma` smallest nonzero eigenvalues.
/// Each column's largest-magnitude entry is made positive.
pub fn spectral_embedding(g: &Graph, gamma: usize) -> Result<Vec<Vec<f64>>> {
    let n = g.node_count();
    if gamma == 0 || gamma >= n {
        return Err(Error::invalid(format!("gamma = {gamma} outside 1..{n}")));
    }
    if let Some(v) = (0..n).find(|&v| g.degree(v) == 0) {
        return Err(Error::invalid(format!("node {v} is isolated")));
    }
    if !g.is_connected() {
        return Err(Error::invalid("spectral embedding needs a connected graph"));
    }
    let inv_sqrt_deg: Vec<f64> = (0..n).map(|v| 1.0 / (g.degree(v) as f64).sqrt()).collect();
    let mut lap = Array2::<f64>::eye(n);
    for u in 0..n {
        for &v in g.neighbors(u) {
            lap[[u, v]] = -inv_sqrt_deg[u] * inv_sqrt_deg[v];
        }
    }
    let eig = linalg::eigh(lap.view())?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .total_cmp(&eig.eigenvalues[j])
            .then(i.cmp(&j))
    });
    // order[0] is the trivial eigenvalue 0 of a connected graph
    let cols: Vec<usize> = order[1..=gamma].to_vec();
    let mut emb = eig.eigenvectors.select(Axis(1), &cols);
    for mut col in emb.columns_mut() {
        // first entry of (near-)maximal magnitude becomes positive; the slack
        // keeps the choice stable under rounding when magnitudes tie
        let peak = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let pivot = col.iter().position(|v| v.abs() >= peak - 1e-9).unwrap_or(0);
        if col[pivot] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    Ok(emb.rows().into_iter().map(|r| r.to_vec()).collect())
}

/// Scales `d` so the mean over all entries (diagonal included) is `target_mean`.
pub fn rescale_to_mean(d: &Array2<f64>, target_mean: f64) -> Result<Array2<f64>> {
    if !(target_mean > 0.0 && target_mean.is_finite()) {
        return Err(Error::invalid(format!(
            "target mean must be positive, got {target_mean}"
        )));
    }
    let mean = matrix_mean(d);
    if mean == 0.0 || !mean.is_finite() {
        return Err(Error::invalid("cannot rescale an all-zero matrix"));
    }
    let c = target_mean / mean;
    Ok(d.mapv(|v| v * c))
}

pub fn matrix_mean(d: &Array2<f64>) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    d.sum() / d.len() as f64
}

/// Sparse `(facility, client) -> count` table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MentionCounts {
    n_facilities: usize,
    n_clients: usize,
    counts: BTreeMap<(usize, usize), u64>,
    facility_labels: Vec<String>,
    client_labels: Vec<String>,
}

impl MentionCounts {
    pub fn new(n_facilities: usize, n_clients: usize) -> Self {
        MentionCounts {
            n_facilities,
            n_clients,
            counts: BTreeMap::new(),
            facility_labels: (0..n_facilities).map(|i| i.to_string()).collect(),
            client_labels: (0..n_clients).map(|i| i.to_string()).collect(),
        }
    }

    /// Adds `count` mentions of `facility` by `client`.
    pub fn add(&mut self, facility: usize, client: usize, count: u64) -> Result<()> {
        if facility >= self.n_facilities || client >= self.n_clients {
            return Err(Error::invalid(format!(
                "mention ({facility}, {client}) out of range"
            )));
        }
        if count > 0 {
            *self.counts.entry((facility, client)).or_default() += count;
        }
        Ok(())
    }

    pub fn get(&self, facility: usize, client: usize) -> u64 {
        self.counts.get(&(facility, client)).copied().unwrap_or(0)
    }

    pub fn n_facilities(&self) -> usize {
        self.n_facilities
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    pub fn facility_labels(&self) -> &[String] {
        &self.facility_labels
    }

    pub fn client_labels(&self) -> &[String] {
        &self.client_labels
    }

    /// Total mentions per facility.
    pub fn facility_totals(&self) -> Vec<u64> {
        let mut t = vec![0; self.n_facilities];
        for (&(f, _), &c) in &self.counts {
            t[f] += c;
        }
        t
    }

    /// `facilities x clients` dense count matrix.
    pub fn dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n_facilities, self.n_clients));
        for (&(f, c), &n) in &self.counts {
            a[[f, c]] = n as f64;
        }
        a
    }

    /// Reads `client_id,facility_id,count` with a header row. Labels are
    /// indexed in order of first appearance.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::parse(path, e))?;
        let mut fac: HashMap<String, usize> = HashMap::new();
        let mut cli: HashMap<String, usize> = HashMap::new();
        let mut mc = MentionCounts::default();
        let mut rows = Vec::new();
        for (r, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, e))?;
            if rec.len() != 3 {
                return Err(Error::parse(path, format!("row {r}: expected 3 fields")));
            }
            let count: u64 = rec[2]
                .parse()
                .map_err(|_| Error::parse(path, format!("row {r}: bad count {:?}", &rec[2])))?;
            let c = *cli.entry(rec[0].to_string()).or_insert_with(|| {
                mc.client_labels.push(rec[0].to_string());
                mc.client_labels.len() - 1
            });
            let f = *fac.entry(rec[1].to_string()).or_insert_with(|| {
                mc.facility_labels.push(rec[1].to_string());
                mc.facility_labels.len() - 1
            });
            rows.push((f, c, count));
        }
        mc.n_facilities = mc.facility_labels.len();
        mc.n_clients = mc.client_labels.len();
        for (f, c, n) in rows {
            mc.add(f, c, n)?;
        }
        Ok(mc)
    }

    /// Per-facility sparse rows `(client, count)`, sorted by client.
    fn rows(&self) -> Vec<Vec<(usize, u64)>> {
        let mut rows = vec![Vec::new(); self.n_facilities];
        for (&(f, c), &n) in &self.counts {
            rows[f].push((c, n));
        }
        rows
    }
}

fn ln0(n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (n as f64).ln()
    }
}

/// Weighted Jaccard distance between facilities, computed per ordered pair:
///
/// ```text
/// W      = sum_{c in S_f} ln n_cf + sum_{c in S_g \ S_f} ln n_cg
/// d(f,g) = 1 - (sum_{c in S_f & S_g} ln n_cf) / W
/// ```
///
/// with `ln 0 = 0` and `d = 1` when `W = 0`. The result is not symmetric;
/// [`crate::Instance::new`] symmetrizes it.
pub fn weighted_jaccard_distances(mc: &MentionCounts, exec: Execution) -> Array2<f64> {
    let rows = mc.rows();
    let m = mc.n_facilities;
    let data: Vec<Vec<f64>> = par::map_indexed(exec, m, |f| {
        let sf = &rows[f];
        let own: f64 = sf.iter().map(|&(_, n)| ln0(n)).sum();
        (0..m)
            .map(|g| {
                if f == g {
                    return 0.0;
                }
                let sg = &rows[g];
                let (mut i, mut j) = (0, 0);
                let mut shared = 0.0;
                let mut g_only = 0.0;
                while j < sg.len() {
                    if i < sf.len() && sf[i].0 < sg[j].0 {
                        i += 1;
                    } else if i < sf.len() && sf[i].0 == sg[j].0 {
                        shared += ln0(sf[i].1);
                        i += 1;
                        j += 1;
                    } else {
                        g_only += ln0(sg[j].1);
                        j += 1;
                    }
                }
                let w = own + g_only;
                if w == 0.0 {
                    1.0
                } else {
                    1.0 - shared / w
                }
            })
            .collect()
    });
    Array2::from_shape_vec((m, m), data.into_iter().flatten().collect()).expect("square")
}

/// `clients x facilities` matrix with entries `1 / (n_cf + 1)`.
pub fn mention_client_distances(mc: &MentionCounts) -> Array2<f64> {
    Array2::from_shape_fn((mc.n_clients, mc.n_facilities), |(c, f)| {
        1.0 / (mc.get(f, c) as f64 + 1.0)
    })
}

/// Latent-space distances: facility `i` is row `i` of `U`, client `j` is row
/// `j` of `V` (unscaled by the singular values) of the rank-`r` SVD of the
/// facility x client count matrix.
///
/// Returns `(facility x facility, client x facility)`.
pub fn latent_distances(mc: &MentionCounts, r: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    let a = mc.dense();
    let svd = linalg::truncated_svd(a.view(), r)?;
    let dff = euclidean_rows(svd.u.view(), svd.u.view())?;
    let dfc = euclidean_rows(svd.v.view(), svd.u.view())?;
    Ok((dff, dfc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path(n: usize) -> Graph {
        Graph::from_edges(n, (1..n).map(|i| (i - 1, i))).unwrap()
    }

    #[test]
    fn euclid_examples() {
        assert_eq!(
            euclidean_distances(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]).unwrap(),
            array![[5.0]]
        );
        assert_eq!(
            euclidean_distances(&[vec![1.0]], &[vec![-2.0]]).unwrap(),
            array![[3.0]]
        );
        let pts = vec![vec![0.3, 1.7], vec![-2.0, 0.1], vec![5.0, 5.0]];
        let d = euclidean_distances(&pts, &pts).unwrap();
        assert!((0..3).all(|i| d[[i, i]] == 0.0));
        assert!(euclidean_distances(&[vec![1.0]], &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(Graph::from_edges(2, [(0, 2)]).is_err());
        assert!(Graph::from_edges(2, [(1, 1)]).is_err());
        assert_eq!(
            Graph::from_edges(2, [(0, 1), (1, 0)]).unwrap().edge_count(),
            1
        );
    }

    #[test]
    fn hop_counts() {
        let g = path(3);
        let d = shortest_path_distances(&g, &[0], &[2], Unreachable::Error, Execution::Sequential)
            .unwrap();
        assert_eq!(d, array![[2.0]]);
        let d = shortest_path_distances(&g, &[1], &[1], Unreachable::Error, Execution::Sequential)
            .unwrap();
        assert_eq!(d, array![[0.0]]);
    }

    #[test]
    fn unreachable_policies() {
        // component {0,1,2,3} is a path (max hop 3), component {4,5}
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (4, 5)]).unwrap();
        let all: Vec<usize> = (0..6).collect();
        let err = shortest_path_distances(&g, &all, &all, Unreachable::Error, Execution::Parallel)
            .unwrap_err();
        assert!(err.to_string().contains("unreachable"));
        let d =
            shortest_path_distances(&g, &all, &all, Unreachable::Substitute, Execution::Parallel)
                .unwrap();
        // independent oracle: Floyd-Warshall on the adjacency matrix
        let inf = f64::INFINITY;
        let mut fw = Array2::from_elem((6, 6), inf);
        for i in 0..6 {
            fw[[i, i]] = 0.0;
            for &j in g.neighbors(i) {
                fw[[i, j]] = 1.0;
            }
        }
        for k in 0..6 {
            for i in 0..6 {
                for j in 0..6 {
                    fw[[i, j]] = fw[[i, j]].min(fw[[i, k]] + fw[[k, j]]);
                }
            }
        }
        let max_finite = fw
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |a, &b| a.max(b));
        assert_eq!(max_finite, 3.0);
        for i in 0..6 {
            for j in 0..6 {
                let want = if fw[[i, j]].is_finite() {
                    fw[[i, j]]
                } else {
                    6.0
                };
                assert_eq!(d[[i, j]], want);
            }
        }
    }

    #[test]
    fn bfs_parallel_matches_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let edges: Vec<(usize, usize)> = (0..300)
            .map(|_| (rng.random_range(0..80), rng.random_range(0..80)))
            .filter(|(u, v)| u != v)
            .collect();
        let g = Graph::from_edges(80, edges).unwrap();
        let nodes: Vec<usize> = (0..80).collect();
        let a = shortest_path_distances(
            &g,
            &nodes,
            &nodes,
            Unreachable::Substitute,
            Execution::Sequential,
        )
        .unwrap();
        let b = shortest_path_distances(
            &g,
            &nodes,
            &nodes,
            Unreachable::Substitute,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn embedding_complete_graph_is_regular_simplex() {
        // K4: nontrivial eigenspace is 3-dimensional, so the full embedding
        // (gamma = 3) places all nodes equidistant
        let g = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let emb = spectral_embedding(&g, 3).unwrap();
        let d = euclidean_distances(&emb, &emb).unwrap();
        let d01 = d[[0, 1]];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!((d[[i, j]] - d01).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn embedding_excludes_constant_vector() {
        let g = Graph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]).unwrap();
        let emb = spectral_embedding(&g, 2).unwrap();
        // every embedding column is D^{1/2}-orthogonal to the trivial one
        for col in 0..2 {
            let s: f64 = emb
                .iter()
                .enumerate()
                .map(|(v, row)| row[col] * (g.degree(v) as f64).sqrt())
                .sum();
            assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn embedding_path_is_monotone() {
        // P3 normalized Laplacian: eigenvector for eigenvalue 1 is
        // (1, 0, -1)/sqrt(2); sign fixed so the first entry is positive
        let emb = spectral_embedding(&path(3), 1).unwrap();
        let x: Vec<f64> = emb.iter().map(|r| r[0]).collect();
        assert!((x[0] - 0.5f64.sqrt()).abs() < 1e-9, "{x:?}");
        assert!(x[1].abs() < 1e-9);
        assert!((x[2] + 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn embedding_errors() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert!(spectral_embedding(&g, 1).is_err());
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        assert!(spectral_embedding(&g, 1).is_err());
        assert!(spectral_embedding(&path(3), 3).is_err());
        assert!(spectral_embedding(&path(3), 0).is_err());
    }

    #[test]
    fn rescale_examples() {
        let d = array![[0.0, 2.0], [2.0, 0.0]];
        assert_eq!(rescale_to_mean(&d, 1.0).unwrap(), d);
        assert_eq!(
            rescale_to_mean(&array![[0.0, 4.0], [4.0, 0.0]], 1.0).unwrap(),
            d
        );
        assert!(rescale_to_mean(&Array2::zeros((2, 2)), 1.0).is_err());
        assert!(rescale_to_mean(&d, 0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn rescale_hits_target_and_keeps_order(seed in 0u64..500, t in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = Array2::from_shape_fn((5, 7), |_| rng.random_range(0.0..10.0));
            let r = rescale_to_mean(&d, t).unwrap();
            proptest::prop_assert!((matrix_mean(&r) - t).abs() <= 1e-12 * t);
            let a: Vec<f64> = d.iter().copied().collect();
            let b: Vec<f64> = r.iter().copied().collect();
            for i in 0..a.len() {
                for j in 0..a.len() {
                    proptest::prop_assert_eq!(a[i] < a[j], b[i] < b[j]);
                }
            }
        }

        #[test]
        fn wjaccard_in_unit_interval(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mc = MentionCounts::new(6, 9);
            for _ in 0..25 {
                mc.add(rng.random_range(0..6), rng.random_range(0..9), rng.random_range(0..6)).unwrap();
            }
            let d = weighted_jaccard_distances(&mc, Execution::Sequential);
            proptest::prop_assert!(d.iter().all(|&v| (0.0..=1.0).contains(&v)));
            proptest::prop_assert_eq!(d, weighted_jaccard_distances(&mc, Execution::Parallel));
        }
    }

    #[test]
    fn wjaccard_worked_examples() {
        let mut mc = MentionCounts::new(3, 3);
        mc.add(0, 0, 10).unwrap();
        mc.add(1, 0, 10).unwrap();
        mc.add(2, 1, 4).unwrap();
        let d = weighted_jaccard_distances(&mc, Execution::Sequential);
        // shared single client, equal counts: 1 - ln10/ln10
        assert_eq!(d[[0, 1]], 0.0);
        // disjoint supports
        assert_eq!(d[[0, 2]], 1.0);
        assert_eq!(d[[2, 0]], 1.0);
        assert_eq!(d[[0, 0]], 0.0);
    }

    #[test]
    fn wjaccard_asymmetric_and_self_distance() {
        // f: c0 x4, c1 x2 ; g: c0 x8
        let mut mc = MentionCounts::new(2, 2);
        mc.add(0, 0, 4).unwrap();
        mc.add(0, 1, 2).unwrap();
        mc.add(1, 0, 8).unwrap();
        let d = weighted_jaccard_distances(&mc, Execution::Sequential);
        let (l2, l4, l8) = (2f64.ln(), 4f64.ln(), 8f64.ln());
        // d(f,g) = 1 - ln4 / (ln4 + ln2); d(g,f) = 1 - ln8 / (ln8 + ln2)
        assert!((d[[0, 1]] - (1.0 - l4 / (l4 + l2))).abs() < 1e-15);
        assert!((d[[1, 0]] - (1.0 - l8 / (l8 + l2))).abs() < 1e-15);
        // the diagonal formula gives numerator == W, hence zero
        let w_self: f64 = l4 + l2;
        assert_eq!(1.0 - w_self / w_self, 0.0);
    }

    #[test]
    fn wjaccard_zero_weight_is_one() {
        let mut mc = MentionCounts::new(2, 1);
        mc.add(0, 0, 1).unwrap();
        mc.add(1, 0, 1).unwrap();
        let d = weighted_jaccard_distances(&mc, Execution::Sequential);
        assert_eq!(d[[0, 1]], 1.0);
    }

    #[test]
    fn mention_client_examples() {
        let mut mc = MentionCounts::new(3, 1);
        mc.add(1, 0, 9).unwrap();
        mc.add(2, 0, 1).unwrap();
        let d = mention_client_distances(&mc);
        assert_eq!(d.dim(), (1, 3));
        assert_eq!(d[[0, 0]], 1.0);
        assert!((d[[0, 1]] - 0.1).abs() < 1e-15);
        assert_eq!(d[[0, 2]], 0.5);
    }

    #[test]
    fn latent_rank_one_magnitudes() {
        // facilities are multiples 1, 2, 4 of the pattern (1, 1, 0)
        let mut mc = MentionCounts::new(3, 3);
        for (f, mult) in [(0, 1), (1, 2), (2, 4)] {
            mc.add(f, 0, mult).unwrap();
            mc.add(f, 1, mult).unwrap();
        }
        let (dff, dfc) = latent_distances(&mc, 1).unwrap();
        // U = (1, 2, 4)/sqrt(21) up to sign, so |u_i - u_j| = |m_i - m_j|/sqrt(21)
        let s = 21f64.sqrt();
        assert!((dff[[0, 1]] - 1.0 / s).abs() < 1e-9);
        assert!((dff[[0, 2]] - 3.0 / s).abs() < 1e-9);
        assert!((dff[[1, 2]] - 2.0 / s).abs() < 1e-9);
        assert_eq!(dfc.dim(), (3, 3));
        assert!((0..3).all(|i| dff[[i, i]] == 0.0));
    }

    #[test]
    fn latent_diagonal_counts_orthogonal() {
        let mut mc = MentionCounts::new(4, 4);
        for i in 0..4 {
            mc.add(i, i, (i + 1) as u64).unwrap();
        }
        let svd = linalg::truncated_svd(mc.dense().view(), 4).unwrap();
        let g = svd.u.dot(&svd.u.t());
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-9);
            }
        }
        let (dff, _) = latent_distances(&mc, 4).unwrap();
        assert!((0..4).all(|i| dff[[i, i]] == 0.0));
        // orthonormal rows are all sqrt(2) apart
        assert!((dff[[0, 3]] - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn mention_csv() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "client_id,facility_id,count\nu1,nyt.com,3\nu2,fox.com,2\nu1,fox.com,1"
        )
        .unwrap();
        let mc = MentionCounts::read_csv(f.path()).unwrap();
        assert_eq!(mc.facility_labels(), ["nyt.com", "fox.com"]);
        assert_eq!(mc.client_labels(), ["u1", "u2"]);
        assert_eq!(mc.get(1, 0), 1);
        assert_eq!(mc.facility_totals(), vec![3, 3]);
    }
}
