//! Directed acyclic graphs stored in topological order.
//!
//! Edge `j -> i` is stored as `A[i][j]`, so row `i` of the adjacency lists the
//! parents of `i`. Storage indices are always a topological order, which
//! makes `A` strictly lower-triangular. `order[s]` remembers which original
//! node label sits at storage index `s`.

use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    adj: SparseMatrix,
    order: Vec<usize>,
}

impl Dag {
    /// Builds a DAG whose labels already are a topological order. Every edge
    /// must satisfy `src < dst`.
    pub fn from_lower_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("a DAG needs at least one node"));
        }
        let mut trip = Vec::new();
        for (src, dst, w) in edges {
            if src >= n || dst >= n {
                return Err(Error::param(format!("edge {src} -> {dst} out of range for n = {n}")));
            }
            if src >= dst {
                return Err(Error::param(format!(
                    "edge {src} -> {dst} is not in topological order"
                )));
            }
            if !w.is_finite() {
                return Err(Error::param(format!("edge {src} -> {dst} has weight {w}")));
            }
            trip.push((dst, src, w));
        }
        Ok(Self {
            adj: SparseMatrix::from_triplets(n, trip),
            order: (0..n).collect(),
        })
    }

    pub fn edgeless(n: usize) -> Result<Self> {
        Self::from_lower_edges(n, std::iter::empty())
    }

    /// Chain `0 -> 1 -> ... -> n-1` with the given weight on every edge.
    pub fn chain(n: usize, weight: f64) -> Result<Self> {
        Self::from_lower_edges(n, (1..n).map(|i| (i - 1, i, weight)))
    }

    pub fn n(&self) -> usize {
        self.adj.n()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.nnz()
    }

    /// Strictly lower-triangular adjacency in storage order.
    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adj
    }

    pub fn adjacency_dense(&self) -> Array2<f64> {
        self.adj.to_dense()
    }

    /// Storage index -> original label.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Original label -> storage index.
    pub fn storage_positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.n()];
        for (s, &label) in self.order.iter().enumerate() {
            pos[label] = s;
        }
        pos
    }

    /// Edges `(src, dst, weight)` in storage indices.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj.triplets().map(|(i, j, w)| (j, i, w))
    }

    /// Parents of storage node `i` with edge weights.
    pub fn parents(&self, i: usize) -> (&[usize], &[f64]) {
        self.adj.row(i)
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|i| self.adj.row(i).0.len()).collect()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n()];
        for (src, _, _) in self.edges() {
            d[src] += 1;
        }
        d
    }

    /// Adjacency indexed by original labels: `L[order[i]][order[j]] = A[i][j]`.
    pub fn labeled_adjacency(&self) -> Array2<f64> {
        let n = self.n();
        let mut out = Array2::zeros((n, n));
        for (i, j, w) in self.adj.triplets() {
            out[(self.order[i], self.order[j])] = w;
        }
        out
    }

    /// Serializes as `n <N>` followed by one `src dst weight` line per edge,
    /// using original labels.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n {}\n", self.n());
        let mut edges: Vec<_> = self
            .edges()
            .map(|(src, dst, w)| (self.order[src], self.order[dst], w))
            .collect();
        edges.sort_by_key(|&(a, b, _)| (b, a));
        for (src, dst, w) in edges {
            let _ = writeln!(s, "{src} {dst} {w:?}");
        }
        s
    }

    /// Parses the edge-list format and re-validates acyclicity.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing `n <N>` header".into(),
        })?;
        let n = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["n", v] => v.parse::<usize>().map_err(|e| Error::Parse {
                line: hl,
                msg: e.to_string(),
            })?,
            _ => {
                return Err(Error::Parse {
                    line: hl,
                    msg: format!("expected `n <N>`, got `{header}`"),
                })
            }
        };
        let mut edges = Vec::new();
        for (ln, line) in lines {
            let parts: Vec<_> = line.split_whitespace().collect();
            let bad = |msg: String| Error::Parse { line: ln, msg };
            if parts.len() != 3 {
                return Err(bad(format!("expected `src dst weight`, got `{line}`")));
            }
            let src: usize = parts[0].parse().map_err(|e| bad(format!("{e}")))?;
            let dst: usize = parts[1].parse().map_err(|e| bad(format!("{e}")))?;
            let w: f64 = parts[2].parse().map_err(|e| bad(format!("{e}")))?;
            edges.push((src, dst, w));
        }
        validate_edges(n, &edges)
    }
}

/// How edge weights of sampled graphs are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightLaw {
    Unit,
    /// Magnitude uniform in `[low, high)` with an independent random sign.
    SignedUniform { low: f64, high: f64 },
}

impl Default for WeightLaw {
    fn default() -> Self {
        WeightLaw::SignedUniform { low: 0.2, high: 0.5 }
    }
}

impl std::fmt::Display for WeightLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightLaw::Unit => write!(f, "unit"),
            WeightLaw::SignedUniform { low, high } => write!(f, "signed-uniform:{low}:{high}"),
        }
    }
}

impl FromStr for WeightLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<_> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["unit"] => Ok(WeightLaw::Unit),
            ["signed-uniform"] => Ok(WeightLaw::default()),
            ["signed-uniform", lo, hi] => {
                let low: f64 = lo.parse().map_err(|_| Error::param(format!("bad weight law `{s}`")))?;
                let high: f64 = hi.parse().map_err(|_| Error::param(format!("bad weight law `{s}`")))?;
                if !(0.0..high).contains(&low) || !high.is_finite() {
                    return Err(Error::param(format!("weight law needs 0 <= low < high, got `{s}`")));
                }
                Ok(WeightLaw::SignedUniform { low, high })
            }
            _ => Err(Error::param(format!("unknown weight law `{s}`"))),
        }
    }
}

/// Erdős–Rényi DAG: every pair `j < i` carries the edge `j -> i`
/// independently with probability `p`.
pub fn sample_er_dag(n: usize, p: f64, law: WeightLaw, seed: u64) -> Result<Dag> {
    if n == 0 {
        return Err(Error::param("a DAG needs at least one node"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("edge probability must lie in [0, 1], got {p}")));
    }
    let mut rng = rng_from(seed);
    let mut edges = Vec::new();
    for i in 1..n {
        for j in 0..i {
            if rng.random::<f64>() < p {
                let w = match law {
                    WeightLaw::Unit => 1.0,
                    WeightLaw::SignedUniform { low, high } => {
                        let mag = rng.random_range(low..high);
                        if rng.random::<bool>() {
                            mag
                        } else {
                            -mag
                        }
                    }
                };
                edges.push((j, i, w));
            }
        }
    }
    Dag::from_lower_edges(n, edges)
}

/// Validates an arbitrary weighted adjacency (`A[i][j] != 0` iff `j -> i`)
/// and re-sorts it into topological storage order.
pub fn validate_dag(adj: &Array2<f64>) -> Result<Dag> {
    let n = adj.nrows();
    if n != adj.ncols() {
        return Err(Error::shape(format!("adjacency is {}x{}", adj.nrows(), adj.ncols())));
    }
    let edges: Vec<_> = adj
        .indexed_iter()
        .filter(|(_, &w)| w != 0.0)
        .map(|((i, j), &w)| (j, i, w))
        .collect();
    validate_edges(n, &edges)
}

/// Kahn's algorithm over labeled edges `(src, dst, w)`; ties go to the
/// smallest label.
fn validate_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Dag> {
    if n == 0 {
        return Err(Error::param("a DAG needs at least one node"));
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for &(src, dst, w) in edges {
        if src >= n || dst >= n {
            return Err(Error::param(format!("edge {src} -> {dst} out of range for n = {n}")));
        }
        if src == dst {
            return Err(Error::param(format!("self-loop at node {src}")));
        }
        if !w.is_finite() {
            return Err(Error::param(format!("edge {src} -> {dst} has weight {w}")));
        }
        if w == 0.0 {
            continue;
        }
        children[src].push(dst);
        parents[dst].push(src);
        indeg[dst] += 1;
    }

    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }

    if order.len() < n {
        // Every leftover node still has a leftover parent; walking parents
        // must revisit a node, and the last step taken is a cycle edge.
        let mut seen = vec![false; n];
        let mut cur = (0..n).find(|&v| indeg[v] > 0).unwrap();
        loop {
            seen[cur] = true;
            let par = *parents[cur].iter().find(|&&p| indeg[p] > 0).unwrap();
            if seen[par] {
                return Err(Error::Cycle { src: par, dst: cur });
            }
            cur = par;
        }
    }

    let mut pos = vec![0; n];
    for (s, &label) in order.iter().enumerate() {
        pos[label] = s;
    }
    let trip = edges
        .iter()
        .filter(|e| e.2 != 0.0)
        .map(|&(src, dst, w)| (pos[dst], pos[src], w));
    Ok(Dag {
        adj: SparseMatrix::from_triplets(n, trip),
        order,
    })
}

/// A bijection on `{0, ..., n-1}`; node `i` is relabeled `perm[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePermutation(Vec<usize>);

impl NodePermutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut hit = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut hit[p], true) {
                return Err(Error::param("permutation is not a bijection"));
            }
        }
        Ok(Self(perm))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn random(n: usize, seed: u64) -> Self {
        let mut v: Vec<usize> = (0..n).collect();
        v.shuffle(&mut rng_from(seed));
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        Self(inv)
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(other.0.iter().map(|&j| self.0[j]).collect())
    }
}

/// Relabels the graph (label `u` becomes `perm(u)`) and re-sorts it.
pub fn permute(dag: &Dag, perm: &NodePermutation) -> Result<Dag> {
    if perm.len() != dag.n() {
        return Err(Error::param(format!(
            "permutation has {} entries for a {}-node graph",
            perm.len(),
            dag.n()
        )));
    }
    let edges: Vec<_> = dag
        .edges()
        .map(|(src, dst, w)| (perm.apply(dag.order[src]), perm.apply(dag.order[dst]), w))
        .collect();
    validate_edges(dag.n(), &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn full_probability_gives_complete_dag() {
        let d = sample_er_dag(3, 1.0, WeightLaw::Unit, 0).unwrap();
        let e: Vec<_> = d.edges().collect();
        assert_eq!(e, vec![(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]);
    }

    #[test]
    fn zero_probability_gives_edgeless_dag() {
        for seed in 0..5 {
            let d = sample_er_dag(5, 0.0, WeightLaw::default(), seed).unwrap();
            assert_eq!(d.edge_count(), 0);
        }
    }

    #[test]
    fn sampling_rejects_bad_probability() {
        assert!(matches!(sample_er_dag(4, 1.5, WeightLaw::Unit, 0), Err(Error::Param(_))));
        assert!(matches!(sample_er_dag(4, -0.1, WeightLaw::Unit, 0), Err(Error::Param(_))));
        assert!(sample_er_dag(0, 0.5, WeightLaw::Unit, 0).is_err());
    }

    #[test]
    fn single_node_is_valid() {
        let d = sample_er_dag(1, 0.7, WeightLaw::Unit, 3).unwrap();
        assert_eq!(d.n(), 1);
        assert_eq!(d.edge_count(), 0);
    }

    #[test]
    fn sampled_weights_follow_law() {
        let d = sample_er_dag(40, 0.5, WeightLaw::default(), 11).unwrap();
        let mut neg = 0;
        for (_, _, w) in d.edges() {
            assert!((0.2..0.5).contains(&w.abs()), "{w}");
            neg += (w < 0.0) as usize;
        }
        assert!(neg > 0 && neg < d.edge_count());
    }

    #[test]
    fn same_seed_same_graph() {
        let a = sample_er_dag(50, 0.2, WeightLaw::default(), 9).unwrap();
        let b = sample_er_dag(50, 0.2, WeightLaw::default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn upper_triangular_input_is_reversed() {
        let a = array![[0.0, 1.0, 2.0], [0.0, 0.0, 3.0], [0.0, 0.0, 0.0]];
        let d = validate_dag(&a).unwrap();
        assert_eq!(d.order(), &[2, 1, 0]);
        assert_eq!(d.labeled_adjacency(), a);
        assert!(d.adjacency().is_strictly_lower());
        assert_eq!(d.adjacency().get(1, 0), 3.0);
        assert_eq!(d.adjacency().get(2, 0), 2.0);
        assert_eq!(d.adjacency().get(2, 1), 1.0);
    }

    #[test]
    fn two_cycle_is_rejected() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        match validate_dag(&a) {
            Err(Error::Cycle { src, dst }) => assert!(a[(dst, src)] != 0.0),
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn cycle_error_names_a_cycle_edge() {
        // 0 -> 1 -> 2 -> 3 -> 1, plus 0 -> 4
        let mut a = Array2::zeros((5, 5));
        for (s, d) in [(0, 1), (1, 2), (2, 3), (3, 1), (0, 4)] {
            a[(d, s)] = 1.0;
        }
        match validate_dag(&a) {
            Err(Error::Cycle { src, dst }) => {
                assert!([(1, 2), (2, 3), (3, 1)].contains(&(src, dst)), "{src}->{dst}");
            }
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn nonzero_diagonal_is_rejected() {
        let a = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(validate_dag(&a), Err(Error::Param(_))));
    }

    #[test]
    fn scrambled_chain_recovers_sorting_permutation() {
        // chain 2 -> 0 -> 1
        let mut a = Array2::zeros((3, 3));
        a[(0, 2)] = 1.0;
        a[(1, 0)] = 1.0;
        let d = validate_dag(&a).unwrap();
        assert_eq!(d.order(), &[2, 0, 1]);
        let e: Vec<_> = d.edges().collect();
        assert_eq!(e, vec![(0, 1, 1.0), (1, 2, 1.0)]);
    }

    #[test]
    fn tie_breaking_is_by_smallest_label() {
        let a = Array2::zeros((4, 4));
        assert_eq!(validate_dag(&a).unwrap().order(), &[0, 1, 2, 3]);
    }

    #[test]
    fn identity_permutation_keeps_graph() {
        let d = sample_er_dag(12, 0.3, WeightLaw::default(), 1).unwrap();
        assert_eq!(permute(&d, &NodePermutation::identity(12)).unwrap(), d);
    }

    #[test]
    fn swapping_chain_ends_reverses_labels() {
        let d = Dag::chain(3, 1.0).unwrap();
        let p = NodePermutation::new(vec![2, 1, 0]).unwrap();
        let q = permute(&d, &p).unwrap();
        assert_eq!(q.order(), &[2, 1, 0]);
        let e: Vec<_> = q.edges().collect();
        assert_eq!(e, vec![(0, 1, 1.0), (1, 2, 1.0)]);
        let l = q.labeled_adjacency();
        assert_eq!(l[(1, 2)], 1.0);
        assert_eq!(l[(0, 1)], 1.0);
    }

    #[test]
    fn permutation_preserves_degree_sequences() {
        let d = sample_er_dag(10, 0.4, WeightLaw::default(), 5).unwrap();
        let p = NodePermutation::random(10, 17);
        let q = permute(&d, &p).unwrap();
        let sorted = |mut v: Vec<usize>| {
            v.sort();
            v
        };
        assert_eq!(sorted(d.in_degrees()), sorted(q.in_degrees()));
        assert_eq!(sorted(d.out_degrees()), sorted(q.out_degrees()));
        assert_eq!(q.edge_count(), d.edge_count());
    }

    #[test]
    fn non_bijection_is_rejected() {
        assert!(NodePermutation::new(vec![0, 0, 1]).is_err());
        assert!(NodePermutation::new(vec![0, 3, 1]).is_err());
        let d = Dag::chain(3, 1.0).unwrap();
        assert!(permute(&d, &NodePermutation::identity(4)).is_err());
    }

    #[test]
    fn permutation_inverse_composes_to_identity() {
        let p = NodePermutation::random(30, 4);
        assert_eq!(p.compose(&p.inverse()), NodePermutation::identity(30));
        assert_eq!(p.inverse().compose(&p), NodePermutation::identity(30));
    }

    #[test]
    fn edge_list_round_trip() {
        let d = sample_er_dag(25, 0.3, WeightLaw::default(), 2).unwrap();
        let text = d.to_edge_list();
        assert!(text.starts_with("n 25\n"));
        assert_eq!(Dag::from_edge_list(&text).unwrap(), d);
    }

    #[test]
    fn edge_list_loader_rejects_cycles_and_garbage() {
        assert!(matches!(
            Dag::from_edge_list("n 2\n0 1 1.0\n1 0 1.0\n"),
            Err(Error::Cycle { .. })
        ));
        assert!(matches!(Dag::from_edge_list("0 1 1.0\n"), Err(Error::Parse { .. })));
        assert!(matches!(Dag::from_edge_list("n 2\n0 1\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn weight_law_parsing() {
        assert_eq!("unit".parse::<WeightLaw>().unwrap(), WeightLaw::Unit);
        let w: WeightLaw = WeightLaw::default().to_string().parse().unwrap();
        assert_eq!(w, WeightLaw::default());
        assert!("signed-uniform:0.5:0.2".parse::<WeightLaw>().is_err());
    }
}
