//! Strongly connected communication graphs with self-loops.
//!
//! Edges are directed `src -> dst` pairs meaning that agent `src` can send to
//! agent `dst`, so `src ∈ N_dst^in` and `dst ∈ N_src^out`. Every node is its
//! own in- and out-neighbor. Indices are 0-based in the API and 1-based in the
//! edge-list file format.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Attempts made by [`generate_nearest_neighbor`] before giving up on strong
/// connectivity.
pub const CONNECTIVITY_RETRIES: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    directed: bool,
    in_nb: Vec<Vec<usize>>,
    out_nb: Vec<Vec<usize>>,
}

impl Digraph {
    /// Builds a graph from `(src, dst)` edges and checks strong connectivity.
    ///
    /// When `directed` is false every edge is added in both directions.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>, directed: bool) -> Result<Self> {
        let g = Self::from_edges_unchecked(n, edges, directed)?;
        if !is_strongly_connected(&g) {
            return Err(Error::NotStronglyConnected);
        }
        Ok(g)
    }

    /// Same as [`Digraph::from_edges`] without the connectivity check. Only
    /// index bounds are validated.
    pub fn from_edges_unchecked(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        directed: bool,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut in_sets: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
        for (src, dst) in edges {
            if src >= n || dst >= n {
                return Err(Error::InvalidParameter(format!("edge ({src}, {dst}) out of range for n = {n}")));
            }
            in_sets[dst].insert(src);
            if !directed {
                in_sets[src].insert(dst);
            }
        }
        let mut out_nb = vec![Vec::new(); n];
        for (dst, set) in in_sets.iter().enumerate() {
            for &src in set {
                out_nb[src].push(dst);
            }
        }
        let in_nb = in_sets.into_iter().map(|s| s.into_iter().collect()).collect();
        Ok(Self { n, directed, in_nb, out_nb })
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Result<Self> {
        let edges = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
        Self::from_edges(n, edges, false)
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn directed_ring(n: usize) -> Result<Self> {
        Self::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)), true)
    }

    /// Undirected cycle on `n` nodes.
    pub fn ring(n: usize) -> Result<Self> {
        Self::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)), false)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// The flag the graph was built with. Use [`Digraph::is_symmetric`] for
    /// the structural property.
    #[inline]
    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// `N_i^in`, sorted, including `i`.
    #[inline]
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_nb[i]
    }

    /// `N_i^out`, sorted, including `i`.
    #[inline]
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_nb[i]
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.in_nb[dst].binary_search(&src).is_ok()
    }

    /// True when every edge has its reverse, i.e. `N_i^in = N_i^out` for all i.
    pub fn is_symmetric(&self) -> bool {
        self.in_nb == self.out_nb
    }

    /// Directed edges excluding self-loops.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.in_nb
            .iter()
            .enumerate()
            .flat_map(|(dst, ins)| ins.iter().filter(move |&&src| src != dst).map(move |&src| (src, dst)))
    }

    /// Number of directed edges excluding self-loops.
    pub fn edge_count(&self) -> usize {
        self.in_nb.iter().map(|s| s.len() - 1).sum()
    }

    /// Number of non-self neighbors in the undirected sense (used by the
    /// Laplacian weights).
    pub fn degree(&self, i: usize) -> usize {
        self.in_nb[i].len() - 1
    }

    /// Edge-list text: header `n <count> directed <0|1>`, then one `i j` line
    /// per edge meaning `j ∈ N_i^in` (agent `j` sends to agent `i`), 1-based.
    /// Undirected graphs list each link once with `i < j`. Self-loops are
    /// implicit.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n {} directed {}", self.n, u8::from(self.directed));
        for (dst, ins) in self.in_nb.iter().enumerate() {
            for &src in ins {
                if src == dst || (!self.directed && src < dst) {
                    continue;
                }
                let _ = writeln!(out, "{} {}", dst + 1, src + 1);
            }
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (n, directed) = match fields.as_slice() {
            ["n", n, "directed", d] => {
                let n: usize = n.parse().map_err(|_| Error::Parse(format!("bad node count {n:?}")))?;
                let directed = match *d {
                    "0" => false,
                    "1" => true,
                    other => return Err(Error::Parse(format!("bad directed flag {other:?}"))),
                };
                (n, directed)
            }
            _ => return Err(Error::Parse(format!("bad header {header:?}"))),
        };
        let mut edges = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let parse = |t: Option<&str>| -> Result<usize> {
                let t = t.ok_or_else(|| Error::Parse(format!("bad edge line {line:?}")))?;
                match t.parse::<usize>() {
                    Ok(v) if v >= 1 && v <= n => Ok(v - 1),
                    _ => Err(Error::Parse(format!("bad node index {t:?} in {line:?}"))),
                }
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Parse(format!("trailing tokens in {line:?}")));
            }
            edges.push((j, i));
        }
        Self::from_edges(n, edges, directed)
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }

    pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_edge_list(&std::fs::read_to_string(path)?)
    }
}

/// True iff every node reaches every other node along directed edges.
pub fn is_strongly_connected(g: &Digraph) -> bool {
    let reaches_all = |adj: &[Vec<usize>]| {
        let mut seen = vec![false; g.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == g.n
    };
    reaches_all(&g.out_nb) && reaches_all(&g.in_nb)
}

/// Parameters of the nearest-neighbor ring generator.
#[derive(Clone, Debug, PartialEq)]
pub struct NearestNeighbor {
    pub n: usize,
    /// Ring neighbors per node, taken in the order `+1, -1, +2, -2, ...`.
    pub ring_degree: usize,
    /// Fraction of the `n(n-1)` possible directed edges added at random.
    pub extra_link_fraction: f64,
    pub seed: u64,
    pub directed: bool,
}

/// Nearest-neighbor ring plus random long-range links.
///
/// Each node links to its `ring_degree` nearest ring neighbors. Undirected
/// links go both ways; directed links get a random orientation per
/// `(node, neighbor)` pair. Then `⌊fraction · n(n-1)⌋` directed edges (half as
/// many links when undirected) are added uniformly among absent pairs. The
/// random part is redrawn until the result is strongly connected.
pub fn generate_nearest_neighbor(params: &NearestNeighbor) -> Result<Digraph> {
    let NearestNeighbor { n, ring_degree, extra_link_fraction, seed, directed } = *params;
    if n < 2 {
        return Err(Error::InvalidParameter("nearest-neighbor graph needs n >= 2".into()));
    }
    if ring_degree == 0 || ring_degree >= n {
        return Err(Error::InvalidParameter(format!("ring_degree must be in 1..{n}, got {ring_degree}")));
    }
    if !(0.0..=1.0).contains(&extra_link_fraction) {
        return Err(Error::InvalidParameter(format!("extra_link_fraction {extra_link_fraction} outside [0, 1]")));
    }
    let offsets: Vec<isize> = (1..).flat_map(|d| [d, -d]).take(ring_degree).collect();
    let possible = n * (n - 1);
    let target = (extra_link_fraction * possible as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..CONNECTIVITY_RETRIES {
        let mut present = vec![false; n * n];
        let mut edges = Vec::new();
        let push = |edges: &mut Vec<(usize, usize)>, present: &mut [bool], s: usize, d: usize| {
            if s != d && !present[s * n + d] {
                present[s * n + d] = true;
                edges.push((s, d));
            }
        };
        for i in 0..n {
            for &off in &offsets {
                let j = (i as isize + off).rem_euclid(n as isize) as usize;
                if directed {
                    if rng.random_bool(0.5) {
                        push(&mut edges, &mut present, i, j);
                    } else {
                        push(&mut edges, &mut present, j, i);
                    }
                } else {
                    push(&mut edges, &mut present, i, j);
                    push(&mut edges, &mut present, j, i);
                }
            }
        }
        let candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|s| (0..n).map(move |d| (s, d)))
            .filter(|&(s, d)| s != d && !present[s * n + d] && (directed || s < d))
            .collect();
        let wanted = if directed { target } else { target / 2 };
        let picks = sample(&mut rng, candidates.len(), wanted.min(candidates.len()));
        for idx in picks.into_iter() {
            let (s, d) = candidates[idx];
            edges.push((s, d));
        }
        let g = Digraph::from_edges_unchecked(n, edges, directed)?;
        if is_strongly_connected(&g) {
            return Ok(g);
        }
    }
    Err(Error::ConnectivityRetriesExhausted { attempts: CONNECTIVITY_RETRIES })
}
