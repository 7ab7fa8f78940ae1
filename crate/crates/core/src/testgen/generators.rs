//! Primitive generators. All of them take the stream explicitly so callers
//! control reproducibility.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::rng::SplitMix64;
use super::TestgenError;

pub type Edge = (u32, u32);

pub fn gen_sequence(
    length: usize,
    lo: i64,
    hi: i64,
    rng: &mut SplitMix64,
) -> Result<Vec<i64>, TestgenError> {
    if lo > hi {
        return Err(TestgenError::Param(format!("empty value range [{lo}, {hi}]")));
    }
    Ok((0..length).map(|_| rng.range_i64(lo, hi)).collect())
}

pub fn gen_string(
    length: usize,
    alphabet: &[char],
    rng: &mut SplitMix64,
) -> Result<String, TestgenError> {
    if alphabet.is_empty() {
        return Err(TestgenError::Param("empty alphabet".into()));
    }
    Ok((0..length).map(|_| alphabet[rng.index(alphabet.len())]).collect())
}

/// Uniform labelled tree on nodes `1..=n`, decoded from a random Prüfer
/// sequence. Edge order and orientation are shuffled.
pub fn gen_tree(n: usize, rng: &mut SplitMix64) -> Result<Vec<Edge>, TestgenError> {
    if n == 0 {
        return Err(TestgenError::Param("tree needs at least 1 node".into()));
    }
    check_label_range(n)?;
    let mut edges = prufer_tree(n, rng);
    orient_and_shuffle(&mut edges, rng);
    Ok(edges)
}

fn check_label_range(n: usize) -> Result<(), TestgenError> {
    if n > u32::MAX as usize {
        return Err(TestgenError::Param(format!("node count {n} exceeds 2^32-1")));
    }
    Ok(())
}

fn prufer_tree(n: usize, rng: &mut SplitMix64) -> Vec<Edge> {
    match n {
        1 => return Vec::new(),
        2 => return vec![(1, 2)],
        _ => {}
    }
    let code: Vec<usize> = (0..n - 2).map(|_| 1 + rng.index(n)).collect();
    let mut degree = vec![1usize; n + 1];
    for &v in &code {
        degree[v] += 1;
    }
    let mut ptr = 1;
    while degree[ptr] != 1 {
        ptr += 1;
    }
    let mut leaf = ptr;
    let mut edges = Vec::with_capacity(n - 1);
    for &v in &code {
        edges.push((leaf as u32, v as u32));
        degree[v] -= 1;
        if degree[v] == 1 && v < ptr {
            leaf = v;
        } else {
            ptr += 1;
            while degree[ptr] != 1 {
                ptr += 1;
            }
            leaf = ptr;
        }
    }
    edges.push((leaf as u32, n as u32));
    edges
}

fn orient_and_shuffle(edges: &mut [Edge], rng: &mut SplitMix64) {
    for e in edges.iter_mut() {
        if rng.coin() {
            *e = (e.1, e.0);
        }
    }
    rng.shuffle(edges);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphFlags {
    /// Underlying undirected graph is connected (weak connectivity when
    /// `directed`).
    pub connected: bool,
    pub self_loops: bool,
    pub multi_edges: bool,
    pub directed: bool,
}

/// Largest `m` allowed for simple-edge settings; `None` when unbounded.
fn max_edges(n: u64, flags: GraphFlags) -> Option<u64> {
    if flags.multi_edges {
        return if n == 1 && !flags.self_loops { Some(0) } else { None };
    }
    let pairs = if flags.directed { n.saturating_mul(n - 1) } else { n.saturating_mul(n - 1) / 2 };
    Some(pairs + if flags.self_loops { n } else { 0 })
}

pub fn gen_graph(
    n: usize,
    m: usize,
    flags: GraphFlags,
    rng: &mut SplitMix64,
) -> Result<Vec<Edge>, TestgenError> {
    if n == 0 {
        return Err(TestgenError::Param("graph needs at least 1 node".into()));
    }
    check_label_range(n)?;
    if flags.connected && m < n - 1 {
        return Err(TestgenError::Param(format!(
            "connected graph on {n} nodes needs m >= n-1 = {}, got {m}",
            n - 1
        )));
    }
    if let Some(cap) = max_edges(n as u64, flags) {
        if m as u64 > cap {
            return Err(TestgenError::Param(format!(
                "m = {m} exceeds the maximum of {cap} edges for n = {n} with {flags:?}"
            )));
        }
    }

    let key = |u: u32, v: u32| if flags.directed || u <= v { (u, v) } else { (v, u) };
    let mut edges: Vec<Edge> = Vec::with_capacity(m);
    let mut seen: HashSet<Edge> = HashSet::new();
    if flags.connected {
        for mut e in prufer_tree(n, rng) {
            if rng.coin() {
                e = (e.1, e.0);
            }
            seen.insert(key(e.0, e.1));
            edges.push(e);
        }
    }

    let remaining = m - edges.len();
    let dense = !flags.multi_edges
        && max_edges(n as u64, flags)
            .is_some_and(|cap| (remaining as u64) * 2 > cap.saturating_sub(edges.len() as u64));
    if dense {
        let mut pool = Vec::new();
        for u in 1..=n as u32 {
            for v in 1..=n as u32 {
                if (u == v && !flags.self_loops) || (!flags.directed && v < u) {
                    continue;
                }
                if !seen.contains(&(u, v)) {
                    pool.push((u, v));
                }
            }
        }
        // Partial Fisher-Yates: the first `remaining` slots become a uniform sample.
        for i in 0..remaining {
            let j = i + rng.index(pool.len() - i);
            pool.swap(i, j);
        }
        for &(u, v) in &pool[..remaining] {
            edges.push(if !flags.directed && rng.coin() { (v, u) } else { (u, v) });
        }
    } else {
        while edges.len() < m {
            let u = 1 + rng.index(n) as u32;
            let v = 1 + rng.index(n) as u32;
            if u == v && !flags.self_loops {
                continue;
            }
            if !flags.multi_edges && !seen.insert(key(u, v)) {
                continue;
            }
            edges.push((u, v));
        }
    }
    rng.shuffle(&mut edges);
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Dsu(Vec<usize>);

    impl Dsu {
        fn find(&mut self, x: usize) -> usize {
            if self.0[x] != x {
                let root = self.find(self.0[x]);
                self.0[x] = root;
            }
            self.0[x]
        }
        fn union(&mut self, a: usize, b: usize) -> bool {
            let (ra, rb) = (self.find(a), self.find(b));
            self.0[ra] = rb;
            ra != rb
        }
    }

    fn is_tree(n: usize, edges: &[Edge]) -> bool {
        let mut dsu = Dsu((0..=n).collect());
        edges.len() == n - 1
            && edges.iter().all(|&(u, v)| {
                (1..=n).contains(&(u as usize))
                    && (1..=n).contains(&(v as usize))
                    && dsu.union(u as usize, v as usize)
            })
    }

    fn weakly_connected(n: usize, edges: &[Edge]) -> bool {
        let mut dsu = Dsu((0..=n).collect());
        for &(u, v) in edges {
            dsu.union(u as usize, v as usize);
        }
        let root = dsu.find(1);
        (1..=n).all(|x| dsu.find(x) == root)
    }

    #[test]
    fn sequences() {
        let mut rng = SplitMix64::new(1);
        assert!(gen_sequence(0, 1, 10, &mut rng).unwrap().is_empty());
        assert_eq!(gen_sequence(5, 3, 3, &mut rng).unwrap(), vec![3; 5]);
        assert!(gen_sequence(3, 4, 3, &mut rng).is_err());
        let a = gen_sequence(100_000, 1, 1_000_000_000, &mut SplitMix64::new(42)).unwrap();
        let b = gen_sequence(100_000, 1, 1_000_000_000, &mut SplitMix64::new(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn strings() {
        let mut rng = SplitMix64::new(1);
        assert_eq!(gen_string(0, &['a'], &mut rng).unwrap(), "");
        assert_eq!(gen_string(4, &['a'], &mut rng).unwrap(), "aaaa");
        assert!(gen_string(4, &[], &mut rng).is_err());
        let az: Vec<char> = ('a'..='z').collect();
        let a = gen_string(1_000_000, &az, &mut SplitMix64::new(5)).unwrap();
        let b = gen_string(1_000_000, &az, &mut SplitMix64::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_trees() {
        let mut rng = SplitMix64::new(3);
        assert!(gen_tree(0, &mut rng).is_err());
        assert!(gen_tree(1, &mut rng).unwrap().is_empty());
        let two = gen_tree(2, &mut rng).unwrap();
        assert!(two == vec![(1, 2)] || two == vec![(2, 1)]);
    }

    #[test]
    fn large_tree_is_valid() {
        let edges = gen_tree(10_000, &mut SplitMix64::new(11)).unwrap();
        assert!(is_tree(10_000, &edges));
    }

    #[test]
    fn prufer_covers_all_labelled_trees_on_four_nodes() {
        // Cayley: 4^2 = 16 labelled trees.
        let mut rng = SplitMix64::new(0);
        let mut shapes = std::collections::BTreeSet::new();
        for _ in 0..2_000 {
            let mut e: Vec<Edge> =
                prufer_tree(4, &mut rng).into_iter().map(|(u, v)| (u.min(v), u.max(v))).collect();
            e.sort();
            shapes.insert(e);
        }
        assert_eq!(shapes.len(), 16);
    }

    #[test]
    fn forced_graphs() {
        let connected = GraphFlags { connected: true, ..Default::default() };
        let mut tri = gen_graph(3, 3, connected, &mut SplitMix64::new(1)).unwrap();
        for e in tri.iter_mut() {
            *e = (e.0.min(e.1), e.0.max(e.1));
        }
        tri.sort();
        assert_eq!(tri, vec![(1, 2), (1, 3), (2, 3)]);
        let tree = gen_graph(5, 4, connected, &mut SplitMix64::new(1)).unwrap();
        assert!(is_tree(5, &tree));
    }

    #[test]
    fn infeasible_graphs_name_the_bound() {
        let simple = GraphFlags::default();
        let err = gen_graph(3, 4, simple, &mut SplitMix64::new(1)).unwrap_err().to_string();
        assert!(err.contains("maximum of 3"), "{err}");
        let connected = GraphFlags { connected: true, ..Default::default() };
        let err = gen_graph(5, 3, connected, &mut SplitMix64::new(1)).unwrap_err().to_string();
        assert!(err.contains("m >= n-1"), "{err}");
        assert!(gen_graph(0, 0, simple, &mut SplitMix64::new(1)).is_err());
    }

    #[test]
    fn simple_graph_has_no_duplicates_or_loops() {
        let edges = gen_graph(200, 1000, GraphFlags::default(), &mut SplitMix64::new(8)).unwrap();
        assert_eq!(edges.len(), 1000);
        for (i, a) in edges.iter().enumerate() {
            assert_ne!(a.0, a.1);
            for b in &edges[i + 1..] {
                assert!(!(a == b || (a.0 == b.1 && a.1 == b.0)), "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn complete_graph_via_dense_path() {
        let flags = GraphFlags { directed: true, self_loops: true, ..Default::default() };
        let edges = gen_graph(6, 36, flags, &mut SplitMix64::new(2)).unwrap();
        let set: HashSet<_> = edges.iter().copied().collect();
        assert_eq!(set.len(), 36);
    }

    proptest! {
        #[test]
        fn graphs_satisfy_flags(
            n in 1usize..12,
            extra in 0usize..40,
            connected in any::<bool>(),
            self_loops in any::<bool>(),
            multi_edges in any::<bool>(),
            directed in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let flags = GraphFlags { connected, self_loops, multi_edges, directed };
            let lo = if connected { n - 1 } else { 0 };
            let hi = max_edges(n as u64, flags).map_or(lo + extra, |cap| cap as usize);
            prop_assume!(lo <= hi);
            let m = lo + extra % (hi - lo + 1);
            let edges = gen_graph(n, m, flags, &mut SplitMix64::new(seed)).unwrap();
            prop_assert_eq!(edges.len(), m);
            let mut keys = HashSet::new();
            for &(u, v) in &edges {
                prop_assert!(u >= 1 && v >= 1 && u as usize <= n && v as usize <= n);
                if !self_loops { prop_assert_ne!(u, v); }
                let k = if directed { (u, v) } else { (u.min(v), u.max(v)) };
                if !multi_edges { prop_assert!(keys.insert(k)); }
            }
            if connected { prop_assert!(weakly_connected(n, &edges)); }
            let again = gen_graph(n, m, flags, &mut SplitMix64::new(seed)).unwrap();
            prop_assert_eq!(edges, again);
        }

        #[test]
        fn trees_are_trees(n in 1usize..300, seed in any::<u64>()) {
            let edges = gen_tree(n, &mut SplitMix64::new(seed)).unwrap();
            prop_assert!(is_tree(n, &edges));
        }
    }
}
