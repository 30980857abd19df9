use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// One row of the condensed cluster tree. `child` is a point index when
/// `size == 1` and a cluster id (`≥ n`) otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hdbscan {
    /// Cluster index per point, −1 for noise. Clusters are numbered in the
    /// order of their condensed-tree ids.
    pub labels: Vec<i32>,
    pub core_distances: Vec<f64>,
    pub mst: Vec<MstEdge>,
    pub condensed: Vec<CondensedEdge>,
    /// Condensed-tree id of each extracted cluster.
    pub selected: Vec<usize>,
    /// Points of maximal lambda within the leaves of each cluster.
    pub exemplars: Vec<Vec<usize>>,
}

impl Hdbscan {
    pub fn num_clusters(&self) -> usize {
        self.selected.len()
    }

    pub fn mst_weight(&self) -> f64 {
        self.mst.iter().map(|e| e.weight).sum()
    }
}

/// Row-major `n × dim` points.
#[derive(Debug, Clone, Copy)]
pub struct Points<'a> {
    pub data: &'a [f64],
    pub dim: usize,
}

impl<'a> Points<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} values do not split into rows of {dim}", data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("clustering input has non-finite values".into()));
        }
        Ok(Self { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let mut s = 0.0;
        for (a, b) in self.row(i).iter().zip(self.row(j)) {
            let d = a - b;
            s += d * d;
        }
        s.sqrt()
    }
}

/// Distance to the `min_samples`-th nearest point, counting the point itself.
pub fn core_distances(points: Points<'_>, min_samples: usize) -> Vec<f64> {
    let n = points.len();
    let k = min_samples.clamp(1, n.max(1));
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n).map(|j| points.dist(i, j)).collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

#[inline]
pub fn mutual_reachability(points: Points<'_>, core: &[f64], i: usize, j: usize) -> f64 {
    core[i].max(core[j]).max(points.dist(i, j))
}

/// Prim's algorithm over the implicit mutual-reachability graph, grown from
/// point 0. Edges come out in insertion order.
pub fn mst_prim(points: Points<'_>, core: &[f64]) -> Vec<MstEdge> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut source = vec![1usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    for _ in 0..n - 1 {
        in_tree[current] = true;
        let mut new_weight = f64::MAX;
        let mut new_source = 0;
        let mut new_node = 0;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let w = mutual_reachability(points, core, current, j);
            if w < best[j] {
                best[j] = w;
                source[j] = current;
                if w < new_weight {
                    new_weight = w;
                    new_source = current;
                    new_node = j;
                }
            } else if best[j] < new_weight {
                new_weight = best[j];
                new_source = source[j];
                new_node = j;
            }
        }
        edges.push(MstEdge {
            a: new_source,
            b: new_node,
            weight: new_weight,
        });
        current = new_node;
    }
    edges
}

/// Single-linkage merge: nodes `< n` are points, node `n + i` is row `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

/// Merges in ascending edge weight (stable for equal weights).
pub fn single_linkage(n: usize, mst: &[MstEdge]) -> Vec<Merge> {
    let mut order: Vec<usize> = (0..mst.len()).collect();
    order.sort_by(|&a, &b| mst[a].weight.total_cmp(&mst[b].weight));
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    let mut next = n;
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        while parent[x] != root {
            let up = parent[x];
            parent[x] = root;
            x = up;
        }
        root
    }
    let mut out = Vec::with_capacity(mst.len());
    for i in order {
        let e = mst[i];
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        let s = size[ra] + size[rb];
        out.push(Merge {
            left: ra,
            right: rb,
            distance: e.weight,
            size: s,
        });
        parent[ra] = next;
        parent[rb] = next;
        size[next] = s;
        next += 1;
    }
    out
}

fn bfs_hierarchy(merges: &[Merge], n: usize, root: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut queue = vec![root];
    while !queue.is_empty() {
        out.extend_from_slice(&queue);
        let mut next = Vec::new();
        for &node in &queue {
            if node >= n {
                let m = merges[node - n];
                next.push(m.left);
                next.push(m.right);
            }
        }
        queue = next;
    }
    out
}

/// Collapses the single-linkage tree: splits where both sides have at least
/// `min_cluster_size` points create two new clusters; smaller sides fall out
/// of the current cluster as individual points.
pub fn condense(merges: &[Merge], min_cluster_size: usize) -> Vec<CondensedEdge> {
    let n = merges.len() + 1;
    if merges.is_empty() {
        return Vec::new();
    }
    let root = 2 * merges.len();
    let mut relabel = vec![0usize; root + 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut ignore = vec![false; root + 1];
    let mut out = Vec::new();
    let count = |node: usize| if node >= n { merges[node - n].size } else { 1 };

    for node in bfs_hierarchy(merges, n, root) {
        if ignore[node] || node < n {
            continue;
        }
        let m = merges[node - n];
        let lambda = if m.distance > 0.0 { 1.0 / m.distance } else { f64::INFINITY };
        let (lc, rc) = (count(m.left), count(m.right));
        let parent = relabel[node];
        let fall_out = |sub: usize, out: &mut Vec<CondensedEdge>, ignore: &mut [bool]| {
            for s in bfs_hierarchy(merges, n, sub) {
                if s < n {
                    out.push(CondensedEdge {
                        parent,
                        child: s,
                        lambda,
                        size: 1,
                    });
                }
                ignore[s] = true;
            }
        };
        if lc >= min_cluster_size && rc >= min_cluster_size {
            for (side, c) in [(m.left, lc), (m.right, rc)] {
                relabel[side] = next_label;
                next_label += 1;
                out.push(CondensedEdge {
                    parent,
                    child: relabel[side],
                    lambda,
                    size: c,
                });
            }
        } else if lc < min_cluster_size && rc < min_cluster_size {
            fall_out(m.left, &mut out, &mut ignore);
            fall_out(m.right, &mut out, &mut ignore);
        } else if lc < min_cluster_size {
            relabel[m.right] = parent;
            fall_out(m.left, &mut out, &mut ignore);
        } else {
            relabel[m.left] = parent;
            fall_out(m.right, &mut out, &mut ignore);
        }
    }
    out
}

/// Excess-of-mass stability per cluster id.
pub fn stability(condensed: &[CondensedEdge]) -> BTreeMap<usize, f64> {
    let Some(root) = condensed.iter().map(|e| e.parent).min() else {
        return BTreeMap::new();
    };
    let max_parent = condensed.iter().map(|e| e.parent).max().unwrap_or(root);
    let mut birth: BTreeMap<usize, f64> = BTreeMap::new();
    for e in condensed {
        birth.insert(e.child, e.lambda);
    }
    birth.insert(root, 0.0);
    let mut out: BTreeMap<usize, f64> = (root..=max_parent).map(|c| (c, 0.0)).collect();
    for e in condensed {
        let b = birth.get(&e.parent).copied().unwrap_or(f64::NAN);
        *out.entry(e.parent).or_default() += (e.lambda - b) * e.size as f64;
    }
    out
}

fn cluster_children(condensed: &[CondensedEdge]) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in condensed.iter().filter(|e| e.size > 1) {
        out.entry(e.parent).or_default().push(e.child);
    }
    out
}

fn descendants(children: &BTreeMap<usize, Vec<usize>>, node: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut queue = VecDeque::from([node]);
    while let Some(c) = queue.pop_front() {
        if let Some(ch) = children.get(&c) {
            for &x in ch {
                out.push(x);
                queue.push_back(x);
            }
        }
    }
    out
}

/// Excess-of-mass selection, never selecting the root.
pub fn select_clusters(condensed: &[CondensedEdge]) -> Vec<usize> {
    let mut stab = stability(condensed);
    let Some(&root) = stab.keys().next() else {
        return Vec::new();
    };
    let children = cluster_children(condensed);
    let mut is_cluster: BTreeMap<usize, bool> = stab.keys().filter(|&&c| c != root).map(|&c| (c, true)).collect();
    let nodes: Vec<usize> = is_cluster.keys().rev().copied().collect();
    for node in nodes {
        let sub: f64 = children.get(&node).map(|ch| ch.iter().map(|c| stab[c]).sum()).unwrap_or(0.0);
        if sub > stab[&node] {
            is_cluster.insert(node, false);
            stab.insert(node, sub);
        } else {
            for d in descendants(&children, node) {
                is_cluster.insert(d, false);
            }
        }
    }
    is_cluster.into_iter().filter(|&(_, s)| s).map(|(c, _)| c).collect()
}

fn leaves_of(children: &BTreeMap<usize, Vec<usize>>, node: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![node];
    while let Some(c) = stack.pop() {
        match children.get(&c) {
            Some(ch) if !ch.is_empty() => stack.extend(ch.iter().rev()),
            _ => out.push(c),
        }
    }
    out
}

/// Full pipeline: core distances, mutual-reachability MST, single linkage,
/// condensing and excess-of-mass extraction.
pub fn hdbscan_points(points: Points<'_>, min_cluster_size: usize, min_samples: usize) -> Result<Hdbscan> {
    if min_cluster_size < 2 || min_samples < 1 {
        return Err(Error::InvalidInput(format!(
            "min_cluster_size {min_cluster_size} must be ≥ 2 and min_samples {min_samples} ≥ 1"
        )));
    }
    let n = points.len();
    let core = core_distances(points, min_samples);
    if n < min_cluster_size {
        return Ok(Hdbscan {
            labels: vec![-1; n],
            core_distances: core,
            mst: Vec::new(),
            condensed: Vec::new(),
            selected: Vec::new(),
            exemplars: Vec::new(),
        });
    }
    let mst = mst_prim(points, &core);
    let merges = single_linkage(n, &mst);
    let condensed = condense(&merges, min_cluster_size);
    let selected = select_clusters(&condensed);

    let mut up = vec![usize::MAX; n + condensed.len() + 1];
    let mut point_lambda = vec![0.0; n];
    for e in &condensed {
        if e.child >= up.len() {
            up.resize(e.child + 1, usize::MAX);
        }
        up[e.child] = e.parent;
        if e.size == 1 {
            point_lambda[e.child] = e.lambda;
        }
    }
    let index: BTreeMap<usize, i32> = selected.iter().enumerate().map(|(k, &c)| (c, k as i32)).collect();
    let labels = (0..n)
        .map(|p| {
            let mut node = up[p];
            while node != usize::MAX {
                if let Some(&k) = index.get(&node) {
                    return k;
                }
                node = up.get(node).copied().unwrap_or(usize::MAX);
            }
            -1
        })
        .collect();

    let children = cluster_children(&condensed);
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in condensed.iter().filter(|e| e.size == 1) {
        members.entry(e.parent).or_default().push(e.child);
    }
    let exemplars = selected
        .iter()
        .map(|&c| {
            let mut ex = BTreeSet::new();
            for leaf in leaves_of(&children, c) {
                let pts = members.get(&leaf).map(Vec::as_slice).unwrap_or(&[]);
                let max = pts.iter().map(|&p| point_lambda[p]).fold(f64::NEG_INFINITY, f64::max);
                ex.extend(pts.iter().copied().filter(|&p| point_lambda[p] == max));
            }
            ex.into_iter().collect()
        })
        .collect();

    Ok(Hdbscan {
        labels,
        core_distances: core,
        mst,
        condensed,
        selected,
        exemplars,
    })
}
