//! Hierarchical density-based clustering with stability-based flat
//! extraction.
//!
//! The implementation follows the standard pipeline: core distances →
//! mutual-reachability graph → minimum spanning tree (Prim, dense) →
//! single-linkage dendrogram → tree condensation by minimum cluster size →
//! excess-of-mass cluster selection. Everything is deterministic: ties in
//! the MST and in sorting are broken by point index, and final cluster ids
//! are renumbered by each cluster's smallest member index.

use crate::error::{Error, Result};
use crate::num::Real;

/// Euclidean distance between two equal-length vectors.
fn euclidean<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |acc, v| acc + v)
        .sqrt()
}

/// An internal node of the single-linkage dendrogram.
struct MergeNode<T> {
    left: usize,
    right: usize,
    dist: T,
    size: usize,
}

/// A cluster in the condensed tree.
struct CondensedCluster<T> {
    parent: Option<usize>,
    birth_lambda: T,
    children: Vec<usize>,
    /// Σ size·(λ_out − λ_birth) over everything that left this cluster.
    stability: T,
    /// Points that fell out of this cluster directly.
    points: Vec<usize>,
}

/// Clusters `points` (rows of a feature matrix) under Euclidean distance.
///
/// Returns one label per point, `-1` for noise. `min_samples` controls the
/// density estimate (core distance = distance to the `min_samples`-th
/// nearest neighbor, counting the point itself); pass `min_cluster_size`
/// for the conventional default.
///
/// Requires at least `2 * min_cluster_size` points — below that no split
/// into two clusters is even possible.
pub fn hdbscan<T: Real>(
    points: &[Vec<T>],
    min_cluster_size: usize,
    min_samples: usize,
) -> Result<Vec<i64>> {
    assert!(min_cluster_size >= 2, "min_cluster_size must be at least 2");
    assert!(min_samples >= 1, "min_samples must be at least 1");
    let n = points.len();
    if n < 2 * min_cluster_size {
        return Err(Error::InsufficientCorpus {
            need: 2 * min_cluster_size,
            got: n,
        });
    }

    // Core distance: the (min_samples)-th smallest entry of each distance
    // row, counting the zero to the point itself.
    let dist = |i: usize, j: usize| euclidean(&points[i], &points[j]);
    let k = min_samples.min(n);
    let core: Vec<T> = (0..n)
        .map(|i| {
            let mut row: Vec<T> = (0..n).map(|j| dist(i, j)).collect();
            row.sort_by(|a, b| a.partial_cmp(b).expect("finite distance"));
            row[k - 1]
        })
        .collect();
    let mreach = |i: usize, j: usize| dist(i, j).max(core[i]).max(core[j]);

    // Prim's MST over the dense mutual-reachability graph.
    let mut in_tree = vec![false; n];
    let mut best = vec![T::infinity(); n];
    let mut best_from = vec![0usize; n];
    let mut edges: Vec<(T, usize, usize)> = Vec::with_capacity(n - 1);
    in_tree[0] = true;
    for j in 1..n {
        best[j] = mreach(0, j);
    }
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_d = T::infinity();
        for j in 0..n {
            if !in_tree[j] && best[j] < next_d {
                next_d = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((next_d, best_from[next].min(next), best_from[next].max(next)));
        for j in 0..n {
            if !in_tree[j] {
                let d = mreach(next, j);
                if d < best[j] {
                    best[j] = d;
                    best_from[j] = next;
                }
            }
        }
    }
    edges.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distance")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    // Single-linkage dendrogram via union-find. Leaves are 0..n; internal
    // node n+i is created by the i-th merge.
    let mut root_of = vec![usize::MAX; 2 * n - 1]; // component root per node
    let mut node_of = vec![usize::MAX; 2 * n - 1]; // current top node per root
    let mut merges: Vec<MergeNode<T>> = Vec::with_capacity(n - 1);
    fn find(root_of: &mut [usize], mut x: usize) -> usize {
        while root_of[x] != x {
            root_of[x] = root_of[root_of[x]]; // path halving
            x = root_of[x];
        }
        x
    }
    for i in 0..n {
        root_of[i] = i;
        node_of[i] = i;
    }
    for (w, u, v) in edges {
        let ru = find(&mut root_of, u);
        let rv = find(&mut root_of, v);
        let (left, right) = (node_of[ru], node_of[rv]);
        let size = node_size(&merges, n, left) + node_size(&merges, n, right);
        merges.push(MergeNode { left, right, dist: w, size });
        let new_node = n + merges.len() - 1;
        root_of[new_node] = ru;
        root_of[rv] = ru;
        node_of[ru] = new_node;
    }

    // Condense the dendrogram: only splits where at least two sides reach
    // min_cluster_size survive as cluster boundaries. Runs of merges at the
    // same distance are one atomic multi-way merge — the binary tree's
    // ordering of tied merges is an artifact of tie-breaking, and walking
    // it directly would make the result depend on input order. Components
    // at each distance threshold are order-free; the flattened walk sees
    // exactly those.
    let lambda_of = |d: T| T::one() / d.max(T::min_positive_value());
    let mut clusters: Vec<CondensedCluster<T>> = vec![CondensedCluster {
        parent: None,
        birth_lambda: T::zero(),
        children: Vec::new(),
        stability: T::zero(),
        points: Vec::new(),
    }];
    let root_node = 2 * n - 2;
    let mut stack: Vec<(usize, usize)> = vec![(root_node, 0)]; // (dendrogram node, cluster)
    while let Some((node, c)) = stack.pop() {
        debug_assert!(node >= n, "leaves are never walked directly");
        let m = &merges[node - n];
        let lambda = lambda_of(m.dist);
        let children = effective_children(&merges, n, node);
        let n_big = children
            .iter()
            .filter(|&&ch| node_size(&merges, n, ch) >= min_cluster_size)
            .count();
        if n_big >= 2 {
            // true split: the cluster's extent ends here; every large side
            // becomes a new cluster, anything small falls out with the
            // parent
            clusters[c].stability =
                clusters[c].stability + T::of_usize(m.size) * (lambda - clusters[c].birth_lambda);
            for &child in &children {
                if node_size(&merges, n, child) >= min_cluster_size {
                    let id = clusters.len();
                    clusters.push(CondensedCluster {
                        parent: Some(c),
                        birth_lambda: lambda,
                        children: Vec::new(),
                        stability: T::zero(),
                        points: Vec::new(),
                    });
                    clusters[c].children.push(id);
                    stack.push((child, id)); // size ≥ min_cluster_size ≥ 2
                } else {
                    collect_leaves(&merges, n, child, &mut clusters[c].points);
                }
            }
        } else {
            // at most one side is large: the cluster continues through it
            // and everything else falls out here
            for &child in &children {
                let size = node_size(&merges, n, child);
                if size >= min_cluster_size {
                    stack.push((child, c));
                } else {
                    clusters[c].stability = clusters[c].stability
                        + T::of_usize(size) * (lambda - clusters[c].birth_lambda);
                    collect_leaves(&merges, n, child, &mut clusters[c].points);
                }
            }
        }
    }

    // Excess-of-mass selection, bottom-up (children have larger indices).
    let m = clusters.len();
    let mut selected = vec![false; m];
    let mut subtree_stability = vec![T::zero(); m];
    for c in (0..m).rev() {
        if clusters[c].children.is_empty() {
            selected[c] = c != 0;
            subtree_stability[c] = clusters[c].stability;
        } else {
            let child_sum: T = clusters[c]
                .children
                .iter()
                .map(|&ch| subtree_stability[ch])
                .sum();
            if c != 0 && clusters[c].stability >= child_sum {
                selected[c] = true;
                subtree_stability[c] = clusters[c].stability;
            } else {
                subtree_stability[c] = child_sum;
            }
        }
    }
    // a selected ancestor switches its whole subtree off
    let mut winner = vec![None::<usize>; m]; // nearest selected ancestor-or-self
    for c in 0..m {
        winner[c] = match clusters[c].parent {
            Some(p) if winner[p].is_some() => winner[p],
            _ if selected[c] => Some(c),
            _ => None,
        };
    }

    let mut labels = vec![-1i64; n];
    let mut final_ids: Vec<usize> = winner.iter().flatten().copied().collect();
    final_ids.sort_unstable();
    final_ids.dedup();
    // renumber by smallest member point index
    let mut member_min = vec![usize::MAX; m];
    for c in 0..m {
        if let (Some(w), Some(&p)) = (winner[c], clusters[c].points.iter().min()) {
            member_min[w] = member_min[w].min(p);
        }
    }
    final_ids.sort_by_key(|&c| member_min[c]);
    for (rank, &c) in final_ids.iter().enumerate() {
        for cand in 0..m {
            if winner[cand] == Some(c) {
                for &p in &clusters[cand].points {
                    labels[p] = rank as i64;
                }
            }
        }
    }
    Ok(labels)
}

/// Number of leaves under a dendrogram node.
fn node_size<T>(merges: &[MergeNode<T>], n: usize, node: usize) -> usize {
    if node < n {
        1
    } else {
        merges[node - n].size
    }
}

/// The components an internal node merges, with nested merges at the same
/// distance expanded: those all happen atomically at one threshold, so
/// their binary nesting order carries no information.
fn effective_children<T: Real>(merges: &[MergeNode<T>], n: usize, node: usize) -> Vec<usize> {
    let d = merges[node - n].dist;
    let mut out = Vec::new();
    let mut stack = vec![merges[node - n].left, merges[node - n].right];
    while let Some(child) = stack.pop() {
        if child >= n && merges[child - n].dist == d {
            stack.push(merges[child - n].left);
            stack.push(merges[child - n].right);
        } else {
            out.push(child);
        }
    }
    out
}

/// Appends every leaf under `node` to `out`.
fn collect_leaves<T>(merges: &[MergeNode<T>], n: usize, node: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            stack.push(merges[x - n].left);
            stack.push(merges[x - n].right);
        }
    }
}
