//! Ward clustering of site triplets by triangle geometry.

use crate::error::{Error, Result};
use crate::maxstable::SpatialDesign;
use serde::Serialize;

/// Default largest design for which the dense triplet dissimilarity
/// matrix is built.
pub const DEFAULT_MAX_SITES: usize = 25;

/// Side lengths are rounded to this grid before clustering, so designs that
/// differ by a rigid motion produce bit-identical dissimilarities.
const SIDE_GRID: f64 = 1e-9;

/// `min_π Σ_i |a_i - b_π(i)|` over the six permutations of `b`.
pub fn triangle_distance(a: [f64; 3], b: [f64; 3]) -> Result<f64> {
    if a.iter()
        .chain(b.iter())
        .any(|&s| !(s > 0.0) || !s.is_finite())
    {
        return Err(Error::Domain(format!(
            "triangle sides must be positive, got {a:?} and {b:?}"
        )));
    }
    Ok(triangle_distance_unchecked(&a, &b))
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

fn triangle_distance_unchecked(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    PERMUTATIONS
        .iter()
        .map(|p| {
            let mut t = [
                (a[0] - b[p[0]]).abs(),
                (a[1] - b[p[1]]).abs(),
                (a[2] - b[p[2]]).abs(),
            ];
            t.sort_by(f64::total_cmp);
            t[0] + t[1] + t[2]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Assignment of every triplet of a design to one of `k` clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripletClustering {
    n_sites: usize,
    triplets: Vec<[usize; 3]>,
    sides: Vec<[f64; 3]>,
    cluster_of: Vec<usize>,
    counts: Vec<usize>,
}

impl TripletClustering {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn triplets(&self) -> &[[usize; 3]] {
        &self.triplets
    }

    /// Cluster id in `1..=k` of each triplet.
    pub fn cluster_of(&self) -> &[usize] {
        &self.cluster_of
    }

    /// Number of triplets in cluster `c`, indexed from 0 for cluster id 1.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Mean triangle perimeter per cluster.
    pub fn mean_perimeter(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.k()];
        for (s, &c) in self.sides.iter().zip(&self.cluster_of) {
            acc[c - 1] += s[0] + s[1] + s[2];
        }
        acc.iter()
            .zip(&self.counts)
            .map(|(a, &n)| a / n as f64)
            .collect()
    }

    /// Whether the clustering was built on a design with the same triangle
    /// geometry as `design`.
    pub fn matches(&self, design: &SpatialDesign) -> bool {
        design.len() == self.n_sites && snapped_sides(design) == self.sides
    }
}

fn snap(x: f64) -> f64 {
    (x / SIDE_GRID).round() * SIDE_GRID
}

fn snapped_sides(design: &SpatialDesign) -> Vec<[f64; 3]> {
    design
        .triplets()
        .into_iter()
        .map(|t| design.triangle(t).map(snap))
        .collect()
}

/// Ward clustering of the `C(D, 3)` triplets under the triangle distance,
/// cut at exactly `k` clusters. Designs above [`DEFAULT_MAX_SITES`] sites are
/// refused; see [`ward_cluster_with_limit`].
pub fn ward_cluster(design: &SpatialDesign, k: usize) -> Result<TripletClustering> {
    ward_cluster_with_limit(design, k, DEFAULT_MAX_SITES)
}

pub fn ward_cluster_with_limit(
    design: &SpatialDesign,
    k: usize,
    max_sites: usize,
) -> Result<TripletClustering> {
    let d = design.len();
    if d > max_sites {
        return Err(Error::Feasibility(format!(
            "triplet clustering of {d} sites exceeds the limit of {max_sites}"
        )));
    }
    if d < 3 {
        return Err(Error::Parameter(format!(
            "triplet clustering needs at least 3 sites, got {d}"
        )));
    }
    let triplets = design.triplets();
    let n = triplets.len();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "cluster count must lie in 1..={n}, got {k}"
        )));
    }
    let sides = snapped_sides(design);
    let parent = ward_merge(&sides, k);

    let mut root = vec![0usize; n];
    for i in 0..n {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        root[i] = r;
    }
    // roots are the smallest member of each cluster
    let mut label = vec![0usize; n];
    let mut next = 0;
    for i in 0..n {
        if root[i] == i {
            next += 1;
            label[i] = next;
        }
    }
    let cluster_of: Vec<usize> = root.iter().map(|&r| label[r]).collect();
    let mut counts = vec![0usize; k];
    for &c in &cluster_of {
        counts[c - 1] += 1;
    }
    Ok(TripletClustering {
        n_sites: d,
        triplets,
        sides,
        cluster_of,
        counts,
    })
}

#[inline]
fn packed(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Agglomerates until `k` clusters remain and returns the merge forest:
/// `parent[i] == i` for cluster representatives. The merged cluster keeps
/// the smaller index; ties in merge cost break on the lexicographically
/// smallest index pair.
fn ward_merge(sides: &[[f64; 3]], k: usize) -> Vec<usize> {
    let n = sides.len();
    let mut parent: Vec<usize> = (0..n).collect();
    if n == k {
        return parent;
    }
    // squared dissimilarities
    let mut dist = vec![0.0f64; n * (n - 1) / 2];
    for i in 0..n {
        for j in (i + 1)..n {
            let t = triangle_distance_unchecked(&sides[i], &sides[j]);
            dist[packed(n, i, j)] = t * t;
        }
    }
    let mut size = vec![1.0f64; n];
    let mut active = vec![true; n];
    let mut nn = vec![usize::MAX; n];
    let mut mind = vec![f64::INFINITY; n];

    let scan = |i: usize, active: &[bool], dist: &[f64]| -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..n {
            if j != i && active[j] {
                let v = dist[packed(n, i, j)];
                if v < best.0 {
                    best = (v, j);
                }
            }
        }
        best
    };
    for i in 0..n {
        (mind[i], nn[i]) = scan(i, &active, &dist);
    }

    let mut remaining = n;
    while remaining > k {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            let (lo, hi) = if i < nn[i] { (i, nn[i]) } else { (nn[i], i) };
            let better = mind[i] < best.0 || (mind[i] == best.0 && (lo, hi) < (best.1, best.2));
            if better {
                best = (mind[i], lo, hi);
            }
        }
        let (dab, a, b) = best;
        let (na, nb) = (size[a], size[b]);
        active[b] = false;
        parent[b] = a;
        for c in 0..n {
            if !active[c] || c == a {
                continue;
            }
            let nc = size[c];
            let dac = dist[packed(n, a, c)];
            let dbc = dist[packed(n, b, c)];
            dist[packed(n, a, c)] = ((na + nc) * dac + (nb + nc) * dbc - nc * dab) / (na + nb + nc);
        }
        size[a] = na + nb;
        remaining -= 1;

        for i in 0..n {
            if !active[i] {
                continue;
            }
            if i == a || nn[i] == a || nn[i] == b {
                (mind[i], nn[i]) = scan(i, &active, &dist);
            } else {
                let v = dist[packed(n, i, a)];
                if v < mind[i] || (v == mind[i] && a < nn[i]) {
                    mind[i] = v;
                    nn[i] = a;
                }
            }
        }
    }
    parent
}
