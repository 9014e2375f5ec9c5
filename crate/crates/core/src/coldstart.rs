//! Offline filtering stage: significant-user selection, k-means clustering
//! of significant users, and cluster-based smoothing of their missing cells.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::RatingMatrix;

/// Users whose rating density exceeds the population mean density.
#[derive(Debug, Clone)]
pub struct SignificantUserSet {
    members: Vec<usize>,
    threshold: f64,
}

impl SignificantUserSet {
    /// Explicit membership, for callers that pick users themselves.
    pub fn from_members(mut members: Vec<usize>, threshold: f64) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { members, threshold }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn contains(&self, u: usize) -> bool {
        self.members.binary_search(&u).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Selects users with rating density strictly above the mean density.
///
/// The comparison `|I_u|/|I| > mean` is evaluated as the exact integer test
/// `|I_u| * |U| > total_ratings`, so uniform-density inputs never select
/// anyone through rounding noise.
pub fn select_significant_users(matrix: &RatingMatrix) -> Result<SignificantUserSet> {
    if matrix.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let n_users = matrix.n_users();
    let total = matrix.n_ratings();
    let members = (0..n_users)
        .filter(|&u| matrix.user_count(u) * n_users > total)
        .collect();
    let threshold = total as f64 / (n_users * matrix.n_items()) as f64;
    Ok(SignificantUserSet { members, threshold })
}

/// K-means result over the significant users.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    members: Vec<usize>,
    cluster_of: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    seed: u64,
    iterations_run: usize,
    sse_trace: Vec<f64>,
}

impl ClusterModel {
    /// Assembles a model from explicit assignments; centroids are the
    /// per-item means of each cluster's vectors.
    pub fn from_assignments(
        matrix: &RatingMatrix,
        assignments: &[(usize, usize)],
    ) -> Self {
        let members: Vec<usize> = assignments.iter().map(|&(u, _)| u).collect();
        let cluster_of: Vec<usize> = assignments.iter().map(|&(_, c)| c).collect();
        let c = cluster_of.iter().copied().max().map_or(0, |m| m + 1);
        let vectors: Vec<Vec<f64>> = members
            .iter()
            .map(|&u| mean_filled_vector(matrix, u))
            .collect();
        let centroids = recompute_centroids(&vectors, &cluster_of, c, matrix.n_items());
        Self {
            members,
            cluster_of,
            centroids,
            seed: 0,
            iterations_run: 0,
            sse_trace: Vec::new(),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// Cluster id for a user, if the user was clustered.
    pub fn assignment(&self, u: usize) -> Option<usize> {
        self.members
            .iter()
            .position(|&m| m == u)
            .map(|pos| self.cluster_of[pos])
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    /// Within-cluster sum of squared distances recorded after each
    /// assignment pass.
    pub fn sse_trace(&self) -> &[f64] {
        &self.sse_trace
    }
}

/// User representation for clustering: dense over items, missing entries
/// filled with the user's own mean.
fn mean_filled_vector(matrix: &RatingMatrix, u: usize) -> Vec<f64> {
    let mut v = vec![matrix.user_mean(u); matrix.n_items()];
    let (items, vals) = matrix.user_row(u);
    for (&i, &r) in items.iter().zip(vals) {
        v[i as usize] = r;
    }
    v
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn recompute_centroids(
    vectors: &[Vec<f64>],
    cluster_of: &[usize],
    c: usize,
    dim: usize,
) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; c];
    let mut counts = vec![0usize; c];
    for (v, &cl) in vectors.iter().zip(cluster_of) {
        counts[cl] += 1;
        for (s, x) in sums[cl].iter_mut().zip(v) {
            *s += x;
        }
    }
    for cl in 0..c {
        if counts[cl] > 0 {
            let n = counts[cl] as f64;
            for s in sums[cl].iter_mut() {
                *s /= n;
            }
        }
    }
    sums
}

/// Lloyd's k-means over the significant users' mean-filled vectors.
///
/// Deterministic given `seed`: initial centroids are `c` distinct member
/// vectors sampled under the seed, assignment ties go to the lowest cluster
/// id, and clusters emptied during iteration are reseeded to the member
/// farthest from its assigned centroid.
pub fn cluster_users(
    matrix: &RatingMatrix,
    users: &SignificantUserSet,
    c: usize,
    max_iters: usize,
    seed: u64,
) -> Result<ClusterModel> {
    let members = users.members().to_vec();
    if c == 0 || c > members.len() {
        return Err(Error::TooManyClusters {
            requested: c,
            available: members.len(),
        });
    }
    assert!(max_iters >= 1, "max_iters must be at least 1");

    let vectors: Vec<Vec<f64>> = members
        .iter()
        .map(|&u| mean_filled_vector(matrix, u))
        .collect();
    let dim = matrix.n_items();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, members.len(), c);
    let mut centroids: Vec<Vec<f64>> = picks.iter().map(|p| vectors[p].clone()).collect();

    let mut prev: Option<Vec<usize>> = None;
    let mut iterations_run = 0;
    let mut sse_trace = Vec::new();

    for _ in 0..max_iters {
        iterations_run += 1;

        // assignment: nearest centroid, ties to the lowest cluster id
        let mut assignments: Vec<usize> = vectors
            .par_iter()
            .map(|v| {
                let mut best = 0;
                let mut best_d = squared_distance(v, &centroids[0]);
                for (cl, cent) in centroids.iter().enumerate().skip(1) {
                    let d = squared_distance(v, cent);
                    if d < best_d {
                        best_d = d;
                        best = cl;
                    }
                }
                best
            })
            .collect();

        let sse: f64 = vectors
            .iter()
            .zip(&assignments)
            .map(|(v, &cl)| squared_distance(v, &centroids[cl]))
            .sum();
        if let Some(last) = sse_trace.last() {
            debug_assert!(sse <= *last + 1e-9, "k-means objective increased");
        }
        sse_trace.push(sse);

        if prev.as_ref() == Some(&assignments) {
            break;
        }

        // update step; empty clusters keep their position until repaired
        let mut counts = vec![0usize; c];
        for &cl in &assignments {
            counts[cl] += 1;
        }
        let new_centroids = recompute_centroids(&vectors, &assignments, c, dim);
        for cl in 0..c {
            if counts[cl] > 0 {
                centroids[cl] = new_centroids[cl].clone();
            }
        }

        // reseed each empty cluster to the member farthest from its own
        // centroid (donor cluster must keep at least one member)
        loop {
            let empty = match (0..c).find(|&cl| counts[cl] == 0) {
                Some(e) => e,
                None => break,
            };
            let mut far: Option<(usize, f64)> = None;
            for (idx, v) in vectors.iter().enumerate() {
                let cl = assignments[idx];
                if counts[cl] < 2 {
                    continue;
                }
                let d = squared_distance(v, &centroids[cl]);
                if far.map_or(true, |(_, fd)| d > fd) {
                    far = Some((idx, d));
                }
            }
            let (idx, _) = far.expect("a donor cluster with >= 2 members exists");
            counts[assignments[idx]] -= 1;
            assignments[idx] = empty;
            counts[empty] = 1;
            centroids[empty] = vectors[idx].clone();
        }

        prev = Some(assignments);
    }

    let cluster_of = prev.unwrap_or_else(|| vec![0; members.len()]);
    Ok(ClusterModel {
        members,
        cluster_of,
        centroids,
        seed,
        iterations_run,
        sse_trace,
    })
}

/// Where a cell's value in the smoothed view came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Observed,
    Smoothed,
    Fallback,
}

#[derive(Debug, Clone)]
struct FillRow {
    items: Vec<u32>,
    values: Vec<f64>,
    smoothed: Vec<bool>,
}

/// The base matrix plus, for each clustered user, values for every cell the
/// user did not rate. Observed cells are never overwritten.
#[derive(Debug, Clone)]
pub struct SmoothedMatrix {
    base: Arc<RatingMatrix>,
    fills: Vec<Option<FillRow>>,
}

impl SmoothedMatrix {
    /// View with no smoothing applied.
    pub fn passthrough(base: Arc<RatingMatrix>) -> Self {
        let fills = vec![None; base.n_users()];
        Self { base, fills }
    }

    pub fn base(&self) -> &Arc<RatingMatrix> {
        &self.base
    }

    pub fn has_fills(&self, u: usize) -> bool {
        self.fills[u].is_some()
    }

    /// Value at (u, i): the observed rating, or the smoothed fill when the
    /// user is clustered, else `None`.
    pub fn value(&self, u: usize, i: usize) -> Option<(f64, Provenance)> {
        if let Some(r) = self.base.rating(u, i) {
            return Some((r, Provenance::Observed));
        }
        let fill = self.fills[u].as_ref()?;
        fill.items.binary_search(&(i as u32)).ok().map(|pos| {
            let prov = if fill.smoothed[pos] {
                Provenance::Smoothed
            } else {
                Provenance::Fallback
            };
            (fill.values[pos], prov)
        })
    }

    /// Full row of user `u` in the view, ascending by item index.
    pub fn full_row(&self, u: usize) -> (Vec<u32>, Vec<f64>) {
        let (items, vals) = self.base.user_row(u);
        match self.fills[u].as_ref() {
            None => (items.to_vec(), vals.to_vec()),
            Some(fill) => {
                let total = items.len() + fill.items.len();
                let mut out_i = Vec::with_capacity(total);
                let mut out_v = Vec::with_capacity(total);
                let (mut a, mut b) = (0, 0);
                while a < items.len() || b < fill.items.len() {
                    let take_base = b >= fill.items.len()
                        || (a < items.len() && items[a] < fill.items[b]);
                    if take_base {
                        out_i.push(items[a]);
                        out_v.push(vals[a]);
                        a += 1;
                    } else {
                        out_i.push(fill.items[b]);
                        out_v.push(fill.values[b]);
                        b += 1;
                    }
                }
                (out_i, out_v)
            }
        }
    }
}

/// Fills every missing cell of every clustered user: the user's mean shifted
/// by the mean deviation of cluster peers who rated the item, clamped to the
/// scale; the bare user mean when no peer rated it.
pub fn smooth(base: Arc<RatingMatrix>, clusters: &ClusterModel) -> SmoothedMatrix {
    let n_items = base.n_items();
    let c = clusters.n_clusters();

    // per (cluster, item): sum of peer deviations and peer count, accumulated
    // in ascending member order
    let mut dev_sum = vec![vec![0.0f64; n_items]; c];
    let mut dev_cnt = vec![vec![0u32; n_items]; c];
    for (pos, &u) in clusters.members.iter().enumerate() {
        let cl = clusters.cluster_of[pos];
        let mean = base.user_mean(u);
        let (items, vals) = base.user_row(u);
        for (&i, &r) in items.iter().zip(vals) {
            dev_sum[cl][i as usize] += r - mean;
            dev_cnt[cl][i as usize] += 1;
        }
    }

    let scale = base.scale();
    let mut fills: Vec<Option<FillRow>> = vec![None; base.n_users()];
    let filled: Vec<(usize, FillRow)> = clusters
        .members
        .par_iter()
        .enumerate()
        .map(|(pos, &u)| {
            let cl = clusters.cluster_of[pos];
            let mean = base.user_mean(u);
            let (rated, _) = base.user_row(u);
            let mut items = Vec::with_capacity(n_items - rated.len());
            let mut values = Vec::with_capacity(n_items - rated.len());
            let mut smoothed = Vec::with_capacity(n_items - rated.len());
            let mut next = 0;
            for i in 0..n_items {
                if next < rated.len() && rated[next] as usize == i {
                    // observed cell, never filled
                    next += 1;
                    continue;
                }
                items.push(i as u32);
                if dev_cnt[cl][i] > 0 {
                    let avg_dev = dev_sum[cl][i] / dev_cnt[cl][i] as f64;
                    values.push(scale.clamp(mean + avg_dev));
                    smoothed.push(true);
                } else {
                    values.push(mean);
                    smoothed.push(false);
                }
            }
            (
                u,
                FillRow {
                    items,
                    values,
                    smoothed,
                },
            )
        })
        .collect();
    for (u, row) in filled {
        fills[u] = Some(row);
    }
    SmoothedMatrix { base, fills }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{RatingScale, RatingTriple};

    fn matrix(triples: &[(&str, &str, f64)], min: f64, max: f64) -> Arc<RatingMatrix> {
        let ts: Vec<RatingTriple> = triples
            .iter()
            .map(|&(u, i, r)| RatingTriple::new(u, i, r))
            .collect();
        Arc::new(RatingMatrix::from_triples(&ts, RatingScale::new(min, max).unwrap()).unwrap())
    }

    /// 3 users over 10 items with densities 0.5, 0.1, 0.3.
    fn density_fixture() -> Arc<RatingMatrix> {
        let mut triples = Vec::new();
        for i in 0..10 {
            triples.push(("pad", format!("i{i}"), 3.0));
        }
        for i in 0..5 {
            triples.push(("heavy", format!("i{i}"), 4.0));
        }
        triples.push(("light", "i0".to_string(), 2.0));
        for i in 0..3 {
            triples.push(("mid", format!("i{i}"), 3.0));
        }
        let ts: Vec<RatingTriple> = triples
            .iter()
            .map(|(u, i, r)| RatingTriple::new(*u, i.clone(), *r))
            .collect();
        Arc::new(
            RatingMatrix::from_triples(&ts, RatingScale::new(1.0, 5.0).unwrap()).unwrap(),
        )
    }

    #[test]
    fn selects_only_above_mean_density() {
        // densities: pad 1.0, heavy 0.5, light 0.1, mid 0.3; mean 0.475
        let m = density_fixture();
        let sig = select_significant_users(&m).unwrap();
        let ids: Vec<&str> = sig.members().iter().map(|&u| m.user_id(u)).collect();
        assert_eq!(ids, vec!["pad", "heavy"]);
    }

    #[test]
    fn uniform_density_selects_nobody() {
        let m = matrix(
            &[
                ("a", "x", 1.0),
                ("a", "y", 2.0),
                ("b", "y", 3.0),
                ("b", "z", 4.0),
                ("c", "z", 5.0),
                ("c", "x", 1.0),
            ],
            1.0,
            5.0,
        );
        let sig = select_significant_users(&m).unwrap();
        assert!(sig.is_empty());
    }

    #[test]
    fn single_user_is_never_significant() {
        let m = matrix(&[("only", "x", 3.0)], 1.0, 5.0);
        let sig = select_significant_users(&m).unwrap();
        assert!(sig.is_empty());
    }

    fn two_group_fixture() -> (Arc<RatingMatrix>, SignificantUserSet) {
        // two groups with identical in-group rows, far apart between groups
        let mut triples = Vec::new();
        for u in 0..3 {
            triples.push((format!("a{u}"), "x".to_string(), 1.0));
            triples.push((format!("a{u}"), "y".to_string(), 1.0));
            triples.push((format!("a{u}"), "z".to_string(), 1.5));
        }
        for u in 0..3 {
            triples.push((format!("b{u}"), "x".to_string(), 5.0));
            triples.push((format!("b{u}"), "y".to_string(), 4.5));
            triples.push((format!("b{u}"), "z".to_string(), 5.0));
        }
        let ts: Vec<RatingTriple> = triples
            .iter()
            .map(|(u, i, r)| RatingTriple::new(u.clone(), i.clone(), *r))
            .collect();
        let m = Arc::new(
            RatingMatrix::from_triples(&ts, RatingScale::new(1.0, 5.0).unwrap()).unwrap(),
        );
        let all = SignificantUserSet::from_members((0..m.n_users()).collect(), 0.0);
        (m, all)
    }

    #[test]
    fn single_cluster_centroid_is_member_mean() {
        let (m, all) = two_group_fixture();
        let model = cluster_users(&m, &all, 1, 50, 1).unwrap();
        assert!(model.members().iter().all(|&u| model.assignment(u) == Some(0)));
        let x = m.item_index("x").unwrap();
        // mean over 1,1,1,5,5,5
        assert!((model.centroid(0)[x] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_clusters_recover_groups() {
        let (m, all) = two_group_fixture();
        for seed in 0..20 {
            let model = cluster_users(&m, &all, 2, 50, seed).unwrap();
            let a0 = model.assignment(m.user_index("a0").unwrap()).unwrap();
            let b0 = model.assignment(m.user_index("b0").unwrap()).unwrap();
            assert_ne!(a0, b0, "seed {seed}");
            for u in ["a1", "a2"] {
                assert_eq!(model.assignment(m.user_index(u).unwrap()), Some(a0));
            }
            for u in ["b1", "b2"] {
                assert_eq!(model.assignment(m.user_index(u).unwrap()), Some(b0));
            }
        }
    }

    #[test]
    fn saturated_clustering_gives_singletons() {
        // saturation needs distinct vectors, one per cluster
        let mut triples = Vec::new();
        for u in 0..4 {
            triples.push(RatingTriple::new(format!("u{u}"), "x", 1.0 + u as f64));
            triples.push(RatingTriple::new(format!("u{u}"), "y", 5.0 - u as f64));
        }
        let m = Arc::new(
            RatingMatrix::from_triples(&triples, RatingScale::new(1.0, 5.0).unwrap()).unwrap(),
        );
        let all = SignificantUserSet::from_members((0..4).collect(), 0.0);
        let model = cluster_users(&m, &all, 4, 50, 3).unwrap();
        let mut seen: Vec<usize> = (0..4).map(|u| model.assignment(u).unwrap()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn too_many_clusters_rejected() {
        let (m, all) = two_group_fixture();
        assert!(matches!(
            cluster_users(&m, &all, 7, 50, 0),
            Err(Error::TooManyClusters { .. })
        ));
    }

    #[test]
    fn sse_trace_non_increasing() {
        let (m, all) = two_group_fixture();
        for seed in 0..10 {
            let model = cluster_users(&m, &all, 3, 50, seed).unwrap();
            let trace = model.sse_trace();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "seed {seed}: {trace:?}");
            }
        }
    }

    #[test]
    fn smoothing_uses_peer_deviations() {
        // v1 and v2 deviate +1.0 on item "t"; u has not rated it
        let m = matrix(
            &[
                ("u", "a", 4.0),
                ("u", "b", 2.0),
                ("v1", "t", 4.0),
                ("v1", "a", 3.0),
                ("v1", "b", 2.0),
                ("v2", "t", 4.5),
                ("v2", "a", 4.0),
                ("v2", "b", 2.0),
            ],
            1.0,
            5.0,
        );
        let u = m.user_index("u").unwrap();
        let v1 = m.user_index("v1").unwrap();
        let v2 = m.user_index("v2").unwrap();
        let clusters = ClusterModel::from_assignments(&m, &[(u, 0), (v1, 0), (v2, 0)]);
        let sm = smooth(m.clone(), &clusters);
        let t = m.item_index("t").unwrap();
        let (val, prov) = sm.value(u, t).unwrap();
        assert_eq!(prov, Provenance::Smoothed);
        assert!((val - (m.user_mean(u) + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn singleton_cluster_falls_back_to_user_mean() {
        let m = matrix(&[("u", "a", 4.0), ("u", "b", 2.0), ("w", "t", 5.0)], 1.0, 5.0);
        let u = m.user_index("u").unwrap();
        let clusters = ClusterModel::from_assignments(&m, &[(u, 0)]);
        let sm = smooth(m.clone(), &clusters);
        let t = m.item_index("t").unwrap();
        let (val, prov) = sm.value(u, t).unwrap();
        assert_eq!(prov, Provenance::Fallback);
        assert_eq!(val, 3.0);
    }

    #[test]
    fn observed_cells_never_change() {
        let m = matrix(
            &[
                ("u", "a", 4.0),
                ("u", "b", 2.0),
                ("v", "a", 1.0),
                ("v", "t", 5.0),
            ],
            1.0,
            5.0,
        );
        let u = m.user_index("u").unwrap();
        let v = m.user_index("v").unwrap();
        let clusters = ClusterModel::from_assignments(&m, &[(u, 0), (v, 0)]);
        let sm = smooth(m.clone(), &clusters);
        for user in 0..m.n_users() {
            let (items, vals) = m.user_row(user);
            for (&i, &r) in items.iter().zip(vals) {
                let (val, prov) = sm.value(user, i as usize).unwrap();
                assert_eq!(prov, Provenance::Observed);
                assert_eq!(val.to_bits(), r.to_bits());
            }
        }
    }

    #[test]
    fn smoothed_values_stay_in_scale() {
        let m = matrix(
            &[
                ("u", "a", 4.9),
                ("u", "b", 4.9),
                ("v", "t", 5.0),
                ("v", "a", 1.0),
                ("v", "b", 1.0),
            ],
            1.0,
            5.0,
        );
        let u = m.user_index("u").unwrap();
        let v = m.user_index("v").unwrap();
        let clusters = ClusterModel::from_assignments(&m, &[(u, 0), (v, 0)]);
        let sm = smooth(m.clone(), &clusters);
        let t = m.item_index("t").unwrap();
        // raw smoothed value would be 4.9 + (5.0 - 7/3) > 5
        let (val, prov) = sm.value(u, t).unwrap();
        assert_eq!(prov, Provenance::Smoothed);
        assert_eq!(val, 5.0);
    }
}
