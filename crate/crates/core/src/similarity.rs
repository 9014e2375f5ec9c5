//! Pearson correlation over co-rated overlaps and precomputed top-M item /
//! top-K user neighborhoods.
//!
//! Only positive similarities enter neighbor lists; negative evidence is
//! discarded. Ties are broken by ascending dense index so that model builds
//! are reproducible.

use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::RatingMatrix;

/// Both variables need variance for a correlation to exist; callers treat
/// this as "no similarity evidence" rather than a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("zero variance in at least one variable")]
pub struct ZeroVariance;

/// Pearson correlation of the paired samples, using population moments.
pub fn pcc(pairs: &[(f64, f64)]) -> Result<f64, ZeroVariance> {
    let n = pairs.len();
    if n == 0 {
        return Err(ZeroVariance);
    }
    let mut sx = 0.0;
    let mut sy = 0.0;
    for &(x, y) in pairs {
        sx += x;
        sy += y;
    }
    let mx = sx / n as f64;
    let my = sy / n as f64;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in pairs {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ZeroVariance);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// PCC over the intersection of two sparse vectors (indices ascending).
/// `None` when the overlap is below `min_overlap` or either side is constant.
pub(crate) fn pcc_sparse(
    ai: &[u32],
    av: &[f64],
    bi: &[u32],
    bv: &[f64],
    min_overlap: usize,
) -> Option<f64> {
    let mut x = 0;
    let mut y = 0;
    let mut n = 0usize;
    let mut sx = 0.0;
    let mut sy = 0.0;
    while x < ai.len() && y < bi.len() {
        match ai[x].cmp(&bi[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                sx += av[x];
                sy += bv[y];
                x += 1;
                y += 1;
            }
        }
    }
    if n < min_overlap {
        return None;
    }
    let mx = sx / n as f64;
    let my = sy / n as f64;
    let mut x = 0;
    let mut y = 0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    while x < ai.len() && y < bi.len() {
        match ai[x].cmp(&bi[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                let dx = av[x] - mx;
                let dy = bv[y] - my;
                sxx += dx * dx;
                syy += dy * dy;
                sxy += dx * dy;
                x += 1;
                y += 1;
            }
        }
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Same arithmetic as `pcc_sparse` for two vectors known to share one index
/// universe (smoothed rows and columns are full), skipping the index merge.
fn pcc_aligned(av: &[f64], bv: &[f64], min_overlap: usize) -> Option<f64> {
    let n = av.len();
    if n < min_overlap {
        return None;
    }
    let mut sx = 0.0;
    let mut sy = 0.0;
    for idx in 0..n {
        sx += av[idx];
        sy += bv[idx];
    }
    let mx = sx / n as f64;
    let my = sy / n as f64;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for idx in 0..n {
        let dx = av[idx] - mx;
        let dy = bv[idx] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Similarity between two items over the users who rated both.
pub fn item_similarity(
    matrix: &RatingMatrix,
    i: usize,
    j: usize,
    min_overlap: usize,
) -> Option<f64> {
    debug_assert_ne!(i, j);
    let (ai, av) = matrix.item_col(i);
    let (bi, bv) = matrix.item_col(j);
    pcc_sparse(ai, av, bi, bv, min_overlap)
}

/// Similarity between two users over the items both rated.
pub fn user_similarity(
    matrix: &RatingMatrix,
    u: usize,
    v: usize,
    min_overlap: usize,
) -> Option<f64> {
    debug_assert_ne!(u, v);
    let (ai, av) = matrix.user_row(u);
    let (bi, bv) = matrix.user_row(v);
    pcc_sparse(ai, av, bi, bv, min_overlap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub sim: f64,
}

/// Precomputed neighborhoods: per item up to M similar items, per user up to
/// K like-minded users, sorted by similarity descending (ties by index).
#[derive(Debug, Clone)]
pub struct SimilarityModel {
    item_neighbors: Vec<Vec<Neighbor>>,
    user_neighbors: Vec<Vec<Neighbor>>,
    m: usize,
    k: usize,
    min_overlap: usize,
}

impl SimilarityModel {
    pub fn item_neighbors(&self, i: usize) -> &[Neighbor] {
        &self.item_neighbors[i]
    }

    pub fn user_neighbors(&self, u: usize) -> &[Neighbor] {
        &self.user_neighbors[u]
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn min_overlap(&self) -> usize {
        self.min_overlap
    }
}

/// Materialized ratings view the model builder runs over. Rows cover every
/// user; columns cover only the users eligible to act as neighbors.
pub(crate) struct RatingStore {
    pub(crate) user_rows: Vec<(Vec<u32>, Vec<f64>)>,
    pub(crate) item_cols: Vec<(Vec<u32>, Vec<f64>)>,
    /// number of users contributing to columns (aligned-path detection)
    pub(crate) col_universe: usize,
    pub(crate) n_items: usize,
}

impl RatingStore {
    pub(crate) fn from_matrix(matrix: &RatingMatrix) -> Self {
        let user_rows = (0..matrix.n_users())
            .map(|u| {
                let (items, vals) = matrix.user_row(u);
                (items.to_vec(), vals.to_vec())
            })
            .collect();
        let item_cols = (0..matrix.n_items())
            .map(|i| {
                let (users, vals) = matrix.item_col(i);
                (users.to_vec(), vals.to_vec())
            })
            .collect();
        Self {
            user_rows,
            item_cols,
            col_universe: matrix.n_users(),
            n_items: matrix.n_items(),
        }
    }
}

fn pair_sim(
    a: &(Vec<u32>, Vec<f64>),
    b: &(Vec<u32>, Vec<f64>),
    full_len: usize,
    min_overlap: usize,
) -> Option<f64> {
    if full_len > 0 && a.0.len() == full_len && b.0.len() == full_len {
        pcc_aligned(&a.1, &b.1, min_overlap)
    } else {
        pcc_sparse(&a.0, &a.1, &b.0, &b.1, min_overlap)
    }
}

fn sort_truncate(list: &mut Vec<Neighbor>, cap: usize) {
    list.sort_unstable_by(|a, b| {
        b.sim
            .partial_cmp(&a.sim)
            .expect("similarities are finite")
            .then(a.id.cmp(&b.id))
    });
    list.truncate(cap);
}

/// Builds top-M item and top-K user neighborhoods over the whole matrix.
pub fn build_similarity_model(
    matrix: &RatingMatrix,
    m: usize,
    k: usize,
    min_overlap: usize,
) -> SimilarityModel {
    let store = RatingStore::from_matrix(matrix);
    build_model_from_store(&store, None, m, k, min_overlap, true, true)
}

/// Neighborhood construction over a prepared store. `candidates` (sorted
/// dense user indices) restricts who may appear as a user neighbor; item
/// neighborhoods are restricted through the store's columns.
pub(crate) fn build_model_from_store(
    store: &RatingStore,
    candidates: Option<&[usize]>,
    m: usize,
    k: usize,
    min_overlap: usize,
    need_items: bool,
    need_users: bool,
) -> SimilarityModel {
    assert!(m >= 1, "m must be at least 1");
    assert!(k >= 1, "k must be at least 1");
    assert!(min_overlap >= 2, "min_overlap must be at least 2");

    let n_items = store.item_cols.len();
    let n_users = store.user_rows.len();

    let item_neighbors = if need_items {
        // upper triangle once, then scatter both directions
        let upper: Vec<Vec<(u32, f64)>> = (0..n_items)
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::new();
                for j in (i + 1)..n_items {
                    if let Some(s) = pair_sim(
                        &store.item_cols[i],
                        &store.item_cols[j],
                        store.col_universe,
                        min_overlap,
                    ) {
                        if s > 0.0 {
                            out.push((j as u32, s));
                        }
                    }
                }
                out
            })
            .collect();
        let mut lists: Vec<Vec<Neighbor>> = vec![Vec::new(); n_items];
        for (i, row) in upper.iter().enumerate() {
            for &(j, s) in row {
                lists[i].push(Neighbor { id: j as usize, sim: s });
                lists[j as usize].push(Neighbor { id: i, sim: s });
            }
        }
        lists.par_iter_mut().for_each(|l| sort_truncate(l, m));
        lists
    } else {
        vec![Vec::new(); n_items]
    };

    let all_users: Vec<usize>;
    let cands: &[usize] = match candidates {
        Some(c) => c,
        None => {
            all_users = (0..n_users).collect();
            &all_users
        }
    };

    let user_neighbors = if need_users {
        (0..n_users)
            .into_par_iter()
            .map(|u| {
                let mut list = Vec::new();
                for &v in cands {
                    if v == u {
                        continue;
                    }
                    if let Some(s) = pair_sim(
                        &store.user_rows[u],
                        &store.user_rows[v],
                        store.n_items,
                        min_overlap,
                    ) {
                        if s > 0.0 {
                            list.push(Neighbor { id: v, sim: s });
                        }
                    }
                }
                sort_truncate(&mut list, k);
                list
            })
            .collect()
    } else {
        vec![Vec::new(); n_users]
    };

    SimilarityModel {
        item_neighbors,
        user_neighbors,
        m,
        k,
        min_overlap,
    }
}
