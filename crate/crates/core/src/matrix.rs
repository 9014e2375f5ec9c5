//! Sparse item-user rating matrix with dual (row and column) indexing and
//! cached per-user / per-item means.
//!
//! External user and item identifiers are interned into dense contiguous
//! indices at build time; every downstream module works on dense indices.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Inclusive rating bounds declared at ingestion time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RatingScale {
    min: f64,
    max: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() || min >= max {
            return Err(Error::InvalidScale { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn contains(&self, value: f64) -> bool {
        value.is_finite() && value >= self.min && value <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }
}

/// One observed rating, keyed by external identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTriple {
    pub user: String,
    pub item: String,
    pub rating: f64,
}

impl RatingTriple {
    pub fn new(user: impl Into<String>, item: impl Into<String>, rating: f64) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            rating,
        }
    }
}

/// Immutable rating matrix in CSR form by user and CSC form by item.
///
/// Users or items with zero ratings are not representable: only identifiers
/// seen in the input exist. Duplicate (user, item) pairs are a build error.
#[derive(Debug, Clone)]
pub struct RatingMatrix {
    scale: RatingScale,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
    // row-major: ratings of user u sorted by item index
    user_ptr: Vec<usize>,
    user_items: Vec<u32>,
    user_vals: Vec<f64>,
    // column-major: ratings of item i sorted by user index
    item_ptr: Vec<usize>,
    item_users: Vec<u32>,
    item_vals: Vec<f64>,
    user_means: Vec<f64>,
    item_means: Vec<f64>,
    global_mean: f64,
}

impl RatingMatrix {
    /// Builds the matrix from raw triples, interning external identifiers in
    /// first-appearance order.
    pub fn from_triples(triples: &[RatingTriple], scale: RatingScale) -> Result<Self> {
        let mut user_ids: Vec<String> = Vec::new();
        let mut item_ids: Vec<String> = Vec::new();
        let mut user_lookup: HashMap<String, usize> = HashMap::new();
        let mut item_lookup: HashMap<String, usize> = HashMap::new();
        let mut entries: Vec<(u32, u32, f64)> = Vec::with_capacity(triples.len());

        for t in triples {
            if !scale.contains(t.rating) {
                return Err(Error::RatingOutOfScale {
                    user: t.user.clone(),
                    item: t.item.clone(),
                    value: t.rating,
                    min: scale.min,
                    max: scale.max,
                });
            }
            let u = *user_lookup.entry(t.user.clone()).or_insert_with(|| {
                user_ids.push(t.user.clone());
                user_ids.len() - 1
            });
            let i = *item_lookup.entry(t.item.clone()).or_insert_with(|| {
                item_ids.push(t.item.clone());
                item_ids.len() - 1
            });
            entries.push((u as u32, i as u32, t.rating));
        }

        entries.sort_unstable_by_key(|&(u, i, _)| (u, i));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::DuplicateRating {
                    user: user_ids[w[0].0 as usize].clone(),
                    item: item_ids[w[0].1 as usize].clone(),
                });
            }
        }

        let n_users = user_ids.len();
        let n_items = item_ids.len();
        let n = entries.len();

        let mut user_ptr = vec![0usize; n_users + 1];
        let mut user_items = Vec::with_capacity(n);
        let mut user_vals = Vec::with_capacity(n);
        let mut user_sums = vec![0.0f64; n_users];
        let mut item_counts = vec![0usize; n_items];
        let mut item_sums = vec![0.0f64; n_items];
        let mut total = 0.0f64;

        for &(u, i, r) in &entries {
            user_ptr[u as usize + 1] += 1;
            user_items.push(i);
            user_vals.push(r);
            user_sums[u as usize] += r;
            item_counts[i as usize] += 1;
            item_sums[i as usize] += r;
            total += r;
        }
        for u in 0..n_users {
            user_ptr[u + 1] += user_ptr[u];
        }

        // scatter entries (already sorted by user, then item) into columns;
        // within each column users arrive in ascending order
        let mut item_ptr = vec![0usize; n_items + 1];
        for i in 0..n_items {
            item_ptr[i + 1] = item_ptr[i] + item_counts[i];
        }
        let mut cursor = item_ptr.clone();
        let mut item_users = vec![0u32; n];
        let mut item_vals = vec![0.0f64; n];
        for &(u, i, r) in &entries {
            let pos = cursor[i as usize];
            item_users[pos] = u;
            item_vals[pos] = r;
            cursor[i as usize] += 1;
        }

        let user_means = (0..n_users)
            .map(|u| user_sums[u] / (user_ptr[u + 1] - user_ptr[u]) as f64)
            .collect();
        let item_means = (0..n_items)
            .map(|i| item_sums[i] / item_counts[i] as f64)
            .collect();
        let global_mean = if n == 0 { 0.0 } else { total / n as f64 };

        Ok(Self {
            scale,
            user_ids,
            item_ids,
            user_lookup,
            item_lookup,
            user_ptr,
            user_items,
            user_vals,
            item_ptr,
            item_users,
            item_vals,
            user_means,
            item_means,
            global_mean,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.user_items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.user_items.is_empty()
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    /// Mean of all observed ratings; 0.0 for an empty matrix.
    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    /// |ratings| / (|U| * |I|).
    pub fn density(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        Ok(self.n_ratings() as f64 / (self.n_users() * self.n_items()) as f64)
    }

    /// Fraction of the item universe rated by `user`: |I_u| / |I|.
    pub fn user_rating_density(&self, user: &str) -> Result<f64> {
        let u = self
            .user_index(user)
            .ok_or_else(|| Error::UnknownUser(user.to_string()))?;
        Ok(self.user_density_idx(u))
    }

    pub(crate) fn user_density_idx(&self, u: usize) -> f64 {
        self.user_count(u) as f64 / self.n_items() as f64
    }

    pub fn user_index(&self, user: &str) -> Option<usize> {
        self.user_lookup.get(user).copied()
    }

    pub fn item_index(&self, item: &str) -> Option<usize> {
        self.item_lookup.get(item).copied()
    }

    pub fn user_id(&self, u: usize) -> &str {
        &self.user_ids[u]
    }

    pub fn item_id(&self, i: usize) -> &str {
        &self.item_ids[i]
    }

    /// Items rated by user `u` (ascending item index) with the ratings.
    pub fn user_row(&self, u: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.user_ptr[u], self.user_ptr[u + 1]);
        (&self.user_items[lo..hi], &self.user_vals[lo..hi])
    }

    /// Users who rated item `i` (ascending user index) with the ratings.
    pub fn item_col(&self, i: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.item_ptr[i], self.item_ptr[i + 1]);
        (&self.item_users[lo..hi], &self.item_vals[lo..hi])
    }

    pub fn user_count(&self, u: usize) -> usize {
        self.user_ptr[u + 1] - self.user_ptr[u]
    }

    pub fn item_count(&self, i: usize) -> usize {
        self.item_ptr[i + 1] - self.item_ptr[i]
    }

    pub fn user_mean(&self, u: usize) -> f64 {
        self.user_means[u]
    }

    pub fn item_mean(&self, i: usize) -> f64 {
        self.item_means[i]
    }

    /// Observed rating at (u, i), if any.
    pub fn rating(&self, u: usize, i: usize) -> Option<f64> {
        let (items, vals) = self.user_row(u);
        items
            .binary_search(&(i as u32))
            .ok()
            .map(|pos| vals[pos])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn f1_fixture() -> Vec<RatingTriple> {
        vec![
            RatingTriple::new("a", "x", 4.0),
            RatingTriple::new("a", "y", 2.0),
            RatingTriple::new("b", "x", 5.0),
            RatingTriple::new("b", "z", 1.0),
            RatingTriple::new("c", "y", 3.0),
        ]
    }

    fn scale() -> RatingScale {
        RatingScale::new(1.0, 5.0).unwrap()
    }

    #[test]
    fn empty_build() {
        let m = RatingMatrix::from_triples(&[], scale()).unwrap();
        assert_eq!(m.n_users(), 0);
        assert_eq!(m.n_items(), 0);
        assert!(matches!(m.density(), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn single_rating() {
        let m = RatingMatrix::from_triples(&[RatingTriple::new("u1", "i1", 5.0)], scale()).unwrap();
        assert_eq!(m.n_users(), 1);
        assert_eq!(m.n_items(), 1);
        assert_eq!(m.user_mean(0), 5.0);
        assert_eq!(m.item_mean(0), 5.0);
    }

    #[test]
    fn f1_means() {
        let m = RatingMatrix::from_triples(&f1_fixture(), scale()).unwrap();
        let a = m.user_index("a").unwrap();
        let b = m.user_index("b").unwrap();
        let c = m.user_index("c").unwrap();
        assert_eq!(m.user_mean(a), 3.0);
        assert_eq!(m.user_mean(b), 3.0);
        assert_eq!(m.user_mean(c), 3.0);
        let x = m.item_index("x").unwrap();
        let y = m.item_index("y").unwrap();
        let z = m.item_index("z").unwrap();
        assert_eq!(m.item_mean(x), 4.5);
        assert_eq!(m.item_mean(y), 2.5);
        assert_eq!(m.item_mean(z), 1.0);
    }

    #[test]
    fn f1_density() {
        let m = RatingMatrix::from_triples(&f1_fixture(), scale()).unwrap();
        assert!((m.density().unwrap() - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn full_matrix_density_is_one() {
        let triples = vec![
            RatingTriple::new("u1", "i1", 1.0),
            RatingTriple::new("u1", "i2", 2.0),
            RatingTriple::new("u2", "i1", 3.0),
            RatingTriple::new("u2", "i2", 4.0),
        ];
        let m = RatingMatrix::from_triples(&triples, scale()).unwrap();
        assert_eq!(m.density().unwrap(), 1.0);
    }

    #[test]
    fn user_densities() {
        let m = RatingMatrix::from_triples(&f1_fixture(), scale()).unwrap();
        assert!((m.user_rating_density("a").unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.user_rating_density("c").unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            m.user_rating_density("nobody"),
            Err(Error::UnknownUser(_))
        ));
    }

    #[test]
    fn full_rater_density_is_one() {
        let triples = vec![
            RatingTriple::new("u", "i1", 2.0),
            RatingTriple::new("u", "i2", 3.0),
            RatingTriple::new("v", "i1", 4.0),
        ];
        let m = RatingMatrix::from_triples(&triples, scale()).unwrap();
        assert_eq!(m.user_rating_density("u").unwrap(), 1.0);
    }

    #[test]
    fn duplicate_rejected() {
        let triples = vec![
            RatingTriple::new("u", "i", 2.0),
            RatingTriple::new("u", "i", 3.0),
        ];
        let err = RatingMatrix::from_triples(&triples, scale()).unwrap_err();
        assert!(matches!(err, Error::DuplicateRating { .. }));
    }

    #[test]
    fn out_of_scale_rejected() {
        let triples = vec![RatingTriple::new("u", "i", 9.0)];
        let err = RatingMatrix::from_triples(&triples, scale()).unwrap_err();
        assert!(matches!(err, Error::RatingOutOfScale { .. }));
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(RatingScale::new(5.0, 1.0).is_err());
        assert!(RatingScale::new(2.0, 2.0).is_err());
    }

    #[test]
    fn transpose_consistency_f1() {
        let m = RatingMatrix::from_triples(&f1_fixture(), scale()).unwrap();
        for u in 0..m.n_users() {
            let (items, vals) = m.user_row(u);
            for (&i, &r) in items.iter().zip(vals) {
                let (users, cvals) = m.item_col(i as usize);
                let pos = users.binary_search(&(u as u32)).expect("transpose entry");
                assert_eq!(cvals[pos], r);
            }
        }
        let row_total: usize = (0..m.n_users()).map(|u| m.user_count(u)).sum();
        let col_total: usize = (0..m.n_items()).map(|i| m.item_count(i)).sum();
        assert_eq!(row_total, m.n_ratings());
        assert_eq!(col_total, m.n_ratings());
    }
}
