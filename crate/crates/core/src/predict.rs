//! Online prediction: item-based, user-based, and hybrid components fused
//! into a single rating estimate.
//!
//! Component sums run over neighborhood intersections (the top-M similar
//! items the user rated, the top-K like-minded users with a value for the
//! item), so the M and K parameters bound per-query work.

use crate::coldstart::SmoothedMatrix;
use crate::error::{Error, Result};
use crate::matrix::RatingScale;
use crate::similarity::SimilarityModel;

/// Fusion mixing parameters, both in the closed unit interval.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FusionParams {
    lambda: f64,
    delta: f64,
}

impl FusionParams {
    pub fn new(lambda: f64, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidFusionParam {
                name: "lambda",
                value: lambda,
            });
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidFusionParam {
                name: "delta",
                value: delta,
            });
        }
        Ok(Self { lambda, delta })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Component weights (item-based, user-based, hybrid).
    ///
    /// The hybrid weight is taken as the complement of the other two so the
    /// three always sum to exactly 1.0 in floating point.
    pub fn weights(&self) -> (f64, f64, f64) {
        let w_sir = (1.0 - self.delta) * (1.0 - self.lambda);
        let w_sur = (1.0 - self.delta) * self.lambda;
        let w_suir = 1.0 - (w_sir + w_sur);
        (w_sir, w_sur, w_suir)
    }
}

/// Why (or whether) the fallback chain supplied the final value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackReason {
    None,
    PartialComponents,
    GlobalFallback,
}

/// Component predictions and the fused result for one (user, item) query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionBreakdown {
    pub sir: Option<f64>,
    pub sur: Option<f64>,
    pub suir: Option<f64>,
    pub sr: f64,
    pub fallback_reason: FallbackReason,
}

/// Value used when no component has evidence: the user's mean, else the
/// item's mean, else the global mean.
#[derive(Debug, Clone, Copy)]
pub struct FallbackChain {
    pub user_mean: Option<f64>,
    pub item_mean: Option<f64>,
    pub global_mean: f64,
}

impl FallbackChain {
    pub fn value(&self) -> f64 {
        self.user_mean
            .or(self.item_mean)
            .unwrap_or(self.global_mean)
    }
}

/// Item-based component: the item's mean plus similarity-weighted deviations
/// of the user's observed ratings on the item's neighbors.
pub fn predict_item_based(
    view: &SmoothedMatrix,
    model: &SimilarityModel,
    u: usize,
    i: usize,
) -> Option<f64> {
    let base = view.base();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut found = false;
    for nb in model.item_neighbors(i) {
        if let Some(r) = base.rating(u, nb.id) {
            num += nb.sim * (r - base.item_mean(nb.id));
            den += nb.sim;
            found = true;
        }
    }
    if !found {
        return None;
    }
    Some(base.item_mean(i) + num / den)
}

/// User-based component: the user's mean plus similarity-weighted deviations
/// of like-minded users' values on the item (smoothed values included).
pub fn predict_user_based(
    view: &SmoothedMatrix,
    model: &SimilarityModel,
    u: usize,
    i: usize,
) -> Option<f64> {
    let base = view.base();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut found = false;
    for nb in model.user_neighbors(u) {
        if let Some((r, _)) = view.value(nb.id, i) {
            num += nb.sim * (r - base.user_mean(nb.id));
            den += nb.sim;
            found = true;
        }
    }
    if !found {
        return None;
    }
    Some(base.user_mean(u) + num / den)
}

/// Hybrid component: deviations of like-minded users on similar items,
/// weighted by the product of the two similarities.
pub fn predict_hybrid(
    view: &SmoothedMatrix,
    model: &SimilarityModel,
    u: usize,
    i: usize,
) -> Option<f64> {
    let base = view.base();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut found = false;
    for unb in model.user_neighbors(u) {
        for inb in model.item_neighbors(i) {
            if let Some((r, _)) = view.value(unb.id, inb.id) {
                let w = unb.sim * inb.sim;
                num += w * (r - base.user_mean(unb.id));
                den += w;
                found = true;
            }
        }
    }
    if !found {
        return None;
    }
    Some(base.user_mean(u) + num / den)
}

/// Combines the components: present components are mixed with their weights
/// renormalized to sum 1; when nothing carries weight the fallback chain
/// supplies the value. The result is clamped to the rating scale.
pub fn fuse(
    sir: Option<f64>,
    sur: Option<f64>,
    suir: Option<f64>,
    params: &FusionParams,
    fallback: &FallbackChain,
    scale: RatingScale,
) -> PredictionBreakdown {
    let (w_sir, w_sur, w_suir) = params.weights();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut n_present = 0;
    for (w, c) in [(w_sir, sir), (w_sur, sur), (w_suir, suir)] {
        if let Some(v) = c {
            num += w * v;
            den += w;
            n_present += 1;
        }
    }
    let (sr, fallback_reason) = if n_present == 0 || den <= 0.0 {
        (fallback.value(), FallbackReason::GlobalFallback)
    } else if n_present == 3 {
        (num / den, FallbackReason::None)
    } else {
        (num / den, FallbackReason::PartialComponents)
    };
    PredictionBreakdown {
        sir,
        sur,
        suir,
        sr: scale.clamp(sr),
        fallback_reason,
    }
}

/// Full prediction for external identifiers: resolves the ids, evaluates the
/// three components, and fuses them. Unknown users or items flow into the
/// fallback chain instead of failing.
pub fn predict(
    view: &SmoothedMatrix,
    model: &SimilarityModel,
    params: &FusionParams,
    user: &str,
    item: &str,
) -> PredictionBreakdown {
    let base = view.base();
    let u = base.user_index(user);
    let i = base.item_index(item);
    let (sir, sur, suir) = match (u, i) {
        (Some(u), Some(i)) => (
            predict_item_based(view, model, u, i),
            predict_user_based(view, model, u, i),
            predict_hybrid(view, model, u, i),
        ),
        _ => (None, None, None),
    };
    let fallback = FallbackChain {
        user_mean: u.map(|u| base.user_mean(u)),
        item_mean: i.map(|i| base.item_mean(i)),
        global_mean: base.global_mean(),
    };
    fuse(sir, sur, suir, params, &fallback, base.scale())
}
