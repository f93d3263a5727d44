use std::ops::{Add, AddAssign, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::histogram::{BinnedMatrix, MISSING_BIN};

/// Additive per-bin statistic. Boosting stores (gradient, hessian);
/// CART stores (weighted positives, weight).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStat {
    pub a: f64,
    pub b: f64,
    pub n: u32,
}

impl Add for BinStat {
    type Output = BinStat;
    fn add(self, o: BinStat) -> BinStat {
        BinStat {
            a: self.a + o.a,
            b: self.b + o.b,
            n: self.n + o.n,
        }
    }
}

impl AddAssign for BinStat {
    fn add_assign(&mut self, o: BinStat) {
        *self = *self + o;
    }
}

impl Sub for BinStat {
    type Output = BinStat;
    fn sub(self, o: BinStat) -> BinStat {
        BinStat {
            a: self.a - o.a,
            b: self.b - o.b,
            n: self.n - o.n,
        }
    }
}

/// Second-order split gain:
/// `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)] − γ`.
pub fn split_gain(g_l: f64, h_l: f64, g_r: f64, h_r: f64, lambda: f64, gamma: f64) -> f64 {
    let g = g_l + g_r;
    let h = h_l + h_r;
    0.5 * (g_l * g_l / (h_l + lambda) + g_r * g_r / (h_r + lambda) - g * g / (h + lambda)) - gamma
}

pub(crate) trait Criterion: Sync {
    fn gain(&self, left: &BinStat, right: &BinStat) -> f64;
    /// Smallest `b` mass allowed in a child.
    fn min_child_weight(&self) -> f64;
    fn min_rows(&self) -> u32 {
        1
    }
    /// A split is kept only when its gain exceeds this.
    fn gain_floor(&self, _parent: &BinStat) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

impl Criterion for SplitParams {
    fn gain(&self, l: &BinStat, r: &BinStat) -> f64 {
        split_gain(l.a, l.b, r.a, r.b, self.lambda, self.gamma)
    }

    fn min_child_weight(&self) -> f64 {
        self.min_child_weight
    }
}

/// Weighted Gini impurity decrease.
pub(crate) struct Gini {
    pub min_child_weight: f64,
    pub min_rows: u32,
}

impl Criterion for Gini {
    fn gain(&self, l: &BinStat, r: &BinStat) -> f64 {
        let (a, b) = (l.a + r.a, l.b + r.b);
        2.0 * (l.a * l.a / l.b + r.a * r.a / r.b - a * a / b)
    }

    fn min_child_weight(&self) -> f64 {
        self.min_child_weight
    }

    fn min_rows(&self) -> u32 {
        self.min_rows
    }

    fn gain_floor(&self, parent: &BinStat) -> f64 {
        1e-10 * parent.b
    }
}

/// A chosen split. Rows with bin < `bin` (equivalently `x < threshold`) go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitInfo {
    pub feature: usize,
    pub bin: u16,
    pub threshold: f64,
    pub default_left: bool,
    pub gain: f64,
    pub left: BinStat,
    pub right: BinStat,
}

pub(crate) struct FeatureHist {
    pub bins: Vec<BinStat>,
    pub missing: BinStat,
}

/// Accumulates the per-bin statistics of `rows` for each listed feature.
pub(crate) fn node_histograms(
    binned: &BinnedMatrix,
    rows: &[u32],
    a: &[f64],
    b: &[f64],
    features: &[usize],
) -> Vec<FeatureHist> {
    features
        .par_iter()
        .map(|&f| {
            let col = binned.column(f);
            let mut bins = vec![BinStat::default(); binned.n_bins(f)];
            let mut missing = BinStat::default();
            for &r in rows {
                let r = r as usize;
                let s = BinStat { a: a[r], b: b[r], n: 1 };
                match col[r] {
                    MISSING_BIN => missing += s,
                    bin => bins[bin as usize] += s,
                }
            }
            FeatureHist { bins, missing }
        })
        .collect()
}

/// Scans every (feature, cut, default direction) candidate. Ties keep the
/// lower feature, then the lower cut, then missing-left.
pub(crate) fn best_from_histograms(
    binned: &BinnedMatrix,
    hists: &[FeatureHist],
    features: &[usize],
    crit: &dyn Criterion,
) -> Option<SplitInfo> {
    let mut best: Option<SplitInfo> = None;
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by_key(|&i| features[i]);
    for i in order {
        let f = features[i];
        let h = &hists[i];
        let present: BinStat = h.bins.iter().fold(BinStat::default(), |acc, s| acc + *s);
        let parent = present + h.missing;
        let floor = crit.gain_floor(&parent);
        let mut left = BinStat::default();
        for k in 1..h.bins.len() {
            left += h.bins[k - 1];
            let right = present - left;
            if left.n == 0 || right.n == 0 {
                continue;
            }
            for default_left in [true, false] {
                let (l, r) = if default_left {
                    (left + h.missing, right)
                } else {
                    (left, right + h.missing)
                };
                if l.n < crit.min_rows()
                    || r.n < crit.min_rows()
                    || l.b < crit.min_child_weight()
                    || r.b < crit.min_child_weight()
                {
                    continue;
                }
                let gain = crit.gain(&l, &r);
                if gain > floor && best.is_none_or(|b| gain > b.gain) {
                    best = Some(SplitInfo {
                        feature: f,
                        bin: k as u16,
                        threshold: binned.cuts(f)[k - 1],
                        default_left,
                        gain,
                        left: l,
                        right: r,
                    });
                }
            }
        }
    }
    best
}

/// Best second-order split of the node holding `rows`, or `None` when no
/// candidate has positive gain.
pub fn best_split(
    binned: &BinnedMatrix,
    rows: &[u32],
    grad: &[f64],
    hess: &[f64],
    params: &SplitParams,
) -> Option<SplitInfo> {
    let features: Vec<usize> = (0..binned.n_features()).collect();
    let hists = node_histograms(binned, rows, grad, hess, &features);
    best_from_histograms(binned, &hists, &features, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_hand_values() {
        // y = {0, 1} at p = 0.5: g = p - y, h = p(1-p)
        assert_eq!(split_gain(0.5, 0.25, -0.5, 0.25, 0.0, 0.0), 1.0);
        assert_eq!(split_gain(0.3, 0.2, 0.3, 0.2, 1.0, 0.25), -0.25 + 0.5 * (0.09 / 1.2 * 2.0 - 0.36 / 1.4));
        assert!(split_gain(0.5, 0.25, -0.5, 0.25, 0.0, 10.0) < 0.0);
    }

    #[test]
    fn symmetric_split_adds_nothing() {
        let g = split_gain(0.4, 0.3, 0.4, 0.3, 0.0, 0.7);
        // (0.16/0.3)*2 - 0.64/0.6 = 0 analytically
        assert!((g + 0.7).abs() < 1e-12);
    }

    #[test]
    fn gini_gain_matches_impurity_decrease() {
        let l = BinStat { a: 3.0, b: 4.0, n: 4 };
        let r = BinStat { a: 1.0, b: 6.0, n: 6 };
        let gini = |a: f64, b: f64| 2.0 * (a / b) * (1.0 - a / b);
        let expect = 10.0 * gini(4.0, 10.0) - 4.0 * gini(3.0, 4.0) - 6.0 * gini(1.0, 6.0);
        let crit = Gini { min_child_weight: 0.0, min_rows: 1 };
        assert!((crit.gain(&l, &r) - expect).abs() < 1e-12);
    }
}
