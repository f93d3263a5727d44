use crate::dataset::{is_missing, Dataset};
use crate::error::{Error, Result};

/// Bin id reserved for missing values.
pub const MISSING_BIN: u16 = u16::MAX;

/// Column-major binned copy of a dataset.
///
/// Feature `j` has cut points `cuts[j]`; a present value `x` lands in bin
/// `#{c in cuts[j] : c <= x}`, so "bin < k" is equivalent to `x < cuts[j][k-1]`.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    n_rows: usize,
    cuts: Vec<Vec<f64>>,
    bins: Vec<u16>,
}

impl BinnedMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub fn cuts(&self, feature: usize) -> &[f64] {
        &self.cuts[feature]
    }

    /// Number of bins for present values of `feature`.
    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    pub fn column(&self, feature: usize) -> &[u16] {
        &self.bins[feature * self.n_rows..(feature + 1) * self.n_rows]
    }

    #[inline]
    pub fn bin(&self, row: usize, feature: usize) -> u16 {
        self.bins[feature * self.n_rows + row]
    }

    pub fn missing_count(&self, feature: usize) -> usize {
        self.column(feature).iter().filter(|&&b| b == MISSING_BIN).count()
    }
}

fn cut_points(mut present: Vec<f64>, n_bins: usize) -> Vec<f64> {
    if present.is_empty() {
        return Vec::new();
    }
    present.sort_by(f64::total_cmp);
    let mut distinct = present.clone();
    distinct.dedup();
    if distinct.len() <= n_bins {
        return distinct[1..].to_vec();
    }
    let n = present.len();
    let min = present[0];
    let mut cuts: Vec<f64> = (1..n_bins)
        .map(|q| present[(q * n / n_bins).min(n - 1)])
        .filter(|&c| c > min)
        .collect();
    cuts.dedup();
    cuts
}

/// Bins every feature at quantiles of its present values. Columns with at
/// most `n_bins` distinct values get one bin per value, so split search is
/// exact there. Missing values go to [`MISSING_BIN`].
pub fn build_histograms(data: &Dataset, n_bins: usize) -> Result<BinnedMatrix> {
    if n_bins < 2 || n_bins >= MISSING_BIN as usize {
        return Err(Error::invalid(format!("n_bins {n_bins} outside [2, 65534]")));
    }
    let n = data.len();
    let m = data.n_features();
    let mut cuts = Vec::with_capacity(m);
    let mut bins = vec![0u16; n * m];
    for j in 0..m {
        let col = data.column(j);
        let c = cut_points(col.iter().copied().filter(|v| !is_missing(*v)).collect(), n_bins);
        let out = &mut bins[j * n..(j + 1) * n];
        for (slot, v) in out.iter_mut().zip(&col) {
            *slot = if is_missing(*v) {
                MISSING_BIN
            } else {
                c.partition_point(|cut| cut <= v) as u16
            };
        }
        cuts.push(c);
    }
    Ok(BinnedMatrix { n_rows: n, cuts, bins })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_column(values: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
        Dataset::from_rows(&rows, &vec![0; values.len()]).unwrap()
    }

    #[test]
    fn quantile_edges() {
        let d = single_column(&(1..=1000).map(f64::from).collect::<Vec<_>>());
        let b = build_histograms(&d, 4).unwrap();
        assert_eq!(b.cuts(0), &[251.0, 501.0, 751.0]);
        for (i, &bin) in b.column(0).iter().enumerate() {
            assert_eq!(bin as usize, i / 250);
        }
    }

    #[test]
    fn missing_bucket_and_constant_column() {
        let vals: Vec<f64> = (0..10).map(|i| if i < 4 { f64::NAN } else { i as f64 }).collect();
        let b = build_histograms(&single_column(&vals), 255).unwrap();
        assert_eq!(b.missing_count(0), 4);
        let c = build_histograms(&single_column(&[3.0; 6]), 255).unwrap();
        assert!(c.cuts(0).is_empty());
        assert_eq!(c.n_bins(0), 1);
        assert!(build_histograms(&single_column(&[1.0]), 1).is_err());
    }

    #[test]
    fn exact_bins_when_few_distinct() {
        let b = build_histograms(&single_column(&[5.0, 1.0, 3.0, 3.0]), 255).unwrap();
        assert_eq!(b.cuts(0), &[3.0, 5.0]);
        assert_eq!(b.column(0), &[2, 0, 1, 1]);
    }
}
