use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::summary::Standardizer;

/// Indices of the `k` training rows nearest to `x_o` in standardized
/// Euclidean distance, ordered by (distance, index).
pub fn filter_top_k(train_x: &Matrix, x_o: &[f64], k: usize) -> Result<Vec<usize>> {
    if x_o.len() != train_x.cols() {
        return Err(Error::DimensionMismatch { expected: train_x.cols(), got: x_o.len() });
    }
    if k > train_x.rows() {
        return Err(Error::InsufficientSamples { needed: k, got: train_x.rows() });
    }
    let std = Standardizer::fit(train_x);
    let mut target = x_o.to_vec();
    std.standardize_in_place(&mut target);
    let mut row = vec![0.0; train_x.cols()];
    let mut keyed: Vec<(f64, usize)> = train_x
        .row_iter()
        .enumerate()
        .map(|(i, r)| {
            row.copy_from_slice(r);
            std.standardize_in_place(&mut row);
            (row.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < keyed.len() && k > 0 {
        keyed.select_nth_unstable_by(k - 1, cmp);
    }
    keyed.truncate(k);
    keyed.sort_by(cmp);
    Ok(keyed.into_iter().map(|(_, i)| i).collect())
}
