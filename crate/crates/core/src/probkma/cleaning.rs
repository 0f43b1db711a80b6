use crate::stats::quantile_type1;

/// Hard memberships: `true` where the distance is at most the type-1
/// quantile of order `1/K` over all `K × N` distances. A curve may end up in
/// no cluster or in several.
pub fn clean(dists: &[Vec<f64>]) -> Vec<Vec<bool>> {
    let k = dists.len();
    if k == 0 {
        return Vec::new();
    }
    let threshold = quantile_type1(dists.iter().flatten().cloned(), 1.0 / k as f64);
    dists
        .iter()
        .map(|row| {
            row.iter()
                .map(|&d| threshold.is_some_and(|q| d <= q))
                .collect()
        })
        .collect()
}
