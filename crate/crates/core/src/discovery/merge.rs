use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CandidateMotif, DiscoveredMotif};
use crate::dissimilarity::{nested_min_sq, DistanceParams};
use crate::error::{Error, Result};
use crate::stats::{mean_sd, quantile_type1};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeParams {
    /// Quantile of the pooled candidate-to-member distances giving `R_all`.
    pub r_all_quantile: f64,
    /// The dendrogram is cut at `cut_factor * R_all`.
    pub cut_factor: f64,
    /// Groups whose longest/shortest center ratio exceeds this keep one
    /// representative per length stratum.
    pub length_split_ratio: f64,
    pub radius: RadiusRule,
}

/// How a group's search radius is derived from its candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RadiusRule {
    /// `mean + sd_factor * SD` of the pooled member distances.
    MeanSd { sd_factor: f64 },
    /// Decision boundary of a `k`-nearest-neighbour vote separating member
    /// from non-member distances, pooled over every candidate in the group
    /// and every curve. A distance is member-like when at least `votes` of
    /// its neighbours are members.
    Knn { k: usize, votes: f64 },
}

impl Default for RadiusRule {
    fn default() -> Self {
        RadiusRule::Knn { k: 3, votes: 0.5 }
    }
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams {
            r_all_quantile: 0.25,
            cut_factor: 2.0,
            length_split_ratio: 1.5,
            radius: RadiusRule::default(),
        }
    }
}

/// Agglomerative complete-linkage clustering of a symmetric distance matrix,
/// merging while the closest pair of groups is within `height`. Groups are
/// returned sorted, ordered by their smallest index.
pub fn complete_linkage(dist: &[Vec<f64>], height: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = (0..dist.len()).map(|i| vec![i]).collect();
    let link = |a: &[usize], b: &[usize]| {
        a.iter()
            .flat_map(|&i| b.iter().map(move |&j| dist[i][j]))
            .fold(0.0f64, |m, d| if d.is_nan() { f64::INFINITY } else { m.max(d) })
    };
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let d = link(&groups[a], &groups[b]);
                if d <= height && best.is_none_or(|(bd, ..)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        let moved = groups.remove(b);
        groups[a].extend(moved);
    }
    for g in groups.iter_mut() {
        g.sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Distance between two candidates: the shorter center slid inside the
/// longer one at its best offset. Infinite when nothing is admissible.
fn candidate_distance(a: &CandidateMotif, b: &CandidateMotif, dist: &DistanceParams) -> f64 {
    nested_min_sq(a.center.track(), b.center.track(), dist).map_or(f64::INFINITY, |(_, d)| d.max(0.0).sqrt())
}

fn mean_member_dist(c: &CandidateMotif) -> f64 {
    c.members.iter().map(|m| m.dist).sum::<f64>() / c.members.len().max(1) as f64
}

/// Upper edge of the member-like region: midway between the largest
/// distance voted member-like and the next pooled distance. `points` must be
/// sorted by distance; each point counts itself among its `k` neighbours.
pub(crate) fn knn_boundary(points: &[(f64, bool)], k: usize, votes: f64) -> f64 {
    let n = points.len();
    let k = k.clamp(1, n.max(1));
    let member_like = |j: usize| {
        let (mut lo, mut hi) = (j, j + 1);
        while hi - lo < k {
            let take_low = hi == n || (lo > 0 && points[j].0 - points[lo - 1].0 <= points[hi].0 - points[j].0);
            if take_low {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        let yes = (lo..hi).filter(|&i| points[i].1).count();
        yes as f64 >= votes * k as f64
    };
    match (0..n).rev().find(|&j| member_like(j)) {
        Some(j) if j + 1 < n => 0.5 * (points[j].0 + points[j + 1].0),
        Some(j) => points[j].0,
        None => 0.0,
    }
}

fn group_radius(stratum: &[usize], cands: &[CandidateMotif], rule: RadiusRule) -> f64 {
    let r = match rule {
        RadiusRule::MeanSd { sd_factor } => {
            let pooled: Vec<f64> = stratum
                .iter()
                .flat_map(|&i| cands[i].members.iter().map(|m| m.dist))
                .collect();
            let (mean, sd) = mean_sd(&pooled).unwrap_or((0.0, 0.0));
            mean + sd_factor * sd
        }
        RadiusRule::Knn { k, votes } => {
            let mut points: Vec<(f64, bool)> = stratum
                .iter()
                .flat_map(|&i| {
                    let c = &cands[i];
                    c.curve_dists
                        .iter()
                        .enumerate()
                        .filter(|(_, d)| d.is_finite())
                        .map(move |(j, &d)| (d, c.members.iter().any(|m| m.curve_index == j)))
                })
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            knn_boundary(&points, k, votes)
        }
    };
    r.max(f64::MIN_POSITIVE)
}

/// Splits a group into strata of similar center length.
fn strata(group: &[usize], cands: &[CandidateMotif], ratio: f64) -> Vec<Vec<usize>> {
    let mut sorted = group.to_vec();
    sorted.sort_by_key(|&i| (cands[i].center.len(), i));
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut base_len = 0usize;
    for i in sorted {
        let len = cands[i].center.len();
        match out.last_mut() {
            Some(s) if len as f64 <= ratio * base_len as f64 => s.push(i),
            _ => {
                base_len = len;
                out.push(vec![i]);
            }
        }
    }
    out
}

/// Groups near-duplicate candidates and returns one motif per group (or per
/// length stratum) together with `R_all`. Occurrences are left empty.
pub fn merge(
    cands: &[CandidateMotif],
    params: &MergeParams,
    dist: &DistanceParams,
) -> Result<(Vec<DiscoveredMotif>, f64)> {
    if cands.is_empty() {
        return Err(Error::InvalidParameter("nothing to merge".into()));
    }
    let n = cands.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| candidate_distance(&cands[a], &cands[b], dist))
        .collect();
    let mut matrix = vec![vec![0.0; n]; n];
    for (&(a, b), v) in pairs.iter().zip(vals) {
        matrix[a][b] = v;
        matrix[b][a] = v;
    }
    let r_all = quantile_type1(
        cands.iter().flat_map(|c| c.members.iter().map(|m| m.dist)),
        params.r_all_quantile,
    )
    .unwrap_or(0.0);
    let groups = complete_linkage(&matrix, params.cut_factor * r_all);

    let mut motifs = Vec::new();
    for group in &groups {
        for stratum in strata(group, cands, params.length_split_ratio) {
            let rep = *stratum
                .iter()
                .min_by(|&&a, &&b| {
                    cands[b]
                        .support
                        .cmp(&cands[a].support)
                        .then(mean_member_dist(&cands[a]).total_cmp(&mean_member_dist(&cands[b])))
                        .then(a.cmp(&b))
                })
                .expect("strata are non-empty");
            motifs.push(DiscoveredMotif {
                id: motifs.len(),
                center: cands[rep].center.clone(),
                radius: group_radius(&stratum, cands, params.radius),
                occurrences: Vec::new(),
                group: stratum.clone(),
                representative: rep,
                provenance: cands[rep].provenance.clone(),
            });
        }
    }
    Ok((motifs, r_all))
}
