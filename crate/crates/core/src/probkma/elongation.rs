use serde::{Deserialize, Serialize};

use super::updates::{center_for_cluster, row_distances, PENALTY_FACTOR};
use super::{Center, ProbKmaParams, ProbKmaState};
use crate::curveset::CurveSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElongationOutcome {
    pub cluster: usize,
    pub iter: usize,
    pub old_len: usize,
    pub new_len: usize,
    pub j_old: f64,
    pub j_new: f64,
    /// Accepted (left, right) extensions in order.
    pub steps: Vec<(usize, usize)>,
}

fn penalised(raw: Vec<Option<f64>>) -> Vec<f64> {
    let max = raw.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let pen = if max > 0.0 { PENALTY_FACTOR * max } else { 1.0 };
    raw.into_iter().map(|d| d.unwrap_or(pen)).collect()
}

fn candidate_sides(len: usize, c_max: usize, delta: usize) -> Vec<(usize, usize)> {
    let room = c_max.saturating_sub(len);
    if room == 0 {
        return Vec::new();
    }
    let one = delta.min(room);
    let mut out = vec![(one, 0), (0, one)];
    let both = delta.min(room / 2);
    if both > 0 {
        out.push((both, both));
    }
    out
}

/// Tries to widen center `k` to the left, right or both sides, keeping the
/// aligned correspondence of existing points. A candidate is acceptable when
/// its cluster objective stays within `(1 + delta_jmk_frac)` of the current
/// one; the best acceptable candidate is applied and the search repeats.
pub fn elongate(
    cs: &CurveSet,
    st: &mut ProbKmaState,
    params: &ProbKmaParams,
    k: usize,
) -> Result<ElongationOutcome> {
    if k >= st.k() {
        return Err(Error::InvalidParameter(format!("cluster index {k} out of range")));
    }
    let weights: Vec<f64> = st.p[k].iter().map(|&x| x.powf(params.m)).collect();
    let j_of = |d: &[f64]| weights.iter().zip(d).map(|(w, d)| w * d).sum::<f64>();
    let old_len = st.centers[k].len();
    let j_old = j_of(&st.dists[k]);
    let mut len = old_len;
    let mut j_cur = j_old;
    let mut steps = Vec::new();

    for _ in 0..params.elongation_max_tries {
        let delta = ((params.elongation_step_frac * len as f64).round() as usize).max(1);
        let sides = candidate_sides(len, params.c_max, delta);
        let mut best: Option<(f64, (usize, usize), Center, Vec<i64>, Vec<f64>)> = None;
        for (left, right) in sides {
            let new_len = len + left + right;
            let shifts: Vec<i64> = st.shifts[k].iter().map(|&s| s - left as i64).collect();
            let center = center_for_cluster(cs, &weights, &shifts, new_len, params.dist.alpha);
            let dists = penalised(row_distances(cs, &center, &shifts, &params.dist));
            let j = j_of(&dists);
            let acceptable = j <= (1.0 + params.delta_jmk_frac) * j_cur;
            let better = best.as_ref().is_none_or(|(bj, ..)| j < *bj);
            if acceptable && better {
                best = Some((j, (left, right), center, shifts, dists));
            }
        }
        let Some((j, side, center, shifts, dists)) = best else {
            break;
        };
        len = center.len();
        st.centers[k] = center;
        st.shifts[k] = shifts;
        st.dists[k] = dists;
        j_cur = j;
        steps.push(side);
    }

    Ok(ElongationOutcome {
        cluster: k,
        iter: st.iter,
        old_len,
        new_len: len,
        j_old,
        j_new: j_cur,
        steps,
    })
}
