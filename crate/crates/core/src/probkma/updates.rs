use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use super::cleaning::clean;
use super::elongation::elongate;
use super::{Aggregation, Center, ProbKmaParams, ProbKmaState};
use crate::curveset::{Curve, CurveSet, OwnedWindow};
use crate::dissimilarity::{best_shift, d_alpha_sq_tracks, profile_tracks, DistanceParams, Track};
use crate::error::{Error, Result};
use crate::stats::derive_seed;
use crate::stats::quantile_type1;

/// Cap applied to a Bhattacharyya distance whose coefficient is zero.
pub const BC_CAP: f64 = 1e3;

/// Multiplier turning the largest admissible distance into the penalty for
/// inadmissible (curve, center, shift) triples.
pub const PENALTY_FACTOR: f64 = 10.0;

pub(crate) enum Window<'a> {
    Borrowed(Track<'a>),
    Owned(OwnedWindow),
}

impl Window<'_> {
    pub(crate) fn track(&self) -> Track<'_> {
        match self {
            Window::Borrowed(t) => *t,
            Window::Owned(w) => w.into(),
        }
    }
}

/// Window of `len` points at `start`; falls back to a padded copy when the
/// window hangs off the curve.
pub(crate) fn window(c: &Curve, start: i64, len: usize) -> Window<'_> {
    if start >= 0 && start as usize + len <= c.n_points() {
        Window::Borrowed(Track::from(c).slice(start as usize, len))
    } else {
        Window::Owned(c.padded_window(start, len))
    }
}

fn row_finite(xs: &[f64]) -> bool {
    xs.iter().all(|v| v.is_finite())
}

fn usable(tr: &Track<'_>, t: usize, alpha: f64) -> bool {
    tr.mask[t] && (alpha == 0.0 || row_finite(&tr.deriv[t * tr.d..(t + 1) * tr.d]))
}

/// Gap-aware weighted average of the shifted windows of all curves. Each
/// curve's weight `weights[i]` is spread over its usable points.
pub(crate) fn center_for_cluster(
    cs: &CurveSet,
    weights: &[f64],
    shifts: &[i64],
    len: usize,
    alpha: f64,
) -> Center {
    let d = cs.dim();
    let mut num = vec![0.0; len * d];
    let mut den = vec![0.0; len];
    let mut dnum = vec![0.0; len * d];
    let mut dden = vec![0.0; len];
    for (i, curve) in cs.curves.iter().enumerate() {
        let w = weights[i];
        if w <= 0.0 {
            continue;
        }
        let win = window(curve, shifts[i], len);
        let tr = win.track();
        let count = (0..len).filter(|&t| usable(&tr, t, alpha)).count();
        if count == 0 {
            continue;
        }
        let wi = w / count as f64;
        for t in 0..len {
            if !usable(&tr, t, alpha) {
                continue;
            }
            den[t] += wi;
            for j in 0..d {
                num[t * d + j] += wi * tr.values[t * d + j];
            }
            let drow = &tr.deriv[t * d..(t + 1) * d];
            if row_finite(drow) {
                dden[t] += wi;
                for j in 0..d {
                    dnum[t * d + j] += wi * drow[j];
                }
            }
        }
    }
    let mut values = vec![f64::NAN; len * d];
    let mut deriv = vec![f64::NAN; len * d];
    let mut defined = vec![false; len];
    for t in 0..len {
        if den[t] > 0.0 {
            defined[t] = true;
            for j in 0..d {
                values[t * d + j] = num[t * d + j] / den[t];
            }
        }
        if dden[t] > 0.0 {
            for j in 0..d {
                deriv[t * d + j] = dnum[t * d + j] / dden[t];
            }
        }
    }
    Center::new(d, values, deriv, defined)
}

/// Recomputes every center from memberships and shifts. `lengths[k]` gives
/// the window length of center `k`.
pub fn update_centers(
    cs: &CurveSet,
    p: &[Vec<f64>],
    shifts: &[Vec<i64>],
    lengths: &[usize],
    params: &ProbKmaParams,
) -> Vec<Center> {
    (0..p.len())
        .into_par_iter()
        .map(|k| {
            let w: Vec<f64> = p[k].iter().map(|&x| x.powf(params.m)).collect();
            center_for_cluster(cs, &w, &shifts[k], lengths[k], params.dist.alpha)
        })
        .collect()
}

fn penalty_for(max_admissible: f64) -> f64 {
    if max_admissible > 0.0 && max_admissible.is_finite() {
        PENALTY_FACTOR * max_admissible
    } else {
        1.0
    }
}

fn fill_penalty(raw: Vec<Vec<Option<f64>>>) -> Vec<Vec<f64>> {
    let max = raw
        .iter()
        .flatten()
        .flatten()
        .fold(0.0f64, |a, &b| a.max(b));
    let pen = penalty_for(max);
    raw.into_iter()
        .map(|row| row.into_iter().map(|d| d.unwrap_or(pen)).collect())
        .collect()
}

/// Squared distances of one center against every curve at fixed shifts;
/// `None` marks inadmissible windows.
pub(crate) fn row_distances(
    cs: &CurveSet,
    center: &Center,
    shifts: &[i64],
    dist: &DistanceParams,
) -> Vec<Option<f64>> {
    cs.curves
        .iter()
        .zip(shifts)
        .map(|(c, &s)| {
            let win = window(c, s, center.len());
            d_alpha_sq_tracks(win.track(), center.track(), dist).ok()
        })
        .collect()
}

/// Squared distances at the given shifts, with inadmissible entries replaced
/// by the penalty value.
pub fn pair_distances(
    cs: &CurveSet,
    centers: &[Center],
    shifts: &[Vec<i64>],
    dist: &DistanceParams,
) -> Vec<Vec<f64>> {
    let raw: Vec<Vec<Option<f64>>> = centers
        .par_iter()
        .zip(shifts.par_iter())
        .map(|(c, s)| row_distances(cs, c, s, dist))
        .collect();
    fill_penalty(raw)
}

pub fn weighted_objective(p: &[Vec<f64>], dists: &[Vec<f64>], m: f64) -> f64 {
    p.iter()
        .zip(dists)
        .map(|(pk, dk)| pk.iter().zip(dk).map(|(&x, &d)| x.powf(m) * d).sum::<f64>())
        .sum()
}

fn check_shape(cs: &CurveSet, st: &ProbKmaState) -> Result<()> {
    let k = st.centers.len();
    let ok = st.p.len() == k
        && st.shifts.len() == k
        && st.p.iter().all(|r| r.len() == cs.len())
        && st.shifts.iter().all(|r| r.len() == cs.len());
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(
            "state shape does not match the curve set".to_string(),
        ))
    }
}

/// Generalised least-squares functional at the state's memberships, shifts
/// and centers.
pub fn objective(cs: &CurveSet, st: &ProbKmaState, params: &ProbKmaParams) -> Result<f64> {
    check_shape(cs, st)?;
    let d = pair_distances(cs, &st.centers, &st.shifts, &params.dist);
    Ok(weighted_objective(&st.p, &d, params.m))
}

/// Contribution of cluster `k` to [`objective`].
pub fn objective_k(cs: &CurveSet, st: &ProbKmaState, params: &ProbKmaParams, k: usize) -> Result<f64> {
    check_shape(cs, st)?;
    if k >= st.centers.len() {
        return Err(Error::InvalidParameter(format!("cluster index {k} out of range")));
    }
    let d = pair_distances(cs, &st.centers, &st.shifts, &params.dist);
    Ok(weighted_objective(&st.p[k..=k], &d[k..=k], params.m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub shifts: Vec<Vec<i64>>,
    pub dists: Vec<Vec<f64>>,
    /// Number of (cluster, curve) pairs without any admissible shift.
    pub inadmissible: usize,
}

/// Best in-range shift of every curve against every center. Pairs without an
/// admissible shift keep their previous shift and receive the penalty.
pub fn align(
    cs: &CurveSet,
    centers: &[Center],
    prev_shifts: &[Vec<i64>],
    dist: &DistanceParams,
) -> Alignment {
    let n = cs.len();
    let k = centers.len();
    let cells: Vec<Option<(usize, f64)>> = (0..k * n)
        .into_par_iter()
        .map(|idx| {
            let (kk, i) = (idx / n, idx % n);
            let prof = profile_tracks(Track::from(&cs.curves[i]), centers[kk].track(), dist);
            best_shift(&prof).ok()
        })
        .collect();
    let mut shifts = prev_shifts.to_vec();
    let mut raw = vec![vec![None; n]; k];
    let mut inadmissible = 0;
    for (idx, cell) in cells.into_iter().enumerate() {
        let (kk, i) = (idx / n, idx % n);
        match cell {
            Some((s, d)) => {
                shifts[kk][i] = s as i64;
                raw[kk][i] = Some(d);
            }
            None => inadmissible += 1,
        }
    }
    Alignment {
        shifts,
        dists: fill_penalty(raw),
        inadmissible,
    }
}

/// Optimal fuzzy memberships for fixed distances. Curves at distance zero
/// from some centers split their mass uniformly over those centers.
pub fn update_memberships(dists: &[Vec<f64>], m: f64) -> Result<Vec<Vec<f64>>> {
    if !(m > 1.0) {
        return Err(Error::InvalidParameter(format!("m must exceed 1, got {m}")));
    }
    let k = dists.len();
    let n = dists.first().map_or(0, Vec::len);
    for row in dists {
        for &d in row {
            if d < 0.0 || d.is_nan() {
                return Err(Error::NegativeDistance(d));
            }
        }
    }
    let expo = 1.0 / (m - 1.0);
    let mut p = vec![vec![0.0; n]; k];
    for i in 0..n {
        let zeros: Vec<usize> = (0..k).filter(|&kk| dists[kk][i] == 0.0).collect();
        if !zeros.is_empty() {
            let share = 1.0 / zeros.len() as f64;
            for kk in zeros {
                p[kk][i] = share;
            }
            continue;
        }
        for kk in 0..k {
            let dk = dists[kk][i];
            let s: f64 = (0..k).map(|l| (dk / dists[l][i]).powf(expo)).sum();
            p[kk][i] = 1.0 / s;
        }
    }
    Ok(p)
}

/// Bhattacharyya distance between two membership rows, each normalised to
/// sum one over curves.
pub fn bhattacharyya_k(p_new: &[f64], p_old: &[f64]) -> Result<f64> {
    if p_new.iter().chain(p_old).any(|&x| x < 0.0 || x.is_nan()) {
        return Err(Error::InvalidParameter("memberships must be non-negative".into()));
    }
    let sa: f64 = p_new.iter().sum();
    let sb: f64 = p_old.iter().sum();
    if sa <= 0.0 || sb <= 0.0 {
        return Err(Error::DegenerateCluster);
    }
    let coef: f64 = p_new
        .iter()
        .zip(p_old)
        .map(|(a, b)| ((a / sa) * (b / sb)).sqrt())
        .sum();
    if coef <= 0.0 {
        return Ok(BC_CAP);
    }
    Ok((-coef.ln()).clamp(0.0, BC_CAP))
}

pub fn stopping_distance(p_new: &[Vec<f64>], p_old: &[Vec<f64>], agg: Aggregation) -> Result<f64> {
    let bc = p_new
        .iter()
        .zip(p_old)
        .map(|(a, b)| bhattacharyya_k(a, b))
        .collect::<Result<Vec<f64>>>()?;
    Ok(aggregate(&bc, agg))
}

fn aggregate(values: &[f64], agg: Aggregation) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    match agg {
        Aggregation::Max => values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregation::Quantile(q) => quantile_type1(values.iter().cloned(), q).unwrap_or(0.0),
    }
}

/// Start indices of windows of `len` points with enough usable points on
/// their own to be scored.
fn admissible_starts(c: &Curve, len: usize, dist: &DistanceParams) -> Vec<usize> {
    if len > c.n_points() {
        return Vec::new();
    }
    let tr = Track::from(c);
    let need = dist.required_points(len);
    let ok: Vec<bool> = (0..c.n_points()).map(|t| usable(&tr, t, dist.alpha)).collect();
    let mut count = ok[..len].iter().filter(|&&b| b).count();
    let mut out = Vec::new();
    for s in 0..=c.n_points() - len {
        if s > 0 {
            count -= ok[s - 1] as usize;
            count += ok[s + len - 1] as usize;
        }
        if count >= need {
            out.push(s);
        }
    }
    out
}

fn check_inputs(cs: &CurveSet, params: &ProbKmaParams) -> Result<()> {
    params.validate()?;
    if params.dist.weights.len() != cs.dim() {
        return Err(Error::DimensionMismatch {
            expected: cs.dim(),
            got: params.dist.weights.len(),
        });
    }
    if params.dist.alpha > 0.0 && !cs.has_derivatives() {
        return Err(Error::MissingDerivatives);
    }
    Ok(())
}

/// Random admissible starting shifts, Dirichlet(1, ..., 1) memberships and
/// the centers they induce. Deterministic in `params.seed`.
pub fn initialize(cs: &CurveSet, params: &ProbKmaParams) -> Result<ProbKmaState> {
    check_inputs(cs, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (k, n) = (params.k, cs.len());
    let mut shifts = vec![vec![0i64; n]; k];
    for kk in 0..k {
        for (i, c) in cs.curves.iter().enumerate() {
            let starts = admissible_starts(c, params.c_min[kk], &params.dist);
            if starts.is_empty() {
                return Err(Error::NoAdmissibleWindow {
                    curve: c.id.clone(),
                    len: params.c_min[kk],
                });
            }
            shifts[kk][i] = starts[rng.random_range(0..starts.len())] as i64;
        }
    }
    let mut p = vec![vec![0.0; n]; k];
    for i in 0..n {
        let g: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1) + f64::MIN_POSITIVE).collect();
        let s: f64 = g.iter().sum();
        for kk in 0..k {
            p[kk][i] = g[kk] / s;
        }
    }
    let centers = update_centers(cs, &p, &shifts, &params.c_min, params);
    let dists = pair_distances(cs, &centers, &shifts, &params.dist);
    let j0 = weighted_objective(&p, &dists, params.m);
    Ok(ProbKmaState {
        p,
        shifts,
        dists,
        centers,
        objective_trace: vec![j0],
        iter: 0,
        converged: false,
        cleaned_p: None,
        diagnostics: Default::default(),
    })
}

/// Re-seeds every cluster with no membership mass from the window of the
/// curve farthest from all centers. Returns the number of clusters touched.
fn reseed_dead(cs: &CurveSet, st: &mut ProbKmaState, params: &ProbKmaParams) -> Result<usize> {
    let mut touched = 0;
    for _ in 0..st.k() {
        let dead: Vec<usize> = (0..st.k())
            .filter(|&kk| st.p[kk].iter().sum::<f64>() <= 0.0)
            .collect();
        let Some(&kk) = dead.first() else { break };
        let worst = (0..st.n())
            .max_by(|&a, &b| {
                let ma = (0..st.k()).map(|l| st.dists[l][a]).fold(f64::INFINITY, f64::min);
                let mb = (0..st.k()).map(|l| st.dists[l][b]).fold(f64::INFINITY, f64::min);
                ma.total_cmp(&mb).then(b.cmp(&a))
            })
            .unwrap_or(0);
        let len = st.centers[kk].len();
        let c = &cs.curves[worst];
        let start = st.shifts[kk][worst].clamp(0, c.n_points().saturating_sub(len) as i64);
        st.centers[kk] = Center::from_track(window(c, start, len).track());
        let realigned = align(cs, &st.centers, &st.shifts, &params.dist);
        st.shifts[kk] = realigned.shifts[kk].clone();
        st.dists = realigned.dists;
        st.p = update_memberships(&st.dists, params.m)?;
        touched += 1;
    }
    st.diagnostics.reseeds += touched;
    Ok(touched)
}

/// Runs the alternating minimisation from a seeded initialisation.
pub fn run(cs: &CurveSet, params: &ProbKmaParams) -> Result<ProbKmaState> {
    let mut st = initialize(cs, params)?;
    let mut elongation_active = params.c_min.iter().any(|&c| c < params.c_max);
    while st.iter < params.max_iter {
        st.iter += 1;
        let lengths = st.lengths();
        st.centers = update_centers(cs, &st.p, &st.shifts, &lengths, params);
        let al = align(cs, &st.centers, &st.shifts, &params.dist);
        st.shifts = al.shifts;
        st.dists = al.dists;
        let p_old = std::mem::replace(&mut st.p, update_memberships(&st.dists, params.m)?);
        let reseeded = reseed_dead(cs, &mut st, params)? > 0;
        let bc = stopping_distance(&st.p, &p_old, params.bc_aggregation)?;
        st.diagnostics.stopping_trace.push(bc);
        st.objective_trace
            .push(weighted_objective(&st.p, &st.dists, params.m));
        if reseeded {
            let t = st.objective_trace.len() - 1;
            st.diagnostics.trace_exempt.push(t);
        }

        let mut changed = false;
        if bc < params.cleaning_trigger * params.tol {
            if elongation_active {
                for kk in 0..st.k() {
                    let out = elongate(cs, &mut st, params, kk)?;
                    if out.new_len != out.old_len {
                        changed = true;
                        st.diagnostics.elongations.push(out);
                    }
                }
                elongation_active = changed;
                if changed {
                    st.dists = pair_distances(cs, &st.centers, &st.shifts, &params.dist);
                    // the next trace entry descends from the elongated state
                    st.diagnostics.trace_exempt.push(st.objective_trace.len());
                }
            }
            st.cleaned_p = Some(clean(&st.dists));
        }
        if bc < params.tol && !changed {
            st.converged = true;
            break;
        }
    }
    st.diagnostics.trace_exempt.dedup();
    st.cleaned_p = Some(clean(&st.dists));
    Ok(st)
}

/// Runs `n_init` seeded initialisations and keeps the one with the lowest
/// final objective. With `n_init == 1` this is [`run`] with `params.seed`;
/// otherwise run `i` uses `derive_seed(params.seed, [i])`. Ties keep the
/// lowest index.
pub fn run_best_of(cs: &CurveSet, params: &ProbKmaParams, n_init: usize) -> Result<ProbKmaState> {
    if n_init == 0 {
        return Err(Error::InvalidParameter("n_init must be at least 1".into()));
    }
    if n_init == 1 {
        return run(cs, params);
    }
    let states: Vec<ProbKmaState> = (0..n_init as u64)
        .into_par_iter()
        .map(|i| {
            let mut p = params.clone();
            p.seed = derive_seed(params.seed, &[i]);
            run(cs, &p)
        })
        .collect::<Result<_>>()?;
    let last = |st: &ProbKmaState| st.objective_trace.last().copied().unwrap_or(f64::INFINITY);
    let best = (0..states.len())
        .min_by(|&a, &b| last(&states[a]).total_cmp(&last(&states[b])).then(a.cmp(&b)))
        .unwrap_or(0);
    Ok(states.into_iter().nth(best).expect("at least one run"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curveset::{estimate_derivatives, Grid};
    use crate::dissimilarity::DistanceParams;

    fn curves(vals: Vec<Vec<f64>>) -> CurveSet {
        let cs = vals
            .into_iter()
            .enumerate()
            .map(|(i, v)| Curve::from_values(format!("c{i}"), v).unwrap())
            .collect();
        estimate_derivatives(CurveSet::new(Grid::default(), cs).unwrap())
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn memberships_hand_values() {
        let p = update_memberships(&[vec![1.0], vec![3.0]], 2.0).unwrap();
        assert!(close(p[0][0], 0.75) && close(p[1][0], 0.25));
        let p = update_memberships(&[vec![2.0], vec![2.0], vec![2.0]], 2.0).unwrap();
        assert!(p.iter().all(|r| close(r[0], 1.0 / 3.0)));
        let p = update_memberships(&[vec![0.0], vec![5.0]], 2.0).unwrap();
        assert_eq!((p[0][0], p[1][0]), (1.0, 0.0));
        let p = update_memberships(&[vec![0.0], vec![0.0], vec![5.0]], 3.0).unwrap();
        assert_eq!((p[0][0], p[1][0], p[2][0]), (0.5, 0.5, 0.0));
        assert!(update_memberships(&[vec![-1.0], vec![1.0]], 2.0).is_err());
        assert!(update_memberships(&[vec![1.0]], 1.0).is_err());
    }

    #[test]
    fn bhattacharyya_values() {
        assert_eq!(bhattacharyya_k(&[0.2, 0.3], &[0.2, 0.3]).unwrap(), 0.0);
        let bc = bhattacharyya_k(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((bc - 0.346_573_590_279_972_6).abs() < 1e-12);
        assert_eq!(bhattacharyya_k(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), BC_CAP);
        assert!(matches!(
            bhattacharyya_k(&[0.0, 0.0], &[0.5, 0.5]),
            Err(Error::DegenerateCluster)
        ));
    }

    #[test]
    fn stopping_aggregations() {
        let same = vec![vec![0.3, 0.7], vec![0.7, 0.3]];
        for agg in [Aggregation::Max, Aggregation::Mean, Aggregation::Quantile(0.5)] {
            assert_eq!(stopping_distance(&same, &same, agg).unwrap(), 0.0);
        }
        assert_eq!(aggregate(&[0.1, 0.3], Aggregation::Max), 0.3);
        assert!(close(aggregate(&[0.1, 0.3], Aggregation::Mean), 0.2));
        assert_eq!(aggregate(&[0.1, 0.3], Aggregation::Quantile(0.5)), 0.1);
    }

    #[test]
    fn objective_single_term_and_decomposition() {
        assert_eq!(weighted_objective(&[vec![1.0]], &[vec![2.5]], 2.0), 2.5);
        assert_eq!(weighted_objective(&[vec![0.5, 0.5]], &[vec![0.0, 0.0]], 2.0), 0.0);
        // 2x2 instance with memberships from the update rule:
        // d = [[1, 4], [3, 1]] -> p col0 = (3/4, 1/4), col1 = (1/5, 4/5)
        // J = (9/16)*1 + (1/16)*3 + (1/25)*4 + (16/25)*1 = 3/4 + 4/5 = 1.55
        let d = vec![vec![1.0, 4.0], vec![3.0, 1.0]];
        let p = update_memberships(&d, 2.0).unwrap();
        assert!(close(weighted_objective(&p, &d, 2.0), 1.55));
        let parts: f64 = (0..2).map(|k| weighted_objective(&p[k..=k], &d[k..=k], 2.0)).sum();
        assert!(close(parts, 1.55));
        // three curves in one cluster: 0.5^2*2 + 1^2*1 + 0.2^2*5 = 0.5 + 1 + 0.2
        let j = weighted_objective(&[vec![0.5, 1.0, 0.2]], &[vec![2.0, 1.0, 5.0]], 2.0);
        assert!(close(j, 1.7));
    }

    #[test]
    fn center_weighting() {
        let cs = curves(vec![vec![1.0, 2.0, 3.0], vec![5.0, 0.0, 1.0]]);
        let one = center_for_cluster(&cs, &[1.0, 0.0], &[0, 0], 3, 0.0);
        assert_eq!(one.values(), cs.curves[0].values());
        let eq = center_for_cluster(&cs, &[1.0, 1.0], &[0, 0], 3, 0.0);
        assert_eq!(eq.values(), &[3.0, 1.0, 2.0]);
        // p = (0.8, 0.2), m = 2: (0.64 x1 + 0.04 x2) / 0.68
        let p = vec![vec![0.8, 0.2]];
        let mut params = ProbKmaParams::new(1, 3, 3, DistanceParams::uniform(1, 0.0));
        params.m = 2.0;
        let c = &update_centers(&cs, &p, &[vec![0, 0]], &[3], &params)[0];
        for t in 0..3 {
            let want = (0.64 * cs.curves[0].values()[t] + 0.04 * cs.curves[1].values()[t]) / 0.68;
            assert!(close(c.values()[t], want));
        }
    }

    #[test]
    fn center_uses_only_valid_points() {
        let nan = f64::NAN;
        let cs = curves(vec![vec![1.0, 2.0, 3.0, 4.0], vec![9.0, 9.0, nan, nan]]);
        let c = center_for_cluster(&cs, &[1.0, 1.0], &[0, 0], 4, 0.0);
        assert_eq!(&c.values()[2..], &[3.0, 4.0]);
        assert!(c.defined_mask().iter().all(|&b| b));
        let c = center_for_cluster(&cs, &[0.0, 1.0], &[0, 0], 4, 0.0);
        assert_eq!(c.defined_mask(), &[true, true, false, false]);
        assert!(c.values()[3].is_nan());
    }

    #[test]
    fn alignment_recovers_offset_and_ties() {
        let vals: Vec<f64> = (0..100).map(|t| ((t as f64) * 0.37).sin() * 3.0 + (t as f64 * 0.05)).collect();
        let cs = curves(vec![vals]);
        let center = Center::from_track(Track::from(&cs.curves[0]).slice(37, 20));
        let dist = DistanceParams::uniform(1, 0.5);
        let al = align(&cs, &[center], &[vec![0]], &dist);
        assert_eq!(al.shifts[0][0], 37);
        assert_eq!(al.dists[0][0], 0.0);

        let flat = curves(vec![vec![2.0; 30]]);
        let center = Center::from_track(Track::from(&flat.curves[0]).slice(5, 10));
        let al = align(&flat, &[center], &[vec![9]], &dist);
        assert_eq!(al.shifts[0][0], 0);
    }

    #[test]
    fn initialize_is_deterministic_and_in_range() {
        let vals: Vec<Vec<f64>> = (0..20)
            .map(|i| (0..120).map(|t| ((t * (i + 1)) as f64 * 0.01).sin()).collect())
            .collect();
        let cs = curves(vals);
        let mut params = ProbKmaParams::new(2, 60, 70, DistanceParams::uniform(1, 0.5));
        params.seed = 3;
        let a = initialize(&cs, &params).unwrap();
        let b = initialize(&cs, &params).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.shifts.iter().flatten().all(|&s| (0..=60).contains(&s)));
        for i in 0..20 {
            assert!(close(a.p[0][i] + a.p[1][i], 1.0));
        }
        params.k = 1;
        params.c_min = vec![60];
        let one = initialize(&cs, &params).unwrap();
        assert!(one.p[0].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn initialize_rejects_short_curves_and_missing_derivatives() {
        let cs = curves(vec![vec![1.0; 10], vec![1.0; 30]]);
        let params = ProbKmaParams::new(1, 20, 20, DistanceParams::uniform(1, 0.0));
        assert!(matches!(
            initialize(&cs, &params),
            Err(Error::NoAdmissibleWindow { .. })
        ));
        let raw = CurveSet::new(Grid::default(), vec![Curve::from_values("a", vec![1.0; 30]).unwrap()]).unwrap();
        let params = ProbKmaParams::new(1, 20, 20, DistanceParams::uniform(1, 0.5));
        assert!(matches!(initialize(&raw, &params), Err(Error::MissingDerivatives)));
    }

    #[test]
    fn identical_curves_single_cluster_converges_to_pattern() {
        let pattern: Vec<f64> = (0..40).map(|t| ((t as f64) * 0.3).sin() * 4.0).collect();
        let cs = curves(vec![pattern.clone(); 5]);
        let params = ProbKmaParams::new(1, 40, 40, DistanceParams::uniform(1, 0.5));
        let st = run(&cs, &params).unwrap();
        assert!(st.converged);
        assert!(st.objective_trace.last().unwrap().abs() < 1e-20);
        for (a, b) in st.centers[0].values().iter().zip(&pattern) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
