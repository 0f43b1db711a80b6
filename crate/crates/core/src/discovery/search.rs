use rayon::prelude::*;

use super::{DiscoveredMotif, Occurrence};
use crate::curveset::{Curve, CurveSet};
use crate::dissimilarity::{d_alpha_sq_tracks, DistanceParams, Track};
use crate::probkma::window;

/// Squared distances of `v` against every window of `c` that keeps at least
/// one point on the curve. Windows may hang off either end; the missing part
/// is treated like a gap, so admissibility follows the overlap floor.
fn padded_profile(c: &Curve, v: Track<'_>, dist: &DistanceParams) -> Vec<(i64, Option<f64>)> {
    let len = v.len() as i64;
    (1 - len..c.n_points() as i64)
        .map(|s| (s, d_alpha_sq_tracks(window(c, s, v.len()).track(), v, dist).ok()))
        .collect()
}

/// Local minima of the profile with distance within `radius`, taken greedily
/// by increasing distance (then start) and suppressing any window that
/// overlaps an accepted one by more than `(1 - min_separation_frac) * len`.
fn occurrences_in_profile(prof: &[(i64, Option<f64>)], len: usize, radius: f64, min_separation_frac: f64) -> Vec<(i64, f64)> {
    let d = |i: usize| prof[i].1.map_or(f64::INFINITY, |v| v.max(0.0).sqrt());
    let mut minima: Vec<(i64, f64)> = (0..prof.len())
        .filter(|&i| prof[i].1.is_some())
        .filter(|&i| (i == 0 || d(i) <= d(i - 1)) && (i + 1 == prof.len() || d(i) <= d(i + 1)))
        .map(|i| (prof[i].0, d(i)))
        .filter(|&(_, v)| v <= radius)
        .collect();
    minima.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let max_overlap = (1.0 - min_separation_frac) * len as f64;
    let mut kept: Vec<(i64, f64)> = Vec::new();
    for (s, v) in minima {
        let clash = kept.iter().any(|&(a, _)| {
            let overlap = len.saturating_sub(a.abs_diff(s) as usize);
            overlap as f64 > max_overlap
        });
        if !clash {
            kept.push((s, v));
        }
    }
    kept.sort_by_key(|&(s, _)| s);
    kept
}

/// Fills every motif's occurrence list by scanning all curves.
pub fn search(
    cs: &CurveSet,
    mut motifs: Vec<DiscoveredMotif>,
    dist: &DistanceParams,
    min_separation_frac: f64,
) -> Vec<DiscoveredMotif> {
    let jobs: Vec<(usize, usize)> = (0..motifs.len())
        .flat_map(|m| (0..cs.len()).map(move |i| (m, i)))
        .collect();
    let found: Vec<Vec<(i64, f64)>> = jobs
        .par_iter()
        .map(|&(m, i)| {
            let motif = &motifs[m];
            let prof = padded_profile(&cs.curves[i], motif.center.track(), dist);
            occurrences_in_profile(&prof, motif.center.len(), motif.radius, min_separation_frac)
        })
        .collect();
    for m in motifs.iter_mut() {
        m.occurrences.clear();
    }
    for (&(m, i), hits) in jobs.iter().zip(found) {
        let id = motifs[m].id;
        motifs[m].occurrences.extend(hits.into_iter().map(|(start, d)| Occurrence {
            motif_id: id,
            curve_id: cs.curves[i].id.clone(),
            curve_index: i,
            start,
            dist: d,
        }));
    }
    motifs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::Provenance;
    use crate::probkma::Center;
    use crate::simgen::{generate, Placement, ScenarioSpec, BETA_SHAPE};
    use proptest::prelude::*;

    fn planted(knots: Vec<Vec<usize>>, sigma: f64) -> (CurveSet, crate::simgen::TruthLayout) {
        let n = knots.len();
        let spec = ScenarioSpec {
            order: 3,
            knot_spacing: 10.0,
            n_coeffs: 22,
            coef_range: (-15.0, 15.0),
            beta: BETA_SHAPE,
            motifs: vec![crate::simgen::beta_coefficients(4, 8, (-15.0, 15.0))],
            layout: knots
                .into_iter()
                .map(|k| k.into_iter().map(|knot| Placement { motif: 0, knot }).collect())
                .collect(),
            sigma,
            level_shift_range: None,
            length: 200,
            n_curves: n,
            seed: 21,
            windows: None,
            labels: None,
        };
        generate(&spec).unwrap()
    }

    fn motif_from(cs: &CurveSet, curve: usize, start: usize, len: usize, radius: f64) -> DiscoveredMotif {
        let p = cs.curves[curve].portion(start, len).unwrap();
        DiscoveredMotif {
            id: 0,
            center: Center::from_track(Track::from(&p)),
            radius,
            occurrences: Vec::new(),
            group: vec![0],
            representative: 0,
            provenance: Provenance { k: 1, c: len, init: 0, seed: 0, cluster: 0 },
        }
    }

    #[test]
    fn exact_copies_found_at_planted_starts() {
        let (cs, truth) = planted(vec![vec![2], vec![0, 11], vec![9], vec![]], 0.0);
        let first = &truth.occurrences[0];
        let m = motif_from(&cs, first.curve_index, first.start, first.length, 1e-6);
        // levels only: finite-difference slopes at the copy edges see the
        // neighbouring background
        let out = search(&cs, vec![m], &DistanceParams::uniform(1, 0.0), 0.5);
        let mut got: Vec<(usize, i64)> = out[0].occurrences.iter().map(|o| (o.curve_index, o.start)).collect();
        got.sort();
        let mut want: Vec<(usize, i64)> = truth.occurrences.iter().map(|o| (o.curve_index, o.start as i64)).collect();
        want.sort();
        assert_eq!(got, want);
        assert!(out[0].occurrences.iter().all(|o| o.dist < 1e-9));
        // with slopes the copies still stand out, just not at exactly zero
        let m = motif_from(&cs, first.curve_index, first.start, first.length, 0.5);
        let out = search(&cs, vec![m], &DistanceParams::uniform(1, 0.5), 0.5);
        assert_eq!(out[0].occurrences.len(), want.len());
    }

    #[test]
    fn zero_radius_on_noisy_data_finds_nothing() {
        let (cs, truth) = planted(vec![vec![2], vec![5]], 1.0);
        let o = &truth.occurrences[0];
        let mut m = motif_from(&cs, o.curve_index, o.start, o.length, 0.0);
        // the template is an exact copy of one occurrence: perturb it
        let vals: Vec<f64> = m.center.values().iter().map(|v| v + 0.5).collect();
        m.center = Center::new(1, vals, m.center.deriv().to_vec(), m.center.defined_mask().to_vec());
        let out = search(&cs, vec![m], &DistanceParams::uniform(1, 0.5), 0.5);
        assert!(out[0].occurrences.is_empty());
    }

    #[test]
    fn overlapping_windows_keep_the_closer() {
        // a flat profile region with two nearby minima
        let prof: Vec<(i64, Option<f64>)> = [5.0, 1.0, 4.0, 0.25, 9.0, 9.0, 9.0, 9.0, 9.0, 0.5, 9.0]
            .iter()
            .enumerate()
            .map(|(s, &d)| (s as i64, Some(d)))
            .collect();
        // len 6: starts 1 and 3 overlap by 4 > 3, so only start 3 survives
        let hits = occurrences_in_profile(&prof, 6, 2.0, 0.5);
        assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), vec![3, 9]);
        // inadmissible entries are never reported
        let prof: Vec<(i64, Option<f64>)> = (0..4).map(|s| (s, None)).collect();
        assert!(occurrences_in_profile(&prof, 2, 1.0, 0.5).is_empty());
    }

    proptest! {
        #[test]
        fn larger_radius_keeps_smaller_radius_hits(
            d in prop::collection::vec(0.0f64..4.0, 10..60),
            r1 in 0.0f64..2.0,
            extra in 0.0f64..2.0,
        ) {
            let prof: Vec<(i64, Option<f64>)> = d
                .iter()
                .enumerate()
                .map(|(s, &v)| (s as i64, Some(v)))
                .collect();
            let small = occurrences_in_profile(&prof, 8, r1, 0.5);
            let large = occurrences_in_profile(&prof, 8, r1 + extra, 0.5);
            for h in &small {
                prop_assert!(large.contains(h));
            }
            prop_assert!(small.iter().all(|h| h.1 <= r1));
        }
    }
}
