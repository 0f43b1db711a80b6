use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DiscoveredMotif, Occurrence};
use crate::curveset::{estimate_derivatives, Curve, CurveSet, Grid};
use crate::dissimilarity::{nested_min_sq, DistanceParams, Track};
use crate::simgen::{TruthLayout, TruthOccurrence};

/// Minimum overlap with a planted occurrence, as a fraction of its length,
/// for a found occurrence to count as a true positive.
pub const TP_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifScore {
    pub motif_id: usize,
    pub matched_truth: Option<usize>,
    /// Distance between the found center and the matched noise-free motif.
    pub center_distance: Option<f64>,
    /// Estimated length in grid points, when the center is known.
    pub length: Option<usize>,
    pub n_occurrences: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthScore {
    pub truth_motif: usize,
    pub planted: usize,
    /// Planted occurrences recovered by at least one matched motif.
    pub found: usize,
    pub missed: usize,
    pub matched_motifs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub motifs: Vec<MotifScore>,
    pub truth: Vec<TruthScore>,
    pub classification_error: Option<f64>,
}

impl EvaluationReport {
    /// Adds `1 - Rand index` between `assignment` and the truth labels.
    pub fn with_classification(mut self, truth: &TruthLayout, assignment: &[usize]) -> Self {
        self.classification_error = truth
            .labels
            .as_ref()
            .filter(|l| l.len() == assignment.len())
            .map(|l| rand_error(l, assignment));
        self
    }
}

/// `1 - Rand index` between two labelings of the same items.
pub fn rand_error(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let mut agree = 0usize;
    let mut total = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    1.0 - agree as f64 / total as f64
}

fn overlap(start: i64, len: usize, o: &TruthOccurrence) -> usize {
    let lo = start.max(o.start as i64);
    let hi = (start + len as i64).min((o.start + o.length) as i64);
    (hi - lo).max(0) as usize
}

fn covers(start: i64, len: usize, o: &TruthOccurrence) -> bool {
    overlap(start, len, o) as f64 >= TP_OVERLAP * o.length as f64
}

/// Claims planted occurrences of `truth_motif` for each found occurrence in
/// increasing distance order; returns the claimed planted indices and the
/// number of found occurrences that claimed nothing.
fn claim(occs: &[&Occurrence], len: usize, truth: &TruthLayout, truth_motif: usize) -> (Vec<usize>, usize) {
    let mut order: Vec<&&Occurrence> = occs.iter().collect();
    order.sort_by(|a, b| a.dist.total_cmp(&b.dist).then(a.start.cmp(&b.start)));
    let mut claimed = Vec::new();
    let mut fp = 0;
    for o in order {
        let best = truth
            .occurrences
            .iter()
            .enumerate()
            .filter(|(idx, t)| {
                t.motif == truth_motif && t.curve_id == o.curve_id && !claimed.contains(idx) && covers(o.start, len, t)
            })
            .max_by_key(|(idx, t)| (overlap(o.start, len, t), std::cmp::Reverse(*idx)));
        match best {
            Some((idx, _)) => claimed.push(idx),
            None => fp += 1,
        }
    }
    (claimed, fp)
}

struct Found<'a> {
    id: usize,
    len: usize,
    known_len: bool,
    occs: Vec<&'a Occurrence>,
    matched: Option<usize>,
    center_distance: Option<f64>,
}

fn score(found: Vec<Found<'_>>, truth: &TruthLayout) -> EvaluationReport {
    let mut per_truth: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    let mut motifs = Vec::new();
    for f in &found {
        let (tp, fp, fn_count) = match f.matched {
            Some(t) => {
                let (claimed, fp) = claim(&f.occs, f.len, truth, t);
                let planted = truth.occurrences_of(t).count();
                let entry = per_truth.entry(t).or_default();
                entry.0.extend(&claimed);
                entry.1.push(f.id);
                (claimed.len(), fp, planted - claimed.len())
            }
            None => (0, f.occs.len(), 0),
        };
        motifs.push(MotifScore {
            motif_id: f.id,
            matched_truth: f.matched,
            center_distance: f.center_distance,
            length: f.known_len.then_some(f.len),
            n_occurrences: f.occs.len(),
            tp,
            fp,
            fn_count,
        });
    }
    let truth_scores = truth
        .motifs
        .iter()
        .map(|tm| {
            let planted = truth.occurrences_of(tm.id).count();
            let (mut claimed, matched) = per_truth.remove(&tm.id).unwrap_or_default();
            claimed.sort_unstable();
            claimed.dedup();
            TruthScore {
                truth_motif: tm.id,
                planted,
                found: claimed.len(),
                missed: planted - claimed.len(),
                matched_motifs: matched,
            }
        })
        .collect();
    EvaluationReport {
        motifs,
        truth: truth_scores,
        classification_error: None,
    }
}

fn truth_tracks(truth: &TruthLayout) -> Option<CurveSet> {
    let curves = truth
        .motifs
        .iter()
        .map(|m| Curve::from_values(format!("truth_{}", m.id), m.values.clone()))
        .collect::<crate::Result<Vec<_>>>()
        .ok()?;
    if curves.is_empty() {
        return None;
    }
    CurveSet::new(Grid::default(), curves).ok().map(estimate_derivatives)
}

/// Scores discovered motifs against the planted layout. Each motif is
/// matched to the truth motif whose noise-free shape is closest to its
/// center.
pub fn evaluate(found: &[DiscoveredMotif], truth: &TruthLayout, dist: &DistanceParams) -> EvaluationReport {
    let tracks = truth_tracks(truth);
    let entries = found
        .iter()
        .map(|m| {
            let best = tracks.as_ref().and_then(|ts| {
                ts.curves
                    .iter()
                    .zip(&truth.motifs)
                    .filter_map(|(c, tm)| {
                        nested_min_sq(Track::from(c), m.center.track(), dist).map(|(_, d)| (tm.id, d.max(0.0).sqrt()))
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1))
            });
            Found {
                id: m.id,
                len: m.center.len(),
                known_len: true,
                occs: m.occurrences.iter().collect(),
                matched: best.map(|b| b.0),
                center_distance: best.map(|b| b.1),
            }
        })
        .collect();
    score(entries, truth)
}

/// Scores bare occurrences (no centers). Each motif is matched to the truth
/// motif it recovers most often; the window length is taken as the planted
/// length of that motif.
pub fn evaluate_occurrences(occs: &[Occurrence], lengths: &BTreeMap<usize, usize>, truth: &TruthLayout) -> EvaluationReport {
    let mut by_motif: BTreeMap<usize, Vec<&Occurrence>> = BTreeMap::new();
    for o in occs {
        by_motif.entry(o.motif_id).or_default().push(o);
    }
    let entries = by_motif
        .into_iter()
        .map(|(id, list)| {
            let planted_len = |t: usize| truth.occurrences_of(t).map(|o| o.length).max().unwrap_or(1);
            let len_for = |t: usize| lengths.get(&id).copied().unwrap_or_else(|| planted_len(t));
            let matched = truth
                .motifs
                .iter()
                .map(|tm| {
                    let len = len_for(tm.id);
                    let hits = list
                        .iter()
                        .filter(|o| truth.occurrences_of(tm.id).any(|t| t.curve_id == o.curve_id && covers(o.start, len, t)))
                        .count();
                    (tm.id, hits)
                })
                .filter(|&(_, h)| h > 0)
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(t, _)| t);
            let len = matched.map_or_else(|| lengths.get(&id).copied().unwrap_or(1), len_for);
            Found {
                id,
                len,
                known_len: lengths.contains_key(&id),
                occs: list,
                matched,
                center_distance: None,
            }
        })
        .collect();
    score(entries, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::Provenance;
    use crate::probkma::Center;
    use crate::simgen::TruthMotif;

    #[test]
    fn rand_examples() {
        assert_eq!(rand_error(&[1, 1, 2, 2], &[1, 1, 2, 2]), 0.0);
        assert_eq!(rand_error(&[1, 1, 2, 2], &[7, 7, 3, 3]), 0.0);
        // pairs (01,02,03,12,13,23): agreement only on 03 and 12
        assert!((rand_error(&[1, 1, 2, 2], &[1, 2, 1, 2]) - 2.0 / 3.0).abs() < 1e-15);
    }

    fn truth() -> TruthLayout {
        let occ = |motif, curve: usize, start| TruthOccurrence {
            motif,
            curve_id: format!("c{curve}"),
            curve_index: curve,
            start,
            length: 10,
        };
        TruthLayout {
            occurrences: vec![occ(0, 0, 5), occ(0, 1, 20), occ(0, 1, 40), occ(1, 2, 0)],
            motifs: vec![
                TruthMotif { id: 0, values: (0..10).map(|t| t as f64).collect() },
                TruthMotif { id: 1, values: (0..10).map(|t| -(t as f64) * 3.0).collect() },
            ],
            labels: Some(vec![0, 0, 1]),
        }
    }

    fn found(id: usize, slope: f64, occ: &[(usize, usize)]) -> DiscoveredMotif {
        DiscoveredMotif {
            id,
            center: Center::new(1, (0..10).map(|t| t as f64 * slope).collect(), vec![slope; 10], vec![true; 10]),
            radius: 1.0,
            occurrences: occ
                .iter()
                .map(|&(c, s)| Occurrence { motif_id: id, curve_id: format!("c{c}"), curve_index: c, start: s as i64, dist: 0.0 })
                .collect(),
            group: vec![],
            representative: 0,
            provenance: Provenance { k: 2, c: 10, init: 0, seed: 0, cluster: 0 },
        }
    }

    #[test]
    fn perfect_recovery() {
        let t = truth();
        let f = vec![found(0, 1.0, &[(0, 5), (1, 20), (1, 40)]), found(1, -3.0, &[(2, 0)])];
        let r = evaluate(&f, &t, &DistanceParams::uniform(1, 0.5));
        assert_eq!((r.motifs[0].matched_truth, r.motifs[0].tp, r.motifs[0].fp, r.motifs[0].fn_count), (Some(0), 3, 0, 0));
        assert_eq!((r.motifs[1].matched_truth, r.motifs[1].tp, r.motifs[1].fp), (Some(1), 1, 0));
        assert!(r.motifs[0].center_distance.unwrap() < 1e-12);
        assert_eq!(r.truth[0].found + r.truth[0].missed, 3);
        let r = r.with_classification(&t, &[4, 4, 9]);
        assert_eq!(r.classification_error, Some(0.0));
    }

    #[test]
    fn overlap_rule_and_double_claims() {
        let t = truth();
        // start 10 overlaps [5,15) by 5 = 50%: TP; start 26 overlaps [20,30) by 4: FP;
        // the second hit on [5,15) cannot claim it again: FP
        let f = vec![found(0, 1.0, &[(0, 10), (1, 26), (0, 6), (2, 0)])];
        let r = evaluate(&f, &t, &DistanceParams::uniform(1, 0.0));
        let m = &r.motifs[0];
        assert_eq!((m.tp, m.fp, m.fn_count), (1, 3, 2));
        assert_eq!(m.tp + m.fn_count, 3);
        assert_eq!(r.truth[1].matched_motifs, Vec::<usize>::new());
    }

    #[test]
    fn bare_occurrences_match_by_overlap() {
        let t = truth();
        let occs: Vec<Occurrence> = found(5, 1.0, &[(2, 1), (0, 5)]).occurrences;
        let r = evaluate_occurrences(&occs, &BTreeMap::new(), &t);
        // both truths get one hit; ties go to the lower truth id
        assert_eq!(r.motifs[0].matched_truth, Some(0));
        assert_eq!((r.motifs[0].tp, r.motifs[0].fp), (1, 1));
        assert_eq!(r.motifs[0].length, None);
    }
}
