//! Generalized silhouette index on locally aligned curve portions.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curveset::CurveSet;
use crate::dissimilarity::{nested_min_sq, DistanceParams, Track};
use crate::error::{Error, Result};
use crate::probkma::{Center, ProbKmaState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortionScore {
    pub curve_id: String,
    pub cluster: usize,
    pub shift: i64,
    /// `None` when fewer than two clusters have portions.
    pub s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    pub portions: Vec<PortionScore>,
    /// Mean silhouette per cluster; `None` for empty clusters or when
    /// undefined.
    pub cluster_avg: Vec<Option<f64>>,
    pub overall: Option<f64>,
}

/// Silhouette values from a precomputed portion distance matrix. Entries
/// that are `None` (inadmissible pairs) are skipped when averaging.
pub fn silhouette_from_matrix(dist: &[Vec<Option<f64>>], assign: &[usize], k: usize) -> Vec<Option<f64>> {
    let n = assign.len();
    let populated = (0..k).filter(|&c| assign.contains(&c)).count();
    if populated < 2 {
        return vec![None; n];
    }
    (0..n)
        .map(|j| {
            let mut sum = vec![0.0; k];
            let mut cnt = vec![0usize; k];
            for (l, &cl) in assign.iter().enumerate() {
                if l == j {
                    continue;
                }
                if let Some(d) = dist[j][l] {
                    sum[cl] += d;
                    cnt[cl] += 1;
                }
            }
            let own = assign[j];
            let a = if cnt[own] > 0 { sum[own] / cnt[own] as f64 } else { 0.0 };
            let b = (0..k)
                .filter(|&c| c != own && cnt[c] > 0)
                .map(|c| sum[c] / cnt[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if !b.is_finite() {
                return None;
            }
            let denom = a.max(b);
            Some(if denom > 0.0 { (b - a) / denom } else { 0.0 })
        })
        .collect()
}

/// Silhouette report for the portions selected by `cleaned` (curve `i`
/// contributes a portion to cluster `k` whenever `cleaned[k][i]`).
pub fn silhouette(
    cs: &CurveSet,
    cleaned: &[Vec<bool>],
    shifts: &[Vec<i64>],
    centers: &[Center],
    dist: &DistanceParams,
) -> Result<SilhouetteReport> {
    let k = centers.len();
    if cleaned.len() != k || shifts.len() != k {
        return Err(Error::InvalidParameter(
            "cleaned memberships, shifts and centers disagree on K".to_string(),
        ));
    }
    let mut portions = Vec::new();
    let mut windows = Vec::new();
    for kk in 0..k {
        for (i, curve) in cs.curves.iter().enumerate() {
            if !cleaned[kk][i] {
                continue;
            }
            let len = centers[kk].len();
            let s = shifts[kk][i];
            windows.push(curve.padded_window(s, len));
            portions.push((curve.id.clone(), kk, s));
        }
    }
    let n = portions.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let vals: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            nested_min_sq(Track::from(&windows[a]), Track::from(&windows[b]), dist).map(|(_, d)| d.sqrt())
        })
        .collect();
    let mut matrix = vec![vec![Some(0.0); n]; n];
    for (&(a, b), v) in pairs.iter().zip(vals) {
        matrix[a][b] = v;
        matrix[b][a] = v;
    }
    let assign: Vec<usize> = portions.iter().map(|p| p.1).collect();
    let s = silhouette_from_matrix(&matrix, &assign, k);

    let mut cluster_avg = vec![None; k];
    for (kk, slot) in cluster_avg.iter_mut().enumerate() {
        let v: Vec<f64> = assign
            .iter()
            .zip(&s)
            .filter(|(&a, _)| a == kk)
            .filter_map(|(_, s)| *s)
            .collect();
        if !v.is_empty() {
            *slot = Some(v.iter().sum::<f64>() / v.len() as f64);
        }
    }
    let defined: Vec<f64> = cluster_avg.iter().flatten().cloned().collect();
    let overall = (!defined.is_empty() && s.iter().any(Option::is_some))
        .then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(SilhouetteReport {
        portions: portions
            .into_iter()
            .zip(s)
            .map(|((curve_id, cluster, shift), s)| PortionScore {
                curve_id,
                cluster,
                shift,
                s,
            })
            .collect(),
        cluster_avg,
        overall,
    })
}

/// Silhouette of a finished run, using its cleaned memberships.
pub fn silhouette_of_state(cs: &CurveSet, st: &ProbKmaState, dist: &DistanceParams) -> Result<SilhouetteReport> {
    let cleaned = st
        .cleaned_p
        .clone()
        .unwrap_or_else(|| crate::probkma::clean(&st.dists));
    silhouette(cs, &cleaned, &st.shifts, &st.centers, dist)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

/// Writes portions ordered by cluster then decreasing `s_j`, followed by a
/// summary block of per-cluster and overall averages.
pub fn write_csv<W: Write>(report: &SilhouetteReport, mut out: W) -> Result<()> {
    writeln!(out, "curve_id,cluster,shift,s_j")?;
    let mut rows: Vec<&PortionScore> = report.portions.iter().collect();
    rows.sort_by(|a, b| {
        a.cluster.cmp(&b.cluster).then_with(|| {
            let (x, y) = (a.s.unwrap_or(f64::NEG_INFINITY), b.s.unwrap_or(f64::NEG_INFINITY));
            y.total_cmp(&x)
        })
    });
    for r in rows {
        writeln!(out, "{},{},{},{}", r.curve_id, r.cluster, r.shift, fmt_opt(r.s))?;
    }
    writeln!(out)?;
    writeln!(out, "summary,cluster,S")?;
    for (k, v) in report.cluster_avg.iter().enumerate() {
        writeln!(out, "cluster_avg,{k},{}", fmt_opt(*v))?;
    }
    writeln!(out, "overall,,{}", fmt_opt(report.overall))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curveset::{estimate_derivatives, Curve, Grid};
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Vec<Vec<Option<f64>>> {
        rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect()
    }

    #[test]
    fn hand_matrix() {
        let d = m(&[&[0.0, 1.0, 4.0], &[1.0, 0.0, 4.0], &[4.0, 4.0, 0.0]]);
        let s = silhouette_from_matrix(&d, &[0, 0, 1], 2);
        assert!((s[0].unwrap() - 0.75).abs() < 1e-12);
        assert!((s[1].unwrap() - 0.75).abs() < 1e-12);
        // singleton: a = 0 by convention
        assert_eq!(s[2], Some(1.0));
    }

    #[test]
    fn equidistant_portion_scores_zero() {
        let d = m(&[&[0.0, 2.0, 2.0], &[2.0, 0.0, 5.0], &[2.0, 5.0, 0.0]]);
        let s = silhouette_from_matrix(&d, &[0, 0, 1], 2);
        assert_eq!(s[0], Some(0.0));
    }

    #[test]
    fn one_cluster_is_undefined() {
        let d = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(silhouette_from_matrix(&d, &[0, 0], 2), vec![None, None]);
    }

    #[test]
    fn separated_clusters_score_one() {
        let a: Vec<f64> = (0..20).map(|t| (t as f64 * 0.4).sin()).collect();
        let b: Vec<f64> = (0..20).map(|t| 30.0 + (t as f64 * 0.9).cos()).collect();
        let mut curves = Vec::new();
        for i in 0..3 {
            curves.push(Curve::from_values(format!("a{i}"), a.clone()).unwrap());
            curves.push(Curve::from_values(format!("b{i}"), b.clone()).unwrap());
        }
        let cs = estimate_derivatives(CurveSet::new(Grid::default(), curves).unwrap());
        let centers = vec![
            Center::from_track(Track::from(&cs.curves[0])),
            Center::from_track(Track::from(&cs.curves[1])),
        ];
        let cleaned = vec![
            (0..6).map(|i| i % 2 == 0).collect::<Vec<_>>(),
            (0..6).map(|i| i % 2 == 1).collect::<Vec<_>>(),
        ];
        let shifts = vec![vec![0; 6]; 2];
        let rep = silhouette(&cs, &cleaned, &shifts, &centers, &DistanceParams::uniform(1, 0.5)).unwrap();
        assert_eq!(rep.portions.len(), 6);
        assert!(rep.portions.iter().all(|p| p.s == Some(1.0)));
        assert_eq!(rep.overall, Some(1.0));
        let mut buf = Vec::new();
        write_csv(&rep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("curve_id,cluster,shift,s_j\n"));
        assert!(text.contains("overall,,1"));
    }

    fn matrix_and_assign() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        (3usize..9).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(0.01f64..10.0, n), n),
                prop::collection::vec(0usize..3, n),
            )
        })
    }

    proptest! {
        #[test]
        fn bounded_and_scale_invariant((raw, assign) in matrix_and_assign(), lambda in 0.1f64..50.0) {
            let n = raw.len();
            let mut d = vec![vec![Some(0.0); n]; n];
            for a in 0..n {
                for b in a + 1..n {
                    d[a][b] = Some(raw[a][b]);
                    d[b][a] = Some(raw[a][b]);
                }
            }
            let scaled: Vec<Vec<Option<f64>>> = d.iter().map(|r| r.iter().map(|v| v.map(|x| x * lambda)).collect()).collect();
            let s1 = silhouette_from_matrix(&d, &assign, 3);
            let s2 = silhouette_from_matrix(&scaled, &assign, 3);
            for (a, b) in s1.iter().zip(&s2) {
                match (a, b) {
                    (Some(a), Some(b)) => {
                        prop_assert!((-1.0..=1.0).contains(a));
                        prop_assert!((a - b).abs() < 1e-9);
                    }
                    (None, None) => {}
                    _ => prop_assert!(false),
                }
            }
        }

        #[test]
        fn closer_to_other_cluster_is_negative(near in 0.1f64..1.0, far in 2.0f64..10.0) {
            // portion 0 is in cluster 0 but sits next to cluster 1's members
            let d = m(&[
                &[0.0, far, near, near],
                &[far, 0.0, far, far],
                &[near, far, 0.0, 0.1],
                &[near, far, 0.1, 0.0],
            ]);
            let s = silhouette_from_matrix(&d, &[0, 0, 1, 1], 2);
            prop_assert!(s[0].unwrap() < 0.0);
        }
    }
}
