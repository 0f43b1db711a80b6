//! Motif discovery: many seeded probKMA runs over a grid of `(K, c)`, then
//! silhouette/support pruning, merging of near-duplicate candidates, a
//! radius search for every occurrence along the curves and a final
//! frequency/redundancy filter.

mod evaluate;
mod merge;
mod search;
mod select;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use evaluate::{evaluate, evaluate_occurrences, rand_error, EvaluationReport, MotifScore, TruthScore};
pub use merge::{complete_linkage, merge, MergeParams, RadiusRule};
pub use search::search;
pub use select::{select, SelectParams};

use crate::curveset::CurveSet;
use crate::error::{Error, Result};
use crate::probkma::{run, Center, ProbKmaParams};
use crate::silhouette::silhouette_of_state;
use crate::stats::derive_seed;

pub const DEFAULT_MIN_SILHOUETTE: f64 = 0.5;
pub const DEFAULT_MIN_SUPPORT: usize = 5;
pub const DEFAULT_MIN_SEPARATION_FRAC: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub k_values: Vec<usize>,
    /// Initial center lengths in grid points.
    pub c_values: Vec<usize>,
    pub n_init: usize,
    /// Template for every run; `k`, `c_min` and `seed` are overwritten.
    pub base: ProbKmaParams,
    pub master_seed: u64,
}

impl GridSpec {
    pub fn validate(&self, cs: &CurveSet) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_init == 0 {
            return bad("n_init must be at least 1".into());
        }
        if self.k_values.is_empty() || self.c_values.is_empty() {
            return bad("the (K, c) grid is empty".into());
        }
        if self.k_values.contains(&0) {
            return bad("K values must be at least 1".into());
        }
        let longest = cs.longest_valid_run();
        for &c in &self.c_values {
            if c == 0 || c > self.base.c_max {
                return bad(format!("c = {c} must lie in [1, c_max = {}]", self.base.c_max));
            }
            if c > longest {
                return bad(format!("c = {c} exceeds the longest observed stretch ({longest} points)"));
            }
        }
        Ok(())
    }

    /// Parameters of run `(k, c, init)`.
    pub fn run_params(&self, k: usize, c: usize, init: usize) -> ProbKmaParams {
        let mut p = self.base.clone();
        p.k = k;
        p.c_min = vec![c; k];
        p.seed = derive_seed(self.master_seed, &[k as u64, c as u64, init as u64]);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub k: usize,
    pub c: usize,
    pub init: usize,
    pub seed: u64,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub curve_id: String,
    pub curve_index: usize,
    pub shift: i64,
    /// Distance (not squared) to the candidate's center.
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMotif {
    pub center: Center,
    pub provenance: Provenance,
    pub members: Vec<Member>,
    /// Distance (not squared) to every curve at its aligned shift.
    pub curve_dists: Vec<f64>,
    /// Cluster average silhouette; `None` when undefined.
    pub silhouette: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub k: usize,
    pub c: usize,
    pub init: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub candidates: Vec<CandidateMotif>,
    pub failures: Vec<RunFailure>,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occurrence {
    pub motif_id: usize,
    pub curve_id: String,
    pub curve_index: usize,
    /// Window start; negative when the occurrence is cut by the curve start.
    pub start: i64,
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveredMotif {
    pub id: usize,
    pub center: Center,
    pub radius: f64,
    pub occurrences: Vec<Occurrence>,
    /// Indices (into the pruned candidate list) merged into this motif.
    pub group: Vec<usize>,
    pub representative: usize,
    pub provenance: Provenance,
}

fn candidates_of_run(cs: &CurveSet, params: &ProbKmaParams, c: usize, init: usize) -> Result<Vec<CandidateMotif>> {
    let st = run(cs, params)?;
    let sil = silhouette_of_state(cs, &st, &params.dist)?;
    let cleaned = st.cleaned_p.as_ref().expect("run always cleans");
    let mut out = Vec::new();
    for k in 0..st.k() {
        let members: Vec<Member> = (0..cs.len())
            .filter(|&i| cleaned[k][i])
            .map(|i| Member {
                curve_id: cs.curves[i].id.clone(),
                curve_index: i,
                shift: st.shifts[k][i],
                dist: st.dists[k][i].max(0.0).sqrt(),
            })
            .collect();
        if members.is_empty() {
            continue;
        }
        out.push(CandidateMotif {
            center: st.centers[k].clone(),
            provenance: Provenance {
                k: params.k,
                c,
                init,
                seed: params.seed,
                cluster: k,
            },
            support: members.len(),
            members,
            curve_dists: st.dists[k].iter().map(|d| d.max(0.0).sqrt()).collect(),
            silhouette: sil.cluster_avg[k],
        });
    }
    Ok(out)
}

/// Runs probKMA for every `(K, c, init)` and pools the cleaned clusters.
/// Failed runs are recorded and skipped.
pub fn run_grid(cs: &CurveSet, spec: &GridSpec) -> Result<GridOutcome> {
    spec.validate(cs)?;
    let jobs: Vec<(usize, usize, usize)> = spec
        .k_values
        .iter()
        .flat_map(|&k| {
            spec.c_values
                .iter()
                .flat_map(move |&c| (0..spec.n_init).map(move |i| (k, c, i)))
        })
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(k, c, init)| candidates_of_run(cs, &spec.run_params(k, c, init), c, init))
        .collect();
    let mut out = GridOutcome {
        candidates: Vec::new(),
        failures: Vec::new(),
        n_runs: jobs.len(),
    };
    for (&(k, c, init), r) in jobs.iter().zip(results) {
        match r {
            Ok(cands) => out.candidates.extend(cands),
            Err(e) => out.failures.push(RunFailure {
                k,
                c,
                init,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Keeps candidates with silhouette `>= min_silhouette` and support
/// `>= min_support`. An undefined silhouette never passes.
pub fn prune(cands: &[CandidateMotif], min_silhouette: f64, min_support: usize) -> Vec<CandidateMotif> {
    cands
        .iter()
        .filter(|c| c.support >= min_support && c.silhouette.is_some_and(|s| s >= min_silhouette))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryParams {
    pub grid: GridSpec,
    pub min_silhouette: f64,
    pub min_support: usize,
    pub merge: MergeParams,
    pub min_separation_frac: f64,
    pub select: SelectParams,
}

impl DiscoveryParams {
    pub fn new(grid: GridSpec) -> Self {
        DiscoveryParams {
            grid,
            min_silhouette: DEFAULT_MIN_SILHOUETTE,
            min_support: DEFAULT_MIN_SUPPORT,
            merge: MergeParams::default(),
            min_separation_frac: DEFAULT_MIN_SEPARATION_FRAC,
            select: SelectParams { min_frequency: DEFAULT_MIN_SUPPORT, ..SelectParams::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryOutput {
    pub n_runs: usize,
    pub n_candidates: usize,
    pub n_pruned: usize,
    /// Motifs after merging, before the frequency/redundancy filter.
    pub n_merged: usize,
    pub failures: Vec<RunFailure>,
    pub r_all: Option<f64>,
    pub motifs: Vec<DiscoveredMotif>,
}

/// The whole pipeline: grid, prune, merge, search, select.
pub fn discover(cs: &CurveSet, params: &DiscoveryParams) -> Result<DiscoveryOutput> {
    let grid = run_grid(cs, &params.grid)?;
    postprocess(cs, grid, params)
}

/// Everything after the grid, for reuse on a stored candidate pool.
pub fn postprocess(cs: &CurveSet, grid: GridOutcome, params: &DiscoveryParams) -> Result<DiscoveryOutput> {
    let kept = prune(&grid.candidates, params.min_silhouette, params.min_support);
    let (motifs, r_all) = if kept.is_empty() {
        (Vec::new(), None)
    } else {
        let (m, r) = merge(&kept, &params.merge, &params.grid.base.dist)?;
        (m, Some(r))
    };
    let n_merged = motifs.len();
    let motifs = search(cs, motifs, &params.grid.base.dist, params.min_separation_frac);
    let motifs = select(motifs, &params.select);
    Ok(DiscoveryOutput {
        n_runs: grid.n_runs,
        n_candidates: grid.candidates.len(),
        n_pruned: kept.len(),
        n_merged,
        failures: grid.failures,
        r_all,
        motifs,
    })
}

/// Writes `motif_id,curve_id,start,dist` rows.
pub fn write_occurrences_csv<W: Write>(motifs: &[DiscoveredMotif], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["motif_id", "curve_id", "start", "dist"])?;
    for m in motifs {
        for o in &m.occurrences {
            w.write_record([m.id.to_string(), o.curve_id.clone(), o.start.to_string(), o.dist.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads occurrences written by [`write_occurrences_csv`]; curve indices are
/// resolved against `cs` when given.
pub fn read_occurrences_csv(path: &Path, cs: Option<&CurveSet>) -> Result<Vec<Occurrence>> {
    #[derive(Deserialize)]
    struct Row {
        motif_id: usize,
        curve_id: String,
        start: i64,
        dist: f64,
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        let curve_index = match cs {
            Some(cs) => cs
                .index_of(&row.curve_id)
                .ok_or_else(|| Error::Parse(format!("unknown curve '{}' in occurrences", row.curve_id)))?,
            None => usize::MAX,
        };
        out.push(Occurrence {
            motif_id: row.motif_id,
            curve_id: row.curve_id,
            curve_index,
            start: row.start,
            dist: row.dist,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curveset::{estimate_derivatives, Curve, Grid};
    use crate::dissimilarity::DistanceParams;

    fn cand(support: usize, sil: Option<f64>) -> CandidateMotif {
        CandidateMotif {
            center: Center::new(1, vec![0.0; 3], vec![0.0; 3], vec![true; 3]),
            provenance: Provenance { k: 2, c: 3, init: 0, seed: 0, cluster: 0 },
            members: (0..support)
                .map(|i| Member { curve_id: format!("c{i}"), curve_index: i, shift: 0, dist: 0.1 })
                .collect(),
            curve_dists: vec![0.1; support],
            silhouette: sil,
            support,
        }
    }

    #[test]
    fn prune_thresholds() {
        let pool = vec![cand(12, Some(0.9)), cand(2, Some(0.95)), cand(8, Some(0.3)), cand(9, None)];
        let kept = prune(&pool, 0.5, 5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].support, 12);
        assert_eq!(prune(&pool, -1.0, 0).len(), 3);
        assert!(prune(&pool, 0.99, 0).is_empty());
    }

    fn tiny_set() -> CurveSet {
        let curves = (0..6)
            .map(|i| {
                let v = (0..40).map(|t| ((t + 3 * i) as f64 * 0.3).sin() * (1.0 + i as f64 * 0.1)).collect();
                Curve::from_values(format!("c{i}"), v).unwrap()
            })
            .collect();
        estimate_derivatives(CurveSet::new(Grid::default(), curves).unwrap())
    }

    #[test]
    fn grid_runs_and_determinism() {
        let cs = tiny_set();
        let base = ProbKmaParams::new(1, 10, 12, DistanceParams::uniform(1, 0.5));
        let spec = GridSpec { k_values: vec![1, 2], c_values: vec![8, 10], n_init: 2, base, master_seed: 3 };
        let a = run_grid(&cs, &spec).unwrap();
        assert_eq!(a.n_runs, 8);
        assert!(a.failures.is_empty());
        assert!(a.candidates.len() <= 2 * (2 + 4));
        assert!(a.candidates.iter().all(|c| c.support == c.members.len()));
        let b = run_grid(&cs, &spec).unwrap();
        assert_eq!(a, b);

        let single = GridSpec { k_values: vec![1], c_values: vec![10], n_init: 1, ..spec.clone() };
        let one = run_grid(&cs, &single).unwrap();
        assert_eq!(one.n_runs, 1);
        assert!(one.candidates.iter().all(|c| c.provenance.init == 0 && c.provenance.k == 1));

        let bad = GridSpec { n_init: 0, ..spec.clone() };
        assert!(run_grid(&cs, &bad).is_err());
        let bad = GridSpec { c_values: vec![50], ..spec };
        assert!(run_grid(&cs, &bad).is_err());
    }

    #[test]
    fn occurrences_csv_round_trip() {
        let m = DiscoveredMotif {
            id: 3,
            center: Center::new(1, vec![0.0; 2], vec![0.0; 2], vec![true; 2]),
            radius: 1.0,
            occurrences: vec![Occurrence { motif_id: 3, curve_id: "c1".into(), curve_index: 1, start: 7, dist: 0.25 }],
            group: vec![0],
            representative: 0,
            provenance: Provenance { k: 2, c: 2, init: 0, seed: 0, cluster: 1 },
        };
        let mut buf = Vec::new();
        write_occurrences_csv(&[m], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "motif_id,curve_id,start,dist\n3,c1,7,0.25\n");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("occ.csv");
        std::fs::write(&path, text).unwrap();
        let back = read_occurrences_csv(&path, None).unwrap();
        assert_eq!((back[0].motif_id, back[0].start, back[0].dist), (3, 7, 0.25));
    }
}
