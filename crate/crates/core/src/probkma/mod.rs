//! Probabilistic K-mean with local alignment.
//!
//! Alternates three steps until the membership matrix stabilises:
//! weighted-average center estimation, per-(cluster, curve) shift alignment
//! and fuzzy membership update. Near convergence the centers are elongated
//! and a hard ("cleaned") membership matrix is derived from the distances.

mod cleaning;
mod elongation;
mod updates;

use serde::{Deserialize, Serialize};

pub use cleaning::clean;
pub use elongation::{elongate, ElongationOutcome};
pub(crate) use updates::window;
pub use updates::{
    align, bhattacharyya_k, initialize, objective, objective_k, pair_distances, run,
    run_best_of, stopping_distance, update_centers, update_memberships, weighted_objective, Alignment,
};

use crate::dissimilarity::{DistanceParams, Track};
use crate::error::{Error, Result};

pub const DEFAULT_M: f64 = 2.0;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_ELONGATION_STEP_FRAC: f64 = 0.25;
pub const DEFAULT_ELONGATION_MAX_TRIES: usize = 10;
pub const DEFAULT_DELTA_JMK_FRAC: f64 = 0.05;
pub const DEFAULT_CLEANING_TRIGGER: f64 = 100.0;

/// How per-cluster Bhattacharyya distances are combined into the global
/// stopping statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "q")]
pub enum Aggregation {
    Max,
    Mean,
    Quantile(f64),
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => {
                let q = other
                    .strip_prefix("quantile:")
                    .and_then(|q| q.parse::<f64>().ok())
                    .filter(|q| *q > 0.0 && *q < 1.0)
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "aggregation must be max, mean or quantile:<q>, got '{other}'"
                        ))
                    })?;
                Ok(Aggregation::Quantile(q))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbKmaParams {
    pub k: usize,
    /// Initial center lengths in grid points, one per cluster.
    pub c_min: Vec<usize>,
    /// Elongation cap in grid points.
    pub c_max: usize,
    pub m: f64,
    pub dist: DistanceParams,
    pub tol: f64,
    pub max_iter: usize,
    pub bc_aggregation: Aggregation,
    pub elongation_step_frac: f64,
    pub elongation_max_tries: usize,
    pub delta_jmk_frac: f64,
    pub cleaning_trigger: f64,
    pub seed: u64,
}

impl ProbKmaParams {
    /// Defaults for `k` clusters of initial length `c`, capped at `c_max`.
    pub fn new(k: usize, c: usize, c_max: usize, dist: DistanceParams) -> Self {
        ProbKmaParams {
            k,
            c_min: vec![c; k],
            c_max,
            m: DEFAULT_M,
            dist,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            bc_aggregation: Aggregation::Max,
            elongation_step_frac: DEFAULT_ELONGATION_STEP_FRAC,
            elongation_max_tries: DEFAULT_ELONGATION_MAX_TRIES,
            delta_jmk_frac: DEFAULT_DELTA_JMK_FRAC,
            cleaning_trigger: DEFAULT_CLEANING_TRIGGER,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.c_min.len() != self.k {
            return bad(format!("expected {} center lengths, got {}", self.k, self.c_min.len()));
        }
        if let Some(&c) = self.c_min.iter().find(|&&c| c == 0 || c > self.c_max) {
            return bad(format!("center length {c} must lie in [1, c_max = {}]", self.c_max));
        }
        if !(self.m > 1.0) {
            return bad(format!("m must exceed 1, got {}", self.m));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.elongation_step_frac > 0.0 && self.elongation_step_frac <= 1.0) {
            return bad("elongation step fraction must lie in (0, 1]".into());
        }
        if !(self.delta_jmk_frac >= 0.0) {
            return bad("delta_jmk_frac must be non-negative".into());
        }
        if !(self.cleaning_trigger > 0.0) {
            return bad("cleaning trigger must be positive".into());
        }
        if let Aggregation::Quantile(q) = self.bc_aggregation {
            if !(q > 0.0 && q < 1.0) {
                return bad(format!("aggregation quantile must lie in (0, 1), got {q}"));
            }
        }
        self.dist.validate()
    }
}

/// A cluster center: values and derivative track over `len` grid points.
/// Points where no contributing curve is observed stay undefined (`NaN`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CenterRepr", try_from = "CenterRepr")]
pub struct Center {
    d: usize,
    values: Vec<f64>,
    deriv: Vec<f64>,
    defined: Vec<bool>,
}

impl Center {
    pub fn new(d: usize, values: Vec<f64>, deriv: Vec<f64>, defined: Vec<bool>) -> Self {
        assert_eq!(values.len(), d * defined.len());
        assert_eq!(deriv.len(), values.len());
        Center {
            d,
            values,
            deriv,
            defined,
        }
    }

    /// Copies a window into a center (defined where the window is valid).
    pub fn from_track(t: Track<'_>) -> Self {
        Center {
            d: t.d,
            values: t.values.to_vec(),
            deriv: t.deriv.to_vec(),
            defined: t.mask.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.defined.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defined.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn deriv(&self) -> &[f64] {
        &self.deriv
    }

    pub fn defined_mask(&self) -> &[bool] {
        &self.defined
    }

    pub fn track(&self) -> Track<'_> {
        Track {
            d: self.d,
            values: &self.values,
            deriv: &self.deriv,
            mask: &self.defined,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CenterRepr {
    length: usize,
    d: usize,
    values: Vec<Vec<Option<f64>>>,
    deriv: Vec<Vec<Option<f64>>>,
    defined_mask: Vec<bool>,
}

fn rows(flat: &[f64], d: usize) -> Vec<Vec<Option<f64>>> {
    flat.chunks(d)
        .map(|r| r.iter().map(|v| v.is_finite().then_some(*v)).collect())
        .collect()
}

fn unrows(rows: &[Vec<Option<f64>>], d: usize) -> std::result::Result<Vec<f64>, String> {
    let mut out = Vec::with_capacity(rows.len() * d);
    for r in rows {
        if r.len() != d {
            return Err(format!("center row has {} components, expected {d}", r.len()));
        }
        out.extend(r.iter().map(|v| v.unwrap_or(f64::NAN)));
    }
    Ok(out)
}

impl From<Center> for CenterRepr {
    fn from(c: Center) -> Self {
        CenterRepr {
            length: c.len(),
            d: c.d,
            values: rows(&c.values, c.d),
            deriv: rows(&c.deriv, c.d),
            defined_mask: c.defined,
        }
    }
}

impl TryFrom<CenterRepr> for Center {
    type Error = String;

    fn try_from(r: CenterRepr) -> std::result::Result<Self, String> {
        if r.defined_mask.len() != r.length || r.values.len() != r.length || r.deriv.len() != r.length {
            return Err("center arrays disagree with its length".into());
        }
        Ok(Center {
            d: r.d,
            values: unrows(&r.values, r.d)?,
            deriv: unrows(&r.deriv, r.d)?,
            defined: r.defined_mask,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Clusters re-seeded after losing all membership mass.
    pub reseeds: usize,
    /// Elongation passes that changed at least one center.
    pub elongations: Vec<ElongationOutcome>,
    /// Indices `t` of `objective_trace` where `trace[t] <= trace[t - 1]` is
    /// not guaranteed (after elongation or re-seeding).
    pub trace_exempt: Vec<usize>,
    /// Global stopping statistic at each iteration.
    pub stopping_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbKmaState {
    /// Memberships, `p[k][i]`.
    pub p: Vec<Vec<f64>>,
    /// Start index of curve `i`'s window aligned to center `k`.
    pub shifts: Vec<Vec<i64>>,
    /// Squared distances at the current shifts, `dists[k][i]`.
    pub dists: Vec<Vec<f64>>,
    pub centers: Vec<Center>,
    pub objective_trace: Vec<f64>,
    pub iter: usize,
    pub converged: bool,
    pub cleaned_p: Option<Vec<Vec<bool>>>,
    pub diagnostics: Diagnostics,
}

impl ProbKmaState {
    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn n(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    /// Hard assignment of each curve to its highest-membership cluster
    /// (lowest index on ties).
    pub fn hard_assignment(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                let mut best = 0;
                for k in 1..self.k() {
                    if self.p[k][i] > self.p[best][i] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    /// Lengths of the current centers.
    pub fn lengths(&self) -> Vec<usize> {
        self.centers.iter().map(Center::len).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregation_parsing() {
        assert_eq!("max".parse::<Aggregation>().unwrap(), Aggregation::Max);
        assert_eq!("mean".parse::<Aggregation>().unwrap(), Aggregation::Mean);
        assert_eq!(
            "quantile:0.25".parse::<Aggregation>().unwrap(),
            Aggregation::Quantile(0.25)
        );
        assert!("quantile:2".parse::<Aggregation>().is_err());
        assert!("median".parse::<Aggregation>().is_err());
    }

    #[test]
    fn params_validation() {
        let base = ProbKmaParams::new(2, 40, 70, DistanceParams::uniform(1, 0.5));
        assert!(base.validate().is_ok());
        let mut p = base.clone();
        p.m = 1.0;
        assert!(p.validate().is_err());
        let mut p = base.clone();
        p.c_min = vec![80, 40];
        assert!(p.validate().is_err());
        let mut p = base.clone();
        p.c_min = vec![40];
        assert!(p.validate().is_err());
        let mut p = base;
        p.tol = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn center_json_keeps_undefined_points() {
        let c = Center::new(1, vec![1.0, f64::NAN], vec![0.5, f64::NAN], vec![true, false]);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("null"));
        let back: Center = serde_json::from_str(&s).unwrap();
        assert_eq!(back.defined_mask(), c.defined_mask());
        assert_eq!(back.values()[0], 1.0);
        assert!(back.values()[1].is_nan());
    }
}
