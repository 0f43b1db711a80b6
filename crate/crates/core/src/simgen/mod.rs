//! Synthetic curve sets with planted functional motifs.
//!
//! Curves are B-splines with equally spaced knots. Background coefficients
//! are drawn from a Beta(0.45, 0.45) rescaled to `[a, b]`; a motif is a block
//! of consecutive coefficients copied (with Gaussian noise and an optional
//! level constant) into the coefficient vector of every curve it occurs in.
//! Because each basis function has support of length `n T`, a block of `n + j`
//! coefficients pins down the curve exactly on `(j + 1) T` of the domain.

mod bspline;
mod presets;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

pub use bspline::{basis_at, bspline_eval, domain_end};
pub use presets::{preset, Preset};

use crate::curveset::{estimate_derivatives, Curve, CurveSet, Grid};
use crate::error::{Error, Result};
use crate::stats::derive_seed;

pub const BETA_SHAPE: (f64, f64) = (0.45, 0.45);

/// One planted block: motif `motif` overwriting coefficients from `knot` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub motif: usize,
    pub knot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub order: usize,
    pub knot_spacing: f64,
    /// Basis size `L` for every curve.
    pub n_coeffs: usize,
    pub coef_range: (f64, f64),
    pub beta: (f64, f64),
    /// Noise-free motif coefficient blocks.
    pub motifs: Vec<Vec<f64>>,
    /// Per curve, its planted blocks.
    pub layout: Vec<Vec<Placement>>,
    pub sigma: f64,
    pub level_shift_range: Option<(f64, f64)>,
    /// Curve length `l`; curves are sampled at `0, 1, ..., l`.
    pub length: usize,
    pub n_curves: usize,
    pub seed: u64,
    /// Optional per-curve `(start, length)` windows into the sampled spline,
    /// overriding `[0, length]`.
    #[serde(default)]
    pub windows: Option<Vec<(usize, usize)>>,
    /// Ground-truth cluster labels for clustering scenarios.
    #[serde(default)]
    pub labels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthOccurrence {
    pub motif: usize,
    pub curve_id: String,
    pub curve_index: usize,
    pub start: usize,
    /// Length in grid points.
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMotif {
    pub id: usize,
    /// Noise-free motif sampled on its own span.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLayout {
    pub occurrences: Vec<TruthOccurrence>,
    pub motifs: Vec<TruthMotif>,
    #[serde(default)]
    pub labels: Option<Vec<usize>>,
}

impl TruthLayout {
    pub fn occurrences_of(&self, motif: usize) -> impl Iterator<Item = &TruthOccurrence> {
        self.occurrences.iter().filter(move |o| o.motif == motif)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

fn to_points(t: f64) -> usize {
    t.round() as usize
}

impl ScenarioSpec {
    /// Grid span `[start, end)` in points covered by a block of `len`
    /// coefficients starting at `knot`.
    pub fn block_span(&self, knot: usize, len: usize) -> (usize, usize) {
        let t = self.knot_spacing;
        let from = to_points(knot as f64 * t);
        let to = to_points((knot + len + 1 - self.order) as f64 * t);
        (from, to + 1)
    }

    fn window(&self, i: usize) -> (usize, usize) {
        self.windows.as_ref().map_or((0, self.length), |w| w[i])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.order < 2 {
            return bad(format!("spline order must be at least 2, got {}", self.order));
        }
        if !(self.knot_spacing > 0.0) {
            return bad("knot spacing must be positive".into());
        }
        if self.n_coeffs < self.order {
            return bad(format!("need at least {} coefficients, got {}", self.order, self.n_coeffs));
        }
        if !(self.coef_range.0 < self.coef_range.1) {
            return bad("coefficient range must satisfy a < b".into());
        }
        if !(self.sigma >= 0.0) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if let Some((lo, hi)) = self.level_shift_range {
            if !(lo <= hi) {
                return bad("level shift range must satisfy lo <= hi".into());
            }
        }
        if self.layout.len() != self.n_curves {
            return bad(format!("layout has {} curves, expected {}", self.layout.len(), self.n_curves));
        }
        if let Some(w) = &self.windows {
            if w.len() != self.n_curves {
                return bad("one window per curve required".into());
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != self.n_curves {
                return bad("one label per curve required".into());
            }
        }
        if let Some(m) = self.motifs.iter().position(|m| m.len() < self.order) {
            return bad(format!("motif {m} has fewer than {} coefficients", self.order));
        }
        let span = domain_end(self.n_coeffs, self.order, self.knot_spacing);
        for i in 0..self.n_curves {
            let (s, len) = self.window(i);
            if len == 0 || (s + len) as f64 > span + 1e-9 {
                return bad(format!("curve {i}: window [{s}, {}] exceeds the spline domain [0, {span}]", s + len));
            }
            let mut blocks = self.layout[i].clone();
            blocks.sort_by_key(|p| p.knot);
            for p in &blocks {
                let blen = self.motifs.get(p.motif).map(Vec::len).ok_or_else(|| {
                    Error::InvalidParameter(format!("curve {i}: unknown motif {}", p.motif))
                })?;
                if p.knot + blen > self.n_coeffs {
                    return bad(format!("curve {i}: block at knot {} runs past the basis", p.knot));
                }
            }
            for w in blocks.windows(2) {
                let end = w[0].knot + self.motifs[w[0].motif].len();
                if w[1].knot < end + self.order {
                    return bad(format!(
                        "curve {i}: blocks at knots {} and {} are separated by fewer than {} background coefficients",
                        w[0].knot, w[1].knot, self.order
                    ));
                }
            }
        }
        Ok(())
    }
}

fn beta_draw(rng: &mut ChaCha8Rng, beta: &Beta, (a, b): (f64, f64)) -> f64 {
    a + (b - a) * beta.inverse_cdf(rng.random::<f64>())
}

/// Samples the curve set and its ground truth.
pub fn generate(spec: &ScenarioSpec) -> Result<(CurveSet, TruthLayout)> {
    spec.validate()?;
    let beta = Beta::new(spec.beta.0, spec.beta.1)
        .map_err(|e| Error::InvalidParameter(format!("beta parameters: {e}")))?;
    let span = domain_end(spec.n_coeffs, spec.order, spec.knot_spacing).floor() as usize;
    let grid: Vec<f64> = (0..=span).map(|t| t as f64).collect();

    let mut curves = Vec::with_capacity(spec.n_curves);
    let mut occurrences = Vec::new();
    for i in 0..spec.n_curves {
        let mut bg = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[1, i as u64]));
        let mut coeffs: Vec<f64> = (0..spec.n_coeffs)
            .map(|_| beta_draw(&mut bg, &beta, spec.coef_range))
            .collect();
        for (j, p) in spec.layout[i].iter().enumerate() {
            let mut noise = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[3, i as u64, j as u64]));
            let level = match spec.level_shift_range {
                Some((lo, hi)) if hi > lo => {
                    let mut r = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[4, i as u64, j as u64]));
                    r.random_range(lo..hi)
                }
                Some((lo, _)) => lo,
                None => 0.0,
            };
            for (c, &m) in coeffs[p.knot..].iter_mut().zip(&spec.motifs[p.motif]) {
                let eps: f64 = StandardNormal.sample(&mut noise);
                *c = m + level + spec.sigma * eps;
            }
        }
        let full = bspline_eval(&coeffs, spec.order, spec.knot_spacing, &grid)?;
        let (ws, wlen) = spec.window(i);
        let id = format!("curve_{i:02}");
        for p in &spec.layout[i] {
            let (from, to) = spec.block_span(p.knot, spec.motifs[p.motif].len());
            let (from, to) = (from.max(ws), to.min(ws + wlen + 1));
            if from < to {
                occurrences.push(TruthOccurrence {
                    motif: p.motif,
                    curve_id: id.clone(),
                    curve_index: i,
                    start: from - ws,
                    length: to - from,
                });
            }
        }
        curves.push(Curve::from_values(id, full[ws..=ws + wlen].to_vec())?);
    }
    let motifs = spec
        .motifs
        .iter()
        .enumerate()
        .map(|(id, block)| {
            let end = domain_end(block.len(), spec.order, spec.knot_spacing).round() as usize;
            let g: Vec<f64> = (0..=end).map(|t| t as f64).collect();
            Ok(TruthMotif {
                id,
                values: bspline_eval(block, spec.order, spec.knot_spacing, &g)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cs = estimate_derivatives(CurveSet::new(Grid::default(), curves)?);
    Ok((
        cs,
        TruthLayout {
            occurrences,
            motifs,
            labels: spec.labels.clone(),
        },
    ))
}

/// Draws `count` i.i.d. rescaled-Beta coefficients (used for motif blocks).
pub fn beta_coefficients(seed: u64, count: usize, range: (f64, f64)) -> Vec<f64> {
    let beta = Beta::new(BETA_SHAPE.0, BETA_SHAPE.1).expect("valid shape");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| beta_draw(&mut rng, &beta, range)).collect()
}

/// Masks random runs of at most `max_run` points outside every planted
/// occurrence until `frac` of each curve is missing, then re-estimates
/// derivatives. Runs never touch each other, so every gap is at most
/// `max_run` long. Deterministic in `seed`.
pub fn mask_gaps(cs: CurveSet, truth: &TruthLayout, frac: f64, max_run: usize, seed: u64) -> Result<CurveSet> {
    if !(0.0..1.0).contains(&frac) || max_run == 0 {
        return Err(Error::InvalidParameter(format!(
            "need frac in [0, 1) and max_run >= 1, got {frac} and {max_run}"
        )));
    }
    let mut cs = cs;
    for (i, c) in cs.curves.iter_mut().enumerate() {
        let n = c.n_points();
        let mut blocked = vec![false; n];
        for o in truth.occurrences.iter().filter(|o| o.curve_index == i) {
            blocked[o.start.min(n)..(o.start + o.length).min(n)].fill(true);
        }
        let target = (frac * n as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[5, i as u64]));
        let mut masked = 0;
        let mut tries = 0;
        while masked < target {
            tries += 1;
            if tries > 100_000 {
                return Err(Error::InvalidParameter(format!(
                    "cannot mask {target} points of {} outside its motifs",
                    c.id
                )));
            }
            let len = rng.random_range(1..=max_run).min(target - masked);
            if len > n {
                continue;
            }
            let start = rng.random_range(0..=n - len);
            // keep one free point on each side so runs stay separate
            let (lo, hi) = (start.saturating_sub(1), (start + len + 1).min(n));
            if blocked[lo..hi].iter().any(|&b| b) || !c.valid()[lo..hi].iter().all(|&v| v) {
                continue;
            }
            c.mask_range(start, start + len);
            masked += len;
        }
    }
    Ok(estimate_derivatives(cs))
}
