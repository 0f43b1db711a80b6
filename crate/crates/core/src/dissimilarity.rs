//! Gap-aware Sobolev-like dissimilarity between a curve window and a
//! cluster center, plus distance profiles over integer shifts.
//!
//! Integrals over the center's domain are discretised as means over the grid
//! points that are usable in both arguments. A point is usable when its value
//! is present and, for `alpha > 0`, its derivative is present too.

use serde::{Deserialize, Serialize};

use crate::curveset::{Curve, OwnedWindow, Portion};
use crate::error::{Error, Result};
use crate::probkma::Center;

pub const DEFAULT_OVERLAP_FLOOR: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceParams {
    /// Weight of the derivative term; `1 - alpha` weighs the levels.
    pub alpha: f64,
    /// Per-component weights `w_j`.
    pub weights: Vec<f64>,
    /// Minimum fraction of the center window that must be jointly valid.
    pub overlap_floor: f64,
}

impl DistanceParams {
    pub fn new(alpha: f64, weights: Vec<f64>, overlap_floor: f64) -> Result<Self> {
        let p = DistanceParams {
            alpha,
            weights,
            overlap_floor,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unit weights for `d` components and the default overlap floor.
    pub fn uniform(d: usize, alpha: f64) -> Self {
        DistanceParams {
            alpha,
            weights: vec![1.0; d],
            overlap_floor: DEFAULT_OVERLAP_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.weights.is_empty() || self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(
                "component weights must be positive".to_string(),
            ));
        }
        if !(self.overlap_floor > 0.0 && self.overlap_floor <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "overlap floor must lie in (0, 1], got {}",
                self.overlap_floor
            )));
        }
        Ok(())
    }

    fn uses_levels(&self) -> bool {
        self.alpha < 1.0
    }

    fn uses_derivatives(&self) -> bool {
        self.alpha > 0.0
    }

    /// Number of jointly usable points needed for a window of `len` points.
    pub fn required_points(&self, len: usize) -> usize {
        let floor = (self.overlap_floor * len as f64 - 1e-9).ceil().max(1.0) as usize;
        if self.uses_derivatives() {
            floor.max(2)
        } else {
            floor
        }
    }
}

/// Borrowed value/derivative/mask triple over `len` points of dimension `d`.
#[derive(Debug, Clone, Copy)]
pub struct Track<'a> {
    pub d: usize,
    pub values: &'a [f64],
    pub deriv: &'a [f64],
    pub mask: &'a [bool],
}

impl<'a> Track<'a> {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// Sub-track `[start, start + len)`; panics when out of range.
    pub fn slice(&self, start: usize, len: usize) -> Track<'a> {
        let d = self.d;
        Track {
            d,
            values: &self.values[start * d..(start + len) * d],
            deriv: &self.deriv[start * d..(start + len) * d],
            mask: &self.mask[start..start + len],
        }
    }
}

impl<'a> From<&Portion<'a>> for Track<'a> {
    fn from(p: &Portion<'a>) -> Self {
        Track {
            d: p.d,
            values: p.values,
            deriv: p.deriv,
            mask: p.valid,
        }
    }
}

impl<'a> From<&'a OwnedWindow> for Track<'a> {
    fn from(w: &'a OwnedWindow) -> Self {
        Track {
            d: w.d,
            values: &w.values,
            deriv: &w.deriv,
            mask: &w.valid,
        }
    }
}

impl<'a> From<&'a Curve> for Track<'a> {
    fn from(c: &'a Curve) -> Self {
        Track {
            d: c.dim(),
            values: c.values(),
            deriv: c.deriv(),
            mask: c.valid(),
        }
    }
}

/// Squared dissimilarity between two equal-length tracks.
///
/// Returns [`Error::Inadmissible`] when fewer than
/// [`DistanceParams::required_points`] points are jointly usable.
pub fn d_alpha_sq_tracks(x: Track<'_>, v: Track<'_>, p: &DistanceParams) -> Result<f64> {
    let len = x.len();
    let d = x.d;
    debug_assert_eq!(len, v.len());
    debug_assert_eq!(d, v.d);
    if p.weights.len() != d {
        return Err(Error::DimensionMismatch {
            expected: p.weights.len(),
            got: d,
        });
    }
    let use_der = p.uses_derivatives();
    let use_lev = p.uses_levels();
    let mut lev = vec![0.0; d];
    let mut der = vec![0.0; d];
    let mut n = 0usize;
    for t in 0..len {
        if !(x.mask[t] && v.mask[t]) {
            continue;
        }
        let row = t * d..(t + 1) * d;
        if use_der
            && (x.deriv[row.clone()].iter().any(|g| !g.is_finite())
                || v.deriv[row.clone()].iter().any(|g| !g.is_finite()))
        {
            continue;
        }
        n += 1;
        for j in 0..d {
            let i = t * d + j;
            if use_lev {
                let e = x.values[i] - v.values[i];
                lev[j] += e * e;
            }
            if use_der {
                let e = x.deriv[i] - v.deriv[i];
                der[j] += e * e;
            }
        }
    }
    let required = p.required_points(len);
    if n < required {
        return Err(Error::Inadmissible { valid: n, required });
    }
    let nf = n as f64;
    let df = d as f64;
    let mut level_term = 0.0;
    let mut deriv_term = 0.0;
    for j in 0..d {
        level_term += p.weights[j] * lev[j] / nf;
        deriv_term += p.weights[j] * der[j] / nf;
    }
    Ok((1.0 - p.alpha) * level_term / df + p.alpha * deriv_term / df)
}

pub fn d_alpha_sq(x: &Portion<'_>, v: &Center, p: &DistanceParams) -> Result<f64> {
    if x.length != v.len() {
        return Err(Error::InvalidParameter(format!(
            "portion length {} differs from center length {}",
            x.length,
            v.len()
        )));
    }
    d_alpha_sq_tracks(x.into(), v.track(), p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub shift: usize,
    /// `None` when the window is inadmissible.
    pub dist_sq: Option<f64>,
}

/// Squared distances of `v` against every in-range window of `track`.
pub fn profile_tracks(track: Track<'_>, v: Track<'_>, p: &DistanceParams) -> Vec<ProfileEntry> {
    let len = v.len();
    if len == 0 || len > track.len() {
        return Vec::new();
    }
    (0..=track.len() - len)
        .map(|s| ProfileEntry {
            shift: s,
            dist_sq: d_alpha_sq_tracks(track.slice(s, len), v, p).ok(),
        })
        .collect()
}

/// One entry per start index `0..=n_points - len`; errors when no window is
/// admissible.
pub fn distance_profile(c: &Curve, v: &Center, p: &DistanceParams) -> Result<Vec<ProfileEntry>> {
    let prof = profile_tracks(c.into(), v.track(), p);
    if prof.iter().all(|e| e.dist_sq.is_none()) {
        return Err(Error::NoAdmissibleWindow {
            curve: c.id.clone(),
            len: v.len(),
        });
    }
    Ok(prof)
}

/// Admissible entry with minimum distance; ties go to the smallest shift.
pub fn best_shift(profile: &[ProfileEntry]) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for e in profile {
        if let Some(dist) = e.dist_sq {
            match best {
                Some((s, b)) if dist > b || (dist == b && e.shift > s) => {}
                _ => best = Some((e.shift, dist)),
            }
        }
    }
    best.ok_or_else(|| Error::NoAdmissibleWindow {
        curve: String::new(),
        len: 0,
    })
}

/// Slides the shorter track inside the longer one and returns the best
/// relative offset and squared distance. `None` when nothing is admissible.
pub fn nested_min_sq(a: Track<'_>, b: Track<'_>, p: &DistanceParams) -> Option<(usize, f64)> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    best_shift(&profile_tracks(long, short, p)).ok()
}
