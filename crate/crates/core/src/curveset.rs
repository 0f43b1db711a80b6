//! Sampled multivariate curves on a shared uniform grid, with whole-point
//! validity masks for missing regions.
//!
//! Missing values are stored as `NaN` in both the value and derivative
//! tracks; `valid[t]` is false exactly when every component at `t` is `NaN`.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STEP_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub step: f64,
    pub origin: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            step: 1.0,
            origin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub id: String,
    d: usize,
    values: Vec<f64>,
    deriv: Vec<f64>,
    valid: Vec<bool>,
}

impl Curve {
    /// Builds a curve from row-major `[n_points × d]` values. Any point with a
    /// non-finite component is treated as missing in all components.
    pub fn new(id: impl Into<String>, d: usize, mut values: Vec<f64>) -> Result<Self> {
        if d == 0 || values.is_empty() {
            return Err(Error::Empty);
        }
        if values.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: values.len() % d,
            });
        }
        let n = values.len() / d;
        let mut valid = vec![true; n];
        for t in 0..n {
            let row = &mut values[t * d..(t + 1) * d];
            if row.iter().any(|v| !v.is_finite()) {
                row.iter_mut().for_each(|v| *v = f64::NAN);
                valid[t] = false;
            }
        }
        Ok(Curve {
            id: id.into(),
            d,
            deriv: vec![f64::NAN; values.len()],
            values,
            valid,
        })
    }

    /// Univariate convenience constructor.
    pub fn from_values(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Curve::new(id, 1, values)
    }

    pub fn n_points(&self) -> usize {
        self.valid.len()
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

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn value(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.d + j]
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Marks the half-open index range `[from, to)` as missing.
    pub fn mask_range(&mut self, from: usize, to: usize) {
        let to = to.min(self.n_points());
        for t in from..to {
            self.valid[t] = false;
            for j in 0..self.d {
                self.values[t * self.d + j] = f64::NAN;
                self.deriv[t * self.d + j] = f64::NAN;
            }
        }
    }

    /// Zero-copy view of `length` points starting at `start`.
    pub fn portion(&self, start: usize, length: usize) -> Result<Portion<'_>> {
        extract_portion(self, start, length)
    }

    /// Window that may hang off either end of the curve; points outside the
    /// curve are reported as missing.
    pub fn padded_window(&self, start: i64, length: usize) -> OwnedWindow {
        let d = self.d;
        let n = self.n_points() as i64;
        let mut values = vec![f64::NAN; length * d];
        let mut deriv = vec![f64::NAN; length * d];
        let mut valid = vec![false; length];
        let lo = start.max(0);
        let hi = (start + length as i64).min(n);
        if lo < hi {
            let (src_lo, src_hi) = (lo as usize, hi as usize);
            let dst_lo = (lo - start) as usize;
            let dst_hi = dst_lo + (src_hi - src_lo);
            values[dst_lo * d..dst_hi * d].copy_from_slice(&self.values[src_lo * d..src_hi * d]);
            deriv[dst_lo * d..dst_hi * d].copy_from_slice(&self.deriv[src_lo * d..src_hi * d]);
            valid[dst_lo..dst_hi].copy_from_slice(&self.valid[src_lo..src_hi]);
        }
        OwnedWindow {
            d,
            values,
            deriv,
            valid,
        }
    }
}

/// A borrowed window `[start, start + length)` of a curve.
#[derive(Debug, Clone, Copy)]
pub struct Portion<'a> {
    pub curve_id: &'a str,
    pub start: usize,
    pub length: usize,
    pub d: usize,
    pub values: &'a [f64],
    pub deriv: &'a [f64],
    pub valid: &'a [bool],
}

impl<'a> Portion<'a> {
    /// Sub-window relative to this portion.
    pub fn sub(&self, start: usize, length: usize) -> Result<Portion<'a>> {
        if start + length > self.length {
            return Err(Error::WindowOutOfRange {
                start: start as i64,
                len: length,
                n_points: self.length,
            });
        }
        let d = self.d;
        Ok(Portion {
            curve_id: self.curve_id,
            start: self.start + start,
            length,
            d,
            values: &self.values[start * d..(start + length) * d],
            deriv: &self.deriv[start * d..(start + length) * d],
            valid: &self.valid[start..start + length],
        })
    }
}

/// Owned counterpart of [`Portion`] for windows that extend past the curve.
#[derive(Debug, Clone)]
pub struct OwnedWindow {
    pub d: usize,
    pub values: Vec<f64>,
    pub deriv: Vec<f64>,
    pub valid: Vec<bool>,
}

impl OwnedWindow {
    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub grid: Grid,
    pub curves: Vec<Curve>,
    d: usize,
    has_derivatives: bool,
}

impl CurveSet {
    pub fn new(grid: Grid, curves: Vec<Curve>) -> Result<Self> {
        if !(grid.step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid step must be positive, got {}",
                grid.step
            )));
        }
        let first = curves.first().ok_or(Error::Empty)?;
        let d = first.dim();
        if let Some(c) = curves.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.dim(),
            });
        }
        Ok(CurveSet {
            grid,
            curves,
            d,
            has_derivatives: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn has_derivatives(&self) -> bool {
        self.has_derivatives
    }

    pub fn min_len(&self) -> usize {
        self.curves.iter().map(Curve::n_points).min().unwrap_or(0)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.curves.iter().position(|c| c.id == id)
    }

    /// Longest run of consecutive valid points across all curves.
    pub fn longest_valid_run(&self) -> usize {
        self.curves
            .iter()
            .map(|c| {
                let (mut best, mut cur) = (0, 0);
                for &v in c.valid() {
                    cur = if v { cur + 1 } else { 0 };
                    best = best.max(cur);
                }
                best
            })
            .max()
            .unwrap_or(0)
    }

    /// Common preprocessing: fill gaps up to `max_gap` points, then
    /// estimate derivatives.
    pub fn preprocess(self, max_gap: usize) -> Self {
        estimate_derivatives(fill_small_gaps(self, max_gap))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    CsvLong,
    Json,
}

impl Format {
    /// Guess from the file extension; anything but `.json` is long CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::CsvLong,
        }
    }
}

pub fn load_curves(path: &Path, format: Format) -> Result<CurveSet> {
    let mut text = String::new();
    fs::File::open(path)?.read_to_string(&mut text)?;
    match format {
        Format::CsvLong => parse_csv_long(&text),
        Format::Json => parse_json(&text),
    }
}

fn parse_value(tok: &str) -> Result<f64> {
    let tok = tok.trim();
    if tok.eq_ignore_ascii_case("nan") || tok.eq_ignore_ascii_case("na") || tok.is_empty() {
        return Ok(f64::NAN);
    }
    tok.parse::<f64>()
        .map_err(|_| Error::Parse(format!("invalid number '{tok}'")))
}

/// Parses `curve_id,t,v1,...,vd` rows. Rows of one curve must be contiguous
/// and ordered by `t`; curves keep their order of first appearance.
pub fn parse_csv_long(text: &str) -> Result<CurveSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 {
        return Err(Error::Parse(
            "expected header curve_id,t,v1[,...,vd]".to_string(),
        ));
    }
    let d = headers.len() - 2;

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut last_id: Option<String> = None;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != d + 2 {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: rec.len().saturating_sub(2),
            });
        }
        let id = rec[0].to_string();
        let t = parse_value(&rec[1])?;
        if !t.is_finite() {
            return Err(Error::Parse(format!("missing time value in curve '{id}'")));
        }
        if last_id.as_deref() != Some(id.as_str()) {
            if rows.contains_key(&id) {
                return Err(Error::Parse(format!("rows of curve '{id}' are not contiguous")));
            }
            order.push(id.clone());
            rows.insert(id.clone(), (Vec::new(), Vec::new()));
            last_id = Some(id.clone());
        }
        let entry = rows.get_mut(&id).expect("inserted above");
        entry.0.push(t);
        for j in 0..d {
            entry.1.push(parse_value(&rec[j + 2])?);
        }
    }
    if order.is_empty() {
        return Err(Error::Empty);
    }

    let mut step: Option<f64> = None;
    let mut origin = None;
    let mut curves = Vec::with_capacity(order.len());
    for id in order {
        let (ts, vals) = rows.remove(&id).expect("present");
        origin.get_or_insert(ts[0]);
        for w in ts.windows(2) {
            let dt = w[1] - w[0];
            if !(dt > 0.0) {
                return Err(Error::NonUniformGrid {
                    curve: id,
                    detail: format!("time not increasing at t={}", w[1]),
                });
            }
            match step {
                None => step = Some(dt),
                Some(s) if ((dt - s) / s).abs() > STEP_RTOL => {
                    return Err(Error::NonUniformGrid {
                        curve: id,
                        detail: format!("step {dt} differs from {s}"),
                    });
                }
                _ => {}
            }
        }
        curves.push(Curve::new(id, d, vals)?);
    }
    CurveSet::new(
        Grid {
            step: step.unwrap_or(1.0),
            origin: origin.unwrap_or(0.0),
        },
        curves,
    )
}

#[derive(Serialize, Deserialize)]
struct JsonCurve {
    id: String,
    values: Vec<Vec<Option<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct JsonCurveSet {
    step: f64,
    #[serde(default)]
    origin: f64,
    curves: Vec<JsonCurve>,
}

pub fn parse_json(text: &str) -> Result<CurveSet> {
    let raw: JsonCurveSet = serde_json::from_str(text)?;
    if raw.curves.is_empty() {
        return Err(Error::Empty);
    }
    let d = raw
        .curves
        .iter()
        .flat_map(|c| c.values.first())
        .map(Vec::len)
        .next()
        .ok_or(Error::Empty)?;
    let mut curves = Vec::with_capacity(raw.curves.len());
    for c in raw.curves {
        let mut flat = Vec::with_capacity(c.values.len() * d);
        for row in &c.values {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            flat.extend(row.iter().map(|v| v.unwrap_or(f64::NAN)));
        }
        curves.push(Curve::new(c.id, d, flat)?);
    }
    CurveSet::new(
        Grid {
            step: raw.step,
            origin: raw.origin,
        },
        curves,
    )
}

fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NaN".to_string()
    }
}

pub fn write_csv_long<W: Write>(cs: &CurveSet, mut out: W) -> Result<()> {
    let d = cs.dim();
    let mut header = String::from("curve_id,t");
    for j in 1..=d {
        header.push_str(&format!(",v{j}"));
    }
    writeln!(out, "{header}")?;
    for c in &cs.curves {
        for t in 0..c.n_points() {
            let time = cs.grid.origin + t as f64 * cs.grid.step;
            write!(out, "{},{}", c.id, time)?;
            for j in 0..d {
                write!(out, ",{}", fmt_value(c.value(t, j)))?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn write_json<W: Write>(cs: &CurveSet, out: W) -> Result<()> {
    let d = cs.dim();
    let raw = JsonCurveSet {
        step: cs.grid.step,
        origin: cs.grid.origin,
        curves: cs
            .curves
            .iter()
            .map(|c| JsonCurve {
                id: c.id.clone(),
                values: c
                    .values()
                    .chunks(d)
                    .map(|row| row.iter().map(|&v| v.is_finite().then_some(v)).collect())
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_writer(out, &raw)?;
    Ok(())
}

pub fn save_curves(cs: &CurveSet, path: &Path, format: Format) -> Result<()> {
    let f = std::io::BufWriter::new(fs::File::create(path)?);
    match format {
        Format::CsvLong => write_csv_long(cs, f),
        Format::Json => write_json(cs, f),
    }
}

/// Linearly interpolates interior gaps of at most `max_gap` points.
pub fn fill_small_gaps(mut cs: CurveSet, max_gap: usize) -> CurveSet {
    if max_gap == 0 {
        return cs;
    }
    let mut touched = false;
    for c in cs.curves.iter_mut() {
        let n = c.n_points();
        let d = c.d;
        let mut t = 0;
        while t < n {
            if c.valid[t] {
                t += 1;
                continue;
            }
            let gap_start = t;
            while t < n && !c.valid[t] {
                t += 1;
            }
            let gap_end = t;
            if gap_start == 0 || gap_end == n || gap_end - gap_start > max_gap {
                continue;
            }
            let (left, right) = (gap_start - 1, gap_end);
            let span = (right - left) as f64;
            for u in gap_start..gap_end {
                let w = (u - left) as f64 / span;
                for j in 0..d {
                    let a = c.values[left * d + j];
                    let b = c.values[right * d + j];
                    c.values[u * d + j] = a + w * (b - a);
                }
                c.valid[u] = true;
            }
            touched = true;
        }
    }
    if touched && cs.has_derivatives {
        return estimate_derivatives(cs);
    }
    cs
}

/// Finite-difference derivatives: central where both neighbours are valid,
/// one-sided at segment edges, missing for isolated points.
pub fn estimate_derivatives(mut cs: CurveSet) -> CurveSet {
    let h = cs.grid.step;
    for c in cs.curves.iter_mut() {
        let n = c.n_points();
        let d = c.d;
        let mut deriv = vec![f64::NAN; n * d];
        for t in 0..n {
            if !c.valid[t] {
                continue;
            }
            let prev = t > 0 && c.valid[t - 1];
            let next = t + 1 < n && c.valid[t + 1];
            for j in 0..d {
                let x = |u: usize| c.values[u * d + j];
                deriv[t * d + j] = match (prev, next) {
                    (true, true) => (x(t + 1) - x(t - 1)) / (2.0 * h),
                    (false, true) => (x(t + 1) - x(t)) / h,
                    (true, false) => (x(t) - x(t - 1)) / h,
                    (false, false) => f64::NAN,
                };
            }
        }
        c.deriv = deriv;
    }
    cs.has_derivatives = true;
    cs
}

pub fn extract_portion(c: &Curve, start: usize, length: usize) -> Result<Portion<'_>> {
    if start + length > c.n_points() {
        return Err(Error::WindowOutOfRange {
            start: start as i64,
            len: length,
            n_points: c.n_points(),
        });
    }
    let d = c.d;
    Ok(Portion {
        curve_id: &c.id,
        start,
        length,
        d,
        values: &c.values[start * d..(start + length) * d],
        deriv: &c.deriv[start * d..(start + length) * d],
        valid: &c.valid[start..start + length],
    })
}
