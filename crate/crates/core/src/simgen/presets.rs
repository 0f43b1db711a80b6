//! Ready-made scenarios: planted-motif sets and two-cluster comparisons.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{beta_coefficients, Placement, ScenarioSpec, BETA_SHAPE};
use crate::error::{Error, Result};
use crate::stats::derive_seed;

const ORDER: usize = 3;
const SPACING: f64 = 10.0;
const RANGE: (f64, f64) = (-15.0, 15.0);
/// Coefficients in a 60-long motif of order 3 with knots 10 apart.
const MOTIF_COEFFS: usize = 8;
/// Occurrences stay inside the leftmost stretch of this length.
const PLANT_REGION: usize = 200;
const CLUSTER_SIZE: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum Preset {
    /// Two motifs sharing shape and level.
    Scenario1 { l: usize, sigma: f64 },
    /// Two motifs sharing shape, each occurrence at its own level.
    Scenario2 { l: usize, sigma: f64 },
    /// Two clusters; curves are the whole motif, aligned.
    CompA { sigma: f64 },
    /// Two clusters; curves are whole motifs, misaligned.
    CompB { sigma: f64 },
    /// Two clusters differing on an aligned portion.
    CompC { sigma: f64 },
    /// Two clusters differing on a misaligned portion.
    CompD { sigma: f64 },
}

impl Preset {
    /// Builds a preset from its name; `l` applies only to the scenarios.
    pub fn from_name(name: &str, l: usize, sigma: f64) -> Result<Self> {
        Ok(match name {
            "scenario1" => Preset::Scenario1 { l, sigma },
            "scenario2" => Preset::Scenario2 { l, sigma },
            "comp_a" => Preset::CompA { sigma },
            "comp_b" => Preset::CompB { sigma },
            "comp_c" => Preset::CompC { sigma },
            "comp_d" => Preset::CompD { sigma },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown preset '{other}' (expected scenario1, scenario2, comp_a, comp_b, comp_c or comp_d)"
                )))
            }
        })
    }
}

fn base(n_coeffs: usize, length: usize, sigma: f64, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        order: ORDER,
        knot_spacing: SPACING,
        n_coeffs,
        coef_range: RANGE,
        beta: BETA_SHAPE,
        motifs: Vec::new(),
        layout: Vec::new(),
        sigma,
        level_shift_range: None,
        length,
        n_curves: 0,
        seed,
        windows: None,
        labels: None,
    }
}

fn n_coeffs_for(length: usize) -> usize {
    (length as f64 / SPACING).ceil() as usize + ORDER - 1
}

fn motif_blocks(seed: u64, count: usize, len: usize) -> Vec<Vec<f64>> {
    let flat = beta_coefficients(derive_seed(seed, &[0]), count * len, RANGE);
    flat.chunks(len).map(<[f64]>::to_vec).collect()
}

fn scenario(l: usize, sigma: f64, seed: u64) -> Result<ScenarioSpec> {
    if l < PLANT_REGION {
        return Err(Error::InvalidParameter(format!(
            "scenario curves must be at least {PLANT_REGION} long, got {l}"
        )));
    }
    let mut spec = base(n_coeffs_for(l), l, sigma, seed);
    spec.motifs = motif_blocks(seed, 2, MOTIF_COEFFS);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
    // last knot at which a block still ends inside the planting region
    let last = n_coeffs_for(PLANT_REGION) - MOTIF_COEFFS;
    let pairs: Vec<(usize, usize)> = (0..=last)
        .flat_map(|a| (a + MOTIF_COEFFS + ORDER..=last).map(move |b| (a, b)))
        .collect();
    let single = |rng: &mut ChaCha8Rng, m: usize| vec![Placement { motif: m, knot: rng.random_range(0..=last) }];
    let double = |rng: &mut ChaCha8Rng, m1: usize, m2: usize| {
        let (a, b) = pairs[rng.random_range(0..pairs.len())];
        vec![Placement { motif: m1, knot: a }, Placement { motif: m2, knot: b }]
    };
    let mut layout = Vec::new();
    for m in 0..2 {
        for _ in 0..6 {
            layout.push(single(&mut rng, m));
        }
        for _ in 0..2 {
            layout.push(double(&mut rng, m, m));
        }
    }
    for _ in 0..2 {
        let (m1, m2) = if rng.random::<bool>() { (0, 1) } else { (1, 0) };
        layout.push(double(&mut rng, m1, m2));
    }
    layout.push(Vec::new());
    layout.push(Vec::new());
    layout.shuffle(&mut rng);
    spec.n_curves = layout.len();
    spec.layout = layout;
    Ok(spec)
}

fn labels() -> Vec<usize> {
    (0..2 * CLUSTER_SIZE).map(|i| i / CLUSTER_SIZE).collect()
}

fn comp(which: char, sigma: f64, seed: u64) -> ScenarioSpec {
    let labels = labels();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
    let motif_len = 60;
    let mut spec = match which {
        'a' => {
            let mut s = base(MOTIF_COEFFS, motif_len, sigma, seed);
            s.motifs = motif_blocks(seed, 2, MOTIF_COEFFS);
            s.layout = labels.iter().map(|&m| vec![Placement { motif: m, knot: 0 }]).collect();
            s
        }
        'b' => {
            // each curve is a window of a longer cluster template that
            // always contains the central 60-long stretch
            let extra = 2;
            let margin = (extra as f64 * SPACING / 2.0) as usize;
            let mut s = base(MOTIF_COEFFS + extra, motif_len + 2 * margin, sigma, seed);
            s.motifs = motif_blocks(seed, 2, MOTIF_COEFFS + extra);
            s.layout = labels.iter().map(|&m| vec![Placement { motif: m, knot: 0 }]).collect();
            s.windows = Some(
                labels
                    .iter()
                    .map(|_| {
                        let left = rng.random_range(0..=margin);
                        let right = rng.random_range(0..=margin);
                        (margin - left, motif_len + left + right)
                    })
                    .collect(),
            );
            s
        }
        _ => {
            let length = 150;
            let n_coeffs = n_coeffs_for(length);
            let mut s = base(n_coeffs, length, sigma, seed);
            s.motifs = motif_blocks(seed, 2, MOTIF_COEFFS);
            let last = n_coeffs - MOTIF_COEFFS;
            let fixed = last / 2;
            s.layout = labels
                .iter()
                .map(|&m| {
                    let knot = if which == 'c' { fixed } else { rng.random_range(0..=last) };
                    vec![Placement { motif: m, knot }]
                })
                .collect();
            s
        }
    };
    spec.n_curves = labels.len();
    spec.labels = Some(labels);
    spec
}

/// Fully populated scenario for `p` under `seed`.
pub fn preset(p: Preset, seed: u64) -> Result<ScenarioSpec> {
    match p {
        Preset::Scenario1 { l, sigma } => scenario(l, sigma, seed),
        Preset::Scenario2 { l, sigma } => {
            let mut s = scenario(l, sigma, seed)?;
            s.level_shift_range = Some((-10.0, 10.0));
            Ok(s)
        }
        Preset::CompA { sigma } => Ok(comp('a', sigma, seed)),
        Preset::CompB { sigma } => Ok(comp('b', sigma, seed)),
        Preset::CompC { sigma } => Ok(comp('c', sigma, seed)),
        Preset::CompD { sigma } => Ok(comp('d', sigma, seed)),
    }
}
