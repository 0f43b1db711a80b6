use serde::{Deserialize, Serialize};

use super::{DiscoveredMotif, Occurrence};

/// Final filtering of searched motifs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectParams {
    /// Motifs with fewer occurrences are dropped.
    pub min_frequency: usize,
    /// Two occurrences on one curve coincide when they share at least this
    /// fraction of the shorter motif length.
    pub overlap_frac: f64,
    /// A motif is redundant when more than this share of its occurrences
    /// coincide with occurrences of an already accepted motif.
    pub max_shared: f64,
}

impl Default for SelectParams {
    fn default() -> Self {
        SelectParams {
            min_frequency: 5,
            overlap_frac: 0.2,
            max_shared: 0.5,
        }
    }
}

fn mean_dist(m: &DiscoveredMotif) -> f64 {
    m.occurrences.iter().map(|o| o.dist).sum::<f64>() / m.occurrences.len().max(1) as f64
}

fn coincide(a: &Occurrence, la: usize, b: &Occurrence, lb: usize, frac: f64) -> bool {
    if a.curve_index != b.curve_index {
        return false;
    }
    let from = a.start.max(b.start);
    let to = (a.start + la as i64).min(b.start + lb as i64);
    to > from && (to - from) as f64 >= frac * la.min(lb) as f64
}

/// Drops infrequent motifs, then visits the rest by increasing mean
/// occurrence distance and keeps a motif only if it mostly maps portions not
/// already claimed by a kept motif. Kept motifs are renumbered in order.
pub fn select(motifs: Vec<DiscoveredMotif>, params: &SelectParams) -> Vec<DiscoveredMotif> {
    let mut pool: Vec<DiscoveredMotif> = motifs
        .into_iter()
        .filter(|m| !m.occurrences.is_empty() && m.occurrences.len() >= params.min_frequency)
        .collect();
    pool.sort_by(|a, b| mean_dist(a).total_cmp(&mean_dist(b)).then(a.id.cmp(&b.id)));
    let mut kept: Vec<DiscoveredMotif> = Vec::new();
    for mut m in pool {
        let len = m.center.len();
        let shared = m
            .occurrences
            .iter()
            .filter(|o| {
                kept.iter().any(|k| {
                    let kl = k.center.len();
                    k.occurrences.iter().any(|p| coincide(o, len, p, kl, params.overlap_frac))
                })
            })
            .count();
        if shared as f64 > params.max_shared * m.occurrences.len() as f64 {
            continue;
        }
        m.id = kept.len();
        for o in m.occurrences.iter_mut() {
            o.motif_id = m.id;
        }
        kept.push(m);
    }
    kept
}
