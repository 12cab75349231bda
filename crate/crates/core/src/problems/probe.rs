use serde::{Deserialize, Serialize};

use crate::green::GreenOperator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnuliProbe {
    pub annuli: Vec<usize>,
    /// Green energy of the uniform unit measure on each annulus.
    pub energies: Vec<f64>,
    pub strictly_decreasing: bool,
    /// Last energy over the first.
    pub final_ratio: f64,
}

impl AnnuliProbe {
    /// Energies fall strictly and end at no more than `ratio` of the start.
    pub fn shows_escape(&self, ratio: f64) -> bool {
        self.energies.len() >= 2 && self.strictly_decreasing && self.final_ratio <= ratio
    }
}

/// Unit measures proportional to the quadrature weights on each annulus.
/// `annulus[i]` is the annulus index of local node `i` (0 = none).
pub fn annuli_measures(annulus: &[usize], quad: &[f64]) -> Vec<(usize, Vec<f64>)> {
    let kmax = annulus.iter().copied().max().unwrap_or(0);
    (1..=kmax)
        .filter_map(|k| {
            let total: f64 = (0..annulus.len()).filter(|&i| annulus[i] == k).map(|i| quad[i]).sum();
            (total > 0.0).then(|| (k, (0..annulus.len()).map(|i| if annulus[i] == k { quad[i] / total } else { 0.0 }).collect()))
        })
        .collect()
}

pub fn annuli_probe(g: &GreenOperator, annulus: &[usize]) -> AnnuliProbe {
    let measures = annuli_measures(annulus, &g.quad_weights);
    let energies: Vec<f64> = measures.iter().map(|(_, w)| g.energy_of(w)).collect();
    let strictly_decreasing = energies.windows(2).all(|p| p[1] < p[0]);
    let final_ratio = match (energies.first(), energies.last()) {
        (Some(a), Some(b)) if *a > 0.0 => b / a,
        _ => f64::NAN,
    };
    AnnuliProbe {
        annuli: measures.iter().map(|(k, _)| *k).collect(),
        energies,
        strictly_decreasing,
        final_ratio,
    }
}
