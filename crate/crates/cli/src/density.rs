//! Per-label histograms of cosine similarity, normalized to unit area.

use anyhow::{bail, Result};
use log::warn;

pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelDensity {
    pub label: u8,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub lo: f64,
    pub hi: f64,
    pub labels: Vec<LabelDensity>,
}

impl DensityTable {
    pub fn bins(&self) -> usize {
        self.labels.first().map_or(0, |l| l.density.len())
    }

    pub fn width(&self, bins: usize) -> f64 {
        (self.hi - self.lo) / bins as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,bin_index,bin_start,bin_end,density\n");
        for l in &self.labels {
            let w = self.width(l.density.len());
            for (i, d) in l.density.iter().enumerate() {
                let start = self.lo + i as f64 * w;
                out.push_str(&format!("{},{},{:.6},{:.6},{:.8}\n", l.label, i, start, start + w, d));
            }
        }
        out
    }
}

/// Histograms over the observed range of `cosines`, split into `bins` equal
/// bins. A degenerate range is widened by 0.5 on each side. Labels without
/// instances are left out with a warning.
pub fn cosine_densities(cosines: &[f64], labels: &[u8], bins: usize) -> Result<DensityTable> {
    if cosines.len() != labels.len() {
        bail!("{} similarities but {} labels", cosines.len(), labels.len());
    }
    if cosines.is_empty() {
        bail!("no labeled instances to plot");
    }
    if bins == 0 {
        bail!("need at least one bin");
    }
    if let Some(c) = cosines.iter().find(|c| !c.is_finite()) {
        bail!("non-finite similarity {c}");
    }
    let mut lo = cosines.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = cosines.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;

    let mut out = Vec::new();
    for label in 1..=4u8 {
        let mut counts = vec![0usize; bins];
        for (&c, _) in cosines.iter().zip(labels).filter(|(_, &l)| l == label) {
            let i = (((c - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        let n: usize = counts.iter().sum();
        if n == 0 {
            warn!("no instances with median label {label}; omitted from the density table");
            continue;
        }
        out.push(LabelDensity {
            label,
            density: counts.iter().map(|&k| k as f64 / (n as f64 * width)).collect(),
        });
    }
    Ok(DensityTable { lo, hi, labels: out })
}
