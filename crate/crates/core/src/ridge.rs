//! Greedy ridge extraction on squeezed representations and reconstruction
//! error scoring.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::Signal;
use crate::sst::SstResult;

/// Largest frequency jump, in bins, between consecutive ridge points.
pub const DEFAULT_MAX_JUMP: usize = 3;

/// A ridge point is absent when the energy in its band falls below this
/// fraction of the column's peak energy.
pub const ABSENCE_RATIO: f64 = 1e-3;

/// One frequency bin per frame, or `None` where the component is absent.
pub type Ridge = Vec<Option<usize>>;

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSet {
    /// Ridges in extraction order.
    pub ridges: Vec<Ridge>,
    /// Set when fewer ridges than requested could be found.
    pub exhausted: bool,
}

impl RidgeSet {
    pub fn len(&self) -> usize {
        self.ridges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ridges.is_empty()
    }

    /// Ridge frequencies in Hz on the given grid.
    pub fn frequencies(&self, freq_grid: &[f64]) -> Vec<Vec<Option<f64>>> {
        self.ridges
            .iter()
            .map(|r| r.iter().map(|b| b.map(|m| freq_grid[m])).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeParams {
    pub num_components: usize,
    pub gamma_bins: usize,
    pub max_jump: usize,
}

impl RidgeParams {
    pub fn new(num_components: usize, gamma_bins: usize) -> Self {
        Self {
            num_components,
            gamma_bins,
            max_jump: DEFAULT_MAX_JUMP,
        }
    }
}

pub fn extract_ridges(sst: &SstResult, num_components: usize, gamma_bins: usize) -> Result<RidgeSet> {
    extract_ridges_from(&sst.magnitude(), RidgeParams::new(num_components, gamma_bins))
}

/// Extract ridges one at a time from a magnitude plane.
///
/// Each ridge starts at the global maximum of what remains, is tracked
/// forwards and backwards as the largest value within `max_jump` bins of
/// the previous point, and stops for good in a direction once its band
/// energy becomes negligible. The band of `±gamma_bins` around the found
/// points is then cleared before the next search.
pub fn extract_ridges_from(mag: &Matrix<f64>, params: RidgeParams) -> Result<RidgeSet> {
    if params.num_components == 0 {
        return Err(Error::domain("at least one ridge must be requested"));
    }
    let (rows, cols) = mag.shape();
    let col_peak: Vec<f64> = (0..rows)
        .map(|n| mag.row(n).iter().fold(0.0f64, |a, &v| a.max(v * v)))
        .collect();
    let mut residual = mag.clone();
    let mut ridges = Vec::new();
    let gamma = params.gamma_bins;
    let band_energy = |res: &Matrix<f64>, n: usize, c: usize| -> f64 {
        let lo = c.saturating_sub(gamma);
        let hi = (c + gamma).min(cols - 1);
        res.row(n)[lo..=hi].iter().map(|v| v * v).sum()
    };
    for _ in 0..params.num_components {
        let Some((n0, m0)) = argmax(&residual) else {
            return Ok(RidgeSet {
                ridges,
                exhausted: true,
            });
        };
        let mut ridge: Ridge = vec![None; rows];
        ridge[n0] = Some(m0);
        for direction in [1isize, -1] {
            let mut prev = m0;
            let mut n = n0 as isize + direction;
            while n >= 0 && (n as usize) < rows {
                let row = residual.row(n as usize);
                let lo = prev.saturating_sub(params.max_jump);
                let hi = (prev + params.max_jump).min(cols - 1);
                let mut best = lo;
                for m in lo..=hi {
                    if row[m] > row[best] {
                        best = m;
                    }
                }
                let present = row[best] > 0.0
                    && band_energy(&residual, n as usize, best)
                        >= ABSENCE_RATIO * col_peak[n as usize];
                if !present {
                    break;
                }
                ridge[n as usize] = Some(best);
                prev = best;
                n += direction;
            }
        }
        for (n, r) in ridge.iter().enumerate() {
            if let Some(c) = *r {
                let lo = c.saturating_sub(gamma);
                let hi = (c + gamma).min(cols - 1);
                residual.row_mut(n)[lo..=hi].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        ridges.push(ridge);
    }
    Ok(RidgeSet {
        ridges,
        exhausted: false,
    })
}

/// First position of the largest positive value, row-major.
fn argmax(m: &Matrix<f64>) -> Option<(usize, usize)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in m.as_slice().iter().enumerate() {
        if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| (i / m.cols(), i % m.cols()))
}

/// Order extracted ridges to match reference IF tracks. Returns, for each
/// reference, the index of the ridge assigned to it (brute force over
/// permutations, so meant for a handful of components).
pub fn match_ridges(ridges: &[Vec<Option<f64>>], references: &[Vec<Option<f64>>]) -> Result<Vec<usize>> {
    if ridges.len() < references.len() {
        return Err(Error::domain(format!(
            "{} ridges cannot cover {} references",
            ridges.len(),
            references.len()
        )));
    }
    let cost = |r: &[Option<f64>], f: &[Option<f64>]| -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for (a, b) in r.iter().zip(f) {
            if let (Some(a), Some(b)) = (a, b) {
                sum += (a - b).abs();
                count += 1;
            }
        }
        if count == 0 {
            f64::INFINITY
        } else {
            sum / count as f64
        }
    };
    let table: Vec<Vec<f64>> = references
        .iter()
        .map(|f| ridges.iter().map(|r| cost(r, f)).collect())
        .collect();
    let mut best = (f64::INFINITY, Vec::new());
    let mut current = Vec::with_capacity(references.len());
    let mut used = vec![false; ridges.len()];
    search_assignments(&table, &mut current, &mut used, 0.0, &mut best);
    if best.1.is_empty() && !references.is_empty() {
        // no pair overlaps in time: fall back to extraction order
        return Ok((0..references.len()).collect());
    }
    Ok(best.1)
}

fn search_assignments(
    table: &[Vec<f64>],
    current: &mut Vec<usize>,
    used: &mut [bool],
    acc: f64,
    best: &mut (f64, Vec<usize>),
) {
    let k = current.len();
    if k == table.len() {
        if acc < best.0 {
            *best = (acc, current.clone());
        }
        return;
    }
    for j in 0..used.len() {
        if !used[j] {
            let c = acc + table[k][j];
            if c.is_finite() {
                used[j] = true;
                current.push(j);
                search_assignments(table, current, used, c, best);
                current.pop();
                used[j] = false;
            }
        }
    }
}

/// Mean relative L2 error `(1/K) Σ ||z_k − ẑ_k|| / ||z_k||`.
pub fn rmse(truth: &[Signal], reconstructed: &[Signal]) -> Result<f64> {
    if truth.len() != reconstructed.len() || truth.is_empty() {
        return Err(Error::domain(
            "need the same non-zero number of true and reconstructed components",
        ));
    }
    let mut total = 0.0;
    for (z, zh) in truth.iter().zip(reconstructed) {
        total += relative_error(z, zh)?;
    }
    Ok(total / truth.len() as f64)
}

/// `||z − ẑ|| / ||z||` for one component.
pub fn relative_error(truth: &Signal, estimate: &Signal) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::domain("components differ in length"));
    }
    let norm = truth.norm();
    if norm == 0.0 {
        return Err(Error::domain("a true component has zero norm"));
    }
    let diff: f64 = truth
        .samples()
        .iter()
        .zip(estimate.samples())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}
