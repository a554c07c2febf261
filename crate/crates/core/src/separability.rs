//! Window widths that keep neighbouring components apart, computed from known
//! instantaneous frequencies and chirp rates.
//!
//! Component `k` occupies roughly `φ'_k ± α(1/σ + 2π|φ''_k|σ)` in the STFT
//! plane. Adjacent zones are disjoint when `2α/σ + a_k σ ≤ b_k`, with
//! `a_k = 2πα(|φ''_{k-1}| + |φ''_k|)` and `b_k = φ'_k − φ'_{k-1}`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal::{active_ifs_and_rates, ComponentSpec};

/// Bounds for one adjacent pair of components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairBounds {
    pub a: f64,
    pub b: f64,
    pub discriminant: f64,
    /// Smallest width that keeps the pair apart, if any width does.
    pub lower: Option<f64>,
    /// Largest width that keeps the pair apart (infinite for parallel tones).
    pub upper: Option<f64>,
}

impl PairBounds {
    pub fn new(a: f64, b: f64, alpha: f64) -> Self {
        let discriminant = b * b - 8.0 * alpha * a;
        let (lower, upper) = if b <= 0.0 || discriminant < 0.0 {
            (None, None)
        } else {
            let root = discriminant.sqrt();
            let lower = 4.0 * alpha / (b + root);
            let upper = if b - root > 0.0 {
                4.0 * alpha / (b - root)
            } else {
                f64::INFINITY
            };
            (Some(lower), Some(upper))
        };
        Self {
            a,
            b,
            discriminant,
            lower,
            upper,
        }
    }

    pub fn separable(&self) -> bool {
        self.lower.is_some()
    }

    /// The width that narrows the pair's combined zones the most,
    /// `√(2α/a)`; equals the double root when the discriminant is zero.
    pub fn best_effort(&self, alpha: f64) -> f64 {
        if self.a > 0.0 {
            (2.0 * alpha / self.a).sqrt()
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityReport {
    pub pairs: Vec<PairBounds>,
    /// Largest per-pair lower bound. For non-separable pairs the best-effort
    /// width stands in for the missing bound.
    pub sigma2: Option<f64>,
    /// Smallest per-pair upper bound.
    pub sigma_upper: Option<f64>,
    pub separable: bool,
}

fn check_ordered(ifs: &[f64]) -> Result<()> {
    if ifs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("instantaneous frequencies must be sorted"));
    }
    Ok(())
}

/// `max_k 2α/(φ'_k − φ'_{k-1})`; `None` for fewer than two components and
/// infinite when two frequencies coincide.
pub fn sigma1(ifs: &[f64], alpha: f64) -> Result<Option<f64>> {
    check_ordered(ifs)?;
    Ok(ifs
        .windows(2)
        .map(|w| {
            let gap = w[1] - w[0];
            if gap > 0.0 {
                2.0 * alpha / gap
            } else {
                f64::INFINITY
            }
        })
        .reduce(f64::max))
}

pub fn sigma2(ifs: &[f64], chirp_rates: &[f64], alpha: f64) -> Result<SeparabilityReport> {
    check_ordered(ifs)?;
    if ifs.len() != chirp_rates.len() {
        return Err(Error::domain("one chirp rate is needed per frequency"));
    }
    let pairs: Vec<PairBounds> = (1..ifs.len())
        .map(|k| {
            let a = 2.0 * PI * alpha * (chirp_rates[k - 1].abs() + chirp_rates[k].abs());
            PairBounds::new(a, ifs[k] - ifs[k - 1], alpha)
        })
        .collect();
    let separable_pairs = pairs.iter().all(PairBounds::separable);
    let sigma2 = pairs
        .iter()
        .map(|p| p.lower.unwrap_or_else(|| p.best_effort(alpha)))
        .reduce(f64::max);
    let sigma_upper = if separable_pairs {
        pairs.iter().filter_map(|p| p.upper).reduce(f64::min)
    } else {
        None
    };
    let separable = separable_pairs
        && match (sigma2, sigma_upper) {
            (Some(lo), Some(hi)) => lo <= hi,
            _ => true,
        };
    Ok(SeparabilityReport {
        pairs,
        sigma2,
        sigma_upper,
        separable,
    })
}

/// Enlarged support zone `φ' ± α(1/σ + 2π|φ''|σ)`.
pub fn support_zone(if_value: f64, chirp_rate: f64, sigma: f64, alpha: f64) -> (f64, f64) {
    let half = alpha * (1.0 / sigma + 2.0 * PI * chirp_rate.abs() * sigma);
    (if_value - half, if_value + half)
}

/// Exact zone where a chirp's STFT magnitude exceeds `ε` times its peak:
/// `φ' ± α√(1/σ² + 4π²φ''²σ²)`.
pub fn exact_support_zone(if_value: f64, chirp_rate: f64, sigma: f64, alpha: f64) -> (f64, f64) {
    let half = alpha * (1.0 / (sigma * sigma) + (2.0 * PI * chirp_rate * sigma).powi(2)).sqrt();
    (if_value - half, if_value + half)
}

/// Both sufficient conditions: every gap is at least
/// `4α√π·√(|φ''_k| + |φ''_{k-1}|)`, and the bounds leave a non-empty range.
pub fn check_theorem3(ifs: &[f64], chirp_rates: &[f64], alpha: f64) -> Result<bool> {
    let report = sigma2(ifs, chirp_rates, alpha)?;
    let gaps_ok = (1..ifs.len()).all(|k| {
        let need = 4.0 * alpha * PI.sqrt() * (chirp_rates[k].abs() + chirp_rates[k - 1].abs()).sqrt();
        let gap = ifs[k] - ifs[k - 1];
        gap > 0.0 && need <= gap
    });
    Ok(gaps_ok && report.separable)
}

/// Whether the enlarged zones at width `sigma` are pairwise disjoint.
pub fn zones_disjoint(ifs: &[f64], chirp_rates: &[f64], sigma: f64, alpha: f64) -> bool {
    let zones: Vec<_> = ifs
        .iter()
        .zip(chirp_rates)
        .map(|(&f, &r)| support_zone(f, r, sigma, alpha))
        .collect();
    zones.windows(2).all(|w| w[0].1 <= w[1].0)
}

/// Which bound to follow when building a width track from known components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleBound {
    Sinusoidal,
    Chirp,
}

/// Per-sample width from the components active at each time. Times with
/// fewer than two active components take the nearest defined value.
pub fn oracle_sigma_track(
    components: &[ComponentSpec],
    times: &[f64],
    alpha: f64,
    bound: OracleBound,
) -> Result<Vec<f64>> {
    let mut raw = Vec::with_capacity(times.len());
    for &t in times {
        let (ifs, rates) = active_ifs_and_rates(components, t);
        let value = match bound {
            OracleBound::Sinusoidal => sigma1(&ifs, alpha)?,
            OracleBound::Chirp => sigma2(&ifs, &rates, alpha)?.sigma2,
        };
        raw.push(value.filter(|s| s.is_finite()));
    }
    fill_gaps(&raw).ok_or_else(|| {
        Error::domain("no time has two separable active components to size the window from")
    })
}

/// Replace `None` by the nearest defined neighbour (earlier wins ties).
fn fill_gaps(raw: &[Option<f64>]) -> Option<Vec<f64>> {
    let defined: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].is_some()).collect();
    if defined.is_empty() {
        return None;
    }
    Some(
        (0..raw.len())
            .map(|i| {
                raw[i].unwrap_or_else(|| {
                    let j = defined.partition_point(|&d| d < i);
                    let right = defined.get(j).copied();
                    let left = j.checked_sub(1).map(|k| defined[k]);
                    let pick = match (left, right) {
                        (Some(l), Some(r)) => {
                            if i - l <= r - i {
                                l
                            } else {
                                r
                            }
                        }
                        (Some(l), None) => l,
                        (None, Some(r)) => r,
                        (None, None) => unreachable!(),
                    };
                    raw[pick].unwrap()
                })
            })
            .collect(),
    )
}
