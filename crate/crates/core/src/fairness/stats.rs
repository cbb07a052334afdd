//! Two-sample statistics used by the fairness report.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::parallel::{self, Exec};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Metric-aware fairness difference: absolute difference of the two group
/// means.
pub fn mfd(scores_a: &[f64], scores_b: &[f64]) -> Result<f64> {
    if scores_a.is_empty() || scores_b.is_empty() {
        return Err(Error::Empty("group scores"));
    }
    Ok((mean(scores_a) - mean(scores_b)).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// The first sample tends to be larger.
    Greater,
    /// The first sample tends to be smaller.
    Less,
}

impl FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_sided" | "two-sided" => Ok(Self::TwoSided),
            "greater" => Ok(Self::Greater),
            "less" => Ok(Self::Less),
            other => Err(Error::InvalidArgument(format!("unknown alternative {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    /// Exact when the enumeration fits [`EXACT_BUDGET`], normal otherwise.
    #[default]
    Auto,
    Exact,
    Normal,
}

/// Largest number of rank assignments enumerated by the exact test.
pub const EXACT_BUDGET: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p: f64,
    pub exact: bool,
}

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Twice the midranks of the pooled sample (so ties stay integral), plus the
/// tie-group sizes.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share (i + j + 2) / 2
        for &idx in &order[i..=j] {
            ranks[idx] = (i + j + 2) as u64;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

fn check_samples(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Empty("Mann-Whitney sample"));
    }
    if let Some(i) = xs.iter().chain(ys).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Mann-Whitney U test with midranks for ties.
pub fn mann_whitney_u(xs: &[f64], ys: &[f64], alternative: Alternative) -> Result<MannWhitney> {
    mann_whitney_u_with(xs, ys, alternative, PMethod::Auto)
}

pub fn mann_whitney_u_with(
    xs: &[f64],
    ys: &[f64],
    alternative: Alternative,
    method: PMethod,
) -> Result<MannWhitney> {
    check_samples(xs, ys)?;
    let n1 = xs.len();
    let n2 = ys.len();
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let (ranks, ties) = doubled_midranks(&pooled);
    let doubled_sum: u64 = ranks[..n1].iter().sum();
    let u = doubled_sum as f64 / 2.0 - (n1 * (n1 + 1)) as f64 / 2.0;

    let exact = match method {
        PMethod::Exact => true,
        PMethod::Normal => false,
        PMethod::Auto => binomial((n1 + n2) as u64, n1 as u64) <= EXACT_BUDGET,
    };
    let (p_greater, p_less) = if exact {
        exact_tails(&ranks, n1, doubled_sum)
    } else {
        normal_tails(u, n1, n2, &ties)
    };
    let p = match alternative {
        Alternative::Greater => p_greater,
        Alternative::Less => p_less,
        Alternative::TwoSided => 2.0 * p_greater.min(p_less),
    };
    Ok(MannWhitney {
        u,
        p: p.clamp(0.0, 1.0),
        exact,
    })
}

/// Tail probabilities `P(S >= observed)` and `P(S <= observed)` of the
/// rank-sum over every way of assigning `n1` of the pooled ranks to the
/// first sample.
fn exact_tails(ranks: &[u64], n1: usize, observed: u64) -> (f64, f64) {
    fn walk(ranks: &[u64], start: usize, left: usize, sum: u64, observed: u64, counts: &mut [u64; 3]) {
        if left == 0 {
            counts[0] += 1;
            if sum >= observed {
                counts[1] += 1;
            }
            if sum <= observed {
                counts[2] += 1;
            }
            return;
        }
        for i in start..=ranks.len() - left {
            walk(ranks, i + 1, left - 1, sum + ranks[i], observed, counts);
        }
    }
    let mut counts = [0u64; 3];
    walk(ranks, 0, n1, 0, observed, &mut counts);
    let total = counts[0] as f64;
    (counts[1] as f64 / total, counts[2] as f64 / total)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
fn normal_tails(u: f64, n1: usize, n2: usize, ties: &[usize]) -> (f64, f64) {
    let (a, b) = (n1 as f64, n2 as f64);
    let n = a + b;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let var = a * b / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return (1.0, 1.0);
    }
    let sd = var.sqrt();
    let mu = a * b / 2.0;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let greater = normal.sf((u - mu - 0.5) / sd);
    let less = normal.cdf((u - mu + 0.5) / sd);
    (greater.min(1.0), less.min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided, from Student's t with `n - 2` degrees of freedom.
    pub p: f64,
}

/// Pearson's correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 points, got {}",
            xs.len()
        )));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("xs"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("ys"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (xs.len() - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("valid degrees of freedom");
        (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
    };
    Ok(Correlation { r, p })
}

pub const DEFAULT_RESAMPLES: usize = 1000;

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// 95% percentile-bootstrap interval for the mean.
///
/// Resample `b` draws from its own ChaCha stream `b` under `seed`, so the
/// result does not depend on how resamples are spread over threads.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64, exec: Exec) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("bootstrap input"));
    }
    if resamples == 0 {
        return Err(Error::InvalidArgument("resamples must be positive".into()));
    }
    let n = values.len();
    let mut means = parallel::map_range(resamples, exec, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let total: f64 = (0..n).map(|_| values[rng.random_range(0..n)]).sum();
        total / n as f64
    });
    means.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&means, 0.025), quantile_sorted(&means, 0.975)))
}

/// Significance marks at 0.05 / 0.01 / 0.001.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stars {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "**")]
    Two,
    #[serde(rename = "***")]
    Three,
}

impl Stars {
    pub fn from_p(p: f64) -> Self {
        if p < 0.001 {
            Stars::Three
        } else if p < 0.01 {
            Stars::Two
        } else if p < 0.05 {
            Stars::One
        } else {
            Stars::None
        }
    }
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stars::None => "",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        })
    }
}

/// Mixes a base seed with a path of indices (splitmix64 finalizer).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut z = base;
    for &p in path {
        z = z.wrapping_add(p.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
