//! Descriptive statistics over latency samples.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Linearly interpolated quantile of sorted data, `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Box-plot figures for one group of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub p95: f64,
    pub max: f64,
    /// Samples strictly above the 95th percentile.
    pub above_p95: usize,
}

impl BoxStats {
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let p95 = quantile_sorted(&v, 0.95)?;
        Some(BoxStats {
            count: v.len(),
            mean: mean(&v)?,
            min: v[0],
            q1: quantile_sorted(&v, 0.25)?,
            median: quantile_sorted(&v, 0.5)?,
            q3: quantile_sorted(&v, 0.75)?,
            p95,
            max: v[v.len() - 1],
            above_p95: v.iter().filter(|&&x| x > p95).count(),
        })
    }
}

/// Trailing moving average; element `i` averages `xs[i..i + window]`.
/// Empty when there are fewer samples than `window`.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || xs.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(xs.len() - window + 1);
    let mut sum: f64 = xs[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..xs.len() {
        sum += xs[i] - xs[i - window];
        out.push(sum / window as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub mean: f64,
}

/// Splits `xs` into at most `max_segments` contiguous segments by binary
/// segmentation. A split is kept only if both sides are at least `min_len`
/// long and their means differ by at least `min_shift` times the overall
/// mean.
pub fn segment(xs: &[f64], max_segments: usize, min_len: usize, min_shift: f64) -> Vec<Segment> {
    if xs.is_empty() {
        return Vec::new();
    }
    let mut prefix = Vec::with_capacity(xs.len() + 1);
    let mut prefix_sq = Vec::with_capacity(xs.len() + 1);
    prefix.push(0.0);
    prefix_sq.push(0.0);
    for &x in xs {
        prefix.push(prefix.last().unwrap() + x);
        prefix_sq.push(prefix_sq.last().unwrap() + x * x);
    }
    let sum = |a: usize, b: usize| prefix[b] - prefix[a];
    let sse = |a: usize, b: usize| {
        let n = (b - a) as f64;
        (prefix_sq[b] - prefix_sq[a]) - sum(a, b) * sum(a, b) / n
    };
    let overall = sum(0, xs.len()) / xs.len() as f64;
    let min_len = min_len.max(1);

    let mut bounds = vec![0, xs.len()];
    while bounds.len() - 1 < max_segments {
        let mut best: Option<(f64, usize)> = None;
        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 2 * min_len {
                continue;
            }
            let whole = sse(a, b);
            for c in a + min_len..=b - min_len {
                let left = sum(a, c) / (c - a) as f64;
                let right = sum(c, b) / (b - c) as f64;
                if (right - left).abs() < min_shift * overall.abs() {
                    continue;
                }
                let gain = whole - sse(a, c) - sse(c, b);
                if best.is_none_or(|(g, _)| gain > g) {
                    best = Some((gain, c));
                }
            }
        }
        match best {
            Some((_, c)) => {
                bounds.push(c);
                bounds.sort_unstable();
            }
            None => break,
        }
    }
    bounds
        .windows(2)
        .map(|w| Segment { start: w[0], end: w[1], mean: sum(w[0], w[1]) / (w[1] - w[0]) as f64 })
        .collect()
}

pub fn is_non_decreasing(segments: &[Segment]) -> bool {
    segments.windows(2).all(|w| w[1].mean >= w[0].mean)
}

/// Least-squares slope and intercept.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}
