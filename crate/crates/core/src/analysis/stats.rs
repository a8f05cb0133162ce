use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided, from Student's t with `n − 2` degrees of freedom.
    pub p_value: f64,
}

/// Sample Pearson correlation of paired observations.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Shape(format!("pearson needs equal lengths >= 3, got {} and {}", xs.len(), ys.len())));
    }
    check_finite(xs, "pearson input")?;
    check_finite(ys, "pearson input")?;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("pearson of a constant sequence".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (xs.len() - 2) as f64;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(Correlation { r, p_value })
}

/// Least-squares `(slope, intercept)` of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Shape("linear fit needs at least two paired points".into()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("linear fit with constant abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceTest {
    Wilcoxon,
    Ks,
}

/// Two-sided p-value of `test` on `a` against `b`.
pub fn significance(a: &[f64], b: &[f64], test: SignificanceTest) -> Result<f64> {
    match test {
        SignificanceTest::Wilcoxon => wilcoxon_signed_rank(a, b),
        SignificanceTest::Ks => Ok(ks_two_sample(a, b)?.p_value),
    }
}

/// Ranks of `values` from 1, ties sharing their average rank, doubled so
/// every rank is an integer.
fn doubled_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share the rank (start + 1 + end) / 2.
        for &k in &order[start..end] {
            ranks[k] = start + 1 + end;
        }
        start = end;
    }
    ranks
}

const WILCOXON_EXACT_MAX: usize = 400;

/// Wilcoxon signed-rank test on paired samples. Zero differences are
/// dropped; if none remain the p-value is 1. Exact for up to 400 pairs
/// (ties included), normal approximation with tie correction beyond.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("wilcoxon needs paired samples, got {} and {}", a.len(), b.len())));
    }
    check_finite(a, "wilcoxon input")?;
    check_finite(b, "wilcoxon input")?;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Ok(1.0);
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w: usize = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total: usize = ranks.iter().sum();
    let n = diffs.len();
    if n <= WILCOXON_EXACT_MAX {
        // dist[s] = P(sum of doubled ranks with positive sign = s) under the null.
        let mut dist = vec![0.0f64; total + 1];
        dist[0] = 1.0;
        let mut reach = 0;
        for &r in &ranks {
            for s in (0..=reach).rev() {
                let p = dist[s] * 0.5;
                dist[s] = p;
                dist[s + r] += p;
            }
            reach += r;
        }
        let lower: f64 = dist[..=w].iter().sum();
        let upper: f64 = dist[w..].iter().sum();
        return Ok((2.0 * lower.min(upper)).min(1.0));
    }
    // In undoubled ranks: W = w/2, E[W] = total/4, Var[W] = Σ(r/2)²/4.
    let var: f64 = ranks.iter().map(|&r| (r * r) as f64).sum::<f64>() / 16.0;
    let z = (w as f64 / 2.0 - total as f64 / 4.0).abs() / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok((2.0 * normal.sf(z)).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// Largest gap between the two empirical distribution functions.
    pub statistic: f64,
    pub p_value: f64,
}

const KS_EXACT_MAX: usize = 10_000;

/// Two-sample Kolmogorov–Smirnov test. Exact by lattice-path counting when
/// `n·m ≤ 10000`, asymptotic beyond.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Shape("KS needs two non-empty samples".into()));
    }
    check_finite(a, "KS input")?;
    check_finite(b, "KS input")?;
    let (n, m) = (a.len(), b.len());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    // Largest |i·m − j·n| over the merged sweep, in integer units of 1/(n·m).
    let (mut i, mut j, mut gap) = (0usize, 0usize, 0usize);
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] == v {
            i += 1;
        }
        while j < m && ys[j] == v {
            j += 1;
        }
        gap = gap.max((i * m).abs_diff(j * n));
    }
    let statistic = gap as f64 / (n * m) as f64;
    if gap == 0 {
        return Ok(KsResult { statistic, p_value: 1.0 });
    }
    let p_value = if n * m <= KS_EXACT_MAX {
        // Probability that a uniformly random merge path stays strictly
        // inside |i·m − j·n| < gap.
        let mut row = vec![0.0f64; m + 1];
        for jj in 0..=m {
            row[jj] = if (jj * n) < gap && (jj == 0 || row[jj - 1] > 0.0) { 1.0 } else { 0.0 };
        }
        for ii in 1..=n {
            let mut next = vec![0.0f64; m + 1];
            for jj in 0..=m {
                if (ii * m).abs_diff(jj * n) >= gap {
                    continue;
                }
                // Weights keep path counts as probabilities of each prefix.
                let from_up = row[jj] * ii as f64 / (ii + jj) as f64;
                let from_left = if jj > 0 { next[jj - 1] * jj as f64 / (ii + jj) as f64 } else { 0.0 };
                next[jj] = from_up + from_left;
            }
            row = next;
        }
        (1.0 - row[m]).clamp(0.0, 1.0)
    } else {
        let en = ((n * m) as f64 / (n + m) as f64).sqrt();
        kolmogorov_sf((en + 0.12 + 0.11 / en) * statistic)
    };
    Ok(KsResult { statistic, p_value })
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        total += if k as usize % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}
