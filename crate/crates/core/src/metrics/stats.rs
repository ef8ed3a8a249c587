use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::MetricsError;
use crate::drawing::ConceptName;

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Standard deviation with the n - 1 denominator.
pub fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

fn check_pair(xs: &[f64], ys: &[f64], need: usize) -> Result<(), MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < need {
        return Err(MetricsError::TooFew {
            need,
            got: xs.len(),
        });
    }
    Ok(())
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    check_pair(xs, ys, 2)?;
    let mx = mean(xs).unwrap_or(0.0);
    let my = mean(ys).unwrap_or(0.0);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn tie_pairs_in_runs<T, F: Fn(&T, &T) -> bool>(sorted: &[T], same: F) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if same(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` and returns the number of strictly inverted pairs.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Tie-corrected Kendall rank correlation, O(n log n).
pub fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    check_pair(xs, ys, 2)?;
    let n = xs.len() as u64;
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = n * (n - 1) / 2;
    let n1 = tie_pairs_in_runs(&pairs, |a, b| a.0 == b.0);
    let n3 = tie_pairs_in_runs(&pairs, |a, b| a == b);
    let mut y_seq: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(y_seq.len());
    let swaps = merge_count(&mut y_seq, &mut buf);
    let n2 = tie_pairs_in_runs(&y_seq, |a, b| a == b);

    let (tx, ty) = (n0 - n1, n0 - n2);
    if tx == 0 || ty == 0 {
        return Err(MetricsError::ZeroVariance);
    }
    let s = n0 as i128 - n1 as i128 - n2 as i128 + n3 as i128 - 2 * swaps as i128;
    // one sqrt of the product keeps identical rankings at exactly 1
    Ok((s as f64 / (tx as f64 * ty as f64).sqrt()).clamp(-1.0, 1.0))
}

/// A ranking of items with ties, written `a = b < c` (ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct RankedOrder {
    ranks: BTreeMap<ConceptName, f64>,
}

impl RankedOrder {
    /// Ranks by ascending score; equal scores tie.
    pub fn from_scores<I>(scores: I) -> Self
    where
        I: IntoIterator<Item = (ConceptName, f64)>,
    {
        Self {
            ranks: scores.into_iter().collect(),
        }
    }

    pub fn items(&self) -> impl Iterator<Item = &ConceptName> {
        self.ranks.keys()
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn score(&self, item: &ConceptName) -> Option<f64> {
        self.ranks.get(item).copied()
    }

    /// Tie groups in ascending order.
    pub fn groups(&self) -> Vec<Vec<&ConceptName>> {
        let mut by: Vec<(&ConceptName, f64)> = self.ranks.iter().map(|(c, &s)| (c, s)).collect();
        by.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        let mut out: Vec<Vec<&ConceptName>> = Vec::new();
        let mut last = None;
        for (c, s) in by {
            if last == Some(s) {
                out.last_mut().expect("group exists").push(c);
            } else {
                out.push(vec![c]);
                last = Some(s);
            }
        }
        out
    }
}

impl FromStr for RankedOrder {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut ranks = BTreeMap::new();
        for (rank, group) in s.split('<').enumerate() {
            for item in group.split('=') {
                let name = item.trim();
                if name.is_empty() {
                    return Err(MetricsError::BadOrder(s.to_owned()));
                }
                if ranks.insert(ConceptName::new(name), rank as f64).is_some() {
                    return Err(MetricsError::BadOrder(s.to_owned()));
                }
            }
        }
        Ok(Self { ranks })
    }
}

impl fmt::Display for RankedOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let groups: Vec<String> = self
            .groups()
            .iter()
            .map(|g| g.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(" = "))
            .collect();
        f.write_str(&groups.join(" < "))
    }
}

/// Tau-b between two rankings of the same items.
pub fn kendall_tau(a: &RankedOrder, b: &RankedOrder) -> Result<f64, MetricsError> {
    if !a.ranks.keys().eq(b.ranks.keys()) {
        return Err(MetricsError::ItemMismatch);
    }
    let xs: Vec<f64> = a.ranks.values().copied().collect();
    let ys: Vec<f64> = b.ranks.values().copied().collect();
    kendall_tau_b(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub slope: f64,
    pub residuals: Vec<f64>,
}

/// Least-squares line `y = a + b x` from the normal equations.
pub fn ols(y: &[f64], x: &[f64]) -> Result<OlsFit, MetricsError> {
    check_pair(x, y, 3)?;
    if x.iter().all(|&v| v == x[0]) {
        return Err(MetricsError::ConstantRegressor);
    }
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    if det == 0.0 {
        return Err(MetricsError::ConstantRegressor);
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    let residuals = x.iter().zip(y).map(|(xi, yi)| yi - (intercept + slope * xi)).collect();
    Ok(OlsFit {
        intercept,
        slope,
        residuals,
    })
}

pub fn ols_residuals(y: &[f64], x: &[f64]) -> Result<Vec<f64>, MetricsError> {
    ols(y, x).map(|f| f.residuals)
}
