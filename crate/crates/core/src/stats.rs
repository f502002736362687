//! Edit distance, summary statistics and the two-proportions z-test.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::bail;
use crate::Result;

/// Unit-cost edit distance between the characters of `a` and `b`.
///
/// ASCII inputs with a side of at most 64 characters use the bit-parallel
/// algorithm of Myers/Hyyrö; everything else uses the two-row table.
pub fn levenshtein(a: &str, b: &str) -> usize {
    if a == b {
        return 0;
    }
    if a.is_ascii() && b.is_ascii() {
        let (a, b) = (a.as_bytes(), b.as_bytes());
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        if short.is_empty() {
            return long.len();
        }
        if short.len() <= 64 {
            return myers_ascii(short, long);
        }
        return table(short, long);
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    table(&a, &b)
}

fn myers_ascii(pattern: &[u8], text: &[u8]) -> usize {
    let m = pattern.len();
    let mut peq = [0u64; 128];
    for (i, &c) in pattern.iter().enumerate() {
        peq[c as usize] |= 1 << i;
    }
    let top = 1u64 << (m - 1);
    let mut pv = if m == 64 { !0 } else { (1u64 << m) - 1 };
    let mut mv = 0u64;
    let mut score = m;
    for &c in text {
        let eq = peq[c as usize];
        let xv = eq | mv;
        let xh = ((eq & pv).wrapping_add(pv) ^ pv) | eq;
        let mut ph = mv | !(xh | pv);
        let mut mh = pv & xh;
        if ph & top != 0 {
            score += 1;
        } else if mh & top != 0 {
            score -= 1;
        }
        ph = (ph << 1) | 1;
        mh <<= 1;
        pv = mh | !(xv | ph);
        mv = ph & xv;
    }
    score
}

fn table<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: libm::sqrt(var),
            n: values.len(),
        })
    }
}

/// Upper tail of the standard normal, `P(Z > x)`.
///
/// Computed as `erfc(x / sqrt 2) / 2` with the rational erfc approximation
/// from the `libm` port of FreeBSD's msun (error well under 1e-7).
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    /// Two-sided p-value.
    pub p: f64,
}

impl ZTest {
    /// One-sided p-value for the alternative "first proportion is larger".
    pub fn p_greater(&self) -> f64 {
        normal_sf(self.z)
    }
}

/// Two-proportions z-test with the pooled proportion.
pub fn two_prop_ztest(successes1: u64, n1: u64, successes2: u64, n2: u64) -> Result<ZTest> {
    if n1 == 0 || n2 == 0 {
        bail!(Input, "sample sizes must be positive");
    }
    if successes1 > n1 || successes2 > n2 {
        bail!(Input, "successes exceed sample size");
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let p1 = successes1 as f64 / n1f;
    let p2 = successes2 as f64 / n2f;
    let pooled = (successes1 + successes2) as f64 / (n1f + n2f);
    let se = libm::sqrt(pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f));
    if se == 0.0 {
        return Ok(ZTest { z: 0.0, p: 1.0 });
    }
    let z = (p1 - p2) / se;
    Ok(ZTest {
        z,
        p: libm::erfc(libm::fabs(z) / core::f64::consts::SQRT_2),
    })
}

/// Shannon entropy (nats) of a histogram of counts.
pub fn entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * libm::log(p)
        })
        .sum()
}

/// Total-variation distance between two discrete distributions given as
/// aligned probability slices (missing tails count as zero).
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|i| libm::fabs(p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)))
        .sum::<f64>()
}
