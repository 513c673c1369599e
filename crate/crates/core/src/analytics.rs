//! Closed-form statistics of the zero-error attack.
//!
//! Eve's measurement results split the stream into blocks: a run of `k`
//! conclusive results followed by one vacuum signal, with runs capped at
//! `m_max`. Runs with `k < 2` never yield clicks. For longer runs the number
//! of clicks Bob sees is the length of the longest sub-block bounded by
//! vacuum pulses, whose expectation `p_click(k)` depends only on
//! `p(1|c) = p(0|c)`.
//!
//! Powers of `p_c` are built by repeated multiplication; the gain converges
//! in `m_max` at the 1e-12 level and an `exp(k ln p)` round trip would
//! blur that.

use crate::error::{Error, Result};
use crate::sim::{best_subblock, SignalKind};
use crate::usd::{optimal_usd, ProtocolParams};

/// Largest block length accepted by [`brute_force_p_click`] (3^9 sequences).
pub const BRUTE_FORCE_MAX_K: usize = 9;

fn validate_p_c(p_c: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p_c) {
        return Err(Error::invalid("p_c", format!("must lie in [0, 1), got {p_c}")));
    }
    Ok(())
}

fn validate_m_max(m_max: usize) -> Result<()> {
    if m_max < 2 {
        return Err(Error::invalid("m_max", format!("must be >= 2, got {m_max}")));
    }
    Ok(())
}

fn validate_p1c(p1c: f64) -> Result<()> {
    if !(p1c > 0.0 && p1c <= 0.5) {
        return Err(Error::invalid("p1c", format!("must lie in (0, 1/2], got {p1c}")));
    }
    Ok(())
}

/// `[1, x, x^2, ..., x^n]` by repeated multiplication.
fn powers(x: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 1.0;
    out.push(acc);
    for _ in 0..n {
        acc *= x;
        out.push(acc);
    }
    out
}

/// Distribution of block types sent by Eve.
///
/// `p_v(k)` for `k in {0, 1}` is the probability of a block of `k + 1`
/// vacuum signals; `p_s(k)` for `2 <= k <= m_max` is the probability of a
/// block with `k` conclusive results followed by one vacuum signal.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDistribution {
    m_max: usize,
    p_v: [f64; 2],
    /// Indexed by `k - 2`.
    p_s: Vec<f64>,
}

impl BlockDistribution {
    pub fn new(p_c: f64, m_max: usize) -> Result<Self> {
        validate_p_c(p_c)?;
        validate_m_max(m_max)?;
        let pw = powers(p_c, m_max);
        let p_v = [1.0 - p_c, p_c * (1.0 - p_c)];
        let p_s = (2..=m_max)
            .map(|k| if k < m_max { pw[k] * (1.0 - p_c) } else { pw[m_max] })
            .collect();
        Ok(Self { m_max, p_v, p_s })
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn p_v(&self, k: usize) -> f64 {
        self.p_v.get(k).copied().unwrap_or(0.0)
    }

    pub fn p_s(&self, k: usize) -> f64 {
        if (2..=self.m_max).contains(&k) {
            self.p_s[k - 2]
        } else {
            0.0
        }
    }

    /// Probability of a block holding `k` conclusive results, for
    /// `k = 0..=m_max`.
    pub fn by_conclusive_count(&self) -> Vec<f64> {
        (0..=self.m_max)
            .map(|k| if k < 2 { self.p_v(k) } else { self.p_s(k) })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.by_conclusive_count().iter().sum()
    }

    /// Expected number of signals per block, summed term by term.
    pub fn mean_length(&self) -> f64 {
        self.by_conclusive_count()
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 + 1.0) * p)
            .sum()
    }
}

/// Average block length `(1 - p_c^{m_max+1}) / (1 - p_c)`, summed as
/// `1 + p_c + ... + p_c^{m_max}` so it stays finite as `p_c -> 1`.
pub fn avg_block_length(p_c: f64, m_max: usize) -> Result<f64> {
    validate_p_c(p_c)?;
    validate_m_max(m_max)?;
    Ok(powers(p_c, m_max).iter().sum())
}

/// Expected clicks of a `k`-block whose first conclusive result is
/// `phi_first`, evaluated through the first-signal recursions.
///
/// The closed forms of these recursions divide by `2 p(1|c) - 1` and are
/// singular in regime R1, so they are not used here.
pub fn p_click_given_first(k: usize, first: usize, p1c: f64) -> Result<f64> {
    validate_p1c(p1c)?;
    if k < 2 {
        return Err(Error::invalid("k", format!("must be >= 2, got {k}")));
    }
    let keep = 1.0 - 2.0 * p1c;
    match first {
        0 | 1 => {
            // p_click(1|j) = 0; the bit-signal recursions differ only in the
            // offset of the driving term (2k-1 for phi_1, 2k-3 for phi_0).
            let offset = if first == 1 { 1.0 } else { 3.0 };
            let mut value = 0.0;
            for m in 2..=k {
                value = p1c * (2.0 * m as f64 - offset) + keep * value;
            }
            Ok(value)
        }
        2 => Ok(if k == 2 { 0.0 } else { p_click_recursive(k - 1, p1c)? }),
        _ => Err(Error::invalid("first", format!("signal index must be 0, 1 or 2, got {first}"))),
    }
}

/// `p_click(k)` for `k = 0..=m_max` from the recursion seeded by
/// `p_click(2) = 4 p(1|c)^2`; entries 0 and 1 are zero.
///
/// Valid on the closed interval `p1c in [0, 1/2]`; at `p1c = 0` every
/// conclusive result is a decoy and no click is possible.
pub fn p_click_table(m_max: usize, p1c: f64) -> Result<Vec<f64>> {
    if !(0.0..=0.5).contains(&p1c) {
        return Err(Error::invalid("p1c", format!("must lie in [0, 1/2], got {p1c}")));
    }
    let keep = 1.0 - 2.0 * p1c;
    let mut table = vec![0.0; m_max.max(2) + 1];
    table[2] = 4.0 * p1c * p1c;
    let mut keep_pow = keep * keep;
    for k in 3..=m_max {
        keep_pow *= keep;
        table[k] = 2.0 * k as f64 * p1c + keep_pow - 1.0 + keep * table[k - 1];
    }
    table.truncate(m_max + 1);
    Ok(table)
}

/// `p_click(k)` from the recursion. Agrees with [`p_click`] wherever both
/// are defined.
pub fn p_click_recursive(k: usize, p1c: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid("k", format!("must be >= 2, got {k}")));
    }
    Ok(p_click_table(k, p1c)?[k])
}

/// Closed-form expected number of clicks for a block of `k >= 2`
/// conclusive results:
/// `(1/p) { -1 + (k+1) p + (1-2p)^k [1 + (k-1) p] }` with `p = p(1|c)`.
pub fn p_click(k: usize, p1c: f64) -> Result<f64> {
    validate_p1c(p1c)?;
    if k < 2 {
        return Err(Error::invalid("k", format!("must be >= 2, got {k}")));
    }
    let kf = k as f64;
    let keep_pow = powers(1.0 - 2.0 * p1c, k)[k];
    Ok((-1.0 + (kf + 1.0) * p1c + keep_pow * (1.0 + (kf - 1.0) * p1c)) / p1c)
}

/// Exact expected clicks of a `k`-block by enumerating all `3^k` signal
/// sequences and applying the sub-block rule to each.
pub fn brute_force_p_click(k: usize, p_cond: [f64; 3]) -> Result<f64> {
    if !(2..=BRUTE_FORCE_MAX_K).contains(&k) {
        return Err(Error::invalid(
            "k",
            format!("brute force supports 2 <= k <= {BRUTE_FORCE_MAX_K}, got {k}"),
        ));
    }
    if p_cond.iter().any(|p| !(0.0..=1.0).contains(p)) || (p_cond.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("p_cond", format!("must be a probability vector, got {p_cond:?}")));
    }
    let kinds = [SignalKind::Bit0, SignalKind::Bit1, SignalKind::Decoy];
    let mut block = vec![SignalKind::Bit0; k];
    let mut digits = vec![0usize; k];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for (slot, &d) in block.iter_mut().zip(&digits) {
            *slot = kinds[d];
            weight *= p_cond[d];
        }
        if let Some(range) = best_subblock(&block) {
            total += weight * range.len() as f64;
        }
        // odometer increment over base-3 digits
        let mut pos = 0;
        loop {
            if pos == k {
                return Ok(total);
            }
            digits[pos] += 1;
            if digits[pos] < 3 {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Maximum zero-error gain `G_zero` of the attack with Eve's optimal USD.
pub fn gain_zero(params: &ProtocolParams) -> Result<f64> {
    let usd = optimal_usd(params)?;
    let p_c = usd.p_c;
    if p_c == 0.0 {
        return Ok(0.0);
    }
    let m_max = params.m_max;
    let clicks = p_click_table(m_max, usd.p1c())?;
    let pw = powers(p_c, m_max);
    let mut sum: f64 = (2..m_max).map(|k| pw[k] * (1.0 - p_c) * clicks[k]).sum();
    sum += pw[m_max] * clicks[m_max];
    Ok(sum / pw.iter().sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_distribution_normalizes() {
        for &(p_c, m) in &[(0.0, 2), (0.049209, 10), (0.5, 2), (0.9, 30)] {
            let d = BlockDistribution::new(p_c, m).unwrap();
            assert!((d.total() - 1.0).abs() < 1e-12);
            let closed = avg_block_length(p_c, m).unwrap();
            assert!((d.mean_length() - closed).abs() < 1e-12);
        }
        let d = BlockDistribution::new(0.3, 5).unwrap();
        assert_eq!(d.p_s(1), 0.0);
        assert_eq!(d.p_s(6), 0.0);
        assert_eq!(d.p_v(2), 0.0);
        assert!((d.p_s(5) - 0.3f64.powi(5)).abs() < 1e-15);
    }

    #[test]
    fn avg_block_length_examples() {
        assert_eq!(avg_block_length(0.0, 10).unwrap(), 1.0);
        assert!((avg_block_length(0.5, 2).unwrap() - 1.75).abs() < 1e-15);
        assert!((avg_block_length(0.049_209_0, 10).unwrap() - 1.051_755_9).abs() < 1e-6);
        assert!(avg_block_length(1.0, 10).is_err());
        assert!(avg_block_length(0.5, 1).is_err());
    }

    #[test]
    fn given_first_examples() {
        assert_eq!(p_click_given_first(2, 1, 0.5).unwrap(), 1.5);
        assert_eq!(p_click_given_first(2, 0, 0.5).unwrap(), 0.5);
        assert_eq!(p_click_given_first(3, 2, 0.5).unwrap(), 1.0);
        assert_eq!(p_click_given_first(2, 2, 0.3).unwrap(), 0.0);
        for k in 2..20 {
            let kf = k as f64;
            assert!((p_click_given_first(k, 1, 0.5).unwrap() - (kf - 0.5)).abs() < 1e-12);
            assert!((p_click_given_first(k, 0, 0.5).unwrap() - (kf - 1.5)).abs() < 1e-12);
        }
        assert!(p_click_given_first(1, 1, 0.5).is_err());
        assert!(p_click_given_first(3, 3, 0.5).is_err());
        assert!(p_click_given_first(3, 1, 0.0).is_err());
        assert!(p_click_given_first(3, 1, 0.6).is_err());
    }

    #[test]
    fn p_click_examples() {
        assert_eq!(p_click(2, 0.5).unwrap(), 1.0);
        assert_eq!(p_click(5, 0.5).unwrap(), 4.0);
        assert!((p_click(4, 0.391).unwrap() - 2.4550).abs() < 1e-4);
        assert!(p_click(1, 0.5).is_err());
        assert!(p_click(3, 0.0).is_err());
    }

    #[test]
    fn recursion_handles_decoy_only_regime() {
        let t = p_click_table(10, 0.0).unwrap();
        assert!(t.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn brute_force_examples() {
        assert!((brute_force_p_click(2, [0.5, 0.5, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        let p = 0.391;
        let v = brute_force_p_click(2, [p, p, 1.0 - 2.0 * p]).unwrap();
        assert!((v - 4.0 * p * p).abs() < 1e-15);
        assert!((v - 0.611_524).abs() < 1e-6);
        assert!((brute_force_p_click(3, [0.5, 0.5, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(brute_force_p_click(10, [0.5, 0.5, 0.0]).is_err());
        assert!(brute_force_p_click(1, [0.5, 0.5, 0.0]).is_err());
        assert!(brute_force_p_click(3, [0.5, 0.6, 0.0]).is_err());
    }

    #[test]
    fn gain_zero_examples() {
        let g = gain_zero(&ProtocolParams::new(0.06, 0.155, 10).unwrap()).unwrap();
        assert!((g.log10() + 2.62).abs() <= 0.01);
        let g = gain_zero(&ProtocolParams::new(0.1, 0.155, 10).unwrap()).unwrap();
        assert!((g.log10() + 2.19).abs() <= 0.01);
        assert_eq!(gain_zero(&ProtocolParams::new(0.0, 0.155, 10).unwrap()).unwrap(), 0.0);
        let g = gain_zero(&ProtocolParams::new(0.5, 0.1, 10).unwrap()).unwrap();
        assert!((g - 0.125_39).abs() < 1e-5);
    }

    #[test]
    fn decoy_only_regime_has_no_gain() {
        let g = gain_zero(&ProtocolParams::new(0.1, 0.9, 10).unwrap()).unwrap();
        assert_eq!(g, 0.0);
    }
}
