//! Optimal unambiguous state discrimination of the three COW signals.
//!
//! Alice sends two bit signals and one decoy signal built from coherent
//! pulses of intensity `mu`. Their pairwise overlaps are all real and
//! positive, so the optimum has a closed form that depends on which of three
//! regimes `(mu, f)` falls into:
//!
//! * [`Regime::R1`]: only bit signals are ever identified, `q_ss = 1 - e^-mu`.
//! * [`Regime::R2`]: bits and decoys are both identified.
//! * [`Regime::R3`]: only decoys are identified, `q_ds = tanh(mu/2)`.
//!
//! The third regime comes from reducing the problem to a two-state USD
//! between projected signals; that construction is not exposed here because
//! its result collapses to `tanh(mu/2)`. Optimality of all three branches is
//! checked against [`usd_feasible`], which decides realizability of a
//! candidate assignment directly from the Gram matrix.

use serde::Serialize;

use crate::error::{Error, Result};

/// Numerical slack for the principal-minor PSD test.
pub const PSD_TOLERANCE: f64 = 1e-12;

/// Protocol-level inputs shared by every calculator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolParams {
    /// Mean photon number of one coherent pulse, `|alpha|^2`.
    pub mu: f64,
    /// Probability that Alice emits a decoy signal.
    pub f: f64,
    /// Maximum number of consecutive conclusive results Eve collects before
    /// forcing a block to end.
    pub m_max: usize,
}

impl ProtocolParams {
    pub fn new(mu: f64, f: f64, m_max: usize) -> Result<Self> {
        let params = Self { mu, f, m_max };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        validate_mu(self.mu)?;
        validate_f(self.f)?;
        if self.m_max < 2 {
            return Err(Error::invalid("m_max", format!("must be >= 2, got {}", self.m_max)));
        }
        Ok(())
    }

    /// `gamma = f / (2 (1 - f))`, the decoy-to-bit prior ratio.
    pub fn gamma(&self) -> f64 {
        self.f / (2.0 * (1.0 - self.f))
    }
}

pub(crate) fn validate_mu(mu: f64) -> Result<()> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::invalid("mu", format!("must be finite and >= 0, got {mu}")));
    }
    Ok(())
}

pub(crate) fn validate_f(f: f64) -> Result<()> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::invalid("f", format!("must lie strictly inside (0, 1), got {f}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `sqrt(gamma) <= e^{-mu/2}`: decoys are never identified.
    R1,
    /// `sqrt(gamma) > e^{-mu/2}` and `cosh(mu/2) >= sqrt(gamma)`.
    R2,
    /// `sqrt(gamma) > e^{-mu/2}` and `cosh(mu/2) < sqrt(gamma)`: bits are
    /// never identified.
    R3,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::R1 => "R1",
            Regime::R2 => "R2",
            Regime::R3 => "R3",
        };
        f.write_str(s)
    }
}

/// Eve's optimal measurement statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UsdSolution {
    pub regime: Regime,
    /// Conclusive probability for either bit signal.
    pub q_ss: f64,
    /// Conclusive probability for the decoy signal.
    pub q_ds: f64,
    /// Total conclusive probability `(1-f) q_ss + f q_ds`.
    pub p_c: f64,
    /// `(p(0|c), p(1|c), p(2|c))`; fixed to `(1/2, 1/2, 0)` when `p_c = 0`.
    pub p_cond: [f64; 3],
}

impl UsdSolution {
    pub fn q_inc_bits(&self) -> f64 {
        1.0 - self.q_ss
    }

    pub fn q_inc_decoy(&self) -> f64 {
        1.0 - self.q_ds
    }

    /// `p(1|c)`, which equals `p(0|c)`.
    pub fn p1c(&self) -> f64 {
        self.p_cond[1]
    }
}

/// Gram matrix of `(phi_0, phi_1, phi_2)` for pulse intensity `mu`.
pub fn gram_matrix(mu: f64) -> Result<[[f64; 3]; 3]> {
    validate_mu(mu)?;
    let bits = (-mu).exp();
    let bit_decoy = (-mu / 2.0).exp();
    Ok([
        [1.0, bits, bit_decoy],
        [bits, 1.0, bit_decoy],
        [bit_decoy, bit_decoy, 1.0],
    ])
}

/// Whether the conclusive probabilities `gamma` (one per signal) are
/// achievable by some USD measurement, i.e. whether `G - diag(gamma)` is
/// positive semidefinite.
pub fn usd_feasible(mu: f64, gamma: [f64; 3]) -> Result<bool> {
    for &g in &gamma {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::invalid("gamma", format!("components must lie in [0, 1], got {g}")));
        }
    }
    let mut m = gram_matrix(mu)?;
    for (i, g) in gamma.iter().enumerate() {
        m[i][i] -= g;
    }
    Ok(principal_minors(&m).iter().all(|&d| d >= -PSD_TOLERANCE))
}

/// All seven principal minors of a symmetric 3x3 matrix.
fn principal_minors(m: &[[f64; 3]; 3]) -> [f64; 7] {
    let minor2 = |i: usize, j: usize| m[i][i] * m[j][j] - m[i][j] * m[j][i];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    [
        m[0][0],
        m[1][1],
        m[2][2],
        minor2(0, 1),
        minor2(0, 2),
        minor2(1, 2),
        det,
    ]
}

/// Regime of `(mu, gamma)`; ties resolve to the lower-numbered regime.
pub fn select_regime(mu: f64, gamma: f64) -> Regime {
    let root_gamma = gamma.sqrt();
    if root_gamma <= (-mu / 2.0).exp() {
        Regime::R1
    } else if (mu / 2.0).cosh() >= root_gamma {
        Regime::R2
    } else {
        Regime::R3
    }
}

/// Closed-form `(q_ss, q_ds)` of one regime, evaluated without checking that
/// `(mu, f)` actually belongs to it.
pub fn regime_closed_form(regime: Regime, mu: f64, f: f64) -> (f64, f64) {
    let gamma = f / (2.0 * (1.0 - f));
    match regime {
        Regime::R1 => (-(-mu).exp_m1(), 0.0),
        Regime::R2 => {
            let half = (-mu / 2.0).exp();
            let q_ss = 1.0 + (-mu).exp() - half * (2.0 * f / (1.0 - f)).sqrt();
            let q_ds = 1.0 - half / gamma.sqrt();
            (q_ss, q_ds)
        }
        Regime::R3 => (0.0, (mu / 2.0).tanh()),
    }
}

/// Maximum-conclusive-probability USD measurement for `params.mu`,
/// `params.f`. `m_max` is ignored.
pub fn optimal_usd(params: &ProtocolParams) -> Result<UsdSolution> {
    params.validate()?;
    let ProtocolParams { mu, f, .. } = *params;
    let regime = select_regime(mu, params.gamma());
    let (q_ss, q_ds) = regime_closed_form(regime, mu, f);
    // rounding can push the R2 expressions a few ulps outside [0, 1]
    let q_ss = q_ss.clamp(0.0, 1.0);
    let q_ds = q_ds.clamp(0.0, 1.0);
    let p_c = (1.0 - f) * q_ss + f * q_ds;
    let p_cond = if p_c > 0.0 {
        let bit = (1.0 - f) * q_ss / (2.0 * p_c);
        [bit, bit, f * q_ds / p_c]
    } else {
        [0.5, 0.5, 0.0]
    };
    Ok(UsdSolution {
        regime,
        q_ss,
        q_ds,
        p_c,
        p_cond,
    })
}
