//! Channel model and the security bounds derived from `G_zero`.
//!
//! * [`l_zero`]: distance at which the honest expected gain falls to
//!   `G_zero`; beyond it the observed statistics are reproducible by the
//!   attack and no key can be distilled.
//! * [`mu_max`]: largest intensity keeping `G_zero` strictly below the
//!   honest gain for an overall transmittance `eta` (dark counts zero,
//!   `t_B = 1`).
//! * [`r_upp`]: the key-rate upper bound `(1-f) eta mu_max`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::gain_zero;
use crate::error::{Error, Result};
use crate::usd::{validate_f, validate_mu, ProtocolParams};

/// Iteration cap for every bisection in this module.
pub const MAX_BISECTION_STEPS: usize = 200;
/// Absolute tolerance on gain residuals.
pub const GAIN_TOLERANCE: f64 = 1e-14;
/// Relative tolerance on intensities.
pub const MU_REL_TOLERANCE: f64 = 1e-12;

/// Detector and fibre parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelParams {
    /// Dark-count probability per detection gate.
    pub p_d: f64,
    /// Detector efficiency `eta_D`.
    pub eta_det: f64,
    /// Transmittance of Bob's data/monitoring beamsplitter `t_B`.
    pub t_bob: f64,
    /// Fibre attenuation in dB/km.
    pub alpha_att: f64,
}

impl ChannelParams {
    pub fn new(p_d: f64, eta_det: f64, t_bob: f64, alpha_att: f64) -> Result<Self> {
        let c = Self { p_d, eta_det, t_bob, alpha_att };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p_d", self.p_d), ("eta_det", self.eta_det), ("t_bob", self.t_bob)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if !(self.alpha_att > 0.0 && self.alpha_att.is_finite()) {
            return Err(Error::invalid("alpha_att", format!("must be > 0, got {}", self.alpha_att)));
        }
        Ok(())
    }

    /// Fibre transmittance `10^{-alpha_att L / 10}`.
    pub fn transmittance(&self, distance_km: f64) -> f64 {
        10f64.powf(-self.alpha_att * distance_km / 10.0)
    }
}

/// A named experimental configuration from the published COW literature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scenario {
    pub name: &'static str,
    pub params: ProtocolParams,
    pub channel: ChannelParams,
}

/// The two long-distance COW experiments (highest and lowest intensity).
/// Only total loss and fibre length are published, so the attenuation
/// coefficient is their ratio.
pub fn experiment_scenarios() -> [Scenario; 2] {
    [
        Scenario {
            name: "mu=0.06 (104 km, 16.9 dB)",
            params: ProtocolParams { mu: 0.06, f: 0.155, m_max: 10 },
            channel: ChannelParams { p_d: 4.38e-7, eta_det: 0.22, t_bob: 0.9, alpha_att: 16.9 / 104.0 },
        },
        Scenario {
            name: "mu=0.1 (203 km, 34.1 dB)",
            params: ProtocolParams { mu: 0.1, f: 0.155, m_max: 10 },
            channel: ChannelParams { p_d: 1.3e-8, eta_det: 0.27, t_bob: 0.9, alpha_att: 34.1 / 203.0 },
        },
    ]
}

/// State-of-the-art detectors on standard 0.2 dB/km fibre at `mu = 0.5`.
pub fn standard_fibre_scenario() -> Scenario {
    Scenario {
        name: "mu=0.5 standard fibre",
        params: ProtocolParams { mu: 0.5, f: 0.1, m_max: 10 },
        channel: ChannelParams { p_d: 2e-8, eta_det: 0.77, t_bob: 0.9, alpha_att: 0.2 },
    }
}

/// Honest gain of the data line:
/// `1 - (1-p_d) [(1-f) e^{-x} + f e^{-2x}]`, `x = mu t_B eta_D eta_ch`.
pub fn expected_gain(channel: &ChannelParams, params: &ProtocolParams, distance_km: f64) -> Result<f64> {
    channel.validate()?;
    params.validate()?;
    if !(distance_km >= 0.0) {
        return Err(Error::invalid("distance_km", format!("must be >= 0, got {distance_km}")));
    }
    let x = params.mu * channel.t_bob * channel.eta_det * channel.transmittance(distance_km);
    let no_click = no_click_probability(x, params.f);
    Ok(1.0 - (1.0 - channel.p_d) * no_click)
}

/// `(1-f) e^{-x} + f e^{-2x}`.
fn no_click_probability(x: f64, f: f64) -> f64 {
    (1.0 - f) * (-x).exp() + f * (-2.0 * x).exp()
}

/// `1 - [(1-f) e^{-x} + f e^{-2x}]` without cancellation at small `x`.
fn click_probability(x: f64, f: f64) -> f64 {
    -((1.0 - f) * (-x).exp_m1() + f * (-2.0 * x).exp_m1())
}

/// Honest gain with zero dark counts and all light in the data line,
/// for overall transmittance `eta`.
pub fn expected_gain_ideal(eta: f64, mu: f64, f: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid("eta", format!("must lie in [0, 1], got {eta}")));
    }
    validate_mu(mu)?;
    validate_f(f)?;
    Ok(click_probability(eta * mu, f))
}

/// Distance (km) at which `expected_gain` equals `G_zero`.
pub fn l_zero(channel: &ChannelParams, params: &ProtocolParams) -> Result<f64> {
    let target = gain_zero(params)?;
    let gain = |l: f64| expected_gain(channel, params, l);
    let at_origin = gain(0.0)?;
    if target <= channel.p_d {
        return Err(Error::NoSolution(format!(
            "G_zero = {target:e} does not exceed the dark-count floor {:e}",
            channel.p_d
        )));
    }
    if target >= at_origin {
        return Err(Error::NoSolution(format!(
            "G_zero = {target:e} is not below the zero-distance gain {at_origin:e}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut steps = 0;
    while gain(hi)? > target {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps > MAX_BISECTION_STEPS || !hi.is_finite() {
            return Err(Error::Bracket(format!("no distance with gain below {target:e}")));
        }
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let g = gain(mid)?;
        if (g - target).abs() <= GAIN_TOLERANCE || mid == lo || mid == hi {
            return Ok(mid);
        }
        if g > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence(MAX_BISECTION_STEPS))
}

/// Margin `G(mu) - G_zero(mu)`; positive while the attack cannot reproduce
/// the honest gain.
fn intensity_margin(eta: f64, mu: f64, f: f64, m_max: usize) -> Result<f64> {
    let params = ProtocolParams::new(mu, f, m_max)?;
    Ok(expected_gain_ideal(eta, mu, f)? - gain_zero(&params)?)
}

/// Largest intensity with `G_zero(mu) < G(mu)` at overall transmittance `eta`.
pub fn mu_max(eta: f64, f: f64, m_max: usize) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid("eta", format!("must lie in (0, 1], got {eta}")));
    }
    validate_f(f)?;
    let margin = |mu: f64| intensity_margin(eta, mu, f, m_max);

    // bracket: lo with positive margin, hi without
    let mut lo = eta;
    let mut hi;
    let mut steps = 0;
    if margin(lo)? > 0.0 {
        hi = 2.0 * lo;
        while margin(hi)? > 0.0 {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > MAX_BISECTION_STEPS || !hi.is_finite() {
                return Err(Error::Bracket(format!("margin stays positive up to mu = {hi:e}")));
            }
        }
    } else {
        hi = lo;
        lo *= 0.5;
        while margin(lo)? <= 0.0 {
            hi = lo;
            lo *= 0.5;
            steps += 1;
            if steps > MAX_BISECTION_STEPS || lo == 0.0 {
                return Err(Error::Bracket(format!("no intensity with positive margin at eta = {eta:e}")));
            }
        }
    }

    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo <= MU_REL_TOLERANCE * hi {
            return Ok(lo);
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            return Ok(lo);
        }
        if margin(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence(MAX_BISECTION_STEPS))
}

/// Key-rate upper bound `(1-f) eta mu_max(eta)`.
pub fn r_upp(eta: f64, f: f64, m_max: usize) -> Result<f64> {
    Ok((1.0 - f) * eta * mu_max(eta, f, m_max)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub eta: f64,
    pub mu_max: f64,
    pub r_upp: f64,
}

/// `count` logarithmically spaced points from `from` to `to` inclusive.
pub fn log_space(from: f64, to: f64, count: usize) -> Result<Vec<f64>> {
    if !(from > 0.0 && to > 0.0) || count == 0 {
        return Err(Error::invalid("range", format!("need positive endpoints and count >= 1, got [{from}, {to}] x {count}")));
    }
    if count == 1 {
        return Ok(vec![from]);
    }
    let (a, b) = (from.log10(), to.log10());
    Ok((0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect())
}

/// `mu_max` and `R_upp` over a transmittance grid, evaluated in parallel and
/// returned in input order.
pub fn sweep_eta(etas: &[f64], f: f64, m_max: usize) -> Result<Vec<SweepPoint>> {
    etas.par_iter()
        .map(|&eta| {
            let mu = mu_max(eta, f, m_max)?;
            Ok(SweepPoint { eta, mu_max: mu, r_upp: (1.0 - f) * eta * mu })
        })
        .collect()
}

/// Rounds to 10 significant digits.
pub fn sig10(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.9e}").parse().expect("formatted float parses")
}

/// Writes `eta,mu_max` rows.
pub fn write_mu_max_csv<W: Write + ?Sized>(out: &mut W, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(out, "eta,mu_max")?;
    for p in points {
        writeln!(out, "{},{}", sig10(p.eta), sig10(p.mu_max))?;
    }
    Ok(())
}

/// Writes `eta,r_upp,eta_squared` rows; the last column is the quadratic
/// reference line.
pub fn write_r_upp_csv<W: Write + ?Sized>(out: &mut W, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(out, "eta,r_upp,eta_squared")?;
    for p in points {
        writeln!(out, "{},{},{}", sig10(p.eta), sig10(p.r_upp), sig10(p.eta * p.eta))?;
    }
    Ok(())
}

/// Least-squares slope of `log10(y)` against `log10(x)`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.log10(), y.log10())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
