//! Analysis toolkit for the zero-error sequential attack on coherent-one-way
//! (COW) quantum key distribution.
//!
//! The eavesdropper measures every signal with an optimal unambiguous state
//! discrimination (USD) measurement, keeps runs of conclusive results, and
//! resends only those sub-blocks whose edges are vacuum pulses. Doing so never
//! produces a bit error and never breaks the coherence of a monitored pulse
//! pair, yet the channel becomes entanglement breaking.
//!
//! Modules:
//!
//! * [`usd`]: optimal conclusive probabilities and a PSD feasibility oracle.
//! * [`analytics`]: block statistics, expected click counts and the attack
//!   gain `G_zero`.
//! * [`sim`]: seeded Monte Carlo simulation of the full attack with
//!   structural zero-error checks.
//! * [`bounds`]: channel model, the insecurity distance `L_zero`, the
//!   maximum tolerable intensity and the key-rate upper bound.
//! * [`cli`]: the command-line front end.

pub mod analytics;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod sim;
pub mod usd;

pub use error::{Error, Result};
pub use usd::{optimal_usd, ProtocolParams, Regime, UsdSolution};
