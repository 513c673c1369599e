//! Seeded Monte Carlo simulation of the zero-error attack.
//!
//! The pipeline mirrors the attack step by step:
//!
//! 1. [`generate_stream`]: Alice's random signals.
//! 2. [`measure_stream`]: Eve's USD outcome per signal.
//! 3. [`eve_transform`]: block segmentation, sub-block selection, vacuum
//!    replacement.
//! 4. [`bob_count`]: clicks in Bob's data line plus the two structural error
//!    checks (bit errors, broken monitored pulse pairs).
//!
//! [`run_simulation`] splits a run into fixed-size segments with
//! independently derived seeds, processes them in parallel and merges the
//! tallies in segment order, so a report depends only on `(params, n, seed)`.
//!
//! Pulse convention: a bit-0 signal is an occupied pulse followed by a vacuum
//! pulse, a bit-1 signal is a vacuum pulse followed by an occupied pulse.
//! Resent signals are modelled as clicking with certainty; their intensity is
//! not tracked.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::usd::{optimal_usd, ProtocolParams, UsdSolution};

/// Default master seed used by the CLI and examples.
pub const DEFAULT_SEED: u64 = 0x00C0_FFEE;

/// Number of signals per independently seeded segment.
pub const DEFAULT_SEGMENT_LEN: usize = 1 << 20;

/// Smallest run accepted by [`run_simulation`].
pub const MIN_SIGNALS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SignalKind {
    Bit0,
    Bit1,
    Decoy,
    Vacuum,
}

impl SignalKind {
    /// Occupancy of the (first, second) temporal pulse.
    pub fn pulses(self) -> (bool, bool) {
        match self {
            SignalKind::Bit0 => (true, false),
            SignalKind::Bit1 => (false, true),
            SignalKind::Decoy => (true, true),
            SignalKind::Vacuum => (false, false),
        }
    }

    /// Signal index `j` of `phi_j`; `None` for vacuum.
    pub fn index(self) -> Option<usize> {
        match self {
            SignalKind::Bit0 => Some(0),
            SignalKind::Bit1 => Some(1),
            SignalKind::Decoy => Some(2),
            SignalKind::Vacuum => None,
        }
    }

    pub fn from_index(j: usize) -> Option<Self> {
        match j {
            0 => Some(SignalKind::Bit0),
            1 => Some(SignalKind::Bit1),
            2 => Some(SignalKind::Decoy),
            _ => None,
        }
    }

    pub fn bit(self) -> Option<u8> {
        match self {
            SignalKind::Bit0 => Some(0),
            SignalKind::Bit1 => Some(1),
            _ => None,
        }
    }
}

/// Eve's result for one signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The signal was identified with certainty.
    Conclusive(SignalKind),
    Inconclusive,
}

/// Alice's signal sequence: bits with probability `(1-f)/2` each, decoys
/// with probability `f`.
pub fn generate_stream(params: &ProtocolParams, n: usize, seed: u64) -> Result<Vec<SignalKind>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::invalid("n", "stream length must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_bits = (1.0 - params.f) / 2.0;
    let bits = 1.0 - params.f;
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if u < half_bits {
                SignalKind::Bit0
            } else if u < bits {
                SignalKind::Bit1
            } else {
                SignalKind::Decoy
            }
        })
        .collect())
}

/// Samples Eve's USD outcome for every signal. Conclusive results always
/// name the signal actually sent.
pub fn measure_stream(stream: &[SignalKind], usd: &UsdSolution, seed: u64) -> Vec<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    stream
        .iter()
        .map(|&s| {
            let q = match s {
                SignalKind::Bit0 | SignalKind::Bit1 => usd.q_ss,
                SignalKind::Decoy => usd.q_ds,
                SignalKind::Vacuum => 0.0,
            };
            let u: f64 = rng.random();
            if u < q {
                Outcome::Conclusive(s)
            } else {
                Outcome::Inconclusive
            }
        })
        .collect()
}

fn left_edge_ok(block: &[SignalKind], a: usize) -> bool {
    !block[a].pulses().0 || (a > 0 && !block[a - 1].pulses().1)
}

fn right_edge_ok(block: &[SignalKind], b: usize) -> bool {
    !block[b].pulses().1 || (b + 1 < block.len() && !block[b + 1].pulses().0)
}

/// Longest contiguous sub-block (0-based, half-open) whose outer pulses are
/// guaranteed to sit next to vacuum once everything else is blanked.
///
/// A sub-block may start at `a` if the first pulse of `block[a]` is vacuum,
/// or if `block[a-1]` (inside the block) ends with a vacuum pulse; it may end
/// at `b` if the second pulse of `block[b]` is vacuum, or if `block[b+1]`
/// (inside the block) starts with one. Nothing outside the block is assumed
/// known. Left and right conditions are independent, so the longest valid
/// range runs from the first admissible start to the last admissible end;
/// ties cannot occur.
pub fn best_subblock(block: &[SignalKind]) -> Option<Range<usize>> {
    let start = (0..block.len()).find(|&a| left_edge_ok(block, a))?;
    let end = (0..block.len()).rev().find(|&b| right_edge_ok(block, b))?;
    (start <= end).then(|| start..end + 1)
}

/// One block of Eve's post-processing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRecord {
    /// Stream index of the first signal in the block.
    pub start: usize,
    /// Number of consecutive conclusive results `k`.
    pub conclusive: usize,
    /// Signals covered, including the terminating vacuum signal if present.
    pub len: usize,
    /// Resent sub-block, relative to `start`.
    pub kept: Option<Range<usize>>,
    /// False for a run cut off by the end of the stream.
    pub complete: bool,
}

impl BlockRecord {
    pub fn clicks(&self) -> usize {
        self.kept.as_ref().map_or(0, |r| r.len())
    }
}

/// Signals Eve resends to Bob, with the block log behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub transmitted: Vec<SignalKind>,
    pub blocks: Vec<BlockRecord>,
}

/// Applies the attack's block rules to Eve's outcomes.
///
/// A run of `k` conclusive results is closed by the next inconclusive
/// result, or forcibly after `m_max` results, in which case the following
/// signal is blanked regardless of its outcome. Runs with `k < 2` are blanked
/// entirely; longer runs keep only [`best_subblock`]. A run still open at the
/// end of the stream is processed the same way without a terminator.
pub fn eve_transform(outcomes: &[Outcome], m_max: usize) -> Result<Transformed> {
    if m_max < 2 {
        return Err(Error::invalid("m_max", format!("must be >= 2, got {m_max}")));
    }
    let n = outcomes.len();
    let mut transmitted = vec![SignalKind::Vacuum; n];
    let mut blocks = Vec::new();
    let mut run: Vec<SignalKind> = Vec::with_capacity(m_max);
    let mut i = 0;
    while i < n {
        let start = i;
        run.clear();
        while i < n && run.len() < m_max {
            match outcomes[i] {
                Outcome::Conclusive(s) => {
                    run.push(s);
                    i += 1;
                }
                Outcome::Inconclusive => break,
            }
        }
        // the terminator is either the inconclusive signal or, for a full
        // run, the next signal whatever its outcome
        let complete = i < n;
        if complete {
            i += 1;
        }
        let kept = if run.len() >= 2 { best_subblock(&run) } else { None };
        if let Some(r) = &kept {
            transmitted[start + r.start..start + r.end].copy_from_slice(&run[r.clone()]);
        }
        blocks.push(BlockRecord {
            start,
            conclusive: run.len(),
            len: i - start,
            kept,
            complete,
        });
    }
    Ok(Transformed { transmitted, blocks })
}

/// What Bob's data-line detector registers for one signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Detection {
    None,
    /// Click in a single time slot, decoded as this bit.
    Bit(u8),
    /// Clicks in both slots; Bob assigns a random bit.
    Double,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BobTally {
    pub clicks: u64,
    pub qber_violations: u64,
    pub monitored_pair_violations: u64,
    pub detections: Vec<Detection>,
}

fn pulse_train(signals: &[SignalKind]) -> impl Iterator<Item = bool> + '_ {
    signals.iter().flat_map(|s| {
        let (a, b) = s.pulses();
        [a, b]
    })
}

/// Number of adjacent pulse pairs that are both occupied in `alice` but only
/// half occupied in `transmitted`.
pub fn monitored_pair_violations(transmitted: &[SignalKind], alice: &[SignalKind]) -> Result<u64> {
    if transmitted.len() != alice.len() {
        return Err(Error::LengthMismatch {
            transmitted: transmitted.len(),
            alice: alice.len(),
        });
    }
    let pairs = pulse_train(alice).zip(pulse_train(transmitted));
    let mut prev: Option<(bool, bool)> = None;
    let mut count = 0;
    for (a, t) in pairs {
        if let Some((pa, pt)) = prev {
            if pa && a && (pt != t) {
                count += 1;
            }
        }
        prev = Some((a, t));
    }
    Ok(count)
}

/// Counts Bob's clicks and the two error signatures the protocol monitors.
///
/// Every non-vacuum transmitted signal clicks exactly once. A QBER violation
/// is a click at a position where Alice sent a bit but Bob does not decode
/// that same bit deterministically.
pub fn bob_count(transmitted: &[SignalKind], alice: &[SignalKind]) -> Result<BobTally> {
    let monitored = monitored_pair_violations(transmitted, alice)?;
    let mut clicks = 0;
    let mut qber = 0;
    let detections = transmitted
        .iter()
        .zip(alice)
        .map(|(&t, &a)| {
            let d = match t {
                SignalKind::Vacuum => Detection::None,
                SignalKind::Decoy => Detection::Double,
                bit => Detection::Bit(bit.bit().expect("bit signal")),
            };
            if d != Detection::None {
                clicks += 1;
                if let Some(sent) = a.bit() {
                    if d != Detection::Bit(sent) {
                        qber += 1;
                    }
                }
            }
            d
        })
        .collect();
    Ok(BobTally {
        clicks,
        qber_violations: qber,
        monitored_pair_violations: monitored,
        detections,
    })
}

/// Length and seed of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    pub segment_len: usize,
}

impl SimConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            segment_len: DEFAULT_SEGMENT_LEN,
        }
    }
}

/// Summary of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub n_signals: u64,
    pub clicks: u64,
    pub gain_estimate: f64,
    pub gain_std_error: f64,
    pub qber_violations: u64,
    pub monitored_pair_violations: u64,
    /// Complete blocks by number of conclusive results, `k = 0..=m_max`.
    #[serde(rename = "histogram")]
    pub block_length_histogram: Vec<u64>,
    pub seed: u64,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Additive per-segment tallies. Integer moments merge exactly, which keeps
/// the merged report independent of thread scheduling.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Tally {
    n: u64,
    clicks: u64,
    qber: u64,
    monitored: u64,
    histogram: Vec<u64>,
    blocks: u64,
    sum_cc: u128,
    sum_cl: u128,
    sum_ll: u128,
}

impl Tally {
    fn merge(&mut self, other: &Tally) {
        self.n += other.n;
        self.clicks += other.clicks;
        self.qber += other.qber;
        self.monitored += other.monitored;
        if self.histogram.len() < other.histogram.len() {
            self.histogram.resize(other.histogram.len(), 0);
        }
        for (a, b) in self.histogram.iter_mut().zip(&other.histogram) {
            *a += b;
        }
        self.blocks += other.blocks;
        self.sum_cc += other.sum_cc;
        self.sum_cl += other.sum_cl;
        self.sum_ll += other.sum_ll;
    }

    /// Standard error of the ratio estimator `sum(c) / sum(l)` over blocks
    /// with click count `c` and length `l` (delta method).
    fn ratio_std_error(&self) -> f64 {
        if self.blocks < 2 || self.n == 0 {
            return 0.0;
        }
        let g = self.clicks as f64 / self.n as f64;
        let ss = self.sum_cc as f64 - 2.0 * g * self.sum_cl as f64 + g * g * self.sum_ll as f64;
        let b = self.blocks as f64;
        (ss.max(0.0) * b / (b - 1.0)).sqrt() / self.n as f64
    }
}

/// SplitMix64 finalizer applied to `master + index * golden`.
fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds used for segment `index`: `(stream seed, measurement seed)`.
pub fn segment_seeds(master: u64, index: u64) -> (u64, u64) {
    (derive_seed(master, 2 * index), derive_seed(master, 2 * index + 1))
}

struct Segment {
    tally: Tally,
    first: (SignalKind, SignalKind),
    last: (SignalKind, SignalKind),
}

fn run_segment(params: &ProtocolParams, usd: &UsdSolution, len: usize, master: u64, index: u64) -> Result<Segment> {
    let (stream_seed, measure_seed) = segment_seeds(master, index);
    let alice = generate_stream(params, len, stream_seed)?;
    let outcomes = measure_stream(&alice, usd, measure_seed);
    let Transformed { transmitted, blocks } = eve_transform(&outcomes, params.m_max)?;
    let bob = bob_count(&transmitted, &alice)?;

    let mut tally = Tally {
        n: len as u64,
        clicks: bob.clicks,
        qber: bob.qber_violations,
        monitored: bob.monitored_pair_violations,
        histogram: vec![0; params.m_max + 1],
        blocks: blocks.len() as u64,
        ..Tally::default()
    };
    for b in &blocks {
        if b.complete {
            tally.histogram[b.conclusive] += 1;
        }
        let c = b.clicks() as u128;
        let l = b.len as u128;
        tally.sum_cc += c * c;
        tally.sum_cl += c * l;
        tally.sum_ll += l * l;
    }
    Ok(Segment {
        tally,
        first: (alice[0], transmitted[0]),
        last: (alice[len - 1], transmitted[len - 1]),
    })
}

/// Runs the full attack on `config.n` signals.
pub fn run_simulation(params: &ProtocolParams, config: &SimConfig) -> Result<SimReport> {
    params.validate()?;
    if config.n < MIN_SIGNALS {
        return Err(Error::invalid("n", format!("must be >= {MIN_SIGNALS}, got {}", config.n)));
    }
    if config.segment_len == 0 {
        return Err(Error::invalid("segment_len", "must be >= 1"));
    }
    let usd = optimal_usd(params)?;
    let n_segments = config.n.div_ceil(config.segment_len);
    let segments = (0..n_segments)
        .into_par_iter()
        .map(|i| {
            let start = i * config.segment_len;
            let len = config.segment_len.min(config.n - start);
            run_segment(params, &usd, len, config.seed, i as u64)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = Tally::default();
    for (i, seg) in segments.iter().enumerate() {
        total.merge(&seg.tally);
        // the pulse pair straddling two segments
        if i > 0 {
            let (pa, pt) = segments[i - 1].last;
            let (a, t) = seg.first;
            total.monitored += monitored_pair_violations(&[pt, t], &[pa, a])?;
        }
    }

    Ok(SimReport {
        n_signals: total.n,
        clicks: total.clicks,
        gain_estimate: total.clicks as f64 / total.n as f64,
        gain_std_error: total.ratio_std_error(),
        qber_violations: total.qber,
        monitored_pair_violations: total.monitored,
        block_length_histogram: total.histogram,
        seed: config.seed,
    })
}
