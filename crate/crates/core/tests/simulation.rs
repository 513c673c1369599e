use std::ops::Range;

use cow_zero::analytics::{gain_zero, BlockDistribution};
use cow_zero::sim::{
    best_subblock, bob_count, eve_transform, generate_stream, measure_stream, monitored_pair_violations,
    run_simulation, Outcome, SignalKind, SimConfig,
};
use cow_zero::usd::{optimal_usd, ProtocolParams};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SENT: [SignalKind; 3] = [SignalKind::Bit0, SignalKind::Bit1, SignalKind::Decoy];

fn params(mu: f64, f: f64, m_max: usize) -> ProtocolParams {
    ProtocolParams::new(mu, f, m_max).unwrap()
}

/// True if resending `block[range]` between blanked neighbours never breaks a
/// monitored pair, whatever Alice sent just before and just after the block.
fn undetectable(block: &[SignalKind], range: &Range<usize>) -> bool {
    SENT.iter().all(|&before| {
        SENT.iter().all(|&after| {
            let mut alice = vec![before];
            alice.extend_from_slice(block);
            alice.push(after);
            let mut sent = vec![SignalKind::Vacuum; alice.len()];
            for i in range.clone() {
                sent[i + 1] = block[i];
            }
            monitored_pair_violations(&sent, &alice).unwrap() == 0
        })
    })
}

fn longest_undetectable(block: &[SignalKind]) -> usize {
    let n = block.len();
    (0..n)
        .flat_map(|a| (a + 1..=n).map(move |b| a..b))
        .filter(|r| undetectable(block, r))
        .map(|r| r.len())
        .max()
        .unwrap_or(0)
}

fn all_blocks(len: usize) -> impl Iterator<Item = Vec<SignalKind>> {
    (0..3usize.pow(len as u32)).map(move |mut code| {
        (0..len)
            .map(|_| {
                let s = SENT[code % 3];
                code /= 3;
                s
            })
            .collect()
    })
}

#[test]
fn best_subblock_is_safe_and_maximal() {
    for len in 1..=6 {
        for block in all_blocks(len) {
            let best = longest_undetectable(&block);
            match best_subblock(&block) {
                Some(r) => {
                    assert!(undetectable(&block, &r), "{block:?} {r:?}");
                    assert_eq!(r.len(), best, "{block:?}");
                }
                None => assert_eq!(best, 0, "{block:?}"),
            }
        }
    }
}

#[test]
fn subblock_examples() {
    use SignalKind::*;
    assert_eq!(best_subblock(&[Bit1, Bit0]), Some(0..2));
    assert_eq!(best_subblock(&[Bit0, Bit1]), None);
    assert_eq!(best_subblock(&[Decoy, Decoy, Decoy]), None);
    assert_eq!(best_subblock(&[Bit0, Bit1, Bit0, Bit1]), Some(1..3));
}

#[test]
fn transmitted_signals_are_copies_of_alices() {
    let p = params(0.8, 0.3, 6);
    let alice = generate_stream(&p, 200_000, 5).unwrap();
    let usd = optimal_usd(&p).unwrap();
    let outcomes = measure_stream(&alice, &usd, 6);
    let t = eve_transform(&outcomes, p.m_max).unwrap();
    assert_eq!(t.transmitted.len(), alice.len());
    for (s, a) in t.transmitted.iter().zip(&alice) {
        assert!(*s == SignalKind::Vacuum || s == a);
    }
    for (o, a) in outcomes.iter().zip(&alice) {
        if let Outcome::Conclusive(k) = o {
            assert_eq!(k, a);
        }
    }
    let tally = bob_count(&t.transmitted, &alice).unwrap();
    assert_eq!(tally.qber_violations, 0);
    assert_eq!(tally.monitored_pair_violations, 0);
    let kept: usize = t.blocks.iter().map(|b| b.clicks()).sum();
    assert_eq!(kept as u64, tally.clicks);
}

#[test]
fn decoy_frequency_matches_f() {
    let n = 1_000_000;
    let f = 0.155;
    let s = generate_stream(&params(0.06, f, 10), n, 99).unwrap();
    let decoys = s.iter().filter(|&&x| x == SignalKind::Decoy).count() as f64;
    let sigma = (n as f64 * f * (1.0 - f)).sqrt();
    assert!((decoys - n as f64 * f).abs() <= 5.0 * sigma);
}

#[test]
fn conclusive_fraction_matches_p_c() {
    let n = 1_000_000;
    let p = params(0.06, 0.155, 10);
    let usd = optimal_usd(&p).unwrap();
    let s = generate_stream(&p, n, 1).unwrap();
    let o = measure_stream(&s, &usd, 2);
    let c = o.iter().filter(|x| matches!(x, Outcome::Conclusive(_))).count() as f64;
    let sigma = (n as f64 * usd.p_c * (1.0 - usd.p_c)).sqrt();
    assert!((c - n as f64 * usd.p_c).abs() <= 5.0 * sigma, "{c} vs {}", n as f64 * usd.p_c);
}

#[test]
fn block_histogram_passes_chi_square() {
    let p = params(0.5, 0.1, 10);
    let usd = optimal_usd(&p).unwrap();
    let report = run_simulation(&p, &SimConfig::new(1_000_000, 31)).unwrap();
    let blocks: u64 = report.block_length_histogram.iter().sum();
    let expected: Vec<f64> = BlockDistribution::new(usd.p_c, p.m_max)
        .unwrap()
        .by_conclusive_count()
        .iter()
        .map(|q| q * blocks as f64)
        .collect();

    // pool sparse tail bins
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (o, e) in report.block_length_histogram.iter().zip(&expected) {
        obs += *o as f64;
        exp += e;
        if exp >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 {
        let last = bins.last_mut().unwrap();
        last.0 += obs;
        last.1 += exp;
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let crit = ChiSquared::new((bins.len() - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(stat <= crit, "chi2 {stat} > {crit} over {} bins", bins.len());
}

#[test]
fn monte_carlo_gain_at_higher_intensity() {
    let p = params(0.1, 0.155, 10);
    let r = run_simulation(&p, &SimConfig::new(3_000_000, 8)).unwrap();
    let g = gain_zero(&p).unwrap();
    let z = (r.gain_estimate - g) / r.gain_std_error;
    assert!(z.abs() <= 5.0, "z = {z}");
}

#[test]
fn simulation_is_deterministic() {
    let p = params(0.3, 0.2, 8);
    let mut cfg = SimConfig::new(300_000, 4242);
    cfg.segment_len = 50_000;
    let a = run_simulation(&p, &cfg).unwrap();
    let b = run_simulation(&p, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn monitored_pair_catches_split_decoy() {
    use SignalKind::*;
    let alice = [Bit1, Decoy, Bit0];
    assert_eq!(monitored_pair_violations(&[Bit1, Decoy, Bit0], &alice).unwrap(), 0);
    assert!(monitored_pair_violations(&[Bit1, Vacuum, Bit0], &alice).unwrap() > 0);
    assert!(monitored_pair_violations(&[Vacuum, Decoy, Bit0], &alice).unwrap() > 0);
    assert!(monitored_pair_violations(&[Bit1], &alice).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attack_never_causes_errors(mu in 0.01f64..2.0, f in 0.01f64..0.9, m_max in 2usize..12, seed in any::<u64>()) {
        let r = run_simulation(&params(mu, f, m_max), &SimConfig::new(20_000, seed)).unwrap();
        prop_assert_eq!(r.qber_violations, 0);
        prop_assert_eq!(r.monitored_pair_violations, 0);
        prop_assert!(r.gain_estimate >= 0.0 && r.gain_estimate <= 1.0);
    }
}
