//! Software XOR arbiter PUF.
//!
//! Each simulated machine owns `k` arbiter chains of `n` stages. A chain is
//! modelled with the additive delay model: the delay difference at the
//! arbiter is the dot product of per-stage weights with the parity feature
//! vector of the challenge, and the chain outputs the sign of that sum. The
//! XOR arbiter PUF combines the chains by multiplying their signs.
//!
//! Chain weights are standard-normal draws from the machine seed, so the seed
//! plays the role of the manufacturing variation that makes machines unique.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{mix64, seeded, GOLDEN_GAMMA};

/// Largest supported chain length; sub-challenges are cut from 64-bit words.
pub const MAX_STAGES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PufConfig {
    pub n_stages: usize,
    pub k_chains: usize,
    pub noise_sigma: f64,
}

impl Default for PufConfig {
    fn default() -> Self {
        PufConfig {
            n_stages: 64,
            k_chains: 4,
            noise_sigma: 0.0,
        }
    }
}

impl PufConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stages == 0 || self.n_stages > MAX_STAGES {
            return Err(Error::Config(format!(
                "n_stages must be in 1..={MAX_STAGES}, got {}",
                self.n_stages
            )));
        }
        if self.k_chains == 0 {
            return Err(Error::Config("k_chains must be at least 1".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Compact challenge identifier. Expands into as many sub-challenges as
/// response bits are requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Challenge(pub u64);

impl Challenge {
    /// Raw challenge word for response bit `i`. Only the low `n_stages` bits
    /// are fed to the chains.
    #[inline]
    pub fn sub_challenge(self, i: u64) -> u64 {
        mix64(self.0.wrapping_add(i.wrapping_mul(GOLDEN_GAMMA)))
    }
}

/// Anything that answers challenges with machine-specific bits.
///
/// The simulated [`XorArbiterPuf`] is the only implementation shipped here; a
/// hardware-backed source can implement this trait and be used by the binding
/// functions unchanged.
pub trait PufBackend: Send + Sync {
    /// `m`-bit response; bit `i` of the result is evaluation `i`.
    fn response(&self, challenge: Challenge, m: usize) -> Result<Vec<bool>>;

    /// 32-bit key for one weight. Bit `i` of the word is response bit `i`.
    fn key32(&self, challenge: Challenge) -> Result<u32> {
        let bits = self.response(challenge, 32)?;
        Ok(bits
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &b)| acc | (u32::from(b) << i)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XorArbiterPuf {
    config: PufConfig,
    machine_seed: u64,
    /// `k_chains` rows of `n_stages + 1` weights; the last entry is the bias.
    chain_weights: Vec<Vec<f64>>,
}

impl XorArbiterPuf {
    pub fn new(machine_seed: u64, config: PufConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(machine_seed);
        let chain_weights = (0..config.k_chains)
            .map(|_| (0..=config.n_stages).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        Ok(XorArbiterPuf {
            config,
            machine_seed,
            chain_weights,
        })
    }

    /// Build a PUF with explicit chain weights. Each row must hold
    /// `n_stages + 1` entries.
    pub fn from_weights(config: PufConfig, chain_weights: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        if chain_weights.len() != config.k_chains {
            return Err(Error::dim("chain count", config.k_chains, chain_weights.len()));
        }
        for row in &chain_weights {
            if row.len() != config.n_stages + 1 {
                return Err(Error::dim("chain weight length", config.n_stages + 1, row.len()));
            }
        }
        Ok(XorArbiterPuf {
            config,
            machine_seed: 0,
            chain_weights,
        })
    }

    pub fn config(&self) -> &PufConfig {
        &self.config
    }

    pub fn machine_seed(&self) -> u64 {
        self.machine_seed
    }

    pub fn chain_weights(&self) -> &[Vec<f64>] {
        &self.chain_weights
    }

    /// One XOR arbiter evaluation. Returns `false` for bit 0, `true` for 1.
    pub fn eval_bit(&self, challenge_bits: &[bool]) -> Result<bool> {
        let n = self.config.n_stages;
        if challenge_bits.len() != n {
            return Err(Error::dim("challenge length", n, challenge_bits.len()));
        }
        let features = parity_features(challenge_bits);
        Ok(self.eval_features(&features))
    }

    /// Evaluate the low `n_stages` bits of `word` (bit `l` is stage `l`).
    pub fn eval_word(&self, word: u64) -> bool {
        let n = self.config.n_stages;
        let bits: Vec<bool> = (0..n).map(|l| (word >> l) & 1 == 1).collect();
        self.eval_features(&parity_features(&bits))
    }

    fn eval_features(&self, features: &[f64]) -> bool {
        let noise = if self.config.noise_sigma > 0.0 {
            Normal::new(0.0, self.config.noise_sigma).ok()
        } else {
            None
        };
        let mut negatives = 0usize;
        for w in &self.chain_weights {
            let mut delay: f64 = w.iter().zip(features).map(|(a, b)| a * b).sum();
            if let Some(dist) = &noise {
                delay += dist.sample(&mut rand::thread_rng());
            }
            // sign(0) = +1
            if delay < 0.0 {
                negatives += 1;
            }
        }
        negatives % 2 == 1
    }

    /// `m`-bit response to a compact challenge.
    pub fn response(&self, challenge: Challenge, m: usize) -> Result<Vec<bool>> {
        if m == 0 {
            return Err(Error::InvalidArgument("response length must be at least 1".into()));
        }
        Ok((0..m as u64)
            .map(|i| self.eval_word(challenge.sub_challenge(i)))
            .collect())
    }
}

impl PufBackend for XorArbiterPuf {
    fn response(&self, challenge: Challenge, m: usize) -> Result<Vec<bool>> {
        XorArbiterPuf::response(self, challenge, m)
    }
}

/// Parity feature vector: `phi[j] = prod_{l >= j} (1 - 2 c_l)`, plus a
/// trailing constant 1 for the bias weight.
pub fn parity_features(challenge_bits: &[bool]) -> Vec<f64> {
    let n = challenge_bits.len();
    let mut phi = vec![1.0; n + 1];
    let mut acc = 1.0;
    for j in (0..n).rev() {
        if challenge_bits[j] {
            acc = -acc;
        }
        phi[j] = acc;
    }
    phi
}

fn hamming32(a: u32, b: u32) -> u32 {
    (a ^ b).count_ones()
}

/// Mean fractional Hamming distance between 32-bit responses of two machines
/// over `num_challenges` challenges drawn from `rng_seed`.
pub fn uniqueness(seed_a: u64, seed_b: u64, config: PufConfig, num_challenges: usize, rng_seed: u64) -> Result<f64> {
    if num_challenges == 0 {
        return Err(Error::InvalidArgument("num_challenges must be at least 1".into()));
    }
    let a = XorArbiterPuf::new(seed_a, config)?;
    let b = XorArbiterPuf::new(seed_b, config)?;
    let mut rng = seeded(rng_seed);
    let mut differing = 0u64;
    for _ in 0..num_challenges {
        let c = Challenge(rng.gen());
        differing += u64::from(hamming32(a.key32(c)?, b.key32(c)?));
    }
    Ok(differing as f64 / (32 * num_challenges) as f64)
}

/// Fraction of 1-bits in 32-bit responses of one machine.
pub fn bit_balance<P: PufBackend + ?Sized>(puf: &P, num_challenges: usize, rng_seed: u64) -> Result<f64> {
    if num_challenges == 0 {
        return Err(Error::InvalidArgument("num_challenges must be at least 1".into()));
    }
    let mut rng = seeded(rng_seed);
    let mut ones = 0u64;
    for _ in 0..num_challenges {
        ones += u64::from(puf.key32(Challenge(rng.gen()))?.count_ones());
    }
    Ok(ones as f64 / (32 * num_challenges) as f64)
}

/// Fraction of response bits that differ across `repeats` evaluations of the
/// same challenges. Zero for a noiseless PUF.
pub fn instability<P: PufBackend + ?Sized>(
    puf: &P,
    num_challenges: usize,
    repeats: usize,
    rng_seed: u64,
) -> Result<f64> {
    if num_challenges == 0 || repeats == 0 {
        return Err(Error::InvalidArgument(
            "num_challenges and repeats must be at least 1".into(),
        ));
    }
    let mut rng = seeded(rng_seed);
    let mut flips = 0u64;
    for _ in 0..num_challenges {
        let c = Challenge(rng.gen());
        let reference = puf.key32(c)?;
        for _ in 0..repeats {
            flips += u64::from(hamming32(reference, puf.key32(c)?));
        }
    }
    Ok(flips as f64 / (32 * num_challenges * repeats) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, k: usize) -> PufConfig {
        PufConfig {
            n_stages: n,
            k_chains: k,
            noise_sigma: 0.0,
        }
    }

    #[test]
    fn rejects_degenerate_configs() {
        assert!(matches!(XorArbiterPuf::new(1, cfg(0, 4)), Err(Error::Config(_))));
        assert!(matches!(XorArbiterPuf::new(1, cfg(64, 0)), Err(Error::Config(_))));
        assert!(matches!(XorArbiterPuf::new(1, cfg(65, 1)), Err(Error::Config(_))));
        let noisy = PufConfig {
            noise_sigma: -0.1,
            ..PufConfig::default()
        };
        assert!(matches!(XorArbiterPuf::new(1, noisy), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_gives_same_instance() {
        let a = XorArbiterPuf::new(42, PufConfig::default()).unwrap();
        let b = XorArbiterPuf::new(42, PufConfig::default()).unwrap();
        assert_eq!(a, b);
        let mut rng = seeded(9);
        for _ in 0..1000 {
            let c = Challenge(rng.gen());
            assert_eq!(a.response(c, 32).unwrap(), b.response(c, 32).unwrap());
        }
    }

    #[test]
    fn bias_only_chain_answers_zero() {
        let puf =
            XorArbiterPuf::from_weights(cfg(8, 1), vec![vec![0.0; 8].into_iter().chain([1.0]).collect()]).unwrap();
        assert!(!puf.eval_bit(&[false; 8]).unwrap());
    }

    #[test]
    fn zero_dot_product_counts_as_positive() {
        let puf = XorArbiterPuf::from_weights(cfg(4, 1), vec![vec![0.0; 5]]).unwrap();
        assert!(!puf.eval_bit(&[true, false, true, true]).unwrap());
    }

    #[test]
    fn flipping_first_stage_flips_chain_weighted_on_phi0() {
        let mut w = vec![0.0; 9];
        w[0] = 1.0;
        let puf = XorArbiterPuf::from_weights(cfg(8, 1), vec![w]).unwrap();
        let mut c = [false, true, false, false, true, true, false, false];
        let before = puf.eval_bit(&c).unwrap();
        c[0] = !c[0];
        assert_ne!(before, puf.eval_bit(&c).unwrap());
    }

    #[test]
    fn one_stage_chain_is_sign_of_two_weight_dot() {
        let puf = XorArbiterPuf::new(7, cfg(1, 1)).unwrap();
        let w = &puf.chain_weights()[0];
        assert_eq!(w.len(), 2);
        for c in [false, true] {
            let phi0 = if c { -1.0 } else { 1.0 };
            let expected = w[0] * phi0 + w[1] < 0.0;
            assert_eq!(puf.eval_bit(&[c]).unwrap(), expected);
        }
    }

    #[test]
    fn single_chain_reduces_to_plain_arbiter() {
        let puf = XorArbiterPuf::new(3, cfg(16, 1)).unwrap();
        let mut rng = seeded(1);
        for _ in 0..200 {
            let bits: Vec<bool> = (0..16).map(|_| rng.gen()).collect();
            let phi = parity_features(&bits);
            let dot: f64 = puf.chain_weights()[0].iter().zip(&phi).map(|(a, b)| a * b).sum();
            assert_eq!(puf.eval_bit(&bits).unwrap(), dot < 0.0);
        }
    }

    #[test]
    fn wrong_challenge_length_is_dimension_error() {
        let puf = XorArbiterPuf::new(1, PufConfig::default()).unwrap();
        assert!(matches!(puf.eval_bit(&[true; 63]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn repeated_noiseless_evaluation_is_stable() {
        let puf = XorArbiterPuf::new(5, PufConfig::default()).unwrap();
        let bits: Vec<bool> = (0..64).map(|i| i % 3 == 0).collect();
        let first = puf.eval_bit(&bits).unwrap();
        for _ in 0..100 {
            assert_eq!(puf.eval_bit(&bits).unwrap(), first);
        }
        assert_eq!(instability(&puf, 50, 10, 2).unwrap(), 0.0);
    }

    #[test]
    fn single_bit_response_uses_sub_challenge_zero() {
        let puf = XorArbiterPuf::new(11, PufConfig::default()).unwrap();
        let c = Challenge(0xDEAD_BEEF);
        let r = puf.response(c, 1).unwrap();
        assert_eq!(r, vec![puf.eval_word(c.sub_challenge(0))]);
        assert!(puf.response(c, 0).is_err());
    }

    #[test]
    fn uniqueness_of_identical_seeds_is_zero() {
        assert_eq!(uniqueness(9, 9, PufConfig::default(), 100, 0).unwrap(), 0.0);
    }

    #[test]
    fn uniqueness_with_one_challenge_is_quantized() {
        let u = uniqueness(1, 2, PufConfig::default(), 1, 5).unwrap();
        let scaled = u * 32.0;
        assert_eq!(scaled, scaled.round());
        assert!((0.0..=1.0).contains(&u));
    }

    #[test]
    fn noisy_puf_flips_some_bits() {
        let puf = XorArbiterPuf::new(
            5,
            PufConfig {
                noise_sigma: 2.0,
                ..PufConfig::default()
            },
        )
        .unwrap();
        assert!(instability(&puf, 50, 4, 1).unwrap() > 0.0);
    }
}
