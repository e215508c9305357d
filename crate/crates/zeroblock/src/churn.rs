//! Node churn: bootstrap peer sampling, majority / homogeneous-retry join
//! rules, and their exact hypergeometric probabilities.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

use crate::chain::{Chain, PowCheck};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChurnParams {
    /// Network size.
    pub n: u64,
    /// Peers sampled by a joining node.
    pub sigma: u64,
    /// Honest nodes.
    pub eta: u64,
    /// Adversarial nodes.
    pub psi: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChurnError {
    #[error("sigma = {sigma} must be in 1..={n}")]
    BadSigma { sigma: u64, n: u64 },
    #[error("eta = {eta} exceeds network size {n}")]
    BadEta { eta: u64, n: u64 },
}

impl ChurnParams {
    pub fn new(n: u64, sigma: u64, eta: u64) -> Result<ChurnParams, ChurnError> {
        if sigma == 0 || sigma > n {
            return Err(ChurnError::BadSigma { sigma, n });
        }
        if eta > n {
            return Err(ChurnError::BadEta { eta, n });
        }
        Ok(ChurnParams {
            n,
            sigma,
            eta,
            psi: n - eta,
        })
    }
}

/// Exact binomial coefficient; zero when k > n.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= n - i;
        den *= i + 1;
    }
    num / den
}

fn ratio(num: BigUint, den: BigUint) -> f64 {
    BigRational::new(BigInt::from(num), BigInt::from(den))
        .to_f64()
        .expect("hypergeometric ratio in [0, 1]")
}

/// Probability that a uniform σ-sample holds a strict honest majority
/// (h ≥ ⌊σ/2⌋ + 1).
pub fn join_majority_probability(p: ChurnParams) -> f64 {
    let den = binomial(p.n, p.sigma);
    let mut num = BigUint::zero();
    for h in (p.sigma / 2 + 1)..=p.sigma {
        num += binomial(p.eta, h) * binomial(p.psi, p.sigma - h);
    }
    ratio(num, den)
}

/// (P_hom, P_hcorr, P_hnotc): the sample is homogeneous, all-honest, or
/// all-adversarial. P_hom = P_hcorr + P_hnotc exactly.
pub fn homogeneous_probability(p: ChurnParams) -> (f64, f64, f64) {
    let den = binomial(p.n, p.sigma);
    let corr = binomial(p.eta, p.sigma);
    let notc = binomial(p.psi, p.sigma);
    (
        ratio(&corr + &notc, den.clone()),
        ratio(corr, den.clone()),
        ratio(notc, den),
    )
}

/// Probability of m inhomogeneous draws followed by an all-honest one.
pub fn retry_success_probability(p: ChurnParams, m: u32) -> f64 {
    let (hom, hcorr, _) = homogeneous_probability(p);
    (1.0 - hom).powi(m as i32) * hcorr
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinStrategy {
    Majority,
    HomogeneousRetry,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JoinDecision {
    /// The agreed chain plus how many peers held it.
    Chosen(Chain, usize),
    /// Majority rule: no chain held by more than σ/2 peers.
    Inconclusive,
    /// Homogeneous rule: mixed sample, draw again.
    Retry,
}

#[derive(Debug, Clone)]
pub struct JoinResult {
    pub decision: JoinDecision,
    /// Samples dropped for failing validation, with diagnostics.
    pub excluded: Vec<String>,
}

/// Applies one join rule to a peer sample. Chains are compared by head id;
/// invalid chains are excluded and reported.
pub fn join_protocol(samples: &[Chain], strategy: JoinStrategy, pow: &PowCheck) -> JoinResult {
    let sigma = samples.len();
    let mut excluded = Vec::new();
    let mut valid: Vec<&Chain> = Vec::with_capacity(sigma);
    for (i, c) in samples.iter().enumerate() {
        match c.validate(pow) {
            Ok(()) => valid.push(c),
            Err(e) => excluded.push(format!("peer {i}: {e}")),
        }
    }
    let decision = match strategy {
        JoinStrategy::Majority => {
            let mut best: Option<(&Chain, usize)> = None;
            for c in &valid {
                let count = valid
                    .iter()
                    .filter(|o| o.head().id() == c.head().id())
                    .count();
                if best.map(|(_, n)| count > n).unwrap_or(true) {
                    best = Some((c, count));
                }
            }
            match best {
                Some((c, count)) if 2 * count > sigma => JoinDecision::Chosen(c.clone(), count),
                _ => JoinDecision::Inconclusive,
            }
        }
        JoinStrategy::HomogeneousRetry => {
            if excluded.is_empty()
                && !valid.is_empty()
                && valid
                    .iter()
                    .all(|c| c.head().id() == valid[0].head().id())
            {
                JoinDecision::Chosen(valid[0].clone(), sigma)
            } else {
                JoinDecision::Retry
            }
        }
    };
    JoinResult { decision, excluded }
}

/// Draws σ peers uniformly without replacement and applies the join rule.
pub fn sample_join<R: Rng + ?Sized>(
    peers: &[Chain],
    sigma: usize,
    strategy: JoinStrategy,
    pow: &PowCheck,
    rng: &mut R,
) -> JoinResult {
    let picks = rand::seq::index::sample(rng, peers.len(), sigma);
    let samples: Vec<Chain> = picks.iter().map(|i| peers[i].clone()).collect();
    join_protocol(&samples, strategy, pow)
}
