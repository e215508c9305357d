//! Closed-form attack/defence probabilities and post-hoc trace analysis.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::chain::{BlockId, BlockKind, Chain};
use crate::miner::MinerId;
use crate::simnet::{SimTrace, TraceExtra, TraceKind};

/// Minimum adversary fraction for which selfish mining beats honest mining,
/// as a function of the tie-winning fraction gamma.
pub fn selfish_threshold_lower(gamma: f64) -> f64 {
    (1.0 - gamma) / (3.0 - 2.0 * gamma)
}

/// Probability of exactly `rho` events for a Poisson process with the given
/// mean count.
pub fn poisson_pmf(rho: u64, lambda: f64) -> f64 {
    let mut fact = 1.0;
    for k in 2..=rho {
        fact *= k as f64;
    }
    lambda.powi(rho as i32) * (-lambda).exp() / fact
}

/// Worst-case probability that a withholding pool mines two consecutive
/// blocks while the honest majority mines the one in between, each within
/// its own expected interval.
pub fn event4_max_probability(selfish_power: f64) -> f64 {
    let sp = selfish_power;
    let hp = 1.0 - sp;
    (sp * (-sp).exp()) * (hp * (-hp).exp()) * sp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockDisposition {
    /// On the reference final chain.
    InChain,
    /// Valid when created but lost a fork race (or was never published).
    Orphaned,
    /// Published and turned away by every peer.
    Rejected,
}

#[derive(Debug, Clone)]
pub struct BlockFate {
    pub block: BlockId,
    pub creator: MinerId,
    pub mint_time: f64,
    pub mat_index: u64,
    pub first_published: Option<f64>,
    pub accepted_somewhere: bool,
    pub disposition: BlockDisposition,
}

#[derive(Debug, Clone)]
pub struct MinerRevenue {
    pub miner: MinerId,
    pub name: String,
    pub selfish: bool,
    pub hash_power: f64,
    pub blocks_minted: u64,
    pub blocks_in_chain: u64,
    pub share: f64,
}

#[derive(Debug, Clone)]
pub struct RevenueReport {
    pub per_miner: Vec<MinerRevenue>,
    pub reference_height: u64,
    pub total_minted: u64,
    /// True when the trace stopped short of its configured horizon.
    pub partial: bool,
}

impl RevenueReport {
    pub fn selfish_share(&self) -> f64 {
        self.per_miner
            .iter()
            .filter(|m| m.selfish)
            .map(|m| m.share)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("miner,name,role,hash_power,minted,in_chain,share\n");
        for m in &self.per_miner {
            let role = if m.selfish { "selfish" } else { "honest" };
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{},{},{:.6}",
                m.miner, m.name, role, m.hash_power, m.blocks_minted, m.blocks_in_chain, m.share
            );
        }
        let shares: f64 = self.per_miner.iter().map(|m| m.share).sum();
        let _ = writeln!(
            out,
            "total,,,1.000000,{},{},{shares:.6}",
            self.total_minted, self.reference_height
        );
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForkReport {
    /// Heights where at least two standard blocks competed.
    pub forked_heights: u64,
    /// Competing mints closer together than the worst-case propagation
    /// delay: pure latency races.
    pub accidental: u64,
    /// Everything else (withholding-induced).
    pub intentional: u64,
    pub reference_height: u64,
}

impl ForkReport {
    pub fn accidental_rate(&self) -> f64 {
        if self.reference_height == 0 {
            return 0.0;
        }
        self.accidental as f64 / self.reference_height as f64
    }

    pub fn total_rate(&self) -> f64 {
        if self.reference_height == 0 {
            return 0.0;
        }
        self.forked_heights as f64 / self.reference_height as f64
    }
}

/// The tallest final chain held by an honest miner.
pub fn reference_chain(trace: &SimTrace) -> &Chain {
    trace
        .final_chains
        .iter()
        .filter(|(id, _)| !trace.config.miners[*id as usize].role.is_selfish())
        .map(|(_, c)| c)
        .max_by_key(|c| c.standard_height())
        .expect("trace has at least one honest miner")
}

/// Reconstructs the lifecycle of every standard block in the trace.
pub fn block_fates(trace: &SimTrace) -> Vec<BlockFate> {
    let mut order: Vec<BlockId> = Vec::new();
    let mut fates: HashMap<BlockId, BlockFate> = HashMap::new();
    for r in &trace.records {
        match r.kind {
            TraceKind::Mint => {
                let mat_index = match r.extra {
                    TraceExtra::Index(i) => i,
                    _ => 0,
                };
                order.push(r.block);
                fates.insert(
                    r.block,
                    BlockFate {
                        block: r.block,
                        creator: r.miner,
                        mint_time: r.time,
                        mat_index,
                        first_published: None,
                        accepted_somewhere: false,
                        disposition: BlockDisposition::Orphaned,
                    },
                );
            }
            TraceKind::Broadcast | TraceKind::Reveal => {
                if let Some(f) = fates.get_mut(&r.block) {
                    if f.first_published.is_none() {
                        f.first_published = Some(r.time);
                    }
                }
            }
            TraceKind::Accept => {
                // acceptance of a chain implies acceptance of its head; the
                // head is what the record names
                if let Some(f) = fates.get_mut(&r.block) {
                    f.accepted_somewhere = true;
                }
            }
            _ => {}
        }
    }
    let in_chain: HashSet<BlockId> = reference_chain(trace)
        .blocks()
        .iter()
        .filter(|b| b.kind() == BlockKind::Standard)
        .map(|b| b.id())
        .collect();
    let mut out: Vec<BlockFate> = Vec::with_capacity(order.len());
    for id in order {
        let mut f = fates.remove(&id).expect("every minted block recorded once");
        f.disposition = if in_chain.contains(&id) {
            BlockDisposition::InChain
        } else if f.first_published.is_some() && !f.accepted_somewhere {
            BlockDisposition::Rejected
        } else {
            BlockDisposition::Orphaned
        };
        out.push(f);
    }
    out
}

/// Who earned what: block counts on the reference chain and revenue shares.
pub fn revenue_shares(trace: &SimTrace) -> RevenueReport {
    let fates = block_fates(trace);
    let n = trace.config.miners.len();
    let mut minted = vec![0u64; n];
    let mut in_chain = vec![0u64; n];
    for f in &fates {
        minted[f.creator as usize] += 1;
        if f.disposition == BlockDisposition::InChain {
            in_chain[f.creator as usize] += 1;
        }
    }
    let reference_height = reference_chain(trace).standard_height();
    let per_miner = trace
        .config
        .miners
        .iter()
        .enumerate()
        .map(|(i, spec)| MinerRevenue {
            miner: i as MinerId,
            name: spec.name.clone(),
            selfish: spec.role.is_selfish(),
            hash_power: spec.hash_power,
            blocks_minted: minted[i],
            blocks_in_chain: in_chain[i],
            share: if reference_height > 0 {
                in_chain[i] as f64 / reference_height as f64
            } else {
                0.0
            },
        })
        .collect();
    RevenueReport {
        per_miner,
        reference_height,
        total_minted: fates.len() as u64,
        partial: !trace.complete,
    }
}

/// Monte-Carlo estimate of the two-consecutive-blocks pattern: one selfish
/// discovery in an expected-block window, one honest discovery in the next,
/// then a selfish winner. Reported alongside the closed form, which is taken
/// as printed.
pub fn event4_empirical(selfish_power: f64, trials: u64, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let sp = selfish_power;
    let hp = 1.0 - sp;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        let selfish_first = poisson_draw(sp, &mut rng) == 1;
        let honest_second = poisson_draw(hp, &mut rng) == 1;
        let selfish_wins_next = rng.random::<f64>() < sp;
        if selfish_first && honest_second && selfish_wins_next {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

fn poisson_draw<R: rand::Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    // inversion by sequential search; fine for the small rates used here
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let u = rng.random::<f64>();
    while u > cdf {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        if k > 1000 {
            break;
        }
    }
    k
}

/// Groups competing standard blocks by chain position and splits fork events
/// into latency races and withholding artifacts.
pub fn fork_report(trace: &SimTrace) -> ForkReport {
    let fates = block_fates(trace);
    let cap = trace.config.propagation.cap();
    // Chain position of each block: standard height of the chain it tipped.
    // Mints at the same position are competitors.
    let mut height_of: HashMap<BlockId, u64> = HashMap::new();
    for r in &trace.records {
        if matches!(r.kind, TraceKind::Broadcast | TraceKind::Reveal) {
            if let TraceExtra::Height(h) = r.extra {
                height_of.entry(r.block).or_insert(h);
            }
        }
    }
    let mut by_height: HashMap<u64, Vec<&BlockFate>> = HashMap::new();
    for f in &fates {
        if let Some(h) = height_of.get(&f.block) {
            by_height.entry(*h).or_default().push(f);
        }
    }
    let mut report = ForkReport {
        reference_height: reference_chain(trace).standard_height(),
        ..ForkReport::default()
    };
    for (_, group) in by_height {
        if group.len() < 2 {
            continue;
        }
        report.forked_heights += 1;
        let lo = group
            .iter()
            .map(|f| f.mint_time)
            .fold(f64::INFINITY, f64::min);
        let hi = group.iter().map(|f| f.mint_time).fold(0.0, f64::max);
        if hi - lo <= cap + 1e-9 {
            report.accidental += 1;
        } else {
            report.intentional += 1;
        }
    }
    report
}

/// Counts blocks that were first published after their interval closed yet
/// still ended up in an honest final chain. Zero for a sound deployment.
pub fn withholding_violations(trace: &SimTrace) -> u64 {
    if !trace.config.zeroblock_enabled {
        return 0;
    }
    let sched = trace.config.schedule();
    let fates = block_fates(trace);
    let honest_blocks: HashSet<BlockId> = trace
        .final_chains
        .iter()
        .filter(|(id, _)| !trace.config.miners[*id as usize].role.is_selfish())
        .flat_map(|(_, c)| c.blocks())
        .filter(|b| b.kind() == BlockKind::Standard)
        .map(|b| b.id())
        .collect();
    fates
        .iter()
        .filter(|f| {
            let deadline = sched.boundary(f.mat_index);
            let late = match f.first_published {
                Some(t) => t > deadline - 1e-9,
                None => true,
            };
            late && honest_blocks.contains(&f.block)
        })
        .count() as u64
}
