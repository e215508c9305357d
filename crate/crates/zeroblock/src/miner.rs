//! Per-miner state machines: the honest Zeroblock miner and the
//! block-withholding adversary, expressed as step functions over events.
//!
//! Step functions own nothing shared: the simulation loop feeds one event at
//! a time and applies the returned actions (broadcast scheduling, mining
//! session control) itself.

use std::collections::HashSet;

use thiserror::Error;

use crate::chain::{
    consider_incoming, fork_choice, Block, BlockId, BlockKind, Chain, ForkDecision, KeepReason,
    PowCheck,
};

pub type MinerId = u32;

#[derive(Debug, Clone)]
pub enum MinerEvent {
    /// A chain delivered from the network.
    BlockArrival { chain: Chain, time: f64 },
    /// End of mat interval `index`.
    MatExpiry { index: u64, time: f64 },
    /// This miner's proof-of-work succeeded.
    PowSuccess { nonce: u64, time: f64 },
}

impl MinerEvent {
    pub fn time(&self) -> f64 {
        match self {
            MinerEvent::BlockArrival { time, .. }
            | MinerEvent::MatExpiry { time, .. }
            | MinerEvent::PowSuccess { time, .. } => *time,
        }
    }
}

#[derive(Debug, Clone)]
pub enum MinerAction {
    /// Send the chain to every peer.
    Broadcast(Chain),
    /// Local chain replaced (trace bookkeeping).
    AdoptChain(Chain),
    /// A dummy Zeroblock was generated for the given interval.
    GenerateDummy(u64),
    /// (Re)start the proof-of-work loop on the given head.
    StartMining(BlockId),
    /// Cancel any running proof-of-work session.
    StopMining,
    /// A found block is kept private.
    Withhold(BlockId),
    /// The adversary publishes (part of) its private branch.
    RevealPrivate(Chain),
    /// An incoming chain was not adopted.
    Reject { block: BlockId, reason: KeepReason },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("mat expiry for interval {got} while miner is in interval {expected}")]
    OutOfOrderExpiry { got: u64, expected: u64 },
}

/// Honest miner state (Algorithm-1 control variables).
#[derive(Debug, Clone)]
pub struct MinerState {
    pub id: MinerId,
    pub chain: Chain,
    pub flag_new_block: bool,
    /// Current mat interval, counting from 1. Meaningless when `zeroblock`
    /// is off.
    pub index: u64,
    pub zeroblock: bool,
    pub hash_power: f64,
    /// Standard blocks this miner received (or minted) while their interval
    /// was still open. Exempt from the stale-index rule on later deliveries.
    seen_timely: HashSet<BlockId>,
    next_payload: u64,
}

impl MinerState {
    pub fn new(id: MinerId, hash_power: f64, zeroblock: bool) -> MinerState {
        MinerState {
            id,
            chain: Chain::new(),
            flag_new_block: false,
            index: 1,
            zeroblock,
            hash_power,
            seen_timely: HashSet::new(),
            next_payload: 0,
        }
    }

    fn current_index(&self) -> Option<u64> {
        self.zeroblock.then_some(self.index)
    }

    fn next_block_index(&self) -> u64 {
        if self.zeroblock {
            self.index
        } else {
            self.chain.head().mat_index() + 1
        }
    }

    fn fresh_payload(&mut self) -> u64 {
        let p = self.next_payload;
        self.next_payload += 1;
        p
    }
}

/// One step of the honest protocol. Returns the actions the simulator must
/// carry out.
pub fn honest_step(
    s: &mut MinerState,
    event: MinerEvent,
    pow: &PowCheck,
) -> Result<Vec<MinerAction>, StepError> {
    let mut actions = Vec::new();
    match event {
        MinerEvent::PowSuccess { nonce, .. } => {
            let payload = s.fresh_payload();
            let block = Block::standard(
                s.chain.head().id(),
                s.next_block_index(),
                nonce,
                s.id,
                payload,
            );
            let extended = s
                .chain
                .push(block)
                .expect("own block extends own head");
            if s.zeroblock {
                s.seen_timely.insert(extended.head().id());
            }
            s.chain = extended.clone();
            actions.push(MinerAction::Broadcast(extended));
            if s.zeroblock {
                // one block per interval; reception-only until the boundary
                s.flag_new_block = true;
                actions.push(MinerAction::StopMining);
            } else {
                actions.push(MinerAction::StartMining(s.chain.head().id()));
            }
        }
        MinerEvent::BlockArrival { chain, .. } => {
            if s.zeroblock {
                // note which blocks arrived before their interval closed,
                // adopted or not: they stay acceptable if their branch wins
                // a later fork race
                let fork = chain.fork_point(&s.chain);
                for b in chain.suffix_after(fork) {
                    if b.kind() == BlockKind::Standard && b.mat_index() >= s.index {
                        s.seen_timely.insert(b.id());
                    }
                }
            }
            match consider_incoming(
                &s.chain,
                &chain,
                pow,
                s.current_index(),
                Some(&s.seen_timely),
            ) {
                ForkDecision::AdoptIncoming => {
                    s.chain = chain.clone();
                    actions.push(MinerAction::AdoptChain(chain));
                    if s.zeroblock {
                        s.flag_new_block = true;
                        actions.push(MinerAction::StopMining);
                    } else {
                        actions.push(MinerAction::StartMining(s.chain.head().id()));
                    }
                }
                ForkDecision::KeepLocal(reason) => {
                    actions.push(MinerAction::Reject {
                        block: chain.head().id(),
                        reason,
                    });
                }
            }
        }
        MinerEvent::MatExpiry { index, .. } => {
            if !s.zeroblock {
                return Ok(actions);
            }
            if index != s.index {
                return Err(StepError::OutOfOrderExpiry {
                    got: index,
                    expected: s.index,
                });
            }
            if !s.flag_new_block {
                let dummy = Block::dummy(s.chain.head(), index)
                    .expect("interval index exceeds head index");
                s.chain = s.chain.push(dummy).expect("dummy extends head");
                actions.push(MinerAction::GenerateDummy(index));
                actions.push(MinerAction::AdoptChain(s.chain.clone()));
            }
            s.index = index + 1;
            s.flag_new_block = false;
            actions.push(MinerAction::StartMining(s.chain.head().id()));
        }
    }
    Ok(actions)
}

/// Tie-break override used by the forced-gamma mode: adopt an equal-height
/// rival chain that fork choice would otherwise ignore.
pub fn honest_force_adopt(s: &mut MinerState, chain: Chain) -> Vec<MinerAction> {
    s.chain = chain.clone();
    let mut actions = vec![MinerAction::AdoptChain(chain)];
    if s.zeroblock {
        s.flag_new_block = true;
        actions.push(MinerAction::StopMining);
    } else {
        actions.push(MinerAction::StartMining(s.chain.head().id()));
    }
    actions
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelfishPolicy {
    /// The classical withholding policy, as the attack baseline without
    /// Zeroblock.
    VanillaBitcoin,
    /// Withholding against a network running Zeroblock. With
    /// `keep_private_branch` the adversary extends its private branch with
    /// its own dummies across boundaries instead of discarding it.
    AgainstZeroblock { keep_private_branch: bool },
}

/// Adversary state: private branch plus its view of the public chain.
#[derive(Debug, Clone)]
pub struct SelfishState {
    pub id: MinerId,
    pub private_chain: Chain,
    pub public_view: Chain,
    pub policy: SelfishPolicy,
    pub hash_power: f64,
    /// Current mat interval (against-zeroblock only).
    pub index: u64,
    /// An equal-height reveal race is in flight.
    pub race: bool,
    next_payload: u64,
}

impl SelfishState {
    pub fn new(id: MinerId, hash_power: f64, policy: SelfishPolicy) -> SelfishState {
        SelfishState {
            id,
            private_chain: Chain::new(),
            public_view: Chain::new(),
            policy,
            hash_power,
            index: 1,
            race: false,
            next_payload: 0,
        }
    }

    /// private standard height minus public standard height.
    pub fn lead(&self) -> i64 {
        self.private_chain.standard_height() as i64 - self.public_view.standard_height() as i64
    }

    fn has_withheld(&self) -> bool {
        let fork = self.private_chain.fork_point(&self.public_view);
        !self.private_chain.suffix_after(fork).is_empty()
    }

    fn fresh_payload(&mut self) -> u64 {
        let p = self.next_payload;
        self.next_payload += 1;
        p
    }

    /// The prefix of the private branch whose standard height equals
    /// `height`.
    fn prefix_at_height(&self, height: u64) -> Chain {
        self.private_chain.truncate_to_standard_height(height)
    }
}

pub fn selfish_step(s: &mut SelfishState, event: MinerEvent) -> Vec<MinerAction> {
    match s.policy {
        SelfishPolicy::VanillaBitcoin => vanilla_step(s, event),
        SelfishPolicy::AgainstZeroblock { keep_private_branch } => {
            against_zeroblock_step(s, event, keep_private_branch)
        }
    }
}

fn vanilla_step(s: &mut SelfishState, event: MinerEvent) -> Vec<MinerAction> {
    let mut actions = Vec::new();
    match event {
        MinerEvent::PowSuccess { nonce, .. } => {
            let payload = s.fresh_payload();
            let head = s.private_chain.head().id();
            let index = s.private_chain.head().mat_index() + 1;
            let block = Block::standard(head, index, nonce, s.id, payload);
            let id = block.id();
            s.private_chain = s.private_chain.push(block).expect("extends private head");
            if s.race {
                // we were racing at equal height; this block settles it
                s.race = false;
                s.public_view = s.private_chain.clone();
                actions.push(MinerAction::Broadcast(s.private_chain.clone()));
            } else {
                actions.push(MinerAction::Withhold(id));
            }
            actions.push(MinerAction::StartMining(s.private_chain.head().id()));
        }
        MinerEvent::BlockArrival { chain, .. } => {
            if let ForkDecision::AdoptIncoming = fork_choice(&s.public_view, &chain) {
                s.public_view = chain;
            } else {
                return actions;
            }
            if !s.has_withheld() {
                // nothing private: mine on the public head like everyone else
                s.private_chain = s.public_view.clone();
                s.race = false;
                actions.push(MinerAction::StartMining(s.private_chain.head().id()));
                return actions;
            }
            match s.lead() {
                l if l < 0 => {
                    // honest branch is longer: give up the private branch
                    s.private_chain = s.public_view.clone();
                    s.race = false;
                    actions.push(MinerAction::StartMining(s.private_chain.head().id()));
                }
                0 => {
                    // honest caught up to our single withheld block: reveal
                    // the whole branch and race at equal height
                    s.race = true;
                    actions.push(MinerAction::RevealPrivate(s.private_chain.clone()));
                    actions.push(MinerAction::StartMining(s.private_chain.head().id()));
                }
                1 => {
                    // one ahead after the honest block: publish everything,
                    // the network adopts the longer branch
                    s.public_view = s.private_chain.clone();
                    s.race = false;
                    actions.push(MinerAction::RevealPrivate(s.private_chain.clone()));
                    actions.push(MinerAction::StartMining(s.private_chain.head().id()));
                }
                _ => {
                    // comfortably ahead: publish only up to the public height
                    let prefix = s.prefix_at_height(s.public_view.standard_height());
                    actions.push(MinerAction::RevealPrivate(prefix));
                    actions.push(MinerAction::StartMining(s.private_chain.head().id()));
                }
            }
        }
        MinerEvent::MatExpiry { .. } => {}
    }
    actions
}

fn against_zeroblock_step(
    s: &mut SelfishState,
    event: MinerEvent,
    keep_private_branch: bool,
) -> Vec<MinerAction> {
    let mut actions = Vec::new();
    match event {
        MinerEvent::PowSuccess { nonce, .. } => {
            let payload = s.fresh_payload();
            let head = s.private_chain.head().id();
            let index = s.index.max(s.private_chain.head().mat_index() + 1);
            let block = Block::standard(head, index, nonce, s.id, payload);
            let id = block.id();
            s.private_chain = s.private_chain.push(block).expect("extends private head");
            actions.push(MinerAction::Withhold(id));
            actions.push(MinerAction::StopMining);
        }
        MinerEvent::BlockArrival { chain, .. } => {
            let incoming_longer =
                matches!(fork_choice(&s.public_view, &chain), ForkDecision::AdoptIncoming);
            if incoming_longer {
                s.public_view = chain;
            }
            if !s.has_withheld() {
                if incoming_longer {
                    s.private_chain = s.public_view.clone();
                    actions.push(MinerAction::StopMining);
                }
                return actions;
            }
            match s.lead() {
                l if l < 0 => {
                    // outpaced: the withheld block is unpublishable without
                    // tripping the boundary rule, so drop it
                    s.private_chain = s.public_view.clone();
                    s.race = false;
                }
                0 => {
                    // an honest block reached our withheld height inside the
                    // interval: reveal now to force the fork race
                    s.race = true;
                    actions.push(MinerAction::RevealPrivate(s.private_chain.clone()));
                }
                _ => {}
            }
        }
        MinerEvent::MatExpiry { index, .. } => {
            let withheld = s.has_withheld();
            if withheld && !s.race {
                // Withheld past the boundary. Broadcasting now is exactly the
                // unpermitted-withholding attempt the dummies defeat.
                actions.push(MinerAction::RevealPrivate(s.private_chain.clone()));
            }
            s.race = false;
            if withheld && keep_private_branch {
                // stubborn variant: chain a private dummy and keep going
                if let Ok(d) = Block::dummy(s.private_chain.head(), index) {
                    s.private_chain =
                        s.private_chain.push(d).expect("dummy extends private head");
                }
            } else {
                // rejoin the honest view, reproducing the honest dummy when
                // the interval produced no standard block
                s.private_chain = s.public_view.clone();
                if s.private_chain.head().mat_index() < index {
                    let d = Block::dummy(s.private_chain.head(), index)
                        .expect("index exceeds head index");
                    s.private_chain = s.private_chain.push(d).expect("dummy extends head");
                }
                s.public_view = s.private_chain.clone();
            }
            s.index = index + 1;
            actions.push(MinerAction::StartMining(s.private_chain.head().id()));
        }
    }
    actions
}
