//! Deterministic discrete-event simulation: global clock, event queue,
//! propagation-delay model, miner orchestration and trace recording.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::chain::{BlockId, BlockKind, Chain, KeepReason, PowCheck, RejectReason};
use crate::miner::{
    honest_force_adopt, honest_step, selfish_step, MinerAction, MinerEvent, MinerId, MinerState,
    SelfishPolicy, SelfishState,
};
use crate::mining::{adjust_difficulty, grind, sample_block_interval, Difficulty, MatSchedule};

#[derive(Debug, Clone, PartialEq)]
pub enum Role {
    Honest,
    Selfish(SelfishPolicy),
}

impl Role {
    pub fn is_selfish(&self) -> bool {
        matches!(self, Role::Selfish(_))
    }
}

#[derive(Debug, Clone)]
pub struct MinerSpec {
    pub name: String,
    pub role: Role,
    pub hash_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropagationModel {
    Constant(f64),
    Uniform(f64, f64),
    /// Delay drawn uniformly from a measured table.
    Empirical(Vec<f64>),
}

impl PropagationModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PropagationModel::Constant(d) => *d,
            PropagationModel::Uniform(lo, hi) => {
                if hi > lo {
                    rng.random_range(*lo..*hi)
                } else {
                    *lo
                }
            }
            PropagationModel::Empirical(table) => {
                let i = rng.random_range(0..table.len());
                table[i]
            }
        }
    }

    /// Largest delay the model can produce (the fork-classification window).
    pub fn cap(&self) -> f64 {
        match self {
            PropagationModel::Constant(d) => *d,
            PropagationModel::Uniform(_, hi) => *hi,
            PropagationModel::Empirical(t) => t.iter().cloned().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    StandardBlocks(u64),
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MiningBackend {
    /// Exponential arrivals split across miners by hash power.
    Stochastic,
    /// Real (reduced-width) hash grinding; `nethp` is the network rate in
    /// hashes per second.
    Hash { width: u32, threshold: u64, nethp: f64 },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub miners: Vec<MinerSpec>,
    pub avt_net: f64,
    pub ipt: f64,
    pub propagation: PropagationModel,
    pub zeroblock_enabled: bool,
    pub forced_gamma: Option<f64>,
    pub horizon: Horizon,
    pub seed: u64,
    /// Retarget interval in standard blocks; 0 disables retargeting.
    pub difficulty_epoch: u64,
    pub backend: MiningBackend,
    /// Sensitivity knob: keep mining through the reception-only window.
    pub mine_full_interval: bool,
    /// Per-miner boundary skew bound in seconds (experiment knob).
    pub clock_skew: f64,
    pub allow_majority_adversary: bool,
}

impl SimConfig {
    pub fn schedule(&self) -> MatSchedule {
        MatSchedule::new(self.avt_net, self.ipt)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.miners.is_empty() {
            return Err(ConfigError::NoMiners);
        }
        let total: f64 = self.miners.iter().map(|m| m.hash_power).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ConfigError::HashPowerSum(total));
        }
        if self.miners.iter().any(|m| m.hash_power <= 0.0) {
            return Err(ConfigError::NonPositiveHashPower);
        }
        let selfish: f64 = self
            .miners
            .iter()
            .filter(|m| m.role.is_selfish())
            .map(|m| m.hash_power)
            .sum();
        if selfish > 0.49 + 1e-12 && !self.allow_majority_adversary {
            return Err(ConfigError::MajorityAdversary(selfish));
        }
        if !(self.avt_net > 0.0) {
            return Err(ConfigError::BadTiming("avt_net must be positive"));
        }
        if self.ipt < 0.0 {
            return Err(ConfigError::BadTiming("ipt must be non-negative"));
        }
        let (lo, hi) = match &self.propagation {
            PropagationModel::Constant(d) => (*d, *d),
            PropagationModel::Uniform(lo, hi) => (*lo, *hi),
            PropagationModel::Empirical(t) => {
                if t.is_empty() {
                    return Err(ConfigError::BadTiming("empirical delay table is empty"));
                }
                (
                    t.iter().cloned().fold(f64::INFINITY, f64::min),
                    t.iter().cloned().fold(0.0, f64::max),
                )
            }
        };
        if lo < 0.0 || hi > self.ipt || hi < lo {
            return Err(ConfigError::DelayOutOfRange { lo, hi, ipt: self.ipt });
        }
        if let Some(g) = self.forced_gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(ConfigError::BadGamma(g));
            }
        }
        if let MiningBackend::Hash { width, threshold, nethp } = &self.backend {
            if !(1..=64).contains(width) || *threshold == 0 || *threshold > (1u64 << width) {
                return Err(ConfigError::BadTiming("hash backend width/threshold invalid"));
            }
            if !(nethp > &0.0) {
                return Err(ConfigError::BadTiming("hash backend nethp must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("no miners configured")]
    NoMiners,
    #[error("hash power fractions sum to {0}, expected 1")]
    HashPowerSum(f64),
    #[error("hash power fractions must be positive")]
    NonPositiveHashPower,
    #[error("selfish hash power {0} exceeds 0.49 (51% guard)")]
    MajorityAdversary(f64),
    #[error("propagation delays [{lo}, {hi}] must lie within [0, ipt={ipt}]")]
    DelayOutOfRange { lo: f64, hi: f64, ipt: f64 },
    #[error("forced gamma {0} outside [0, 1]")]
    BadGamma(f64),
    #[error("{0}")]
    BadTiming(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Mint,
    Broadcast,
    Deliver,
    Accept,
    Reject,
    Dummy,
    Reveal,
}

impl TraceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceKind::Mint => "mint",
            TraceKind::Broadcast => "broadcast",
            TraceKind::Deliver => "deliver",
            TraceKind::Accept => "accept",
            TraceKind::Reject => "reject",
            TraceKind::Dummy => "dummy",
            TraceKind::Reveal => "reveal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceExtra {
    None,
    Index(u64),
    Reason(&'static str),
    Height(u64),
}

#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub time: f64,
    pub kind: TraceKind,
    pub miner: MinerId,
    pub block: BlockId,
    pub extra: TraceExtra,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        let extra = match &self.extra {
            TraceExtra::None => String::new(),
            TraceExtra::Index(i) => format!("mat={i}"),
            TraceExtra::Reason(r) => format!("reason={r}"),
            TraceExtra::Height(h) => format!("height={h}"),
        };
        format!(
            "{:.6},{},{},{},{}",
            self.time,
            self.kind.as_str(),
            self.miner,
            self.block.to_hex(),
            extra
        )
    }
}

/// Full record of one simulation run.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub config: SimConfig,
    pub records: Vec<TraceRecord>,
    pub final_chains: Vec<(MinerId, Chain)>,
    pub end_time: f64,
    pub complete: bool,
}

impl SimTrace {
    /// Newline-delimited `time,kind,miner,block_id,extra` records.
    pub fn serialize_records(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 96);
        for r in &self.records {
            let _ = writeln!(out, "{}", r.to_line());
        }
        out
    }
}

#[derive(Debug, Clone)]
enum EventKind {
    Mint { miner: usize, session: u64, nonce: u64 },
    Deliver { to: usize, chain: Chain },
    MatBoundary { miner: usize, index: u64 },
    RetargetCheck,
}

#[derive(Debug, Clone)]
struct Queued {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want the earliest event
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Min-heap ordered by (time, insertion order).
pub(crate) struct EventQueue {
    heap: BinaryHeap<Queued>,
    next_seq: u64,
}

impl EventQueue {
    fn new() -> EventQueue {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
        }
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Queued { time, seq, kind });
    }

    fn pop(&mut self) -> Option<Queued> {
        self.heap.pop()
    }
}

enum Actor {
    Honest(MinerState),
    Selfish(SelfishState),
}

struct Engine {
    config: SimConfig,
    sched: MatSchedule,
    pow: PowCheck,
    rng: ChaCha20Rng,
    queue: EventQueue,
    actors: Vec<Actor>,
    sessions: Vec<u64>,
    skews: Vec<f64>,
    difficulty: Difficulty,
    retarget_anchor: f64,
    retargeted_through: u64,
    mint_times: HashMap<BlockId, f64>,
    records: Vec<TraceRecord>,
    minted_standard: u64,
}

/// Runs the event loop to the configured horizon. The trace is a pure
/// function of the config (seed included).
pub fn run(config: SimConfig) -> Result<SimTrace, ConfigError> {
    config.validate()?;
    let sched = config.schedule();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let skews: Vec<f64> = config
        .miners
        .iter()
        .map(|_| {
            if config.clock_skew > 0.0 {
                rng.random_range(0.0..config.clock_skew)
            } else {
                0.0
            }
        })
        .collect();
    let pow = match &config.backend {
        MiningBackend::Stochastic => PowCheck::Assumed,
        MiningBackend::Hash { width, threshold, .. } => PowCheck::Toy {
            threshold: *threshold,
            width: *width,
        },
    };
    let actors: Vec<Actor> = config
        .miners
        .iter()
        .enumerate()
        .map(|(i, spec)| match &spec.role {
            Role::Honest => Actor::Honest(MinerState::new(
                i as MinerId,
                spec.hash_power,
                config.zeroblock_enabled,
            )),
            Role::Selfish(policy) => {
                Actor::Selfish(SelfishState::new(i as MinerId, spec.hash_power, *policy))
            }
        })
        .collect();
    let n = actors.len();
    let mut engine = Engine {
        sched,
        pow,
        rng,
        queue: EventQueue::new(),
        actors,
        sessions: vec![0; n],
        skews,
        difficulty: Difficulty::new(1.0).expect("1 is a valid difficulty"),
        retarget_anchor: 0.0,
        retargeted_through: 0,
        mint_times: HashMap::new(),
        records: Vec::new(),
        minted_standard: 0,
        config,
    };
    let complete = engine.run_loop();
    Ok(engine.finish(complete))
}

impl Engine {
    fn run_loop(&mut self) -> bool {
        for m in 0..self.actors.len() {
            self.start_mining(m, 0.0);
            if self.config.zeroblock_enabled {
                let t = self.sched.boundary(1) + self.skews[m];
                self.queue
                    .push(t, EventKind::MatBoundary { miner: m, index: 1 });
            }
        }
        while let Some(ev) = self.queue.pop() {
            if let Horizon::Seconds(limit) = self.config.horizon {
                if ev.time > limit {
                    return true;
                }
            }
            match ev.kind {
                EventKind::Mint { miner, session, nonce } => {
                    self.on_mint(miner, session, nonce, ev.time)
                }
                EventKind::Deliver { to, chain } => self.on_deliver(to, chain, ev.time),
                EventKind::MatBoundary { miner, index } => {
                    self.on_boundary(miner, index, ev.time)
                }
                EventKind::RetargetCheck => self.on_retarget(ev.time),
            }
            if let Horizon::StandardBlocks(limit) = self.config.horizon {
                if self.observer_height() >= limit {
                    return true;
                }
            }
        }
        // a drained queue can only mean vanilla mode with nobody mining
        false
    }

    fn observer_height(&self) -> u64 {
        // progress metric: the tallest chain held by any honest miner
        self.actors
            .iter()
            .filter_map(|a| match a {
                Actor::Honest(s) => Some(s.chain.standard_height()),
                Actor::Selfish(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    fn finish(self, complete: bool) -> SimTrace {
        let end_time = self
            .records
            .last()
            .map(|r| r.time)
            .unwrap_or(0.0);
        let final_chains = self
            .actors
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let chain = match a {
                    Actor::Honest(s) => s.chain.clone(),
                    Actor::Selfish(s) => s.private_chain.clone(),
                };
                (i as MinerId, chain)
            })
            .collect();
        SimTrace {
            config: self.config,
            records: self.records,
            final_chains,
            end_time,
            complete,
        }
    }

    fn record(&mut self, time: f64, kind: TraceKind, miner: usize, block: BlockId, extra: TraceExtra) {
        self.records.push(TraceRecord {
            time,
            kind,
            miner: miner as MinerId,
            block,
            extra,
        });
    }

    fn net_rate(&self) -> f64 {
        // calibrated so the whole network finds one block per avt_net at the
        // initial difficulty
        1.0 / (self.config.avt_net * self.difficulty.get())
    }

    /// The [start, cutoff) window in which the miner may currently attempt
    /// proof-of-work, or None for always-on (vanilla) mining.
    fn mining_window(&self, m: usize) -> Option<(f64, f64)> {
        if !self.config.zeroblock_enabled {
            return None;
        }
        let index = match &self.actors[m] {
            Actor::Honest(s) => s.index,
            Actor::Selfish(s) => match s.policy {
                SelfishPolicy::AgainstZeroblock { .. } => s.index,
                SelfishPolicy::VanillaBitcoin => return None,
            },
        };
        let start = self.sched.interval_start(index) + self.skews[m];
        let cutoff = if self.config.mine_full_interval {
            self.sched.boundary(index) + self.skews[m]
        } else {
            start + self.config.avt_net
        };
        Some((start, cutoff))
    }

    fn start_mining(&mut self, m: usize, now: f64) {
        self.sessions[m] += 1;
        let session = self.sessions[m];
        let hp = self.config.miners[m].hash_power;
        let window = self.mining_window(m);
        if let Some((_, cutoff)) = window {
            if now >= cutoff {
                return; // reception-only until the boundary
            }
        }
        let (dt, nonce) = match &self.config.backend {
            MiningBackend::Stochastic => {
                let rate = hp * self.net_rate();
                (sample_block_interval(rate, &mut self.rng), 0)
            }
            MiningBackend::Hash { width, threshold, nethp } => {
                let head = match &self.actors[m] {
                    Actor::Honest(s) => s.chain.head().id(),
                    Actor::Selfish(s) => s.private_chain.head().id(),
                };
                // per-session starting nonce decorrelates miners grinding
                // the same head
                let start = self.rng.random::<u64>();
                let (attempts, nonce) = grind(&head, start, *threshold, *width);
                (attempts as f64 / (hp * nethp), nonce)
            }
        };
        let t = now + dt;
        if let Some((_, cutoff)) = window {
            if t >= cutoff {
                return; // no success before the reception window
            }
        }
        self.queue.push(t, EventKind::Mint { miner: m, session, nonce });
    }

    fn stop_mining(&mut self, m: usize) {
        self.sessions[m] += 1;
    }

    fn on_mint(&mut self, m: usize, session: u64, nonce: u64, t: f64) {
        if self.sessions[m] != session {
            return; // stale session
        }
        let actions = match &mut self.actors[m] {
            Actor::Honest(s) => honest_step(s, MinerEvent::PowSuccess { nonce, time: t }, &self.pow)
                .expect("simulator delivers events in order"),
            Actor::Selfish(s) => selfish_step(s, MinerEvent::PowSuccess { nonce, time: t }),
        };
        // the minted block is the head of the actor's chain after the step
        let (id, index) = match &self.actors[m] {
            Actor::Honest(s) => (s.chain.head().id(), s.chain.head().mat_index()),
            Actor::Selfish(s) => (
                s.private_chain.head().id(),
                s.private_chain.head().mat_index(),
            ),
        };
        self.mint_times.insert(id, t);
        self.minted_standard += 1;
        self.record(t, TraceKind::Mint, m, id, TraceExtra::Index(index));
        self.apply_actions(m, actions, t);
        self.maybe_retarget_check(t);
    }

    fn on_deliver(&mut self, m: usize, chain: Chain, t: f64) {
        let head = chain.head().id();
        let height = chain.standard_height();
        self.record(t, TraceKind::Deliver, m, head, TraceExtra::Height(height));
        let actions = match &mut self.actors[m] {
            Actor::Honest(s) => honest_step(
                s,
                MinerEvent::BlockArrival { chain: chain.clone(), time: t },
                &self.pow,
            )
            .expect("simulator delivers events in order"),
            Actor::Selfish(s) => {
                selfish_step(s, MinerEvent::BlockArrival { chain: chain.clone(), time: t })
            }
        };
        // forced-gamma tie routing: a configured fraction of honest power
        // joins the adversary branch on an equal-height reveal
        let mut tie_rejected = false;
        for a in &actions {
            if let MinerAction::Reject {
                reason: KeepReason::NotLonger,
                ..
            } = a
            {
                tie_rejected = true;
            }
        }
        self.apply_actions(m, actions, t);
        if tie_rejected {
            if let (Some(g), true) = (self.config.forced_gamma, self.is_selfish_head(&chain)) {
                if matches!(&self.actors[m], Actor::Honest(_)) && self.rng.random::<f64>() < g {
                    let forced = match &mut self.actors[m] {
                        Actor::Honest(s) => honest_force_adopt(s, chain),
                        Actor::Selfish(_) => unreachable!(),
                    };
                    self.apply_actions(m, forced, t);
                }
            }
        }
        self.maybe_retarget_check(t);
    }

    fn is_selfish_head(&self, chain: &Chain) -> bool {
        chain
            .head()
            .creator()
            .map(|c| self.config.miners[c as usize].role.is_selfish())
            .unwrap_or(false)
    }

    fn on_boundary(&mut self, m: usize, index: u64, t: f64) {
        let actions = match &mut self.actors[m] {
            Actor::Honest(s) => honest_step(s, MinerEvent::MatExpiry { index, time: t }, &self.pow)
                .expect("boundaries arrive in order"),
            Actor::Selfish(s) => selfish_step(s, MinerEvent::MatExpiry { index, time: t }),
        };
        self.apply_actions(m, actions, t);
        let next = self.sched.boundary(index + 1) + self.skews[m];
        self.queue
            .push(next, EventKind::MatBoundary { miner: m, index: index + 1 });
    }

    fn apply_actions(&mut self, m: usize, actions: Vec<MinerAction>, t: f64) {
        for action in actions {
            match action {
                MinerAction::Broadcast(chain) => {
                    self.record(
                        t,
                        TraceKind::Broadcast,
                        m,
                        chain.head().id(),
                        TraceExtra::Height(chain.standard_height()),
                    );
                    self.flood(m, chain, t);
                }
                MinerAction::RevealPrivate(chain) => {
                    self.record(
                        t,
                        TraceKind::Reveal,
                        m,
                        chain.head().id(),
                        TraceExtra::Height(chain.standard_height()),
                    );
                    self.flood(m, chain, t);
                }
                MinerAction::AdoptChain(chain) => {
                    let extra = TraceExtra::Index(chain.head().mat_index());
                    self.record(t, TraceKind::Accept, m, chain.head().id(), extra);
                }
                MinerAction::GenerateDummy(index) => {
                    let id = match &self.actors[m] {
                        Actor::Honest(s) => s.chain.head().id(),
                        Actor::Selfish(s) => s.private_chain.head().id(),
                    };
                    self.record(t, TraceKind::Dummy, m, id, TraceExtra::Index(index));
                }
                MinerAction::StartMining(_) => self.start_mining(m, t),
                MinerAction::StopMining => self.stop_mining(m),
                MinerAction::Withhold(_) => {
                    // withheld blocks surface in the trace via their mint
                    // record only
                }
                MinerAction::Reject { block, reason } => {
                    let label = match reason {
                        KeepReason::Invalid(RejectReason::WrongParent) => "WrongParent",
                        KeepReason::Invalid(RejectReason::BadPoW) => "BadPoW",
                        KeepReason::Invalid(RejectReason::StaleMatIndex) => "StaleMatIndex",
                        KeepReason::Invalid(RejectReason::ForeignDummy) => "ForeignDummy",
                        KeepReason::NotLonger => "NotPreferred",
                    };
                    self.record(t, TraceKind::Reject, m, block, TraceExtra::Reason(label));
                }
            }
        }
    }

    fn flood(&mut self, from: usize, chain: Chain, t: f64) {
        for to in 0..self.actors.len() {
            if to == from {
                continue;
            }
            let delay = self.config.propagation.sample(&mut self.rng);
            self.queue
                .push(t + delay, EventKind::Deliver { to, chain: chain.clone() });
        }
    }

    fn maybe_retarget_check(&mut self, t: f64) {
        let epoch = self.config.difficulty_epoch;
        if epoch == 0 {
            return;
        }
        if self.observer_height() >= self.retargeted_through + epoch {
            self.queue.push(t, EventKind::RetargetCheck);
        }
    }

    fn on_retarget(&mut self, t: f64) {
        let epoch = self.config.difficulty_epoch;
        if epoch == 0 || self.observer_height() < self.retargeted_through + epoch {
            return; // superseded check
        }
        // discovery times of the epoch's standard blocks on the tallest
        // honest chain; dummies carry no time and are skipped
        let chain = self
            .actors
            .iter()
            .filter_map(|a| match a {
                Actor::Honest(s) => Some(&s.chain),
                Actor::Selfish(_) => None,
            })
            .max_by_key(|c| c.standard_height())
            .expect("at least one honest miner")
            .clone();
        let mut times: Vec<f64> = chain
            .iter()
            .filter(|b| b.kind() == BlockKind::Standard)
            .take((chain.standard_height() - self.retargeted_through) as usize)
            .filter_map(|b| self.mint_times.get(&b.id()).copied())
            .collect();
        times.reverse();
        times.truncate(epoch as usize);
        if let Ok(d) = adjust_difficulty(
            &times,
            self.difficulty,
            epoch as usize,
            self.config.avt_net,
            self.retarget_anchor,
        ) {
            self.difficulty = d;
        }
        self.retargeted_through += epoch;
        self.retarget_anchor = times.last().copied().unwrap_or(t);
        // restart all mining sessions at the new rate
        for m in 0..self.actors.len() {
            let active = self.mining_window(m).map(|(_, c)| t < c).unwrap_or(true);
            let flagged = match &self.actors[m] {
                Actor::Honest(s) => s.flag_new_block,
                Actor::Selfish(_) => false,
            };
            if active && !flagged {
                self.start_mining(m, t);
            }
        }
    }
}

/// Samples one propagation delay (exposed for delay-model statistics).
pub fn propagation_delay<R: Rng + ?Sized>(model: &PropagationModel, rng: &mut R) -> f64 {
    model.sample(rng)
}
