use std::time::Instant;

use zeroblock::analytics::{fork_report, revenue_shares, withholding_violations};
use zeroblock::miner::SelfishPolicy;
use zeroblock::simnet::{
    run, Horizon, MinerSpec, MiningBackend, PropagationModel, Role, SimConfig,
};

fn base(miners: Vec<MinerSpec>) -> SimConfig {
    SimConfig {
        miners,
        avt_net: 600.0,
        ipt: 60.0,
        propagation: PropagationModel::Constant(0.0),
        zeroblock_enabled: false,
        forced_gamma: Some(0.0),
        horizon: Horizon::StandardBlocks(100_000),
        seed: 1,
        difficulty_epoch: 0,
        backend: MiningBackend::Stochastic,
        mine_full_interval: false,
        clock_skew: 0.0,
        allow_majority_adversary: false,
    }
}

fn selfish_pair(alpha: f64, vanilla: bool) -> Vec<MinerSpec> {
    let policy = if vanilla {
        SelfishPolicy::VanillaBitcoin
    } else {
        SelfishPolicy::AgainstZeroblock {
            keep_private_branch: false,
        }
    };
    vec![
        MinerSpec {
            name: "honest".into(),
            role: Role::Honest,
            hash_power: 1.0 - alpha,
        },
        MinerSpec {
            name: "attacker".into(),
            role: Role::Selfish(policy),
            hash_power: alpha,
        },
    ]
}

fn main() {
    for alpha in [0.34, 0.30] {
        let t0 = Instant::now();
        let cfg = base(selfish_pair(alpha, true));
        let trace = run(cfg).unwrap();
        let rep = revenue_shares(&trace);
        println!(
            "vanilla alpha={alpha}: share={:.4} height={} in {:?}",
            rep.selfish_share(),
            rep.reference_height,
            t0.elapsed()
        );
    }
    for alpha in [0.25, 0.33, 0.45, 0.49] {
        let t0 = Instant::now();
        let mut cfg = base(selfish_pair(alpha, false));
        cfg.zeroblock_enabled = true;
        cfg.propagation = PropagationModel::Uniform(0.0, 20.0);
        let trace = run(cfg).unwrap();
        let rep = revenue_shares(&trace);
        println!(
            "zeroblock alpha={alpha}: share={:.4} violations={} in {:?}",
            rep.selfish_share(),
            withholding_violations(&trace),
            t0.elapsed()
        );
    }
    let t0 = Instant::now();
    let n = 8;
    let mut cfg = base(
        (0..n)
            .map(|i| MinerSpec {
                name: format!("h{i}"),
                role: Role::Honest,
                hash_power: 1.0 / n as f64,
            })
            .collect(),
    );
    cfg.propagation = PropagationModel::Uniform(0.0, 24.0);
    cfg.ipt = 60.0;
    let trace = run(cfg).unwrap();
    let forks = fork_report(&trace);
    println!(
        "fork rate: accidental={:.4} total={:.4} in {:?}",
        forks.accidental_rate(),
        forks.total_rate(),
        t0.elapsed()
    );
}
