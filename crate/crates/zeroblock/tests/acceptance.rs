//! End-to-end acceptance gate. Each numbered criterion prints one PASS/FAIL
//! line; the test fails if any criterion does.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use zeroblock::analytics::{
    event4_max_probability, fork_report, poisson_pmf, revenue_shares, selfish_threshold_lower,
    withholding_violations,
};
use zeroblock::chain::{compact, BlockKind, PowCheck};
use zeroblock::chainfile;
use zeroblock::churn::{join_majority_probability, ChurnParams};
use zeroblock::miner::SelfishPolicy;
use zeroblock::scenario::{self, Scenario};
use zeroblock::simnet::{
    run, Horizon, MinerSpec, MiningBackend, PropagationModel, Role, SimConfig,
};

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn new() -> Gate {
        Gate { failures: Vec::new() }
    }

    fn check(&mut self, number: u32, description: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {number:2}: {verdict} - {description} ({detail})");
        if !pass {
            self.failures.push(format!("criterion {number}: {detail}"));
        }
    }
}

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn load_scenario(name: &str) -> Scenario {
    let path = repo_path(&format!("scenarios/{name}"));
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    scenario::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn criterion_1(gate: &mut Gate) {
    // independent oracle: e^-1 / rho! computed with integer factorials
    let e_inv = (-1.0f64).exp();
    let oracle = [e_inv, e_inv / 2.0, e_inv / 6.0, e_inv / 24.0, e_inv / 120.0];
    let mut worst = 0.0f64;
    for (i, want) in oracle.iter().enumerate() {
        let got = poisson_pmf(i as u64 + 1, 1.0);
        worst = worst.max((got - want).abs());
    }
    gate.check(
        1,
        "Poisson pmf rho=1..5 at lambda=1",
        worst < 1e-4,
        format!("max abs error {worst:.2e}"),
    );
}

fn criterion_2(gate: &mut Gate) {
    let cases = [(0.0, 1.0 / 3.0), (0.5, 0.25), (0.99, 0.00980392156862746)];
    let mut worst = 0.0f64;
    for (gamma, want) in cases {
        worst = worst.max((selfish_threshold_lower(gamma) - want).abs());
    }
    gate.check(
        2,
        "withholding profitability thresholds",
        worst < 1e-3,
        format!("max abs error {worst:.2e}"),
    );
}

fn criterion_3(gate: &mut Gate) {
    let got = event4_max_probability(0.49);
    let exact = 0.04504720545088428;
    let pass = (0.040..=0.048).contains(&got) && (got - exact).abs() < 1e-15;
    gate.check(
        3,
        "two-consecutive-blocks bound at sp=0.49",
        pass,
        format!("value {got:.17}"),
    );
}

fn criterion_4(gate: &mut Gate) {
    let rows = [
        (4750u64, 0.9994),
        (4250, 0.9785),
        (3750, 0.8862),
        (3250, 0.7063),
    ];
    let mut worst = 0.0f64;
    for (eta, published) in rows {
        let p = ChurnParams::new(5000, 8, eta).expect("valid row");
        worst = worst.max((join_majority_probability(p) - published).abs());
    }
    // exhaustive oracle over every instance with n <= 12
    let mut enum_ok = true;
    for n in 1..=12u64 {
        for sigma in 1..=n {
            for eta in 0..=n {
                let p = ChurnParams::new(n, sigma, eta).expect("valid instance");
                let masks = (0u64..(1 << n)).filter(|m| m.count_ones() as u64 == sigma);
                let mut hits = 0u64;
                let mut total = 0u64;
                for m in masks {
                    total += 1;
                    if (m & ((1u64 << eta) - 1)).count_ones() as u64 >= sigma / 2 + 1 {
                        hits += 1;
                    }
                }
                let oracle = hits as f64 / total as f64;
                if (join_majority_probability(p) - oracle).abs() > 1e-12 {
                    enum_ok = false;
                }
            }
        }
    }
    gate.check(
        4,
        "honest-majority table and exhaustive n<=12 oracle",
        worst < 1e-3 && enum_ok,
        format!("table max abs error {worst:.2e}, enumeration ok: {enum_ok}"),
    );
}

fn criterion_5(gate: &mut Gate) {
    // randomized small networks, defence on: no block published after its
    // interval may enter an honest chain
    let mut violations = 0u64;
    let runs = 1000;
    let mut meta = ChaCha20Rng::seed_from_u64(0xACCE);
    for i in 0..runs {
        let n = meta.random_range(2..6usize);
        let alpha = meta.random_range(0.05..0.49);
        let keep = meta.random::<bool>();
        let mut miners: Vec<MinerSpec> = (0..n - 1)
            .map(|k| MinerSpec {
                name: format!("h{k}"),
                role: Role::Honest,
                hash_power: (1.0 - alpha) / (n - 1) as f64,
            })
            .collect();
        miners.push(MinerSpec {
            name: "adv".into(),
            role: Role::Selfish(SelfishPolicy::AgainstZeroblock {
                keep_private_branch: keep,
            }),
            hash_power: alpha,
        });
        let cfg = SimConfig {
            miners,
            avt_net: 600.0,
            ipt: 60.0,
            propagation: PropagationModel::Uniform(0.0, meta.random_range(1.0..50.0)),
            zeroblock_enabled: true,
            forced_gamma: None,
            horizon: Horizon::Seconds(660.0 * meta.random_range(10.0..30.0)),
            seed: i,
            difficulty_epoch: 0,
            backend: MiningBackend::Stochastic,
            mine_full_interval: meta.random::<bool>(),
            clock_skew: 0.0,
            allow_majority_adversary: false,
        };
        let trace = run(cfg).expect("valid config");
        violations += withholding_violations(&trace);
    }
    gate.check(
        5,
        "no withheld-past-boundary block accepted over 1000 randomized runs",
        violations == 0,
        format!("violations {violations}"),
    );
}

fn criterion_6(gate: &mut Gate) {
    let t0 = Instant::now();
    let sc34 = load_scenario("vanilla-selfish-a34.cfg");
    let share34 = run(sc34.rep_config(0))
        .map(|t| revenue_shares(&t).selfish_share())
        .expect("valid scenario");
    let run_time = t0.elapsed();
    let sc30 = load_scenario("vanilla-selfish-a30.cfg");
    let share30 = run(sc30.rep_config(0))
        .map(|t| revenue_shares(&t).selfish_share())
        .expect("valid scenario");
    let sigma30 = (0.30f64 * 0.70 / 100_000.0).sqrt();
    let pass = share34 > 0.34 && share30 <= 0.30 + 2.0 * sigma30 && run_time.as_secs() < 120;
    gate.check(
        6,
        "withholding pays above 1/3 and not below it (1e5 blocks)",
        pass,
        format!(
            "share(0.34)={share34:.4}, share(0.30)={share30:.4} vs bound {:.4}, {run_time:?}/run",
            0.30 + 2.0 * sigma30
        ),
    );
}

fn criterion_7(gate: &mut Gate) {
    let mut detail = String::new();
    let mut pass = true;
    for alpha in [0.25, 0.33, 0.45, 0.49] {
        let cfg = SimConfig {
            miners: vec![
                MinerSpec {
                    name: "pool".into(),
                    role: Role::Honest,
                    hash_power: 1.0 - alpha,
                },
                MinerSpec {
                    name: "adv".into(),
                    role: Role::Selfish(SelfishPolicy::AgainstZeroblock {
                        keep_private_branch: false,
                    }),
                    hash_power: alpha,
                },
            ],
            avt_net: 600.0,
            ipt: 60.0,
            propagation: PropagationModel::Uniform(0.0, 20.0),
            zeroblock_enabled: true,
            forced_gamma: None,
            horizon: Horizon::StandardBlocks(100_000),
            seed: 23,
            difficulty_epoch: 0,
            backend: MiningBackend::Stochastic,
            mine_full_interval: false,
            clock_skew: 0.0,
            allow_majority_adversary: false,
        };
        let share = revenue_shares(&run(cfg).expect("valid config")).selfish_share();
        if share > alpha + 0.01 {
            pass = false;
        }
        detail.push_str(&format!("a={alpha}:{share:.4} "));
    }
    gate.check(
        7,
        "defence caps adversary share at alpha+0.01 (1e5 blocks each)",
        pass,
        detail.trim_end().to_string(),
    );
}

fn criterion_8(gate: &mut Gate) {
    let sc = load_scenario("fork-rate-default.cfg");
    let trace = run(sc.rep_config(0)).expect("valid scenario");
    let rate = fork_report(&trace).accidental_rate();
    gate.check(
        8,
        "accidental fork rate in [1.2%, 2.2%] (1e5 blocks)",
        (0.012..=0.022).contains(&rate),
        format!("rate {:.4}", rate),
    );
}

fn criterion_9(gate: &mut Gate) {
    let mut pass = true;
    let mut detail = String::new();
    for name in [
        "demo-small.cfg",
        "vanilla-selfish-a34.cfg",
        "zeroblock-a49.cfg",
    ] {
        let sc = load_scenario(name);
        // demo-small is cheap enough to rerun fully; the large scenarios are
        // rerun at rep 0 only
        let reps = if name == "demo-small.cfg" { sc.repetitions } else { 1 };
        for rep in 0..reps {
            let a = run(sc.rep_config(rep)).expect("valid scenario");
            let b = run(sc.rep_config(rep)).expect("valid scenario");
            let equal = a.serialize_records() == b.serialize_records()
                && revenue_shares(&a).to_csv() == revenue_shares(&b).to_csv();
            if !equal {
                pass = false;
                detail.push_str(&format!("{name} rep {rep} diverged; "));
            }
        }
    }
    if detail.is_empty() {
        detail = "byte-identical traces and reports".into();
    }
    gate.check(9, "equal seeds give byte-identical outputs", pass, detail);
}

fn criterion_10(gate: &mut Gate) {
    let fixture = fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/fixture.chain"),
    )
    .expect("fixture present");
    let golden = fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/fixture-compacted.chain"),
    )
    .expect("golden present");
    let chain = chainfile::parse(&fixture).expect("fixture parses");
    chain.validate(&PowCheck::Assumed).expect("fixture valid");
    let compacted = compact(&chain);
    let matches_golden = chainfile::serialize(&compacted) == golden;
    let idempotent = chainfile::serialize(&compact(&compacted)) == golden;
    let ids = |c: &zeroblock::chain::Chain| -> Vec<_> {
        c.blocks()
            .iter()
            .filter(|b| b.kind() == BlockKind::Standard)
            .map(|b| b.id())
            .collect()
    };
    let preserves_ids = ids(&chain) == ids(&compacted);
    gate.check(
        10,
        "dummy-run compaction golden file, idempotence, id preservation",
        matches_golden && idempotent && preserves_ids,
        format!("golden={matches_golden} idempotent={idempotent} ids={preserves_ids}"),
    );
}

#[test]
fn acceptance_gate() {
    let mut gate = Gate::new();
    criterion_1(&mut gate);
    criterion_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    criterion_10(&mut gate);
    assert!(gate.failures.is_empty(), "{:#?}", gate.failures);
}
