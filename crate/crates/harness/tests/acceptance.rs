//! Acceptance suite: twelve criteria, one pass/fail line each.
//!
//! Every criterion checks the library against an independent computation
//! written here, at the stated tolerance and within the stated runtime.
//! Runs as a plain program so the report reaches the terminal.

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use council_core::embedding::{cosine_similarity, Embedder};
use council_core::env::{game24_oracle, Game24};
use council_core::expert::{Council, Expert, ScriptedExpert};
use council_core::mcts::{uct, ChildSpec, NodeId, SearchTree};
use council_core::memory::{sms_utility, SegmentRecord};
use council_core::planner::{search, Planner};
use council_core::routing::{routing_distribution, routing_scores, RoutingScores};
use council_core::trace::NoTrace;
use council_core::value::{fuse_batch, fusion_weight, ValueSignals};
use council_core::{
    Action, Environment, EpisodeId, ExpertId, ExpertProfile, HashedTrigramEmbedder, LedgerEntry,
    Observation, Payload, SearchConfig, SegmentId, Step, TaskSpec, Trajectory,
};
use council_harness::runner::{ablation, run, AblationTable, Axis};
use council_harness::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The result of one criterion. `known` marks a failure analysed in the
/// project notes that a correct implementation cannot avoid.
struct Verdict {
    pass: bool,
    detail: String,
    known: bool,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
        known: false,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- 1

fn child(a: &str, fused: f64) -> ChildSpec {
    ChildSpec {
        action: Action::new(a).unwrap(),
        observation: Observation::new("o").unwrap(),
        expert: ExpertId::new("e").unwrap(),
        terminal: false,
        reward: None,
        invalid: false,
        fused_value: fused,
    }
}

fn random_shape(rng: &mut ChaCha8Rng, nodes: usize) -> Vec<NodeId> {
    (1..nodes).map(|i| rng.random_range(0..i)).collect()
}

fn build_tree(parents: &[NodeId], rng: &mut ChaCha8Rng) -> SearchTree {
    let mut t = SearchTree::new(Observation::new("root").unwrap());
    for (i, &p) in parents.iter().enumerate() {
        t.add_child(p, child(&format!("a{i}"), rng.random()))
            .unwrap();
    }
    t
}

fn path_by_parents(parents: &[NodeId], mut id: NodeId) -> Vec<NodeId> {
    let mut path = vec![id];
    while id != 0 {
        id = parents[id - 1];
        path.push(id);
    }
    path.reverse();
    path
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (shapes, sequences) = (60, 1000);
    let mut worst = 0.0f64;
    for shape in 0..shapes {
        let parents = random_shape(&mut rng, 2 + shape % 25);
        for _ in 0..sequences {
            let mut tree = build_tree(&parents, &mut rng);
            let mut returns: Vec<Vec<f64>> = vec![Vec::new(); parents.len() + 1];
            for _ in 0..rng.random_range(1..12) {
                let target = rng.random_range(0..=parents.len());
                let r: f64 = rng.random();
                let path = path_by_parents(&parents, target);
                tree.backpropagate(&path, r).unwrap();
                for id in path {
                    returns[id].push(r);
                }
            }
            for (id, rs) in returns.iter().enumerate() {
                if rs.is_empty() {
                    continue;
                }
                let mean = rs.iter().sum::<f64>() / rs.len() as f64;
                worst = worst.max((tree.node(id).value - mean).abs());
                if tree.node(id).visits != rs.len() as u64 {
                    return verdict(false, format!("visit count mismatch at node {id}"));
                }
            }
        }
    }
    verdict(
        worst <= 1e-9,
        format!("{shapes} shapes x {sequences} sequences, max |Q - mean| = {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let entry = |i: u64, u: u32, y: Option<bool>| LedgerEntry {
        episode_id: EpisodeId(i),
        usage_count: u,
        outcome: y,
    };
    let mut worst = 0.0f64;
    for _ in 0..20_000 {
        let n = rng.random_range(0..20);
        let ledger: Vec<LedgerEntry> = (0..n)
            .map(|i| {
                let y = match rng.random_range(0..3) {
                    0 => None,
                    1 => Some(false),
                    _ => Some(true),
                };
                entry(i, rng.random_range(1..30), y)
            })
            .collect();
        let u = sms_utility(&ledger);
        if !(0.0..=1.0).contains(&u) {
            return verdict(false, format!("utility {u} outside [0,1]"));
        }
        let (num, den) = ledger
            .iter()
            .filter_map(|e| e.outcome.map(|y| (y, e.usage_count as f64)))
            .fold((0.0, 0.0), |(a, b), (y, c)| {
                (a + if y { c } else { 0.0 }, b + c)
            });
        let direct = if den == 0.0 { 0.5 } else { num / den };
        worst = worst.max((u - direct).abs());
        let ok_all = sms_utility(
            &ledger
                .iter()
                .map(|e| entry(e.episode_id.0, e.usage_count, Some(true)))
                .collect::<Vec<_>>(),
        );
        let no_all = sms_utility(
            &ledger
                .iter()
                .map(|e| entry(e.episode_id.0, e.usage_count, Some(false)))
                .collect::<Vec<_>>(),
        );
        if n > 0 && (ok_all != 1.0 || no_all != 0.0) {
            return verdict(
                false,
                "all-success or all-failure ledger gave the wrong utility",
            );
        }
    }
    verdict(
        worst <= 1e-12,
        format!("20000 random ledgers, max deviation from formula {worst:.1e}"),
    )
}

// ---------------------------------------------------------------- 3

fn scores(mu: &[f64]) -> RoutingScores {
    RoutingScores {
        experts: (0..mu.len())
            .map(|i| ExpertId::new(format!("e{i}")).unwrap())
            .collect(),
        mu: mu.to_vec(),
        best_segment: vec![None; mu.len()],
    }
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut norm, mut shift) = (0.0f64, 0.0f64);
    for _ in 0..5_000 {
        let n = rng.random_range(1..12);
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = rng.random_range(0.01..5.0);
        let c = rng.random_range(-10.0..10.0);
        let p = routing_distribution(&scores(&mu), t).unwrap().probabilities;
        norm = norm.max((p.iter().sum::<f64>() - 1.0).abs());
        let moved: Vec<f64> = mu.iter().map(|m| m + c).collect();
        let q = routing_distribution(&scores(&moved), t)
            .unwrap()
            .probabilities;
        shift = shift.max(
            p.iter()
                .zip(&q)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    let uniform = routing_distribution(&scores(&[0.3; 5]), 0.5)
        .unwrap()
        .probabilities;
    let symmetric = uniform.iter().all(|p| close(*p, 0.2, 1e-12));
    let hand = routing_distribution(&scores(&[1.0, 0.0]), 0.5)
        .unwrap()
        .probabilities;
    let hand_ok = close(hand[0], 0.88080, 1e-5) && close(hand[1], 0.11920, 1e-5);
    verdict(
        norm <= 1e-12 && shift <= 1e-10 && symmetric && hand_ok,
        format!(
            "normalization err {norm:.1e}, shift err {shift:.1e}, uniform {symmetric}, T=0.5 mu=(1,0) -> ({:.5}, {:.5})",
            hand[0], hand[1]
        ),
    )
}

// ---------------------------------------------------------------- 4

const WORDS: [&str; 16] = [
    "red", "blue", "green", "stone", "river", "seven", "nine", "left", "right", "open", "cold",
    "amber", "jade", "gate", "north", "ash",
];

fn random_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<SegmentRecord> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let steps: Vec<Step> = (0..rng.random_range(1..4))
            .map(|_| {
                let o: Vec<&str> = (0..4)
                    .map(|_| WORDS[rng.random_range(0..WORDS.len())])
                    .collect();
                Step::new(
                    Observation::new(o.join(" ")).unwrap(),
                    Action::new(WORDS[rng.random_range(0..16)]).unwrap(),
                )
            })
            .collect();
        let prefix = Trajectory::from_steps(steps);
        if !seen.insert(prefix.serialize()) {
            continue;
        }
        let id = out.len() as u64;
        let ledger = (0..rng.random_range(0..3))
            .map(|e| LedgerEntry {
                episode_id: EpisodeId(e),
                usage_count: rng.random_range(1..4),
                outcome: Some(rng.random()),
            })
            .collect();
        out.push(SegmentRecord {
            segment_id: SegmentId(id),
            prefix,
            created_at: id,
            ledger,
        });
    }
    out
}

/// Exhaustive argmax: similarity, then utility, then oldest.
fn scan(profile: &ExpertProfile, q: &council_core::EmbeddingVector) -> Option<(SegmentId, f64)> {
    let mut best: Option<(f64, f64, u64, SegmentId)> = None;
    for seg in profile.segments() {
        let s = cosine_similarity(q, &seg.embedding).unwrap();
        let cand = (s, seg.utility(), seg.created_at(), seg.id());
        best = match best {
            Some(b)
                if !(cand.0 > b.0
                    || (cand.0 == b.0 && (cand.1 > b.1 || (cand.1 == b.1 && cand.2 < b.2)))) =>
            {
                Some(b)
            }
            _ => Some(cand),
        };
    }
    best.map(|b| (b.3, b.0))
}

fn criterion_4() -> Verdict {
    let embedder = HashedTrigramEmbedder::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let env: Arc<dyn Environment> = Arc::new(Game24);
    let mut checked = 0;
    for sizes in [[0usize, 1, 10], [100, 1000, 3], [10_000, 500, 2_000]] {
        let members: Vec<Arc<dyn Expert>> = (0..3)
            .map(|i| {
                Arc::new(ScriptedExpert::uniform_random(&format!("m{i}"), env.clone()).unwrap())
                    as Arc<dyn Expert>
            })
            .collect();
        let profiles: Vec<ExpertProfile> = (0..3)
            .map(|i| {
                let records = random_records(&mut rng, sizes[i]);
                ExpertProfile::restore(
                    ExpertId::new(format!("m{i}")).unwrap(),
                    sizes[i].max(1),
                    records,
                    &embedder,
                )
                .unwrap()
            })
            .collect();
        let council = Council::with_profiles(members, profiles).unwrap();
        for _ in 0..20 {
            let text: Vec<&str> = (0..5)
                .map(|_| WORDS[rng.random_range(0..WORDS.len())])
                .collect();
            let q = embedder.embed(&text.join(" ")).unwrap();
            let got = routing_scores(&council, &q).unwrap();
            for (i, p) in council.profiles().iter().enumerate() {
                let want = scan(p, &q);
                let mu = want.map_or(0.0, |w| w.1);
                if got.mu[i] != mu || got.best_segment[i] != want.map(|w| w.0) {
                    return verdict(
                        false,
                        format!("profile of {} segments: scan disagrees", p.len()),
                    );
                }
                let exemplar = p.best_match(&q).unwrap().map(|(s, _)| s.id());
                if exemplar != want.map(|w| w.0) {
                    return verdict(false, "exemplar differs from the scan");
                }
                checked += 1;
            }
        }
    }
    verdict(
        true,
        format!("{checked} lookups on profiles of 0 to 10000 segments match linear scans"),
    )
}

// ---------------------------------------------------------------- 5

fn sig(l: f64, s: f64) -> ValueSignals {
    ValueSignals {
        v_llm: l,
        v_sms: s,
        evaluator_expert: None,
        matched_segment: None,
    }
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let trivial =
        fusion_weight(0.3, 0.0).unwrap() == 1.0 && fusion_weight(0.2, 0.2).unwrap() == 0.5;
    let mut shift_err = 0.0f64;
    let mut dominant = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..10);
        let kids: Vec<ValueSignals> = (0..n).map(|_| sig(rng.random(), rng.random())).collect();
        let a = fuse_batch(&kids).unwrap();
        if !(0.0..=1.0).contains(&a.alpha) {
            return verdict(false, format!("alpha {} outside [0,1]", a.alpha));
        }
        let c = rng.random_range(-0.5..0.5);
        let moved: Vec<ValueSignals> = if rng.random() {
            kids.iter().map(|k| sig(k.v_llm + c, k.v_sms)).collect()
        } else {
            kids.iter().map(|k| sig(k.v_llm, k.v_sms + c)).collect()
        };
        let b = fuse_batch(&moved).unwrap();
        shift_err = shift_err.max(
            a.q.iter()
                .zip(&b.q)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        );

        let mut batch: Vec<ValueSignals> = (0..n)
            .map(|_| sig(rng.random_range(0.0..0.9), rng.random_range(0.0..0.9)))
            .collect();
        let at = rng.random_range(0..=n);
        batch.insert(
            at,
            sig(rng.random_range(0.9..1.0), rng.random_range(0.9..1.0)),
        );
        let f = fuse_batch(&batch).unwrap();
        if f.q.iter().all(|q| *q <= f.q[at]) {
            dominant += 1;
        }
    }
    verdict(
        trivial && shift_err <= 1e-10 && dominant == 1000,
        format!("trivial weights {trivial}, shift err {shift_err:.1e}, dominant child maximal in {dominant}/1000 batches"),
    )
}

// ---------------------------------------------------------------- 6

fn brute_select(tree: &SearchTree, c: f64) -> Vec<NodeId> {
    let mut path = vec![0];
    let mut at = 0;
    loop {
        let node = tree.node(at);
        if node.terminal || node.children.is_empty() {
            return path;
        }
        let key = |id: NodeId| {
            let n = tree.node(id);
            if n.visits == 0 {
                (1, n.fused_value.unwrap_or(0.0))
            } else {
                (
                    0,
                    n.value + c * ((node.visits as f64).ln() / n.visits as f64).sqrt(),
                )
            }
        };
        let mut best = node.children[0];
        for &ch in &node.children[1..] {
            let (a, b) = (key(ch), key(best));
            if a.0 > b.0 || (a.0 == b.0 && a.1 > b.1) {
                best = ch;
            }
        }
        path.push(best);
        at = best;
    }
}

fn criterion_6() -> Verdict {
    let unvisited_first = uct(0.0, 0, 100, 1.0) == f64::INFINITY;
    let c_zero = uct(0.37, 4, 50, 0.0) == 0.37;
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut agree = 0;
    for _ in 0..2000 {
        let size = rng.random_range(2..40);
        let parents = random_shape(&mut rng, size);
        let mut tree = build_tree(&parents, &mut rng);
        for _ in 0..rng.random_range(0..60) {
            let target = rng.random_range(0..=parents.len());
            tree.backpropagate(&path_by_parents(&parents, target), rng.random())
                .unwrap();
        }
        let c = [0.0, 0.5, 1.0, 1.414][rng.random_range(0..4)];
        if tree.select(c) == brute_select(&tree, c) {
            agree += 1;
        }
    }
    let hand = uct(0.5, 2, 8, 1.0);
    let exact = 0.5 + (8f64.ln() / 2.0).sqrt();
    let stated = 1.5194;
    let rules = unvisited_first && c_zero && agree == 2000 && close(hand, exact, 1e-12);
    let hand_ok = close(hand, stated, 1e-4);
    let detail = format!(
        "unvisited-first {unvisited_first}, c=0 gives Q {c_zero}, brute-force selector agrees {agree}/2000; \
         hand value {hand:.6} vs stated 1.5194 (|diff| {:.1e}, tol 1e-4), exact 0.5+sqrt(ln 8/2) = {exact:.6}",
        (hand - stated).abs()
    );
    // the stated hand value is itself off in the fourth decimal
    Verdict {
        pass: rules && hand_ok,
        detail,
        known: rules && !hand_ok,
    }
}

// ---------------------------------------------------------------- 7

#[derive(Clone, Copy)]
struct Q(i64, i64);

fn q(n: i64, d: i64) -> Q {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a.abs()
        } else {
            gcd(b, a % b)
        }
    }
    let g = gcd(n, d).max(1);
    let s = if d < 0 { -1 } else { 1 };
    Q(s * n / g, s * d / g)
}

fn combine(a: Q, b: Q) -> Vec<Q> {
    let mut v = vec![
        q(a.0 * b.1 + b.0 * a.1, a.1 * b.1),
        q(a.0 * b.1 - b.0 * a.1, a.1 * b.1),
        q(a.0 * b.0, a.1 * b.1),
    ];
    if b.0 != 0 {
        v.push(q(a.0 * b.1, a.1 * b.0));
    }
    v
}

/// Every ordering, operator triple and bracketing, in exact rationals.
fn solvable_by_brackets(n: [i64; 4]) -> bool {
    let mut perms = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    if a != b && a != c && a != d && b != c && b != d && c != d {
                        perms.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    perms.into_iter().any(|p| {
        let [a, b, c, d] = p.map(|i| Q(n[i], 1));
        let mut out = Vec::new();
        for x in combine(a, b) {
            for y in combine(x, c) {
                out.extend(combine(y, d));
            }
            for y in combine(c, d) {
                out.extend(combine(x, y));
            }
        }
        for x in combine(b, c) {
            for y in combine(a, x) {
                out.extend(combine(y, d));
            }
            for y in combine(x, d) {
                out.extend(combine(a, y));
            }
        }
        for x in combine(c, d) {
            for y in combine(b, x) {
                out.extend(combine(a, y));
            }
        }
        out.iter().any(|r| r.0 == 24 * r.1)
    })
}

fn criterion_7() -> Verdict {
    let mut multisets = 0;
    let mut solvable = 0;
    for a in 1..=6 {
        for b in a..=6 {
            for c in b..=6 {
                for d in c..=6 {
                    multisets += 1;
                    let n = [a, b, c, d];
                    let r = game24_oracle(&n).unwrap();
                    if r.solvable != solvable_by_brackets(n) {
                        return verdict(false, format!("enumerators disagree on {n:?}"));
                    }
                    if let Some(w) = r.witness {
                        solvable += 1;
                        let t = TaskSpec {
                            task_id: "x".into(),
                            environment: "game24".into(),
                            payload: Payload::Numbers(n.to_vec()),
                        };
                        if Game24.replay(&t, &w).unwrap().reward() != Some(1.0) {
                            return verdict(
                                false,
                                format!("witness for {n:?} does not replay to 1.0"),
                            );
                        }
                    }
                }
            }
        }
    }
    let examples = game24_oracle(&[4, 4, 10, 10]).unwrap().solvable
        && !game24_oracle(&[1, 1, 1, 1]).unwrap().solvable;
    verdict(
        multisets == 126 && examples,
        format!("{multisets} multisets agree ({solvable} solvable, all witnesses replay to 1.0); [4,4,10,10] solvable, [1,1,1,1] not"),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Verdict {
    let env: Arc<dyn Environment> = Arc::new(Game24);
    let embedder = HashedTrigramEmbedder::default();
    let config = SearchConfig::default();
    let planner = Planner {
        env: env.as_ref(),
        embedder: &embedder,
        config,
    };
    let tasks = Game24.generate_tasks(100, 8, true);
    let once = || {
        let e: Arc<dyn Expert> =
            Arc::new(ScriptedExpert::specialist("solver", env.clone(), None, 1, 0.0).unwrap());
        let mut council = Council::new(vec![e], 512).unwrap();
        tasks
            .iter()
            .enumerate()
            .map(|(i, t)| {
                search(
                    t,
                    &mut council,
                    &planner,
                    EpisodeId(i as u64),
                    8,
                    &mut NoTrace,
                )
                .unwrap()
                .result
            })
            .collect::<Vec<_>>()
    };
    let first = once();
    let solved = first.iter().filter(|r| r.success).count();
    let deterministic = first == once();
    verdict(
        solved >= 95 && deterministic && config.budget == 10,
        format!("oracle-backed expert solved {solved}/100 solvable tasks at K=10; repeat run identical: {deterministic}"),
    )
}

// ---------------------------------------------------------------- 9-11

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn suite_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic-suite.toml");
    RunConfig::load(&path).expect("suite config")
}

fn rate(table: &AblationTable, variant: &str) -> f64 {
    table
        .row(variant)
        .and_then(|r| r.mean_success_rate)
        .unwrap_or(0.0)
}

fn criterion_9(table: &AblationTable) -> Verdict {
    let (ta, rnd, rr) = (
        rate(table, "task-aware"),
        rate(table, "random"),
        rate(table, "round-robin"),
    );
    verdict(
        ta - rnd >= 0.15 && ta > rr,
        format!(
            "mean success over 5 seeds x 300 tasks (100 warm-up): task-aware {ta:.3}, random {rnd:.3}, round-robin {rr:.3}; \
             voting {:.3}, collaborative {:.3}",
            rate(table, "voting"),
            rate(table, "collaborative")
        ),
    )
}

fn criterion_10(table: &AblationTable) -> Verdict {
    let (full, llm, sms, env) = (
        rate(table, "full"),
        rate(table, "llm-only"),
        rate(table, "sms-only"),
        rate(table, "env-only"),
    );
    verdict(
        full >= llm && full >= sms,
        format!("mean success: full {full:.3}, llm-only {llm:.3}, sms-only {sms:.3} (env-only {env:.3})"),
    )
}

fn criterion_11(table: &AblationTable) -> Verdict {
    let nodes = |v: &str| {
        table
            .row(v)
            .and_then(|r| r.nodes_per_success)
            .unwrap_or(f64::INFINITY)
    };
    let (ta, rnd) = (nodes("task-aware"), nodes("random"));
    verdict(
        ta <= rnd,
        format!("expanded nodes per solved task: task-aware + full {ta:.2}, random {rnd:.2}"),
    )
}

// ---------------------------------------------------------------- 12

fn criterion_12() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = suite_config();
    cfg.environment.generate = Some(council_harness::config::GenerateConfig {
        count: 60,
        solvable_only: false,
    });
    cfg.environment.warmup = 20;
    let mut synthetic = cfg.clone();
    synthetic.routing.strategy = council_core::RoutingStrategy::Collaborative;
    let mut game24 = RunConfig::from_toml(
        r#"
seed = 12
[environment]
generate = { count = 15 }
[[council.experts]]
kind = "specialist"
id = "solver"
distractors = 2
noise = 0.1
[[council.experts]]
kind = "uniform-random"
id = "guesser"
"#,
    )
    .unwrap();
    game24.search.budget = 10;
    let mut files = 0;
    for (name, base) in [("synthetic", &synthetic), ("game24", &game24)] {
        let mut outputs: Vec<Vec<Vec<u8>>> = Vec::new();
        for attempt in 0..2 {
            let mut c = base.clone();
            let p = |f: &str| dir.path().join(format!("{name}-{attempt}-{f}"));
            c.output.metrics = Some(p("metrics.jsonl"));
            c.output.trace = Some(p("trace.jsonl"));
            c.memory.save = Some(p("memory.jsonl"));
            run(&c).unwrap();
            outputs.push(
                ["metrics.jsonl", "trace.jsonl", "memory.jsonl"]
                    .iter()
                    .map(|f| std::fs::read(p(f)).unwrap())
                    .collect(),
            );
        }
        if outputs[0] != outputs[1] {
            return verdict(false, format!("{name}: repeated run wrote different files"));
        }
        files += outputs[0].len();
    }
    verdict(
        true,
        format!("{files} metrics/trace/memory files byte-identical across repeated scripted runs"),
    )
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, title: &str, limit: Duration, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let took = start.elapsed();
        let in_time = took <= limit;
        let status = if v.pass && in_time { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} {status}  {title}: {} [{:.2}s, limit {}s]{}",
            v.detail,
            took.as_secs_f64(),
            limit.as_secs(),
            if v.known && in_time {
                " (documented deviation)"
            } else {
                ""
            }
        );
        if !(v.pass && in_time) && !(v.known && in_time) {
            failures += 1;
        }
    };
    let secs = Duration::from_secs;

    report(1, "backprop running mean", secs(5), &mut criterion_1);
    report(2, "memory utility", secs(1), &mut criterion_2);
    report(3, "routing softmax", secs(1), &mut criterion_3);
    report(
        4,
        "best-match routing and exemplars",
        secs(30),
        &mut criterion_4,
    );
    report(5, "dual-signal fusion", secs(2), &mut criterion_5);
    report(6, "UCT selection", secs(2), &mut criterion_6);
    report(
        7,
        "Game of 24 oracle cross-check",
        secs(60),
        &mut criterion_7,
    );
    report(8, "end-to-end offline search", secs(60), &mut criterion_8);

    let cfg = suite_config();
    let mut routing = None;
    report(9, "routing ablation ordering", secs(120), &mut || {
        let t = ablation(&cfg, Axis::Routing, &SEEDS).expect("routing ablation");
        let v = criterion_9(&t);
        routing = Some(t);
        v
    });
    let mut values = None;
    report(10, "value-signal ablation ordering", secs(180), &mut || {
        let t = ablation(&cfg, Axis::ValueSignal, &SEEDS).expect("value ablation");
        let v = criterion_10(&t);
        values = Some(t);
        v
    });
    // reuses the routing run: the task-aware row already uses full value fusion
    report(11, "efficiency ordering", secs(120), &mut || {
        criterion_11(routing.as_ref().unwrap())
    });
    report(12, "reproducibility", secs(60), &mut criterion_12);

    for t in [&routing, &values].into_iter().flatten() {
        println!("\n{:?} axis\n{}", t.axis, t.render());
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
