use std::sync::Arc;

use council_core::env::{game24_oracle, Environment, Game24};
use council_core::expert::{Council, Expert, ScriptedExpert};
use council_core::planner::{search, Planner, SearchConfig};
use council_core::trace::{IterationTrace, NoTrace};
use council_core::{EpisodeId, HashedTrigramEmbedder, Payload, TaskSpec};

fn task(id: &str, n: [i64; 4]) -> TaskSpec {
    TaskSpec {
        task_id: id.into(),
        environment: "game24".into(),
        payload: Payload::Numbers(n.to_vec()),
    }
}

fn oracle_council(env: &Arc<dyn Environment>) -> Council {
    let e: Arc<dyn Expert> =
        Arc::new(ScriptedExpert::specialist("solver", env.clone(), None, 1, 0.0).unwrap());
    Council::new(vec![e], 512).unwrap()
}

#[test]
fn oracle_expert_solves_four_four_ten_ten() {
    let env: Arc<dyn Environment> = Arc::new(Game24);
    let embedder = HashedTrigramEmbedder::default();
    let mut council = oracle_council(&env);
    let planner = Planner {
        env: env.as_ref(),
        embedder: &embedder,
        config: SearchConfig::default(),
    };
    let t = task("t0", [4, 4, 10, 10]);
    let out = search(&t, &mut council, &planner, EpisodeId(0), 7, &mut NoTrace).unwrap();

    assert!(out.result.success);
    assert_eq!(out.result.reward, 1.0);
    assert_eq!(out.result.best_trajectory.depth(), 3);
    let actions: Vec<_> = out.result.best_trajectory.actions().cloned().collect();
    assert_eq!(env.replay(&t, &actions).unwrap().reward(), Some(1.0));
    // one segment per prefix of the three-step solution
    assert_eq!(council.total_segments(), 3);
    assert_eq!(out.memory.inserted.len(), 3);
}

#[test]
fn exhausted_budget_reports_failure() {
    let env: Arc<dyn Environment> = Arc::new(Game24);
    let embedder = HashedTrigramEmbedder::default();
    let e: Arc<dyn Expert> =
        Arc::new(ScriptedExpert::uniform_random("guesser", env.clone()).unwrap());
    let mut council = Council::new(vec![e], 16).unwrap();
    let config = SearchConfig::default();
    let planner = Planner {
        env: env.as_ref(),
        embedder: &embedder,
        config,
    };
    let t = task("t1", [1, 1, 1, 1]);
    assert!(!game24_oracle(&[1, 1, 1, 1]).unwrap().solvable);

    let out = search(&t, &mut council, &planner, EpisodeId(0), 1, &mut NoTrace).unwrap();
    assert!(!out.result.success);
    assert_eq!(out.result.iterations_used, config.budget);
    assert!(out.result.nodes_expanded <= config.budget * config.expansion_width);
    assert!(out.result.nodes_expanded >= out.result.max_depth_reached);
    assert_eq!(council.total_segments(), 0);
}

#[test]
fn tree_invariants_hold_after_search() {
    let env: Arc<dyn Environment> = Arc::new(Game24);
    let embedder = HashedTrigramEmbedder::default();
    let e: Arc<dyn Expert> =
        Arc::new(ScriptedExpert::uniform_random("guesser", env.clone()).unwrap());
    let mut council = Council::new(vec![e], 16).unwrap();
    let planner = Planner {
        env: env.as_ref(),
        embedder: &embedder,
        config: SearchConfig::default(),
    };
    for (i, n) in [[1, 2, 3, 4], [2, 3, 5, 12], [1, 1, 1, 1]]
        .into_iter()
        .enumerate()
    {
        let out = search(
            &task("t", n),
            &mut council,
            &planner,
            EpisodeId(i as u64),
            3,
            &mut NoTrace,
        )
        .unwrap();
        for node in out.tree.nodes() {
            assert!((0.0..=1.0).contains(&node.value));
            if let Some(p) = node.parent {
                let parent = out.tree.node(p);
                assert_eq!(parent.depth() + 1, node.depth());
                assert!(parent.prefix.is_prefix_of(&node.prefix));
            }
            // a node's visits cover its children's
            let child_visits: u64 = node.children.iter().map(|&c| out.tree.node(c).visits).sum();
            assert!(node.visits >= child_visits);
        }
    }
}

#[test]
fn searches_are_deterministic_per_seed() {
    let env: Arc<dyn Environment> = Arc::new(Game24);
    let embedder = HashedTrigramEmbedder::default();
    let planner = Planner {
        env: env.as_ref(),
        embedder: &embedder,
        config: SearchConfig::default(),
    };
    let tasks = Game24.generate_tasks(10, 5, true);
    let run = |seed: u64| {
        let mut council = oracle_council(&env);
        let mut trace: Vec<IterationTrace> = Vec::new();
        let rows: Vec<_> = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| {
                search(
                    t,
                    &mut council,
                    &planner,
                    EpisodeId(i as u64),
                    seed,
                    &mut trace,
                )
                .unwrap()
                .result
            })
            .collect();
        (rows, trace)
    };
    assert_eq!(run(11), run(11));
}

#[test]
fn oracle_expert_solves_nearly_all_solvable_tasks() {
    let env: Arc<dyn Environment> = Arc::new(Game24);
    let embedder = HashedTrigramEmbedder::default();
    let planner = Planner {
        env: env.as_ref(),
        embedder: &embedder,
        config: SearchConfig::default(),
    };
    let mut council = oracle_council(&env);
    let tasks = Game24.generate_tasks(100, 2024, true);
    let solved = tasks
        .iter()
        .enumerate()
        .filter(|(i, t)| {
            search(
                t,
                &mut council,
                &planner,
                EpisodeId(*i as u64),
                9,
                &mut NoTrace,
            )
            .unwrap()
            .result
            .success
        })
        .count();
    assert!(solved >= 95, "solved {solved} of 100");
}
