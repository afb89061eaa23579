use mapfboost::grid::{validate_paths, Instance};
use mapfboost::lacam::{lacam_solve, Limits, SolveStatus};
use mapfboost::pibt::initial_priorities;
use mapfboost::policy::{OrderingSource, PolicyProvider, RankMode, SampleMode, SoftmaxHeuristicPolicy, UniformPolicy};
use mapfboost::runner::exact_tables;
use mapfboost_oracle::{check_paths, corridor_swap, joint_bfs, random_micro, Solvability};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn source(inst: &Instance, mode: RankMode, sample: SampleMode, policy: Option<Box<dyn PolicyProvider>>) -> OrderingSource {
    let tables = exact_tables(inst).unwrap();
    OrderingSource::new(inst.map.clone(), tables, mode, sample, policy).unwrap()
}

fn solve(inst: &Instance, src: &mut OrderingSource, seed: u64) -> mapfboost::lacam::SolveResult {
    let tables = exact_tables(inst).unwrap();
    let d: Vec<f64> = tables.iter().zip(&inst.starts).map(|(t, &s)| t.value(s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lacam_solve(inst, src, initial_priorities(&d), Limits::default(), &mut rng).unwrap()
}

/// LaCAM must agree with the exhaustive search and never beat its optimum.
fn agree(inst: &Instance, src: &mut OrderingSource, seed: u64) -> Option<bool> {
    let truth = joint_bfs(inst, 200_000);
    let res = solve(inst, src, seed);
    match truth {
        Solvability::Inconclusive => return None,
        Solvability::Unsolvable => assert_eq!(res.status, SolveStatus::FailureExhausted, "{inst:?}"),
        Solvability::Solvable { makespan, flowtime } => {
            assert_eq!(res.status, SolveStatus::Success, "{inst:?}");
            let paths = res.paths.as_ref().unwrap();
            check_paths(paths, inst).unwrap();
            assert!(validate_paths(paths, inst).passed());
            assert!(res.makespan >= makespan);
            assert!(res.flowtime >= flowtime);
        }
    }
    truth.is_solvable()
}

#[test]
fn corridor_swap_is_reported_exhausted() {
    let inst = corridor_swap();
    let res = solve(&inst, &mut source(&inst, RankMode::H, SampleMode::Strict, None), 0);
    assert_eq!(res.status, SolveStatus::FailureExhausted);
    assert!(res.paths.is_none());
}

#[test]
fn heuristic_ordering_matches_joint_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut solvable, mut unsolvable) = (0, 0);
    for i in 0..300 {
        let inst = random_micro(&mut rng, 4, 3, 0.25);
        let mut src = source(&inst, RankMode::H, SampleMode::Strict, None);
        match agree(&inst, &mut src, i) {
            Some(true) => solvable += 1,
            Some(false) => unsolvable += 1,
            None => {}
        }
    }
    assert!(solvable + unsolvable >= 250);
    assert!(unsolvable >= 10, "corpus needs unsolvable cases, got {unsolvable}");
}

#[test]
fn policy_orderings_match_joint_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut decided = 0;
    for i in 0..200 {
        let inst = random_micro(&mut rng, 4, 3, 0.25);
        let n = inst.n_agents();
        let (mode, sample, policy): (RankMode, SampleMode, Box<dyn PolicyProvider>) = match i % 3 {
            0 => (RankMode::Pi, SampleMode::Sampled, Box::new(UniformPolicy::new(n))),
            1 => {
                let tables = exact_tables(&inst).unwrap();
                let p = SoftmaxHeuristicPolicy::new(&inst, &tables, 0.5, 20.0, i).unwrap();
                (RankMode::Pi, SampleMode::Strict, Box::new(p))
            }
            _ => (RankMode::Sum(2.0), SampleMode::Sampled, Box::new(UniformPolicy::new(n))),
        };
        let mut src = source(&inst, mode, sample, Some(policy));
        if agree(&inst, &mut src, i).is_some() {
            decided += 1;
        }
    }
    assert!(decided >= 180);
}

#[test]
fn two_agent_instances_on_open_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for i in 0..100 {
        let inst = random_micro(&mut rng, 3, 2, 0.0);
        let mut src = source(&inst, RankMode::H2, SampleMode::Strict, None);
        assert!(agree(&inst, &mut src, i).is_some());
    }
}
