use dynorm_core::gridworld::*;
use proptest::prelude::*;

/// Value iteration on a deterministic table MDP, to a fixed point.
fn value_iteration(mdp: &TableMdp) -> Vec<Vec<f64>> {
    let (ns, na) = (mdp.next.len(), mdp.next[0].len());
    let mut q = vec![vec![0.0; na]; ns];
    for _ in 0..10_000 {
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            if mdp.terminal[s] {
                continue;
            }
            for a in 0..na {
                let n = mdp.next[s][a];
                let future = if mdp.terminal[n] {
                    0.0
                } else {
                    q[n].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                };
                let v = mdp.reward[s][a] + mdp.discount * future;
                delta = delta.max((v - q[s][a]).abs());
                q[s][a] = v;
            }
        }
        if delta < 1e-13 {
            break;
        }
    }
    q
}

fn table_mdp() -> impl Strategy<Value = TableMdp> {
    (2usize..=16, 1usize..=3).prop_flat_map(|(ns, na)| {
        (
            prop::collection::vec(prop::collection::vec(0..ns, na), ns),
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, na), ns),
            prop::collection::vec(prop::bool::weighted(0.2), ns),
            0.5f64..0.9,
        )
            .prop_map(|(next, reward, mut terminal, discount)| {
                terminal[0] = false;
                TableMdp {
                    next,
                    reward,
                    terminal,
                    start: 0,
                    discount,
                    horizon: 40,
                }
            })
    })
}

fn reachable(mdp: &TableMdp) -> Vec<bool> {
    let mut seen = vec![false; mdp.next.len()];
    let mut stack = vec![mdp.start];
    seen[mdp.start] = true;
    while let Some(s) = stack.pop() {
        if mdp.terminal[s] {
            continue;
        }
        for &n in &mdp.next[s] {
            if !seen[n] {
                seen[n] = true;
                stack.push(n);
            }
        }
    }
    seen
}

fn random_tables(vals: &[f64], n_tables: usize) -> Vec<QTable> {
    (0..n_tables)
        .map(|t| QTable {
            n_states: 3,
            n_actions: 5,
            q: vals[t * 15..(t + 1) * 15].to_vec(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn q_learning_matches_value_iteration(mdp in table_mdp(), seed in 0u64..1000) {
        let cfg = QLearningConfig::new(4000, seed).with_epsilon(1.0, 1.0);
        let q = train_q_learning(&mdp, &cfg);
        let oracle = value_iteration(&mdp);
        let r_max = mdp.reward.iter().flatten().fold(0.0f64, |m, r| m.max(r.abs()));
        prop_assert!(q.max_abs() <= r_max / (1.0 - mdp.discount) + 1e-9);
        for (s, live) in reachable(&mdp).into_iter().enumerate() {
            if live && !mdp.terminal[s] {
                for a in 0..mdp.next[0].len() {
                    prop_assert!((q.get(s, a) - oracle[s][a]).abs() < 1e-3, "s {s} a {a}: {} vs {}", q.get(s, a), oracle[s][a]);
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn penalty_of_null_is_zero(vals in prop::collection::vec(-50.0f64..50.0, 45), n_tables in 1usize..=3, s in 0usize..3) {
        let tables = random_tables(&vals, n_tables);
        prop_assert_eq!(aup_penalty(&tables, s, Action::Null.index(), Action::Null.index()).unwrap(), 0.0);
        for a in 0..5 {
            prop_assert!(aup_penalty(&tables, s, a, Action::Null.index()).unwrap() >= 0.0);
        }
    }

    #[test]
    fn r_aup_is_non_increasing_in_sigma(
        vals in prop::collection::vec(0.0f64..50.0, 45),
        base in -2.0f64..2.0,
        s in 0usize..3,
        a in 0usize..5,
        s1 in 0.0f64..100.0,
        s2 in 0.0f64..100.0,
    ) {
        let tables = random_tables(&vals, 3);
        let (lo, hi) = (s1.min(s2), s1.max(s2));
        let null = Action::Null.index();
        let r_lo = r_aup(base, &tables, s, a, null, lo, DEFAULT_SCALE_FLOOR).unwrap();
        let r_hi = r_aup(base, &tables, s, a, null, hi, DEFAULT_SCALE_FLOOR).unwrap();
        prop_assert!(r_hi <= r_lo);
        prop_assert_eq!(r_aup(base, &tables, s, a, null, 0.0, DEFAULT_SCALE_FLOOR).unwrap(), base);
        prop_assert_eq!(r_aup(base, &tables, s, null, null, hi, DEFAULT_SCALE_FLOOR).unwrap(), base);
    }
}

#[test]
fn chain_value_matches_oracle() {
    // start -> middle -> goal, reward 1 on reaching the goal.
    let mdp = TableMdp {
        next: vec![vec![1, 0], vec![2, 0], vec![2, 2]],
        reward: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]],
        terminal: vec![false, false, true],
        start: 0,
        discount: 0.9,
        horizon: 10,
    };
    let q = train_q_learning(&mdp, &QLearningConfig::new(500, 0));
    assert!((q.get(0, 0) - 0.9).abs() < 1e-3);
    assert!((q.get(0, 0) - value_iteration(&mdp)[0][0]).abs() < 1e-3);
}

#[test]
fn vanilla_side_effect_agent_takes_shortest_path() {
    let env = GridWorld::side_effect();
    let q = train_q_learning(&env, &QLearningConfig::new(50_000, 0));
    let mut s = env.start();
    let mut rng = stream_rng(0, 9);
    let mut steps = 0;
    while !env.is_terminal(s) && steps < env.horizon {
        s = env.step(s, q.greedy(s), &mut rng).unwrap().next;
        steps += 1;
    }
    assert_eq!(steps, 3);
    assert_eq!(env.decode(s), (env.goal.unwrap(), VASE_BROKEN));
}

#[test]
fn grid_q_values_respect_the_bound() {
    for env in [
        GridWorld::side_effect(),
        GridWorld::reward_hack(),
        GridWorld::stop_button(),
    ] {
        let q = train_q_learning(&env, &QLearningConfig::new(3000, 1));
        assert!(
            q.max_abs() <= 1.0 / (1.0 - env.discount) + 1e-9,
            "{}",
            env.name
        );
    }
}

#[test]
fn aux_rewards_are_reproducible_and_seed_dependent() {
    let env = GridWorld::side_effect();
    assert_eq!(
        random_aux_rewards(&env, 1, 7),
        random_aux_rewards(&env, 1, 7)
    );
    let (a, b) = (
        random_aux_rewards(&env, 1, 7),
        random_aux_rewards(&env, 1, 8),
    );
    assert!(a[0].iter().zip(&b[0]).take(10).any(|(x, y)| x != y));
    assert!(a[0].iter().all(|r| (0.0..1.0).contains(r)));
    let aux = random_aux_rewards(&env, 5, 3);
    let tables = train_aux_q(
        &env,
        &aux,
        &QLearningConfig::new(2000, 3).with_epsilon(1.0, 1.0),
    );
    for i in 0..5 {
        for j in i + 1..5 {
            assert_ne!(tables[i], tables[j]);
        }
    }
}

#[test]
fn disabled_switch_never_stops_the_episode() {
    let env = GridWorld::stop_button();
    let switch = env.switch.unwrap().cell;
    let mut rng = stream_rng(42, 0);
    let mut s = env.encode(env.agent_start, SWITCH_DISABLED);
    for _ in 0..10_000 {
        let a = rand::Rng::random_range(&mut rng, 0..5);
        let t = env.step(s, a, &mut rng).unwrap();
        let (cell, flags) = env.decode(t.next);
        assert_eq!(flags & HALTED, 0);
        if cell == switch {
            assert!(!t.done);
        }
        s = if t.done {
            env.encode(env.agent_start, SWITCH_DISABLED)
        } else {
            t.next
        };
    }
}

#[test]
fn enabled_switch_stops_about_half_the_time() {
    let env = GridWorld::stop_button();
    let before = env.encode((1, 2), 0);
    let mut rng = stream_rng(1, 0);
    let halts = (0..10_000)
        .filter(|_| {
            env.step(before, Action::Right.index(), &mut rng)
                .unwrap()
                .done
        })
        .count();
    assert!((4700..5300).contains(&halts), "{halts}");
}

#[test]
fn experiments_are_deterministic() {
    let cfg = ExperimentConfig::new(
        EnvKind::StopButton,
        AgentSpec::Aup {
            sigma: 5.0,
            n_aux: 3,
        },
        2000,
        20,
        9,
    );
    assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
    let sweep = sigma_sweep(&cfg, &[0.0, 1.0, 10.0], 3).unwrap();
    assert_eq!(sweep.len(), 3);
    assert_eq!(sweep[0].sigma, Some(0.0));
}

#[test]
fn power_graph_contains_smaller_branch() {
    let b = BranchMdp::power(0, 0.99).unwrap();
    let collect = |start: usize| {
        let mut seen = vec![start];
        let mut i = 0;
        while i < seen.len() {
            for &n in &b.successors[seen[i]] {
                if !seen.contains(&n) {
                    seen.push(n);
                }
            }
            i += 1;
        }
        seen
    };
    let (big, small) = (collect(b.larger_branch), collect(b.smaller_branch));
    assert!(small.iter().all(|s| big.contains(s)));
    assert!(big.len() > small.len());
    assert!(b
        .shutdown
        .iter()
        .zip(&b.rewards)
        .all(|(off, r)| !off || *r == 0.0));
}
