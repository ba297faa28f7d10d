use std::cell::RefCell;

use metanav::env::{Environment, Observation, StepEvent, Theme};
use metanav::maze::MazeEnv;
use metanav::meta::{execute_option, run_hierarchical, MetaError, OptionPolicy, OptionSelector, ScriptedOption};
use metanav::nn::{init_network, NetworkSpec};
use metanav::rl::{GreedyPolicy, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::maps::random_world;

fn option_pool(env: &MazeEnv, seed: u64) -> Vec<OptionPolicy> {
    let spec = NetworkSpec::q_network(env.obs_shape(), 3, true);
    vec![
        OptionPolicy::Scripted(ScriptedOption::AlwaysForward),
        OptionPolicy::Scripted(ScriptedOption::SpinLeft),
        OptionPolicy::Scripted(ScriptedOption::SpinRight),
        OptionPolicy::Learned {
            id: "random-net".into(),
            policy: GreedyPolicy::new(init_network(&spec, seed).unwrap()),
        },
    ]
}

/// Checks one randomly drawn option execution. Errors describe the violation.
fn audit_one(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tracks = rng.gen_bool(0.5);
    let world = random_world(rng, tracks);
    let env = MazeEnv::new(world, rng.gen_range(3..80));
    let options = option_pool(&env, rng.gen());
    let mut state = env.reset(rng.gen());
    for _ in 0..rng.gen_range(0..6) {
        let mut probe = state.clone();
        if env.step(&mut probe, rng.gen_range(0..3)).terminal {
            break;
        }
        state = probe;
    }
    let idx = rng.gen_range(0..options.len());
    let n = rng.gen_range(1..15);
    let gamma = [0.5, 0.9, 0.99, rng.gen_range(0.01..1.0)][rng.gen_range(0..4)];

    let snapshot = state.clone();
    let run = execute_option(&env, &mut state, idx, &options[idx], n, gamma).map_err(|e| e.to_string())?;
    let tr = &run.transition;

    // return accounting: replaying from the same state reproduces everything
    let mut again = snapshot.clone();
    let replay = execute_option(&env, &mut again, idx, &options[idx], n, gamma).map_err(|e| e.to_string())?;
    if replay != run {
        return Err("replay from identical state differs".into());
    }

    // independent primitive rollout
    let mut s = snapshot;
    let mut rewards = Vec::new();
    let mut last = None;
    for _ in 0..n {
        let a = options[idx].act(&env.observe(&s)).map_err(|e| e.to_string())?;
        let o = env.step(&mut s, a);
        rewards.push(o.reward);
        last = Some(o);
        if o.terminal {
            break;
        }
    }
    let last = last.ok_or("no step executed")?;
    if rewards != run.rewards {
        return Err(format!("rewards {:?} vs primitive {:?}", run.rewards, rewards));
    }
    let mut expected = 0.0;
    let mut discount = 1.0;
    for r in &rewards {
        expected += discount * r;
        discount *= gamma;
    }
    if tr.cum_reward != expected {
        return Err(format!("R = {} but sum gamma^j r_j = {expected}", tr.cum_reward));
    }
    let k = tr.steps_used;
    if k != rewards.len() || k == 0 || k > n {
        return Err(format!("k = {k}, N = {n}, executed {}", rewards.len()));
    }
    if k < n && !tr.terminal {
        return Err(format!("option stopped after {k} < {n} steps without terminating"));
    }
    if tr.terminal != last.terminal || run.final_event != last.event {
        return Err("terminal flag or event disagrees with the primitive rollout".into());
    }
    if tr.terminal && run.final_event == StepEvent::None {
        return Err("terminal without an event".into());
    }
    for (j, r) in rewards.iter().enumerate() {
        if ![5.0, 1.0, -200.0].contains(r) {
            return Err(format!("reward {r} outside the maze reward set"));
        }
        if *r == -200.0 && (j + 1 != k || !tr.terminal) {
            return Err("collision penalty not at a terminal step".into());
        }
    }
    if tr.next_obs != env.observe(&s) || state.pose != s.pose {
        return Err("option end state differs from primitive rollout".into());
    }
    if run.poses.len() != k {
        return Err("one pose per executed step expected".into());
    }
    Ok(())
}

/// Picks options at random and remembers the choices.
struct RecordingSelector {
    rng: RefCell<ChaCha8Rng>,
    n_options: usize,
    picks: RefCell<Vec<usize>>,
}

impl OptionSelector for RecordingSelector {
    fn select(&self, _obs: &Observation, _theme: Option<Theme>) -> Result<usize, MetaError> {
        let k = self.rng.borrow_mut().gen_range(0..self.n_options);
        self.picks.borrow_mut().push(k);
        Ok(k)
    }
}

/// Decisions happen at steps 0, k1, k1+k2, ... with every k_i = N except the last.
fn audit_boundaries(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let tracks = rng.gen_bool(0.5);
    let world = random_world(rng, tracks);
    let env = MazeEnv::new(world, rng.gen_range(3..80));
    let options = option_pool(&env, rng.gen());
    let n = rng.gen_range(1..12);
    let selector = RecordingSelector {
        rng: RefCell::new(ChaCha8Rng::seed_from_u64(rng.gen())),
        n_options: options.len(),
        picks: RefCell::new(Vec::new()),
    };
    let stats = run_hierarchical(&env, &selector, &options, n, 1, rng.gen()).map_err(|e| e.to_string())?;
    let ep = &stats[0];
    let picks = selector.picks.into_inner();
    let mut expected = Vec::new();
    for (i, &p) in picks.iter().enumerate() {
        let len = if i + 1 == picks.len() { ep.steps - n * i } else { n };
        if len == 0 || len > n {
            return Err(format!("decision {i} covers {len} steps with N = {n}"));
        }
        expected.extend(std::iter::repeat(p as i32).take(len));
    }
    let got: Vec<i32> = ep.trajectory.iter().map(|t| t.option).collect();
    if got != expected || ep.trajectory.len() != ep.steps {
        return Err(format!("option annotations {got:?} do not follow boundaries {expected:?}"));
    }
    Ok(())
}

/// Runs `calls` random option executions (plus a boundary audit every tenth call).
pub fn audit_option_calls(calls: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..calls {
        audit_one(&mut rng).map_err(|e| format!("call {i}: {e}"))?;
        if i % 10 == 0 {
            audit_boundaries(&mut rng).map_err(|e| format!("episode {i}: {e}"))?;
        }
    }
    Ok(())
}
