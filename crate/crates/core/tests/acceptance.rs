//! One PASS/FAIL line per acceptance criterion. A criterion that exceeds its
//! runtime limit fails even if its property holds.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nser_core::envs::{rollout, taxi_decode, taxi_encode, EnvSpec, Environment, TerminalOutcome, TrajId, TAXI_STATE_COUNT};
use nser_core::grounding::{
    grounding_loss_and_grads, parse_rule, t_norm, train_predicates, GroundingExample, PredicateRegistry, Vocabulary,
};
use nser_core::harness::{
    compute_auc, median, median_milestone, n_conv, run_experiment, steps_to_tau, ExperimentConfig, Milestone, RunResult,
    Strategy, METRICS_FILE,
};
use nser_core::induction::{embed_text, PrototypeBank};
use nser_core::neural::Mlp;
use nser_core::replay::{PerConfig, ReplayBuffer, TransitionId};
use nser_core::sampling::{replay_distribution, ScoreTable};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const GRAD_REL_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
const SUM_TOL: f64 = 1e-9;
const SHIFT_TOL: f64 = 1e-12;
const CHI_P_MIN: f64 = 0.01;
const ROW_SUM_TOL: f64 = 1e-12;
const MONOTONE_TOL: f64 = 1e-9;
const AUC_TOL: f64 = 1e-9;
const SUCCESS_MIN: f64 = 0.9;

type Outcome = Result<String, String>;

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).unwrap()
}

fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts.iter().zip(probs).map(|(&c, &p)| (c as f64 - p * n as f64).powi(2) / (p * n as f64)).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn central(params: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let orig = params[i];
            params[i] = orig + FD_STEP;
            let up = f(params);
            params[i] = orig - FD_STEP;
            let down = f(params);
            params[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut mlp, mut proto, mut pred) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let (i, h, o) = (rng.random_range(1..6), rng.random_range(1..9), rng.random_range(1..4));
        let mut net = Mlp::new(i, h, o, &mut rng);
        let x = normal_vec(&mut rng, i);
        let up = normal_vec(&mut rng, o);
        let g = net.backward(&x, &up).unwrap();
        let mut p = net.params().to_vec();
        let fd = central(&mut p, |q| {
            net.params_mut().copy_from_slice(q);
            net.forward(&x).unwrap().iter().zip(&up).map(|(y, u)| y * u).sum()
        });
        mlp = mlp.max(rel_err(&g.params, &fd));
    }
    for _ in 0..100 {
        let (k, d) = (rng.random_range(1..6), rng.random_range(2..10));
        let mut bank = PrototypeBank::new(k, d, rng.random_range(0.1..3.0), 1e-3, &mut rng).unwrap();
        let sets: Vec<Vec<Vec<f64>>> = (0..rng.random_range(1..6))
            .map(|_| (0..rng.random_range(1..4)).map(|_| normal_vec(&mut rng, d)).collect())
            .collect();
        let g = bank.gradient(&sets);
        let mut p = bank.params().to_vec();
        let fd = central(&mut p, |q| {
            bank.params_mut().copy_from_slice(q);
            bank.objective(&sets)
        });
        proto = proto.max(rel_err(&g, &fd));
    }
    let vocab = Vocabulary::for_env(nser_core::envs::EnvId::FrozenLake);
    let texts = [
        "IF NOT at(cell_adjacent_hole) AND action(toward_goal) THEN outcome(success)",
        "IF at(cell_adjacent_hole) AND action(toward_hole) THEN outcome(failure)",
        "IF at(near_goal) AND action(toward_goal) AND NOT visits(repeated_cell) THEN outcome(success)",
    ];
    for inst in 0..100u64 {
        let d = rng.random_range(2..8);
        let mut reg = PredicateRegistry::new(d, rng.random_range(2..8), 1e-3, inst);
        let rules: Vec<_> = (0..rng.random_range(1..=3))
            .map(|j| parse_rule(texts[(inst as usize + j) % 3], j, &vocab).unwrap())
            .collect();
        rules.iter().for_each(|r| reg.register_rule(r));
        let names: Vec<String> = reg.names().map(str::to_string).collect();
        for n in &names {
            for v in reg.get_mut(n).unwrap().net.params_mut() {
                *v = rng.sample::<f64, _>(StandardNormal) * 0.7;
            }
        }
        let data: Vec<_> = rules
            .iter()
            .map(|r| {
                let ex = (0..rng.random_range(1..5))
                    .map(|_| GroundingExample { embedding: normal_vec(&mut rng, d), label: rng.random_range(0..2) as f64 })
                    .collect();
                (r, ex)
            })
            .collect();
        let (_, grads) = grounding_loss_and_grads(&reg, &data).unwrap();
        for n in &names {
            let mut p = reg.get(n).unwrap().net.params().to_vec();
            let fd = central(&mut p, |q| {
                reg.get_mut(n).unwrap().net.params_mut().copy_from_slice(q);
                grounding_loss_and_grads(&reg, &data).unwrap().0
            });
            reg.get_mut(n).unwrap().net.params_mut().copy_from_slice(&p);
            pred = pred.max(rel_err(&grads[n], &fd));
        }
    }
    let detail = format!("max rel err mlp {mlp:.2e}, prototypes {proto:.2e}, predicates {pred:.2e} (< {GRAD_REL_TOL:e})");
    if mlp < GRAD_REL_TOL && proto < GRAD_REL_TOL && pred < GRAD_REL_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn distribution_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut sum_err, mut shift_err, mut uniform_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..500 {
        let n = rng.random_range(1..300);
        let ws: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
        let eta = rng.random_range(0.0..3.0);
        let c = rng.random_range(-50.0..50.0);
        let table = |w: &[f64]| ScoreTable::from_scores(w.iter().enumerate().map(|(i, &x)| (TrajId(i as u64), x)));
        let p = replay_distribution(&table(&ws), eta).unwrap();
        let shifted: Vec<f64> = ws.iter().map(|w| w + c).collect();
        let q = replay_distribution(&table(&shifted), eta).unwrap();
        let u = replay_distribution(&table(&ws), 0.0).unwrap();
        sum_err = sum_err.max((p.probabilities().iter().sum::<f64>() - 1.0).abs());
        for ((a, b), z) in p.probabilities().iter().zip(q.probabilities()).zip(u.probabilities()) {
            shift_err = shift_err.max((a - b).abs());
            uniform_err = uniform_err.max((z - 1.0 / n as f64).abs());
        }
    }
    let ws = [0.1, 0.9, 0.4, 2.0, 1.2, 0.0, 1.7];
    let p = replay_distribution(&ScoreTable::from_scores(ws.iter().enumerate().map(|(i, &w)| (TrajId(i as u64), w))), 1.0).unwrap();
    let mut counts = vec![0u64; ws.len()];
    for _ in 0..100_000 {
        counts[p.draw_index(&mut rng)] += 1;
    }
    let pv = chi_square_p(&counts, p.probabilities());
    let detail = format!(
        "sum err {sum_err:.1e} (< {SUM_TOL:e}), shift err {shift_err:.1e} (< {SHIFT_TOL:e}), eta=0 err {uniform_err:.1e}, chi-square p {pv:.3} (> {CHI_P_MIN})"
    );
    if sum_err < SUM_TOL && shift_err < SHIFT_TOL && uniform_err < SHIFT_TOL && pv > CHI_P_MIN {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn t_norm_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut violations = Vec::new();
    for i in 0..10_000 {
        let n = rng.random_range(1..=4);
        let d: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let t = t_norm(&d);
        let mut perm = d.clone();
        perm.shuffle(&mut rng);
        let j = rng.random_range(0..n);
        let mut up = d.clone();
        up[j] += (1.0 - up[j]) * rng.random::<f64>();
        let mut zero = d.clone();
        zero[j] = 0.0;
        let mut one = d.clone();
        one.insert(rng.random_range(0..=n), 1.0);
        let checks = [
            ("commutativity", (t_norm(&perm) - t).abs() <= 1e-15),
            ("monotonicity", t_norm(&up) >= t),
            ("boundedness", (0.0..=1.0).contains(&t)),
            ("annihilation", t_norm(&zero) == 0.0),
            ("identity", t_norm(&one) == t),
        ];
        for (law, ok) in checks {
            if !ok {
                violations.push(format!("{law} on set {i}"));
            }
        }
    }
    if violations.is_empty() {
        Ok("5 laws on 10000 condition sets".into())
    } else {
        Err(format!("{} violations, first: {}", violations.len(), violations[0]))
    }
}

fn environment_oracles() -> Outcome {
    let Environment::FrozenLake(lake) = EnvSpec::frozen_lake(true).build().unwrap() else { unreachable!() };
    let mut row_err: f64 = 0.0;
    for s in 0..lake.state_count() {
        for a in 0..4 {
            row_err = row_err.max((lake.transition_distribution(s, a).iter().map(|o| o.prob).sum::<f64>() - 1.0).abs());
        }
    }
    let mut seen = vec![false; TAXI_STATE_COUNT];
    let mut bijective = true;
    for i in 0..TAXI_STATE_COUNT {
        let d = taxi_decode(i).unwrap();
        let j = taxi_encode(d.row, d.col, d.passenger, d.destination).unwrap();
        bijective &= j == i && !seen[i];
        seen[i] = true;
    }
    // Breadth-first search over the deterministic grid, holes as walls.
    let Environment::FrozenLake(det) = EnvSpec::frozen_lake(false).build().unwrap() else { unreachable!() };
    let mut prev = vec![None; det.state_count()];
    let mut visited = vec![false; det.state_count()];
    let mut queue = std::collections::VecDeque::from([det.start()]);
    visited[det.start()] = true;
    let mut goal = None;
    while let Some(s) = queue.pop_front() {
        if det.cell(s) == nser_core::envs::Cell::Goal {
            goal = Some(s);
            break;
        }
        for a in 0..4 {
            let o = det.transition_distribution(s, a)[0];
            if !visited[o.next] && det.cell(o.next) != nser_core::envs::Cell::Hole {
                visited[o.next] = true;
                prev[o.next] = Some((s, a));
                queue.push_back(o.next);
            }
        }
    }
    let mut plan = Vec::new();
    let mut at = goal.ok_or("goal unreachable")?;
    while let Some((p, a)) = prev[at] {
        plan.push(a);
        at = p;
    }
    plan.reverse();
    let spec = EnvSpec::frozen_lake(false);
    let env = spec.build().unwrap();
    let mut k = 0;
    let traj = rollout(&env, &spec, TrajId(0), |_| {
        k += 1;
        plan[k - 1]
    }, 100, env.reset(0), &mut ChaCha8Rng::seed_from_u64(0))
    .map_err(|e| e.to_string())?;
    let scripted_ok = traj.len() == 6 && traj.episode_return == 1.0 && traj.terminal_outcome == TerminalOutcome::Success;
    let detail = format!(
        "row-sum err {row_err:.1e} (< {ROW_SUM_TOL:e}), taxi bijection {bijective}, scripted return {} in {} steps",
        traj.episode_return,
        traj.len()
    );
    if row_err < ROW_SUM_TOL && bijective && scripted_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn baseline_sanity() -> Outcome {
    let cfg = config("frozenlake_deterministic.toml");
    let mut rates = Vec::new();
    for &seed in &cfg.seeds {
        let t = Instant::now();
        let r = run_experiment(&cfg, seed).map_err(|e| e.to_string())?.result;
        if t.elapsed() > Duration::from_secs(120) {
            return Err(format!("seed {seed} took {:.0?}", t.elapsed()));
        }
        rates.push(r.final_success_rate);
    }
    let passing = rates.iter().filter(|&&r| r >= SUCCESS_MIN).count();
    let detail = format!("greedy success rates {rates:?}; {passing}/5 seeds >= {SUCCESS_MIN}");
    if passing >= 3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn directional_claim() -> Outcome {
    let base = config("frozenlake_slippery.toml");
    let mut by_strategy: Vec<(Strategy, Vec<RunResult>)> = Vec::new();
    for s in [Strategy::Uer, Strategy::Nser] {
        let mut cfg = base.clone();
        cfg.strategy = s;
        let runs = cfg.seeds.iter().map(|&seed| run_experiment(&cfg, seed).map(|o| o.result)).collect::<Result<Vec<_>, _>>();
        by_strategy.push((s, runs.map_err(|e| e.to_string())?));
    }
    let stats: Vec<(Milestone, f64)> = by_strategy
        .iter()
        .map(|(_, runs)| {
            (
                median_milestone(&runs.iter().map(|r| r.steps_to_tau).collect::<Vec<_>>()),
                median(&runs.iter().map(|r| r.auc).collect::<Vec<_>>()),
            )
        })
        .collect();
    let ((uer_steps, uer_auc), (nser_steps, nser_auc)) = (stats[0], stats[1]);
    let detail = format!(
        "median steps-to-tau UER {uer_steps} vs NSER {nser_steps}; median AUC UER {uer_auc:.1} vs NSER {nser_auc:.1}"
    );
    if nser_steps.rank() < uer_steps.rank() && nser_auc > uer_auc {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn optimization_monotonicity() -> Outcome {
    let sets: Vec<Vec<Vec<f64>>> = [
        ["IF NOT at(cell_adjacent_hole) AND action(toward_goal) THEN outcome(success)", "IF at(near_goal) THEN outcome(success)"],
        ["IF at(cell_adjacent_hole) AND action(toward_hole) THEN outcome(failure)", "IF at(hole) THEN outcome(failure)"],
        ["IF visits(repeated_cell) THEN outcome(timeout)", "IF action(away_from_goal) THEN outcome(timeout)"],
    ]
    .iter()
    .map(|s| s.iter().map(|t| embed_text(t, 64)).collect())
    .collect();
    let mut bank = PrototypeBank::new(8, 64, 1.0, 1e-3, &mut ChaCha8Rng::seed_from_u64(104)).unwrap();
    let j = bank.update(&sets, 50).map_err(|e| e.to_string())?;
    let worst_j = j.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);

    let vocab = Vocabulary::for_env(nser_core::envs::EnvId::FrozenLake);
    let rules = [
        parse_rule("IF NOT at(cell_adjacent_hole) AND action(toward_goal) THEN outcome(success)", 0, &vocab).unwrap(),
        parse_rule("IF at(near_goal) AND action(toward_goal) THEN outcome(success)", 1, &vocab).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let examples: Vec<GroundingExample> = (0..40)
        .map(|i| {
            let mut e = vec![0.0; 16];
            for _ in 0..6 {
                e[rng.random_range(0..16)] += 1.0 / 6.0;
            }
            GroundingExample { embedding: e, label: (i % 3 == 0) as u8 as f64 }
        })
        .collect();
    let data: Vec<_> = rules.iter().map(|r| (r, examples.clone())).collect();
    let mut reg = PredicateRegistry::new(16, 32, 1e-3, 7);
    let l = train_predicates(&mut reg, &data, 50).map_err(|e| e.to_string())?;
    let worst_l = l.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let detail = format!(
        "largest objective drop {worst_j:.1e}, largest loss rise {worst_l:.1e} over 50 steps (tolerance {MONOTONE_TOL:e})"
    );
    if worst_j <= MONOTONE_TOL && worst_l <= MONOTONE_TOL && j.len() == 51 && l.len() == 50 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let (mut auc_err, mut tau_bad, mut conv_bad) = (0.0f64, 0, 0);
    for _ in 0..1000 {
        let n = rng.random_range(0..300);
        let w = rng.random_range(1..=40usize);
        let mut step = 0u64;
        let mut recs: Vec<(u64, i64)> = Vec::new();
        for _ in 0..n {
            step += rng.random_range(1..=120);
            recs.push((step, rng.random_range(-3..=3)));
        }
        let float: Vec<(u64, f64)> = recs.iter().map(|&(s, r)| (s, r as f64)).collect();
        let sums: Vec<(u64, i64)> =
            (w.saturating_sub(1)..recs.len()).map(|e| (recs[e].0, recs[e + 1 - w..=e].iter().map(|r| r.1).sum())).collect();

        let den = rng.random_range(1..=8);
        let num = rng.random_range(-3 * den..=3 * den);
        let want_tau = sums.iter().find(|&&(_, s)| s * den >= num * w as i64).map_or(Milestone::NotReached, |&(s, _)| Milestone::Reached(s));
        tau_bad += (steps_to_tau(&float, num as f64 / den as f64, w) != want_tau) as usize;

        let j = rng.random_range(0..2 * w as i64);
        let want_conv = match sums.last() {
            None => Milestone::NotReached,
            Some(&(_, last)) => {
                let first = (0..sums.len()).find(|&i| sums[i..].iter().all(|&(_, s)| 2 * (s - last).abs() <= 2 * j + 1)).unwrap();
                Milestone::Reached(sums[first].0)
            }
        };
        conv_bad += (n_conv(&float, (2 * j + 1) as f64 / (2 * w) as f64, w) != want_conv) as usize;

        let pts: Vec<(f64, f64)> = float.iter().map(|&(s, r)| (s as f64, r)).collect();
        let mut oracle = 0.0;
        for i in 1..pts.len() {
            let lo = pts[i - 1].1.min(pts[i].1);
            let dx = pts[i].0 - pts[i - 1].0;
            oracle += lo * dx + 0.5 * (pts[i].1 - pts[i - 1].1).abs() * dx;
        }
        let got = compute_auc(&pts).map_err(|e| e.to_string())?;
        auc_err = auc_err.max((got - oracle).abs() / oracle.abs().max(1.0));
    }
    let detail = format!("1000 curves: AUC rel err {auc_err:.1e} (< {AUC_TOL:e}), steps-to-tau mismatches {tau_bad}, N_conv mismatches {conv_bad}");
    if auc_err < AUC_TOL && tau_bad == 0 && conv_bad == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn per_correctness() -> Outcome {
    let pri = [0.5, 2.0, 0.1, 4.0, 1.0, 0.0, 3.0];
    let eps = PerConfig::default().epsilon;
    let mut ps = Vec::new();
    for alpha in [0.6, 0.0] {
        let mut buf = ReplayBuffer::with_priorities(64, PerConfig::default()).unwrap();
        let transitions = (0..pri.len())
            .map(|i| nser_core::envs::Transition {
                state: nser_core::envs::State::discrete(i, 16),
                action: 0,
                reward: 0.0,
                next_state: nser_core::envs::State::discrete(i + 1, 16),
                terminated: i + 1 == pri.len(),
                truncated: false,
            })
            .collect();
        buf.push_trajectory(nser_core::envs::Trajectory {
            traj_id: TrajId(0),
            env_id: nser_core::envs::EnvId::FrozenLake,
            transitions,
            episode_return: 0.0,
            terminal_outcome: TerminalOutcome::Failure,
        })
        .unwrap();
        let ids: Vec<TransitionId> = (0..pri.len()).map(|step| TransitionId { traj_id: TrajId(0), step }).collect();
        buf.update_priorities(&ids, &pri).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let mut counts = vec![0u64; pri.len()];
        for _ in 0..100 {
            for id in buf.sample_per(1000, alpha, 0.4, &mut rng).unwrap().source_ids {
                counts[id.step] += 1;
            }
        }
        let mass: Vec<f64> = pri.iter().map(|p| (p + eps).powf(alpha)).collect();
        let z: f64 = mass.iter().sum();
        ps.push(chi_square_p(&counts, &mass.iter().map(|m| m / z).collect::<Vec<_>>()));
    }
    let detail = format!("chi-square p alpha=0.6 {:.3}, alpha=0 (uniform) {:.3} (> {CHI_P_MIN})", ps[0], ps[1]);
    if ps.iter().all(|&p| p > CHI_P_MIN) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join("frozenlake_slippery.toml");
    let mut files = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_nser"))
            .args(["run", "--seed", "0", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        files.push(std::fs::read(out.join("frozenlake_dqn_nser_seed0").join(METRICS_FILE)).map_err(|e| e.to_string())?);
    }
    let detail = format!("metrics.csv sizes {} and {} bytes", files[0].len(), files[1].len());
    if files[0] == files[1] && !files[0].is_empty() {
        Ok(detail + ", identical")
    } else {
        Err(detail + ", differ")
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 10] = [
        ("1 gradient correctness", gradient_correctness, 30),
        ("2 distribution soundness", distribution_soundness, 30),
        ("3 t-norm laws", t_norm_laws, 10),
        ("4 environment oracles", environment_oracles, 10),
        ("5 baseline sanity", baseline_sanity, 600),
        ("6 directional NSER claim", directional_claim, 600),
        ("7 optimization monotonicity", optimization_monotonicity, 30),
        ("8 metric oracles", metric_oracles, 30),
        ("9 PER correctness", per_correctness, 30),
        ("10 determinism", determinism, 120),
    ];
    let mut failed = Vec::new();
    for (name, check, limit) in criteria {
        let t = Instant::now();
        let mut outcome = check();
        let elapsed = t.elapsed();
        if elapsed > Duration::from_secs(limit) {
            outcome = Err(format!("{} (took {elapsed:.1?}, limit {limit}s)", outcome.unwrap_or_else(|e| e)));
        }
        match outcome {
            Ok(d) => println!("PASS criterion {name}: {d} [{elapsed:.1?}]"),
            Err(d) => {
                println!("FAIL criterion {name}: {d} [{elapsed:.1?}]");
                failed.push(name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
