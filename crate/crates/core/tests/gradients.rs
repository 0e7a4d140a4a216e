use nser_core::envs::EnvId;
use nser_core::grounding::{grounding_loss_and_grads, parse_rule, GroundingExample, PredicateRegistry, Vocabulary};
use nser_core::induction::PrototypeBank;
use nser_core::neural::Mlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn central<F: FnMut(&mut [f64]) -> f64>(params: &mut [f64], mut f: F) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let orig = params[i];
            params[i] = orig + H;
            let up = f(params);
            params[i] = orig - H;
            let down = f(params);
            params[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

#[test]
fn mlp_parameter_and_input_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (i, h, o) = (rng.random_range(1..6), rng.random_range(1..9), rng.random_range(1..4));
        let mut net = Mlp::new(i, h, o, &mut rng);
        let x = normal_vec(&mut rng, i);
        let up = normal_vec(&mut rng, o);
        let g = net.backward(&x, &up).unwrap();
        let loss = |n: &Mlp, x: &[f64]| n.forward(x).unwrap().iter().zip(&up).map(|(y, u)| y * u).sum::<f64>();
        let mut params = net.params().to_vec();
        let fd = central(&mut params, |p| {
            net.params_mut().copy_from_slice(p);
            loss(&net, &x)
        });
        net.params_mut().copy_from_slice(&params);
        let mut xs = x.clone();
        let fd_x = central(&mut xs, |xp| loss(&net, xp));
        worst = worst.max(rel_err(&g.params, &fd)).max(rel_err(&g.input, &fd_x));
    }
    assert!(worst < TOL, "worst relative error {worst}");
}

#[test]
fn prototype_objective_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..6);
        let d = rng.random_range(2..10);
        let beta = rng.random_range(0.1..3.0);
        let mut bank = PrototypeBank::new(k, d, beta, 1e-3, &mut rng).unwrap();
        let sets: Vec<Vec<Vec<f64>>> = (0..rng.random_range(1..6))
            .map(|_| (0..rng.random_range(1..4)).map(|_| normal_vec(&mut rng, d)).collect())
            .collect();
        let g = bank.gradient(&sets);
        let mut params = bank.params().to_vec();
        let fd = central(&mut params, |p| {
            bank.params_mut().copy_from_slice(p);
            bank.objective(&sets)
        });
        worst = worst.max(rel_err(&g, &fd));
    }
    assert!(worst < TOL, "worst relative error {worst}");
}

#[test]
fn predicate_t_norm_chain_gradient() {
    let vocab = Vocabulary::for_env(EnvId::FrozenLake);
    let texts = [
        "IF NOT at(cell_adjacent_hole) AND action(toward_goal) THEN outcome(success)",
        "IF at(cell_adjacent_hole) AND action(toward_hole) THEN outcome(failure)",
        "IF at(near_goal) AND action(toward_goal) AND NOT visits(repeated_cell) THEN outcome(success)",
        "IF action(toward_goal) THEN outcome(success)",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for inst in 0..100 {
        let d = rng.random_range(2..8);
        let mut reg = PredicateRegistry::new(d, rng.random_range(2..8), 1e-3, inst);
        let rules: Vec<_> = (0..rng.random_range(1..=texts.len()))
            .map(|j| parse_rule(texts[(inst as usize + j) % texts.len()], j, &vocab).unwrap())
            .collect();
        for r in &rules {
            reg.register_rule(r);
        }
        let names: Vec<String> = reg.names().map(str::to_string).collect();
        for n in &names {
            let p = reg.get_mut(n).unwrap().net.params_mut();
            for v in p.iter_mut() {
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
            let mut params = reg.get(n).unwrap().net.params().to_vec();
            let fd = central(&mut params, |p| {
                reg.get_mut(n).unwrap().net.params_mut().copy_from_slice(p);
                grounding_loss_and_grads(&reg, &data).unwrap().0
            });
            reg.get_mut(n).unwrap().net.params_mut().copy_from_slice(&params);
            let analytic = grads.get(n).cloned().unwrap_or_else(|| vec![0.0; params.len()]);
            worst = worst.max(rel_err(&analytic, &fd));
        }
    }
    assert!(worst < TOL, "worst relative error {worst}");
}
