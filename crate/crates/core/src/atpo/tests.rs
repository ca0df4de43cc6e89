use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::pomdp::simulate::simulate_step;
use crate::pomdp::testing::random_pomdp;
use crate::pomdp::{belief_update, PomdpBuilder};
use crate::solvers::{lookahead_action, AlphaVector};

fn random_policy(ns: usize, na: usize, rng: &mut impl Rng) -> AlphaVectorPolicy {
    let count = rng.gen_range(1..5);
    let vectors = (0..count)
        .map(|_| AlphaVector {
            coeffs: (0..ns).map(|_| rng.gen_range(-10.0..10.0)).collect(),
            action: rng.gen_range(0..na),
        })
        .collect();
    AlphaVectorPolicy::new(vectors, "random").unwrap()
}

fn random_library(k: usize, max_states: usize, na: usize, nz: usize, rng: &mut impl Rng) -> ModelLibrary {
    let models: Vec<_> = (0..k)
        .map(|_| random_pomdp(rng.gen_range(1..=max_states), na, nz, 0.3, rng))
        .collect();
    let policies = models.iter().map(|m| random_policy(m.num_states(), na, rng)).collect();
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    ModelLibrary::new(models, policies, w.iter().map(|v| v / total).collect()).unwrap()
}

/// Exhaustive joint filter over (model, state sequence); returns the
/// normalized `P(M = k, X_t = x | h)` per model.
fn joint_filter(lib: &ModelLibrary, history: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut joint = Vec::new();
    for (k, m) in lib.models().iter().enumerate() {
        let ns = m.num_states();
        let mut end = vec![0.0; ns];
        for code in 0..ns.pow(history.len() as u32 + 1) {
            let mut path = Vec::new();
            let mut c = code;
            for _ in 0..=history.len() {
                path.push(c % ns);
                c /= ns;
            }
            let mut p = lib.prior()[k] * m.initial_belief().probs()[path[0]];
            for (t, &(a, z)) in history.iter().enumerate() {
                p *= m.transition_prob(a, path[t], path[t + 1]) * m.observation_prob(a, path[t + 1], z);
            }
            end[path[history.len()]] += p;
        }
        joint.push(end);
    }
    let total: f64 = joint.iter().flatten().sum();
    joint.iter().map(|row| row.iter().map(|v| v / total).collect()).collect()
}

/// History drawn from one of the library's models, so it has positive probability.
fn sample_history(lib: &ModelLibrary, len: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let k = rng.gen_range(0..lib.len());
    let m = lib.model(k);
    let mut x = sample_probs(m.initial_belief().probs(), rng);
    (0..len)
        .map(|_| {
            let a = rng.gen_range(0..m.num_actions());
            let s = simulate_step(m, x, a, rng);
            x = s.next_state;
            (a, s.observation)
        })
        .collect()
}

#[test]
fn single_model_acts_like_its_policy() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lib = random_library(1, 4, 3, 2, &mut rng);
    let mut s = PosteriorState::new(&lib);
    let mut b = lib.model(0).initial_belief().clone();
    for (a, z) in sample_history(&lib, 6, &mut rng) {
        let (act_a, mix) = act(&lib, &s, MixtureMode::Sample, &mut rng).unwrap();
        assert_eq!(act_a, lib.policy(0).action(b.probs()));
        assert_eq!(mix.iter().filter(|&&p| p == 1.0).count(), 1);
        s = update(&lib, &s, a, z, &AtpoConfig::default()).unwrap();
        b = belief_update(lib.model(0), &b, a, z).unwrap().belief;
        assert_eq!(s.posterior(), &[1.0]);
        assert_eq!(s.belief(0), &b);
    }
}

#[test]
fn degenerate_posterior_follows_first_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lib = random_library(2, 4, 3, 2, &mut rng);
    let lib = ModelLibrary::new(lib.models().to_vec(), lib.policies().to_vec(), vec![1.0, 0.0]).unwrap();
    let solo = ModelLibrary::new(vec![lib.model(0).clone()], vec![lib.policy(0).clone()], vec![1.0]).unwrap();
    let (mut s, mut t) = (PosteriorState::new(&lib), PosteriorState::new(&solo));
    let mut r1 = ChaCha8Rng::seed_from_u64(7);
    let mut r2 = r1.clone();
    for (_, z) in sample_history(&solo, 5, &mut rng) {
        let (a1, _) = act(&lib, &s, MixtureMode::Sample, &mut r1).unwrap();
        let (a2, _) = act(&solo, &t, MixtureMode::Sample, &mut r2).unwrap();
        assert_eq!(a1, a2);
        let Ok(next) = update(&solo, &t, a2, z, &AtpoConfig::default()) else { break };
        t = next;
        s = update(&lib, &s, a1, z, &AtpoConfig::default()).unwrap();
        assert_eq!(s.posterior()[0], 1.0);
        assert!(!s.active()[1]);
    }
}

#[test]
fn mixture_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let lib = random_library(3, 5, 4, 3, &mut rng);
        let mut s = PosteriorState::new(&lib);
        for (a, z) in sample_history(&lib, 3, &mut rng) {
            if let Ok(next) = update(&lib, &s, a, z, &AtpoConfig::default()) {
                s = next;
            }
        }
        let mix = mixture(&lib, &s).unwrap();
        for a in 0..4 {
            let mut expected = 0.0;
            for k in 0..3 {
                if lib.policy(k).action(s.belief(k).probs()) == a {
                    expected += s.posterior()[k];
                }
            }
            assert!((mix[a] - expected).abs() < 1e-15);
        }
        let (g, _) = act(&lib, &s, MixtureMode::Greedy, &mut rng).unwrap();
        assert!(mix.iter().all(|&p| p <= mix[g]));
    }
}

#[test]
fn identical_models_stay_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = random_pomdp(4, 2, 3, 0.2, &mut rng);
    let p = random_policy(4, 2, &mut rng);
    let lib = ModelLibrary::with_uniform_prior(vec![m.clone(), m], vec![p.clone(), p]).unwrap();
    let mut s = PosteriorState::new(&lib);
    for (a, z) in sample_history(&lib, 10, &mut rng) {
        s = update(&lib, &s, a, z, &AtpoConfig::default()).unwrap();
        assert_eq!(s.posterior(), &[0.5, 0.5]);
    }
}

fn two_state_indicator(obs_for_state0: usize) -> TabularPomdp {
    let mut b = PomdpBuilder::new(2, 1, 2);
    b.transition(0, 0, 0, 1.0).transition(0, 1, 1, 1.0);
    b.observation(0, 0, obs_for_state0, 1.0).observation(0, 1, 1 - obs_for_state0, 1.0);
    b.initial_belief(vec![1.0, 0.0]).build().unwrap()
}

#[test]
fn impossible_observation_prunes_model() {
    let models = vec![two_state_indicator(0), two_state_indicator(1)];
    let pol = AlphaVectorPolicy::new(vec![AlphaVector { coeffs: vec![0.0; 2], action: 0 }], "p").unwrap();
    let lib = ModelLibrary::with_uniform_prior(models, vec![pol.clone(), pol]).unwrap();
    let s = update(&lib, &PosteriorState::new(&lib), 0, 0, &AtpoConfig::default()).unwrap();
    assert_eq!(s.posterior(), &[1.0, 0.0]);
    assert_eq!(s.active(), &[true, false]);
    assert!(matches!(update(&lib, &s, 0, 1, &AtpoConfig::default()), Err(Error::AllModelsPruned)));

    let floor = AtpoConfig {
        likelihood_floor: Some(1e-12),
        ..Default::default()
    };
    let s = update(&lib, &PosteriorState::new(&lib), 0, 0, &floor).unwrap();
    assert!(s.active()[1] && s.posterior()[1] > 0.0 && s.posterior()[1] < 1e-11);
    assert!((s.posterior().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn step_loss_vanishes_when_acting_greedily_on_true_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lib = random_library(3, 4, 3, 2, &mut rng);
    let s = PosteriorState::new(&lib);
    for k in 0..3 {
        let a = lookahead_action(lib.model(k), lib.policy(k), s.belief(k));
        assert_eq!(step_loss(&lib, &s, a, k), 0.0);
    }
}

#[test]
fn uniform_reward_library_has_no_loss() {
    let mut models = Vec::new();
    for _ in 0..2 {
        let mut b = PomdpBuilder::new(2, 2, 1);
        for a in 0..2 {
            for x in 0..2 {
                b.transition(a, x, 1 - x, 1.0).observation(a, x, 0, 1.0).reward(x, a, -1.0);
            }
        }
        models.push(b.build().unwrap());
    }
    let pol = AlphaVectorPolicy::new(vec![AlphaVector { coeffs: vec![-20.0; 2], action: 1 }], "c").unwrap();
    let lib = ModelLibrary::with_uniform_prior(models, vec![pol.clone(), pol]).unwrap();
    let s = PosteriorState::new(&lib);
    for k in 0..2 {
        assert_eq!(model_losses(&lib, &s, k), vec![0.0, 0.0]);
        assert_eq!(step_loss(&lib, &s, 0, k), 0.0);
    }
}

#[test]
fn expected_loss_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let lib = random_library(3, 4, 3, 2, &mut rng);
        let s = PosteriorState::new(&lib);
        let truth = rng.gen_range(0..3);
        let got = expected_loss(s.posterior(), &model_losses(&lib, &s, truth));
        let mut want = 0.0;
        for k in 0..3 {
            for a in 0..3 {
                let pi = if lib.policy(k).action(s.belief(k).probs()) == a { 1.0 } else { 0.0 };
                want += s.posterior()[k] * pi * step_loss(&lib, &s, a, truth);
            }
        }
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn bound_with_zero_losses_holds() {
    let trace = vec![
        BoundStep {
            posterior: vec![0.5, 0.5],
            model_losses: vec![0.0, 0.0],
        };
        10
    ];
    let r = check_bound(&trace, &[0.5, 0.5], 100.0, 0.95);
    assert_eq!(r.left, 0.0);
    assert!(!r.violated());
    assert!(r.kl_terms.iter().all(|&k| k == 0.0));
}

#[test]
fn single_step_bound_is_dominated_by_constant() {
    let trace = vec![BoundStep {
        posterior: vec![0.9, 0.1],
        model_losses: vec![5.0, 3.0],
    }];
    let r = check_bound(&trace, &[0.0, 1.0], 1.0, 0.5);
    assert!(r.right >= (0.5f64).sqrt() * 4.0);
    assert!(!r.violated());
}

#[test]
fn comparator_outside_support_gives_infinite_right_side() {
    let trace = vec![BoundStep {
        posterior: vec![1.0, 0.0],
        model_losses: vec![1.0, 0.0],
    }];
    let r = check_bound(&trace, &[0.0, 1.0], 1.0, 0.9);
    assert_eq!(r.right, f64::INFINITY);
    assert!(!r.violated());
}

#[test]
fn posterior_concentrates_on_distinguishable_truth() {
    // three models on a noisy ring that differ in how far the state drifts per step
    let mut models = Vec::new();
    for k in 0..3 {
        let mut b = PomdpBuilder::new(3, 2, 3);
        for a in 0..2 {
            for x in 0..3 {
                b.transition(a, x, (x + k) % 3, 0.8).transition(a, x, (x + k + 1) % 3, 0.2);
                for z in 0..3 {
                    b.observation(a, x, z, if z == x { 0.6 } else { 0.2 });
                }
            }
        }
        models.push(b.build().unwrap());
    }
    let pol = AlphaVectorPolicy::new(vec![AlphaVector { coeffs: vec![0.0; 3], action: 0 }], "p").unwrap();
    let lib = ModelLibrary::with_uniform_prior(models, vec![pol; 3]).unwrap();
    let (mut at5, mut at20) = (Vec::new(), Vec::new());
    for trial in 0..32u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let truth = rng.gen_range(0..3);
        let m = lib.model(truth);
        let mut x = sample_probs(m.initial_belief().probs(), &mut rng);
        let mut s = PosteriorState::new(&lib);
        for t in 1..=20 {
            let a = rng.gen_range(0..2);
            let step = simulate_step(m, x, a, &mut rng);
            x = step.next_state;
            s = update(&lib, &s, a, step.observation, &AtpoConfig::default()).unwrap();
            if t == 5 {
                at5.push(s.posterior()[truth]);
            }
        }
        at20.push(s.posterior()[truth]);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[15] + v[16]) / 2.0
    };
    assert!(median(&mut at20) > median(&mut at5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factorized_filter_equals_joint_filter(
        seed in any::<u64>(),
        k in 1usize..=3,
        na in 1usize..=3,
        nz in 1usize..=4,
        len in 0usize..=5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lib = random_library(k, 6, na, nz, &mut rng);
        let history = sample_history(&lib, len, &mut rng);
        let mut s = PosteriorState::new(&lib);
        for &(a, z) in &history {
            s = update(&lib, &s, a, z, &AtpoConfig::default()).unwrap();
            prop_assert!((s.posterior().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let oracle = joint_filter(&lib, &history);
        for (k, row) in oracle.iter().enumerate() {
            for (x, &want) in row.iter().enumerate() {
                let got = if s.active()[k] { s.posterior()[k] * s.belief(k).probs()[x] } else { 0.0 };
                prop_assert!((got - want).abs() < 1e-8, "k={} x={} got {} want {}", k, x, got, want);
            }
        }
    }

    #[test]
    fn permuting_models_permutes_posterior(seed in any::<u64>(), len in 0usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lib = random_library(3, 5, 3, 3, &mut rng);
        let perm = [2, 0, 1];
        let plib = lib.permuted(&perm).unwrap();
        let (mut s, mut ps) = (PosteriorState::new(&lib), PosteriorState::new(&plib));
        for (a, z) in sample_history(&lib, len, &mut rng) {
            s = update(&lib, &s, a, z, &AtpoConfig::default()).unwrap();
            ps = update(&plib, &ps, a, z, &AtpoConfig::default()).unwrap();
            for (i, &j) in perm.iter().enumerate() {
                prop_assert!((ps.posterior()[i] - s.posterior()[j]).abs() < 1e-12);
            }
            let (m1, m2) = (mixture(&lib, &s).unwrap(), mixture(&plib, &ps).unwrap());
            for (x, y) in m1.iter().zip(&m2) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
