use std::sync::OnceLock;

use super::report::*;
use super::*;
use crate::domains::{DomainKind, PursuitVariant};
use crate::pomdp::{PomdpBuilder, TabularPomdp};

fn small_grid() -> DomainSpec {
    let mut spec = DomainSpec::benchmark(DomainKind::Gridworld);
    spec.width = 3;
    spec.height = 3;
    spec.horizon = 15;
    spec.library = LibrarySelector::First(2);
    spec.solver.beliefs = 150;
    spec
}

fn solved_grid() -> &'static SolvedDomain {
    static CELL: OnceLock<SolvedDomain> = OnceLock::new();
    CELL.get_or_init(|| prepare(&small_grid(), None).unwrap())
}

fn toy_domain(models: Vec<TabularPomdp>, horizon: usize) -> SolvedDomain {
    let mut spec = small_grid();
    spec.horizon = horizon;
    spec.solver.beliefs = 50;
    solve_instance(DomainInstance { spec, models }, None).unwrap()
}

/// Two states, fully observed; `switch` moves 0 -> 1 and state 1 pays 1 per step.
fn switch_toy() -> TabularPomdp {
    let mut b = PomdpBuilder::new(2, 2, 2);
    for x in 0..2 {
        b.transition(0, x, x, 1.0).transition(1, x, 1 - x, 1.0);
        for a in 0..2 {
            b.observation(a, x, x, 1.0).reward(x, a, x as f64);
        }
    }
    b.discount(0.9).initial_belief(vec![1.0, 0.0]).build().unwrap()
}

#[test]
fn one_action_random_trial_is_determined() {
    let mut b = PomdpBuilder::new(3, 1, 1);
    for x in 0..3 {
        b.transition(0, x, (x + 1) % 3, 1.0).observation(0, x, 0, 1.0).reward(x, 0, [2.0, -1.0, 5.0][x]);
    }
    let m = b.discount(0.9).initial_belief(vec![1.0, 0.0, 0.0]).build().unwrap();
    let d = toy_domain(vec![m], 7);
    for seed in [0, 9, 123] {
        let r = run_trial(&d, AgentKind::Random, seed, &HarnessConfig::default()).unwrap();
        assert_eq!(r.rewards, vec![2.0, -1.0, 5.0, 2.0, -1.0, 5.0, 2.0]);
        assert_eq!(r.total, 14.0);
        assert!(!r.has_posterior());
    }
}

#[test]
fn informed_perseus_matches_hand_rollout() {
    let d = toy_domain(vec![switch_toy()], 5);
    let r = run_trial(&d, AgentKind::Perseus, 3, &HarnessConfig::default()).unwrap();
    // switch once, then stay
    assert_eq!(r.actions, vec![1, 0, 0, 0, 0]);
    assert_eq!(r.rewards, vec![0.0, 1.0, 1.0, 1.0, 1.0]);
    assert_eq!(r.total, 4.0);
}

#[test]
fn trials_are_deterministic_per_seed() {
    let d = solved_grid();
    let cfg = HarnessConfig {
        record_bound: true,
        ..Default::default()
    };
    for kind in AgentKind::ALL {
        let a = run_trial(d, kind, 42, &cfg).unwrap();
        let b = run_trial(d, kind, 42, &cfg).unwrap();
        assert_eq!(a, b, "{kind}");
        assert_eq!(a.rewards.len(), d.spec().horizon);
        assert_eq!(a.total, a.rewards.iter().sum::<f64>());
    }
}

#[test]
fn agents_share_the_environment_draw() {
    let d = solved_grid();
    let cfg = HarnessConfig::default();
    for seed in 0..8 {
        let runs: Vec<TrialResult> = AgentKind::ALL.iter().map(|&k| run_trial(d, k, seed, &cfg).unwrap()).collect();
        assert!(runs.iter().all(|r| (r.true_model, r.initial_state) == (runs[0].true_model, runs[0].initial_state)));
    }
}

#[test]
fn posterior_traces_cover_every_step() {
    let d = solved_grid();
    let r = run_trial(d, AgentKind::Atpo, 5, &HarnessConfig::default()).unwrap();
    assert_eq!(r.posterior_trace.len(), d.spec().horizon + 1);
    assert_eq!(r.posterior_trace[0], vec![0.5, 0.5]);
    assert_eq!(r.likelihood_trace.len(), d.spec().horizon);
    for p in &r.posterior_trace {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert!(r.bound.is_none());
}

#[test]
fn identification_helpers() {
    let r = TrialResult {
        domain: "toy".into(),
        agent: AgentKind::Atpo,
        seed: 0,
        true_model: 1,
        initial_state: 0,
        actions: vec![0; 3],
        observations: vec![0; 3],
        rewards: vec![0.0; 3],
        total: 0.0,
        posterior_trace: vec![vec![0.5, 0.5], vec![0.6, 0.4], vec![0.3, 0.7], vec![0.1, 0.9]],
        likelihood_trace: vec![],
        bound: None,
        wall_time: Duration::ZERO,
    };
    assert_eq!(r.first_identified(), Some(2));
    assert_eq!(r.identified_at(0), Some(false));
    assert_eq!(r.identified_at(50), Some(true));
    assert_eq!(r.true_posterior_at(20), Some(0.9));
    assert_eq!(r.entropy_trace()[0], std::f64::consts::LN_2);
}

#[test]
fn bound_holds_on_recorded_trials() {
    let d = solved_grid();
    let cfg = HarnessConfig {
        record_bound: true,
        ..Default::default()
    };
    for seed in 0..6 {
        let r = run_trial(d, AgentKind::Atpo, seed, &cfg).unwrap();
        let b = r.bound.expect("ATPO records the bound");
        assert_eq!(b.horizon, d.spec().horizon);
        assert!(!b.violated());
    }
    assert!(run_trial(d, AgentKind::Perseus, 0, &cfg).unwrap().bound.is_none());
}

#[test]
fn aggregation_ignores_trial_order() {
    let d = solved_grid();
    let report = run_experiment(d, &[AgentKind::Atpo, AgentKind::Random], 6, 10, &HarnessConfig::default()).unwrap();
    let mut shuffled = report.trials.clone();
    shuffled.reverse();
    shuffled.swap(0, 4);
    let again = ExperimentReport::from_trials(report.domain.clone(), report.horizon, report.num_models, shuffled);
    assert_eq!(again, report);
}

#[test]
fn single_trial_has_zero_spread() {
    let d = solved_grid();
    let report = run_experiment(d, &[AgentKind::Perseus], 1, 0, &HarnessConfig::default()).unwrap();
    let s = report.summary(AgentKind::Perseus).unwrap();
    assert_eq!((s.trials, s.std_return), (1, 0.0));
    assert_eq!(s.normalized, None);
}

#[test]
fn repeated_experiments_agree() {
    let d = solved_grid();
    let cfg = HarnessConfig::default();
    let a = run_experiment(d, &[AgentKind::Atpo], 4, 7, &cfg).unwrap();
    let b = run_experiment(d, &[AgentKind::Atpo], 4, 7, &cfg).unwrap();
    assert_eq!(a.summaries, b.summaries);
}

#[test]
fn normalization_anchors() {
    let d = solved_grid();
    let agents = [AgentKind::ValueIteration, AgentKind::Atpo, AgentKind::Random];
    let report = run_experiment(d, &agents, 8, 0, &HarnessConfig::default()).unwrap();
    let pct = |k| report.summary(k).unwrap().normalized.unwrap();
    assert!((pct(AgentKind::ValueIteration) - 100.0).abs() < 1e-9);
    assert!(pct(AgentKind::Random).abs() < 1e-9);
    assert_eq!(normalize(5.0, 10.0, 0.0), Some(50.0));
    assert_eq!(normalize(5.0, 1.0, 1.0), None);
}

#[test]
fn identification_summary_matches_trials() {
    let d = solved_grid();
    let report = run_experiment(d, &[AgentKind::Atpo], 5, 0, &HarnessConfig::default()).unwrap();
    let id = report.summary(AgentKind::Atpo).unwrap().identification.as_ref().unwrap();
    assert_eq!(id.steps.len(), d.spec().horizon + 1);
    let at10: Vec<f64> = report.trials.iter().map(|t| t.true_posterior_at(10).unwrap()).collect();
    assert!((id.at(10).mean_true_posterior - at10.iter().sum::<f64>() / 5.0).abs() < 1e-12);
    assert!(id.at(0).mean_entropy > id.at(15).mean_entropy - 1e-12);
}

#[test]
fn bopa_is_refused_on_mixed_state_spaces() {
    let mut spec = DomainSpec::benchmark(DomainKind::PowerPlant);
    spec.solver.beliefs = 20;
    spec.solver.tolerance = 1.0;
    let d = prepare(&spec, None).unwrap();
    let err = run_experiment(&d, &[AgentKind::Atpo, AgentKind::Bopa], 1, 0, &HarnessConfig::default());
    assert!(matches!(err, Err(Error::Configuration(_))));
    assert_eq!(
        supported_agents(&AgentKind::ALL, &d),
        vec![
            AgentKind::ValueIteration,
            AgentKind::Perseus,
            AgentKind::Atpo,
            AgentKind::RandomPicker,
            AgentKind::Random
        ]
    );
}

#[test]
fn single_task_scaling_equals_informed_perseus() {
    let mut spec = small_grid();
    spec.library = LibrarySelector::First(1);
    let cfg = HarnessConfig::default();
    let rows = run_library_scaling(&spec, &[1], 6, 3, None, &cfg).unwrap();
    let d = prepare(&spec, None).unwrap();
    let perseus = run_experiment(&d, &[AgentKind::Perseus], 6, 3, &cfg).unwrap();
    assert_eq!(rows[0].atpo_mean, perseus.summary(AgentKind::Perseus).unwrap().mean_return);
    assert!(run_library_scaling(&spec, &[0], 1, 0, None, &cfg).is_err());
}

#[test]
fn scaling_reuses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = PolicyCache::new(dir.path());
    let mut spec = small_grid();
    spec.horizon = 5;
    let rows = run_library_scaling(&spec, &[1, 2], 2, 0, Some(&cache), &HarnessConfig::default()).unwrap();
    assert_eq!(rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 2]);
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(files, 2, "nested libraries share solved tasks");
}

fn header(path: &std::path::Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn empty_report_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let report = ExperimentReport::from_trials("gridworld".into(), 10, 2, vec![]);
    let files = emit_reports(&report, None, dir.path()).unwrap();
    assert_eq!(files.len(), 5);
    for f in &files {
        let text = header(f);
        assert_eq!(text.lines().count(), 1, "{}", f.display());
    }
    write_scaling(&[], &dir.path().join("scaling.csv")).unwrap();
    assert_eq!(header(&dir.path().join("scaling.csv")).lines().count(), 1);
}

#[test]
fn table_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let report = ExperimentReport::from_trials("gridworld".into(), 10, 2, vec![]);
    emit_reports(&report, None, dir.path()).unwrap();
    write_scaling(&[], &dir.path().join("scaling.csv")).unwrap();
    let golden = [
        ("summary.csv", "domain,agent,trials,mean_return,std_return,normalized_pct,identified_fraction,mean_first_identified"),
        ("identification.csv", "domain,agent,t,mean_true_posterior,median_true_posterior,argmax_fraction,mean_entropy"),
        ("trials.csv", "domain,agent,seed,true_model,initial_state,steps,total_return,wall_ms"),
        ("traces.csv", "domain,agent,seed,t,action,observation,reward,entropy,posterior,likelihoods"),
        ("bound.csv", "domain,agent,seed,horizon,left,right,slack,violated"),
        ("scaling.csv", "k,trials,atpo_mean,atpo_std,vi_mean,random_mean,normalized_pct"),
    ];
    for (file, cols) in golden {
        assert_eq!(header(&dir.path().join(file)).trim_end(), cols, "{file}");
    }
}

#[test]
fn reports_read_back() {
    let d = solved_grid();
    let cfg = HarnessConfig {
        record_bound: true,
        ..Default::default()
    };
    let agents = [AgentKind::ValueIteration, AgentKind::Atpo, AgentKind::Random];
    let report = run_experiment(d, &agents, 3, 0, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = Manifest::new(d, &agents, 3, 0, &cfg);
    emit_reports(&report, Some(&manifest), dir.path()).unwrap();

    assert_eq!(read_summary(&dir.path().join("summary.csv")).unwrap(), report.summary_rows());
    assert_eq!(read_trials(&dir.path().join("trials.csv")).unwrap(), report.trial_rows());
    let m = Manifest::from_toml(&std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(m, manifest);
    assert_eq!(DomainSpec::from_toml(&m.spec).unwrap(), *d.spec());
    assert_eq!(m.models.len(), 2);

    let traces = std::fs::read_to_string(dir.path().join("traces.csv")).unwrap();
    assert_eq!(traces.lines().count(), 1 + 3 * 3 * d.spec().horizon);
    let bound = std::fs::read_to_string(dir.path().join("bound.csv")).unwrap();
    assert_eq!(bound.lines().count(), 1 + 3);
}

#[test]
fn pursuit_runs_end_to_end() {
    let mut spec = DomainSpec::benchmark(DomainKind::Pursuit(PursuitVariant::Task));
    spec.width = 3;
    spec.height = 3;
    spec.horizon = 10;
    spec.library = LibrarySelector::First(2);
    spec.solver.beliefs = 100;
    let d = prepare(&spec, None).unwrap();
    let report = run_experiment(&d, &AgentKind::ALL, 2, 0, &HarnessConfig::default()).unwrap();
    assert_eq!(report.summaries.len(), 6);
}

mod order {
    use proptest::prelude::*;

    use super::*;

    fn synthetic(n: usize) -> Vec<TrialResult> {
        (0..n)
            .map(|i| {
                let agent = AgentKind::ALL[i % 3 + 1];
                let p = (i % 7) as f64 / 7.0;
                let posterior_trace = if agent == AgentKind::Atpo {
                    vec![vec![0.5, 0.5], vec![p, 1.0 - p]]
                } else {
                    vec![]
                };
                TrialResult {
                    domain: "toy".into(),
                    agent,
                    seed: i as u64,
                    true_model: i % 2,
                    initial_state: 0,
                    actions: vec![0],
                    observations: vec![0],
                    rewards: vec![(i * 37 % 11) as f64 * 0.1],
                    total: (i * 37 % 11) as f64 * 0.1,
                    posterior_trace,
                    likelihood_trace: vec![],
                    bound: None,
                    wall_time: Duration::from_millis(i as u64),
                }
            })
            .collect()
    }

    proptest! {
        #[test]
        fn aggregation_is_order_free(shuffled in Just(synthetic(24)).prop_shuffle()) {
            let base = ExperimentReport::from_trials("toy".into(), 1, 2, synthetic(24));
            let again = ExperimentReport::from_trials("toy".into(), 1, 2, shuffled);
            prop_assert_eq!(again, base);
        }
    }
}
