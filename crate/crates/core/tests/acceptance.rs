//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints its own PASS/FAIL line; exits non-zero if any fails.
//!
//! Desk scale: 4x4 gridworld (K=4, noise 0.2, horizon 50, 5000 beliefs,
//! tolerance 0.01, 32 trials) and 3x3 pursuit-task.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use atpo::atpo::{self as bayes, AtpoConfig, ModelLibrary, PosteriorState};
use atpo::baselines::AgentKind;
use atpo::domains::{self, DomainKind, DomainSpec, LibrarySelector, PursuitVariant};
use atpo::harness::{self, ExperimentReport, HarnessConfig, SolvedDomain, TrialResult};
use atpo::pomdp::{simulate_step, validate, PomdpBuilder, Storage, TabularMmdp, TabularPomdp};
use atpo::solvers::{
    bellman_residual, perseus_solve, value_iteration, AlphaVector, AlphaVectorPolicy, PerseusConfig, PolicyCache,
};

const TRIALS: usize = 32;
const FILTER_TOL: f64 = 1e-8;
const BOUND_TOL: f64 = 1e-6;

struct Outcome {
    id: u8,
    pass: bool,
    detail: String,
    secs: f64,
}

struct Suite {
    cache: PolicyCache,
    cfg: HarnessConfig,
    outcomes: Vec<Outcome>,
    /// ATPO trials of criteria 4 to 6, for the bound check.
    atpo_trials: Vec<TrialResult>,
    /// Every policy solved by the suite, for the monotonicity check.
    policies: Vec<AlphaVectorPolicy>,
}

impl Suite {
    fn record(&mut self, id: u8, started: Instant, pass: bool, detail: String) {
        let o = Outcome {
            id,
            pass,
            detail,
            secs: started.elapsed().as_secs_f64(),
        };
        println!("{}", line(&o));
        self.outcomes.push(o);
    }

    fn prepare(&mut self, spec: &DomainSpec) -> SolvedDomain {
        let d = harness::prepare(spec, Some(&self.cache)).expect("desk domain solves");
        self.policies.extend(d.library.policies().iter().cloned());
        d
    }
}

fn line(o: &Outcome) -> String {
    format!(
        "criterion {}: {} ({:.1}s) {}",
        o.id,
        if o.pass { "PASS" } else { "FAIL" },
        o.secs,
        o.detail
    )
}

fn desk_grid() -> DomainSpec {
    let mut s = DomainSpec::benchmark(DomainKind::Gridworld);
    s.width = 4;
    s.height = 4;
    s.epsilon = 0.2;
    s.horizon = 50;
    s.library = LibrarySelector::First(4);
    s
}

fn desk_pursuit() -> DomainSpec {
    let mut s = DomainSpec::benchmark(DomainKind::Pursuit(PursuitVariant::Task));
    s.width = 3;
    s.height = 3;
    s
}

// ---------------------------------------------------------------- criterion 1

fn random_dist(n: usize, zero_prob: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(zero_prob) { 0.0 } else { rng.gen_range(0.05..1.0) })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return w.into_iter().map(|x| x / s).collect();
        }
    }
}

fn random_model(ns: usize, na: usize, nz: usize, rng: &mut ChaCha8Rng) -> TabularPomdp {
    let mut b = PomdpBuilder::new(ns, na, nz);
    for a in 0..na {
        for x in 0..ns {
            for (y, p) in random_dist(ns, 0.3, rng).into_iter().enumerate() {
                b.transition(a, x, y, p);
            }
            for (z, p) in random_dist(nz, 0.3, rng).into_iter().enumerate() {
                b.observation(a, x, z, p);
            }
            b.reward(x, a, rng.gen_range(-1.0..1.0));
        }
    }
    b.discount(0.9).initial_belief(random_dist(ns, 0.3, rng)).build().unwrap()
}

fn placeholder_policy(m: &TabularPomdp) -> AlphaVectorPolicy {
    let v = AlphaVector {
        coeffs: vec![0.0; m.num_states()],
        action: 0,
    };
    AlphaVectorPolicy::new(vec![v], m.label()).unwrap()
}

/// `P(M = k, X_t = x, z_1..t | a_1..t)` for every t, by summing over every state path.
fn joint_by_enumeration(lib: &ModelLibrary, history: &[(usize, usize)]) -> Vec<Vec<Vec<f64>>> {
    let mut acc: Vec<Vec<Vec<f64>>> = (0..=history.len())
        .map(|_| lib.models().iter().map(|m| vec![0.0; m.num_states()]).collect())
        .collect();
    fn walk(m: &TabularPomdp, h: &[(usize, usize)], t: usize, x: usize, w: f64, out: &mut [Vec<Vec<f64>>], k: usize) {
        out[t][k][x] += w;
        if t == h.len() || w == 0.0 {
            return;
        }
        let (a, z) = h[t];
        for y in 0..m.num_states() {
            let step = m.transition_prob(a, x, y) * m.observation_prob(a, y, z);
            walk(m, h, t + 1, y, w * step, out, k);
        }
    }
    for (k, m) in lib.models().iter().enumerate() {
        for x in 0..m.num_states() {
            let w = lib.prior()[k] * m.initial_belief().probs()[x];
            walk(m, history, 0, x, w, &mut acc, k);
        }
    }
    acc
}

fn criterion_1(s: &mut Suite) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut checks = 0;
    for _ in 0..50 {
        let k = rng.gen_range(1..=3);
        let (na, nz) = (rng.gen_range(1..=3), rng.gen_range(1..=4));
        let models: Vec<TabularPomdp> = (0..k).map(|_| random_model(rng.gen_range(1..=6), na, nz, &mut rng)).collect();
        let policies = models.iter().map(placeholder_policy).collect();
        let prior = random_dist(k, 0.0, &mut rng);
        let lib = ModelLibrary::new(models, policies, prior).unwrap();

        // a history that is possible under one of the models
        let truth = rng.gen_range(0..k);
        let env = lib.model(truth);
        let mut x = atpo::pomdp::simulate::sample_probs(env.initial_belief().probs(), &mut rng);
        let len = rng.gen_range(1..=5);
        let mut history = Vec::new();
        for _ in 0..len {
            let a = rng.gen_range(0..na);
            let st = simulate_step(env, x, a, &mut rng);
            x = st.next_state;
            history.push((a, st.observation));
        }

        let joint = joint_by_enumeration(&lib, &history);
        let mut state = PosteriorState::new(&lib);
        for t in 0..=len {
            if t > 0 {
                let (a, z) = history[t - 1];
                bayes::update_in_place(&lib, &mut state, a, z, &AtpoConfig::default()).unwrap();
            }
            let total: f64 = joint[t].iter().flatten().sum();
            for kk in 0..k {
                let pk: f64 = joint[t][kk].iter().sum::<f64>() / total;
                worst = worst.max((state.posterior()[kk] - pk).abs());
                if state.posterior()[kk] > 0.0 {
                    for (xx, j) in joint[t][kk].iter().enumerate() {
                        let ours = state.posterior()[kk] * state.belief(kk).probs()[xx];
                        worst = worst.max((ours - j / total).abs());
                        checks += 1;
                    }
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    s.record(
        1,
        started,
        worst <= FILTER_TOL && secs < 10.0,
        format!("50 libraries, {checks} joint entries, max error {worst:.2e} (tol {FILTER_TOL:.0e}), {secs:.2}s (limit 10s)"),
    );
}

// ---------------------------------------------------------------- criterion 3

fn random_mmdp(rng: &mut ChaCha8Rng) -> TabularMmdp {
    let ns = rng.gen_range(3..=20);
    let agents = vec![rng.gen_range(1..=3), rng.gen_range(1..=3)];
    let joint: usize = agents.iter().product();
    let rows = (0..joint * ns)
        .map(|_| random_dist(ns, 0.5, rng).into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect())
        .collect();
    let reward = (0..joint * ns).map(|_| rng.gen_range(-10.0..10.0)).collect();
    TabularMmdp::new(ns, agents, rows, reward, rng.gen_range(0.5..0.97), "random", Storage::default()).unwrap()
}

fn fully_observable(ns: usize, na: usize, rng: &mut ChaCha8Rng) -> TabularPomdp {
    let mut b = PomdpBuilder::new(ns, na, ns);
    for a in 0..na {
        for x in 0..ns {
            for (y, p) in random_dist(ns, 0.0, rng).into_iter().enumerate() {
                b.transition(a, x, y, p);
            }
            b.observation(a, x, x, 1.0);
            b.reward(x, a, rng.gen_range(0.0..1.0));
        }
    }
    b.discount(0.9).initial_belief(vec![1.0 / ns as f64; ns]).build().unwrap()
}

fn monotone(p: &AlphaVectorPolicy) -> bool {
    p.meta.stage_stats.iter().all(|st| st.min_improvement >= -1e-9)
}

fn criterion_3(s: &mut Suite) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut residual = 0.0f64;
    for _ in 0..20 {
        let m = random_mmdp(&mut rng);
        let v = value_iteration(&m, 1e-7).unwrap();
        residual = residual.max(bellman_residual(&m, v.values()));
    }
    let mut gap = 0.0f64;
    let mut monotone_ok = true;
    for i in 0..10 {
        let m = fully_observable(rng.gen_range(3..=8), rng.gen_range(2..=3), &mut rng);
        let v = value_iteration(&TabularMmdp::from_pomdp(&m), 1e-9).unwrap();
        let p = perseus_solve(&m, &PerseusConfig::new(300, 30, 1e-4, i)).unwrap();
        monotone_ok &= monotone(&p);
        for x in 0..m.num_states() {
            let mut corner = vec![0.0; m.num_states()];
            corner[x] = 1.0;
            gap = gap.max((p.value(&corner) - v.value(x)).abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = residual <= 1e-6 && gap <= 0.1 && monotone_ok && secs < 120.0;
    s.record(
        3,
        started,
        pass,
        format!(
            "(a) max residual {residual:.2e} (<= 1e-6); (b) max corner gap {gap:.4} (<= 0.1); (c) stage monotonicity {}; {secs:.1}s (limit 120s)",
            if monotone_ok { "holds" } else { "BROKEN" }
        ),
    );
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8(s: &mut Suite) {
    let started = Instant::now();
    let expected: [(&str, &[usize], usize, usize); 11] = [
        ("gridworld", &[626], 5, 81),
        ("pursuit-task", &[626], 5, 81),
        ("pursuit-teammate", &[626], 5, 81),
        ("pursuit-both", &[626], 5, 81),
        ("power-plant", &[97, 105], 6, 6),
        ("ntu", &[241], 5, 81),
        ("overcooked", &[1730], 4, 1730),
        ("isr", &[1807], 5, 81),
        ("mit", &[2163], 5, 81),
        ("pentagon", &[2653], 5, 81),
        ("cit", &[4831], 5, 81),
    ];
    let mut bad = Vec::new();
    for (name, states, na, nz) in expected {
        let spec = DomainSpec::benchmark(DomainKind::parse(name).unwrap());
        let inst = domains::build(&spec).unwrap();
        let mut got: Vec<usize> = inst.models.iter().map(|m| m.num_states()).collect();
        got.sort();
        got.dedup();
        let dims_ok = got == states
            && inst.models.iter().all(|m| m.num_actions() == na && m.num_observations() == nz)
            && inst.models.iter().all(|m| validate(m).is_empty());
        if !dims_ok {
            bad.push(format!("{name}: states {got:?}"));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = bad.is_empty() && secs < 1800.0;
    let detail = if bad.is_empty() {
        format!("all 11 domains match their state/action/observation counts and validate; built in {secs:.2}s (limit 1800s)")
    } else {
        format!("mismatches: {}", bad.join("; "))
    };
    s.record(8, started, pass, detail);
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9(s: &mut Suite) {
    let started = Instant::now();
    let mut spec = desk_grid();
    spec.library = LibrarySelector::First(1);
    let d = s.prepare(&spec);
    let cfg = HarnessConfig::default();
    let mut identical = 0;
    for seed in 0..10 {
        let a = harness::run_trial(&d, AgentKind::Atpo, seed, &cfg).unwrap();
        let p = harness::run_trial(&d, AgentKind::Perseus, seed, &cfg).unwrap();
        if (a.actions == p.actions) && a.observations == p.observations && a.rewards == p.rewards {
            identical += 1;
        }
    }
    let plant = s.prepare(&DomainSpec::benchmark(DomainKind::PowerPlant));
    let refusal = harness::run_experiment(&plant, &[AgentKind::Bopa], 1, 0, &cfg);
    let refused = matches!(refusal, Err(atpo::Error::Configuration(_)));
    s.record(
        9,
        started,
        identical == 10 && refused,
        format!(
            "ATPO(K=1) trace-identical to informed Perseus on {identical}/10 seeds; BOPA on power-plant {}",
            if refused { "rejected with a configuration error" } else { "NOT rejected" }
        ),
    );
}

// ------------------------------------------------------------ criteria 4, 5, 7

fn ordering(report: &ExperimentReport) -> (bool, String) {
    let chain = [
        AgentKind::ValueIteration,
        AgentKind::Perseus,
        AgentKind::Atpo,
        AgentKind::RandomPicker,
        AgentKind::Random,
    ];
    let sm: Vec<_> = chain.iter().map(|&k| report.summary(k).unwrap()).collect();
    let mut ok = true;
    let mut notes = Vec::new();
    for i in 0..chain.len() {
        for j in i + 1..chain.len() {
            let (a, b) = (sm[i], sm[j]);
            let pooled = ((a.std_return.powi(2) + b.std_return.powi(2)) / 2.0).sqrt();
            if a.mean_return < b.mean_return - pooled {
                ok = false;
                notes.push(format!("{} < {} beyond pooled sd", a.agent, b.agent));
            }
        }
    }
    let strict = sm[0].mean_return > sm[4].mean_return;
    ok &= strict;
    let means: Vec<String> = sm.iter().map(|x| format!("{} {:.2}", x.agent, x.mean_return)).collect();
    let mut detail = format!("{}: {}", report.domain, means.join(" >= "));
    if !notes.is_empty() {
        detail += &format!(" [{}]", notes.join(", "));
    }
    (ok, detail)
}

fn desk_experiments(s: &mut Suite) {
    let started = Instant::now();
    let grid = s.prepare(&desk_grid());
    let report = harness::run_experiment(&grid, &AgentKind::ALL, TRIALS, 0, &s.cfg).unwrap();
    s.atpo_trials.extend(report.trials_of(AgentKind::Atpo).cloned());
    let atpo = report.summary(AgentKind::Atpo).unwrap();
    let norm = atpo.normalized.unwrap_or(f64::NAN);
    s.record(
        4,
        started,
        norm >= 70.0 && started.elapsed().as_secs_f64() < 900.0,
        format!(
            "normalized ATPO {norm:.2}% (>= 70%); ATPO {:.2} +- {:.2}, VI {:.2}, random {:.2}",
            atpo.mean_return,
            atpo.std_return,
            report.summary(AgentKind::ValueIteration).unwrap().mean_return,
            report.summary(AgentKind::Random).unwrap().mean_return
        ),
    );

    let started = Instant::now();
    let id = atpo.identification.as_ref().unwrap();
    let at20 = id.at(20);
    let at = |t: usize| format!("t={t}: mean {:.3}", id.at(t).mean_true_posterior);
    s.record(
        5,
        started,
        at20.median_true_posterior >= 0.7 && at20.argmax_fraction >= 0.75,
        format!(
            "median p(k*) at t=20 {:.3} (>= 0.7); argmax at t=20 in {:.1}% of trials (>= 75%); mean first identification step {:.2}; {}, {}",
            at20.median_true_posterior,
            100.0 * at20.argmax_fraction,
            id.mean_first_identified.unwrap_or(f64::NAN),
            at(5),
            at(10)
        ),
    );

    let started = Instant::now();
    let (grid_ok, grid_detail) = ordering(&report);
    let pursuit = s.prepare(&desk_pursuit());
    let preport = harness::run_experiment(&pursuit, &AgentKind::ALL, TRIALS, 0, &s.cfg).unwrap();
    let (p_ok, p_detail) = ordering(&preport);
    s.record(7, started, grid_ok && p_ok, format!("{grid_detail}; {p_detail}"));
}

// ---------------------------------------------------------------- criterion 6

const SCALING_KS: [usize; 3] = [2, 4, 8];
const SCALING_REPLICATES: u64 = 4;

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
fn binomial_upper_tail(n: u32, k: u32) -> f64 {
    let choose = |n: u32, r: u32| (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (k..=n).map(|r| choose(n, r)).sum::<f64>() / 2f64.powi(n as i32)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn criterion_6(s: &mut Suite) {
    let started = Instant::now();
    let agents = [AgentKind::ValueIteration, AgentKind::Random, AgentKind::Atpo];
    // scores[r][i]: replicate r (task ordering seed), library size SCALING_KS[i]
    let mut scores = vec![vec![f64::NAN; SCALING_KS.len()]; SCALING_REPLICATES as usize];
    for r in 0..SCALING_REPLICATES {
        for (i, &k) in SCALING_KS.iter().enumerate() {
            let mut spec = desk_grid();
            spec.seed = r;
            spec.library = LibrarySelector::First(k);
            let d = s.prepare(&spec);
            let report = harness::run_experiment(&d, &agents, TRIALS, 0, &s.cfg).unwrap();
            s.atpo_trials.extend(report.trials_of(AgentKind::Atpo).cloned());
            scores[r as usize][i] = report.summary(AgentKind::Atpo).unwrap().normalized.unwrap_or(f64::NAN);
        }
    }
    let medians: Vec<f64> = (0..SCALING_KS.len())
        .map(|i| median(&mut scores.iter().map(|row| row[i]).collect::<Vec<_>>()))
        .collect();
    let floor_ok = medians.iter().all(|&m| m >= 60.0);
    // one-sided sign test against an increasing trend
    let mut increases = 0;
    let mut nonzero = 0;
    for row in &scores {
        for w in row.windows(2) {
            if w[1] != w[0] {
                nonzero += 1;
                if w[1] > w[0] {
                    increases += 1;
                }
            }
        }
    }
    let p = binomial_upper_tail(nonzero, increases);
    let trend_ok = nonzero == 0 || p >= 0.2;
    let secs = started.elapsed().as_secs_f64();
    let cells: Vec<String> = SCALING_KS
        .iter()
        .zip(&medians)
        .map(|(k, m)| format!("K={k}: {m:.2}%"))
        .collect();
    s.record(
        6,
        started,
        floor_ok && trend_ok && secs < 1800.0,
        format!(
            "median normalized {} (>= 60%); {increases}/{nonzero} increases across K, sign-test p = {p:.3} (increase significant below 0.2); {SCALING_REPLICATES} task orderings",
            cells.join(", ")
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2(s: &mut Suite) {
    let started = Instant::now();
    let reports: Vec<_> = s.atpo_trials.iter().filter_map(|t| t.bound.as_ref()).collect();
    let missing = s.atpo_trials.len() - reports.len();
    let violations = reports.iter().filter(|b| b.left > b.right + BOUND_TOL).count();
    let min_slack = reports.iter().map(|b| b.slack()).fold(f64::INFINITY, f64::min);
    s.record(
        2,
        started,
        violations == 0 && missing == 0 && !reports.is_empty(),
        format!(
            "{} ATPO trajectories from criteria 4-6, {violations} violations (tol {BOUND_TOL:.0e}), smallest slack {min_slack:.3e}",
            reports.len()
        ),
    );
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    // honour name filters passed through `cargo test <filter>`
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }

    let cache_dir = tempfile::tempdir().unwrap();
    let mut suite = Suite {
        cache: PolicyCache::new(cache_dir.path()),
        cfg: HarnessConfig {
            record_bound: true,
            ..Default::default()
        },
        outcomes: Vec::new(),
        atpo_trials: Vec::new(),
        policies: Vec::new(),
    };
    let started = Instant::now();
    criterion_1(&mut suite);
    criterion_8(&mut suite);
    criterion_9(&mut suite);
    desk_experiments(&mut suite);
    criterion_6(&mut suite);
    criterion_2(&mut suite);

    // stage monotonicity must also hold on every desk solve
    let broken = suite.policies.iter().filter(|p| !monotone(p)).count();
    criterion_3(&mut suite);
    if broken > 0 {
        let o = suite.outcomes.last_mut().unwrap();
        o.pass = false;
        o.detail += &format!("; {broken} desk solves not monotone");
    } else {
        let n = suite.policies.len();
        suite.outcomes.last_mut().unwrap().detail += &format!("; monotone on all {n} desk solves");
    }

    suite.outcomes.sort_by_key(|o| o.id);
    println!("\nacceptance summary ({:.1}s)", started.elapsed().as_secs_f64());
    for o in &suite.outcomes {
        println!("{}", line(o));
    }
    let failed = suite.outcomes.iter().filter(|o| !o.pass).count();
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all {} criteria passed", suite.outcomes.len());
}
