use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use atpo::atpo::{AtpoConfig, MixtureMode};
use atpo::baselines::AgentKind;
use atpo::domains::{self, DomainKind, DomainSpec};
use atpo::harness::{self, report::Manifest, HarnessConfig};
use atpo::pomdp::{save_model, validate};
use atpo::solvers::PolicyCache;

#[derive(Parser)]
#[command(name = "atpo", version, about = "Ad hoc teamwork experiments on tabular POMDP libraries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a domain library and solve every model into the policy cache.
    Solve {
        #[command(flatten)]
        domain: DomainArgs,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Run seeded trials and write result tables.
    Run {
        #[command(flatten)]
        domain: DomainArgs,
        #[command(flatten)]
        cache: CacheArgs,
        #[command(flatten)]
        trials: TrialArgs,
        /// Agents to run (repeatable); all supported agents by default.
        #[arg(long = "agent", value_name = "NAME")]
        agents: Vec<String>,
        /// Record the cumulative-loss bound check on ATPO trials.
        #[arg(long)]
        bound: bool,
        #[arg(long, short, default_value = "results")]
        out: PathBuf,
    },
    /// Score ATPO on growing gridworld libraries.
    Scale {
        #[command(flatten)]
        domain: DomainArgs,
        #[command(flatten)]
        cache: CacheArgs,
        #[command(flatten)]
        trials: TrialArgs,
        /// Library sizes, e.g. `2,4,8` or `2..=32`.
        #[arg(long, default_value = "2..=32")]
        k: String,
        #[arg(long, short, default_value = "results")]
        out: PathBuf,
    },
    /// Write the compiled models of a domain in the text model format.
    Export {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Build domains, check every model, and print their sizes.
    Validate {
        /// Domain spec file; every benchmark domain at full size when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, conflicts_with = "spec")]
        domain: Option<String>,
    },
}

#[derive(Args)]
struct DomainArgs {
    /// Domain spec file (TOML).
    #[arg(long, required_unless_present = "domain")]
    spec: Option<PathBuf>,
    /// Benchmark domain name with its default settings.
    #[arg(long, conflicts_with = "spec")]
    domain: Option<String>,
}

impl DomainArgs {
    fn load(&self) -> Result<DomainSpec> {
        match (&self.spec, &self.domain) {
            (Some(p), _) => DomainSpec::load(p).with_context(|| format!("reading {}", p.display())),
            (None, Some(d)) => Ok(DomainSpec::benchmark(DomainKind::parse(d)?)),
            (None, None) => bail!("give --spec or --domain"),
        }
    }
}

#[derive(Args)]
struct CacheArgs {
    /// Directory of solved policies.
    #[arg(long, env = "ATPO_CACHE_DIR", default_value = ".atpo-cache")]
    cache_dir: PathBuf,
    /// Solve from scratch without reading or writing the cache.
    #[arg(long)]
    no_cache: bool,
}

impl CacheArgs {
    fn cache(&self) -> Option<PolicyCache> {
        (!self.no_cache).then(|| PolicyCache::new(&self.cache_dir))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mixture {
    Sample,
    Greedy,
}

impl From<Mixture> for MixtureMode {
    fn from(m: Mixture) -> Self {
        match m {
            Mixture::Sample => MixtureMode::Sample,
            Mixture::Greedy => MixtureMode::Greedy,
        }
    }
}

#[derive(Args)]
struct TrialArgs {
    #[arg(long, default_value_t = 32)]
    trials: usize,
    /// Trial i uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// How ATPO draws from its action mixture.
    #[arg(long, value_enum, default_value = "sample")]
    mixture: Mixture,
    #[arg(long, value_enum, default_value = "sample")]
    bopa_mixture: Mixture,
    /// Keep models whose evidence drops below this value instead of pruning them.
    #[arg(long)]
    likelihood_floor: Option<f64>,
}

impl TrialArgs {
    fn config(&self, bound: bool) -> HarnessConfig {
        HarnessConfig {
            atpo: AtpoConfig {
                mode: self.mixture.into(),
                likelihood_floor: self.likelihood_floor,
            },
            bopa_mode: self.bopa_mixture.into(),
            record_bound: bound,
        }
    }
}

fn parse_k(text: &str) -> Result<Vec<usize>> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..=") {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..=b).collect());
    }
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().with_context(|| format!("bad library size `{s}`")))
        .collect()
}

fn solve(domain: &DomainArgs, cache: &CacheArgs) -> Result<()> {
    let spec = domain.load()?;
    let solved = harness::prepare(&spec, cache.cache().as_ref())?;
    println!(
        "{}: {} models, built in {:.2}s, solved in {:.2}s",
        solved.name(),
        solved.library.len(),
        solved.build_time.as_secs_f64(),
        solved.solve_time.as_secs_f64()
    );
    println!("{:>5} {:>8} {:>8} {:>7} {:>10}  label", "model", "states", "vectors", "stages", "residual");
    for k in 0..solved.library.len() {
        let (m, p) = (solved.library.model(k), solved.library.policy(k));
        println!(
            "{:>5} {:>8} {:>8} {:>7} {:>10.2e}  {}",
            k,
            m.num_states(),
            p.vectors().len(),
            p.meta.stages,
            p.meta.residual,
            m.label()
        );
    }
    Ok(())
}

fn run(domain: &DomainArgs, cache: &CacheArgs, trials: &TrialArgs, agents: &[String], bound: bool, out: &Path) -> Result<()> {
    let spec = domain.load()?;
    let solved = harness::prepare(&spec, cache.cache().as_ref())?;
    let kinds = if agents.is_empty() {
        let ok = harness::supported_agents(&AgentKind::ALL, &solved);
        for k in AgentKind::ALL.iter().filter(|k| !ok.contains(k)) {
            log::warn!("skipping {k}: not supported on {}", solved.name());
        }
        ok
    } else {
        agents.iter().map(|a| AgentKind::parse(a)).collect::<atpo::Result<Vec<_>>>()?
    };
    let cfg = trials.config(bound);
    let started = Instant::now();
    let report = harness::run_experiment(&solved, &kinds, trials.trials, trials.seed, &cfg)?;
    let manifest = Manifest::new(&solved, &kinds, trials.trials, trials.seed, &cfg);
    let files = harness::emit_reports(&report, Some(&manifest), out)?;

    println!(
        "{} ({} models, horizon {}, {} trials, {:.1}s)",
        report.domain,
        report.num_models,
        report.horizon,
        trials.trials,
        started.elapsed().as_secs_f64()
    );
    println!("{:<14} {:>10} {:>9} {:>11}", "agent", "return", "std", "normalized");
    for s in &report.summaries {
        let norm = s.normalized.map_or("-".to_string(), |v| format!("{v:.2}%"));
        println!("{:<14} {:>10.2} {:>9.2} {:>11}", s.agent.name(), s.mean_return, s.std_return, norm);
    }
    if bound {
        let violations = report.trials.iter().filter_map(|t| t.bound.as_ref()).filter(|b| b.violated()).count();
        println!("bound violations: {violations}");
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn scale(domain: &DomainArgs, cache: &CacheArgs, trials: &TrialArgs, k: &str, out: &Path) -> Result<()> {
    let spec = domain.load()?;
    if spec.kind != DomainKind::Gridworld {
        bail!("library scaling needs a gridworld spec, got {}", spec.kind);
    }
    let ks = parse_k(k)?;
    let rows = harness::run_library_scaling(
        &spec,
        &ks,
        trials.trials,
        trials.seed,
        cache.cache().as_ref(),
        &trials.config(false),
    )?;
    println!("{:>4} {:>10} {:>10} {:>10} {:>11}", "K", "atpo", "vi", "random", "normalized");
    for r in &rows {
        let norm = r.normalized.map_or("-".to_string(), |v| format!("{v:.2}%"));
        println!("{:>4} {:>10.2} {:>10.2} {:>10.2} {:>11}", r.k, r.atpo_mean, r.vi_mean, r.random_mean, norm);
    }
    let path = out.join("scaling.csv");
    harness::write_scaling(&rows, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn export(domain: &DomainArgs, out: &Path) -> Result<()> {
    let spec = domain.load()?;
    let inst = domains::build(&spec)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("spec.toml"), spec.to_toml())?;
    for (k, m) in inst.models.iter().enumerate() {
        let path = out.join(format!("model_{k:02}.pomdp"));
        save_model(m, &path)?;
        println!("wrote {} ({})", path.display(), m.label());
    }
    Ok(())
}

fn check(spec: &DomainSpec) -> Result<bool> {
    let started = Instant::now();
    let inst = domains::build(spec)?;
    let m0 = &inst.models[0];
    let mut states: Vec<String> = inst.models.iter().map(|m| m.num_states().to_string()).collect();
    states.dedup();
    let mut ok = true;
    for m in &inst.models {
        for v in validate(m) {
            ok = false;
            println!("  {}: {v}", m.label());
        }
    }
    println!(
        "{:<17} K={:<3} |X|={:<10} |A|={:<3} |Z|={:<5} {:>7.2}s  {}",
        spec.kind.to_string(),
        inst.len(),
        states.join("/"),
        m0.num_actions(),
        m0.num_observations(),
        started.elapsed().as_secs_f64(),
        if ok { "ok" } else { "INVALID" }
    );
    Ok(ok)
}

fn validate_cmd(spec: Option<&Path>, domain: Option<&str>) -> Result<()> {
    let specs = match (spec, domain) {
        (Some(p), _) => vec![DomainSpec::load(p)?],
        (None, Some(d)) => vec![DomainSpec::benchmark(DomainKind::parse(d)?)],
        (None, None) => DomainKind::all().into_iter().map(DomainSpec::benchmark).collect(),
    };
    let mut ok = true;
    for s in &specs {
        ok &= check(s)?;
    }
    if !ok {
        bail!("some models failed validation");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Solve { domain, cache } => solve(&domain, &cache),
        Command::Run {
            domain,
            cache,
            trials,
            agents,
            bound,
            out,
        } => run(&domain, &cache, &trials, &agents, bound, &out),
        Command::Scale {
            domain,
            cache,
            trials,
            k,
            out,
        } => scale(&domain, &cache, &trials, &k, &out),
        Command::Export { domain, out } => export(&domain, &out),
        Command::Validate { spec, domain } => validate_cmd(spec.as_deref(), domain.as_deref()),
    }
}
