//! Text format for alpha-vector policies and a content-addressed cache.
//!
//! ```text
//! atpo-policy 1
//! label gridworld/goals=0-15
//! hash <sha256 of the model text>
//! settings beliefs=5000 horizon=50 tolerance=0.01 max_stages=500 seed=7
//! solve stages=41 residual=0.0093 beliefs=5000
//! vectors 2 states 3
//! 0 -1.5 2 0.25
//! 4 0 0 1
//! end
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::alpha::{AlphaVector, AlphaVectorPolicy, SolverMeta};
use super::perseus::{perseus_solve, PerseusConfig};
use crate::error::{Error, Result};
use crate::pomdp::format::model_to_string;
use crate::pomdp::TabularPomdp;

const HEADER: &str = "atpo-policy 1";

pub fn write_policy<W: Write>(policy: &AlphaVectorPolicy, settings: &str, out: &mut W) -> std::io::Result<()> {
    let m = &policy.meta;
    writeln!(out, "{HEADER}")?;
    writeln!(out, "label {}", policy.model_label)?;
    writeln!(out, "hash {}", policy.model_hash)?;
    writeln!(out, "settings {settings}")?;
    writeln!(out, "solve stages={} residual={} beliefs={}", m.stages, m.residual, m.belief_set_size)?;
    writeln!(out, "vectors {} states {}", policy.vectors().len(), policy.num_states())?;
    for v in policy.vectors() {
        write!(out, "{}", v.action)?;
        for c in &v.coeffs {
            write!(out, " {c}")?;
        }
        writeln!(out)?;
    }
    writeln!(out, "end")
}

fn field(line: Option<(usize, String)>, key: &str) -> Result<(usize, String)> {
    let (n, text) = line.ok_or_else(|| Error::parse(0, format!("missing `{key}` line")))?;
    match text.strip_prefix(key) {
        Some(rest) if rest.is_empty() || rest.starts_with(' ') => Ok((n, rest.trim_start().to_string())),
        _ => Err(Error::parse(n, format!("expected `{key}`"))),
    }
}

fn kv<T: std::str::FromStr>(n: usize, text: &str, key: &str) -> Result<T> {
    text.split_whitespace()
        .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::parse(n, format!("missing `{key}=`")))?
        .parse()
        .map_err(|_| Error::parse(n, format!("bad value for `{key}`")))
}

fn num<T: std::str::FromStr>(n: usize, tok: Option<&str>) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::parse(n, "expected a number"))
}

/// Reads a policy; returns it with the settings line as written.
pub fn read_policy<R: BufRead>(input: R) -> Result<(AlphaVectorPolicy, String)> {
    let mut lines = input.lines().enumerate().map(|(i, l)| l.map(|l| (i + 1, l)));
    let mut next = || -> Result<Option<(usize, String)>> {
        lines.next().transpose().map_err(|e| Error::io("<policy>", e))
    };
    match next()? {
        Some((_, l)) if l.trim_end() == HEADER => {}
        Some((n, _)) => return Err(Error::parse(n, format!("expected `{HEADER}`"))),
        None => return Err(Error::parse(1, "empty policy file")),
    }
    let (_, label) = field(next()?, "label")?;
    let (_, hash) = field(next()?, "hash")?;
    let (_, settings) = field(next()?, "settings")?;
    let (sn, solve) = field(next()?, "solve")?;
    let (vn, dims) = field(next()?, "vectors")?;
    let mut toks = dims.split_whitespace();
    let count: usize = num(vn, toks.next())?;
    if toks.next() != Some("states") {
        return Err(Error::parse(vn, "expected `vectors N states S`"));
    }
    let states: usize = num(vn, toks.next())?;
    let mut vectors = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, line) = next()?.ok_or_else(|| Error::parse(0, "truncated vector list"))?;
        let mut toks = line.split_whitespace();
        let action = num(n, toks.next())?;
        let coeffs = toks.map(|t| num(n, Some(t))).collect::<Result<Vec<f64>>>()?;
        if coeffs.len() != states {
            return Err(Error::parse(n, format!("expected {states} coefficients, found {}", coeffs.len())));
        }
        vectors.push(AlphaVector { coeffs, action });
    }
    match next()? {
        Some((_, l)) if l.trim() == "end" => {}
        Some((n, _)) => return Err(Error::parse(n, "expected `end`")),
        None => return Err(Error::parse(0, "missing `end`")),
    }
    let mut policy = AlphaVectorPolicy::new(vectors, label)?;
    policy.model_hash = hash;
    policy.meta = SolverMeta {
        belief_set_size: kv(sn, &solve, "beliefs")?,
        horizon: kv(sn, &settings, "horizon").unwrap_or(0),
        tolerance: kv(sn, &settings, "tolerance").unwrap_or(0.0),
        max_stages: kv(sn, &settings, "max_stages").unwrap_or(0),
        seed: kv(sn, &settings, "seed").unwrap_or(0),
        stages: kv(sn, &solve, "stages")?,
        residual: kv(sn, &solve, "residual")?,
        stage_stats: Vec::new(),
    };
    Ok((policy, settings))
}

pub fn save_policy(policy: &AlphaVectorPolicy, settings: &str, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_policy(policy, settings, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_policy(path: &Path) -> Result<AlphaVectorPolicy> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_policy(BufReader::new(f)).map(|(p, _)| p)
}

/// Solved policies on disk, keyed by model content and solver settings.
#[derive(Debug, Clone)]
pub struct PolicyCache {
    dir: PathBuf,
}

impl PolicyCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        PolicyCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(model: &TabularPomdp, cfg: &PerseusConfig) -> String {
        let mut h = Sha256::new();
        h.update(model_to_string(model).as_bytes());
        h.update(b"\n");
        h.update(cfg.settings_string().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn path_for(&self, model: &TabularPomdp, cfg: &PerseusConfig) -> PathBuf {
        self.dir.join(format!("{}.policy", Self::key(model, cfg)))
    }

    pub fn get(&self, model: &TabularPomdp, cfg: &PerseusConfig) -> Option<AlphaVectorPolicy> {
        let path = self.path_for(model, cfg);
        match load_policy(&path) {
            Ok(p) if p.num_states() == model.num_states() => Some(p),
            Ok(_) => None,
            Err(e) => {
                if path.exists() {
                    log::warn!("ignoring unreadable cached policy {}: {e}", path.display());
                }
                None
            }
        }
    }

    pub fn put(&self, model: &TabularPomdp, cfg: &PerseusConfig, policy: &AlphaVectorPolicy) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path_for(model, cfg);
        // write-then-rename so concurrent readers never see a partial file
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        save_policy(policy, &cfg.settings_string(), &tmp)?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn get_or_solve(&self, model: &TabularPomdp, cfg: &PerseusConfig) -> Result<AlphaVectorPolicy> {
        if let Some(p) = self.get(model, cfg) {
            log::debug!("cache hit for {}", model.label());
            return Ok(p);
        }
        let p = perseus_solve(model, cfg)?;
        self.put(model, cfg, &p)?;
        Ok(p)
    }
}
