//! Versioned plain-text model format.
//!
//! ```text
//! atpo-pomdp 1
//! label <free text to end of line>
//! states <n>
//! actions <n>
//! observations <n>
//! discount <real>
//! T <count>
//! <action> <state> <next state> <prob>      (one line per non-zero entry)
//! O <count>
//! <action> <next state> <observation> <prob>
//! R <count>
//! <state> <action> <reward>
//! B <count>
//! <state> <prob>
//! end
//! ```
//!
//! Reals are written in Rust's shortest round-trip decimal form, so a
//! write/read cycle reproduces every value bit for bit.

use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::model::{PomdpBuilder, TabularPomdp};
use super::table::Storage;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "atpo-pomdp";

pub fn write_model<W: Write>(model: &TabularPomdp, out: &mut W) -> std::io::Result<()> {
    let (ns, na) = (model.num_states(), model.num_actions());
    writeln!(out, "{MAGIC} {MODEL_FORMAT_VERSION}")?;
    writeln!(out, "label {}", model.label().replace('\n', " "))?;
    writeln!(out, "states {ns}")?;
    writeln!(out, "actions {na}")?;
    writeln!(out, "observations {}", model.num_observations())?;
    writeln!(out, "discount {}", model.discount())?;

    let trans: Vec<(usize, usize, usize, f64)> = (0..na)
        .flat_map(|a| (0..ns).flat_map(move |x| model.transition_row(a, x).iter().map(move |(y, p)| (a, x, y, p))))
        .collect();
    writeln!(out, "T {}", trans.len())?;
    for (a, x, y, p) in trans {
        writeln!(out, "{a} {x} {y} {p}")?;
    }
    let obs: Vec<(usize, usize, usize, f64)> = (0..na)
        .flat_map(|a| (0..ns).flat_map(move |y| model.observation_row(a, y).iter().map(move |(z, p)| (a, y, z, p))))
        .collect();
    writeln!(out, "O {}", obs.len())?;
    for (a, y, z, p) in obs {
        writeln!(out, "{a} {y} {z} {p}")?;
    }
    let rewards: Vec<(usize, usize, f64)> = (0..ns)
        .flat_map(|x| (0..na).map(move |a| (x, a, model.reward(x, a))))
        .filter(|&(_, _, r)| r != 0.0)
        .collect();
    writeln!(out, "R {}", rewards.len())?;
    for (x, a, r) in rewards {
        writeln!(out, "{x} {a} {r}")?;
    }
    let init: Vec<(usize, f64)> = model.initial_belief().support().collect();
    writeln!(out, "B {}", init.len())?;
    for (x, p) in init {
        writeln!(out, "{x} {p}")?;
    }
    writeln!(out, "end")
}

pub fn model_to_string(model: &TabularPomdp) -> String {
    let mut buf = Vec::new();
    write_model(model, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("model text is utf-8")
}

/// SHA-256 of the canonical text form, hex encoded.
pub fn model_hash(model: &TabularPomdp) -> String {
    hex::encode(Sha256::digest(model_to_string(model).as_bytes()))
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                None => return Err(Error::parse(self.line, "unexpected end of input")),
                Some(Err(e)) => return Err(Error::parse(self.line, e.to_string())),
                Some(Ok(l)) => {
                    let t = l.trim_end();
                    if !t.is_empty() && !t.starts_with('#') {
                        return Ok(t.to_string());
                    }
                }
            }
        }
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let l = self.next_line()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ if l == key => Ok(String::new()),
            _ => Err(Error::parse(self.line, format!("expected `{key}`, found `{l}`"))),
        }
    }

    fn keyed_num<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.keyed(key)?;
        v.trim()
            .parse()
            .map_err(|_| Error::parse(self.line, format!("bad value for {key}: `{v}`")))
    }

    fn fields<const N: usize>(&mut self) -> Result<[String; N]> {
        let l = self.next_line()?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != N {
            return Err(Error::parse(self.line, format!("expected {N} fields, found {}", parts.len())));
        }
        Ok(std::array::from_fn(|i| parts[i].to_string()))
    }
}

fn num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::parse(line, format!("bad number `{s}`")))
}

pub fn read_model<R: BufRead>(input: R, storage: Storage) -> Result<TabularPomdp> {
    let mut lines = Lines {
        inner: input.lines(),
        line: 0,
    };
    let version: u32 = lines.keyed_num(MAGIC)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::parse(lines.line, format!("unsupported model format version {version}")));
    }
    let label = lines.keyed("label")?;
    let ns: usize = lines.keyed_num("states")?;
    let na: usize = lines.keyed_num("actions")?;
    let nz: usize = lines.keyed_num("observations")?;
    let discount: f64 = lines.keyed_num("discount")?;
    let mut b = PomdpBuilder::new(ns, na, nz);
    b.label(label).discount(discount).storage(storage);

    let n: usize = lines.keyed_num("T")?;
    for _ in 0..n {
        let [a, x, y, p] = lines.fields()?;
        let l = lines.line;
        b.transition(num(&a, l)?, num(&x, l)?, num(&y, l)?, num(&p, l)?);
    }
    let n: usize = lines.keyed_num("O")?;
    for _ in 0..n {
        let [a, y, z, p] = lines.fields()?;
        let l = lines.line;
        b.observation(num(&a, l)?, num(&y, l)?, num(&z, l)?, num(&p, l)?);
    }
    let n: usize = lines.keyed_num("R")?;
    for _ in 0..n {
        let [x, a, r] = lines.fields()?;
        let l = lines.line;
        b.reward(num(&x, l)?, num(&a, l)?, num(&r, l)?);
    }
    let n: usize = lines.keyed_num("B")?;
    let mut init = vec![0.0; ns];
    for _ in 0..n {
        let [x, p] = lines.fields()?;
        let l = lines.line;
        let x: usize = num(&x, l)?;
        if x >= ns {
            return Err(Error::parse(l, format!("initial belief state {x} out of range")));
        }
        init[x] = num(&p, l)?;
    }
    b.initial_belief(init);
    let tail = lines.next_line()?;
    if tail != "end" {
        return Err(Error::parse(lines.line, format!("expected `end`, found `{tail}`")));
    }
    b.build()
}

pub fn read_model_str(text: &str) -> Result<TabularPomdp> {
    read_model(text.as_bytes(), Storage::default())
}

pub fn save_model(model: &TabularPomdp, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_model(model, &mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &std::path::Path) -> Result<TabularPomdp> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(file), Storage::default())
}
