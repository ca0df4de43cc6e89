//! Plain-text grid maps.
//!
//! ```text
//! # comment
//! name ntu
//! grid
//! #####
//! #...#
//! #####
//! end
//! task 1 1 1 3
//! ```
//!
//! In the grid, `#` is a wall and `.` a free cell; anything outside the
//! drawn rectangle is wall. Each `task` line names the two goal cells as
//! `row col row col`, counted from the top-left corner.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    pub name: String,
    pub width: usize,
    pub height: usize,
    free: Vec<bool>,
    /// Goal pairs as `((row, col), (row, col))`.
    pub tasks: Vec<[(usize, usize); 2]>,
}

impl GridMap {
    /// Wall-free `width x height` rectangle without tasks.
    pub fn open(width: usize, height: usize) -> Self {
        GridMap {
            name: format!("open{width}x{height}"),
            width,
            height,
            free: vec![true; width * height],
            tasks: Vec::new(),
        }
    }

    pub fn is_free(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height
            && (col as usize) < self.width
            && self.free[row as usize * self.width + col as usize]
    }

    pub fn free_cells(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut rows: Vec<&str> = Vec::new();
        let mut tasks = Vec::new();
        let mut in_grid = false;
        let mut grid_done = false;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            if in_grid {
                if raw.trim() == "end" {
                    in_grid = false;
                    grid_done = true;
                } else {
                    if let Some(bad) = raw.chars().find(|c| !matches!(c, '#' | '.')) {
                        return Err(Error::parse(n, format!("unexpected map character `{bad}`")));
                    }
                    rows.push(raw);
                }
                continue;
            }
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("name") => name = toks.next().map(str::to_string),
                Some("grid") if !grid_done => in_grid = true,
                Some("task") => {
                    let v: Vec<usize> = toks
                        .map(|t| t.parse().map_err(|_| Error::parse(n, "task needs four integers")))
                        .collect::<Result<_>>()?;
                    if v.len() != 4 {
                        return Err(Error::parse(n, "task needs four integers"));
                    }
                    tasks.push(([(v[0], v[1]), (v[2], v[3])], n));
                }
                Some(other) => return Err(Error::parse(n, format!("unknown directive `{other}`"))),
                None => {}
            }
        }
        if in_grid || rows.is_empty() {
            return Err(Error::parse(0, "map needs a `grid` ... `end` block"));
        }
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let height = rows.len();
        let mut free = vec![false; width * height];
        for (r, row) in rows.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                free[r * width + c] = ch == '.';
            }
        }
        let map = GridMap {
            name: name.unwrap_or_default(),
            width,
            height,
            free,
            tasks: Vec::new(),
        };
        let mut checked = Vec::new();
        for (goals, n) in tasks {
            for &(r, c) in &goals {
                if !map.is_free(r as isize, c as isize) {
                    return Err(Error::parse(n, format!("goal ({r}, {c}) is not a free cell")));
                }
            }
            if goals[0] == goals[1] {
                return Err(Error::parse(n, "the two goals must differ"));
            }
            checked.push(goals);
        }
        Ok(GridMap { tasks: checked, ..map })
    }
}

const NTU: &str = include_str!("../../maps/ntu.map");
const ISR: &str = include_str!("../../maps/isr.map");
const MIT: &str = include_str!("../../maps/mit.map");
const PENTAGON: &str = include_str!("../../maps/pentagon.map");
const CIT: &str = include_str!("../../maps/cit.map");

/// One of the bundled maps by name.
pub fn builtin(name: &str) -> Result<GridMap> {
    let text = match name {
        "ntu" => NTU,
        "isr" => ISR,
        "mit" => MIT,
        "pentagon" => PENTAGON,
        "cit" => CIT,
        _ => return Err(Error::InvalidDomain(format!("no bundled map named `{name}`"))),
    };
    GridMap::parse(text)
}
