//! Predator-prey pursuit on a toroidal grid.
//!
//! Two predators (the ad hoc agent and a scripted teammate) must take two
//! opposite cells around the prey. The state is egocentric: the offsets of
//! the teammate and of the prey from the ad hoc agent, each encoded as
//! `dy * width + dx` with both components reduced modulo the grid size.
//! State `t * (width * height) + p` holds teammate offset `t` and prey
//! offset `p`; one absorbing state follows. Pairs that put two agents on
//! one cell are kept for the fixed layout but never reached.
//!
//! A step moves the ad hoc agent, then the teammate, then the prey; a move
//! into an occupied cell fails. When both capture cells are held the prey
//! is caught and stays put. Otherwise it picks one of the five moves
//! uniformly. The ad hoc agent sees the cell id `(dy + 1) * 3 + (dx + 1)`
//! of each of the others within its 3x3 neighbourhood, and id 4 (its own
//! cell) when they are farther away or the sighting fails.

use std::collections::VecDeque;

use rand::{Rng, RngCore};

use super::spec::PursuitVariant;
use super::{push_outcome, uniform_over, DomainSpec, Dynamics, Simulator, GOAL_REWARD, STEP_REWARD};
use crate::error::{Error, Result};

pub const NUM_ACTIONS: usize = 5;
pub const NUM_OBSERVATIONS: usize = 81;
/// Cell id of the observer itself.
pub const OWN_CELL: usize = 4;

/// Up, Down, Left, Right, Stay as (dy, dx).
const MOVES: [(isize, isize); 5] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];

/// Capture cells relative to the prey, one pair per task.
pub const CAPTURES: [[(isize, isize); 2]; 4] = [
    [(-1, 0), (1, 0)],
    [(0, -1), (0, 1)],
    [(1, -1), (-1, 1)],
    [(-1, -1), (1, 1)],
];
const CAPTURE_NAMES: [&str; 4] = ["N+S", "W+E", "SW+NE", "NW+SE"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Teammate {
    /// Heads for the nearer capture cell, routing around the prey only.
    Greedy,
    /// Heads for the capture cell farther from the ad hoc agent, routing
    /// around both the prey and the ad hoc agent.
    Aware,
}

#[derive(Debug, Clone)]
pub struct Pursuit {
    width: usize,
    height: usize,
    capture: [(isize, isize); 2],
    teammate: Teammate,
    epsilon: f64,
    label: String,
}

impl Pursuit {
    pub fn new(width: usize, height: usize, task: usize, teammate: Teammate, epsilon: f64) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::InvalidDomain(format!("pursuit needs at least a 3x3 grid, got {width}x{height}")));
        }
        let capture = *CAPTURES
            .get(task)
            .ok_or_else(|| Error::InvalidDomain(format!("pursuit has no task {task}")))?;
        let who = match teammate {
            Teammate::Greedy => "greedy",
            Teammate::Aware => "aware",
        };
        Ok(Pursuit {
            width,
            height,
            capture,
            teammate,
            epsilon,
            label: format!("pursuit/capture={}/teammate={who}", CAPTURE_NAMES[task]),
        })
    }

    fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn absorbing(&self) -> usize {
        self.cells() * self.cells()
    }

    fn shift(&self, c: usize, (dy, dx): (isize, isize)) -> usize {
        let (w, h) = (self.width as isize, self.height as isize);
        let r = (c / self.width) as isize;
        let col = (c % self.width) as isize;
        ((r + dy).rem_euclid(h) * w + (col + dx).rem_euclid(w)) as usize
    }

    /// Offset of cell `c` from cell `origin`, as a cell index.
    fn relative(&self, c: usize, origin: usize) -> usize {
        let dy = (c / self.width) as isize - (origin / self.width) as isize;
        let dx = (c % self.width) as isize - (origin % self.width) as isize;
        self.shift(0, (dy, dx))
    }

    /// Signed (dy, dx) of a relative offset, each in `-(n/2)..=(n-1)/2`.
    fn signed(&self, c: usize) -> (isize, isize) {
        let fold = |v: usize, n: usize| if v > n / 2 { v as isize - n as isize } else { v as isize };
        (fold(c / self.width, self.height), fold(c % self.width, self.width))
    }

    pub fn state(&self, teammate: usize, prey: usize) -> usize {
        teammate * self.cells() + prey
    }

    /// Teammate and prey offsets of a non-absorbing state.
    pub fn offsets(&self, x: usize) -> Option<(usize, usize)> {
        (x < self.absorbing()).then(|| (x / self.cells(), x % self.cells()))
    }

    fn is_valid(&self, t: usize, p: usize) -> bool {
        t != 0 && p != 0 && t != p
    }

    fn capture_cells(&self, prey: usize) -> [usize; 2] {
        self.capture.map(|d| self.shift(prey, d))
    }

    /// Whether the predators at `a` and `t` hold both capture cells of `p`.
    pub fn is_captured(&self, a: usize, t: usize, p: usize) -> bool {
        let [c0, c1] = self.capture_cells(p);
        (a == c0 && t == c1) || (a == c1 && t == c0)
    }

    fn bfs(&self, from: usize, blocked: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.cells()];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for &m in &MOVES[..4] {
                let v = self.shift(u, m);
                if dist[v] == usize::MAX && !blocked.contains(&v) {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Teammate's intended cell given the ad hoc agent at `a`, itself at `t`
    /// and the prey at `p` (absolute cells).
    pub fn teammate_target(&self, a: usize, t: usize, p: usize) -> usize {
        let goals = self.capture_cells(p);
        let (goal, blocked) = match self.teammate {
            Teammate::Greedy => {
                let d: Vec<usize> = goals.iter().map(|&g| self.bfs(g, &[p])[t]).collect();
                (if d[1] < d[0] { goals[1] } else { goals[0] }, vec![p])
            }
            Teammate::Aware => {
                let from_adhoc = self.bfs(a, &[p]);
                let g = if from_adhoc[goals[1]] > from_adhoc[goals[0]] { goals[1] } else { goals[0] };
                (g, vec![a, p])
            }
        };
        if t == goal {
            return t;
        }
        let dist = self.bfs(goal, &blocked);
        if dist[t] == usize::MAX {
            return t;
        }
        MOVES[..4]
            .iter()
            .map(|&m| self.shift(t, m))
            .find(|&c| dist[c] != usize::MAX && dist[c] + 1 == dist[t])
            .unwrap_or(t)
    }

    /// Cell id of an offset as seen by the ad hoc agent, before noise.
    pub fn cell_id(&self, offset: usize) -> usize {
        let (dy, dx) = self.signed(offset);
        if dy.abs() <= 1 && dx.abs() <= 1 {
            ((dy + 1) * 3 + (dx + 1)) as usize
        } else {
            OWN_CELL
        }
    }

    /// Positions after the predators move, with the ad hoc agent at the origin.
    fn predators_move(&self, t: usize, p: usize, a: usize) -> (usize, usize) {
        let mut na = self.shift(0, MOVES[a]);
        if na == t || na == p {
            na = 0;
        }
        let mut nt = self.teammate_target(na, t, p);
        if nt == na || nt == p {
            nt = t;
        }
        (na, nt)
    }
}

impl Dynamics for Pursuit {
    fn num_states(&self) -> usize {
        self.absorbing() + 1
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn num_observations(&self) -> usize {
        NUM_OBSERVATIONS
    }

    fn transition(&self, x: usize, a: usize, out: &mut Vec<(usize, f64)>) {
        let Some((t, p)) = self.offsets(x) else {
            return push_outcome(out, x, 1.0);
        };
        if !self.is_valid(t, p) || self.is_captured(0, t, p) {
            return push_outcome(out, self.absorbing(), 1.0);
        }
        let (na, nt) = self.predators_move(t, p, a);
        let rebase = |prey: usize| self.state(self.relative(nt, na), self.relative(prey, na));
        if self.is_captured(na, nt, p) {
            return push_outcome(out, rebase(p), 1.0);
        }
        for &m in &MOVES {
            let mut np = self.shift(p, m);
            if np == na || np == nt {
                np = p;
            }
            push_outcome(out, rebase(np), 1.0 / MOVES.len() as f64);
        }
    }

    fn observation(&self, _a: usize, y: usize, out: &mut Vec<(usize, f64)>) {
        let Some((t, p)) = self.offsets(y) else {
            return push_outcome(out, OWN_CELL * 9 + OWN_CELL, 1.0);
        };
        let sighting = |id: usize| -> Vec<(usize, f64)> {
            if id == OWN_CELL {
                vec![(id, 1.0)]
            } else {
                vec![(id, 1.0 - self.epsilon), (OWN_CELL, self.epsilon)]
            }
        };
        for (it, pt) in sighting(self.cell_id(t)) {
            for &(ip, pp) in &sighting(self.cell_id(p)) {
                push_outcome(out, it * 9 + ip, pt * pp);
            }
        }
    }

    fn reward(&self, x: usize, _a: usize) -> f64 {
        match self.offsets(x) {
            None => 0.0,
            Some((t, p)) if self.is_valid(t, p) && self.is_captured(0, t, p) => GOAL_REWARD,
            Some(_) => STEP_REWARD,
        }
    }

    fn initial_belief(&self) -> Vec<f64> {
        let start = (0..self.absorbing()).filter(|&x| {
            let (t, p) = (x / self.cells(), x % self.cells());
            self.is_valid(t, p) && !self.is_captured(0, t, p)
        });
        uniform_over(self.num_states(), start)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

impl Simulator for Pursuit {
    /// Plays the step in absolute (row, col) coordinates with the ad hoc
    /// agent starting at the origin.
    fn sample(&self, x: usize, a: usize, rng: &mut dyn RngCore) -> (usize, usize) {
        let absorbing = self.absorbing();
        let observe = |y: usize, rng: &mut dyn RngCore| -> usize {
            let Some((t, p)) = self.offsets(y) else {
                return OWN_CELL * 9 + OWN_CELL;
            };
            let mut seen = |id: usize| if rng.gen::<f64>() < self.epsilon { OWN_CELL } else { id };
            let it = seen(self.cell_id(t));
            let ip = seen(self.cell_id(p));
            it * 9 + ip
        };
        let Some((t, p)) = self.offsets(x) else {
            return (absorbing, observe(absorbing, rng));
        };
        if !self.is_valid(t, p) || self.is_captured(0, t, p) {
            return (absorbing, observe(absorbing, rng));
        }
        let (w, h) = (self.width as isize, self.height as isize);
        let rc = |c: usize| ((c / self.width) as isize, (c % self.width) as isize);
        let cell = |(r, c): (isize, isize)| (r.rem_euclid(h) * w + c.rem_euclid(w)) as usize;
        let step = |c: usize, (dy, dx): (isize, isize)| {
            let (r, col) = rc(c);
            cell((r + dy, col + dx))
        };
        let mut ad = step(0, MOVES[a]);
        if ad == t || ad == p {
            ad = 0;
        }
        let mut tm = self.teammate_target(ad, t, p);
        if tm == ad || tm == p {
            tm = t;
        }
        let mut pr = p;
        if !self.is_captured(ad, tm, p) {
            let m = MOVES[rng.gen_range(0..MOVES.len())];
            let to = step(p, m);
            if to != ad && to != tm {
                pr = to;
            }
        }
        let (ar, ac) = rc(ad);
        let rel = |c: usize| {
            let (r, col) = rc(c);
            cell((r - ar, col - ac))
        };
        let y = self.state(rel(tm), rel(pr));
        (y, observe(y, rng))
    }
}

/// Task and teammate of each model in a variant's library.
pub fn variant_members(variant: PursuitVariant) -> Vec<(usize, Teammate)> {
    match variant {
        PursuitVariant::Task => (0..4).map(|k| (k, Teammate::Greedy)).collect(),
        PursuitVariant::Teammate => vec![(0, Teammate::Greedy), (0, Teammate::Aware)],
        PursuitVariant::Both => (0..4)
            .flat_map(|k| [(k, Teammate::Greedy), (k, Teammate::Aware)])
            .collect(),
    }
}

pub fn library(variant: PursuitVariant, spec: &DomainSpec) -> Result<Vec<Box<dyn Dynamics>>> {
    let members = variant_members(variant);
    spec.library
        .select(members.len())?
        .into_iter()
        .map(|i| {
            let (task, mate) = members[i];
            Ok(Box::new(Pursuit::new(spec.width, spec.height, task, mate, spec.epsilon)?) as Box<dyn Dynamics>)
        })
        .collect()
}
