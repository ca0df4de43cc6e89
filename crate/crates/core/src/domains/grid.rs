//! Two-agent navigation: the open gridworld and the walled maps.
//!
//! The ad hoc agent and a scripted teammate must end up on two goal cells,
//! one agent on each. Free cells are numbered row-major; a state is the pair
//! (ad hoc cell, teammate cell), ordered lexicographically, followed by one
//! absorbing state. On the open grid the agents may share a cell; on maps
//! they may not, and a move into the same cell or a swap leaves both in place.
//!
//! Actions are Up, Down, Left, Right, Stay. The ad hoc agent's move fails
//! (it stays) with probability ε. Observations report, for the four
//! neighbouring cells in the order up, down, left, right, one of Nothing,
//! Teammate or Wall, encoded base 3 with up most significant; each element
//! independently reads Nothing with probability ε.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::maps::{builtin, GridMap};
use super::{push_outcome, uniform_over, Dynamics, Simulator, DomainSpec, GOAL_REWARD, STEP_REWARD};
use crate::error::{Error, Result};

pub const NUM_ACTIONS: usize = 5;
pub const STAY: usize = 4;
pub const NUM_OBSERVATIONS: usize = 81;

pub const NOTHING: usize = 0;
pub const TEAMMATE: usize = 1;
pub const WALL: usize = 2;

/// Row and column offsets of Up, Down, Left, Right.
pub const DIRECTIONS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

const UNREACHABLE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct NavWorld {
    map: GridMap,
    /// Row and column of each free cell.
    cells: Vec<(usize, usize)>,
    /// Free-cell neighbour in each direction.
    neighbours: Vec<[Option<usize>; 4]>,
    goals: [usize; 2],
    /// BFS distance from each goal to every cell.
    goal_distance: [Vec<usize>; 2],
    epsilon: f64,
    collisions: bool,
    pairs: Vec<(usize, usize)>,
    pair_index: Vec<Option<usize>>,
    label: String,
}

impl NavWorld {
    pub fn new(map: GridMap, goals: [(usize, usize); 2], epsilon: f64, collisions: bool) -> Result<Self> {
        let mut id = vec![None; map.width * map.height];
        let mut cells = Vec::new();
        for r in 0..map.height {
            for c in 0..map.width {
                if map.is_free(r as isize, c as isize) {
                    id[r * map.width + c] = Some(cells.len());
                    cells.push((r, c));
                }
            }
        }
        if cells.len() < 2 {
            return Err(Error::InvalidDomain("map needs at least two free cells".into()));
        }
        let cell_of = |(r, c): (usize, usize)| -> Result<usize> {
            (r < map.height && c < map.width)
                .then(|| id[r * map.width + c])
                .flatten()
                .ok_or_else(|| Error::InvalidDomain(format!("goal ({r}, {c}) is not a free cell")))
        };
        let goals = [cell_of(goals[0])?, cell_of(goals[1])?];
        if goals[0] == goals[1] {
            return Err(Error::InvalidDomain("goals must differ".into()));
        }
        let neighbours: Vec<[Option<usize>; 4]> = cells
            .iter()
            .map(|&(r, c)| {
                DIRECTIONS.map(|(dr, dc)| {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    map.is_free(nr, nc).then(|| id[nr as usize * map.width + nc as usize]).flatten()
                })
            })
            .collect();
        let goal_distance = goals.map(|g| bfs(&neighbours, g));
        let n = cells.len();
        let mut pairs = Vec::new();
        let mut pair_index = vec![None; n * n];
        for a in 0..n {
            for t in 0..n {
                if collisions && a == t {
                    continue;
                }
                pair_index[a * n + t] = Some(pairs.len());
                pairs.push((a, t));
            }
        }
        let label = format!(
            "{}/goals=({},{})+({},{})",
            map.name, cells[goals[0]].0, cells[goals[0]].1, cells[goals[1]].0, cells[goals[1]].1
        );
        Ok(NavWorld {
            map,
            cells,
            neighbours,
            goals,
            goal_distance,
            epsilon,
            collisions,
            pairs,
            pair_index,
            label,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn absorbing(&self) -> usize {
        self.pairs.len()
    }

    /// State index of (ad hoc cell, teammate cell).
    pub fn state(&self, adhoc: usize, teammate: usize) -> Option<usize> {
        self.pair_index[adhoc * self.cells.len() + teammate]
    }

    pub fn positions(&self, x: usize) -> Option<(usize, usize)> {
        self.pairs.get(x).copied()
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<usize> {
        self.cells.iter().position(|&rc| rc == (row, col))
    }

    pub fn goals(&self) -> [usize; 2] {
        self.goals
    }

    pub fn is_complete(&self, adhoc: usize, teammate: usize) -> bool {
        (adhoc == self.goals[0] && teammate == self.goals[1]) || (adhoc == self.goals[1] && teammate == self.goals[0])
    }

    /// Teammate's next cell: one step along a shortest path to its closest
    /// goal, lowest goal index and then Up, Down, Left, Right among ties.
    pub fn teammate_step(&self, teammate: usize) -> usize {
        let d = [self.goal_distance[0][teammate], self.goal_distance[1][teammate]];
        let g = if d[1] < d[0] { 1 } else { 0 };
        if d[g] == 0 || d[g] == UNREACHABLE {
            return teammate;
        }
        self.neighbours[teammate]
            .iter()
            .flatten()
            .copied()
            .find(|&c| self.goal_distance[g][c] + 1 == d[g])
            .unwrap_or(teammate)
    }

    fn intended(&self, cell: usize, action: usize) -> usize {
        if action == STAY {
            cell
        } else {
            self.neighbours[cell][action].unwrap_or(cell)
        }
    }

    fn resolve(&self, from: (usize, usize), to: (usize, usize)) -> (usize, usize) {
        if self.collisions && (to.0 == to.1 || (to.0 == from.1 && to.1 == from.0)) {
            from
        } else {
            to
        }
    }

    /// Noise-free reading of the four neighbours of the ad hoc agent.
    pub fn true_readings(&self, adhoc: usize, teammate: usize) -> [usize; 4] {
        [0, 1, 2, 3].map(|d| match self.neighbours[adhoc][d] {
            None => WALL,
            Some(c) if c == teammate => TEAMMATE,
            Some(_) => NOTHING,
        })
    }
}

pub fn encode_observation(readings: [usize; 4]) -> usize {
    readings.iter().fold(0, |acc, &v| acc * 3 + v)
}

fn bfs(neighbours: &[[Option<usize>; 4]], src: usize) -> Vec<usize> {
    let mut dist = vec![UNREACHABLE; neighbours.len()];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for v in neighbours[u].iter().flatten() {
            if dist[*v] == UNREACHABLE {
                dist[*v] = dist[u] + 1;
                queue.push_back(*v);
            }
        }
    }
    dist
}

/// Distribution over readings when each non-Nothing element is lost with probability ε.
pub(crate) fn noisy_readings(truth: &[usize], epsilon: f64, out: &mut Vec<(usize, f64)>) {
    fn rec(truth: &[usize], eps: f64, code: usize, p: f64, out: &mut Vec<(usize, f64)>) {
        match truth.split_first() {
            None => push_outcome(out, code, p),
            Some((&v, rest)) => {
                if v == NOTHING {
                    rec(rest, eps, code * 3, p, out);
                } else {
                    rec(rest, eps, code * 3 + v, p * (1.0 - eps), out);
                    rec(rest, eps, code * 3, p * eps, out);
                }
            }
        }
    }
    rec(truth, epsilon, 0, 1.0, out);
}

impl Dynamics for NavWorld {
    fn num_states(&self) -> usize {
        self.pairs.len() + 1
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn num_observations(&self) -> usize {
        NUM_OBSERVATIONS
    }

    fn transition(&self, x: usize, a: usize, out: &mut Vec<(usize, f64)>) {
        let Some((pa, pt)) = self.positions(x) else {
            return push_outcome(out, x, 1.0);
        };
        if self.is_complete(pa, pt) {
            return push_outcome(out, self.absorbing(), 1.0);
        }
        let team = self.teammate_step(pt);
        let target = self.intended(pa, a);
        let moves = [(target, 1.0 - self.epsilon), (pa, self.epsilon)];
        let moves = if target == pa { &moves[..0] } else { &moves[..] };
        if moves.is_empty() {
            let (na, nt) = self.resolve((pa, pt), (pa, team));
            return push_outcome(out, self.state(na, nt).expect("resolved pair is valid"), 1.0);
        }
        for &(cell, p) in moves {
            let (na, nt) = self.resolve((pa, pt), (cell, team));
            push_outcome(out, self.state(na, nt).expect("resolved pair is valid"), p);
        }
    }

    fn observation(&self, _a: usize, y: usize, out: &mut Vec<(usize, f64)>) {
        match self.positions(y) {
            None => push_outcome(out, 0, 1.0),
            Some((pa, pt)) => noisy_readings(&self.true_readings(pa, pt), self.epsilon, out),
        }
    }

    fn reward(&self, x: usize, _a: usize) -> f64 {
        match self.positions(x) {
            None => 0.0,
            Some((pa, pt)) if self.is_complete(pa, pt) => GOAL_REWARD,
            Some(_) => STEP_REWARD,
        }
    }

    fn initial_belief(&self) -> Vec<f64> {
        let start = (0..self.pairs.len()).filter(|&x| {
            let (pa, pt) = self.pairs[x];
            !self.is_complete(pa, pt)
        });
        uniform_over(self.num_states(), start)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

impl Simulator for NavWorld {
    fn sample(&self, x: usize, a: usize, rng: &mut dyn RngCore) -> (usize, usize) {
        let absorbing = self.absorbing();
        let Some((pa, pt)) = self.positions(x) else {
            return (absorbing, 0);
        };
        let (ra, ca) = self.cells[pa];
        let (rt, ct) = self.cells[pt];
        let y = if self.is_complete(pa, pt) {
            absorbing
        } else {
            // ad hoc move on raw coordinates
            let mut to = (ra, ca);
            if a != STAY && rng.gen::<f64>() >= self.epsilon {
                let (dr, dc) = DIRECTIONS[a];
                let (nr, nc) = (ra as isize + dr, ca as isize + dc);
                if self.map.is_free(nr, nc) {
                    to = (nr as usize, nc as usize);
                }
            }
            let team = self.cells[self.teammate_step(pt)];
            let blocked = self.collisions && (to == team || (to == (rt, ct) && team == (ra, ca)));
            let (fa, ft) = if blocked { ((ra, ca), (rt, ct)) } else { (to, team) };
            self.state(self.cell(fa.0, fa.1).unwrap(), self.cell(ft.0, ft.1).unwrap()).unwrap()
        };
        let Some((ya, yt)) = self.positions(y) else {
            return (y, 0);
        };
        let (r, c) = self.cells[ya];
        let (tr, tc) = self.cells[yt];
        let mut z = 0;
        for (dr, dc) in DIRECTIONS {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            let truth = if !self.map.is_free(nr, nc) {
                WALL
            } else if (nr, nc) == (tr as isize, tc as isize) {
                TEAMMATE
            } else {
                NOTHING
            };
            let seen = if truth != NOTHING && rng.gen::<f64>() < self.epsilon { NOTHING } else { truth };
            z = z * 3 + seen;
        }
        (y, z)
    }
}

/// Every unordered pair of cells of an open `width x height` grid, in a
/// seeded order; the first K entries form the K-task library, so libraries
/// built from one seed are nested.
pub fn gridworld_tasks(width: usize, height: usize, seed: u64) -> Vec<[(usize, usize); 2]> {
    let cells: Vec<(usize, usize)> = (0..height).flat_map(|r| (0..width).map(move |c| (r, c))).collect();
    let mut tasks = Vec::new();
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            tasks.push([cells[i], cells[j]]);
        }
    }
    tasks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    tasks
}

pub fn gridworld(spec: &DomainSpec, goals: [(usize, usize); 2]) -> Result<NavWorld> {
    let mut map = GridMap::open(spec.width, spec.height);
    map.name = "gridworld".into();
    NavWorld::new(map, goals, spec.epsilon, false)
}

pub fn gridworld_library(spec: &DomainSpec) -> Result<Vec<Box<dyn Dynamics>>> {
    let tasks = gridworld_tasks(spec.width, spec.height, spec.seed);
    spec.library
        .select(tasks.len())?
        .into_iter()
        .map(|i| Ok(Box::new(gridworld(spec, tasks[i])?) as Box<dyn Dynamics>))
        .collect()
}

pub fn map_world(name: &str, spec: &DomainSpec, task: usize) -> Result<NavWorld> {
    let map = builtin(name)?;
    let goals = *map
        .tasks
        .get(task)
        .ok_or_else(|| Error::InvalidDomain(format!("map {name} has no task {task}")))?;
    NavWorld::new(map, goals, spec.epsilon, true)
}

pub fn map_library(name: &str, spec: &DomainSpec) -> Result<Vec<Box<dyn Dynamics>>> {
    let available = builtin(name)?.tasks.len();
    spec.library
        .select(available)?
        .into_iter()
        .map(|i| Ok(Box::new(map_world(name, spec, i)?) as Box<dyn Dynamics>))
        .collect()
}
