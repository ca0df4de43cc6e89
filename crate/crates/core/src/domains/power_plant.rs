//! Robot and human securing a six-room plant.
//!
//! Rooms form a fixed graph. In the exploration task rooms 2, 4 and 5 start
//! unexplored and either agent explores a room by entering it. In the
//! cleanup task rooms 3 and 4 start dirty and only the robot cleans them.
//! A state is (robot room, human room, task flags); the state set is every
//! combination reachable from the two agents starting together in any room
//! with both moving freely, sorted, plus one absorbing state. The two tasks
//! therefore have state spaces of different sizes.
//!
//! Robot actions: move to the first, second or third lowest-numbered
//! neighbour (staying put when there is no such neighbour), Stay, ask the
//! human where the human is, ask the human where the robot is. A query
//! leaves the robot in place. The observation is a room id: the robot's own
//! room after a move or the self query, the human's room after the human
//! query. With probability ε the answer is lost, reported as the last
//! symbol (which is also room 5).

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::{Rng, RngCore};

use super::{push_outcome, uniform_over, DomainSpec, Dynamics, Simulator, GOAL_REWARD, STEP_REWARD};
use crate::error::Result;

pub const ROOMS: usize = 6;
pub const NUM_ACTIONS: usize = 6;
pub const NUM_OBSERVATIONS: usize = ROOMS;
pub const STAY: usize = 3;
pub const QUERY_HUMAN: usize = 4;
pub const QUERY_SELF: usize = 5;
/// Observation reported when an answer is lost.
pub const LOST: usize = ROOMS - 1;

const EDGES: [(usize, usize); 6] = [(0, 2), (0, 3), (0, 5), (1, 2), (1, 4), (2, 3)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Exploration,
    Cleanup,
}

impl Task {
    pub fn targets(self) -> &'static [usize] {
        match self {
            Task::Exploration => &[2, 4, 5],
            Task::Cleanup => &[3, 4],
        }
    }

    fn human_counts(self) -> bool {
        self == Task::Exploration
    }
}

pub fn neighbours() -> [Vec<usize>; ROOMS] {
    let mut adj: [Vec<usize>; ROOMS] = Default::default();
    for (a, b) in EDGES {
        adj[a].push(b);
        adj[b].push(a);
    }
    for n in adj.iter_mut() {
        n.sort_unstable();
    }
    adj
}

/// (robot room, human room, bit i set once target i is done)
type Config = (usize, usize, u8);

#[derive(Debug, Clone)]
pub struct PowerPlant {
    task: Task,
    epsilon: f64,
    adj: [Vec<usize>; ROOMS],
    dist: Vec<Vec<usize>>,
    configs: Vec<Config>,
    index: HashMap<Config, usize>,
}

impl PowerPlant {
    pub fn new(task: Task, epsilon: f64) -> Self {
        let adj = neighbours();
        let dist = (0..ROOMS).map(|s| room_distances(&adj, s)).collect();
        let mut w = PowerPlant {
            task,
            epsilon,
            adj,
            dist,
            configs: Vec::new(),
            index: HashMap::new(),
        };
        let mut seen: BTreeSet<Config> = (0..ROOMS).map(|s| w.mark((s, s, 0))).collect();
        let mut queue: VecDeque<Config> = seen.iter().copied().collect();
        while let Some(c) = queue.pop_front() {
            if w.is_done(c.2) {
                continue;
            }
            for &r in std::iter::once(&c.0).chain(&w.adj[c.0]) {
                for &h in std::iter::once(&c.1).chain(&w.adj[c.1]) {
                    let next = w.mark((r, h, c.2));
                    if seen.insert(next) {
                        queue.push_back(next);
                    }
                }
            }
        }
        w.configs = seen.into_iter().collect();
        w.index = w.configs.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        w
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn absorbing(&self) -> usize {
        self.configs.len()
    }

    pub fn config(&self, x: usize) -> Option<(usize, usize, u8)> {
        self.configs.get(x).copied()
    }

    pub fn state(&self, robot: usize, human: usize, done: u8) -> Option<usize> {
        self.index.get(&(robot, human, done)).copied()
    }

    fn all_done(&self) -> u8 {
        (1u8 << self.task.targets().len()) - 1
    }

    fn is_done(&self, flags: u8) -> bool {
        flags == self.all_done()
    }

    /// Applies the effect of the agents standing in their rooms.
    fn mark(&self, (r, h, mut flags): Config) -> Config {
        for (i, &room) in self.task.targets().iter().enumerate() {
            if room == r || (self.task.human_counts() && room == h) {
                flags |= 1 << i;
            }
        }
        (r, h, flags)
    }

    /// Human's next room: one step towards the nearest unfinished target
    /// (lowest room on ties, then lowest neighbour), or stay.
    pub fn human_step(&self, h: usize, flags: u8) -> usize {
        let target = self
            .task
            .targets()
            .iter()
            .enumerate()
            .filter(|&(i, _)| flags & (1 << i) == 0)
            .map(|(_, &room)| room)
            .min_by_key(|&room| (self.dist[h][room], room));
        match target {
            Some(t) if t != h => *self.adj[h]
                .iter()
                .find(|&&n| self.dist[n][t] + 1 == self.dist[h][t])
                .expect("graph is connected"),
            _ => h,
        }
    }

    pub fn robot_step(&self, r: usize, a: usize) -> usize {
        if a < STAY {
            self.adj[r].get(a).copied().unwrap_or(r)
        } else {
            r
        }
    }

    fn next_config(&self, (r, h, flags): Config, a: usize) -> Config {
        self.mark((self.robot_step(r, a), self.human_step(h, flags), flags))
    }

    fn answer(&self, a: usize, y: usize) -> usize {
        match self.configs.get(y) {
            None => LOST,
            Some(&(_, h, _)) if a == QUERY_HUMAN => h,
            Some(&(r, _, _)) => r,
        }
    }
}

fn room_distances(adj: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut d = vec![usize::MAX; adj.len()];
    d[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if d[v] == usize::MAX {
                d[v] = d[u] + 1;
                q.push_back(v);
            }
        }
    }
    d
}

impl Dynamics for PowerPlant {
    fn num_states(&self) -> usize {
        self.configs.len() + 1
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn num_observations(&self) -> usize {
        NUM_OBSERVATIONS
    }

    fn transition(&self, x: usize, a: usize, out: &mut Vec<(usize, f64)>) {
        match self.configs.get(x) {
            Some(&c) if !self.is_done(c.2) => push_outcome(out, self.index[&self.next_config(c, a)], 1.0),
            _ => push_outcome(out, self.absorbing(), 1.0),
        }
    }

    fn observation(&self, a: usize, y: usize, out: &mut Vec<(usize, f64)>) {
        push_outcome(out, self.answer(a, y), 1.0 - self.epsilon);
        push_outcome(out, LOST, self.epsilon);
    }

    fn reward(&self, x: usize, _a: usize) -> f64 {
        match self.configs.get(x) {
            None => 0.0,
            Some(c) if self.is_done(c.2) => GOAL_REWARD,
            Some(_) => STEP_REWARD,
        }
    }

    fn initial_belief(&self) -> Vec<f64> {
        let starts = (0..ROOMS).map(|s| self.index[&self.mark((s, s, 0))]);
        uniform_over(self.num_states(), starts)
    }

    fn label(&self) -> String {
        match self.task {
            Task::Exploration => "power-plant/exploration".into(),
            Task::Cleanup => "power-plant/cleanup".into(),
        }
    }
}

impl Simulator for PowerPlant {
    fn sample(&self, x: usize, a: usize, rng: &mut dyn RngCore) -> (usize, usize) {
        let y = match self.config(x) {
            Some((r, h, flags)) if !self.is_done(flags) => {
                let nr = self.robot_step(r, a);
                let nh = self.human_step(h, flags);
                let mut nf = flags;
                for (i, &room) in self.task.targets().iter().enumerate() {
                    let human_there = self.task == Task::Exploration && room == nh;
                    if room == nr || human_there {
                        nf |= 1 << i;
                    }
                }
                self.state(nr, nh, nf).expect("successor was enumerated")
            }
            _ => self.absorbing(),
        };
        let z = if rng.gen::<f64>() < self.epsilon {
            LOST
        } else {
            match self.config(y) {
                None => LOST,
                Some((_, h, _)) if a == QUERY_HUMAN => h,
                Some((r, _, _)) => r,
            }
        };
        (y, z)
    }
}

pub fn library(spec: &DomainSpec) -> Result<Vec<Box<dyn Dynamics>>> {
    let tasks = [Task::Exploration, Task::Cleanup];
    Ok(spec
        .library
        .select(tasks.len())?
        .into_iter()
        .map(|i| Box::new(PowerPlant::new(tasks[i], spec.epsilon)) as Box<dyn Dynamics>)
        .collect())
}
