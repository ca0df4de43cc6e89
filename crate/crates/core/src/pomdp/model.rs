use crate::error::{check_index, Error, Result};

use super::belief::Belief;
use super::table::{Row, RowTable, Storage};

/// One task/teammate hypothesis as seen by the ad hoc agent.
///
/// Transitions already have the teammate policy marginalized in. Rows of the
/// transition table are addressed by `(action, state)`, rows of the
/// observation table by `(action, successor state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPomdp {
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    transition: RowTable,
    observation: RowTable,
    reward: Vec<f64>,
    discount: f64,
    initial_belief: Belief,
    label: String,
}

impl TabularPomdp {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn initial_belief(&self) -> &Belief {
        &self.initial_belief
    }

    #[inline]
    pub fn transition_row(&self, action: usize, state: usize) -> Row<'_> {
        self.transition.row(action * self.num_states + state)
    }

    #[inline]
    pub fn observation_row(&self, action: usize, next_state: usize) -> Row<'_> {
        self.observation.row(action * self.num_states + next_state)
    }

    pub fn transition_prob(&self, action: usize, state: usize, next_state: usize) -> f64 {
        self.transition
            .get(action * self.num_states + state, next_state)
    }

    #[inline]
    pub fn observation_prob(&self, action: usize, next_state: usize, observation: usize) -> f64 {
        self.observation
            .get(action * self.num_states + next_state, observation)
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn is_sparse(&self) -> bool {
        self.transition.is_sparse()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_initial_belief(mut self, belief: Belief) -> Result<Self> {
        if belief.len() != self.num_states {
            return Err(Error::InvalidBelief(format!(
                "initial belief has {} entries, model has {} states",
                belief.len(),
                self.num_states
            )));
        }
        self.initial_belief = belief;
        Ok(self)
    }
}

/// Incremental constructor for [`TabularPomdp`].
///
/// `build` only checks shapes and indices; stochasticity is reported by
/// [`validate`](super::validate::validate).
#[derive(Debug)]
pub struct PomdpBuilder {
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    transition: Vec<Vec<(usize, f64)>>,
    observation: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    discount: f64,
    initial: Option<Vec<f64>>,
    label: String,
    storage: Storage,
    error: Option<Error>,
}

impl PomdpBuilder {
    pub fn new(num_states: usize, num_actions: usize, num_observations: usize) -> Self {
        PomdpBuilder {
            num_states,
            num_actions,
            num_observations,
            transition: vec![Vec::new(); num_states * num_actions],
            observation: vec![Vec::new(); num_states * num_actions],
            reward: vec![0.0; num_states * num_actions],
            discount: 0.95,
            initial: None,
            label: String::new(),
            storage: Storage::default(),
            error: None,
        }
    }

    fn record(&mut self, r: Result<()>) -> bool {
        if let Err(e) = r {
            self.error.get_or_insert(e);
            false
        } else {
            true
        }
    }

    pub fn transition(&mut self, action: usize, state: usize, next_state: usize, p: f64) -> &mut Self {
        let ok = self.record(
            check_index("action", action, self.num_actions)
                .and(check_index("state", state, self.num_states))
                .and(check_index("state", next_state, self.num_states)),
        );
        if ok {
            self.transition[action * self.num_states + state].push((next_state, p));
        }
        self
    }

    pub fn observation(&mut self, action: usize, next_state: usize, observation: usize, p: f64) -> &mut Self {
        let ok = self.record(
            check_index("action", action, self.num_actions)
                .and(check_index("state", next_state, self.num_states))
                .and(check_index("observation", observation, self.num_observations)),
        );
        if ok {
            self.observation[action * self.num_states + next_state].push((observation, p));
        }
        self
    }

    pub fn reward(&mut self, state: usize, action: usize, r: f64) -> &mut Self {
        let ok = self.record(
            check_index("state", state, self.num_states).and(check_index("action", action, self.num_actions)),
        );
        if ok {
            self.reward[state * self.num_actions + action] = r;
        }
        self
    }

    pub fn discount(&mut self, discount: f64) -> &mut Self {
        self.discount = discount;
        self
    }

    pub fn initial_belief(&mut self, probs: Vec<f64>) -> &mut Self {
        self.initial = Some(probs);
        self
    }

    pub fn label(&mut self, label: impl Into<String>) -> &mut Self {
        self.label = label.into();
        self
    }

    pub fn storage(&mut self, storage: Storage) -> &mut Self {
        self.storage = storage;
        self
    }

    pub fn build(&mut self) -> Result<TabularPomdp> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        if self.num_states == 0 || self.num_actions == 0 || self.num_observations == 0 {
            return Err(Error::InvalidModel("state, action and observation counts must be positive".into()));
        }
        let initial = match self.initial.take() {
            Some(p) if p.len() != self.num_states => {
                return Err(Error::InvalidModel(format!(
                    "initial belief has {} entries, expected {}",
                    p.len(),
                    self.num_states
                )))
            }
            Some(p) => Belief::from_vec_unchecked(p),
            None => Belief::uniform(self.num_states),
        };
        let sparse = self.storage.use_sparse(self.num_states);
        Ok(TabularPomdp {
            num_states: self.num_states,
            num_actions: self.num_actions,
            num_observations: self.num_observations,
            transition: RowTable::from_rows(std::mem::take(&mut self.transition), self.num_states, sparse),
            observation: RowTable::from_rows(std::mem::take(&mut self.observation), self.num_observations, sparse),
            reward: std::mem::take(&mut self.reward),
            discount: self.discount,
            initial_belief: initial,
            label: std::mem::take(&mut self.label),
        })
    }
}

/// Multiagent MDP over joint actions.
///
/// Joint actions are flattened in mixed radix with agent 0 most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMmdp {
    num_states: usize,
    agent_actions: Vec<usize>,
    num_joint: usize,
    transition: RowTable,
    reward: Vec<f64>,
    discount: f64,
    label: String,
}

impl TabularMmdp {
    /// `transition[j * num_states + x]` is the successor distribution for
    /// joint action `j` in state `x`; `reward[x * num_joint + j]`.
    pub fn new(
        num_states: usize,
        agent_actions: Vec<usize>,
        transition: Vec<Vec<(usize, f64)>>,
        reward: Vec<f64>,
        discount: f64,
        label: impl Into<String>,
        storage: Storage,
    ) -> Result<Self> {
        if num_states == 0 || agent_actions.is_empty() || agent_actions.contains(&0) {
            return Err(Error::InvalidModel("empty state or action space".into()));
        }
        let num_joint: usize = agent_actions.iter().product();
        if transition.len() != num_joint * num_states {
            return Err(Error::InvalidModel(format!(
                "expected {} transition rows, got {}",
                num_joint * num_states,
                transition.len()
            )));
        }
        if reward.len() != num_joint * num_states {
            return Err(Error::InvalidModel("reward table has wrong size".into()));
        }
        for row in &transition {
            for &(y, _) in row {
                check_index("state", y, num_states)?;
            }
        }
        Ok(TabularMmdp {
            num_states,
            agent_actions,
            num_joint,
            transition: RowTable::from_rows(transition, num_states, storage.use_sparse(num_states)),
            reward,
            discount,
            label: label.into(),
        })
    }

    /// The single-agent MDP underlying a POMDP (same transitions and rewards).
    pub fn from_pomdp(model: &TabularPomdp) -> Self {
        TabularMmdp {
            num_states: model.num_states,
            agent_actions: vec![model.num_actions],
            num_joint: model.num_actions,
            transition: model.transition.clone(),
            reward: model.reward.clone(),
            discount: model.discount,
            label: model.label.clone(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_agents(&self) -> usize {
        self.agent_actions.len()
    }

    pub fn agent_actions(&self) -> &[usize] {
        &self.agent_actions
    }

    pub fn num_joint_actions(&self) -> usize {
        self.num_joint
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn joint_index(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.agent_actions.len());
        actions
            .iter()
            .zip(&self.agent_actions)
            .fold(0, |acc, (&a, &n)| acc * n + a)
    }

    pub fn decompose(&self, mut joint: usize) -> Vec<usize> {
        let mut out = vec![0; self.agent_actions.len()];
        for (slot, &n) in out.iter_mut().zip(&self.agent_actions).rev() {
            *slot = joint % n;
            joint /= n;
        }
        out
    }

    #[inline]
    pub fn transition_row(&self, joint: usize, state: usize) -> Row<'_> {
        self.transition.row(joint * self.num_states + state)
    }

    #[inline]
    pub fn reward(&self, state: usize, joint: usize) -> f64 {
        self.reward[state * self.num_joint + joint]
    }

    /// Folds the other agents' policy into the dynamics, leaving a
    /// single-agent MDP for `agent`.
    ///
    /// `others[x]` is a distribution over the reduced joint action of the
    /// remaining agents (mixed radix in their original order).
    pub fn marginalize(&self, agent: usize, others: &[Vec<(usize, f64)>]) -> Result<TabularMmdp> {
        check_index("agent", agent, self.num_agents())?;
        if others.len() != self.num_states {
            return Err(Error::InvalidModel("teammate policy must cover every state".into()));
        }
        let own = self.agent_actions[agent];
        let rest: Vec<usize> = self
            .agent_actions
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != agent)
            .map(|(_, &n)| n)
            .collect();
        let mut transition = vec![Vec::new(); own * self.num_states];
        let mut reward = vec![0.0; own * self.num_states];
        for x in 0..self.num_states {
            for a in 0..own {
                let row = &mut transition[a * self.num_states + x];
                for &(reduced, p) in &others[x] {
                    let mut joint_actions = Vec::with_capacity(self.num_agents());
                    let mut r = reduced;
                    let mut digits = vec![0; rest.len()];
                    for (d, &n) in digits.iter_mut().zip(&rest).rev() {
                        *d = r % n;
                        r /= n;
                    }
                    let mut it = digits.into_iter();
                    for i in 0..self.num_agents() {
                        joint_actions.push(if i == agent { a } else { it.next().unwrap() });
                    }
                    let j = self.joint_index(&joint_actions);
                    reward[x * own + a] += p * self.reward(x, j);
                    for (y, q) in self.transition_row(j, x).iter() {
                        row.push((y, p * q));
                    }
                }
            }
        }
        Ok(TabularMmdp {
            num_states: self.num_states,
            agent_actions: vec![own],
            num_joint: own,
            transition: RowTable::from_rows(transition, self.num_states, self.transition.is_sparse()),
            reward,
            discount: self.discount,
            label: self.label.clone(),
        })
    }

    pub fn max_row_error(&self) -> f64 {
        (0..self.transition.rows())
            .map(|i| (self.transition.row(i).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}
