//! Two-cell kitchen: a helper (the ad hoc agent) and a cook.
//!
//! Each agent stands in the top or bottom cell of its side of a counter.
//! On the helper's side the top cell has an onion dispenser and the bottom
//! cell a plate dispenser; the counter has a top and a bottom balcony where
//! the helper drops items for the cook. On the cook's side the top cell has
//! the pan and the bottom cell the serving window. Three onions cook a
//! soup; a plate picks it up; serving it at the window ends the episode.
//!
//! The state is fully observed. Teammate models differ only in the cook's
//! policy.

use rand::{Rng, RngCore};

use super::{push_outcome, DomainSpec, Dynamics, Simulator, GOAL_REWARD, STEP_REWARD};
use crate::error::Result;
use crate::pomdp::{Storage, TabularMmdp};
use crate::solvers::value_iteration;

pub const NUM_ACTIONS: usize = 4;
pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const NOOP: usize = 2;
pub const ACT: usize = 3;

pub const TOP: usize = 0;
pub const BOTTOM: usize = 1;

pub const NOTHING: usize = 0;
pub const ONION: usize = 1;
pub const PLATE: usize = 2;
pub const SOUP: usize = 3;

/// Onions in the pan at which it holds a cooked soup.
pub const COOKED: usize = 3;

const KITCHENS: usize = 2 * 2 * 3 * 4 * 3 * 3 * 4;
pub const DELIVERED: usize = KITCHENS;
pub const ABSORBING: usize = KITCHENS + 1;
pub const NUM_STATES: usize = KITCHENS + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Kitchen {
    pub helper_pos: usize,
    pub cook_pos: usize,
    pub helper_hand: usize,
    pub cook_hand: usize,
    pub top_balcony: usize,
    pub bottom_balcony: usize,
    pub pan: usize,
}

impl Kitchen {
    pub fn encode(&self) -> usize {
        let digits = [
            (self.helper_pos, 2),
            (self.cook_pos, 2),
            (self.helper_hand, 3),
            (self.cook_hand, 4),
            (self.top_balcony, 3),
            (self.bottom_balcony, 3),
            (self.pan, 4),
        ];
        digits.iter().fold(0, |acc, &(v, n)| acc * n + v)
    }

    pub fn decode(mut x: usize) -> Option<Self> {
        if x >= KITCHENS {
            return None;
        }
        let mut take = |n: usize| {
            let v = x % n;
            x /= n;
            v
        };
        let pan = take(4);
        let bottom_balcony = take(3);
        let top_balcony = take(3);
        let cook_hand = take(4);
        let helper_hand = take(3);
        let cook_pos = take(2);
        let helper_pos = take(2);
        Some(Kitchen {
            helper_pos,
            cook_pos,
            helper_hand,
            cook_hand,
            top_balcony,
            bottom_balcony,
            pan,
        })
    }

    fn balcony(&mut self, row: usize) -> &mut usize {
        if row == TOP {
            &mut self.top_balcony
        } else {
            &mut self.bottom_balcony
        }
    }
}

fn moved(pos: usize, action: usize) -> usize {
    match action {
        UP => TOP,
        DOWN => BOTTOM,
        _ => pos,
    }
}

/// Outcome of a joint step from a kitchen: the next kitchen, or `None` when
/// the soup is served.
pub fn joint_step(k: Kitchen, helper: usize, cook: usize) -> Option<Kitchen> {
    let mut n = k;
    n.helper_pos = moved(k.helper_pos, helper);
    if helper == ACT {
        let row = k.helper_pos;
        if n.helper_hand == NOTHING {
            n.helper_hand = if row == TOP { ONION } else { PLATE };
        } else if *n.balcony(row) == NOTHING {
            *n.balcony(row) = n.helper_hand;
            n.helper_hand = NOTHING;
        }
    }
    n.cook_pos = moved(k.cook_pos, cook);
    if cook == ACT {
        let row = k.cook_pos;
        let hand = n.cook_hand;
        if row == BOTTOM && hand == SOUP {
            return None;
        }
        if row == TOP && hand == ONION && n.pan < COOKED {
            n.pan += 1;
            n.cook_hand = NOTHING;
        } else if row == TOP && hand == PLATE && n.pan == COOKED {
            n.pan = 0;
            n.cook_hand = SOUP;
        } else if hand == NOTHING && *n.balcony(row) != NOTHING {
            n.cook_hand = std::mem::replace(n.balcony(row), NOTHING);
        } else if hand != NOTHING && *n.balcony(row) == NOTHING {
            *n.balcony(row) = hand;
            n.cook_hand = NOTHING;
        }
    }
    Some(n)
}

fn joint_successor(x: usize, helper: usize, cook: usize) -> usize {
    match Kitchen::decode(x) {
        None => ABSORBING,
        Some(k) => joint_step(k, helper, cook).map_or(DELIVERED, |n| n.encode()),
    }
}

fn reward_of(x: usize) -> f64 {
    match x {
        DELIVERED => GOAL_REWARD,
        ABSORBING => 0.0,
        _ => STEP_REWARD,
    }
}

/// Cook action per state under the optimal joint plan.
///
/// Several cook actions can be jointly optimal when the helper could take
/// over part of the work; among them the one whose worst case over helper
/// actions is best is kept (lowest action on exact ties), so the cook does
/// not wait on help that an arbitrary helper never gives.
pub fn optimal_cook_policy() -> Result<Vec<usize>> {
    let joint = NUM_ACTIONS * NUM_ACTIONS;
    let mut transition = Vec::with_capacity(joint * NUM_STATES);
    for j in 0..joint {
        for x in 0..NUM_STATES {
            transition.push(vec![(joint_successor(x, j / NUM_ACTIONS, j % NUM_ACTIONS), 1.0)]);
        }
    }
    let reward = (0..NUM_STATES).flat_map(|x| std::iter::repeat_n(reward_of(x), joint)).collect();
    let mmdp = TabularMmdp::new(
        NUM_STATES,
        vec![NUM_ACTIONS, NUM_ACTIONS],
        transition,
        reward,
        super::DISCOUNT,
        "overcooked/joint",
        Storage::Sparse,
    )?;
    let v = &value_iteration(&mmdp, 1e-9)?;
    const TIE: f64 = 1e-7;
    Ok((0..NUM_STATES)
        .map(|x| {
            let over_helper = |c: usize| (0..NUM_ACTIONS).map(move |h| v.q(x, h * NUM_ACTIONS + c));
            let top: Vec<(f64, f64)> = (0..NUM_ACTIONS)
                .map(|c| (over_helper(c).fold(f64::MIN, f64::max), over_helper(c).fold(f64::MAX, f64::min)))
                .collect();
            let best_max = top.iter().map(|t| t.0).fold(f64::MIN, f64::max);
            let mut pick = None::<usize>;
            for (c, &(hi, lo)) in top.iter().enumerate() {
                if hi < best_max - TIE {
                    continue;
                }
                if pick.is_none_or(|p| lo > top[p].1 + TIE) {
                    pick = Some(c);
                }
            }
            pick.expect("some cook action attains the maximum")
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cook {
    Optimal,
    Random,
    /// Optimal, but waits in the bottom cell while idle.
    WaitsBottom,
    /// Optimal, but waits in the top cell while idle.
    WaitsTop,
}

impl Cook {
    pub const ALL: [Cook; 4] = [Cook::Optimal, Cook::Random, Cook::WaitsBottom, Cook::WaitsTop];

    fn name(self) -> &'static str {
        match self {
            Cook::Optimal => "optimal",
            Cook::Random => "random",
            Cook::WaitsBottom => "waits-bottom",
            Cook::WaitsTop => "waits-top",
        }
    }
}

/// Idle: empty hand, nothing on either balcony to collect.
fn is_idle(k: &Kitchen) -> bool {
    k.cook_hand == NOTHING && k.top_balcony == NOTHING && k.bottom_balcony == NOTHING
}

#[derive(Debug, Clone)]
pub struct Overcooked {
    cook: Cook,
    /// Cook's action distribution in each state.
    policy: Vec<Vec<(usize, f64)>>,
}

impl Overcooked {
    /// `optimal` is the cook component of the optimal joint plan, shared
    /// by every model of a library.
    pub fn new(cook: Cook, optimal: &[usize]) -> Self {
        let policy = (0..NUM_STATES)
            .map(|x| {
                let k = Kitchen::decode(x);
                match (cook, k) {
                    (Cook::Random, _) => (0..NUM_ACTIONS).map(|a| (a, 0.25)).collect(),
                    (Cook::WaitsBottom, Some(k)) if is_idle(&k) => vec![(wait_at(k.cook_pos, BOTTOM), 1.0)],
                    (Cook::WaitsTop, Some(k)) if is_idle(&k) => vec![(wait_at(k.cook_pos, TOP), 1.0)],
                    _ => vec![(optimal[x], 1.0)],
                }
            })
            .collect();
        Overcooked { cook, policy }
    }

    pub fn cook_policy(&self, x: usize) -> &[(usize, f64)] {
        &self.policy[x]
    }
}

fn wait_at(pos: usize, row: usize) -> usize {
    match (pos == row, row) {
        (true, _) => NOOP,
        (false, TOP) => UP,
        (false, _) => DOWN,
    }
}

impl Dynamics for Overcooked {
    fn num_states(&self) -> usize {
        NUM_STATES
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn num_observations(&self) -> usize {
        NUM_STATES
    }

    fn transition(&self, x: usize, a: usize, out: &mut Vec<(usize, f64)>) {
        for &(c, p) in &self.policy[x] {
            push_outcome(out, joint_successor(x, a, c), p);
        }
    }

    fn observation(&self, _a: usize, y: usize, out: &mut Vec<(usize, f64)>) {
        push_outcome(out, y, 1.0);
    }

    fn reward(&self, x: usize, _a: usize) -> f64 {
        reward_of(x)
    }

    fn initial_belief(&self) -> Vec<f64> {
        let mut b = vec![0.0; NUM_STATES];
        for helper_pos in [TOP, BOTTOM] {
            for cook_pos in [TOP, BOTTOM] {
                let k = Kitchen {
                    helper_pos,
                    cook_pos,
                    helper_hand: NOTHING,
                    cook_hand: NOTHING,
                    top_balcony: NOTHING,
                    bottom_balcony: NOTHING,
                    pan: 0,
                };
                b[k.encode()] = 0.25;
            }
        }
        b
    }

    fn label(&self) -> String {
        format!("overcooked/cook={}", self.cook.name())
    }
}

impl Simulator for Overcooked {
    fn sample(&self, x: usize, a: usize, rng: &mut dyn RngCore) -> (usize, usize) {
        let cook = match self.cook {
            Cook::Random => rng.gen_range(0..NUM_ACTIONS),
            _ => self.policy[x][0].0,
        };
        let y = match x {
            DELIVERED | ABSORBING => ABSORBING,
            _ => joint_step(Kitchen::decode(x).unwrap(), a, cook).map_or(DELIVERED, |k| k.encode()),
        };
        (y, y)
    }
}

pub fn library(spec: &DomainSpec) -> Result<Vec<Box<dyn Dynamics>>> {
    let chosen = spec.library.select(Cook::ALL.len())?;
    let optimal = optimal_cook_policy()?;
    Ok(chosen
        .into_iter()
        .map(|i| Box::new(Overcooked::new(Cook::ALL[i], &optimal)) as Box<dyn Dynamics>)
        .collect())
}
