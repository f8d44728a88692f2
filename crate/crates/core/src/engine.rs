//! One stage game of the ALMA heuristic.
//!
//! Agents advance in lock-step rounds. In each round every unconverged agent
//! either bids on the resource its strategy points at, or (when yielding)
//! monitors the next resource of its own preference list. Bids are collected
//! first and collisions are resolved together; a sole bidder on an available
//! resource acquires it and converges, while colliding bidders back off
//! independently with probability `P(loss)`.
//!
//! The engine is generic over a [`StageArena`], which owns the notion of
//! "available" and "collision". [`UnitArena`] gives the unit-capacity
//! assignment semantics; the meeting scheduler supplies its own arena.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::AssignmentInstance;
use crate::rng::SimRng;

/// Logistic steepness selected for the meeting-scheduling domain.
pub const MEETING_GAMMA: f64 = 15.72;

/// Back-off probability as a function of the expected loss of yielding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BackoffModel {
    /// `P(loss) = f(loss)^beta` with `f` the clamped `1 - loss`.
    Power { beta: f64, epsilon: f64 },
    /// `P(loss) = 1 / (1 + exp(-gamma * (0.5 - loss)))`.
    Logistic { gamma: f64 },
}

impl Default for BackoffModel {
    fn default() -> Self {
        BackoffModel::Power {
            beta: 2.0,
            epsilon: 0.01,
        }
    }
}

impl BackoffModel {
    pub fn meeting_default() -> Self {
        BackoffModel::Logistic {
            gamma: MEETING_GAMMA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BackoffModel::Power { beta, epsilon } => {
                if !(beta >= 0.0 && beta.is_finite()) {
                    return Err(invalid(format!("beta {beta} must be >= 0")));
                }
                if !(epsilon > 0.0 && epsilon < 0.5) {
                    return Err(invalid(format!("epsilon {epsilon} outside (0, 0.5)")));
                }
            }
            BackoffModel::Logistic { gamma } => {
                if !gamma.is_finite() {
                    return Err(invalid(format!("gamma {gamma} must be finite")));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn probability(&self, loss: f64) -> f64 {
        match *self {
            BackoffModel::Power { beta, epsilon } => {
                let f = if loss <= epsilon {
                    1.0 - epsilon
                } else if 1.0 - loss <= epsilon {
                    epsilon
                } else {
                    1.0 - loss
                };
                if beta == 2.0 {
                    f * f
                } else {
                    f.powf(beta)
                }
            }
            BackoffModel::Logistic { gamma } => 1.0 / (1.0 + (-gamma * (0.5 - loss)).exp()),
        }
    }
}

/// Probability that a colliding agent yields, given its loss in `[0, 1]`.
pub fn backoff_probability(model: &BackoffModel, loss: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&loss) {
        return Err(invalid(format!("loss {loss} outside [0, 1]")));
    }
    Ok(model.probability(loss))
}

/// The world a stage game is played in.
///
/// Availability must be monotone within a stage: once [`StageArena::is_free`]
/// returns `false` for an (agent, resource) pair it stays `false` until the
/// next [`StageArena::reset`].
pub trait StageArena {
    fn n_agents(&self) -> usize;

    /// Resource ids the agent may bid on, most preferred first.
    fn options(&self, agent: usize) -> &[usize];

    /// Clears all commitments.
    fn reset(&mut self);

    /// Whether `agent` could acquire `resource` given current commitments.
    fn is_free(&self, agent: usize, resource: usize) -> bool;

    /// Flags every bid that collides, either with another bid of the same
    /// round or with an existing commitment.
    fn find_collisions(&mut self, bids: &[(usize, usize)], collided: &mut Vec<bool>);

    fn commit(&mut self, agent: usize, resource: usize);
}

/// Unit-capacity assignment: each resource can be held by one agent.
#[derive(Debug, Clone)]
pub struct UnitArena<'a> {
    instance: &'a AssignmentInstance,
    holder: Vec<Option<usize>>,
    bid_count: Vec<u32>,
}

impl<'a> UnitArena<'a> {
    pub fn new(instance: &'a AssignmentInstance) -> Self {
        Self {
            instance,
            holder: vec![None; instance.n_resources()],
            bid_count: vec![0; instance.n_resources()],
        }
    }

    pub fn instance(&self) -> &'a AssignmentInstance {
        self.instance
    }

    pub fn holder(&self, resource: usize) -> Option<usize> {
        self.holder[resource]
    }
}

impl StageArena for UnitArena<'_> {
    fn n_agents(&self) -> usize {
        self.instance.n_agents()
    }

    fn options(&self, agent: usize) -> &[usize] {
        self.instance.preferences(agent)
    }

    fn reset(&mut self) {
        self.holder.iter_mut().for_each(|h| *h = None);
    }

    #[inline]
    fn is_free(&self, _agent: usize, resource: usize) -> bool {
        self.holder[resource].is_none()
    }

    fn find_collisions(&mut self, bids: &[(usize, usize)], collided: &mut Vec<bool>) {
        for &(_, r) in bids {
            self.bid_count[r] += 1;
        }
        collided.clear();
        collided.extend(
            bids.iter()
                .map(|&(_, r)| self.bid_count[r] > 1 || self.holder[r].is_some()),
        );
        for &(_, r) in bids {
            self.bid_count[r] = 0;
        }
    }

    fn commit(&mut self, agent: usize, resource: usize) {
        let previous = self.holder[resource].replace(agent);
        assert!(
            previous.is_none(),
            "resource {resource} committed to agent {agent} while held by {previous:?}"
        );
    }
}

/// Result of one stage game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    /// Position (in the agent's option list) of the acquired resource.
    pub won: Vec<Option<usize>>,
    /// Resource id of the acquired resource.
    pub resources: Vec<Option<usize>>,
    pub rounds: usize,
    /// Set when the round cap stopped the game before every agent settled.
    pub capped: bool,
}

impl StageOutcome {
    pub fn anomalies(&self) -> usize {
        usize::from(self.capped)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Strategy {
    Yield,
    Access(usize),
}

const NO_CURSOR: usize = usize::MAX;

/// Plays one stage game to completion.
///
/// `starts[n]` and the entries of `losses[n]` are indexed by position in
/// `arena.options(n)`. Agents whose options are all unavailable for a full
/// monitoring cycle can never acquire anything and leave the game unmatched.
/// If `round_cap` rounds elapse first, the remaining agents stay unmatched and
/// the outcome is flagged as capped.
pub fn run_stage<A, L>(
    arena: &mut A,
    starts: &[usize],
    losses: &[L],
    model: &BackoffModel,
    rngs: &mut [SimRng],
    round_cap: usize,
) -> StageOutcome
where
    A: StageArena + ?Sized,
    L: AsRef<[f64]>,
{
    let n = arena.n_agents();
    assert_eq!(starts.len(), n, "one start per agent");
    assert_eq!(losses.len(), n, "one loss array per agent");
    assert_eq!(rngs.len(), n, "one rng per agent");

    arena.reset();
    let mut strategy = Vec::with_capacity(n);
    let mut active = Vec::with_capacity(n);
    for (agent, &start) in starts.iter().enumerate() {
        let len = arena.options(agent).len();
        if len == 0 {
            strategy.push(Strategy::Yield);
            continue;
        }
        assert!(start < len, "start {start} outside agent {agent}'s {len} options");
        strategy.push(Strategy::Access(start));
        active.push(agent);
    }
    let mut cursor = vec![NO_CURSOR; n];
    let mut misses = vec![0usize; n];
    let mut won: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];

    let mut bids: Vec<(usize, usize)> = Vec::with_capacity(n);
    let mut bid_pos: Vec<usize> = Vec::with_capacity(n);
    let mut collided: Vec<bool> = Vec::with_capacity(n);
    let mut monitors: Vec<usize> = Vec::with_capacity(n);

    let mut rounds = 0;
    let mut capped = false;
    while !active.is_empty() {
        if rounds == round_cap {
            capped = true;
            break;
        }
        rounds += 1;

        bids.clear();
        bid_pos.clear();
        monitors.clear();
        for &agent in &active {
            match strategy[agent] {
                Strategy::Access(pos) => {
                    bids.push((agent, arena.options(agent)[pos]));
                    bid_pos.push(pos);
                }
                Strategy::Yield => monitors.push(agent),
            }
        }

        arena.find_collisions(&bids, &mut collided);
        for (i, &(agent, resource)) in bids.iter().enumerate() {
            if collided[i] {
                let loss = losses[agent].as_ref()[bid_pos[i]];
                if rngs[agent].random::<f64>() < model.probability(loss) {
                    strategy[agent] = Strategy::Yield;
                }
            } else {
                arena.commit(agent, resource);
                won[agent] = Some(bid_pos[i]);
                done[agent] = true;
            }
        }

        // Monitoring observes the commitments made in this round.
        for &agent in &monitors {
            let options = arena.options(agent);
            let len = options.len();
            let next = if cursor[agent] == NO_CURSOR {
                0
            } else {
                (cursor[agent] + 1) % len
            };
            cursor[agent] = next;
            if arena.is_free(agent, options[next]) {
                strategy[agent] = Strategy::Access(next);
                misses[agent] = 0;
            } else {
                misses[agent] += 1;
                if misses[agent] >= len {
                    done[agent] = true;
                }
            }
        }

        active.retain(|&a| !done[a]);
    }

    let resources = won
        .iter()
        .enumerate()
        .map(|(agent, pos)| pos.map(|p| arena.options(agent)[p]))
        .collect();
    StageOutcome {
        won,
        resources,
        rounds,
        capped,
    }
}
