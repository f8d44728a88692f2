//! ALMA-Learning: the repeated game wrapped around ALMA stage games.
//!
//! Every agent keeps, per resource of its preference list, a ring buffer of
//! the utilities it ended up with after starting from that resource, the mean
//! of that buffer as a reward estimate, and an empirical loss estimate used by
//! the back-off rule. After each stage game only the entries of the starting
//! resource change; the starting resource is re-chosen by `argmax reward`
//! whenever the agent did not win it.

use std::collections::VecDeque;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{run_stage, BackoffModel, StageArena, StageOutcome, UnitArena};
use crate::error::{invalid, io_err, Result};
use crate::model::{AssignmentInstance, Allocation, RunConfig};
use crate::rng::{agent_rngs, SimRng};

/// How the initial loss of each resource is derived from the sorted
/// utilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossInit {
    /// Gap to the next resource in preference order; the last resource is
    /// compared against utility 0.
    NextGap,
    /// Mean gap to the following alternatives up to rank `k`, missing
    /// alternatives counting as utility 0.
    Window { k: usize },
}

impl LossInit {
    /// Initial loss for every position of a descending utility list.
    pub fn losses(&self, utilities: &[f64]) -> Vec<f64> {
        (0..utilities.len())
            .map(|i| match *self {
                LossInit::NextGap => utilities[i] - utilities.get(i + 1).copied().unwrap_or(0.0),
                LossInit::Window { k } => window_loss(utilities, i, k),
            })
            .map(|l| l.clamp(0.0, 1.0))
            .collect()
    }
}

/// Average gap between alternative `i` and alternatives `i+1..=k` of a list
/// sorted in descending order. Alternatives past the end of the list count as
/// utility 0. When `i >= k` the window is empty and the single gap to the
/// next alternative is used instead.
pub fn window_loss(utilities: &[f64], i: usize, k: usize) -> f64 {
    let top = utilities[i];
    let end = k.max(i + 1);
    let gaps: f64 = (i + 1..=end)
        .map(|j| top - utilities.get(j).copied().unwrap_or(0.0))
        .sum();
    gaps / (end - i) as f64
}

/// Learned state of one agent. Arrays are indexed by position in the agent's
/// preference list; accessors taking a resource id translate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentLearnerState {
    resources: Vec<usize>,
    utilities: Vec<f64>,
    history: Vec<VecDeque<f64>>,
    reward: Vec<f64>,
    loss: Vec<f64>,
    start: usize,
    history_len: usize,
}

impl AgentLearnerState {
    /// `resources` in preference order with their utilities (non-increasing).
    pub fn new(resources: Vec<usize>, utilities: Vec<f64>, init: LossInit, history_len: usize) -> Self {
        assert_eq!(resources.len(), utilities.len());
        assert!(history_len >= 1);
        let history = utilities
            .iter()
            .map(|&u| {
                let mut ring = VecDeque::with_capacity(history_len);
                ring.push_back(u);
                ring
            })
            .collect();
        let loss = init.losses(&utilities);
        let mut state = Self {
            reward: utilities.clone(),
            resources,
            utilities,
            history,
            loss,
            start: 0,
            history_len,
        };
        state.start = state.best_start();
        state
    }

    /// Position with the highest reward; ties go to the lower resource id.
    fn best_start(&self) -> usize {
        (0..self.reward.len())
            .reduce(|best, p| {
                let better = self.reward[p] > self.reward[best]
                    || (self.reward[p] == self.reward[best] && self.resources[p] < self.resources[best]);
                if better {
                    p
                } else {
                    best
                }
            })
            .unwrap_or(0)
    }

    /// Applies the learning rule after a stage game that started from the
    /// current starting resource and ended at position `won`.
    pub fn observe(&mut self, won: Option<usize>, alpha: f64) {
        let start = self.start;
        let won_utility = won.map_or(0.0, |p| self.utilities[p]);
        let ring = &mut self.history[start];
        if ring.len() == self.history_len {
            ring.pop_front();
        }
        ring.push_back(won_utility);
        self.reward[start] = ring.iter().sum::<f64>() / ring.len() as f64;

        let gap = self.utilities[start] - won_utility;
        if gap > 0.0 {
            self.loss[start] = ((1.0 - alpha) * self.loss[start] + alpha * gap).clamp(0.0, 1.0);
        }
        if won != Some(start) {
            self.start = self.best_start();
        }
    }

    fn position(&self, resource: usize) -> Option<usize> {
        self.resources.iter().position(|&r| r == resource)
    }

    /// Current starting resource id.
    pub fn r_start(&self) -> usize {
        self.resources[self.start]
    }

    pub fn start_position(&self) -> usize {
        self.start
    }

    pub fn resources(&self) -> &[usize] {
        &self.resources
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    /// Loss array by preference position.
    pub fn losses(&self) -> &[f64] {
        &self.loss
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn loss_of(&self, resource: usize) -> Option<f64> {
        self.position(resource).map(|p| self.loss[p])
    }

    pub fn reward_of(&self, resource: usize) -> Option<f64> {
        self.position(resource).map(|p| self.reward[p])
    }

    pub fn history_of(&self, resource: usize) -> Option<&VecDeque<f64>> {
        self.position(resource).map(|p| &self.history[p])
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }
}

/// Initial learner state of `agent` (single-gap losses).
pub fn init_learner(instance: &AssignmentInstance, agent: usize, history_len: usize) -> Result<AgentLearnerState> {
    let prefs = crate::model::preference_order(instance, agent)?;
    let utilities = prefs.iter().map(|&r| instance.utility(agent, r)).collect();
    Ok(AgentLearnerState::new(prefs.to_vec(), utilities, LossInit::NextGap, history_len))
}

/// One training step of the repeated game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    /// Starting resource of every agent for this stage game.
    pub starts: Vec<usize>,
    pub won: Vec<Option<usize>>,
    pub social_welfare: f64,
    pub rounds: usize,
    pub capped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    /// Starting resources after the last update.
    pub final_starts: Vec<usize>,
}

impl Trace {
    pub fn anomalies(&self) -> usize {
        self.steps.iter().filter(|s| s.capped).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(io_err(path))?;
        self.write_csv_to(file)
    }

    /// Columns: step, r_start, r_won, sw, rounds, capped. Per-agent columns
    /// are `;`-joined, with `-` for an unmatched agent.
    pub fn write_csv_to<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "r_start", "r_won", "sw", "rounds", "capped"])?;
        for s in &self.steps {
            let starts = s.starts.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
            let won = s
                .won
                .iter()
                .map(|r| r.map_or_else(|| "-".to_string(), |r| r.to_string()))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                s.step.to_string(),
                starts,
                won,
                s.social_welfare.to_string(),
                s.rounds.to_string(),
                s.capped.to_string(),
            ])?;
        }
        w.flush().map_err(|e| crate::error::Error::Csv(e.into()))?;
        Ok(())
    }
}

/// Earliest training step from which no agent changes its starting resource
/// through the end of training, or `None` when the last update still changed
/// one (or nothing was trained).
pub fn starting_resource_stabilization(trace: &Trace) -> Option<usize> {
    if trace.steps.is_empty() {
        return None;
    }
    let last = &trace.final_starts;
    let mut first_stable = trace.steps.len() + 1;
    for s in trace.steps.iter().rev() {
        if &s.starts != last {
            break;
        }
        first_stable = s.step;
    }
    (first_stable <= trace.steps.len()).then_some(first_stable)
}

/// A population of learners playing repeated stage games in one arena.
pub struct RepeatedGame<A> {
    arena: A,
    states: Vec<AgentLearnerState>,
    rngs: Vec<SimRng>,
    model: BackoffModel,
    alpha: f64,
    round_cap: usize,
    steps_played: usize,
}

impl<A: StageArena> RepeatedGame<A> {
    /// `states[n].resources()` must equal `arena.options(n)`.
    pub fn new(
        arena: A,
        states: Vec<AgentLearnerState>,
        model: BackoffModel,
        alpha: f64,
        round_cap: usize,
        seed: u64,
    ) -> Result<Self> {
        model.validate()?;
        if states.len() != arena.n_agents() {
            return Err(invalid("one learner state per agent required"));
        }
        for (n, s) in states.iter().enumerate() {
            if s.resources() != arena.options(n) {
                return Err(invalid(format!("agent {n}: learner resources differ from arena options")));
            }
        }
        let rngs = agent_rngs(seed, states.len());
        Ok(Self {
            arena,
            states,
            rngs,
            model,
            alpha,
            round_cap,
            steps_played: 0,
        })
    }

    pub fn states(&self) -> &[AgentLearnerState] {
        &self.states
    }

    pub fn arena(&self) -> &A {
        &self.arena
    }

    pub fn starts(&self) -> Vec<usize> {
        self.states.iter().map(AgentLearnerState::r_start).collect()
    }

    fn play(&mut self) -> StageOutcome {
        let starts: Vec<usize> = self.states.iter().map(|s| s.start).collect();
        let losses: Vec<&[f64]> = self.states.iter().map(|s| s.loss.as_slice()).collect();
        run_stage(
            &mut self.arena,
            &starts,
            &losses,
            &self.model,
            &mut self.rngs,
            self.round_cap,
        )
    }

    fn stage_welfare(&self, outcome: &StageOutcome) -> f64 {
        outcome
            .won
            .iter()
            .zip(&self.states)
            .filter_map(|(w, s)| w.map(|p| s.utilities[p]))
            .sum()
    }

    /// Plays one stage game and applies every agent's learning update.
    pub fn train_step(&mut self) -> TraceStep {
        let starts = self.starts();
        let outcome = self.play();
        for (state, won) in self.states.iter_mut().zip(&outcome.won) {
            state.observe(*won, self.alpha);
        }
        self.steps_played += 1;
        TraceStep {
            step: self.steps_played,
            starts,
            social_welfare: self.stage_welfare(&outcome),
            won: outcome.resources,
            rounds: outcome.rounds,
            capped: outcome.capped,
        }
    }

    pub fn train(&mut self, steps: usize) -> Trace {
        let steps = (0..steps).map(|_| self.train_step()).collect();
        Trace {
            steps,
            final_starts: self.starts(),
        }
    }

    /// Plays `steps` stage games with learning frozen.
    pub fn evaluate(&mut self, steps: usize) -> Vec<StageOutcome> {
        (0..steps).map(|_| self.play()).collect()
    }
}

/// ALMA-Learning on an assignment instance.
pub type AssignmentGame<'a> = RepeatedGame<UnitArena<'a>>;

/// Sets up the learners of every agent with single-gap initial losses.
pub fn new_assignment_game<'a>(
    instance: &'a AssignmentInstance,
    config: &RunConfig,
    model: BackoffModel,
) -> Result<AssignmentGame<'a>> {
    config.validate()?;
    let states = (0..instance.n_agents())
        .map(|n| init_learner(instance, n, config.history_len))
        .collect::<Result<Vec<_>>>()?;
    RepeatedGame::new(
        UnitArena::new(instance),
        states,
        model,
        config.alpha,
        config.round_cap_for(instance.n_resources()),
        config.seed,
    )
}

/// Runs `config.training_steps` training stage games.
pub fn train<'a>(
    instance: &'a AssignmentInstance,
    config: &RunConfig,
    model: BackoffModel,
) -> Result<(AssignmentGame<'a>, Trace)> {
    let mut game = new_assignment_game(instance, config, model)?;
    let trace = game.train(config.training_steps);
    Ok((game, trace))
}

/// Frozen evaluation stage games, one allocation each.
pub fn evaluate(game: &mut AssignmentGame<'_>, eval_steps: usize) -> Vec<Allocation> {
    let outcomes = game.evaluate(eval_steps);
    let instance = game.arena().instance();
    outcomes
        .into_iter()
        .map(|o| Allocation::new(instance, o.resources))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(u: &[f64]) -> AssignmentInstance {
        AssignmentInstance::from_rows(&[u.to_vec()]).unwrap()
    }

    fn assert_slice_close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn init_examples() {
        let s = init_learner(&row(&[1.0, 0.5, 0.0]), 0, 20).unwrap();
        assert_slice_close(s.losses(), &[0.5, 0.5, 0.0]);
        assert_eq!(s.r_start(), 0);

        let table = AssignmentInstance::from_rows(&[
            vec![1.0, 0.5, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.75, 0.001],
        ])
        .unwrap();
        let n3 = init_learner(&table, 2, 20).unwrap();
        assert_eq!(n3.resources(), &[0, 1, 2]);
        assert_slice_close(n3.losses(), &[0.25, 0.749, 0.001]);
        assert_eq!(n3.r_start(), 0);

        let single = init_learner(&row(&[0.8]), 0, 20).unwrap();
        assert_slice_close(single.losses(), &[0.8]);
        assert_eq!(single.r_start(), 0);
        assert_eq!(single.history_of(0).unwrap().len(), 1);
    }

    #[test]
    fn loss_update_applies_once_per_loss() {
        let mut s = AgentLearnerState::new(vec![0, 1], vec![1.0, 0.0], LossInit::NextGap, 20);
        s.loss[0] = 0.1;
        s.observe(Some(1), 0.1);
        assert!((s.loss_of(0).unwrap() - 0.19).abs() < 1e-12);
    }

    #[test]
    fn winning_the_start_keeps_it_and_leaves_loss() {
        let mut s = AgentLearnerState::new(vec![2, 0, 1], vec![0.9, 0.5, 0.1], LossInit::NextGap, 3);
        let before = s.losses().to_vec();
        for _ in 0..5 {
            s.observe(Some(0), 0.1);
        }
        assert_eq!(s.r_start(), 2);
        assert_eq!(s.losses(), &before[..]);
        assert_eq!(s.history_of(2).unwrap().len(), 3);
    }

    #[test]
    fn losing_start_switches_to_best_reward() {
        let mut s = AgentLearnerState::new(vec![0, 1, 2], vec![1.0, 0.6, 0.2], LossInit::NextGap, 20);
        // Lost r0, ended at r2: reward[r0] = (1 + 0.2) / 2 = 0.6 ties r1; lower id wins.
        s.observe(Some(2), 0.1);
        assert!((s.reward_of(0).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(s.r_start(), 0);
        s.observe(None, 0.1);
        // reward[r0] = 0.4 < 0.6
        assert_eq!(s.r_start(), 1);
        // loss[r0]: 0.4 -> 0.9*0.4 + 0.1*0.8 = 0.44 -> 0.9*0.44 + 0.1*1.0 = 0.496
        assert!((s.loss_of(0).unwrap() - 0.496).abs() < 1e-12);
    }

    #[test]
    fn ring_buffer_keeps_last_entries() {
        let mut s = AgentLearnerState::new(vec![0, 1], vec![1.0, 0.0], LossInit::NextGap, 2);
        s.observe(Some(0), 0.1);
        s.observe(Some(0), 0.1);
        assert_eq!(s.history_of(0).unwrap().iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0]);
    }

    #[test]
    fn window_loss_examples() {
        assert!((window_loss(&[1.0, 0.8, 0.6], 0, 2) - 0.3).abs() < 1e-12);
        assert!((window_loss(&[1.0, 0.8, 0.6], 1, 2) - 0.2).abs() < 1e-12);
        assert!((window_loss(&[0.9], 0, 3) - 0.9).abs() < 1e-12);
        // Beyond the window: single gap to the next alternative.
        assert!((window_loss(&[1.0, 0.7, 0.4], 2, 2) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn stabilization_scan() {
        let step = |step, starts: Vec<usize>| TraceStep {
            step,
            starts,
            won: vec![],
            social_welfare: 0.0,
            rounds: 1,
            capped: false,
        };
        let stable = Trace {
            steps: vec![step(1, vec![0, 1]), step(2, vec![1, 0]), step(3, vec![1, 0])],
            final_starts: vec![1, 0],
        };
        assert_eq!(starting_resource_stabilization(&stable), Some(2));
        let moving = Trace {
            steps: vec![step(1, vec![0]), step(2, vec![0])],
            final_starts: vec![1],
        };
        assert_eq!(starting_resource_stabilization(&moving), None);
        assert_eq!(starting_resource_stabilization(&Trace::default()), None);
    }

    #[test]
    fn single_agent_game() {
        let inst = row(&[0.2, 0.7, 0.4]);
        let cfg = RunConfig { training_steps: 10, ..RunConfig::default() };
        let (mut game, trace) = train(&inst, &cfg, BackoffModel::default()).unwrap();
        assert_eq!(starting_resource_stabilization(&trace), Some(1));
        let initial = init_learner(&inst, 0, 20).unwrap();
        assert_eq!(game.states()[0].losses(), initial.losses());
        let evals = evaluate(&mut game, 4);
        assert_eq!(evals.len(), 4);
        assert!(evals.iter().all(|a| a.assignment == vec![Some(1)] && a.social_welfare == 0.7));
        assert!(evaluate(&mut game, 0).is_empty());
    }
}
