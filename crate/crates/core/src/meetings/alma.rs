//! ALMA and ALMA-Learning on meeting instances.
//!
//! Events act as agents and global start slots as resources. The
//! representation-agents are the participant calendars held by
//! [`MeetingArena`]: they answer availability queries and flag colliding
//! proposals, and event agents only ever see those answers.

use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_all, Candidate, MEETING_LOSS_WINDOW};
use super::instance::{intervals_overlap, MeetingInstance, Schedule};
use crate::engine::{BackoffModel, StageArena, StageOutcome};
use crate::error::Result;
use crate::learning::{AgentLearnerState, LossInit, RepeatedGame, Trace};
use crate::model::RunConfig;

/// Participant calendars of one stage game.
#[derive(Debug, Clone)]
pub struct MeetingArena<'a> {
    instance: &'a MeetingInstance,
    /// Event id of every agent. Events without candidates are not agents.
    events: Vec<usize>,
    options: Vec<Vec<usize>>,
    /// `busy[p * horizon + t]`
    busy: Vec<bool>,
    by_participant: Vec<Vec<usize>>,
}

impl<'a> MeetingArena<'a> {
    pub fn new(instance: &'a MeetingInstance, candidates: &[Vec<Candidate>]) -> Self {
        let events: Vec<usize> = (0..instance.n_events())
            .filter(|&e| !candidates[e].is_empty())
            .collect();
        let options = events
            .iter()
            .map(|&e| candidates[e].iter().map(|c| c.start).collect())
            .collect();
        Self {
            instance,
            events,
            options,
            busy: vec![false; instance.n_participants() * instance.horizon()],
            by_participant: vec![Vec::new(); instance.n_participants()],
        }
    }

    /// Event represented by `agent`.
    pub fn event_of(&self, agent: usize) -> usize {
        self.events[agent]
    }

    /// Per-event schedule of a stage outcome.
    pub fn schedule(&self, outcome: &StageOutcome) -> Schedule {
        let mut starts = vec![None; self.instance.n_events()];
        for (agent, start) in outcome.resources.iter().enumerate() {
            starts[self.events[agent]] = *start;
        }
        Schedule::new(self.instance, starts)
    }

    fn span(&self, agent: usize, start: usize) -> std::ops::Range<usize> {
        start..start + self.instance.event(self.events[agent]).length
    }
}

impl StageArena for MeetingArena<'_> {
    fn n_agents(&self) -> usize {
        self.events.len()
    }

    fn options(&self, agent: usize) -> &[usize] {
        &self.options[agent]
    }

    fn reset(&mut self) {
        self.busy.fill(false);
    }

    fn is_free(&self, agent: usize, start: usize) -> bool {
        let horizon = self.instance.horizon();
        let span = self.span(agent, start);
        self.instance.event(self.events[agent]).participants.iter().all(|&p| {
            let row = &self.busy[p * horizon..(p + 1) * horizon];
            !row[span.clone()].iter().any(|&b| b)
        })
    }

    fn find_collisions(&mut self, bids: &[(usize, usize)], collided: &mut Vec<bool>) {
        collided.clear();
        collided.extend(bids.iter().map(|&(agent, start)| !self.is_free(agent, start)));
        for (i, &(agent, _)) in bids.iter().enumerate() {
            for &p in &self.instance.event(self.events[agent]).participants {
                self.by_participant[p].push(i);
            }
        }
        for p in 0..self.by_participant.len() {
            let group = &self.by_participant[p];
            for (x, &i) in group.iter().enumerate() {
                for &j in &group[x + 1..] {
                    let (a, sa) = bids[i];
                    let (b, sb) = bids[j];
                    let la = self.instance.event(self.events[a]).length;
                    let lb = self.instance.event(self.events[b]).length;
                    if intervals_overlap(sa, la, sb, lb) {
                        collided[i] = true;
                        collided[j] = true;
                    }
                }
            }
        }
        for group in &mut self.by_participant {
            group.clear();
        }
    }

    fn commit(&mut self, agent: usize, start: usize) {
        let horizon = self.instance.horizon();
        let span = self.span(agent, start);
        for &p in &self.instance.event(self.events[agent]).participants {
            for t in span.clone() {
                let slot = &mut self.busy[p * horizon + t];
                assert!(!*slot, "participant {p} double-booked at slot {t}");
                *slot = true;
            }
        }
    }
}

/// Knobs of the meeting variant of ALMA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingAlmaOptions {
    pub model: BackoffModel,
    /// Rank window `k` of the initial loss.
    pub loss_window: usize,
}

impl Default for MeetingAlmaOptions {
    fn default() -> Self {
        Self {
            model: BackoffModel::meeting_default(),
            loss_window: MEETING_LOSS_WINDOW,
        }
    }
}

/// Result of scheduling with ALMA.
#[derive(Debug, Clone)]
pub struct MeetingRun {
    /// One schedule per evaluation stage game.
    pub schedules: Vec<Schedule>,
    /// Training trace over event agents (empty without learning).
    pub trace: Trace,
    pub rounds: Vec<usize>,
    pub anomalies: usize,
}

/// ALMA-Learning game over a meeting instance.
pub type MeetingGame<'a> = RepeatedGame<MeetingArena<'a>>;

pub fn new_meeting_game<'a>(
    instance: &'a MeetingInstance,
    config: &RunConfig,
    options: &MeetingAlmaOptions,
) -> Result<MeetingGame<'a>> {
    config.validate()?;
    let candidates = aggregate_all(instance);
    let arena = MeetingArena::new(instance, &candidates);
    let init = LossInit::Window {
        k: options.loss_window,
    };
    let states = arena
        .events
        .iter()
        .map(|&e| {
            let list = &candidates[e];
            AgentLearnerState::new(
                list.iter().map(|c| c.start).collect(),
                list.iter().map(|c| c.utility).collect(),
                init,
                config.history_len,
            )
        })
        .collect();
    RepeatedGame::new(
        arena,
        states,
        options.model.clone(),
        config.alpha,
        config.round_cap_for(instance.horizon()),
        config.seed,
    )
}

/// Schedules the instance. Without learning a single stage game is played;
/// with learning `config.training_steps` training games precede
/// `config.eval_steps` frozen evaluation games.
pub fn schedule_with_alma(
    instance: &MeetingInstance,
    learning: bool,
    config: &RunConfig,
    options: &MeetingAlmaOptions,
) -> Result<MeetingRun> {
    let mut game = new_meeting_game(instance, config, options)?;
    let (trace, eval_steps) = if learning {
        (game.train(config.training_steps), config.eval_steps)
    } else {
        (game.train(0), 1)
    };
    let outcomes = game.evaluate(eval_steps);
    let arena = game.arena();
    Ok(MeetingRun {
        schedules: outcomes.iter().map(|o| arena.schedule(o)).collect(),
        rounds: outcomes.iter().map(|o| o.rounds).collect(),
        anomalies: outcomes.iter().map(StageOutcome::anomalies).sum::<usize>() + trace.anomalies(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::super::instance::fixtures::instance;
    use super::super::instance::validate_schedule;
    use super::*;

    fn config(seed: u64) -> RunConfig {
        RunConfig {
            seed,
            training_steps: 64,
            eval_steps: 4,
            ..RunConfig::default()
        }
    }

    #[test]
    fn disjoint_events_share_their_best_slot() {
        let inst = instance(
            3,
            2,
            vec![(1, vec![0]), (1, vec![1])],
            vec![vec![vec![0.2, 0.9, 0.1]], vec![vec![0.3, 0.8, 0.1]]],
        );
        let run = schedule_with_alma(&inst, false, &config(1), &MeetingAlmaOptions::default()).unwrap();
        assert_eq!(run.schedules[0].starts, vec![Some(1), Some(1)]);
        assert_eq!(run.rounds, vec![1]);
    }

    #[test]
    fn overlapping_proposals_collide() {
        let inst = instance(
            4,
            1,
            vec![(2, vec![0]), (1, vec![0])],
            vec![vec![vec![0.5; 4]], vec![vec![0.5; 4]]],
        );
        let candidates = aggregate_all(&inst);
        let mut arena = MeetingArena::new(&inst, &candidates);
        let mut collided = Vec::new();
        arena.find_collisions(&[(0, 1), (1, 2)], &mut collided);
        assert_eq!(collided, vec![true, true]);
        arena.find_collisions(&[(0, 0), (1, 2)], &mut collided);
        assert_eq!(collided, vec![false, false]);
        arena.commit(0, 0);
        assert!(!arena.is_free(1, 1));
        assert!(arena.is_free(1, 2));
    }

    #[test]
    fn learning_schedules_are_valid_and_deterministic() {
        let inst = instance(
            6,
            3,
            vec![(2, vec![0, 1]), (1, vec![1, 2]), (3, vec![0, 2])],
            vec![
                vec![vec![0.9, 0.8, 0.7, 0.2, 0.1, 0.4], vec![0.6, 0.9, 0.1, 0.3, 0.5, 0.5]],
                vec![vec![0.5, 0.9, 0.6, 0.2, 0.4, 0.3], vec![0.7, 0.8, 0.4, 0.4, 0.1, 0.9]],
                vec![vec![0.4, 0.6, 0.9, 0.9, 0.3, 0.2], vec![0.8, 0.5, 0.7, 0.6, 0.2, 0.1]],
            ],
        );
        let a = schedule_with_alma(&inst, true, &config(5), &MeetingAlmaOptions::default()).unwrap();
        let b = schedule_with_alma(&inst, true, &config(5), &MeetingAlmaOptions::default()).unwrap();
        assert_eq!(a.schedules, b.schedules);
        assert_eq!(a.trace.steps.len(), 64);
        for s in &a.schedules {
            validate_schedule(&inst, s).unwrap();
        }
        assert_eq!(a.anomalies, 0);
    }
}
