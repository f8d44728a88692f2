//! Reference schedulers: MSRAC, randomized greedy and an exhaustive oracle.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_all, Candidate};
use super::instance::{intervals_overlap, MeetingInstance, Schedule};
use crate::error::{invalid, Result};

/// Largest search space `prod_e (candidates_e + 1)` accepted by
/// [`brute_force_schedule`].
pub const BRUTE_FORCE_SCHEDULE_MAX: u64 = 10_000_000;

/// Committed starts plus the events each event shares a participant with.
struct Board<'a> {
    instance: &'a MeetingInstance,
    neighbors: Vec<Vec<usize>>,
    starts: Vec<Option<usize>>,
}

impl<'a> Board<'a> {
    fn new(instance: &'a MeetingInstance) -> Self {
        let shares = instance.shared_participants();
        let neighbors = shares
            .iter()
            .enumerate()
            .map(|(e, row)| (0..row.len()).filter(|&x| x != e && row[x]).collect())
            .collect();
        Self {
            instance,
            neighbors,
            starts: vec![None; instance.n_events()],
        }
    }

    fn conflicts(&self, e: usize, t: usize) -> impl Iterator<Item = usize> + '_ {
        let len = self.instance.event(e).length;
        self.neighbors[e].iter().copied().filter(move |&x| {
            self.starts[x]
                .is_some_and(|tx| intervals_overlap(t, len, tx, self.instance.event(x).length))
        })
    }

    fn is_free(&self, e: usize, t: usize) -> bool {
        self.conflicts(e, t).next().is_none()
    }

    fn into_schedule(self) -> Schedule {
        Schedule::new(self.instance, self.starts)
    }
}

/// MSRAC result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsracOutcome {
    pub schedule: Schedule,
    pub proposals: usize,
    /// Set when the proposal cap stopped the protocol before it settled.
    pub anomaly: bool,
}

/// Importance of every event: mean attendee preference over its candidate
/// slots times the number of attendees, i.e. the mean joint utility.
pub fn msrac_importance(candidates: &[Vec<Candidate>]) -> Vec<f64> {
    candidates
        .iter()
        .map(|list| {
            if list.is_empty() {
                0.0
            } else {
                list.iter().map(|c| c.joint).sum::<f64>() / list.len() as f64
            }
        })
        .collect()
}

/// Propose/accept/reject scheduling by importance.
///
/// Events propose their candidates in descending joint utility. A proposal
/// is accepted when every conflicting committed event is less important
/// (those are bumped and propose their next slot), or equally important with
/// a lower joint utility at its slot. Otherwise it is rejected and the event
/// moves on to its next candidate. Exhausted events stay unscheduled.
pub fn msrac(instance: &MeetingInstance) -> MsracOutcome {
    let candidates = aggregate_all(instance);
    let importance = msrac_importance(&candidates);
    let n = instance.n_events();
    let mut board = Board::new(instance);
    let mut pointer = vec![0usize; n];
    let mut joint_at = vec![0.0f64; n];

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    let mut queue: VecDeque<usize> = order.into();

    let total: usize = candidates.iter().map(|c| c.len() + 1).sum();
    let cap = 4 * total + 4 * n;
    let mut proposals = 0;
    let mut anomaly = false;
    while let Some(e) = queue.pop_front() {
        let Some(&c) = candidates[e].get(pointer[e]) else {
            continue;
        };
        if proposals == cap {
            anomaly = true;
            break;
        }
        proposals += 1;
        let conflicting: Vec<usize> = board.conflicts(e, c.start).collect();
        let wins = |x: usize| {
            importance[e] > importance[x]
                || (importance[e] == importance[x]
                    && (c.joint > joint_at[x] || (c.joint == joint_at[x] && e < x)))
        };
        if conflicting.iter().all(|&x| wins(x)) {
            board.starts[e] = Some(c.start);
            joint_at[e] = c.joint;
            for x in conflicting {
                board.starts[x] = None;
                pointer[x] += 1;
                queue.push_back(x);
            }
        } else {
            pointer[e] += 1;
            queue.push_front(e);
        }
    }
    MsracOutcome {
        schedule: board.into_schedule(),
        proposals,
        anomaly,
    }
}

/// Random event order; each event takes its best candidate that does not
/// conflict with the events placed before it.
pub fn greedy_meetings<R: Rng + ?Sized>(instance: &MeetingInstance, rng: &mut R) -> Schedule {
    let mut order: Vec<usize> = (0..instance.n_events()).collect();
    order.shuffle(rng);
    greedy_meetings_in_order(instance, &order)
}

pub fn greedy_meetings_in_order(instance: &MeetingInstance, order: &[usize]) -> Schedule {
    let candidates = aggregate_all(instance);
    let mut board = Board::new(instance);
    for &e in order {
        if let Some(c) = candidates[e].iter().find(|c| board.is_free(e, c.start)) {
            board.starts[e] = Some(c.start);
        }
    }
    board.into_schedule()
}

/// Best schedule over every assignment of events to one of their candidate
/// starts or to nothing.
pub fn brute_force_schedule(instance: &MeetingInstance) -> Result<Schedule> {
    let candidates = aggregate_all(instance);
    let space = candidates
        .iter()
        .try_fold(1u64, |acc, c| acc.checked_mul(c.len() as u64 + 1))
        .filter(|&s| s <= BRUTE_FORCE_SCHEDULE_MAX);
    if space.is_none() {
        return Err(invalid(format!(
            "schedule search space exceeds {BRUTE_FORCE_SCHEDULE_MAX} assignments"
        )));
    }

    // Optimistic completion bound: every remaining event at its best slot.
    let mut bound = vec![0.0; candidates.len() + 1];
    for e in (0..candidates.len()).rev() {
        bound[e] = bound[e + 1] + candidates[e].first().map_or(0.0, |c| c.joint);
    }

    struct Search<'a, 'b> {
        board: Board<'a>,
        candidates: &'b [Vec<Candidate>],
        bound: &'b [f64],
        best: Vec<Option<usize>>,
        best_sw: f64,
    }

    impl Search<'_, '_> {
        fn visit(&mut self, e: usize, sw: f64) {
            if e == self.candidates.len() {
                if sw > self.best_sw {
                    self.best_sw = sw;
                    self.best.clone_from(&self.board.starts);
                }
                return;
            }
            if sw + self.bound[e] <= self.best_sw {
                return;
            }
            for i in 0..self.candidates[e].len() {
                let c = self.candidates[e][i];
                if self.board.is_free(e, c.start) {
                    self.board.starts[e] = Some(c.start);
                    self.visit(e + 1, sw + c.joint);
                    self.board.starts[e] = None;
                }
            }
            self.visit(e + 1, sw);
        }
    }

    let mut search = Search {
        board: Board::new(instance),
        candidates: &candidates,
        bound: &bound,
        best: vec![None; instance.n_events()],
        best_sw: f64::NEG_INFINITY,
    };
    search.visit(0, 0.0);
    Ok(Schedule::new(instance, search.best))
}

#[cfg(test)]
mod tests {
    use super::super::instance::fixtures::instance;
    use super::super::instance::validate_schedule;
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn single_event_takes_its_best_slot() {
        let inst = instance(4, 2, vec![(1, vec![0, 1])], vec![vec![vec![0.2, 0.9, 0.5, 0.0], vec![0.2, 0.3, 0.6, 0.9]]]);
        let best = Some(1);
        assert_eq!(msrac(&inst).schedule.starts, vec![best]);
        assert_eq!(greedy_meetings(&inst, &mut rng_from_seed(0)).starts, vec![best]);
        assert_eq!(brute_force_schedule(&inst).unwrap().starts, vec![best]);
    }

    #[test]
    fn msrac_more_important_event_keeps_the_slot() {
        // Both want slot 0; event 1 has two attendees and matters more.
        let inst = instance(
            3,
            2,
            vec![(1, vec![0]), (1, vec![0, 1])],
            vec![vec![vec![0.9, 0.5, 0.0]], vec![vec![0.9, 0.1, 0.0], vec![0.9, 0.1, 0.0]]],
        );
        let out = msrac(&inst);
        assert!(!out.anomaly);
        assert_eq!(out.schedule.starts, vec![Some(1), Some(0)]);
    }

    #[test]
    fn msrac_equal_importance_keeps_the_higher_utility() {
        // Identical importance (mean 0.5); event 1 values slot 1 more than event 0 values slot 0.
        let inst = instance(
            2,
            1,
            vec![(2, vec![0]), (1, vec![0])],
            vec![vec![vec![0.5, 0.0]], vec![vec![0.4, 0.6]]],
        );
        let out = msrac(&inst);
        assert_eq!(out.schedule.starts, vec![None, Some(1)]);
        validate_schedule(&inst, &out.schedule).unwrap();
    }

    #[test]
    fn greedy_first_drawn_event_wins() {
        let inst = instance(
            2,
            1,
            vec![(1, vec![0]), (1, vec![0])],
            vec![vec![vec![0.9, 0.2]], vec![vec![0.8, 0.7]]],
        );
        assert_eq!(greedy_meetings_in_order(&inst, &[0, 1]).starts, vec![Some(0), Some(1)]);
        assert_eq!(greedy_meetings_in_order(&inst, &[1, 0]).starts, vec![Some(1), Some(0)]);
    }

    #[test]
    fn oracle_on_a_conflicting_pair() {
        let inst = instance(
            2,
            1,
            vec![(2, vec![0]), (1, vec![0])],
            vec![vec![vec![0.9, 0.0]], vec![vec![0.5, 0.6]]],
        );
        // The long event blocks the whole day; 0.9 beats 0.6.
        let best = brute_force_schedule(&inst).unwrap();
        assert_eq!(best.starts, vec![Some(0), None]);
        assert!((best.social_welfare - 0.9).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_huge_spaces() {
        let events: Vec<_> = (0..8).map(|_| (1, vec![0])).collect();
        let prefs = vec![vec![vec![0.5; 24]]; 8];
        let inst = instance(24, 1, events, prefs);
        assert!(brute_force_schedule(&inst).is_err());
    }
}
