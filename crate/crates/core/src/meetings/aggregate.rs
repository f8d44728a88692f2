//! Event-side preference aggregation and the meeting loss.

use serde::{Deserialize, Serialize};

use super::instance::MeetingInstance;
use crate::error::{invalid, Result};
use crate::learning::window_loss;

/// Default rank window of [`meeting_loss`].
pub const MEETING_LOSS_WINDOW: usize = 13;

/// A candidate start of one event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Global slot `day * slots_per_day + slot`.
    pub start: usize,
    pub day: usize,
    pub slot: usize,
    /// Summed attendee preference at this start.
    pub joint: f64,
    /// `joint` divided by the largest joint utility of any event.
    pub utility: f64,
}

/// Raw candidates of one event: every feasible start with positive joint
/// utility, sorted descending (ties by earlier start), truncated to
/// `top_slots`. `utility` is left equal to `joint`.
fn raw_candidates(instance: &MeetingInstance, event: usize) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = (0..instance.horizon())
        .filter_map(|t| {
            let joint = instance.joint_utility(event, t);
            (joint > 0.0).then(|| {
                let (day, slot) = instance.split(t);
                Candidate {
                    start: t,
                    day,
                    slot,
                    joint,
                    utility: joint,
                }
            })
        })
        .collect();
    out.sort_by(|a, b| b.joint.total_cmp(&a.joint).then(a.start.cmp(&b.start)));
    out.truncate(instance.top_slots());
    out
}

/// Candidate lists of every event, normalized so that the best event-slot
/// pair of the whole instance has utility exactly 1.
pub fn aggregate_all(instance: &MeetingInstance) -> Vec<Vec<Candidate>> {
    let mut lists: Vec<Vec<Candidate>> = (0..instance.n_events())
        .map(|e| raw_candidates(instance, e))
        .collect();
    let max = lists
        .iter()
        .filter_map(|l| l.first())
        .map(|c| c.joint)
        .fold(0.0f64, f64::max);
    if max > 0.0 {
        for c in lists.iter_mut().flatten() {
            c.utility = c.joint / max;
        }
    }
    lists
}

/// Normalized candidate list of one event. Empty when the event has no
/// feasible start.
pub fn aggregate_event_preferences(instance: &MeetingInstance, event: usize) -> Result<Vec<Candidate>> {
    if event >= instance.n_events() {
        return Err(invalid(format!("event {event} out of range")));
    }
    Ok(aggregate_all(instance).swap_remove(event))
}

/// Mean gap between candidate `i` and candidates `i+1..=k` of a descending
/// utility list; alternatives past the end count as utility 0.
pub fn meeting_loss(utilities: &[f64], i: usize, k: usize) -> Result<f64> {
    if i >= utilities.len() {
        return Err(invalid(format!("index {i} outside list of {}", utilities.len())));
    }
    Ok(window_loss(utilities, i, k))
}

#[cfg(test)]
mod tests {
    use super::super::instance::fixtures::instance;
    use super::*;

    #[test]
    fn joint_sum_zero_drop_and_normalization() {
        let inst = instance(
            3,
            3,
            vec![(1, vec![0, 1]), (1, vec![2])],
            vec![
                vec![vec![0.6, 0.2, 0.9], vec![0.4, 0.5, 0.0]],
                vec![vec![0.5, 0.25, 0.0]],
            ],
        );
        let all = aggregate_all(&inst);
        let e0: Vec<_> = all[0].iter().map(|c| (c.start, c.joint)).collect();
        assert_eq!(e0, vec![(0, 1.0), (1, 0.7)]);
        assert_eq!(all[0][0].utility, 1.0);
        assert_eq!(all[1].iter().map(|c| c.utility).collect::<Vec<_>>(), vec![0.5, 0.25]);
        assert_eq!(aggregate_event_preferences(&inst, 1).unwrap(), all[1]);
        assert!(aggregate_event_preferences(&inst, 2).is_err());
    }

    #[test]
    fn long_events_cannot_start_near_the_end() {
        let inst = instance(3, 1, vec![(2, vec![0])], vec![vec![vec![0.1, 0.2, 0.9]]]);
        let starts: Vec<_> = aggregate_all(&inst)[0].iter().map(|c| c.start).collect();
        assert_eq!(starts, vec![1, 0]);
    }

    #[test]
    fn loss_window_examples() {
        assert!((meeting_loss(&[1.0, 0.8, 0.6], 0, 2).unwrap() - 0.3).abs() < 1e-12);
        assert!((meeting_loss(&[1.0, 0.8, 0.6], 1, 2).unwrap() - 0.2).abs() < 1e-12);
        assert!((meeting_loss(&[0.9], 0, 3).unwrap() - 0.9).abs() < 1e-12);
        assert!(meeting_loss(&[0.9], 1, 3).is_err());
    }
}
