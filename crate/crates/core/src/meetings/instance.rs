//! Meeting instances, schedules and the hard-constraint validators.
//!
//! Time is indexed by a global slot `t = day * slots_per_day + slot`. An event
//! of length `len` starting at `t` occupies the half-open interval
//! `[t, t + len)` and may cross day boundaries, but never the end of the
//! calendar.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, io_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Duration in slots, at least 1.
    pub length: usize,
    /// Participant ids, sorted and unique.
    pub participants: Vec<usize>,
    /// Optional `[lo, hi)` global-slot window the event must fit into.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(usize, usize)>,
}

impl Event {
    pub fn new(length: usize, mut participants: Vec<usize>) -> Self {
        participants.sort_unstable();
        participants.dedup();
        Self {
            length,
            participants,
            window: None,
        }
    }
}

/// A meeting-scheduling problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeetingFile", into = "MeetingFile")]
pub struct MeetingInstance {
    days: usize,
    slots_per_day: usize,
    events: Vec<Event>,
    positions: Vec<(f64, f64)>,
    pref: Vec<Vec<f64>>,
    blocked: Vec<Vec<usize>>,
    top_slots: usize,
}

/// Serialized layout of a [`MeetingInstance`].
///
/// `pref[e]` is row-major over (attendee index within `events[e].participants`,
/// global slot), i.e. `pref[e][i * days * slots_per_day + t]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeetingFile {
    pub days: usize,
    pub slots_per_day: usize,
    pub events: Vec<Event>,
    /// Plane coordinates of every participant in `[0, 1]^2`.
    pub positions: Vec<(f64, f64)>,
    pub pref: Vec<Vec<f64>>,
    /// Blocked global slots of every participant (zero preference).
    #[serde(default)]
    pub blocked: Vec<Vec<usize>>,
    pub top_slots: usize,
}

impl TryFrom<MeetingFile> for MeetingInstance {
    type Error = Error;

    fn try_from(f: MeetingFile) -> Result<Self> {
        MeetingInstance::new(f)
    }
}

impl From<MeetingInstance> for MeetingFile {
    fn from(m: MeetingInstance) -> Self {
        MeetingFile {
            days: m.days,
            slots_per_day: m.slots_per_day,
            events: m.events,
            positions: m.positions,
            pref: m.pref,
            blocked: m.blocked,
            top_slots: m.top_slots,
        }
    }
}

impl MeetingInstance {
    pub fn new(mut f: MeetingFile) -> Result<Self> {
        if f.days == 0 || f.slots_per_day == 0 {
            return Err(invalid("calendar needs at least one day and one slot"));
        }
        if f.top_slots == 0 {
            return Err(invalid("top_slots must be >= 1"));
        }
        let horizon = f.days * f.slots_per_day;
        let n_participants = f.positions.len();
        if f.pref.len() != f.events.len() {
            return Err(invalid("one preference table per event required"));
        }
        for (e, event) in f.events.iter_mut().enumerate() {
            event.participants.sort_unstable();
            event.participants.dedup();
            if event.length == 0 {
                return Err(invalid(format!("event {e} has zero length")));
            }
            if event.participants.is_empty() {
                return Err(invalid(format!("event {e} has no participants")));
            }
            if let Some(&p) = event.participants.iter().find(|&&p| p >= n_participants) {
                return Err(invalid(format!("event {e} lists unknown participant {p}")));
            }
            if let Some((lo, hi)) = event.window {
                if lo >= hi || hi > horizon {
                    return Err(invalid(format!("event {e} window [{lo}, {hi}) outside calendar")));
                }
            }
            let expected = event.participants.len() * horizon;
            if f.pref[e].len() != expected {
                return Err(invalid(format!(
                    "event {e} preference table has {} entries, expected {expected}",
                    f.pref[e].len()
                )));
            }
            if let Some(v) = f.pref[e].iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(invalid(format!("event {e} has preference {v} outside [0, 1]")));
            }
        }
        if f.blocked.is_empty() {
            f.blocked = vec![Vec::new(); n_participants];
        }
        if f.blocked.len() != n_participants {
            return Err(invalid("one blocked list per participant required"));
        }
        if f.blocked.iter().flatten().any(|&t| t >= horizon) {
            return Err(invalid("blocked slot outside calendar"));
        }
        Ok(Self {
            days: f.days,
            slots_per_day: f.slots_per_day,
            events: f.events,
            positions: f.positions,
            pref: f.pref,
            blocked: f.blocked,
            top_slots: f.top_slots,
        })
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn slots_per_day(&self) -> usize {
        self.slots_per_day
    }

    /// Total number of global slots.
    pub fn horizon(&self) -> usize {
        self.days * self.slots_per_day
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn n_participants(&self) -> usize {
        self.positions.len()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event(&self, e: usize) -> &Event {
        &self.events[e]
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn blocked(&self) -> &[Vec<usize>] {
        &self.blocked
    }

    pub fn top_slots(&self) -> usize {
        self.top_slots
    }

    pub fn pref_table(&self, e: usize) -> &[f64] {
        &self.pref[e]
    }

    /// Preference of the `i`-th attendee of event `e` for starting at `t`.
    #[inline]
    pub fn pref(&self, e: usize, i: usize, t: usize) -> f64 {
        self.pref[e][i * self.horizon() + t]
    }

    /// `(day, slot)` of a global slot.
    pub fn split(&self, t: usize) -> (usize, usize) {
        (t / self.slots_per_day, t % self.slots_per_day)
    }

    /// Whether event `e` fits the calendar (and its window) when starting at `t`.
    pub fn fits(&self, e: usize, t: usize) -> bool {
        let event = &self.events[e];
        let (lo, hi) = event.window.unwrap_or((0, self.horizon()));
        t >= lo && t + event.length <= hi
    }

    /// Summed attendee preference at `t`, or 0 when any attendee is
    /// unavailable there or the event does not fit.
    pub fn joint_utility(&self, e: usize, t: usize) -> f64 {
        if !self.fits(e, t) {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..self.events[e].participants.len() {
            let p = self.pref(e, i, t);
            if p == 0.0 {
                return 0.0;
            }
            sum += p;
        }
        sum
    }

    /// `shares[a][b]`: events `a` and `b` have a common participant.
    pub fn shared_participants(&self) -> Vec<Vec<bool>> {
        let n = self.events.len();
        let mut by_participant = vec![Vec::new(); self.n_participants()];
        for (e, event) in self.events.iter().enumerate() {
            for &p in &event.participants {
                by_participant[p].push(e);
            }
        }
        let mut shares = vec![vec![false; n]; n];
        for events in by_participant {
            for &a in &events {
                for &b in &events {
                    shares[a][b] = true;
                }
            }
        }
        shares
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text + "\n").map_err(io_err(path))
    }
}

/// Whether `[a, a + la)` and `[b, b + lb)` intersect.
#[inline]
pub fn intervals_overlap(a: usize, la: usize, b: usize, lb: usize) -> bool {
    a < b + lb && b < a + la
}

/// Start slot per event (`None` = unscheduled) and its social welfare: the
/// summed attendee preferences of every scheduled event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub starts: Vec<Option<usize>>,
    pub social_welfare: f64,
}

impl Schedule {
    pub fn new(instance: &MeetingInstance, starts: Vec<Option<usize>>) -> Self {
        let social_welfare = starts
            .iter()
            .enumerate()
            .filter_map(|(e, t)| t.map(|t| raw_sum(instance, e, t)))
            .sum();
        Self {
            starts,
            social_welfare,
        }
    }

    pub fn empty(n_events: usize) -> Self {
        Self {
            starts: vec![None; n_events],
            social_welfare: 0.0,
        }
    }

    pub fn scheduled(&self) -> usize {
        self.starts.iter().filter(|s| s.is_some()).count()
    }
}

fn raw_sum(instance: &MeetingInstance, e: usize, t: usize) -> f64 {
    (0..instance.events[e].participants.len())
        .map(|i| instance.pref(e, i, t))
        .sum()
}

/// Checks both hard constraints (no overlapping events with a common
/// participant; no event where an attendee has preference 0), calendar fit
/// and the recorded social welfare.
pub fn validate_schedule(instance: &MeetingInstance, schedule: &Schedule) -> Result<()> {
    if schedule.starts.len() != instance.n_events() {
        return Err(Error::Violation(format!(
            "schedule covers {} events, instance has {}",
            schedule.starts.len(),
            instance.n_events()
        )));
    }
    for (e, start) in schedule.starts.iter().enumerate() {
        let Some(t) = *start else { continue };
        if !instance.fits(e, t) {
            return Err(Error::Violation(format!("event {e} at slot {t} does not fit the calendar")));
        }
        for (i, &p) in instance.events[e].participants.iter().enumerate() {
            if instance.pref(e, i, t) == 0.0 {
                return Err(Error::Violation(format!(
                    "event {e} at slot {t}: participant {p} is unavailable"
                )));
            }
        }
    }
    let shares = instance.shared_participants();
    for a in 0..instance.n_events() {
        let Some(ta) = schedule.starts[a] else { continue };
        for b in a + 1..instance.n_events() {
            let Some(tb) = schedule.starts[b] else { continue };
            if shares[a][b]
                && intervals_overlap(ta, instance.events[a].length, tb, instance.events[b].length)
            {
                return Err(Error::Violation(format!(
                    "events {a} (slot {ta}) and {b} (slot {tb}) share a participant and overlap"
                )));
            }
        }
    }
    let recomputed = Schedule::new(instance, schedule.starts.clone()).social_welfare;
    if (recomputed - schedule.social_welfare).abs() > 1e-9 {
        return Err(Error::Violation(format!(
            "recorded social welfare {} differs from recomputed {recomputed}",
            schedule.social_welfare
        )));
    }
    Ok(())
}

/// Per-participant realized preference, summed over their scheduled events.
pub fn participant_values(instance: &MeetingInstance, schedule: &Schedule) -> Vec<f64> {
    let mut values = vec![0.0; instance.n_participants()];
    for (e, start) in schedule.starts.iter().enumerate() {
        let Some(t) = *start else { continue };
        for (i, &p) in instance.events[e].participants.iter().enumerate() {
            values[p] += instance.pref(e, i, t);
        }
    }
    values
}

/// Per-event realized joint preference (0 when unscheduled).
pub fn event_values(instance: &MeetingInstance, schedule: &Schedule) -> Vec<f64> {
    schedule
        .starts
        .iter()
        .enumerate()
        .map(|(e, t)| t.map_or(0.0, |t| raw_sum(instance, e, t)))
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// One day of `slots` slots; `prefs[e][i]` is a per-slot row for attendee `i`.
    pub fn instance(
        slots: usize,
        n_participants: usize,
        events: Vec<(usize, Vec<usize>)>,
        prefs: Vec<Vec<Vec<f64>>>,
    ) -> MeetingInstance {
        MeetingInstance::new(MeetingFile {
            days: 1,
            slots_per_day: slots,
            events: events.into_iter().map(|(len, ps)| Event::new(len, ps)).collect(),
            positions: vec![(0.5, 0.5); n_participants],
            pref: prefs.into_iter().map(|rows| rows.concat()).collect(),
            blocked: vec![],
            top_slots: 24,
        })
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::instance;
    use super::*;

    #[test]
    fn overlap_rule() {
        assert!(intervals_overlap(4, 2, 5, 1));
        assert!(!intervals_overlap(4, 1, 5, 1));
        assert!(!intervals_overlap(5, 1, 4, 1));
        assert!(intervals_overlap(0, 10, 3, 1));
    }

    #[test]
    fn validators_catch_both_constraints() {
        let inst = instance(
            4,
            2,
            vec![(2, vec![0]), (1, vec![0, 1])],
            vec![vec![vec![0.5, 0.6, 0.7, 0.8]], vec![vec![0.9, 0.0, 0.4, 0.3], vec![0.2, 0.2, 0.2, 0.2]]],
        );
        let ok = Schedule::new(&inst, vec![Some(0), Some(2)]);
        assert!(validate_schedule(&inst, &ok).is_ok());
        assert!((ok.social_welfare - (0.5 + 0.4 + 0.2)).abs() < 1e-12);

        let overlap = Schedule::new(&inst, vec![Some(0), Some(0)]);
        assert!(validate_schedule(&inst, &overlap).unwrap_err().to_string().contains("overlap"));

        let unavailable = Schedule::new(&inst, vec![None, Some(1)]);
        assert!(validate_schedule(&inst, &unavailable).unwrap_err().to_string().contains("unavailable"));

        let past_end = Schedule::new(&inst, vec![Some(3), None]);
        assert!(validate_schedule(&inst, &past_end).is_err());

        assert_eq!(participant_values(&inst, &ok), vec![0.9, 0.2]);
        assert_eq!(event_values(&inst, &ok), vec![0.5, 0.6000000000000001]);
    }

    #[test]
    fn rejects_malformed_files() {
        let bad = MeetingFile {
            days: 1,
            slots_per_day: 2,
            events: vec![Event::new(1, vec![3])],
            positions: vec![(0.0, 0.0)],
            pref: vec![vec![0.5, 0.5]],
            blocked: vec![],
            top_slots: 24,
        };
        assert!(MeetingInstance::new(bad).is_err());
    }
}
