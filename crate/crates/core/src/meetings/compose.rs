//! Building long calendars out of short sub-instances.

use serde::{Deserialize, Serialize};

use super::instance::{Event, MeetingFile, MeetingInstance};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// Every event sees its sub-instance preferences repeated on every
    /// day band, so participants are indifferent to the day.
    Periodic,
    /// Every event is windowed to its own day band. Bands never interact,
    /// so the composed optimum is the sum of the sub-instance optima.
    DayBand,
}

/// Concatenates the calendars of `subs` day-wise. Sub-instances must agree on
/// participants and slots per day; participant positions come from the first.
pub fn compose_large_instance(subs: &[MeetingInstance], composition: Composition) -> Result<MeetingInstance> {
    let first = subs.first().ok_or_else(|| invalid("nothing to compose"))?;
    let slots = first.slots_per_day();
    let n_participants = first.n_participants();
    if let Some(i) = subs
        .iter()
        .position(|s| s.slots_per_day() != slots || s.n_participants() != n_participants)
    {
        return Err(invalid(format!("sub-instance {i} has mismatched dimensions")));
    }
    if let Some(i) = subs.iter().position(|s| s.top_slots() != first.top_slots()) {
        return Err(invalid(format!("sub-instance {i} has a different top_slots")));
    }
    let days: usize = subs.iter().map(MeetingInstance::days).sum();
    let horizon = days * slots;

    let mut events = Vec::new();
    let mut pref = Vec::new();
    let mut blocked = vec![Vec::new(); n_participants];
    let mut offset = 0;
    for sub in subs {
        let band = sub.horizon();
        for (e, event) in sub.events().iter().enumerate() {
            let window = match composition {
                Composition::Periodic => event.window.map(|(lo, hi)| (lo + offset, hi + offset)),
                Composition::DayBand => {
                    let (lo, hi) = event.window.unwrap_or((0, band));
                    Some((lo + offset, hi + offset))
                }
            };
            events.push(Event {
                window,
                ..event.clone()
            });
            let table = sub.pref_table(e);
            let mut composed = Vec::with_capacity(event.participants.len() * horizon);
            for i in 0..event.participants.len() {
                let row = &table[i * band..(i + 1) * band];
                composed.extend((0..horizon).map(|t| row[t % band]));
            }
            pref.push(composed);
        }
        for (p, slots) in sub.blocked().iter().enumerate() {
            blocked[p].extend(slots.iter().map(|t| t + offset));
        }
        offset += band;
    }
    MeetingInstance::new(MeetingFile {
        days,
        slots_per_day: slots,
        events,
        positions: first.positions().to_vec(),
        pref,
        blocked,
        top_slots: first.top_slots(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meetings::generate::{generate_meeting_instance, MeetingGenParams};

    #[test]
    fn single_sub_instance_is_unchanged() {
        let sub = generate_meeting_instance(5, 6, 1, 12, &MeetingGenParams::default(), 4).unwrap();
        assert_eq!(compose_large_instance(&[sub.clone()], Composition::Periodic).unwrap(), sub);
    }

    #[test]
    fn seven_days_of_ten_events() {
        let subs: Vec<_> = (0..7)
            .map(|d| generate_meeting_instance(10, 12, 1, 24, &MeetingGenParams::default(), d).unwrap())
            .collect();
        for composition in [Composition::Periodic, Composition::DayBand] {
            let week = compose_large_instance(&subs, composition).unwrap();
            assert_eq!(week.n_events(), 70);
            assert_eq!(week.days(), 7);
            // Day 3 event 2 sees its own day-one preferences on every day.
            let e = 3 * 10 + 2;
            for t in 0..24 {
                assert_eq!(week.pref(e, 0, t + 5 * 24), subs[3].pref(2, 0, t));
            }
        }
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let a = generate_meeting_instance(3, 6, 1, 12, &MeetingGenParams::default(), 1).unwrap();
        let b = generate_meeting_instance(3, 7, 1, 12, &MeetingGenParams::default(), 1).unwrap();
        assert!(compose_large_instance(&[a, b], Composition::Periodic).is_err());
        assert!(compose_large_instance(&[], Composition::DayBand).is_err());
    }
}
