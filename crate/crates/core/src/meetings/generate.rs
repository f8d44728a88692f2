//! Synthetic meeting instances.
//!
//! Lengths and attendance are drawn from truncated logistic distributions,
//! participants are placed on the unit square by an iterative cluster
//! process, and preferences follow a time-of-day curve scaled by a decay over
//! days plus Gaussian noise.

use rand::seq::index::sample_weighted;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::instance::{Event, MeetingFile, MeetingInstance};
use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

/// Logistic distribution `F(x) = 1 / (1 + exp(-steepness (x - midpoint)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticCurve {
    pub midpoint: f64,
    pub steepness: f64,
}

impl LogisticCurve {
    pub fn cdf(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-self.steepness * (x - self.midpoint)).exp())
    }

    fn quantile(&self, p: f64) -> f64 {
        self.midpoint + (p / (1.0 - p)).ln() / self.steepness
    }

    /// Integer draw from the distribution conditioned on `x > 0`, rounded up
    /// and clamped to `[1, max]`.
    pub fn sample_count<R: Rng + ?Sized>(&self, rng: &mut R, max: usize) -> usize {
        let lo = self.cdf(0.0);
        let p = lo + (1.0 - lo) * rng.random::<f64>();
        let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        let x = self.quantile(p).ceil();
        if x.is_nan() || x < 1.0 {
            1
        } else {
            (x as usize).min(max).max(1)
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.steepness > 0.0 && self.steepness.is_finite() && self.midpoint.is_finite()) {
            return Err(invalid(format!("{what} curve needs finite midpoint and positive steepness")));
        }
        Ok(())
    }
}

/// Gaussian bump in hours of the day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub hour: f64,
    pub width: f64,
    pub height: f64,
}

/// Preference over the slots of a day: a sum of bumps clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeOfDayCurve {
    pub bumps: Vec<Bump>,
}

impl Default for TimeOfDayCurve {
    /// Morning peak, lunch dip, smaller afternoon peak, nothing at night.
    fn default() -> Self {
        Self {
            bumps: vec![
                Bump {
                    hour: 10.0,
                    width: 1.8,
                    height: 0.9,
                },
                Bump {
                    hour: 15.0,
                    width: 2.0,
                    height: 0.8,
                },
            ],
        }
    }
}

impl TimeOfDayCurve {
    /// Value at `slot` of a day split into `slots_per_day` equal slots,
    /// evaluated at the slot midpoint.
    pub fn value(&self, slot: usize, slots_per_day: usize) -> f64 {
        let hour = (slot as f64 + 0.5) * 24.0 / slots_per_day as f64;
        self.bumps
            .iter()
            .map(|b| b.height * (-((hour - b.hour) / b.width).powi(2)).exp())
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeetingGenParams {
    /// Event length in slots.
    pub length_model: LogisticCurve,
    pub max_length: usize,
    pub attendance_model: LogisticCurve,
    /// Attendance cap, further reduced to the number of participants.
    pub max_attendance: usize,
    /// Chance that a participant is placed uniformly instead of near an
    /// earlier participant.
    pub p_uniform: f64,
    pub placement_sd: f64,
    /// Weight of an earlier point as a cluster center is `recency_decay^age`,
    /// age 0 being the newest.
    pub recency_decay: f64,
    /// Distance scale of attendee selection around the event anchor.
    pub attendee_tau: f64,
    pub time_of_day: TimeOfDayCurve,
    /// Preference multiplier `exp(-day_decay * day)`.
    pub day_decay: f64,
    pub noise_sd: f64,
    /// Maximum slots blocked per participant and day.
    pub blocked_per_day: usize,
    pub top_slots: usize,
}

impl Default for MeetingGenParams {
    fn default() -> Self {
        Self {
            // P(len > 11) ~ 0.4%
            length_model: LogisticCurve {
                midpoint: 1.5,
                steepness: 0.8,
            },
            max_length: 11,
            // P(attendance > 90) ~ 0.01%
            attendance_model: LogisticCurve {
                midpoint: 5.0,
                steepness: 0.6,
            },
            max_attendance: 90,
            p_uniform: 0.3,
            placement_sd: 0.05,
            recency_decay: 0.5,
            attendee_tau: 0.1,
            time_of_day: TimeOfDayCurve::default(),
            day_decay: 0.1,
            noise_sd: 0.1,
            blocked_per_day: 2,
            top_slots: 24,
        }
    }
}

impl MeetingGenParams {
    pub fn validate(&self, slots_per_day: usize) -> Result<()> {
        self.length_model.validate("length")?;
        self.attendance_model.validate("attendance")?;
        if self.max_length == 0 || self.max_attendance == 0 {
            return Err(invalid("length and attendance caps must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.p_uniform) {
            return Err(invalid(format!("p_uniform {} outside [0, 1]", self.p_uniform)));
        }
        if !(self.placement_sd > 0.0) || !(self.attendee_tau > 0.0) {
            return Err(invalid("placement_sd and attendee_tau must be > 0"));
        }
        if !(self.recency_decay > 0.0 && self.recency_decay <= 1.0) {
            return Err(invalid(format!("recency_decay {} outside (0, 1]", self.recency_decay)));
        }
        if !(self.day_decay >= 0.0) {
            return Err(invalid("day_decay must be >= 0"));
        }
        // Zero is accepted as the degenerate noiseless case.
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(invalid(format!("noise_sd {} must be >= 0", self.noise_sd)));
        }
        if self.blocked_per_day >= slots_per_day {
            return Err(invalid(format!(
                "cannot block {} of {slots_per_day} slots per day",
                self.blocked_per_day
            )));
        }
        if self.top_slots == 0 {
            return Err(invalid("top_slots must be >= 1"));
        }
        Ok(())
    }
}

/// Iterative cluster placement on the unit square.
pub fn place_participants<R: Rng + ?Sized>(n: usize, params: &MeetingGenParams, rng: &mut R) -> Vec<(f64, f64)> {
    let jitter = Normal::new(0.0, params.placement_sd).expect("validated sd");
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        let point = if i == 0 || rng.random::<f64>() < params.p_uniform {
            (rng.random::<f64>(), rng.random::<f64>())
        } else {
            // Newest point has age 0.
            let weights = (0..i).map(|j| params.recency_decay.powi((i - 1 - j) as i32));
            let center = points[WeightedIndex::new(weights).expect("positive weights").sample(rng)];
            (
                (center.0 + jitter.sample(rng)).clamp(0.0, 1.0),
                (center.1 + jitter.sample(rng)).clamp(0.0, 1.0),
            )
        };
        points.push(point);
    }
    points
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Uniform anchor plus `count - 1` further attendees drawn without
/// replacement with weight `exp(-distance / tau)`.
fn pick_attendees<R: Rng + ?Sized>(positions: &[(f64, f64)], count: usize, tau: f64, rng: &mut R) -> Vec<usize> {
    let anchor = rng.random_range(0..positions.len());
    let others: Vec<usize> = (0..positions.len()).filter(|&p| p != anchor).collect();
    let mut chosen = vec![anchor];
    let extra = count.saturating_sub(1).min(others.len());
    if extra > 0 {
        let weights: Vec<f64> = others
            .iter()
            .map(|&p| (-distance(positions[anchor], positions[p]) / tau).exp().max(1e-300))
            .collect();
        let picked = sample_weighted(rng, others.len(), |i| weights[i], extra).expect("positive weights");
        chosen.extend(picked.into_iter().map(|i| others[i]));
    }
    chosen
}

/// Up to `b` distinct slots of a day, drawn proportionally to the
/// time-of-day curve.
fn pick_blocked<R: Rng + ?Sized>(curve: &[f64], b: usize, rng: &mut R) -> Vec<usize> {
    let count = rng.random_range(0..=b);
    if count == 0 {
        return Vec::new();
    }
    sample_weighted(rng, curve.len(), |s| curve[s] + 1e-9, count)
        .expect("positive weights")
        .into_vec()
}

pub fn generate_meeting_instance(
    n_events: usize,
    n_participants: usize,
    days: usize,
    slots_per_day: usize,
    params: &MeetingGenParams,
    seed: u64,
) -> Result<MeetingInstance> {
    if n_events == 0 || n_participants == 0 || days == 0 || slots_per_day == 0 {
        return Err(invalid("events, participants, days and slots must all be >= 1"));
    }
    params.validate(slots_per_day)?;
    let mut rng = rng_from_seed(seed);
    let horizon = days * slots_per_day;

    let positions = place_participants(n_participants, params, &mut rng);
    let attendance_cap = params.max_attendance.min(n_participants);
    let events: Vec<Event> = (0..n_events)
        .map(|_| {
            let length = params.length_model.sample_count(&mut rng, params.max_length);
            let count = params.attendance_model.sample_count(&mut rng, attendance_cap);
            Event::new(length, pick_attendees(&positions, count, params.attendee_tau, &mut rng))
        })
        .collect();

    let curve: Vec<f64> = (0..slots_per_day)
        .map(|s| params.time_of_day.value(s, slots_per_day))
        .collect();
    let blocked: Vec<Vec<usize>> = (0..n_participants)
        .map(|_| {
            let mut slots: Vec<usize> = (0..days)
                .flat_map(|d| {
                    pick_blocked(&curve, params.blocked_per_day, &mut rng)
                        .into_iter()
                        .map(move |s| d * slots_per_day + s)
                        .collect::<Vec<_>>()
                })
                .collect();
            slots.sort_unstable();
            slots
        })
        .collect();

    let noise = Normal::new(0.0, params.noise_sd).map_err(|e| invalid(e.to_string()))?;
    let mean: Vec<f64> = (0..horizon)
        .map(|t| curve[t % slots_per_day] * (-params.day_decay * (t / slots_per_day) as f64).exp())
        .collect();
    let pref = events
        .iter()
        .map(|event| {
            let mut table = Vec::with_capacity(event.participants.len() * horizon);
            for &p in &event.participants {
                let start = table.len();
                table.extend(mean.iter().map(|&m| (m + noise.sample(&mut rng)).clamp(0.0, 1.0)));
                for &t in &blocked[p] {
                    table[start + t] = 0.0;
                }
            }
            table
        })
        .collect();

    MeetingInstance::new(MeetingFile {
        days,
        slots_per_day,
        events,
        positions,
        pref,
        blocked,
        top_slots: params.top_slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attendance_respects_small_populations() {
        for seed in 0..20 {
            let inst = generate_meeting_instance(30, 4, 2, 24, &MeetingGenParams::default(), seed).unwrap();
            assert!(inst.events().iter().all(|e| (1..=4).contains(&e.participants.len())));
            assert!(inst.events().iter().all(|e| (1..=11).contains(&e.length)));
        }
    }

    #[test]
    fn noiseless_unblocked_preferences_follow_the_curves() {
        let params = MeetingGenParams {
            noise_sd: 0.0,
            blocked_per_day: 0,
            ..MeetingGenParams::default()
        };
        let inst = generate_meeting_instance(5, 10, 3, 12, &params, 7).unwrap();
        for e in 0..inst.n_events() {
            for i in 0..inst.event(e).participants.len() {
                for t in 0..inst.horizon() {
                    let (d, s) = inst.split(t);
                    let expected = params.time_of_day.value(s, 12) * (-0.1 * d as f64).exp();
                    assert_eq!(inst.pref(e, i, t), expected);
                }
            }
        }
    }

    #[test]
    fn blocked_slots_are_zero_and_bounded() {
        let params = MeetingGenParams {
            blocked_per_day: 3,
            ..MeetingGenParams::default()
        };
        let inst = generate_meeting_instance(10, 8, 2, 24, &params, 3).unwrap();
        for (p, slots) in inst.blocked().iter().enumerate() {
            for d in 0..2 {
                assert!(slots.iter().filter(|&&t| t / 24 == d).count() <= 3);
            }
            for (e, event) in inst.events().iter().enumerate() {
                if let Some(i) = event.participants.iter().position(|&x| x == p) {
                    assert!(slots.iter().all(|&t| inst.pref(e, i, t) == 0.0));
                }
            }
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let p = MeetingGenParams::default();
        assert_eq!(
            generate_meeting_instance(6, 9, 1, 24, &p, 1).unwrap(),
            generate_meeting_instance(6, 9, 1, 24, &p, 1).unwrap()
        );
        let bad = MeetingGenParams {
            blocked_per_day: 24,
            ..p.clone()
        };
        assert!(generate_meeting_instance(6, 9, 1, 24, &bad, 1).is_err());
        assert!(generate_meeting_instance(0, 9, 1, 24, &p, 1).is_err());
    }

    #[test]
    fn default_tails_are_small() {
        let p = MeetingGenParams::default();
        assert!(1.0 - p.length_model.cdf(11.0) < 0.01);
        assert!(1.0 - p.attendance_model.cdf(90.0) < 0.03);
    }
}
