//! Meeting scheduling mapped onto the allocation game: events are agents,
//! start slots are resources, and two events conflict when they share a
//! participant and their intervals overlap.

pub mod aggregate;
pub mod alma;
pub mod baselines;
pub mod compose;
pub mod generate;
pub mod instance;

pub use aggregate::{aggregate_all, aggregate_event_preferences, meeting_loss, Candidate, MEETING_LOSS_WINDOW};
pub use alma::{new_meeting_game, schedule_with_alma, MeetingAlmaOptions, MeetingArena, MeetingGame, MeetingRun};
pub use baselines::{
    brute_force_schedule, greedy_meetings, greedy_meetings_in_order, msrac, msrac_importance, MsracOutcome,
    BRUTE_FORCE_SCHEDULE_MAX,
};
pub use compose::{compose_large_instance, Composition};
pub use generate::{generate_meeting_instance, LogisticCurve, MeetingGenParams, TimeOfDayCurve};
pub use instance::{
    event_values, intervals_overlap, participant_values, validate_schedule, Event, MeetingFile, MeetingInstance,
    Schedule,
};
