//! Domain types shared by every module: assignment instances, allocations and
//! the run configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, io_err, Error, Result};

/// Tolerance for re-checking a stored social welfare against its recomputation.
pub const WELFARE_TOLERANCE: f64 = 1e-12;

/// An `N x R` utility matrix with optional per-agent interest sets.
///
/// Utilities are stored row-major and always lie in `[0, 1]`. Each agent's
/// preference order (its interest set, or every resource, sorted by
/// decreasing utility with ties broken by ascending resource id) is computed
/// once at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct AssignmentInstance {
    n_agents: usize,
    n_resources: usize,
    utility: Vec<f64>,
    interest: Option<Vec<Vec<usize>>>,
    preferences: Vec<Vec<usize>>,
}

/// On-disk layout of an [`AssignmentInstance`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n_agents: usize,
    pub n_resources: usize,
    /// Row-major utilities, `n_agents * n_resources` entries.
    pub utility: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interest: Option<Vec<Vec<usize>>>,
}

impl TryFrom<InstanceFile> for AssignmentInstance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        let instance = AssignmentInstance::new(file.n_agents, file.n_resources, file.utility)?;
        match file.interest {
            Some(lists) => instance.with_interest(lists),
            None => Ok(instance),
        }
    }
}

impl From<AssignmentInstance> for InstanceFile {
    fn from(instance: AssignmentInstance) -> Self {
        InstanceFile {
            n_agents: instance.n_agents,
            n_resources: instance.n_resources,
            utility: instance.utility,
            interest: instance.interest,
        }
    }
}

fn sort_by_preference(row: &[f64], ids: &mut [usize]) {
    ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
}

impl AssignmentInstance {
    pub fn new(n_agents: usize, n_resources: usize, utility: Vec<f64>) -> Result<Self> {
        if n_agents == 0 || n_resources == 0 {
            return Err(invalid("instance needs at least one agent and one resource"));
        }
        if utility.len() != n_agents * n_resources {
            return Err(invalid(format!(
                "utility has {} entries, expected {} x {}",
                utility.len(),
                n_agents,
                n_resources
            )));
        }
        if let Some((idx, u)) = utility
            .iter()
            .enumerate()
            .find(|(_, u)| !(0.0..=1.0).contains(*u))
        {
            return Err(invalid(format!(
                "utility of agent {} for resource {} is {u}, outside [0, 1]",
                idx / n_resources,
                idx % n_resources
            )));
        }
        let preferences = (0..n_agents)
            .map(|n| {
                let mut ids: Vec<usize> = (0..n_resources).collect();
                sort_by_preference(&utility[n * n_resources..(n + 1) * n_resources], &mut ids);
                ids
            })
            .collect();
        Ok(Self {
            n_agents,
            n_resources,
            utility,
            interest: None,
            preferences,
        })
    }

    /// Builds an instance from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_resources = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_resources) {
            return Err(invalid("ragged utility rows"));
        }
        Self::new(rows.len(), n_resources, rows.concat())
    }

    /// Restricts every agent to an interest set. Lists are re-ordered into
    /// preference order; duplicates and out-of-range ids are rejected.
    pub fn with_interest(mut self, lists: Vec<Vec<usize>>) -> Result<Self> {
        if lists.len() != self.n_agents {
            return Err(invalid(format!(
                "{} interest lists for {} agents",
                lists.len(),
                self.n_agents
            )));
        }
        let mut sorted = Vec::with_capacity(lists.len());
        for (n, mut list) in lists.into_iter().enumerate() {
            if list.is_empty() {
                return Err(invalid(format!("agent {n} has an empty interest list")));
            }
            let mut seen = vec![false; self.n_resources];
            for &r in &list {
                if r >= self.n_resources {
                    return Err(invalid(format!("agent {n} lists resource {r} >= {}", self.n_resources)));
                }
                if std::mem::replace(&mut seen[r], true) {
                    return Err(invalid(format!("agent {n} lists resource {r} twice")));
                }
            }
            sort_by_preference(self.row(n), &mut list);
            sorted.push(list);
        }
        self.preferences = sorted.clone();
        self.interest = Some(sorted);
        Ok(self)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_resources(&self) -> usize {
        self.n_resources
    }

    #[inline]
    pub fn utility(&self, agent: usize, resource: usize) -> f64 {
        self.utility[agent * self.n_resources + resource]
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        &self.utility[agent * self.n_resources..(agent + 1) * self.n_resources]
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utility
    }

    pub fn interest(&self) -> Option<&[Vec<usize>]> {
        self.interest.as_deref()
    }

    /// Whether `resource` is in the agent's interest set (every resource when
    /// no interest lists were given).
    pub fn is_interested(&self, agent: usize, resource: usize) -> bool {
        match &self.interest {
            Some(lists) => lists[agent].contains(&resource),
            None => resource < self.n_resources,
        }
    }

    /// Preference order without the range check; `agent` must be valid.
    pub(crate) fn preferences(&self, agent: usize) -> &[usize] {
        &self.preferences[agent]
    }

    /// Transposed view used by permutation tests: agent `i` of the result is
    /// agent `perm[i]` of `self`.
    pub fn permute_agents(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_agents {
            return Err(invalid("permutation length differs from agent count"));
        }
        let rows: Vec<Vec<f64>> = perm.iter().map(|&n| self.row(n).to_vec()).collect();
        let out = Self::from_rows(&rows)?;
        match &self.interest {
            Some(lists) => out.with_interest(perm.iter().map(|&n| lists[n].clone()).collect()),
            None => Ok(out),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(io_err(path))
    }
}

/// Resource ids of `agent` in strictly non-increasing utility order, restricted
/// to its interest list when one is present. Ties go to the lower id.
pub fn preference_order(instance: &AssignmentInstance, agent: usize) -> Result<&[usize]> {
    if agent >= instance.n_agents {
        return Err(invalid(format!(
            "agent {agent} out of range for {} agents",
            instance.n_agents
        )));
    }
    Ok(instance.preferences(agent))
}

/// A partial matching from agents to resources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub assignment: Vec<Option<usize>>,
    pub social_welfare: f64,
}

impl Allocation {
    /// Builds an allocation and computes its social welfare. Indices must be
    /// in range; use [`validate_allocation`] for the matching constraints.
    pub fn new(instance: &AssignmentInstance, assignment: Vec<Option<usize>>) -> Self {
        let social_welfare = welfare_of(instance, &assignment);
        Self {
            assignment,
            social_welfare,
        }
    }

    pub fn empty(n_agents: usize) -> Self {
        Self {
            assignment: vec![None; n_agents],
            social_welfare: 0.0,
        }
    }

    pub fn matched(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_some()).count()
    }

    /// Per-agent realized utility, 0 for unmatched agents.
    pub fn values(&self, instance: &AssignmentInstance) -> Vec<f64> {
        self.assignment
            .iter()
            .enumerate()
            .map(|(n, r)| r.map_or(0.0, |r| instance.utility(n, r)))
            .collect()
    }
}

fn welfare_of(instance: &AssignmentInstance, assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(n, r)| r.map(|r| instance.utility(n, r)))
        .sum()
}

/// Checks the matching constraints of `allocation` and the consistency of its
/// recorded social welfare. Reports the first violation found.
pub fn validate_allocation(instance: &AssignmentInstance, allocation: &Allocation) -> Result<()> {
    if allocation.assignment.len() != instance.n_agents {
        return Err(Error::Violation(format!(
            "allocation covers {} agents, instance has {}",
            allocation.assignment.len(),
            instance.n_agents
        )));
    }
    let mut holder: Vec<Option<usize>> = vec![None; instance.n_resources];
    for (n, r) in allocation.assignment.iter().enumerate() {
        let Some(r) = *r else { continue };
        if r >= instance.n_resources {
            return Err(Error::Violation(format!("agent {n} assigned to unknown resource {r}")));
        }
        if !instance.is_interested(n, r) {
            return Err(Error::Violation(format!(
                "agent {n} assigned to resource {r} outside its interest set"
            )));
        }
        if let Some(other) = holder[r].replace(n) {
            return Err(Error::Violation(format!(
                "resource {r} assigned to both agent {other} and agent {n}"
            )));
        }
    }
    let recomputed = welfare_of(instance, &allocation.assignment);
    if (recomputed - allocation.social_welfare).abs() > WELFARE_TOLERANCE {
        return Err(Error::Violation(format!(
            "recorded social welfare {} differs from recomputed {recomputed}",
            allocation.social_welfare
        )));
    }
    Ok(())
}

/// Parameters of one ALMA-Learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Number of training stage games `T`.
    pub training_steps: usize,
    pub eval_steps: usize,
    /// Learning rate of the loss update.
    pub alpha: f64,
    /// Back-off exponent of the power model.
    pub beta: f64,
    /// Clamp of the power model.
    pub epsilon: f64,
    /// Length `L` of each reward history ring buffer.
    pub history_len: usize,
    /// Maximum ALMA rounds per stage game; `None` derives it from `R`.
    pub round_cap: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            training_steps: 512,
            eval_steps: 32,
            alpha: 0.1,
            beta: 2.0,
            epsilon: 0.01,
            history_len: 20,
            round_cap: None,
        }
    }
}

/// Rounds added on top of `10 * R` when no explicit cap is configured.
///
/// Two agents that both value the contested resource with loss 1 back off
/// with probability `epsilon^beta` each (1e-4 at the defaults), so such a
/// stand-off lasts about 5000 rounds on average; the slack keeps the cap out
/// of reach for those contests.
pub const ROUND_CAP_SLACK: usize = 100_000;

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta {} must be >= 0", self.beta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(invalid(format!("epsilon {} outside (0, 0.5)", self.epsilon)));
        }
        if self.history_len == 0 {
            return Err(invalid("history_len must be >= 1"));
        }
        if self.round_cap == Some(0) {
            return Err(invalid("round_cap must be >= 1"));
        }
        Ok(())
    }

    /// Power back-off with this config's `beta` and `epsilon`.
    pub fn power_model(&self) -> crate::engine::BackoffModel {
        crate::engine::BackoffModel::Power {
            beta: self.beta,
            epsilon: self.epsilon,
        }
    }

    pub fn round_cap_for(&self, n_resources: usize) -> usize {
        self.round_cap
            .unwrap_or(10 * n_resources + ROUND_CAP_SLACK)
    }
}
