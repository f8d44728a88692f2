//! Centralized reference solvers: the Hungarian method, an exhaustive oracle
//! for tiny instances, and the randomized greedy baseline.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::model::{AssignmentInstance, Allocation};

/// Largest side accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX: usize = 9;

/// Maximum-weight matching via the O(n^3) shortest augmenting path form of
/// the Hungarian method.
///
/// Utilities are negated into costs and the matrix is padded to a square with
/// zero-utility dummies. Pairs outside an agent's interest set get utility 0
/// and are reported as unmatched.
pub fn hungarian(instance: &AssignmentInstance) -> Allocation {
    let n_agents = instance.n_agents();
    let n_resources = instance.n_resources();
    let size = n_agents.max(n_resources);
    let cost = |row: usize, col: usize| -> f64 {
        if row < n_agents && col < n_resources && instance.is_interested(row, col) {
            -instance.utility(row, col)
        } else {
            0.0
        }
    };

    // Potentials and matching are 1-indexed; column 0 is the virtual root.
    let mut u = vec![0.0f64; size + 1];
    let mut v = vec![0.0f64; size + 1];
    let mut col_match = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    let mut min_to = vec![0.0f64; size + 1];
    let mut used = vec![false; size + 1];

    for row in 1..=size {
        col_match[0] = row;
        let mut col0 = 0usize;
        min_to.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[col0] = true;
            let row0 = col_match[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=size {
                if used[col] {
                    continue;
                }
                let reduced = cost(row0 - 1, col - 1) - u[row0] - v[col];
                if reduced < min_to[col] {
                    min_to[col] = reduced;
                    way[col] = col0;
                }
                if min_to[col] < delta {
                    delta = min_to[col];
                    col1 = col;
                }
            }
            for col in 0..=size {
                if used[col] {
                    u[col_match[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = col1;
            if col_match[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            col_match[col0] = col_match[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![None; n_agents];
    for col in 1..=size {
        let row = col_match[col];
        if row == 0 {
            continue;
        }
        let (agent, resource) = (row - 1, col - 1);
        if agent < n_agents && resource < n_resources && instance.is_interested(agent, resource) {
            assignment[agent] = Some(resource);
        }
    }
    Allocation::new(instance, assignment)
}

/// Exhaustive search over all injective partial assignments.
///
/// Leaving an agent unmatched is only explored when it can matter: when
/// agents outnumber resources, when interest sets are restricted, or when the
/// agent has no free resource left. Otherwise some optimum matches everyone,
/// since utilities are non-negative.
pub fn brute_force(instance: &AssignmentInstance) -> Result<Allocation> {
    let (n_agents, n_resources) = (instance.n_agents(), instance.n_resources());
    if n_agents > BRUTE_FORCE_MAX || n_resources > BRUTE_FORCE_MAX {
        return Err(invalid(format!(
            "brute force limited to {BRUTE_FORCE_MAX} x {BRUTE_FORCE_MAX}, got {n_agents} x {n_resources}"
        )));
    }
    let allow_skip = n_agents > n_resources || instance.interest().is_some();

    struct Search<'a> {
        instance: &'a AssignmentInstance,
        allow_skip: bool,
        used: Vec<bool>,
        current: Vec<Option<usize>>,
        best: Vec<Option<usize>>,
        best_sw: f64,
    }

    impl Search<'_> {
        fn visit(&mut self, agent: usize, sw: f64) {
            if agent == self.current.len() {
                if sw > self.best_sw {
                    self.best_sw = sw;
                    self.best.clone_from(&self.current);
                }
                return;
            }
            let mut any_free = false;
            for &r in self.instance.preferences(agent) {
                if self.used[r] {
                    continue;
                }
                any_free = true;
                self.used[r] = true;
                self.current[agent] = Some(r);
                self.visit(agent + 1, sw + self.instance.utility(agent, r));
                self.used[r] = false;
            }
            self.current[agent] = None;
            if self.allow_skip || !any_free {
                self.visit(agent + 1, sw);
            }
        }
    }

    let mut search = Search {
        instance,
        allow_skip,
        used: vec![false; n_resources],
        current: vec![None; n_agents],
        best: vec![None; n_agents],
        best_sw: f64::NEG_INFINITY,
    };
    search.visit(0, 0.0);
    Ok(Allocation::new(instance, search.best))
}

/// Visits agents in a uniformly random order; each takes its most preferred
/// resource that is still free.
pub fn greedy<R: Rng + ?Sized>(instance: &AssignmentInstance, rng: &mut R) -> Allocation {
    let mut order: Vec<usize> = (0..instance.n_agents()).collect();
    order.shuffle(rng);
    greedy_in_order(instance, &order)
}

/// Greedy allocation for a fixed visiting order.
pub fn greedy_in_order(instance: &AssignmentInstance, order: &[usize]) -> Allocation {
    let mut taken = vec![false; instance.n_resources()];
    let mut assignment = vec![None; instance.n_agents()];
    for &agent in order {
        if let Some(&r) = instance.preferences(agent).iter().find(|&&r| !taken[r]) {
            taken[r] = true;
            assignment[agent] = Some(r);
        }
    }
    Allocation::new(instance, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_allocation;
    use crate::rng::rng_from_seed;

    fn fairness_table() -> AssignmentInstance {
        AssignmentInstance::from_rows(&[
            vec![1.0, 0.5, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.75, 0.001],
        ])
        .unwrap()
    }

    fn misleading_loss() -> AssignmentInstance {
        AssignmentInstance::from_rows(&[
            vec![1.0, 0.0, 0.75],
            vec![0.0, 0.75, 0.0],
            vec![1.0, 0.9, 0.25],
        ])
        .unwrap()
    }

    fn misleading_reward() -> AssignmentInstance {
        AssignmentInstance::from_rows(&[
            vec![1.0, 0.9, 0.0],
            vec![0.0, 0.95, 0.9],
            vec![1.0, 0.9, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn hungarian_examples() {
        let a = hungarian(&fairness_table());
        assert_eq!(a.assignment, vec![Some(0), Some(1), Some(2)]);
        assert!((a.social_welfare - 2.001).abs() < 1e-12);
        assert!((hungarian(&misleading_reward()).social_welfare - 2.8).abs() < 1e-12);
        assert!((hungarian(&misleading_loss()).social_welfare - 2.5).abs() < 1e-12);
        let n = 7;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        assert_eq!(hungarian(&AssignmentInstance::from_rows(&rows).unwrap()).social_welfare, n as f64);
    }

    #[test]
    fn brute_force_examples() {
        let one = AssignmentInstance::from_rows(&[vec![0.7]]).unwrap();
        assert_eq!(brute_force(&one).unwrap().social_welfare, 0.7);
        assert!((brute_force(&misleading_loss()).unwrap().social_welfare - 2.5).abs() < 1e-12);
        assert!((brute_force(&misleading_reward()).unwrap().social_welfare - 2.8).abs() < 1e-12);
        let big = AssignmentInstance::new(10, 10, vec![0.5; 100]).unwrap();
        assert!(brute_force(&big).is_err());
    }

    #[test]
    fn rectangular_and_restricted_instances() {
        // More agents than resources: two agents must stay unmatched.
        let wide = AssignmentInstance::from_rows(&[vec![0.2, 0.1], vec![0.9, 0.3], vec![0.4, 0.8], vec![0.5, 0.5]]).unwrap();
        let h = hungarian(&wide);
        assert!(validate_allocation(&wide, &h).is_ok());
        assert_eq!(h.social_welfare, brute_force(&wide).unwrap().social_welfare);
        assert!((h.social_welfare - 1.7).abs() < 1e-12);

        let tall = AssignmentInstance::from_rows(&[vec![0.2, 0.1, 0.9]]).unwrap();
        assert_eq!(hungarian(&tall).assignment, vec![Some(2)]);

        let restricted = AssignmentInstance::from_rows(&[vec![0.9, 0.8], vec![0.7, 0.1]])
            .unwrap()
            .with_interest(vec![vec![0], vec![0, 1]])
            .unwrap();
        let h = hungarian(&restricted);
        assert!(validate_allocation(&restricted, &h).is_ok());
        assert!((h.social_welfare - 1.0).abs() < 1e-12);
        assert_eq!(h.social_welfare, brute_force(&restricted).unwrap().social_welfare);
    }

    #[test]
    fn greedy_examples() {
        let single = AssignmentInstance::from_rows(&[vec![0.3, 0.8]]).unwrap();
        assert_eq!(greedy(&single, &mut rng_from_seed(1)).assignment, vec![Some(1)]);

        let rows: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let identity = AssignmentInstance::from_rows(&rows).unwrap();
        for seed in 0..10 {
            assert_eq!(greedy(&identity, &mut rng_from_seed(seed)).social_welfare, 5.0);
        }
    }

    #[test]
    fn greedy_fairness_table_outcomes_match_enumeration() {
        let table = fairness_table();
        // Hand enumeration of the six visiting orders.
        let expected = [
            ([0, 1, 2], 2.001),
            ([0, 2, 1], 1.75),
            ([1, 0, 2], 2.001),
            ([1, 2, 0], 2.0),
            ([2, 0, 1], 1.5),
            ([2, 1, 0], 2.0),
        ];
        for (order, sw) in expected {
            let a = greedy_in_order(&table, &order);
            assert!((a.social_welfare - sw).abs() < 1e-12, "{order:?}: {}", a.social_welfare);
        }
        for seed in 0..50 {
            let sw = greedy(&table, &mut rng_from_seed(seed)).social_welfare;
            assert!(expected.iter().any(|(_, e)| (sw - e).abs() < 1e-12));
        }
    }
}
