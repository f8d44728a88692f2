//! Seeded synthetic benchmark families.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::AssignmentInstance;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Agents and resources scattered on a grid; utility is inverse Manhattan distance.
    Map,
    /// Shared base utilities plus per-agent Gaussian noise.
    NoisyCommon,
    /// Independent 0/1 utilities.
    Binary,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Map => "map",
            Family::NoisyCommon => "noisy_common",
            Family::Binary => "binary",
        }
    }

    /// Training horizon used for this family unless configured otherwise.
    pub fn default_training_steps(&self) -> usize {
        match self {
            Family::Map | Family::Binary => 512,
            Family::NoisyCommon => 8192,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "map" => Ok(Family::Map),
            "noisy_common" | "noisy" => Ok(Family::NoisyCommon),
            "binary" => Ok(Family::Binary),
            other => Err(invalid(format!("unknown family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    /// Number of agents, equal to the number of resources.
    pub n: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_p_one")]
    pub p_one: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_sigma() -> f64 {
    0.1
}

fn default_p_one() -> f64 {
    0.5
}

impl GeneratorSpec {
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            sigma: default_sigma(),
            p_one: default_p_one(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n must be >= 1"));
        }
        match self.family {
            Family::NoisyCommon if !(self.sigma > 0.0 && self.sigma.is_finite()) => {
                Err(invalid(format!("sigma {} must be > 0", self.sigma)))
            }
            Family::Binary if !(self.p_one >= 0.0 && self.p_one <= 1.0) => {
                Err(invalid(format!("p_one {} outside [0, 1]", self.p_one)))
            }
            _ => Ok(()),
        }
    }

    pub fn generate(&self) -> Result<AssignmentInstance> {
        self.validate()?;
        match self.family {
            Family::Map => gen_map(self.n, self.seed),
            Family::NoisyCommon => gen_noisy_common(self.n, self.sigma, self.seed),
            Family::Binary => gen_binary(self.n, self.p_one, self.seed),
        }
    }
}

/// Side of the square grid for `n` agents: `ceil(sqrt(4n))`.
pub fn map_grid_side(n: usize) -> usize {
    let side = ((4 * n) as f64).sqrt().ceil() as usize;
    side.max(1)
}

/// Utility for a Manhattan distance: `1 / d`, capped at 1 for `d <= 1`.
pub fn map_utility(distance: usize) -> f64 {
    if distance <= 1 {
        1.0
    } else {
        1.0 / distance as f64
    }
}

fn manhattan(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Places `n` agents and `n` resources uniformly on integer cells of a
/// `ceil(sqrt(4n))` grid. Cells may be shared.
pub fn gen_map(n: usize, seed: u64) -> Result<AssignmentInstance> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let side = map_grid_side(n);
    let mut point = || (rng.random_range(0..side), rng.random_range(0..side));
    let agents: Vec<_> = (0..n).map(|_| point()).collect();
    let resources: Vec<_> = (0..n).map(|_| point()).collect();
    let utility = agents
        .iter()
        .flat_map(|&a| resources.iter().map(move |&r| map_utility(manhattan(a, r))))
        .collect();
    AssignmentInstance::new(n, n, utility)
}

/// Base utility `b[r] ~ U[0, 1]` per resource; agent utilities are
/// `clamp(b[r] + N(0, sigma^2), 0, 1)`, noise independent per pair.
pub fn gen_noisy_common(n: usize, sigma: f64, seed: u64) -> Result<AssignmentInstance> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| invalid(format!("sigma {sigma}: {e}")))?;
    let mut rng = rng_from_seed(seed);
    let base: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut utility = Vec::with_capacity(n * n);
    for _ in 0..n {
        for &b in &base {
            utility.push((b + noise.sample(&mut rng)).clamp(0.0, 1.0));
        }
    }
    AssignmentInstance::new(n, n, utility)
}

/// Independent Bernoulli(`p_one`) utilities.
pub fn gen_binary(n: usize, p_one: f64, seed: u64) -> Result<AssignmentInstance> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    if !(0.0..=1.0).contains(&p_one) {
        return Err(invalid(format!("p_one {p_one} outside [0, 1]")));
    }
    let mut rng = rng_from_seed(seed);
    let utility = (0..n * n)
        .map(|_| if rng.random::<f64>() < p_one { 1.0 } else { 0.0 })
        .collect();
    AssignmentInstance::new(n, n, utility)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::hungarian;

    #[test]
    fn map_utility_rule() {
        assert_eq!(map_utility(manhattan((0, 0), (0, 3))), 1.0 / 3.0);
        assert_eq!(map_utility(0), 1.0);
        assert_eq!(map_utility(1), 1.0);
        assert_eq!(map_grid_side(16), 8);
        assert_eq!(map_grid_side(2), 3);
    }

    #[test]
    fn map_values_in_unit_interval() {
        for seed in 0..20 {
            let inst = gen_map(16, seed).unwrap();
            assert!(inst.utilities().iter().all(|&u| u > 0.0 && u <= 1.0));
        }
    }

    #[test]
    fn same_seed_same_instance() {
        for family in [Family::Map, Family::NoisyCommon, Family::Binary] {
            let spec = GeneratorSpec::new(family, 12, 99);
            assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
            let other = GeneratorSpec { seed: 100, ..spec.clone() };
            assert_ne!(spec.generate().unwrap(), other.generate().unwrap());
        }
    }

    #[test]
    fn tiny_sigma_gives_common_rows() {
        let inst = gen_noisy_common(8, 1e-12, 5).unwrap();
        for n in 1..8 {
            for r in 0..8 {
                assert!((inst.utility(n, r) - inst.utility(0, r)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn binary_extremes() {
        let ones = gen_binary(6, 1.0, 3).unwrap();
        assert!(ones.utilities().iter().all(|&u| u == 1.0));
        assert_eq!(hungarian(&ones).social_welfare, 6.0);
        let zeros = gen_binary(6, 0.0, 3).unwrap();
        assert_eq!(hungarian(&zeros).social_welfare, 0.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(GeneratorSpec { sigma: 0.0, ..GeneratorSpec::new(Family::NoisyCommon, 4, 0) }.generate().is_err());
        assert!(GeneratorSpec::new(Family::Map, 0, 0).generate().is_err());
        assert!(gen_binary(3, 1.5, 0).is_err());
        assert_eq!("noisy".parse::<Family>().unwrap(), Family::NoisyCommon);
        assert!("grid".parse::<Family>().is_err());
    }
}
