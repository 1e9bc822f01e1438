//! Seeded random formulas and signals, for fuzzing the monitors.

use rand::Rng;

use crate::env::Polarity;
use crate::stl::{Formula, Interval, Predicate, Signal};

/// Knobs for [`random_formula`].
#[derive(Debug, Clone)]
pub struct FormulaSampler {
    /// Maximum tree depth (atoms are depth 0).
    pub max_depth: usize,
    /// Interval lower bounds are drawn from `0..=max_lo`.
    pub max_lo: usize,
    /// Interval widths are drawn from `0..=max_width`.
    pub max_width: usize,
    /// Affine atoms index into this many signal dimensions.
    pub signal_dim: usize,
    /// Region atom pool; empty means affine atoms only.
    pub regions: Vec<String>,
}

impl Default for FormulaSampler {
    fn default() -> Self {
        FormulaSampler { max_depth: 4, max_lo: 3, max_width: 4, signal_dim: 4, regions: Vec::new() }
    }
}

impl FormulaSampler {
    fn interval(&self, rng: &mut impl Rng) -> Interval {
        let lo = rng.gen_range(0..=self.max_lo);
        let hi = lo + rng.gen_range(0..=self.max_width);
        Interval::new(lo, hi)
    }

    fn atom(&self, rng: &mut impl Rng) -> Formula {
        let use_region = !self.regions.is_empty() && rng.gen_bool(0.5);
        if use_region {
            let name = self.regions[rng.gen_range(0..self.regions.len())].clone();
            let polarity = if rng.gen_bool(0.5) { Polarity::Inside } else { Polarity::Outside };
            Formula::Atom(Predicate::Region { name, polarity })
        } else {
            let mut weights = vec![0.0; self.signal_dim];
            let idx = rng.gen_range(0..self.signal_dim);
            weights[idx] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let offset = rng.gen_range(-5.0..5.0);
            Formula::Atom(Predicate::Affine { weights, offset })
        }
    }
}

/// Draws a random formula of depth at most `sampler.max_depth`.
pub fn random_formula(rng: &mut impl Rng, sampler: &FormulaSampler) -> Formula {
    random_node(rng, sampler, sampler.max_depth)
}

fn random_node(rng: &mut impl Rng, s: &FormulaSampler, depth: usize) -> Formula {
    if depth == 0 {
        return s.atom(rng);
    }
    match rng.gen_range(0..12u32) {
        0..=2 => s.atom(rng),
        3 | 4 => Formula::Not(Box::new(random_node(rng, s, depth - 1))),
        5 | 6 => Formula::And(
            Box::new(random_node(rng, s, depth - 1)),
            Box::new(random_node(rng, s, depth - 1)),
        ),
        7 | 8 => Formula::Or(
            Box::new(random_node(rng, s, depth - 1)),
            Box::new(random_node(rng, s, depth - 1)),
        ),
        9 => Formula::Finally(s.interval(rng), Box::new(random_node(rng, s, depth - 1))),
        10 => Formula::Globally(s.interval(rng), Box::new(random_node(rng, s, depth - 1))),
        _ => Formula::Until(
            s.interval(rng),
            Box::new(random_node(rng, s, depth - 1)),
            Box::new(random_node(rng, s, depth - 1)),
        ),
    }
}

/// Draws a formula using only region atoms (linearizable / parseable form).
pub fn random_region_formula(rng: &mut impl Rng, sampler: &FormulaSampler) -> Formula {
    assert!(!sampler.regions.is_empty(), "region pool must be non-empty");
    random_node_region(rng, sampler, sampler.max_depth)
}

fn random_node_region(rng: &mut impl Rng, s: &FormulaSampler, depth: usize) -> Formula {
    if depth == 0 {
        let name = s.regions[rng.gen_range(0..s.regions.len())].clone();
        let polarity = if rng.gen_bool(0.5) { Polarity::Inside } else { Polarity::Outside };
        return Formula::Atom(Predicate::Region { name, polarity });
    }
    match rng.gen_range(0..12u32) {
        0..=2 => random_node_region(rng, s, 0),
        3 | 4 => Formula::Not(Box::new(random_node_region(rng, s, depth - 1))),
        5 | 6 => Formula::And(
            Box::new(random_node_region(rng, s, depth - 1)),
            Box::new(random_node_region(rng, s, depth - 1)),
        ),
        7 | 8 => Formula::Or(
            Box::new(random_node_region(rng, s, depth - 1)),
            Box::new(random_node_region(rng, s, depth - 1)),
        ),
        9 => Formula::Finally(s.interval(rng), Box::new(random_node_region(rng, s, depth - 1))),
        10 => Formula::Globally(s.interval(rng), Box::new(random_node_region(rng, s, depth - 1))),
        _ => Formula::Until(
            s.interval(rng),
            Box::new(random_node_region(rng, s, depth - 1)),
            Box::new(random_node_region(rng, s, depth - 1)),
        ),
    }
}

/// Bounded random walk over `[0, 10]^2` positions with velocity components,
/// shaped like environment state signals.
pub fn random_signal(rng: &mut impl Rng, len: usize, dim: usize) -> Signal {
    assert!(len >= 1 && dim >= 1);
    let mut rows = Vec::with_capacity(len);
    let mut row: Vec<f64> = (0..dim)
        .map(|d| if d < 2 { rng.gen_range(0.0..10.0) } else { rng.gen_range(-2.0..2.0) })
        .collect();
    rows.push(row.clone());
    for _ in 1..len {
        for (d, v) in row.iter_mut().enumerate() {
            let step = rng.gen_range(-1.0..1.0);
            *v += step;
            if d < 2 {
                *v = v.clamp(-2.0, 12.0);
            } else {
                *v = v.clamp(-3.0, 3.0);
            }
        }
        rows.push(row.clone());
    }
    Signal::new(rows)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    use super::*;

    #[test]
    fn sampling_is_seed_deterministic() {
        let sampler = FormulaSampler { regions: vec!["R1".into(), "O1".into()], ..Default::default() };
        let a = random_formula(&mut ChaCha12Rng::seed_from_u64(9), &sampler);
        let b = random_formula(&mut ChaCha12Rng::seed_from_u64(9), &sampler);
        assert_eq!(a, b);
    }

    #[test]
    fn horizons_stay_within_generator_budget() {
        let sampler = FormulaSampler::default();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..200 {
            let f = random_formula(&mut rng, &sampler);
            // depth <= 4 temporal nests of hi <= 7 each
            assert!(f.horizon() <= 4 * 7);
        }
    }
}
