use serde::{Deserialize, Serialize};

use crate::env::Polarity;

/// Closed time interval in integer steps, `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: usize,
    pub hi: usize,
}

impl Interval {
    /// Panics if `hi < lo`; parser and generator inputs are validated upstream.
    pub fn new(lo: usize, hi: usize) -> Self {
        assert!(lo <= hi, "interval [{lo},{hi}] has hi < lo");
        Interval { lo, hi }
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }
}

/// Atomic proposition: signed margin `mu(s(t)) > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predicate {
    /// Membership in a named rectangular region of the environment.
    Region { name: String, polarity: Polarity },
    /// Affine margin `weights . s(t) + offset > 0`.
    Affine { weights: Vec<f64>, offset: f64 },
}

/// STL formula tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    Atom(Predicate),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Finally(Interval, Box<Formula>),
    Globally(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom_region(name: &str, polarity: Polarity) -> Self {
        Formula::Atom(Predicate::Region { name: name.to_string(), polarity })
    }

    pub fn atom_affine(weights: Vec<f64>, offset: f64) -> Self {
        Formula::Atom(Predicate::Affine { weights, offset })
    }

    /// Number of steps beyond `t` the formula can inspect.
    pub fn horizon(&self) -> usize {
        match self {
            Formula::Atom(_) => 0,
            Formula::Not(f) => f.horizon(),
            Formula::And(a, b) | Formula::Or(a, b) => a.horizon().max(b.horizon()),
            Formula::Finally(i, f) | Formula::Globally(i, f) => i.hi + f.horizon(),
            Formula::Until(i, a, b) => i.hi + a.horizon().max(b.horizon()),
        }
    }

    /// Natural log of the effective aggregation width: the maximum over
    /// root-to-leaf paths of the product of min/max aggregation widths
    /// encountered. `|smooth_robustness(beta) - robustness| <= log_width / beta`.
    pub fn smooth_log_width(&self) -> f64 {
        match self {
            Formula::Atom(_) => 0.0,
            Formula::Not(f) => f.smooth_log_width(),
            Formula::And(a, b) | Formula::Or(a, b) => {
                (2.0f64).ln() + a.smooth_log_width().max(b.smooth_log_width())
            }
            Formula::Finally(i, f) | Formula::Globally(i, f) => {
                (i.width() as f64).ln() + f.smooth_log_width()
            }
            Formula::Until(i, a, b) => {
                // Outer max over the interval, then one flattened min over the
                // right operand at t' plus the left operand on [t, t'].
                (i.width() as f64).ln()
                    + ((i.hi + 2) as f64).ln()
                    + a.smooth_log_width().max(b.smooth_log_width())
            }
        }
    }

    /// All region names referenced by atoms, in first-appearance order.
    pub fn region_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.collect_regions(&mut names);
        names
    }

    fn collect_regions(&self, out: &mut Vec<String>) {
        match self {
            Formula::Atom(Predicate::Region { name, .. }) => {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
            Formula::Atom(Predicate::Affine { .. }) => {}
            Formula::Not(f) => f.collect_regions(out),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_regions(out);
                b.collect_regions(out);
            }
            Formula::Finally(_, f) | Formula::Globally(_, f) => f.collect_regions(out),
            Formula::Until(_, a, b) => {
                a.collect_regions(out);
                b.collect_regions(out);
            }
        }
    }

    /// Swaps every occurrence of region `a` with region `b` in atoms.
    pub fn swap_regions(&self, a: &str, b: &str) -> Formula {
        match self {
            Formula::Atom(Predicate::Region { name, polarity }) => {
                let swapped = if name == a {
                    b.to_string()
                } else if name == b {
                    a.to_string()
                } else {
                    name.clone()
                };
                Formula::Atom(Predicate::Region { name: swapped, polarity: *polarity })
            }
            Formula::Atom(p) => Formula::Atom(p.clone()),
            Formula::Not(f) => Formula::Not(Box::new(f.swap_regions(a, b))),
            Formula::And(l, r) => {
                Formula::And(Box::new(l.swap_regions(a, b)), Box::new(r.swap_regions(a, b)))
            }
            Formula::Or(l, r) => {
                Formula::Or(Box::new(l.swap_regions(a, b)), Box::new(r.swap_regions(a, b)))
            }
            Formula::Finally(i, f) => Formula::Finally(*i, Box::new(f.swap_regions(a, b))),
            Formula::Globally(i, f) => Formula::Globally(*i, Box::new(f.swap_regions(a, b))),
            Formula::Until(i, l, r) => Formula::Until(
                *i,
                Box::new(l.swap_regions(a, b)),
                Box::new(r.swap_regions(a, b)),
            ),
        }
    }
}

/// Discrete-time signal: a non-empty sequence of state vectors of uniform
/// dimension, indexed by step `0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<f64>,
    dim: usize,
}

impl Signal {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        assert!(!rows.is_empty(), "signal must be non-empty");
        let dim = rows[0].len();
        assert!(dim > 0, "signal dimension must be positive");
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            assert_eq!(row.len(), dim, "signal rows must have uniform dimension");
            values.extend_from_slice(row);
        }
        Signal { values, dim }
    }

    /// Dimension-1 signal from a scalar series.
    pub fn scalar(values: &[f64]) -> Self {
        Signal::new(values.iter().map(|v| vec![*v]).collect())
    }

    pub fn from_states(states: &[crate::env::State]) -> Self {
        Signal::new(states.iter().map(|s| s.to_array().to_vec()).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of samples (last index is `len() - 1`).
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lo: usize, hi: usize) -> Interval {
        Interval::new(lo, hi)
    }

    #[test]
    fn horizon_of_single_operator() {
        let f = Formula::Finally(interval(0, 10), Box::new(Formula::atom_region("R1", Polarity::Inside)));
        assert_eq!(f.horizon(), 10);
    }

    #[test]
    fn horizon_of_nested_table_patterns() {
        // F[0,15] G[0,10] (R1)  &  G[0,30] (!O1)  -> max(15 + 10, 30) = 30
        let reach_stay = Formula::Finally(
            interval(0, 15),
            Box::new(Formula::Globally(
                interval(0, 10),
                Box::new(Formula::atom_region("R1", Polarity::Inside)),
            )),
        );
        let avoid = Formula::Globally(
            interval(0, 30),
            Box::new(Formula::Not(Box::new(Formula::atom_region("O1", Polarity::Inside)))),
        );
        let phi2 = Formula::And(Box::new(reach_stay), Box::new(avoid));
        assert_eq!(phi2.horizon(), 30);

        // F[0,15] (R1 & F[0,15] (R2)) -> 15 + 15 = 30
        let phi3 = Formula::Finally(
            interval(0, 15),
            Box::new(Formula::And(
                Box::new(Formula::atom_region("R1", Polarity::Inside)),
                Box::new(Formula::Finally(
                    interval(0, 15),
                    Box::new(Formula::atom_region("R2", Polarity::Inside)),
                )),
            )),
        );
        assert_eq!(phi3.horizon(), 30);
    }

    #[test]
    fn horizon_is_monotone_in_subformulas() {
        // horizon(child) <= horizon(parent's interval upper bound + child).
        let child = Formula::Finally(interval(2, 5), Box::new(Formula::atom_region("R1", Polarity::Inside)));
        let parent = Formula::Globally(interval(0, 7), Box::new(child.clone()));
        assert!(child.horizon() <= parent.horizon());
        assert_eq!(parent.horizon(), 7 + child.horizon());
    }

    #[test]
    fn smooth_log_width_single_window() {
        let f = Formula::Globally(interval(0, 2), Box::new(Formula::atom_affine(vec![1.0], 0.0)));
        assert!((f.smooth_log_width() - (3.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn signal_rows_are_uniform() {
        let s = Signal::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.row(1), &[3.0, 4.0]);
    }
}
