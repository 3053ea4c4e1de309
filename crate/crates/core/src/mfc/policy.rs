//! Feedback policies as lookup tables over time, state and law mean.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform binning of `[lo, hi]`; values outside fall in the end bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Bins {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 || !(hi > lo) {
            return Err(Error::InvalidParameter(format!("invalid bins [{lo}, {hi}] x {count}")));
        }
        Ok(Self { lo, hi, count })
    }

    pub fn single() -> Self {
        Self { lo: 0.0, hi: 1.0, count: 1 }
    }

    pub fn index(&self, v: f64) -> usize {
        if self.count == 1 {
            return 0;
        }
        let r = (v - self.lo) / (self.hi - self.lo) * self.count as f64;
        if r.is_nan() {
            0
        } else {
            (r.floor().max(0.0) as usize).min(self.count - 1)
        }
    }
}

/// Action table indexed by (time bin, bin of the first state coordinate,
/// bin of the first coordinate of the law mean), row-major in that order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub time: Bins,
    pub state: Bins,
    pub mean: Bins,
    pub actions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    /// Index of a control.
    Constant(usize),
    Table(PolicyTable),
}

impl Policy {
    pub fn action(&self, t: f64, x: &[f64], mean: &[f64]) -> usize {
        match self {
            Policy::Constant(a) => *a,
            Policy::Table(tab) => {
                let i = tab.time.index(t);
                let j = tab.state.index(x[0]);
                let k = tab.mean.index(mean[0]);
                tab.actions[(i * tab.state.count + j) * tab.mean.count + k]
            }
        }
    }

    /// Checks that every action indexes into a control set of size `controls`.
    pub fn validate(&self, controls: usize) -> Result<()> {
        let bad = |a: usize| Error::InvalidParameter(format!("policy action {a} outside control set of size {controls}"));
        match self {
            Policy::Constant(a) if *a >= controls => Err(bad(*a)),
            Policy::Constant(_) => Ok(()),
            Policy::Table(tab) => {
                let expected = tab.time.count * tab.state.count * tab.mean.count;
                if tab.actions.len() != expected {
                    return Err(Error::DimensionMismatch { expected, found: tab.actions.len() });
                }
                match tab.actions.iter().find(|&&a| a >= controls) {
                    Some(&a) => Err(bad(a)),
                    None => Ok(()),
                }
            }
        }
    }

    /// Whether the policy never looks at its arguments.
    pub fn is_constant(&self) -> bool {
        matches!(self, Policy::Constant(_))
    }
}

/// One constant policy per control.
pub fn constant_policies(controls: usize) -> Vec<Policy> {
    (0..controls).map(Policy::Constant).collect()
}

/// Bang-bang threshold policies on the first state coordinate: for each
/// threshold `c`, control `hi` above `c` and `lo` below, and the reverse.
pub fn threshold_policies(lo: usize, hi: usize, thresholds: &[f64], range: (f64, f64), bins: usize) -> Result<Vec<Policy>> {
    let state = Bins::new(range.0, range.1, bins)?;
    let mut out = Vec::new();
    for &c in thresholds {
        for (below, above) in [(lo, hi), (hi, lo)] {
            let actions = (0..bins)
                .map(|j| {
                    let mid = state.lo + (j as f64 + 0.5) * (state.hi - state.lo) / bins as f64;
                    if mid < c {
                        below
                    } else {
                        above
                    }
                })
                .collect();
            out.push(Policy::Table(PolicyTable { time: Bins::single(), state: state.clone(), mean: Bins::single(), actions }));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_clamp() {
        let b = Bins::new(-1.0, 1.0, 4).unwrap();
        assert_eq!(b.index(-5.0), 0);
        assert_eq!(b.index(-0.9), 0);
        assert_eq!(b.index(0.1), 2);
        assert_eq!(b.index(7.0), 3);
    }

    #[test]
    fn threshold_family_switches() {
        let ps = threshold_policies(0, 1, &[0.0], (-2.0, 2.0), 4).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[0].action(0.0, &[-1.0], &[0.0]), 0);
        assert_eq!(ps[0].action(0.0, &[1.0], &[0.0]), 1);
        assert_eq!(ps[1].action(0.0, &[1.0], &[0.0]), 0);
        assert!(ps[0].validate(2).is_ok());
        assert!(ps[0].validate(1).is_err());
    }
}
