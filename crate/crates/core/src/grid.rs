//! Time-invariant account-value grid.
//!
//! Positive nodes are uniform in `ln A` with spacing `sigma_F sqrt(dt)` and
//! pass exactly through the premium. Index 0 holds the absorbing value zero.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AccountGrid {
    premium: f64,
    log_step: f64,
    j_min: usize,
    values: Vec<f64>,
}

/// Linear interpolation weights: `(1 - w)` on `index`, `w` on `index + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub index: usize,
    pub weight_up: f64,
    /// Set when the queried value was above the top node and got clamped.
    pub clamped: bool,
}

impl AccountGrid {
    /// Grid covering `[P / f_A, P f_A]` with log spacing `sigma_F sqrt(dt)`.
    pub fn build(premium: f64, sigma_f: f64, dt: f64, f_a: f64) -> Result<Self> {
        if !(premium.is_finite() && premium > 0.0) {
            return Err(Error::domain("P", format!("premium must be positive, got {premium}")));
        }
        if !(f_a.is_finite() && f_a > 1.0) {
            return Err(Error::domain("f_A", format!("must exceed 1, got {f_a}")));
        }
        if !(sigma_f > 0.0 && dt > 0.0) {
            return Err(Error::domain("sigma_F", "grid spacing must be positive"));
        }
        let log_step = sigma_f * dt.sqrt();
        let half = (f_a.ln() / log_step).floor() as usize;
        if half < 2 {
            return Err(Error::domain(
                "f_A",
                format!("range factor {f_a} yields fewer than two nodes each side of the premium"),
            ));
        }
        let j_min = half + 1;
        let j_max = half + j_min;
        let mut values = Vec::with_capacity(j_max + 1);
        values.push(0.0);
        for j in 1..=j_max {
            values.push(premium * ((j as f64 - j_min as f64) * log_step).exp());
        }
        Ok(Self {
            premium,
            log_step,
            j_min,
            values,
        })
    }

    pub fn premium(&self) -> f64 {
        self.premium
    }

    /// `sigma_F sqrt(dt)`.
    pub fn log_step(&self) -> f64 {
        self.log_step
    }

    /// Index of the node equal to the premium.
    pub fn j_min(&self) -> usize {
        self.j_min
    }

    pub fn j_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of log steps separating `j` from its up successor at rate `r`.
    /// Uniform for every node whose successor is not capped at the top.
    pub fn up_shift(&self, r: f64, dt: f64) -> usize {
        let growth = 1.0 + r * dt;
        let mut u = ((growth.ln() / self.log_step).ceil() as usize).max(1);
        while u > 1 && ((u - 1) as f64 * self.log_step).exp() >= growth {
            u -= 1;
        }
        while (u as f64 * self.log_step).exp() < growth {
            u += 1;
        }
        u
    }

    /// Down and up successors of positive node `j` under one step of drift at
    /// rate `r`: the nearest nodes strictly below and at or above the drifted
    /// value, kept inside `1 ..= j_max`.
    pub fn successors(&self, j: usize, r: f64, dt: f64) -> Result<(usize, usize)> {
        let j_max = self.j_max();
        if j == 0 || j > j_max {
            return Err(Error::domain("j", format!("successors need 1 <= j <= {j_max}, got {j}")));
        }
        let target = self.values[j] * (1.0 + r * dt);
        let mut jd = j - 1;
        while jd > 1 && self.values[jd] > target {
            jd -= 1;
        }
        let jd = jd.max(1);
        let ju = if j == j_max {
            j_max
        } else {
            (j + self.up_shift(r, dt)).min(j_max)
        };
        Ok((jd, ju))
    }

    /// Interpolation weights for an arbitrary non-negative account value.
    pub fn locate(&self, value: f64) -> Result<Location> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::domain("A", format!("account value must be non-negative, got {value}")));
        }
        Ok(self.locate_unchecked(value))
    }

    fn locate_unchecked(&self, value: f64) -> Location {
        let j_max = self.j_max();
        let v = &self.values;
        if value >= v[j_max] {
            return Location {
                index: j_max,
                weight_up: 0.0,
                clamped: value > v[j_max],
            };
        }
        if value < v[1] {
            return Location {
                index: 0,
                weight_up: value / v[1],
                clamped: false,
            };
        }
        let x = (value / self.premium).ln() / self.log_step + self.j_min as f64;
        let mut j = (x.floor().max(1.0) as usize).min(j_max - 1);
        while j > 1 && value < v[j] {
            j -= 1;
        }
        while j + 1 < j_max && value >= v[j + 1] {
            j += 1;
        }
        Location {
            index: j,
            weight_up: (value - v[j]) / (v[j + 1] - v[j]),
            clamped: false,
        }
    }

    /// Linearly interpolated value of `row` (one entry per node) at `value`.
    pub fn interpolate(&self, row: &[f64], value: f64) -> f64 {
        let loc = self.locate_unchecked(value.max(0.0));
        if loc.weight_up == 0.0 {
            row[loc.index]
        } else {
            row[loc.index] + loc.weight_up * (row[loc.index + 1] - row[loc.index])
        }
    }

    /// Writes `out[j] = interpolate(row, target(j))` for every node. Targets
    /// that are non-decreasing in `j` are located by a walking cursor; any
    /// decrease falls back to a fresh search.
    pub fn resample(&self, row: &[f64], out: &mut [f64], target: impl Fn(usize) -> f64) {
        let v = &self.values;
        let j_max = self.j_max();
        let mut cursor = 0usize;
        for (j, slot) in out.iter_mut().enumerate() {
            let t = target(j).max(0.0);
            if t >= v[j_max] {
                *slot = row[j_max];
                continue;
            }
            if t < v[cursor] {
                cursor = self.locate_unchecked(t).index;
            }
            while t >= v[cursor + 1] {
                cursor += 1;
            }
            let w = (t - v[cursor]) / (v[cursor + 1] - v[cursor]);
            *slot = if w == 0.0 {
                row[cursor]
            } else {
                row[cursor] + w * (row[cursor + 1] - row[cursor])
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn grid() -> AccountGrid {
        AccountGrid::build(100.0, 0.2, 0.01, 100.0).unwrap()
    }

    #[test]
    fn anchors_and_bounds() {
        let g = grid();
        let s = 0.02f64;
        assert_eq!(g.value(g.j_min()), 100.0);
        assert_abs_diff_eq!(g.value(g.j_min() + 1), 102.0201, epsilon = 1e-4);
        assert_eq!(g.value(0), 0.0);
        // lowest positive node sits within one step above P / f_A
        assert!(g.value(1) >= 1.0 && g.value(1) <= s.exp());
        assert!(g.value(g.j_max()) >= 10_000.0 * (-s).exp());
        assert!(g.value(g.j_max()) <= 10_000.0);
        for j in 1..g.j_max() {
            assert_relative_eq!(g.value(j + 1) / g.value(j), s.exp(), max_relative = 1e-13);
        }
        // floor(ln 100 / 0.02) = 230
        assert_eq!(g.j_min(), 231);
        assert_eq!(g.j_max(), 461);
    }

    #[test]
    fn rejects_bad_range() {
        assert!(AccountGrid::build(100.0, 0.2, 0.01, 1.0).is_err());
        assert!(AccountGrid::build(100.0, 0.2, 0.01, 0.5).is_err());
        assert!(AccountGrid::build(-1.0, 0.2, 0.01, 10.0).is_err());
    }

    #[test]
    fn successors_small_step() {
        let g = grid();
        for j in [2, 50, g.j_min(), g.j_max() - 1] {
            assert_eq!(g.successors(j, 0.05, 0.01).unwrap(), (j - 1, j + 1));
        }
        assert_eq!(g.successors(1, 0.05, 0.01).unwrap(), (1, 2));
        assert_eq!(g.successors(g.j_max(), 0.05, 0.01).unwrap().1, g.j_max());
        assert!(g.successors(0, 0.05, 0.01).is_err());
    }

    #[test]
    fn successors_match_set_definition() {
        let g = AccountGrid::build(100.0, 0.05, 0.25, 50.0).unwrap();
        for r in [0.0, 0.05, 0.3, 0.9, 2.5] {
            for j in 1..=g.j_max() {
                let target = g.value(j) * (1.0 + r * 0.25);
                let jd = (1..j).rev().find(|&s| target >= g.value(s)).unwrap_or(1);
                let ju = (j + 1..=g.j_max()).find(|&s| target <= g.value(s)).unwrap_or(g.j_max());
                assert_eq!(g.successors(j, r, 0.25).unwrap(), (jd, ju), "r {r} j {j}");
                if j > 1 && ju < g.j_max() {
                    assert!(g.value(jd) <= target && target <= g.value(ju));
                }
            }
        }
    }

    #[test]
    fn locate_examples() {
        let g = grid();
        let at_p = g.locate(100.0).unwrap();
        assert_eq!((at_p.index, at_p.weight_up), (g.j_min(), 0.0));
        let at_0 = g.locate(0.0).unwrap();
        assert_eq!((at_0.index, at_0.weight_up), (0, 0.0));
        let mid = 0.5 * (g.value(5) + g.value(6));
        // scan oracle
        let lo = (0..g.j_max()).rev().find(|&j| g.value(j) <= mid).unwrap();
        let w = (mid - g.value(lo)) / (g.value(lo + 1) - g.value(lo));
        let loc = g.locate(mid).unwrap();
        assert_eq!(loc.index, lo);
        assert_abs_diff_eq!(loc.weight_up, w, epsilon = 1e-14);
        assert_abs_diff_eq!(loc.weight_up, 0.5, epsilon = 1e-12);
        let small = g.locate(0.25 * g.value(1)).unwrap();
        assert_eq!(small.index, 0);
        assert_abs_diff_eq!(small.weight_up, 0.25, epsilon = 1e-15);
        let big = g.locate(1e9).unwrap();
        assert!(big.clamped && big.index == g.j_max());
        assert!(g.locate(-1.0).is_err());
    }

    #[test]
    fn locate_nodes_is_identity() {
        let g = grid();
        for j in 0..=g.j_max() {
            let loc = g.locate(g.value(j)).unwrap();
            assert_eq!((loc.index, loc.weight_up), (j, 0.0));
        }
    }

    proptest! {
        #[test]
        fn interpolation_reproduces_linear(a in 0.0f64..9_000.0, slope in -3.0f64..3.0, icpt in -50.0f64..50.0) {
            let g = grid();
            let row: Vec<f64> = g.values().iter().map(|x| icpt + slope * x).collect();
            let got = g.interpolate(&row, a);
            prop_assert!((got - (icpt + slope * a)).abs() < 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn resample_matches_pointwise(shift in 0.0f64..200.0, scale in 0.2f64..1.5) {
            let g = grid();
            let row: Vec<f64> = g.values().iter().map(|x| x.sqrt() + 3.0).collect();
            let mut out = vec![0.0; g.len()];
            let target = |j: usize| (g.value(j) * scale - shift).max(0.0);
            g.resample(&row, &mut out, target);
            for (j, &v) in out.iter().enumerate() {
                prop_assert!((v - g.interpolate(&row, target(j))).abs() < 1e-12);
            }
        }
    }
}
