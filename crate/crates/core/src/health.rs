//! Seven-state health model of the insured.
//!
//! Transition intensities between the states are parametric in attained age
//! and are held constant within each policy year, so the one-year transition
//! matrix is the exponential of that year's generator. Nobody survives past
//! age 122: the year starting at attained age 121 sends every state to death.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum attained age; the contract horizon is `MAX_AGE - entry_age` years.
pub const MAX_AGE: u32 = 122;
pub const NUM_STATES: usize = 7;
/// Centre of the exponential intensity form.
const AGE_PIVOT: f64 = 68.5;

pub type Matrix7 = [[f64; NUM_STATES]; NUM_STATES];

const STANDARD_TABLE: &str = include_str!("../data/intensities.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum HealthState {
    Healthy = 1,
    IadlOnly = 2,
    Adl1To2 = 3,
    Adl3To4 = 4,
    Adl5To6 = 5,
    Institutionalized = 6,
    Dead = 7,
}

impl HealthState {
    pub const ALL: [HealthState; NUM_STATES] = [
        HealthState::Healthy,
        HealthState::IadlOnly,
        HealthState::Adl1To2,
        HealthState::Adl3To4,
        HealthState::Adl5To6,
        HealthState::Institutionalized,
        HealthState::Dead,
    ];

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1..=7 => Ok(Self::ALL[code as usize - 1]),
            _ => Err(Error::domain("health", format!("state code {code} not in 1..=7"))),
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based position, used for matrix and vector indexing.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn is_alive(self) -> bool {
        self != HealthState::Dead
    }

    /// States with 3+ ADL impairments or institutionalisation trigger LTC payouts.
    pub fn is_ltc_eligible(self) -> bool {
        matches!(
            self,
            HealthState::Adl3To4 | HealthState::Adl5To6 | HealthState::Institutionalized
        )
    }
}

impl TryFrom<u8> for HealthState {
    type Error = Error;
    fn try_from(code: u8) -> Result<Self> {
        Self::from_code(code)
    }
}

impl From<HealthState> for u8 {
    fn from(h: HealthState) -> u8 {
        h.code()
    }
}

impl fmt::Display for HealthState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Functional form of one transition intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntensityForm {
    /// `A + B exp(C (age - 68.5))`
    Exponential { a: f64, b: f64, c: f64 },
    /// `A + D age`
    Linear { a: f64, d: f64 },
}

impl IntensityForm {
    /// Raw value before the zero floor.
    pub fn raw(&self, age: f64) -> f64 {
        match *self {
            IntensityForm::Exponential { a, b, c } => a + b * (c * (age - AGE_PIVOT)).exp(),
            IntensityForm::Linear { a, d } => a + d * age,
        }
    }
}

/// Coefficient table for the intensities `q_{i,j}`, `i` in 1..=6, `j != i`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTable {
    cells: [[Option<IntensityForm>; NUM_STATES]; NUM_STATES],
}

impl IntensityTable {
    /// The published calibration shipped with the crate.
    pub fn standard() -> Self {
        Self::parse(STANDARD_TABLE).expect("bundled intensity table is well formed")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Parse {
            line: 0,
            reason: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::parse(&text)
    }

    /// Parses `from,to,form,A,B,C,D` rows. Blank lines, `#` comments and a
    /// header row are skipped; inactive coefficients are empty fields.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cells = [[None; NUM_STATES]; NUM_STATES];
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("from") {
                continue;
            }
            let err = |reason: String| Error::Parse {
                line: line_no,
                reason,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 7 {
                return Err(err(format!("expected 7 fields, found {}", fields.len())));
            }
            let state = |s: &str| -> Result<u8> {
                let code: u8 = s.parse().map_err(|_| err(format!("bad state `{s}`")))?;
                HealthState::from_code(code).map_err(|_| err(format!("bad state `{s}`")))?;
                Ok(code)
            };
            let from = state(fields[0])?;
            let to = state(fields[1])?;
            if from == 7 || from == to {
                return Err(err(format!("transition {from} -> {to} cannot carry an intensity")));
            }
            let num = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .map(Some)
                        .map_err(|_| err(format!("bad number `{s}`")))
                }
            };
            let (a, b, c, d) = (num(fields[3])?, num(fields[4])?, num(fields[5])?, num(fields[6])?);
            let form = match (fields[2], a, b, c, d) {
                ("exp", Some(a), Some(b), Some(c), None) => IntensityForm::Exponential { a, b, c },
                ("linear", Some(a), None, None, Some(d)) => IntensityForm::Linear { a, d },
                (form, ..) => {
                    return Err(err(format!(
                        "form `{form}` needs A,B,C (exp) or A,D (linear) with the others empty"
                    )))
                }
            };
            let slot = &mut cells[from as usize - 1][to as usize - 1];
            if slot.is_some() {
                return Err(err(format!("duplicate transition {from} -> {to}")));
            }
            *slot = Some(form);
        }
        Ok(Self { cells })
    }

    pub fn form(&self, from: HealthState, to: HealthState) -> Option<IntensityForm> {
        self.cells[from.index()][to.index()]
    }

    /// Per-year intensity of `from -> to` at the given attained age, floored at zero.
    pub fn intensity(&self, from: HealthState, to: HealthState, attained_age: f64) -> Result<f64> {
        if !from.is_alive() {
            return Ok(0.0);
        }
        if from == to {
            return Err(Error::domain("to", "diagonal intensities are implied by row sums"));
        }
        if !(0.0..=MAX_AGE as f64).contains(&attained_age) {
            return Err(Error::domain("attained_age", format!("{attained_age} outside [0, {MAX_AGE}]")));
        }
        let form = self.form(from, to).ok_or(Error::MissingCoefficient {
            from: from.code(),
            to: to.code(),
        })?;
        Ok(form.raw(attained_age).max(0.0))
    }

    /// Generator for policy year `n` of an insured who entered at `entry_age`,
    /// evaluated at the start-of-year attained age.
    pub fn generator(&self, entry_age: u32, year: u32) -> Result<Matrix7> {
        let age = entry_age + year;
        if age >= MAX_AGE {
            return Err(Error::domain("year", format!("attained age {age} reaches the age cap")));
        }
        let mut q = [[0.0; NUM_STATES]; NUM_STATES];
        for from in HealthState::ALL.iter().copied().filter(|h| h.is_alive()) {
            let i = from.index();
            let mut total = 0.0;
            for to in HealthState::ALL {
                if to == from {
                    continue;
                }
                let rate = self.intensity(from, to, age as f64)?;
                q[i][to.index()] = rate;
                total += rate;
            }
            q[i][i] = -total;
        }
        Ok(q)
    }
}

fn mat_mul(a: &Matrix7, b: &Matrix7) -> Matrix7 {
    let mut out = [[0.0; NUM_STATES]; NUM_STATES];
    for i in 0..NUM_STATES {
        for k in 0..NUM_STATES {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..NUM_STATES {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn identity() -> Matrix7 {
    let mut m = [[0.0; NUM_STATES]; NUM_STATES];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Matrix exponential by scaling and squaring with a fixed-order Taylor
/// polynomial. The generator is scaled until its infinity norm is at most
/// 1/2, where 18 terms put the truncation error below machine precision.
pub fn matrix_exp(q: &Matrix7) -> Matrix7 {
    const ORDER: usize = 18;
    let norm = q
        .iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = 0.5f64.powi(squarings);
    let mut x = *q;
    x.iter_mut().flatten().for_each(|v| *v *= scale);

    // Horner: I + X(I + X/2(I + X/3(...)))
    let mut acc = identity();
    for k in (1..=ORDER).rev() {
        let mut t = mat_mul(&x, &acc);
        t.iter_mut().flatten().for_each(|v| *v /= k as f64);
        for (i, row) in t.iter_mut().enumerate() {
            row[i] += 1.0;
        }
        acc = t;
    }
    for _ in 0..squarings {
        acc = mat_mul(&acc, &acc);
    }
    acc
}

/// One-year transition matrix from a generator.
pub fn annual_transition(q: &Matrix7) -> Matrix7 {
    matrix_exp(q)
}

/// Matrix sending every state to death with certainty.
pub fn forced_death() -> Matrix7 {
    let mut m = [[0.0; NUM_STATES]; NUM_STATES];
    for row in m.iter_mut() {
        row[HealthState::Dead.index()] = 1.0;
    }
    m
}

/// Annual transition matrices for policy years `0 .. MAX_AGE - entry_age`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSequence {
    entry_age: u32,
    matrices: Vec<Matrix7>,
}

impl TransitionSequence {
    pub fn new(table: &IntensityTable, entry_age: u32) -> Result<Self> {
        if entry_age >= MAX_AGE {
            return Err(Error::domain(
                "entry_age",
                format!("{entry_age} must be below the age cap {MAX_AGE}"),
            ));
        }
        let matrices = (0..MAX_AGE - entry_age)
            .map(|n| {
                if entry_age + n == MAX_AGE - 1 {
                    Ok(forced_death())
                } else {
                    table.generator(entry_age, n).map(|q| annual_transition(&q))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entry_age, matrices })
    }

    pub fn standard(entry_age: u32) -> Result<Self> {
        Self::new(&IntensityTable::standard(), entry_age)
    }

    /// Wraps caller-supplied matrices, e.g. a frozen health path in tests.
    /// The length must equal the contract horizon.
    pub fn from_matrices(entry_age: u32, matrices: Vec<Matrix7>) -> Result<Self> {
        if entry_age >= MAX_AGE || matrices.len() != (MAX_AGE - entry_age) as usize {
            return Err(Error::domain(
                "matrices",
                format!(
                    "expected {} annual matrices for entry age {entry_age}",
                    MAX_AGE.saturating_sub(entry_age)
                ),
            ));
        }
        for (n, m) in matrices.iter().enumerate() {
            for row in m {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::domain(
                        "matrices",
                        format!("year {n} is not row-stochastic"),
                    ));
                }
            }
        }
        Ok(Self { entry_age, matrices })
    }

    pub fn entry_age(&self) -> u32 {
        self.entry_age
    }

    /// Contract horizon in years.
    pub fn horizon(&self) -> usize {
        self.matrices.len()
    }

    /// Transition matrix from anniversary `n` to `n + 1`.
    pub fn year(&self, n: usize) -> &Matrix7 {
        &self.matrices[n]
    }

    pub fn matrices(&self) -> &[Matrix7] {
        &self.matrices
    }

    /// Distribution of the health state at anniversary `n` given the state at inception.
    pub fn state_distribution(&self, n: usize, initial: HealthState) -> Result<[f64; NUM_STATES]> {
        if n > self.horizon() {
            return Err(Error::domain(
                "n",
                format!("{n} beyond horizon {}", self.horizon()),
            ));
        }
        let mut dist = [0.0; NUM_STATES];
        dist[initial.index()] = 1.0;
        for m in &self.matrices[..n] {
            dist = propagate(&dist, m);
        }
        Ok(dist)
    }
}

/// Row vector times matrix.
pub fn propagate(dist: &[f64; NUM_STATES], m: &Matrix7) -> [f64; NUM_STATES] {
    let mut out = [0.0; NUM_STATES];
    for (i, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(m[i].iter()) {
            *o += p * mij;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn h(code: u8) -> HealthState {
        HealthState::from_code(code).unwrap()
    }

    /// Plain Taylor series summed until the terms vanish, without scaling.
    /// Pade-based exponential from nalgebra.
    fn pade_oracle(q: &Matrix7) -> Matrix7 {
        let m = nalgebra::SMatrix::<f64, 7, 7>::from_fn(|i, j| q[i][j]).exp();
        let mut out = [[0.0; 7]; 7];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
        }
        out
    }

    #[test]
    fn intensity_examples() {
        let t = IntensityTable::standard();
        assert_abs_diff_eq!(t.intensity(h(1), h(7), 68.5).unwrap(), 0.01884, epsilon = 1e-12);
        assert_abs_diff_eq!(t.intensity(h(1), h(2), 68.5).unwrap(), 0.0197, epsilon = 1e-12);
        for to in 1..=7 {
            assert_eq!(t.intensity(h(7), h(to), 90.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn intensity_floor_binds() {
        // -1.62e-1 + 2.64e-3 * 60 < 0
        let t = IntensityTable::standard();
        assert_eq!(t.intensity(h(1), h(7), 60.0).unwrap(), 0.0);
        for from in 1..=6 {
            for to in (1..=7).filter(|&to| to != from) {
                for age in 60..=122 {
                    assert!(t.intensity(h(from), h(to), age as f64).unwrap() >= 0.0);
                }
            }
        }
    }

    #[test]
    fn missing_cell_is_named() {
        let t = IntensityTable::parse("from,to,form,A,B,C,D\n1,2,linear,0.1,,,0.0\n").unwrap();
        assert_eq!(
            t.intensity(h(1), h(3), 70.0),
            Err(Error::MissingCoefficient { from: 1, to: 3 })
        );
        assert!(t.generator(60, 0).is_err());
    }

    #[test]
    fn parse_rejects_mixed_forms() {
        assert!(IntensityTable::parse("1,2,exp,0.1,0.2,,0.3\n").is_err());
        assert!(IntensityTable::parse("1,2,linear,0.1,0.2,,0.3\n").is_err());
        assert!(IntensityTable::parse("7,2,linear,0.1,,,0.3\n").is_err());
        assert!(IntensityTable::parse("1,2,linear,0.1,,,0.3\n1,2,linear,0.1,,,0.3\n").is_err());
    }

    #[test]
    fn standard_table_is_complete() {
        let t = IntensityTable::standard();
        for from in 1..=6 {
            for to in (1..=7).filter(|&to| to != from) {
                assert!(t.form(h(from), h(to)).is_some(), "{from}->{to}");
            }
        }
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        let t = IntensityTable::standard();
        for x0 in [60, 75, 90] {
            for n in [0, 10, 30] {
                if x0 + n >= MAX_AGE {
                    continue;
                }
                let q = t.generator(x0, n).unwrap();
                for row in &q {
                    assert!(row.iter().sum::<f64>().abs() < 1e-14);
                }
                assert!(q[6].iter().all(|&v| v == 0.0));
            }
        }
        assert!(t.generator(100, 22).is_err());
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(matrix_exp(&[[0.0; 7]; 7]), identity());
    }

    #[test]
    fn exp_matches_pade_oracle() {
        let t = IntensityTable::standard();
        for (x0, n) in [(60, 0), (70, 15), (80, 40), (100, 20)] {
            let q = t.generator(x0, n).unwrap();
            let fast = matrix_exp(&q);
            let slow = pade_oracle(&q);
            for (a, b) in fast.iter().flatten().zip(slow.iter().flatten()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn exp_small_step_is_first_order() {
        let t = IntensityTable::standard();
        let q = t.generator(60, 0).unwrap();
        let dt = 1e-4;
        let mut scaled = q;
        scaled.iter_mut().flatten().for_each(|v| *v *= dt);
        let e = matrix_exp(&scaled);
        for i in 0..7 {
            for j in 0..7 {
                let first = if i == j { 1.0 } else { 0.0 } + dt * q[i][j];
                assert_abs_diff_eq!(e[i][j], first, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn sequence_lengths_and_forced_death() {
        let seq = TransitionSequence::standard(60).unwrap();
        assert_eq!(seq.horizon(), 62);
        let last = TransitionSequence::standard(121).unwrap();
        assert_eq!(last.horizon(), 1);
        assert_eq!(last.year(0), &forced_death());
        assert!(TransitionSequence::standard(122).is_err());
        for m in seq.matrices() {
            for row in m {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            }
            assert_eq!(m[6], forced_death()[6]);
        }
        assert_eq!(seq.year(61), &forced_death());
    }

    #[test]
    fn state_distribution_matches_naive_product() {
        let seq = TransitionSequence::standard(60).unwrap();
        assert_eq!(seq.state_distribution(0, h(3)).unwrap(), [0., 0., 1., 0., 0., 0., 0.]);
        let d = seq.state_distribution(10, h(1)).unwrap();
        let mut naive = vec![0.0; 7];
        naive[0] = 1.0;
        for n in 0..10 {
            let m = seq.year(n);
            naive = (0..7).map(|j| (0..7).map(|i| naive[i] * m[i][j]).sum()).collect();
        }
        for (a, b) in d.iter().zip(&naive) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(d.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let end = seq.state_distribution(62, h(2)).unwrap();
        assert_abs_diff_eq!(end[6], 1.0, epsilon = 1e-12);
        assert!(seq.state_distribution(63, h(1)).is_err());
    }

    #[test]
    fn death_mass_is_monotone() {
        let seq = TransitionSequence::standard(65).unwrap();
        for start in 1..=6 {
            let mut prev = 0.0;
            for n in 0..=seq.horizon() {
                let dead = seq.state_distribution(n, h(start)).unwrap()[6];
                assert!(dead >= prev - 1e-15);
                prev = dead;
            }
        }
    }

    #[test]
    fn from_matrices_validates() {
        assert!(TransitionSequence::from_matrices(120, vec![identity(); 2]).is_ok());
        assert!(TransitionSequence::from_matrices(120, vec![identity(); 3]).is_err());
        let mut bad = identity();
        bad[0][1] = 0.5;
        assert!(TransitionSequence::from_matrices(121, vec![bad]).is_err());
    }
}
