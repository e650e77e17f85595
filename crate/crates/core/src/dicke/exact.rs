//! Arbitrary-precision rational mirror of the sector maps.
//!
//! The float engine in the parent module is fast; this one is *exact*. It
//! exists to prove, in tests, that the update maps conserve probability to
//! the last bit and that the float engine tracks the true values. Kept to
//! small ensembles (`M <= 8`), where exact arithmetic stays cheap.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::{degeneracy, sector_j2s};
use crate::error::{Error, Result};

/// Largest ensemble handled exactly.
pub const MAX_EXACT_SPINS: usize = 8;

fn check_size(m_spins: usize) -> Result<()> {
    if m_spins == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if m_spins > MAX_EXACT_SPINS {
        return Err(Error::Unsupported {
            what: format!(
                "exact rational engine handles at most {MAX_EXACT_SPINS} spins, got {m_spins}"
            ),
        });
    }
    Ok(())
}

/// Exact counterpart of [`super::SectorState`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSectorState {
    m_spins: usize,
    p: Vec<Vec<BigRational>>,
}

impl ExactSectorState {
    /// Maximally mixed state with populations `1 / 2^M`.
    pub fn uniform(m_spins: usize) -> Result<Self> {
        check_size(m_spins)?;
        let val = BigRational::new(BigInt::one(), BigInt::from(1u8) << m_spins);
        let p = sector_j2s(m_spins)
            .iter()
            .map(|&j2| vec![val.clone(); j2 as usize + 1])
            .collect();
        Ok(ExactSectorState { m_spins, p })
    }

    /// Number of spins.
    pub fn num_spins(&self) -> usize {
        self.m_spins
    }

    /// `sum_{j,m} d_j p[j][m]`, exactly.
    pub fn weighted_norm(&self) -> BigRational {
        let mut acc = BigRational::zero();
        for (i, row) in self.p.iter().enumerate() {
            let j2 = (self.m_spins - 2 * i) as u32;
            let d = BigRational::from(BigInt::from(degeneracy(self.m_spins, j2).unwrap()));
            for v in row {
                acc += &d * v;
            }
        }
        acc
    }

    /// Mean excited-state probability per spin, exactly.
    pub fn p_up(&self) -> BigRational {
        let m = self.m_spins;
        let mut acc = BigRational::zero();
        for (i, row) in self.p.iter().enumerate() {
            let j2 = (m - 2 * i) as u32;
            let d = BigRational::from(BigInt::from(degeneracy(m, j2).unwrap()));
            for (a, v) in row.iter().enumerate() {
                let m2 = j2 as i32 - 2 * a as i32;
                let excited = BigRational::new(BigInt::from(m2 + m as i32), BigInt::from(2));
                acc += &d * v * excited / BigRational::from(BigInt::from(m));
            }
        }
        acc
    }

    /// The populations rounded to floats, same layout as the float engine.
    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        self.p
            .iter()
            .map(|row| row.iter().map(|v| v.to_f64().unwrap()).collect())
            .collect()
    }
}

/// Exact extraction cycle (see [`super::step1_update`]).
pub fn step1_update_exact(s: &ExactSectorState) -> ExactSectorState {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let p =
        s.p.iter()
            .map(|row| {
                let len = row.len();
                let outflow: Vec<BigRational> = (0..len)
                    .map(|a| {
                        if a + 1 < len {
                            &row[a] * &half
                        } else {
                            BigRational::zero()
                        }
                    })
                    .collect();
                (0..len)
                    .map(|a| {
                        let inflow = if a == 0 {
                            BigRational::zero()
                        } else {
                            outflow[a - 1].clone()
                        };
                        &row[a] - &outflow[a] + inflow
                    })
                    .collect()
            })
            .collect();
    ExactSectorState {
        m_spins: s.m_spins,
        p,
    }
}

/// Exact remix cycle (see [`super::step2_update`]).
pub fn step2_update_exact(s: &ExactSectorState) -> ExactSectorState {
    let m = s.m_spins;
    let pi = column_distribution_exact(s);
    let p = sector_j2s(m)
        .iter()
        .map(|&j2| {
            (0..=j2)
                .map(|a| {
                    let m2 = j2 as i32 - 2 * a as i32;
                    let c = ((m2 + m as i32) / 2) as usize;
                    &pi[c] / BigRational::from(BigInt::from(super::binomial(m, c)))
                })
                .collect()
        })
        .collect();
    ExactSectorState { m_spins: m, p }
}

/// Exact column totals, ascending in excited count.
pub fn column_distribution_exact(s: &ExactSectorState) -> Vec<BigRational> {
    let m = s.m_spins;
    let mut pi = vec![BigRational::zero(); m + 1];
    for (i, row) in s.p.iter().enumerate() {
        let j2 = (m - 2 * i) as u32;
        let d = BigRational::from(BigInt::from(degeneracy(m, j2).unwrap()));
        for (a, v) in row.iter().enumerate() {
            let m2 = j2 as i32 - 2 * a as i32;
            let c = ((m2 + m as i32) / 2) as usize;
            pi[c] += &d * v;
        }
    }
    pi
}

/// Exact combined cycle on column totals (see [`super::pi_update`]).
pub fn pi_update_exact(m_spins: usize, pi: &[BigRational]) -> Result<Vec<BigRational>> {
    check_size(m_spins)?;
    if pi.len() != m_spins + 1 {
        return Err(Error::LengthMismatch {
            name: "pi",
            expected: m_spins + 1,
            got: pi.len(),
        });
    }
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let outflow: Vec<BigRational> = (0..=m_spins)
        .map(|c| {
            let m2 = 2 * c as i32 - m_spins as i32;
            let dark = if m2 <= 0 {
                BigRational::from(BigInt::from(degeneracy(m_spins, (-m2) as u32).unwrap()))
            } else {
                BigRational::zero()
            };
            let col = BigRational::from(BigInt::from(super::binomial(m_spins, c)));
            (BigRational::one() - dark / col) * &half * &pi[c]
        })
        .collect();
    Ok((0..=m_spins)
        .map(|c| {
            let inflow = if c + 1 <= m_spins {
                outflow[c + 1].clone()
            } else {
                BigRational::zero()
            };
            &pi[c] - &outflow[c] + inflow
        })
        .collect())
}

/// Exact dark-state cooling floor `sum_j w_j (1 - 2j/M) / 2` with
/// `w_j = d_j (2j + 1) / 2^M`.
pub fn dark_limit_exact(m_spins: usize) -> Result<BigRational> {
    check_size(m_spins)?;
    let denom = BigRational::new(BigInt::one(), BigInt::from(1u8) << m_spins);
    let mut acc = BigRational::zero();
    for &j2 in &sector_j2s(m_spins) {
        let d = BigRational::from(BigInt::from(degeneracy(m_spins, j2)?));
        let w = d * BigRational::from(BigInt::from(j2 + 1)) * &denom;
        let floor_frac = BigRational::new(
            BigInt::from(m_spins as i64 - j2 as i64),
            BigInt::from(2 * m_spins as i64),
        );
        acc += w * floor_frac;
    }
    Ok(acc)
}
