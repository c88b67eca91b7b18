use super::coeffs::{d_table, w_coefficient, DTable};
use super::poly::{rat, MomentPolynomial};
use super::AlphaCase;
use crate::error::{Error, Result};
use crate::game::{GameInstance, Regime};
use crate::scalar::Real;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use std::collections::BTreeMap;

/// One summand coefficient * G^{(deriv, ypow)} * n^{-(nk/alpha + nj)} * L^{log_power},
/// where L = p r log_r n (only used when alpha = 1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub deriv: u32,
    pub ypow: u32,
    pub nk: u32,
    pub nj: i64,
    pub log_power: u32,
    pub coefficient: MomentPolynomial,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpansionTermTable {
    pub case: AlphaCase,
    pub ell: u32,
    pub terms: Vec<Term>,
}

type Key = (u32, u32, u32, i64, u32);

fn push(map: &mut BTreeMap<Key, MomentPolynomial>, key: Key, c: MomentPolynomial) {
    let e = map.entry(key).or_default();
    *e = &*e + &c;
}

fn finish(case: AlphaCase, ell: u32, map: BTreeMap<Key, MomentPolynomial>) -> ExpansionTermTable {
    let terms = map
        .into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|((deriv, ypow, nk, nj, log_power), coefficient)| Term { deriv, ypow, nk, nj, log_power, coefficient })
        .collect();
    ExpansionTermTable { case, ell, terms }
}

fn factorial(n: u32) -> BigRational {
    let mut f = BigInt::one();
    for i in 2..=n {
        f *= i;
    }
    BigRational::from_integer(f)
}

fn binomial(n: u32, k: u32) -> BigRational {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Visit every (k, j, m, w_{m,k,j}/m!) that enters the length-ell expansion.
fn for_each_w(ell: u32, d: &DTable, mut f: impl FnMut(u32, i64, u32, MomentPolynomial)) -> Result<()> {
    for k in 0..=2 * ell {
        let jlo = -((k / 2) as i64);
        let jhi = ell as i64 - k as i64;
        for j in jlo..=jhi {
            let mlo = 1.max(-j) as u32;
            let mhi = k as i64 + j;
            if mhi < mlo as i64 {
                continue;
            }
            for m in mlo..=mhi as u32 {
                let w = w_coefficient(m, k, j, d)?;
                if !w.is_zero() {
                    f(k, j, m, w.scale(&(BigRational::one() / factorial(m))));
                }
            }
        }
    }
    Ok(())
}

/// The term table of G_{n,ell}.
pub fn expansion_terms(case: AlphaCase, ell: u32) -> Result<ExpansionTermTable> {
    let d = d_table((ell + 1).max(2), case);
    let mut map = BTreeMap::new();
    push(&mut map, (0, 0, 0, 0, 0), MomentPolynomial::one());
    match case {
        AlphaCase::General => {
            for_each_w(ell, &d, |k, j, m, c| {
                push(&mut map, (k, (j + m as i64) as u32, k, j, 0), c);
            })?;
        }
        AlphaCase::Alpha1 => {
            for_each_w(ell, &d, |k, j, m, c| {
                let s = (j + m as i64) as u32;
                for l in 0..=s {
                    let sign = if l % 2 == 0 { rat(1, 1) } else { rat(-1, 1) };
                    let cl = c.scale(&(binomial(s, l) * sign));
                    push(&mut map, (k + l, s - l, 0, k as i64 + j, l), cl);
                }
            })?;
        }
    }
    Ok(finish(case, ell, map))
}

/// Reinterpret a general table at alpha = 1: n-exponents collapse to k + j and every
/// power of mu_1 becomes a power of L. Used as an independent check of the alpha1 path.
pub fn general_at_alpha1(table: &ExpansionTermTable) -> ExpansionTermTable {
    let mut map = BTreeMap::new();
    for t in &table.terms {
        for (e, c) in t.coefficient.split_by_symbol(1) {
            push(&mut map, (t.deriv, t.ypow, 0, t.nk as i64 + t.nj, t.log_power + e), c);
        }
    }
    finish(AlphaCase::Alpha1, table.ell, map)
}

/// Simplified approximants: for alpha < 1 only the (0, s) terms, for alpha > 1 only the
/// (2j, 0) terms, optionally with mu_1 G^{(1,1)} / n^{1/alpha} added.
/// Returns the table that approximates at rate index `ell` (that is, the length ell-1 expansion).
pub fn simplified_terms(ell: u32, regime: Regime, include_tilde_tilde: bool) -> Result<ExpansionTermTable> {
    if ell < 1 {
        return Err(Error::ParameterDomain("simplified tables need ell >= 1".into()));
    }
    let len = ell - 1;
    let d = d_table((len + 1).max(2), AlphaCase::General);
    let mut map = BTreeMap::new();
    push(&mut map, (0, 0, 0, 0, 0), MomentPolynomial::one());
    match regime {
        Regime::Below1 => {
            for j in 1..=len {
                for m in 1..=j {
                    let w = w_coefficient(m, 0, j as i64, &d)?;
                    let c = w.scale(&(BigRational::one() / factorial(m)));
                    push(&mut map, (0, j + m, 0, j as i64, 0), c);
                }
            }
        }
        Regime::Above1 => {
            for j in 1..=len {
                let w = w_coefficient(j, 2 * j, -(j as i64), &d)?;
                let c = w.scale(&(BigRational::one() / factorial(j)));
                push(&mut map, (2 * j, 0, 2 * j, -(j as i64), 0), c);
            }
        }
        Regime::One => {
            return Err(Error::UnsupportedRegime("simplified tables exist only for alpha != 1".into()));
        }
    }
    if include_tilde_tilde {
        push(&mut map, (1, 1, 1, 0, 0), MomentPolynomial::symbol(1));
    }
    Ok(finish(AlphaCase::General, len, map))
}

/// A term with its numeric factor for a concrete game and n.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumericTerm<T> {
    pub deriv: u32,
    pub ypow: u32,
    pub factor: T,
}

impl ExpansionTermTable {
    /// Numeric factors for a game instance, merged over equal (deriv, ypow).
    pub fn assemble<T: Real>(&self, gi: &GameInstance<T>) -> Result<Vec<NumericTerm<T>>> {
        let gp = &gi.params;
        match (self.case, gp.regime()) {
            (AlphaCase::Alpha1, Regime::One) => {}
            (AlphaCase::General, Regime::One) => {
                return Err(Error::Regime("general table used with alpha = 1".into()));
            }
            (AlphaCase::Alpha1, _) => {
                return Err(Error::Regime("alpha1 table used with alpha != 1".into()));
            }
            _ => {}
        }
        let n = T::from_u64(gi.n).unwrap();
        let big_l = gp.p * gp.r * gi.log_r_n();
        let mut merged: BTreeMap<(u32, u32), T> = BTreeMap::new();
        for t in &self.terms {
            let c = t.coefficient.evaluate(gp)?;
            let e = T::from_u32(t.nk).unwrap() / gp.alpha + T::from_i64(t.nj).unwrap();
            let v = c * n.powf(-e) * big_l.powi(t.log_power as i32);
            let slot = merged.entry((t.deriv, t.ypow)).or_insert_with(T::zero);
            *slot = *slot + v;
        }
        Ok(merged
            .into_iter()
            .map(|((deriv, ypow), factor)| NumericTerm { deriv, ypow, factor })
            .collect())
    }

    pub fn max_deriv(&self) -> u32 {
        self.terms.iter().map(|t| t.deriv).max().unwrap_or(0)
    }

    pub fn max_ypow(&self) -> u32 {
        self.terms.iter().map(|t| t.ypow).max().unwrap_or(0)
    }
}
