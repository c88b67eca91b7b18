use crate::error::{Error, Result};
use crate::game::{virtual_moment, GameParams};
use crate::scalar::Real;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

/// Exponent vector over mu_1, mu_2, ...; index 0 holds the power of mu_1.
/// Trailing zeros are trimmed so equal monomials compare equal.
pub type Monomial = Vec<u32>;

/// Sparse polynomial in the virtual-moment symbols with exact rational coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MomentPolynomial {
    terms: BTreeMap<Monomial, BigRational>,
}

fn trim(mut m: Monomial) -> Monomial {
    while m.last() == Some(&0) {
        m.pop();
    }
    m
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl MomentPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Self::zero();
        p.add_term(Vec::new(), c);
        p
    }

    pub fn one() -> Self {
        Self::constant(BigRational::one())
    }

    /// The symbol mu_j (j >= 1).
    pub fn symbol(j: usize) -> Self {
        assert!(j >= 1);
        let mut m = vec![0; j];
        m[j - 1] = 1;
        let mut p = Self::zero();
        p.add_term(m, BigRational::one());
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let m = trim(m);
        let e = self.terms.entry(m.clone()).or_insert_with(BigRational::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        MomentPolynomial {
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    /// Highest symbol index that occurs.
    pub fn max_symbol(&self) -> usize {
        self.terms.keys().map(|m| m.len()).max().unwrap_or(0)
    }

    /// Group terms by the power of mu_j, removing mu_j from each group.
    pub fn split_by_symbol(&self, j: usize) -> BTreeMap<u32, MomentPolynomial> {
        let mut out: BTreeMap<u32, MomentPolynomial> = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut m = m.clone();
            let e = if m.len() >= j { std::mem::take(&mut m[j - 1]) } else { 0 };
            out.entry(e).or_default().add_term(m, c.clone());
        }
        out
    }

    /// Substitute mu_j = 0.
    pub fn drop_symbol(&self, j: usize) -> Self {
        self.split_by_symbol(j).remove(&0).unwrap_or_default()
    }

    /// Numeric value with mu_j = virtual_moment(gp, j).
    pub fn evaluate<T: Real>(&self, gp: &GameParams<T>) -> Result<T> {
        let mut mus = vec![T::nan(); self.max_symbol()];
        for m in self.terms.keys() {
            for (i, &e) in m.iter().enumerate() {
                if e > 0 && mus[i].is_nan() {
                    mus[i] = virtual_moment(gp, T::from_usize(i + 1).unwrap())?;
                }
            }
        }
        self.evaluate_at(&mus)
    }

    /// Numeric value at explicit symbol values mus[j-1] = mu_j.
    pub fn evaluate_at<T: Real>(&self, mus: &[T]) -> Result<T> {
        if mus.len() < self.max_symbol() {
            return Err(Error::InsufficientOrder { needed: self.max_symbol(), available: mus.len() });
        }
        let mut acc = T::zero();
        for (m, c) in &self.terms {
            let mut v = rational_to::<T>(c);
            for (i, &e) in m.iter().enumerate() {
                if e > 0 {
                    v = v * mus[i].powi(e as i32);
                }
            }
            acc = acc + v;
        }
        Ok(acc)
    }
}

pub fn rational_to<T: Real>(c: &BigRational) -> T {
    // numerator and denominator separately keeps precision for huge parts
    match (c.numer().to_f64(), c.denom().to_f64()) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => T::lit(a) / T::lit(b),
        _ => T::lit(c.to_f64().unwrap_or(f64::NAN)),
    }
}

impl Add for &MomentPolynomial {
    type Output = MomentPolynomial;
    fn add(self, b: &MomentPolynomial) -> MomentPolynomial {
        let mut out = self.clone();
        for (m, c) in &b.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &MomentPolynomial {
    type Output = MomentPolynomial;
    fn sub(self, b: &MomentPolynomial) -> MomentPolynomial {
        self + &(-b)
    }
}

impl Neg for &MomentPolynomial {
    type Output = MomentPolynomial;
    fn neg(self) -> MomentPolynomial {
        MomentPolynomial { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect() }
    }
}

impl Mul for &MomentPolynomial {
    type Output = MomentPolynomial;
    fn mul(self, b: &MomentPolynomial) -> MomentPolynomial {
        let mut out = MomentPolynomial::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &b.terms {
                let n = ma.len().max(mb.len());
                let m: Monomial = (0..n)
                    .map(|i| ma.get(i).copied().unwrap_or(0) + mb.get(i).copied().unwrap_or(0))
                    .collect();
                out.add_term(m, ca * cb);
            }
        }
        out
    }
}

fn fmt_rat(c: &BigRational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for MomentPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            let neg = c.is_negative();
            let a = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if neg { " - " } else { " + " })?;
            }
            first = false;
            let mut factors: Vec<String> = Vec::new();
            for (i, &e) in m.iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(format!("mu{}", i + 1)),
                    _ => factors.push(format!("mu{}^{}", i + 1, e)),
                }
            }
            if factors.is_empty() {
                write!(f, "{}", fmt_rat(&a))?;
            } else if a.is_one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{}*{}", fmt_rat(&a), factors.join("*"))?;
            }
        }
        Ok(())
    }
}

impl FromStr for MomentPolynomial {
    type Err = Error;

    /// Parses the format produced by `Display`, e.g. `-1/2*mu1^2 + 1/2*mu2`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse polynomial {s:?}"));
        let cleaned: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if cleaned == "0" {
            return Ok(Self::zero());
        }
        let mut out = Self::zero();
        let mut pieces: Vec<(bool, String)> = Vec::new();
        let mut cur = String::new();
        let mut neg = false;
        for ch in cleaned.chars() {
            if (ch == '+' || ch == '-') && !cur.ends_with('^') {
                if !cur.is_empty() {
                    pieces.push((neg, std::mem::take(&mut cur)));
                }
                neg = ch == '-';
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            pieces.push((neg, cur));
        }
        for (neg, body) in pieces {
            let mut coef = BigRational::one();
            let mut mono: Monomial = Vec::new();
            for factor in body.split('*') {
                if let Some(rest) = factor.strip_prefix("mu") {
                    let (idx, pow) = match rest.split_once('^') {
                        Some((a, b)) => (a, b.parse::<u32>().map_err(|_| bad())?),
                        None => (rest, 1),
                    };
                    let idx: usize = idx.parse().map_err(|_| bad())?;
                    if idx == 0 {
                        return Err(bad());
                    }
                    if mono.len() < idx {
                        mono.resize(idx, 0);
                    }
                    mono[idx - 1] += pow;
                } else {
                    let c = match factor.split_once('/') {
                        Some((a, b)) => BigRational::new(
                            a.parse::<BigInt>().map_err(|_| bad())?,
                            b.parse::<BigInt>().map_err(|_| bad())?,
                        ),
                        None => BigRational::from_integer(factor.parse::<BigInt>().map_err(|_| bad())?),
                    };
                    coef *= c;
                }
            }
            if neg {
                coef = -coef;
            }
            out.add_term(mono, coef);
        }
        Ok(out)
    }
}
