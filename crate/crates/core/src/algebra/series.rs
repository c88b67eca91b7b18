use super::poly::MomentPolynomial;
use num_rational::BigRational;
use num_traits::One;
use std::collections::BTreeMap;

/// Truncated power series in u and v with polynomial coefficients.
/// Only cells with k + j <= max_order are kept.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BivariateSeries {
    pub max_order: u32,
    terms: BTreeMap<(u32, u32), MomentPolynomial>,
}

impl BivariateSeries {
    pub fn zero(max_order: u32) -> Self {
        BivariateSeries { max_order, terms: BTreeMap::new() }
    }

    pub fn one(max_order: u32) -> Self {
        let mut s = Self::zero(max_order);
        s.add_cell(0, 0, &MomentPolynomial::one());
        s
    }

    pub fn add_cell(&mut self, k: u32, j: u32, c: &MomentPolynomial) {
        if k + j > self.max_order || c.is_zero() {
            return;
        }
        let e = self.terms.entry((k, j)).or_default();
        *e = &*e + c;
        if e.is_zero() {
            self.terms.remove(&(k, j));
        }
    }

    pub fn get(&self, k: u32, j: u32) -> MomentPolynomial {
        self.terms.get(&(k, j)).cloned().unwrap_or_default()
    }

    pub fn cells(&self) -> impl Iterator<Item = (&(u32, u32), &MomentPolynomial)> {
        self.terms.iter()
    }

    pub fn add(&self, b: &BivariateSeries) -> BivariateSeries {
        let mut out = self.clone();
        out.max_order = self.max_order.min(b.max_order);
        out.terms.retain(|&(k, j), _| k + j <= out.max_order);
        for (&(k, j), c) in &b.terms {
            out.add_cell(k, j, c);
        }
        out
    }

    pub fn scale(&self, c: &BigRational) -> BivariateSeries {
        let mut out = Self::zero(self.max_order);
        for (&(k, j), p) in &self.terms {
            out.add_cell(k, j, &p.scale(c));
        }
        out
    }

    pub fn mul(&self, b: &BivariateSeries) -> BivariateSeries {
        let order = self.max_order.min(b.max_order);
        let mut out = Self::zero(order);
        for (&(ka, ja), pa) in &self.terms {
            for (&(kb, jb), pb) in &b.terms {
                if ka + kb + ja + jb <= order {
                    out.add_cell(ka + kb, ja + jb, &(pa * pb));
                }
            }
        }
        out
    }

    pub fn pow(&self, m: u32) -> BivariateSeries {
        let mut out = Self::one(self.max_order);
        for _ in 0..m {
            out = out.mul(self);
        }
        out
    }

    /// exp of a series without constant term, via the truncated Taylor sum.
    pub fn exp(&self) -> BivariateSeries {
        assert!(self.get(0, 0).is_zero(), "exp needs a series without constant term");
        let mut out = Self::one(self.max_order);
        let mut term = Self::one(self.max_order);
        let mut fact = BigRational::one();
        for m in 1..=self.max_order {
            term = term.mul(self);
            if term.terms.is_empty() {
                break;
            }
            fact *= BigRational::from_integer(m.into());
            out = out.add(&term.scale(&(BigRational::one() / &fact)));
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|p| p.is_zero()) || self.terms.is_empty()
    }

    pub fn truncate(&self, order: u32) -> BivariateSeries {
        let mut out = Self::zero(order.min(self.max_order));
        for (&(k, j), p) in &self.terms {
            out.add_cell(k, j, p);
        }
        out
    }
}

impl Default for BivariateSeries {
    fn default() -> Self {
        Self::zero(0)
    }
}
