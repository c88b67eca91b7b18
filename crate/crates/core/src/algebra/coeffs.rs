use super::poly::{rat, MomentPolynomial};
use super::series::BivariateSeries;
use super::AlphaCase;
use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;

/// The coefficients d_{k,j} of u^k v^j, for k + j <= order.
#[derive(Clone, Debug, PartialEq)]
pub struct DTable {
    pub order: u32,
    pub case: AlphaCase,
    pub series: BivariateSeries,
}

impl DTable {
    pub fn get(&self, k: u32, j: u32) -> Result<MomentPolynomial> {
        if k + j > self.order {
            return Err(Error::InsufficientOrder {
                needed: (k + j) as usize,
                available: self.order as usize,
            });
        }
        Ok(self.series.get(k, j))
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32, MomentPolynomial)> + '_ {
        (2..=self.order).flat_map(move |o| (0..=o).map(move |k| (k, o - k, self.series.get(k, o - k))))
    }
}

fn factorial(n: u32) -> BigRational {
    let mut f = BigInt::one();
    for i in 2..=n {
        f *= i;
    }
    BigRational::from_integer(f)
}

/// d_{k,j}: coefficients of the re-expanded log of n(f(t/n^{1/alpha}) - 1)/n + 1 in
/// u = -it/n^{1/alpha} and v = y/n.
pub fn d_table(max_total_order: u32, case: AlphaCase) -> DTable {
    assert!(max_total_order >= 2);
    let work = max_total_order + 2;
    let first = match case {
        AlphaCase::General => 1,
        AlphaCase::Alpha1 => 2,
    };
    let sign = |l: u32| if l % 2 == 0 { BigRational::one() } else { -BigRational::one() };

    // inner = v + sum_l (-1)^l mu_l u^l / l!
    let mut inner = BivariateSeries::zero(work);
    inner.add_cell(0, 1, &MomentPolynomial::one());
    for l in first..=work {
        let c = sign(l) / factorial(l);
        inner.add_cell(l, 0, &MomentPolynomial::symbol(l as usize).scale(&c));
    }

    let mut total = BivariateSeries::zero(work);
    for j in 2..=work {
        let c = sign(j) / factorial(j);
        total.add_cell(j, 0, &MomentPolynomial::symbol(j as usize).scale(&c));
    }
    let mut power = inner.clone();
    for k in 2..=work {
        power = power.mul(&inner);
        let c = rat(if k % 2 == 0 { -1 } else { 1 }, k as i64);
        total = total.add(&power.scale(&c));
    }
    DTable { order: max_total_order, case, series: total.truncate(max_total_order) }
}

/// L_{m,k}: below this j the coefficient w_{m,k,j} vanishes.
pub fn w_lower_limit(m: u32, k: u32) -> i64 {
    let (m, k) = (m as i64, k as i64);
    (-(k / 2)).max(-m).max(m - k)
}

/// w_{m,k,j}: the coefficient of u^k v^{j+m} in (sum d_{k,j} u^k v^j)^m, summed over
/// ordered decompositions k_1+..+k_m = k, s_1+..+s_m = j+m.
pub fn w_coefficient(m: u32, k: u32, j: i64, d: &DTable) -> Result<MomentPolynomial> {
    assert!(m >= 1);
    if j < w_lower_limit(m, k) {
        return Ok(MomentPolynomial::zero());
    }
    let s = (j + m as i64) as u32;
    let total = k + s;
    // every factor has order >= 2, so the largest one has order total - 2(m-1)
    let biggest = total - 2 * (m - 1);
    if biggest > d.order {
        return Err(Error::InsufficientOrder { needed: biggest as usize, available: d.order as usize });
    }
    Ok(compose(m, k, s, d))
}

fn compose(parts: u32, k: u32, s: u32, d: &DTable) -> MomentPolynomial {
    if parts == 1 {
        if k + s < 2 {
            return MomentPolynomial::zero();
        }
        return d.series.get(k, s);
    }
    let mut acc = MomentPolynomial::zero();
    let rest = parts - 1;
    for k1 in 0..=k {
        for s1 in 0..=s {
            if k1 + s1 < 2 || (k - k1) + (s - s1) < 2 * rest {
                continue;
            }
            let head = d.series.get(k1, s1);
            if head.is_zero() {
                continue;
            }
            let tail = compose(rest, k - k1, s - s1, d);
            if !tail.is_zero() {
                acc = &acc + &(&head * &tail);
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> MomentPolynomial {
        s.parse().unwrap()
    }

    #[test]
    fn low_order_entries() {
        let d = d_table(4, AlphaCase::General);
        assert_eq!(d.get(0, 2).unwrap(), p("-1/2"));
        assert_eq!(d.get(1, 1).unwrap(), p("mu1"));
        assert_eq!(d.get(2, 0).unwrap(), p("-1/2*mu1^2 + 1/2*mu2"));
        assert_eq!(d.get(0, 0).unwrap(), p("0"));
        assert_eq!(d.get(1, 0).unwrap(), p("0"));
        assert_eq!(d.get(0, 1).unwrap(), p("0"));
        assert!(d.get(3, 2).is_err());
        let d1 = d_table(4, AlphaCase::Alpha1);
        assert_eq!(d1.get(1, 1).unwrap(), p("0"));
    }

    #[test]
    fn w_small_cases() {
        let d = d_table(4, AlphaCase::General);
        assert_eq!(w_coefficient(1, 0, 2, &d).unwrap(), p("1/3"));
        assert_eq!(w_coefficient(2, 0, 2, &d).unwrap(), p("1/4"));
        assert_eq!(w_coefficient(3, 0, -1, &d).unwrap(), p("0"));
        assert!(w_coefficient(1, 3, 2, &d).is_err());
    }
}
