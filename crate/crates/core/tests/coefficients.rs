use stp_merge::algebra::*;
use stp_merge::game::Regime;
use std::collections::BTreeMap;

fn p(s: &str) -> MomentPolynomial {
    s.parse().unwrap()
}

type Key = (u32, u32, u32, i64, u32);

fn as_map(t: &ExpansionTermTable) -> BTreeMap<Key, MomentPolynomial> {
    t.terms
        .iter()
        .map(|t| ((t.deriv, t.ypow, t.nk, t.nj, t.log_power), t.coefficient.clone()))
        .collect()
}

fn expect(rows: &[(Key, &str)]) -> BTreeMap<Key, MomentPolynomial> {
    rows.iter().map(|(k, s)| (*k, p(s))).collect()
}

const G1: &[(Key, &str)] = &[
    ((0, 0, 0, 0, 0), "1"),
    ((0, 2, 0, 1, 0), "-1/2"),
    ((1, 1, 1, 0, 0), "mu1"),
    ((2, 0, 2, -1, 0), "-1/2*mu1^2 + 1/2*mu2"),
];

const G2_EXTRA: &[(Key, &str)] = &[
    ((0, 3, 0, 2, 0), "8/24"),
    ((0, 4, 0, 2, 0), "3/24"),
    ((1, 2, 1, 1, 0), "-mu1"),
    ((1, 3, 1, 1, 0), "-1/2*mu1"),
    ((2, 1, 2, 0, 0), "4/4*mu1^2 - 2/4*mu2"),
    ((2, 2, 2, 0, 0), "3/4*mu1^2 - 1/4*mu2"),
    ((3, 0, 3, -1, 0), "-2/6*mu1^3 + 3/6*mu1*mu2 - 1/6*mu3"),
    ((3, 1, 3, -1, 0), "-3/6*mu1^3 + 3/6*mu1*mu2"),
    ((4, 0, 4, -2, 0), "1/8*mu1^4 - 2/8*mu1^2*mu2 + 1/8*mu2^2"),
];

#[test]
fn fifteen_listed_d_entries() {
    let d = d_table(4, AlphaCase::General);
    let want = [
        (0, 2, "-1/2"),
        (1, 1, "mu1"),
        (2, 0, "-1/2*mu1^2 + 1/2*mu2"),
        (0, 3, "1/3"),
        (1, 2, "-mu1"),
        (2, 1, "mu1^2 - 1/2*mu2"),
        (3, 0, "-1/3*mu1^3 + 1/2*mu1*mu2 - 1/6*mu3"),
        (0, 4, "-1/4"),
        (1, 3, "mu1"),
        (2, 2, "-3/2*mu1^2 + 1/2*mu2"),
        (3, 1, "mu1^3 - mu1*mu2 + 1/6*mu3"),
        (4, 0, "-1/4*mu1^4 + 1/2*mu1^2*mu2 - 1/6*mu1*mu3 - 1/8*mu2^2 + 1/24*mu4"),
        (0, 0, "0"),
        (0, 1, "0"),
        (1, 0, "0"),
    ];
    for (k, j, s) in want {
        assert_eq!(d.get(k, j).unwrap(), p(s), "d_({k},{j})");
    }
}

#[test]
fn first_order_table_matches_display() {
    let t = expansion_terms(AlphaCase::General, 1).unwrap();
    assert_eq!(as_map(&t), expect(G1));
}

#[test]
fn second_order_table_matches_display() {
    let t = expansion_terms(AlphaCase::General, 2).unwrap();
    let mut want = expect(G1);
    want.extend(expect(G2_EXTRA));
    assert_eq!(as_map(&t), want);
}

#[test]
fn zeroth_order_is_the_base_law() {
    for case in [AlphaCase::General, AlphaCase::Alpha1] {
        let t = expansion_terms(case, 0).unwrap();
        assert_eq!(as_map(&t), expect(&[((0, 0, 0, 0, 0), "1")]));
    }
}

#[test]
fn alpha_one_tables_match_display() {
    // key (deriv, ypow, 0, n-exponent, power of p r log_r n)
    let g1: &[(Key, &str)] = &[
        ((0, 0, 0, 0, 0), "1"),
        ((0, 2, 0, 1, 0), "-1/2"),
        ((1, 1, 0, 1, 1), "1"),
        ((2, 0, 0, 1, 2), "-1/2"),
        ((2, 0, 0, 1, 0), "1/2*mu2"),
    ];
    let g2: &[(Key, &str)] = &[
        ((0, 3, 0, 2, 0), "1/3"),
        ((0, 4, 0, 2, 0), "1/8"),
        ((1, 2, 0, 2, 1), "-1"),
        ((1, 3, 0, 2, 1), "-1/2"),
        ((2, 1, 0, 2, 2), "1"),
        ((2, 1, 0, 2, 0), "-1/2*mu2"),
        ((2, 2, 0, 2, 2), "3/4"),
        ((2, 2, 0, 2, 0), "-1/4*mu2"),
        ((3, 0, 0, 2, 3), "-1/3"),
        ((3, 0, 0, 2, 1), "1/2*mu2"),
        ((3, 0, 0, 2, 0), "-1/6*mu3"),
        ((3, 1, 0, 2, 3), "-1/2"),
        ((3, 1, 0, 2, 1), "1/2*mu2"),
        ((4, 0, 0, 2, 4), "1/8"),
        ((4, 0, 0, 2, 2), "-1/4*mu2"),
        ((4, 0, 0, 2, 0), "1/8*mu2^2"),
    ];
    let t1 = expansion_terms(AlphaCase::Alpha1, 1).unwrap();
    assert_eq!(as_map(&t1), expect(g1));
    let t2 = expansion_terms(AlphaCase::Alpha1, 2).unwrap();
    let mut want = expect(g1);
    want.extend(expect(g2));
    assert_eq!(as_map(&t2), want);
}

#[test]
fn alpha_one_two_paths_agree() {
    for ell in 0..=4 {
        let direct = expansion_terms(AlphaCase::Alpha1, ell).unwrap();
        let via = general_at_alpha1(&expansion_terms(AlphaCase::General, ell).unwrap());
        assert_eq!(as_map(&direct), as_map(&via), "ell = {ell}");
    }
}

#[test]
fn simplified_below_one() {
    let g1: &[(Key, &str)] = &[((0, 0, 0, 0, 0), "1"), ((0, 2, 0, 1, 0), "-1/2")];
    let g2: &[(Key, &str)] = &[((0, 3, 0, 2, 0), "8/24"), ((0, 4, 0, 2, 0), "3/24")];
    let g3: &[(Key, &str)] = &[((0, 4, 0, 3, 0), "-12/48"), ((0, 5, 0, 3, 0), "-8/48"), ((0, 6, 0, 3, 0), "-1/48")];
    let mut want = expect(g1);
    assert_eq!(as_map(&simplified_terms(2, Regime::Below1, false).unwrap()), want);
    want.extend(expect(g2));
    assert_eq!(as_map(&simplified_terms(3, Regime::Below1, false).unwrap()), want);
    want.extend(expect(g3));
    assert_eq!(as_map(&simplified_terms(4, Regime::Below1, false).unwrap()), want);
    assert_eq!(as_map(&simplified_terms(1, Regime::Below1, false).unwrap()), expect(&[((0, 0, 0, 0, 0), "1")]));
}

#[test]
fn simplified_above_one() {
    let mut want = expect(&[((0, 0, 0, 0, 0), "1"), ((2, 0, 2, -1, 0), "-1/2*mu1^2 + 1/2*mu2")]);
    assert_eq!(as_map(&simplified_terms(2, Regime::Above1, false).unwrap()), want);
    want.extend(expect(&[((4, 0, 4, -2, 0), "1/8*mu1^4 - 1/4*mu1^2*mu2 + 1/8*mu2^2")]));
    assert_eq!(as_map(&simplified_terms(3, Regime::Above1, false).unwrap()), want);
    // j = 3: (-1)^3 (mu1^2 - mu2)^3 / (3! 2^3)
    let t = as_map(&simplified_terms(4, Regime::Above1, false).unwrap());
    let c3 = &t[&(6, 0, 6, -3, 0)];
    assert_eq!(c3, &p("-1/48*mu1^6 + 3/48*mu1^4*mu2 - 3/48*mu1^2*mu2^2 + 1/48*mu2^3"));
    let tt = as_map(&simplified_terms(2, Regime::Above1, true).unwrap());
    assert_eq!(tt[&(1, 1, 1, 0, 0)], p("mu1"));
    assert!(simplified_terms(2, Regime::One, false).is_err());
}

#[test]
fn w_is_the_exponential_of_d() {
    for order in 2..=6u32 {
        let d = d_table(order, AlphaCase::General);
        let e = d.series.exp();
        for k in 0..=order {
            for s in 0..=(order - k) {
                if k + s == 0 {
                    continue;
                }
                let mut acc = MomentPolynomial::zero();
                let mut fact = num_rational::BigRational::from_integer(1.into());
                for m in 1..=(k + s) {
                    fact *= num_rational::BigRational::from_integer(m.into());
                    let j = s as i64 - m as i64;
                    if j < -((k / 2) as i64) {
                        continue;
                    }
                    let w = w_coefficient(m, k, j, &d).unwrap();
                    acc = &acc + &w.scale(&(num_rational::BigRational::from_integer(1.into()) / &fact));
                }
                assert_eq!(acc, e.get(k, s), "order {order} cell ({k},{s})");
            }
        }
    }
}

#[test]
fn w_matches_series_power() {
    let d = d_table(6, AlphaCase::General);
    for m in 1..=4u32 {
        let pw = d.series.pow(m);
        for k in 0..=6u32 {
            for s in 0..=(6 - k) {
                let j = s as i64 - m as i64;
                if j < -((k / 2) as i64) {
                    continue;
                }
                assert_eq!(w_coefficient(m, k, j, &d).unwrap(), pw.get(k, s), "m={m} k={k} s={s}");
            }
        }
    }
}

#[test]
fn zero_rule_exhaustive() {
    let d = d_table(12, AlphaCase::General);
    for m in 1..=6u32 {
        for k in 0..=8u32 {
            let lim = w_lower_limit(m, k);
            for j in -((k / 2) as i64)..lim {
                assert!(w_coefficient(m, k, j, &d).unwrap().is_zero(), "m={m} k={k} j={j}");
            }
            // and the series power agrees that nothing lives below the limit
            let pw = d.series.truncate(k + 8).pow(m);
            for j in -((k / 2) as i64)..lim {
                let s = j + m as i64;
                if s >= 0 {
                    assert!(pw.get(k, s as u32).is_zero());
                }
            }
        }
    }
}

#[test]
fn symbol_count_bound() {
    // moment symbols beyond order + 2 never appear
    for order in 2..=6u32 {
        let d = d_table(order, AlphaCase::General);
        for (_, _, poly) in d.entries() {
            assert!(poly.max_symbol() <= (order + 2) as usize);
        }
    }
}
