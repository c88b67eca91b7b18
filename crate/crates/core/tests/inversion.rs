use stp_merge::algebra::{expansion_terms, AlphaCase, NumericTerm};
use stp_merge::game::{virtual_moment, GameInstance, GameParams};
use stp_merge::inversion::*;
use stp_merge::semistable::{decay_constant, ExponentEvaluator};

const TOL: f64 = 1e-10;

fn p15() -> f64 {
    1.0 - 2f64.powf(-1.5)
}

fn games() -> Vec<GameParams<f64>> {
    vec![
        GameParams::new(0.5, 0.5).unwrap(),
        GameParams::new(1.0, 0.5).unwrap(),
        GameParams::new(1.5, p15()).unwrap(),
    ]
}

fn curve(ev: &ExponentEvaluator, k: u32, j: u32, x_max: f64) -> CurveApprox {
    let qs = QuadratureSpec::plan(ev, k, j, TOL, x_max).unwrap();
    CurveApprox::build(ev, &[NumericTerm { deriv: k, ypow: j, factor: 1.0 }], &qs).unwrap()
}

#[test]
fn base_law_mass_and_limits() {
    for g in games() {
        for gamma in [1.0, 0.75] {
            let ev = ExponentEvaluator::new(g, gamma, EXPONENT_TOL).unwrap();
            let c = curve(&ev, 0, 0, 20.0);
            let integral = c.pdf.iter().sum::<f64>() * c.h;
            assert!((integral + c.beyond_cap - 1.0).abs() < 1e-8, "alpha={} mass {}", g.alpha, integral + c.beyond_cap);
            assert!(c.imag_residual < TOL);
            // the distribution function over the full period ends at the grid mass
            assert!((c.cdf[c.cdf.len() - 1] + c.pdf[0] * c.h - c.grid_mass).abs() < 1e-8);
            assert_eq!(c.cdf_at(c.spec.x_start - 1.0).0, 0.0);
            assert!(c.cdf_at(c.spec.x_start).0.abs() < 1e-8);
            for (k, j) in [(1, 0), (0, 1), (0, 2), (2, 1)] {
                let c = curve(&ev, k, j, 20.0);
                let integral = c.pdf.iter().sum::<f64>() * c.h;
                assert!((integral + c.beyond_cap).abs() < 1e-8, "({k},{j}) {integral}");
                assert!(c.imag_residual < TOL);
            }
        }
    }
}

#[test]
fn base_law_is_monotone() {
    for g in games() {
        let ev = ExponentEvaluator::new(g, 1.0, EXPONENT_TOL).unwrap();
        let c = curve(&ev, 0, 0, 20.0);
        let (lo, hi) = (c.spec.x_start, c.spec.usable_max);
        let mut last = 0.0;
        for i in 0..512 {
            let x = lo + (hi - lo) * i as f64 / 511.0;
            let (v, e) = c.cdf_at(x.min(hi));
            assert!(v >= last - e, "alpha={} x={x}: {v} < {last}", g.alpha);
            last = v;
        }
    }
}

/// Law of the jumps tau_k >= 4^-depth for alpha = 0.5, p = 0.5, gamma = 1 (tau_k = 4^k,
/// lambda_k = 2^-k), computed exactly on the lattice 4^-depth; the smaller jumps are
/// replaced by their mean 2^-depth.
fn truncated_compound_poisson(depth: i32, x_max: f64) -> (f64, Vec<f64>) {
    let u = 4f64.powi(-depth);
    let len = (x_max / u) as usize + 1;
    let mut pmf = vec![0.0; len];
    pmf[0] = 1.0;
    let mut k = -depth;
    loop {
        let step = 4usize.pow((k + depth) as u32);
        if step >= len {
            // levels beyond the window only contribute P{N_k = 0}
            let rest: f64 = (k..k + 40).map(|i| 2f64.powi(-i)).sum();
            pmf.iter_mut().for_each(|v| *v *= (-rest).exp());
            break;
        }
        let lam = 2f64.powi(-k);
        let mut w = vec![(-lam).exp()];
        while w.len() * step < len {
            let m = w.len();
            let v = w[m - 1] * lam / m as f64;
            w.push(v);
        }
        let mut next = vec![0.0; len];
        for (i, &a) in pmf.iter().enumerate() {
            if a < 1e-300 {
                continue;
            }
            for (m, &b) in w.iter().enumerate() {
                let j = i + m * step;
                if j >= len {
                    break;
                }
                next[j] += a * b;
            }
        }
        pmf = next;
        k += 1;
    }
    (2f64.powi(-depth), pmf)
}

#[test]
fn base_law_against_lattice_compound_poisson() {
    let g = GameParams::new(0.5, 0.5).unwrap();
    let ev = ExponentEvaluator::new(g, 1.0, EXPONENT_TOL).unwrap();
    let c = curve(&ev, 0, 0, 20.0);
    let depth = 8;
    let (shift, pmf) = truncated_compound_poisson(depth, 3.2);
    let u = 4f64.powi(-depth);
    let mut cum = Vec::with_capacity(pmf.len());
    let mut acc = 0.0;
    for v in &pmf {
        acc += v;
        cum.push(acc);
    }
    for x in [0.5, 1.0, 2.0, 3.0] {
        // step function at the atom below x, midpoint of its jump
        let i = ((x - shift) / u).floor() as usize;
        let want = cum[i] - 0.5 * pmf[i];
        let got = c.cdf_at(x).0;
        assert!((got - want).abs() < 1e-7, "x={x}: {got} vs {want}");
    }
}

#[test]
fn self_convergence_at_double_resolution() {
    let g = GameParams::new(0.5, 0.5).unwrap();
    let ev = ExponentEvaluator::new(g, 1.0, EXPONENT_TOL).unwrap();
    let qs = QuadratureSpec::plan(&ev, 0, 0, TOL, 20.0).unwrap();
    let mut fine = QuadratureSpec::plan(&ev, 0, 0, TOL, 2.0 * qs.period + qs.x_start).unwrap();
    assert!(fine.period >= 2.0 * qs.period);
    fine.tol = qs.tol;
    for x in [0.0, 0.3, 1.0, 4.0] {
        let a = density_of_term(&ev, 0, 0, x, &qs).unwrap();
        let b = density_of_term(&ev, 0, 0, x, &fine).unwrap();
        assert!((a - b).abs() < 2.0 * TOL, "x={x}: {a} {b}");
        let a = cdf_of_term(&ev, 0, 0, x, &qs).unwrap();
        let b = cdf_of_term(&ev, 0, 0, x, &fine).unwrap();
        assert!((a - b).abs() < 2.0 * TOL, "x={x}: {a} {b}");
    }
    assert!(density_of_term(&ev, 0, 0, 1e6, &qs).is_err());
}

fn median(c: &CurveApprox) -> f64 {
    let (mut lo, mut hi) = (c.spec.x_start, c.spec.usable_max);
    for _ in 0..80 {
        let m = 0.5 * (lo + hi);
        if c.cdf_at(m).0 < 0.5 {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn second_y_power_matches_u_derivative() {
    // G^{(0,2)} has transform y^2 e^y = d^2/du^2 e^{u y} at u = 1
    for g in games() {
        let ev = ExponentEvaluator::new(g, 1.0, EXPONENT_TOL).unwrap();
        let base = curve(&ev, 0, 0, 20.0);
        let x = median(&base);
        let d = 0.02;
        let at = |u: f64| curve(&ev.scaled(u), 0, 0, 20.0).cdf_at(x).0;
        let second = (-at(1.0 + 2.0 * d) + 16.0 * at(1.0 + d) - 30.0 * at(1.0) + 16.0 * at(1.0 - d) - at(1.0 - 2.0 * d)) / (12.0 * d * d);
        let direct = curve(&ev, 0, 2, 20.0).cdf_at(x).0;
        assert!((second - direct).abs() < 1e-6, "alpha={}: {second} vs {direct}", g.alpha);
    }
}

#[test]
fn first_order_expansion_by_hand() {
    let g = GameParams::new(0.5, 0.5).unwrap();
    let n = 64u64;
    let nf = n as f64;
    let gi = GameInstance::new(g, n).unwrap();
    let mu1 = virtual_moment(&g, 1.0).unwrap();
    let mu2 = virtual_moment(&g, 2.0).unwrap();
    let table = expansion_terms(AlphaCase::General, 1).unwrap();
    let assembled = approx_curve(&gi, &table, TOL, 20.0).unwrap();
    let ev = ExponentEvaluator::new(g, gi.gamma_n, EXPONENT_TOL).unwrap();
    let parts = [
        (0, 0, 1.0),
        (0, 2, -1.0 / (2.0 * nf)),
        (1, 1, mu1 / (nf * nf)),
        (2, 0, -(mu1 * mu1 - mu2) / (2.0 * nf.powi(3))),
    ];
    let curves: Vec<_> = parts.iter().map(|&(k, j, _)| curve(&ev, k, j, 20.0)).collect();
    for x in [0.2, 0.7, 1.5, 3.0, 8.0] {
        let want: f64 = parts.iter().zip(&curves).map(|(p, c)| p.2 * c.cdf_at(x).0).sum();
        let got = assembled.cdf_at(x).0;
        assert!((got - want).abs() < 1e-9, "x={x}: {got} {want}");
        let want: f64 = parts.iter().zip(&curves).map(|(p, c)| p.2 * c.pdf_at(x).0).sum();
        assert!((assembled.pdf_at(x).0 - want).abs() < 1e-8);
    }
    // ell = 0 is the base law at gamma_n
    let t0 = expansion_terms(AlphaCase::General, 0).unwrap();
    let a = approx_cdf(&gi, &t0, 1.5, TOL).unwrap();
    assert!((a - curves[0].cdf_at(1.5).0).abs() < 1e-9);
}

#[test]
fn corrections_carry_no_mass() {
    for g in games() {
        let case = if g.alpha == 1.0 { AlphaCase::Alpha1 } else { AlphaCase::General };
        let gi = GameInstance::new(g, 48).unwrap();
        for ell in 0..=2 {
            let table = expansion_terms(case, ell).unwrap();
            let c = approx_curve(&gi, &table, TOL, 20.0).unwrap();
            let integral = c.pdf.iter().sum::<f64>() * c.h + c.beyond_cap;
            assert!((integral - 1.0).abs() < 1e-6, "alpha={} ell={ell}: {integral}", g.alpha);
            assert_eq!(c.total_mass, 1.0);
        }
    }
}

#[test]
fn density_matches_differences_of_cdf() {
    for g in games() {
        let case = if g.alpha == 1.0 { AlphaCase::Alpha1 } else { AlphaCase::General };
        let gi = GameInstance::new(g, 40).unwrap();
        let table = expansion_terms(case, 1).unwrap();
        let h = 1e-3;
        for x in [-1.0, 0.3, 1.0, 2.5, 6.0] {
            let d = approx_density(&gi, &table, x, TOL).unwrap();
            let fd = (approx_cdf(&gi, &table, x + h, TOL).unwrap() - approx_cdf(&gi, &table, x - h, TOL).unwrap()) / (2.0 * h);
            assert!((d - fd).abs() < 1e-6, "alpha={} x={x}: {d} {fd}", g.alpha);
        }
    }
}

#[test]
fn alpha_one_density_is_stable_along_powers() {
    let g = GameParams::new(1.0, 0.5).unwrap();
    let table = expansion_terms(AlphaCase::Alpha1, 0).unwrap();
    let values: Vec<f64> = (1..=8)
        .map(|k| {
            let gi = GameInstance::new(g, 1u64 << k).unwrap();
            assert_eq!(gi.gamma_n, 1.0);
            approx_density(&gi, &table, 0.0, TOL).unwrap()
        })
        .collect();
    for v in &values {
        assert!((v - values[0]).abs() < 1e-12);
    }
    let off = approx_density(&GameInstance::new(g, 3).unwrap(), &table, 0.0, TOL).unwrap();
    assert!((off - values[0]).abs() > 1e-4);
}

#[test]
fn cutoff_monotonicity() {
    let mut last = f64::INFINITY;
    for tol in [1e-12, 1e-10, 1e-8, 1e-6, 1e-3] {
        let t = choose_cutoff(0.9, 3.5, 0.5, 2, 1, tol);
        assert!(t <= last);
        last = t;
    }
    for (k, j) in [(1, 0), (2, 1), (3, 2)] {
        let a = choose_cutoff(2.0, 2.4, 1.0, k, j, 1e-9);
        let b = choose_cutoff(2.0, 2.4, 1.0, 2 * k, j, 1e-9);
        assert!(b > a, "{k} {j}: {a} {b}");
    }
}

#[test]
fn cutoff_tail_audit() {
    let g = GameParams::new(0.5, 0.5).unwrap();
    let (cl, cu) = decay_constant(&g, 1.0).unwrap();
    let tol = 1e-8;
    let t = choose_cutoff(cl, cu, 0.5, 4, 0, tol);
    let ev = ExponentEvaluator::new(g, 1.0, EXPONENT_TOL).unwrap();
    // composite midpoint rule with many cells; the integrand is positive and slowly varying
    let cells = 200_000;
    let h = t / cells as f64;
    let (mut model, mut actual) = (0.0, 0.0);
    for i in 0..cells {
        let s = t + (i as f64 + 0.5) * h;
        model += s.powi(4) * (-cl * s.sqrt()).exp() * h;
        actual += s.powi(4) * ev.y(s).re.exp() * h;
    }
    assert!(model < tol / 2.0, "{model}");
    assert!(actual <= model * (1.0 + 1e-6));
}
