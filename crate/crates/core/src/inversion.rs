//! Fourier inversion of g^{(k,j)} and of assembled expansions into densities and
//! distribution functions on a uniform x-grid.
//!
//! The exponent is split at a level K0: jumps tau_k <= 1 form y_s, the larger ones
//! y_l(t) = sum_{k>K0} lambda_k (e^{i tau_k t} - 1) form a compound Poisson law that
//! is expanded exactly into atoms (truncated at a position cap). Since
//! y^j e^y = sum_i C(j,i) y_s^i e^{y_s} y_l^{j-i} e^{y_l}, every transform becomes
//! a light-tailed factor times a finite atomic one. The product is inverted with
//! the periodic trapezoid rule, whose only errors are the cutoff in t (bounded
//! through the decay constants) and aliasing (bounded through Chernoff limits of
//! the small-jump part).

use crate::algebra::{ExpansionTermTable, NumericTerm};
use crate::error::{Error, Result};
use crate::fft::real_part_dft;
use crate::game::{GameInstance, Regime};
use crate::semistable::{decay_constant, ExponentEvaluator};
use num_complex::Complex64;
use realfft::RealFftPlanner;
use std::f64::consts::PI;

/// Upper bound on Gamma(s, x) for x > max(s - 1, 0); infinite otherwise.
fn upper_gamma_bound(s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    let lead = ((s - 1.0) * x.ln() - x).exp();
    if s <= 1.0 {
        lead
    } else if x > s - 1.0 {
        lead / (1.0 - (s - 1.0) / x)
    } else {
        f64::INFINITY
    }
}

/// Growth exponent b and constant c with |y(t)| <= c_upper c t^b for t >= 1.
fn growth(c_upper: f64, alpha: f64, r: f64) -> (f64, f64) {
    if alpha == 1.0 {
        // 1 + log_r t <= c t^{1/4}
        let lr = r.ln();
        let u = 4.0 - lr;
        let c = if u > 0.0 { (4.0 / lr) * (-u / 4.0).exp() } else { 1.0 };
        (1.25, c_upper * c.max(1.0))
    } else {
        (alpha, c_upper)
    }
}

/// Bound on int_T^inf t^k (c t^b)^j e^{-c_lower t^alpha} dt for T >= 1 (k may be -1).
fn tail_integral(c_lower: f64, c: f64, b: f64, alpha: f64, k: f64, j: u32, t: f64) -> f64 {
    let s = (k + 1.0 + j as f64 * b) / alpha;
    let pre = c.powi(j as i32) * c_lower.powf(-s) / alpha;
    pre * upper_gamma_bound(s, c_lower * t.powf(alpha))
}

fn solve_cutoff(bound: &dyn Fn(f64) -> f64, target: f64) -> f64 {
    let mut hi = 2.0;
    while bound(hi) >= target {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    if bound(1.0) < target {
        return 1.0;
    }
    let mut lo = 1.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if bound(mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Smallest T >= 1 with int_T^inf t^{max_k} (C_upper t^alpha)^{max_j} e^{-C_lower t^alpha} dt < tol/2.
/// At alpha = 1 the logarithmic growth of y is absorbed into t^{5/4}.
pub fn choose_cutoff(c_lower: f64, c_upper: f64, alpha: f64, max_k: u32, max_j: u32, tol: f64) -> f64 {
    let (b, c) = growth(c_upper, alpha, 2.0);
    solve_cutoff(&|t| tail_integral(c_lower, c, b, alpha, max_k as f64, max_j, t), 0.5 * tol)
}

/// Inversion grid and its certificates.
#[derive(Clone, Debug)]
pub struct QuadratureSpec {
    pub cutoff_t: f64,
    /// Number of frequencies t_n = n 2 pi / period, n = 1..=panel_count.
    pub panel_count: usize,
    pub rule: &'static str,
    pub tol: f64,
    /// Bound on the integrals beyond cutoff_t (distribution function).
    pub tail_certificate: f64,
    pub period: f64,
    pub x_start: f64,
    pub grid_size: usize,
    /// Last level of the small-jump part.
    pub split_level: i64,
    /// Atoms of the large-jump part are kept up to this position.
    pub atom_cap: f64,
    /// Values are trusted on [x_start, usable_max].
    pub usable_max: f64,
    pub chernoff_eps: f64,
    c_lower: f64,
    c_upper: f64,
    lambda_large: f64,
}

/// Atoms of y_l^b e^{y_l} on [0, cap], b = 0..=max_b.
#[derive(Clone, Debug)]
struct LargeJumps {
    unit: f64,
    lattice: bool,
    /// positions in units of `unit` (lattice) or absolute (otherwise), per b
    pos: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    /// bound on the total variation beyond the cap, per b
    dropped: Vec<f64>,
    /// total variation of atoms discarded inside the cap (non-lattice pruning), per b
    pruned: Vec<f64>,
}

const ATOM_FLOOR: f64 = 1e-22;

/// Poisson(lam) weights for counts 0..=max_count, stopping once past the mode they
/// fall below 1e-30 (the remainder is then far below any tolerance in use).
fn poisson_weights(lam: f64, max_count: usize) -> Vec<f64> {
    let mut w = vec![(-lam).exp()];
    for m in 1..=max_count {
        let v = w[m - 1] * lam / m as f64;
        if m as f64 > lam && v < 1e-30 {
            break;
        }
        w.push(v);
    }
    w
}

impl LargeJumps {
    fn build(ev: &ExponentEvaluator, k0: i64, cap: f64, max_b: u32) -> Self {
        let mut levels: Vec<(f64, f64)> = Vec::new();
        let mut k = k0 + 1;
        let mut lam_total = 0.0;
        loop {
            let tau = ev.tau(k).to_f64();
            let lam = ev.lambda(k);
            if tau > cap {
                // this and all later levels only contribute their zero count
                lam_total += lam / (1.0 - ev.gp.q);
                break;
            }
            lam_total += lam;
            levels.push((tau, lam));
            k += 1;
        }
        let unit = ev.tau(k0 + 1).to_f64();
        let beyond = lam_total - levels.iter().map(|l| l.1).sum::<f64>();
        let tv_full = |b: usize| (2.0 * lam_total).powi(b as i32);
        if let Some(base) = ev.gp.lattice_span {
            let mcap = (cap / unit + 1e-9).floor() as usize;
            let base = base as usize;
            let mut dense = vec![0.0; mcap + 1];
            dense[0] = (-beyond).exp();
            let mut step = 1usize;
            for &(_, lam) in &levels {
                let pw = poisson_weights(lam, mcap / step);
                let mut next = vec![0.0; mcap + 1];
                for (i, &v) in dense.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    for (m, &p) in pw.iter().enumerate() {
                        let j = i + m * step;
                        if j > mcap {
                            break;
                        }
                        next[j] += v * p;
                    }
                }
                dense = next;
                step = step.saturating_mul(base);
            }
            let mut weights = vec![dense];
            let mut dropped = vec![(1.0 - weights[0].iter().sum::<f64>()).max(0.0)];
            for b in 1..=max_b as usize {
                let prev = &weights[b - 1];
                let mut next: Vec<f64> = prev.iter().map(|v| -lam_total * v).collect();
                let mut step = 1usize;
                for &(_, lam) in &levels {
                    for i in 0..=mcap {
                        if i + step > mcap {
                            break;
                        }
                        next[i + step] += lam * prev[i];
                    }
                    step = step.saturating_mul(base);
                }
                let tv: f64 = next.iter().map(|v| v.abs()).sum();
                dropped.push((tv_full(b) - tv).max(0.0));
                weights.push(next);
            }
            let grid: Vec<f64> = (0..=mcap).map(|m| m as f64).collect();
            let nb = weights.len();
            LargeJumps { unit, lattice: true, pos: vec![grid; nb], weights, dropped, pruned: vec![0.0; nb] }
        } else {
            let mut atoms: Vec<(f64, f64)> = vec![(0.0, (-beyond).exp())];
            let mut lost0 = 0.0;
            for &(tau, lam) in &levels {
                let pw = poisson_weights(lam, (cap / tau) as usize);
                let mut next = Vec::new();
                for &(x, v) in &atoms {
                    for (m, &p) in pw.iter().enumerate() {
                        let y = x + m as f64 * tau;
                        if y > cap {
                            break;
                        }
                        next.push((y, v * p));
                    }
                }
                let (kept, lost) = prune(merge_atoms(next));
                lost0 += lost;
                atoms = kept;
            }
            let mut sets = vec![atoms];
            let mut dropped = vec![(1.0 - sets[0].iter().map(|a| a.1).sum::<f64>() - lost0).max(0.0)];
            let mut pruned = vec![lost0];
            for b in 1..=max_b as usize {
                let prev = &sets[b - 1];
                let mut next: Vec<(f64, f64)> = prev.iter().map(|&(x, v)| (x, -lam_total * v)).collect();
                for &(tau, lam) in &levels {
                    for &(x, v) in prev {
                        if x + tau <= cap {
                            next.push((x + tau, lam * v));
                        }
                    }
                }
                let (kept, lost) = prune(merge_atoms(next));
                let tv: f64 = kept.iter().map(|a| a.1.abs()).sum();
                // pruning in earlier stages propagates with factor at most 2 Lambda per stage
                pruned.push(lost + 2.0 * lam_total * pruned[b - 1]);
                dropped.push((tv_full(b) - tv).max(0.0));
                sets.push(kept);
            }
            let pos = sets.iter().map(|s| s.iter().map(|a| a.0).collect()).collect();
            let weights = sets.iter().map(|s| s.iter().map(|a| a.1).collect()).collect();
            LargeJumps { unit, lattice: false, pos, weights, dropped, pruned }
        }
    }

    /// A_b(t_n) for n = 0..=count with t_n = n * 2 pi / period.
    fn transforms(&self, b: usize, period: f64, count: usize) -> Vec<Complex64> {
        let w = &self.weights[b];
        if self.lattice {
            let j = (period / self.unit).round() as usize;
            let mut buf = vec![0.0; j];
            for (i, &v) in w.iter().enumerate() {
                buf[i % j] += v;
            }
            let mut planner = RealFftPlanner::<f64>::new();
            let fwd = planner.plan_fft_forward(j);
            let mut sp = fwd.make_output_vec();
            fwd.process(&mut buf, &mut sp).expect("fft length");
            (0..=count)
                .map(|n| {
                    // A = sum w_l e^{+2 pi i n l / J} = conj(X_{n mod J})
                    let m = n % j;
                    if m < sp.len() {
                        sp[m].conj()
                    } else {
                        sp[j - m]
                    }
                })
                .collect()
        } else {
            let h = 2.0 * PI / period;
            let pos = &self.pos[b];
            (0..=count)
                .map(|n| {
                    let t = n as f64 * h;
                    pos.iter().zip(w).map(|(&x, &v)| Complex64::from_polar(v, t * x)).sum()
                })
                .collect()
        }
    }
}

fn merge_atoms(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (x, w) in v {
        match out.last_mut() {
            Some(last) if (x - last.0).abs() <= 1e-12 * x.abs().max(1.0) => last.1 += w,
            _ => out.push((x, w)),
        }
    }
    out
}

fn prune(v: Vec<(f64, f64)>) -> (Vec<(f64, f64)>, f64) {
    let mut lost = 0.0;
    let kept = v
        .into_iter()
        .filter(|a| {
            let keep = a.1.abs() > ATOM_FLOOR;
            if !keep {
                lost += a.1.abs();
            }
            keep
        })
        .collect();
    (kept, lost)
}

/// Small-jump part: evaluator restricted to k <= k0 and the drift moved over from
/// the compensated large jumps.
struct SmallPart {
    ev: ExponentEvaluator,
    drift: f64,
}

impl SmallPart {
    fn new(ev: &ExponentEvaluator, k0: i64) -> Self {
        let drift = if ev.gp.regime() == Regime::Above1 {
            // sum_{k>k0} lambda_k tau_k, geometric with ratio r^{1/alpha - 1}
            let rho = ev.gp.r.powf(1.0 / ev.gp.alpha - 1.0);
            ev.lambda(k0 + 1) * ev.tau(k0 + 1).to_f64() / (1.0 - rho)
        } else {
            0.0
        };
        SmallPart { ev: ev.with_cut(k0), drift }
    }

    /// log E e^{theta S_s} for real theta.
    fn cumulant(&self, theta: f64) -> f64 {
        let ev = &self.ev;
        let k0 = ev.cut.unwrap();
        let regime = ev.gp.regime();
        let mut acc = -theta * self.drift + theta * ev.drift();
        let mut k = k0;
        loop {
            let u = theta * ev.tau(k).to_f64();
            let comp = match regime {
                Regime::Below1 => false,
                Regime::One => k <= 0,
                Regime::Above1 => true,
            };
            let term = if comp {
                if u.abs() < 1e-3 {
                    u * u * (0.5 + u / 6.0 + u * u / 24.0)
                } else {
                    u.exp_m1() - u
                }
            } else {
                u.exp_m1()
            } * ev.lambda(k);
            acc += term;
            if (term.abs() < 1e-18 * acc.abs().max(1e-300) && k < k0 - 5) || k < k0 - 4000 {
                break;
            }
            k -= 1;
        }
        acc
    }

    /// Points x_lo, x_hi with P{S_s < x_lo}, P{S_s > x_hi} <= eps.
    fn chernoff_limits(&self, eps: f64) -> (f64, f64) {
        let le = eps.ln();
        let tmax = 700.0 / self.ev.tau(self.ev.cut.unwrap()).to_f64();
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..400 {
            let th = 1e-3 * (tmax / 1e-3).powf(i as f64 / 399.0);
            let kp = self.cumulant(th);
            let km = self.cumulant(-th);
            if kp.is_finite() {
                hi = hi.min((kp - le) / th);
            }
            if km.is_finite() {
                lo = lo.max((le - km) / th);
            }
        }
        if self.ev.gp.regime() == Regime::Below1 {
            // only positive jumps and no drift
            lo = lo.max(0.0);
        }
        (lo, hi)
    }
}

fn split_level(ev: &ExponentEvaluator) -> i64 {
    // largest k with tau_k <= 1, and at least 0 at alpha = 1 so compensated levels stay small
    let mut k = 0i64;
    while ev.tau(k + 1).to_f64() <= 1.0 {
        k += 1;
    }
    while ev.tau(k).to_f64() > 1.0 {
        k -= 1;
    }
    if ev.gp.regime() == Regime::One {
        k = k.max(0);
    }
    k
}

impl QuadratureSpec {
    /// Plan the grid for transforms with deriv <= max_k and ypow <= max_j, values up to x_max.
    pub fn plan(ev: &ExponentEvaluator, max_k: u32, max_j: u32, tol: f64, x_max: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Quadrature("tol must be positive".into()));
        }
        let (c_lower, c_upper) = decay_constant(&ev.gp, ev.gamma)?;
        let (c_lower, c_upper) = (c_lower * ev.intensity, c_upper * ev.intensity);
        let k0 = split_level(ev);
        let small = SmallPart::new(ev, k0);
        let lambda_large = ev.lambda(k0 + 1) / (1.0 - ev.gp.q);
        let eps = 1e-3 * tol;
        let (xl, xr) = small.chernoff_limits(eps);
        if !xl.is_finite() || !xr.is_finite() {
            return Err(Error::Quadrature("no Chernoff limits for the small-jump part".into()));
        }
        let x_start = xl - 0.5;
        let atom_cap = x_max.max(1.0) - xl + 1.0;
        let usable_max = atom_cap + xl;
        let mut period = atom_cap + xr + 1.0 - x_start;
        if ev.gp.lattice_span.is_some() {
            let u = ev.tau(k0 + 1).to_f64();
            period = (period / u).ceil() * u;
        }
        // |e^{y_s}| <= e^{2 Lambda} |e^y| and the atom factors add at most 4 Lambda to |y|
        let pre = (2.0 * lambda_large).exp();
        let (b, c) = growth(c_upper, ev.gp.alpha, ev.gp.r);
        let c = c + 4.0 * lambda_large;
        let cut_for = |k: f64, target: f64| solve_cutoff(&|t| pre * tail_integral(c_lower, c, b, ev.gp.alpha, k, max_j, t) / PI, target);
        // density derivative needs one more power of t
        let t_cut = cut_for(max_k as f64 + 1.0, 0.25 * tol).max(cut_for(max_k as f64, 0.25 * tol));
        if !t_cut.is_finite() {
            return Err(Error::Quadrature("cutoff search diverged".into()));
        }
        let h_t = 2.0 * PI / period;
        let count = (t_cut / h_t).ceil() as usize;
        let grid_size = (8 * (count + 1)).max(4096).next_power_of_two();
        if grid_size > (1 << 25) {
            return Err(Error::Quadrature(format!("grid of {grid_size} points is too large; lower x_max or raise tol")));
        }
        let t_eff = count as f64 * h_t;
        let tail_certificate = pre * tail_integral(c_lower, c, b, ev.gp.alpha, max_k as f64 - 1.0, max_j, (t_eff - h_t).max(1.0)) / PI;
        Ok(QuadratureSpec {
            cutoff_t: t_eff,
            panel_count: count,
            rule: "periodic trapezoid over the small/large jump split",
            tol,
            tail_certificate,
            period,
            x_start,
            grid_size,
            split_level: k0,
            atom_cap,
            usable_max,
            chernoff_eps: eps,
            c_lower,
            c_upper,
            lambda_large,
        })
    }
}

/// Distribution function, density and density derivative of a sum of
/// factor * G^{(k,j)} on a grid, with cubic Hermite evaluation in between.
#[derive(Clone, Debug)]
pub struct CurveApprox {
    pub terms: Vec<NumericTerm<f64>>,
    pub spec: QuadratureSpec,
    pub gamma: f64,
    pub h: f64,
    pub cdf: Vec<f64>,
    pub pdf: Vec<f64>,
    pub dpdf: Vec<f64>,
    /// Limit of the distribution function at +infinity (factor of the (0,0) term).
    pub total_mass: f64,
    /// Signed mass held by the grid, i.e. the transform at t = 0 of the capped measure.
    pub grid_mass: f64,
    /// Signed mass of the large-jump atoms beyond the cap (deriv = 0 terms only carry mass).
    pub beyond_cap: f64,
    /// Total variation of the large-jump atoms beyond the cap, weighted by the term factors.
    pub beyond_cap_variation: f64,
    pub cdf_error: f64,
    pub pdf_error: f64,
    /// |Im| of the transform at t = 0, which must vanish by conjugate symmetry.
    pub imag_residual: f64,
}

/// Binomial coefficient as f64.
fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn max_fourth_difference(v: &[f64], lo: usize, hi: usize) -> f64 {
    let mut m = 0.0f64;
    for i in lo.max(2)..hi.min(v.len().saturating_sub(2)) {
        let d = v[i - 2] - 4.0 * v[i - 1] + 6.0 * v[i] - 4.0 * v[i + 1] + v[i + 2];
        m = m.max(d.abs());
    }
    m
}

impl CurveApprox {
    pub fn build(ev: &ExponentEvaluator, terms: &[NumericTerm<f64>], spec: &QuadratureSpec) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Domain("no terms".into()));
        }
        let max_j = terms.iter().map(|t| t.ypow).max().unwrap();
        let k0 = spec.split_level;
        let small = SmallPart::new(ev, k0);
        let large = LargeJumps::build(ev, k0, spec.atom_cap, max_j);
        let count = spec.panel_count;
        let a: Vec<Vec<Complex64>> = (0..=max_j as usize).map(|b| large.transforms(b, spec.period, count)).collect();
        let h_t = 2.0 * PI / spec.period;
        let l = spec.period;
        let m = spec.grid_size;
        let x0 = spec.x_start;
        let mut cd = vec![Complex64::new(0.0, 0.0); count + 1];
        let mut pd = vec![Complex64::new(0.0, 0.0); count + 1];
        let mut dd = vec![Complex64::new(0.0, 0.0); count + 1];
        let mut phi0 = Complex64::new(0.0, 0.0);
        let mut bsum = 0.0;
        // first-order effect of the error in y_s on the sums
        let (mut ev_pdf, mut ev_cdf) = (0.0, 0.0);
        for n in 0..=count {
            let t = n as f64 * h_t;
            let (ys0, ybound) = small.ev.y_with_bound(t);
            let ys = ys0 - Complex64::new(0.0, t * small.drift);
            let dy = ybound + 4e-16 * (1.0 + ys.norm() + t * small.drift.abs());
            let eys = ys.exp();
            let mut ypow = vec![Complex64::new(1.0, 0.0); max_j as usize + 1];
            for i in 1..=max_j as usize {
                ypow[i] = ypow[i - 1] * ys;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            let mut sens = 0.0;
            for term in terms {
                let j = term.ypow;
                let mut s = Complex64::new(0.0, 0.0);
                let mut ds = 0.0;
                for i in 0..=j {
                    let c = binom(j, i) * a[(j - i) as usize][n];
                    s += ypow[i as usize] * c;
                    let dpow = if i == 0 { 0.0 } else { i as f64 * ypow[i as usize - 1].norm() };
                    ds += (dpow + ypow[i as usize].norm()) * c.norm();
                }
                let tk = t.powi(term.deriv as i32);
                acc += s * eys * Complex64::new(0.0, -t).powu(term.deriv) * term.factor;
                sens += ds * eys.norm() * tk * term.factor.abs();
            }
            if n == 0 {
                phi0 = acc;
                continue;
            }
            let c = acc * Complex64::from_polar(1.0, -t * x0);
            pd[n] = c * (2.0 / l);
            dd[n] = c * Complex64::new(0.0, -t) * (2.0 / l);
            let b = c * Complex64::new(0.0, 1.0 / (PI * n as f64));
            bsum += b.re;
            cd[n] = b;
            ev_pdf += sens * dy * 2.0 / l;
            ev_cdf += 2.0 * sens * dy / (PI * n as f64);
        }
        let grid_mass = phi0.re;
        pd[0] = Complex64::new(grid_mass / l, 0.0);
        let pdf = real_part_dft(&pd, m);
        let dpdf = real_part_dft(&dd, m);
        let mut cdf = real_part_dft(&cd, m);
        for (i, v) in cdf.iter_mut().enumerate() {
            *v += grid_mass * i as f64 / m as f64 - bsum;
        }
        let h = l / m as f64;
        let pre = (2.0 * spec.lambda_large).exp();
        let (b, c) = growth(spec.c_upper, ev.gp.alpha, ev.gp.r);
        let c = c + 4.0 * spec.lambda_large;
        let t0 = (spec.cutoff_t - h_t).max(1.0);
        let mut trunc_cdf = 0.0;
        let mut trunc_pdf = 0.0;
        let mut alias = 0.0;
        let mut pruned = 0.0;
        let mut beyond_cap = 0.0;
        let mut beyond_cap_variation = 0.0;
        let mut total_mass = 0.0;
        for term in terms {
            let k = term.deriv as f64;
            let f = term.factor.abs();
            trunc_cdf += f * pre * tail_integral(spec.c_lower, c, b, ev.gp.alpha, k - 1.0, term.ypow, t0) / PI;
            trunc_pdf += f * pre * tail_integral(spec.c_lower, c, b, ev.gp.alpha, k, term.ypow, t0) / PI;
            // the small-jump law puts at most eps outside [x_L, x_R] on each side
            alias += 2.0 * spec.chernoff_eps * f * (1.0 + 4.0 * spec.lambda_large).powi(term.ypow as i32);
            pruned += f * (0..=term.ypow).map(|i| binom(term.ypow, i) * large.pruned[(term.ypow - i) as usize]).sum::<f64>();
            beyond_cap_variation += f * (0..=term.ypow).map(|i| binom(term.ypow, i) * large.dropped[(term.ypow - i) as usize]).sum::<f64>();
            if term.deriv == 0 {
                let full = if term.ypow == 0 { 1.0 } else { 0.0 };
                beyond_cap += term.factor * (full - large.weights[term.ypow as usize].iter().sum::<f64>());
                if term.ypow == 0 {
                    total_mass += term.factor;
                }
            }
        }
        let hi_idx = (((spec.usable_max - x0) / h) as usize).min(m - 1);
        let interp_cdf = max_fourth_difference(&cdf, 0, hi_idx) / 384.0;
        let interp_pdf = max_fourth_difference(&pdf, 0, hi_idx) / 384.0;
        let cdf_error = trunc_cdf + interp_cdf + alias + pruned + ev_cdf + 1e-14;
        let pdf_error = trunc_pdf + interp_pdf + alias + pruned + ev_pdf + 1e-14;
        Ok(CurveApprox {
            terms: terms.to_vec(),
            spec: spec.clone(),
            gamma: ev.gamma,
            h,
            cdf,
            pdf,
            dpdf,
            total_mass,
            grid_mass,
            beyond_cap,
            beyond_cap_variation,
            cdf_error,
            pdf_error,
            imag_residual: phi0.im.abs(),
        })
    }

    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let u = (x - self.spec.x_start) / self.h;
        if u < 0.0 || x > self.spec.usable_max {
            return None;
        }
        let i = (u.floor() as usize).min(self.cdf.len() - 2);
        Some((i, u - i as f64))
    }

    fn hermite(v: &[f64], d: &[f64], h: f64, i: usize, s: f64) -> f64 {
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * v[i] + h10 * h * d[i] + h01 * v[i + 1] + h11 * h * d[i + 1]
    }

    /// Value and error bound of the distribution function.
    pub fn cdf_at(&self, x: f64) -> (f64, f64) {
        match self.locate(x) {
            Some((i, s)) => (Self::hermite(&self.cdf, &self.pdf, self.h, i, s), self.cdf_error),
            None if x < self.spec.x_start => (0.0, self.cdf_error),
            None => (self.total_mass, f64::INFINITY),
        }
    }

    /// Value and error bound of the density.
    pub fn pdf_at(&self, x: f64) -> (f64, f64) {
        match self.locate(x) {
            Some((i, s)) => (Self::hermite(&self.pdf, &self.dpdf, self.h, i, s), self.pdf_error),
            None if x < self.spec.x_start => (0.0, self.pdf_error),
            None => (0.0, f64::INFINITY),
        }
    }

    /// Minimum and maximum of the interpolated distribution function over [a, b]
    /// (exact for the piecewise cubic; 0 left of the grid).
    pub fn cdf_extrema(&self, a: f64, b: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut take = |v: f64| {
            lo = lo.min(v);
            hi = hi.max(v);
        };
        let x0 = self.spec.x_start;
        if a < x0 {
            take(0.0);
        }
        let a = a.max(x0);
        if b < a {
            return (lo, hi);
        }
        let last = self.cdf.len() - 2;
        let ia = (((a - x0) / self.h).floor() as usize).min(last);
        let ib = (((b - x0) / self.h).floor() as usize).min(last);
        for i in ia..=ib {
            let sa = if i == ia { (a - x0) / self.h - i as f64 } else { 0.0 };
            let sb = if i == ib { ((b - x0) / self.h - i as f64).min(1.0) } else { 1.0 };
            take(Self::hermite(&self.cdf, &self.pdf, self.h, i, sa));
            take(Self::hermite(&self.cdf, &self.pdf, self.h, i, sb));
            // stationary points of the cubic piece
            let (v0, v1) = (self.cdf[i], self.cdf[i + 1]);
            let (d0, d1) = (self.h * self.pdf[i], self.h * self.pdf[i + 1]);
            let qa = 6.0 * v0 + 3.0 * d0 - 6.0 * v1 + 3.0 * d1;
            let qb = -6.0 * v0 - 4.0 * d0 + 6.0 * v1 - 2.0 * d1;
            let qc = d0;
            let mut roots = [f64::NAN; 2];
            if qa.abs() < 1e-300 {
                if qb != 0.0 {
                    roots[0] = -qc / qb;
                }
            } else {
                let disc = qb * qb - 4.0 * qa * qc;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    let r = -0.5 * (qb + qb.signum() * sq);
                    roots[0] = r / qa;
                    if r != 0.0 {
                        roots[1] = qc / r;
                    }
                }
            }
            for s in roots {
                if s > sa && s < sb {
                    take(Self::hermite(&self.cdf, &self.pdf, self.h, i, s));
                }
            }
        }
        (lo, hi)
    }

    /// Grid nodes inside the trusted range.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let hi = ((self.spec.usable_max - self.spec.x_start) / self.h) as usize;
        (0..=hi.min(self.cdf.len() - 1)).map(move |i| (self.spec.x_start + i as f64 * self.h, self.cdf[i], self.pdf[i]))
    }

    /// Largest |density| over the trusted range.
    pub fn max_abs_pdf(&self) -> f64 {
        self.nodes().map(|(_, _, p)| p.abs()).fold(0.0, f64::max)
    }
}

fn single(k: u32, j: u32) -> [NumericTerm<f64>; 1] {
    [NumericTerm { deriv: k, ypow: j, factor: 1.0 }]
}

/// Density of G^{(k,j)} at x.
pub fn density_of_term(ev: &ExponentEvaluator, k: u32, j: u32, x: f64, qs: &QuadratureSpec) -> Result<f64> {
    let c = CurveApprox::build(ev, &single(k, j), qs)?;
    checked(c.pdf_at(x), qs)
}

/// G^{(k,j)}(x), normalized to vanish at -infinity.
pub fn cdf_of_term(ev: &ExponentEvaluator, k: u32, j: u32, x: f64, qs: &QuadratureSpec) -> Result<f64> {
    let c = CurveApprox::build(ev, &single(k, j), qs)?;
    checked(c.cdf_at(x), qs)
}

fn checked((v, e): (f64, f64), qs: &QuadratureSpec) -> Result<f64> {
    if e.is_finite() {
        Ok(v)
    } else {
        Err(Error::Quadrature(format!("x beyond the planned range {}", qs.usable_max)))
    }
}

/// Curve of an assembled expansion for a game instance, at gamma = gamma_n,
/// trusted on x <= x_max.
pub fn approx_curve(gi: &GameInstance<f64>, table: &ExpansionTermTable, tol: f64, x_max: f64) -> Result<CurveApprox> {
    let terms = table.assemble(gi)?;
    let ev = ExponentEvaluator::new(gi.params, gi.gamma_n, EXPONENT_TOL)?;
    let qs = QuadratureSpec::plan(&ev, table.max_deriv(), table.max_ypow(), tol, x_max)?;
    CurveApprox::build(&ev, &terms, &qs)
}

/// Accuracy requested from the exponent series inside the inversion.
pub const EXPONENT_TOL: f64 = 1e-13;

/// G_{n,l}(x) for an expansion table.
pub fn approx_cdf(gi: &GameInstance<f64>, table: &ExpansionTermTable, x: f64, tol: f64) -> Result<f64> {
    let c = approx_curve(gi, table, tol, x.max(1.0) + 1.0)?;
    checked(c.cdf_at(x), &c.spec)
}

/// G_{n,l}'(x) for an expansion table.
pub fn approx_density(gi: &GameInstance<f64>, table: &ExpansionTermTable, x: f64, tol: f64) -> Result<f64> {
    let c = approx_curve(gi, table, tol, x.max(1.0) + 1.0)?;
    checked(c.pdf_at(x), &c.spec)
}
