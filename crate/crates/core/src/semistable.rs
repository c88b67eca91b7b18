//! The exponent y of the semistable law G_{alpha,p,gamma}, its derivative, the
//! transforms g^{(k,j)} and the remainder series R_{n,1,k}.
//!
//! With tau_k = r^{k/alpha} / gamma^{1/alpha} and lambda_k = p gamma / (q r^k):
//!   alpha < 1: y(t) = sum_k (e^{i tau_k t} - 1) lambda_k
//!   alpha = 1: y(t) = i t p r log_r(1/gamma) + sum_{k<=0} (e^{iu} - 1 - iu) lambda_k
//!                     + sum_{k>=1} (e^{iu} - 1) lambda_k
//!   alpha > 1: y(t) = sum_k (e^{i tau_k t} - 1 - i tau_k t) lambda_k

use crate::dd::{cis_m1, cis_m1_mi, Dd};
use crate::error::{Error, Result};
use crate::game::{virtual_moment, GameParams, Regime};
use num_complex::Complex64;

const CACHE_LO: i64 = -400;
const CACHE_HI: i64 = 400;

#[derive(Clone, Debug)]
pub struct ExponentEvaluator {
    pub gp: GameParams<f64>,
    pub gamma: f64,
    pub tol: f64,
    /// Largest index kept; set when the large jumps are handled elsewhere.
    pub cut: Option<i64>,
    /// Factor u in e^{u y}; 1 for the semistable exponent itself.
    pub intensity: f64,
    regime: Regime,
    log_tau0: Dd,
    log_step: Dd,
    lam0: f64,
    drift: f64,
    tau_cache: Vec<Dd>,
}

impl ExponentEvaluator {
    pub fn new(gp: GameParams<f64>, gamma: f64, tol: f64) -> Result<Self> {
        if !(gamma > gp.q && gamma <= 1.0) {
            return Err(Error::ParameterDomain(format!("gamma = {gamma} not in (q, 1]")));
        }
        if !(tol > 0.0) {
            return Err(Error::ParameterDomain("tol must be positive".into()));
        }
        let ln_r = gp.ln_r_dd();
        let ln_g = Dd::new(gamma).ln();
        let log_tau0 = (-ln_g).div_f64(gp.alpha);
        let log_step = ln_r.div_f64(gp.alpha);
        let drift = if gp.regime() == Regime::One { gp.p * gp.r * (-ln_g).div(ln_r).to_f64() } else { 0.0 };
        let mut ev = ExponentEvaluator {
            gp,
            gamma,
            tol,
            cut: None,
            intensity: 1.0,
            regime: gp.regime(),
            log_tau0,
            log_step,
            lam0: gp.p * gamma / gp.q,
            drift,
            tau_cache: Vec::new(),
        };
        ev.tau_cache = (CACHE_LO..=CACHE_HI).map(|k| ev.tau_direct(k)).collect();
        Ok(ev)
    }

    /// Same exponent restricted to k <= cut.
    pub fn with_cut(&self, cut: i64) -> Self {
        let mut ev = self.clone();
        ev.cut = Some(cut);
        ev
    }

    /// Exponent u * y, i.e. the Levy measure scaled by u > 0.
    pub fn scaled(&self, u: f64) -> Self {
        let mut ev = self.clone();
        ev.lam0 *= u;
        ev.drift *= u;
        ev.intensity *= u;
        ev
    }

    fn tau_direct(&self, k: i64) -> Dd {
        let e = self.log_tau0 + self.log_step.mul_f64(k as f64);
        if e.hi > 709.0 {
            Dd::new(f64::INFINITY)
        } else {
            e.exp()
        }
    }

    /// tau_k in double-double.
    pub fn tau(&self, k: i64) -> Dd {
        if (CACHE_LO..=CACHE_HI).contains(&k) {
            self.tau_cache[(k - CACHE_LO) as usize]
        } else {
            self.tau_direct(k)
        }
    }

    pub fn lambda(&self, k: i64) -> f64 {
        self.lam0 * self.gp.q.powi(k as i32)
    }

    /// Drift of the alpha = 1 exponent, p r log_r(1/gamma).
    pub fn drift(&self) -> f64 {
        self.drift
    }

    fn compensated(&self, k: i64) -> bool {
        match self.regime {
            Regime::Below1 => false,
            Regime::One => k <= 0,
            Regime::Above1 => true,
        }
    }

    /// Index window [kmin, kmax] for |t| and the bound on the dropped terms.
    /// Each tail gets budget tol/4 times `scale`.
    fn window(&self, at: f64, scale: f64, deriv: bool) -> (i64, i64, f64) {
        let budget = 0.25 * self.tol * scale;
        let q = self.gp.q;
        let a = self.gp.alpha;
        let rho = self.gp.r.powf(1.0 / a - 1.0); // ratio of tau_k lambda_k
        let sigma = self.gp.r.powf(2.0 / a - 1.0); // ratio of tau_k^2 lambda_k
        let tl = |k: i64| self.tau(k).to_f64() * self.lambda(k);
        let t2l = |k: i64| {
            let tt = self.tau(k).to_f64();
            tt * tt * self.lambda(k)
        };
        // upper tail
        let upper_sum = |kmax: i64| -> f64 {
            if deriv {
                // |e^{iu}-1| tau lambda <= 2 tau lambda
                2.0 * tl(kmax + 1) / (1.0 - rho)
            } else if self.compensated(kmax + 1) {
                2.0 * at * tl(kmax + 1) / (1.0 - rho)
            } else {
                2.0 * self.lambda(kmax + 1) / (1.0 - q)
            }
        };
        let lower_sum = |kmin: i64| -> f64 {
            if deriv {
                at * t2l(kmin - 1) / (1.0 - 1.0 / sigma)
            } else if self.compensated(kmin - 1) {
                0.5 * at * at * t2l(kmin - 1) / (1.0 - 1.0 / sigma)
            } else {
                at * tl(kmin - 1) / (1.0 - 1.0 / rho)
            }
        };
        let (mut kmax, upper) = match self.cut {
            Some(c) => (c, 0.0),
            None => {
                let mut k = 0i64;
                if self.regime == Regime::One {
                    k = k.max(0);
                }
                while upper_sum(k) > budget {
                    k += 1;
                }
                while upper_sum(k - 1) <= budget && (self.regime != Regime::One || k > 0) && k > -2000 {
                    k -= 1;
                }
                (k, upper_sum(k))
            }
        };
        let start = if self.regime == Regime::One { kmax.min(1) } else { kmax };
        let mut kmin = start;
        let mut lower = lower_sum(kmin);
        if at == 0.0 {
            return (kmin, kmin - 1, 0.0);
        }
        // walk downwards until the dropped part fits, stepping fast when far away
        while lower > budget {
            let step = if lower > 1e3 * budget { 8 } else { 1 };
            kmin -= step;
            lower = lower_sum(kmin);
        }
        while kmin < start && lower_sum(kmin + 1) <= budget {
            kmin += 1;
            lower = lower_sum(kmin);
        }
        if kmax < kmin - 1 {
            kmax = kmin - 1;
        }
        (kmin, kmax, upper + lower)
    }

    /// y(t) and a bound on the truncation error.
    pub fn y_with_bound(&self, t: f64) -> (Complex64, f64) {
        if t == 0.0 {
            return (Complex64::new(0.0, 0.0), 0.0);
        }
        let (kmin, kmax, bound) = self.window(t.abs(), 1.0, false);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in kmin..=kmax {
            let u = self.tau(k).mul_f64(t);
            let term = if self.compensated(k) { cis_m1_mi(u) } else { cis_m1(u) };
            acc += term * self.lambda(k);
        }
        if self.regime == Regime::One {
            acc += Complex64::new(0.0, t * self.drift);
        }
        (acc, bound)
    }

    pub fn y(&self, t: f64) -> Complex64 {
        self.y_with_bound(t).0
    }

    /// dy/dt, only for alpha in (1,2).
    pub fn dy_with_bound(&self, t: f64) -> Result<(Complex64, f64)> {
        if self.regime != Regime::Above1 {
            return Err(Error::UnsupportedRegime("the derivative series is used for alpha in (1,2) only".into()));
        }
        if t == 0.0 {
            return Ok((Complex64::new(0.0, 0.0), 0.0));
        }
        let (kmin, kmax, bound) = self.window(t.abs(), 1.0, true);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in kmin..=kmax {
            let tau = self.tau(k);
            let c = cis_m1(tau.mul_f64(t));
            acc += c * Complex64::new(0.0, tau.to_f64() * self.lambda(k));
        }
        Ok((acc, bound))
    }

    pub fn dy(&self, t: f64) -> Result<Complex64> {
        Ok(self.dy_with_bound(t)?.0)
    }

    /// g^{(k,j)}(t) = (-it)^k y(t)^j e^{y(t)}.
    pub fn g_kj(&self, k: u32, j: u32, t: f64) -> Complex64 {
        let y = self.y(t);
        g_from_y(k, j, t, y)
    }
}

pub fn g_from_y(k: u32, j: u32, t: f64, y: Complex64) -> Complex64 {
    Complex64::new(0.0, -t).powu(k) * y.powu(j) * y.exp()
}

/// g^{(k,j)}(t) for a given evaluator.
pub fn transform_g_kj(ev: &ExponentEvaluator, k: u32, j: u32, t: f64) -> Complex64 {
    ev.g_kj(k, j, t)
}

impl ExponentEvaluator {
    /// Bound on |Re y(t) - Re y(s)| (or |y(t) - y(s)| when `full`) for |t - s| <= delta
    /// and |t|, |s| <= tmax. Uses the full series regardless of `cut`.
    pub fn variation(&self, delta: f64, tmax: f64, full: bool) -> f64 {
        let term = |k: i64| -> f64 {
            let tau = self.tau(k).to_f64();
            let lam = self.lambda(k);
            if !tau.is_finite() || tau == 0.0 {
                return 0.0;
            }
            let v = if full {
                if self.compensated(k) {
                    delta * tau * (2.0f64).min(tau * tmax)
                } else {
                    (2.0f64).min(tau * delta)
                }
            } else {
                (2.0f64).min(tau * delta).min(tau * tau * delta * tmax)
            };
            v * lam
        };
        let mut acc = 0.0;
        let mut small_run = 0;
        let mut largest = 0.0f64;
        for k in 0..3000 {
            let v = term(k);
            acc += v;
            largest = largest.max(v);
            small_run = if v < 1e-20 * largest.max(1e-300) { small_run + 1 } else { 0 };
            if small_run > 8 {
                break;
            }
        }
        small_run = 0;
        for k in (-3000..0).rev() {
            let v = term(k);
            acc += v;
            largest = largest.max(v);
            small_run = if v < 1e-20 * largest.max(1e-300) { small_run + 1 } else { 0 };
            if small_run > 8 {
                break;
            }
        }
        if full && self.regime == Regime::One {
            acc += self.drift.abs() * delta;
        }
        // the geometric tails beyond the stopping points are far below this margin
        acc * (1.0 + 1e-12) + 1e-18
    }
}

#[derive(PartialEq)]
struct Piece {
    lb: f64,
    a: f64,
    b: f64,
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Piece {
    // reversed so that BinaryHeap pops the smallest lower bound
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        o.lb.total_cmp(&self.lb)
    }
}

/// Certified lower bound for the minimum of a function over [a, b] by branch and bound.
/// `eval(a, b)` returns the value at the midpoint and a lower bound over [a, b].
/// Stops once the bound is within `rel_eps` of the best value seen.
fn certified_min(eval: &dyn Fn(f64, f64) -> (f64, f64), a: f64, b: f64, pieces: usize, rel_eps: f64, max_evals: usize) -> f64 {
    let mut heap = std::collections::BinaryHeap::new();
    let mut best = f64::INFINITY;
    let ratio = (b / a).powf(1.0 / pieces as f64);
    let mut lo = a;
    for i in 0..pieces {
        let hi = if i + 1 == pieces { b } else { lo * ratio };
        let (v, lb) = eval(lo, hi);
        best = best.min(v);
        heap.push(Piece { lb, a: lo, b: hi });
        lo = hi;
    }
    let mut evals = pieces;
    while let Some(top) = heap.peek() {
        if top.lb >= best - rel_eps * best.abs() || evals >= max_evals {
            return top.lb;
        }
        let top = heap.pop().unwrap();
        let mid = 0.5 * (top.a + top.b);
        for (x, y) in [(top.a, mid), (mid, top.b)] {
            let (v, lb) = eval(x, y);
            best = best.min(v);
            heap.push(Piece { lb, a: x, b: y });
        }
        evals += 2;
    }
    best
}

/// Constants with Re y(t) <= -C_lower |t|^alpha and |y(t)| <= C_upper |t|^alpha
/// (times 1 + |log_r t| for the upper one when alpha = 1). The lower constant is the
/// certified infimum over one scaling period; the upper one is certified the same way.
pub fn decay_constant(gp: &GameParams<f64>, gamma: f64) -> Result<(f64, f64)> {
    let tol = 1e-13;
    let ev = ExponentEvaluator::new(*gp, gamma, tol)?;
    let a = gp.alpha;
    let period = gp.r.powf(1.0 / a);
    let lower = |x: f64, y: f64| {
        let m = 0.5 * (x + y);
        let (v, e) = ev.y_with_bound(m);
        let num = -v.re;
        let lb = num - e - ev.variation(0.5 * (y - x), y, false);
        let lb = if lb >= 0.0 { lb / y.powf(a) } else { lb / x.powf(a) };
        (num / m.powf(a), lb)
    };
    let c_lower = certified_min(&lower, 1.0, period, 512, 0.02, 400_000) - 10.0 * tol;
    let lr = gp.r.ln();
    let is_one = gp.regime() == Regime::One;
    let weight_min = |x: f64, y: f64| -> f64 {
        if is_one {
            let lx = x.ln() / lr;
            let ly = y.ln() / lr;
            let dist = if lx <= 0.0 && ly >= 0.0 { 0.0 } else { lx.abs().min(ly.abs()) };
            x * (1.0 + dist)
        } else {
            x.powf(a)
        }
    };
    let weight = |t: f64| if is_one { t * (1.0 + (t.ln() / lr).abs()) } else { t.powf(a) };
    let upper = |x: f64, y: f64| {
        let m = 0.5 * (x + y);
        let (v, e) = ev.y_with_bound(m);
        let ub = (v.norm() + e + ev.variation(0.5 * (y - x), y, true)) / weight_min(x, y);
        (-v.norm() / weight(m), -ub)
    };
    let (ua, ub) = if is_one { (1e-2, 1e2) } else { (1.0, period) };
    let c_upper = -certified_min(&upper, ua, ub, 512, 0.02, 400_000) + 10.0 * tol;
    if !(c_lower > 0.0) {
        return Err(Error::Numerical(format!("nonpositive decay constant {c_lower}")));
    }
    Ok((c_lower, c_upper))
}

/// R_{n,1,k}(t) = n sum_{j>=k} mu_j / j! (it/n^{1/alpha})^j with a bound on the dropped tail.
pub fn remainder_r1k(gp: &GameParams<f64>, n: u64, k: u32, t: f64, terms: u32) -> Result<(Complex64, f64)> {
    if k < 2 {
        return Err(Error::Domain("R_{n,1,k} needs k >= 2".into()));
    }
    let nn = n as f64;
    let x = t / nn.powf(1.0 / gp.alpha);
    if x.abs() > 0.9 * gp.r.powf(1.0 / gp.alpha) {
        return Err(Error::Domain(format!("|t|/n^(1/alpha) = {} beyond the convergence guard", x.abs())));
    }
    let z = Complex64::new(0.0, x);
    let mut pw = z.powu(k) / (1..=k).map(|i| i as f64).product::<f64>();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut j = k;
    let mut bound = f64::INFINITY;
    for _ in 0..terms.max(1) {
        let mu = virtual_moment(gp, j as f64)?;
        acc += pw * mu;
        pw = pw * z / (j + 1) as f64;
        j += 1;
        // |mu_i| decreases to p/q once i > alpha
        let m_next = virtual_moment(gp, j as f64)?.abs();
        let ratio = x.abs() / (j + 1) as f64;
        bound = if ratio < 1.0 { nn * m_next * pw.norm() / (1.0 - ratio) } else { f64::INFINITY };
        if bound < 1e-18 * (nn * acc.norm()).max(1e-300) {
            break;
        }
    }
    Ok((acc * nn, bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_symmetry() {
        let gp = GameParams::new(0.5, 0.5).unwrap();
        let ev = ExponentEvaluator::new(gp, 1.0, 1e-12).unwrap();
        assert_eq!(ev.y(0.0), Complex64::new(0.0, 0.0));
        let a = ev.y(1.3);
        let b = ev.y(-1.3);
        assert!((a - b.conj()).norm() < 1e-15);
        assert!(a.re < 0.0);
    }

    #[test]
    fn window_bound_below_tol() {
        for (a, p) in [(0.5, 0.5), (1.0, 0.5), (1.5, 1.0 - 2f64.powf(-1.5)), (1.5, 0.3)] {
            let gp = GameParams::new(a, p).unwrap();
            let ev = ExponentEvaluator::new(gp, 0.8f64.max(gp.q + 0.01), 1e-12).unwrap();
            for t in [1e-4, 0.1, 1.0, 7.0, 300.0] {
                let (_, b) = ev.y_with_bound(t);
                assert!(b <= 0.5e-12, "alpha={a} t={t} bound={b}");
            }
        }
    }

    #[test]
    fn remainder_telescopes() {
        let gp = GameParams::new(0.5, 0.5).unwrap();
        let (r2, _) = remainder_r1k(&gp, 16, 2, 1.0, 60).unwrap();
        let (r3, _) = remainder_r1k(&gp, 16, 3, 1.0, 60).unwrap();
        let mu2 = virtual_moment(&gp, 2.0).unwrap();
        let z = Complex64::new(0.0, 1.0 / 256.0);
        let want = z * z * mu2 / 2.0 * 16.0;
        assert!((r2 - r3 - want).norm() < 1e-18);
        assert!(remainder_r1k(&gp, 16, 2, 1e4, 60).is_err());
    }
}
