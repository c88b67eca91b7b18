//! The generalized St. Petersburg game: P{X = r^{k/alpha}} = q^{k-1} p.

use crate::dd::{cis_m1, Dd};
use crate::error::{Error, Result};
use crate::scalar::Real;
use num_complex::Complex64;

/// Default tolerance for deciding that r^{1/alpha} is an integer.
pub const LATTICE_TOL: f64 = 1e-9;

/// Which side of alpha = 1 a game sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    Below1,
    One,
    Above1,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GameParams<T> {
    pub alpha: T,
    pub p: T,
    pub q: T,
    pub r: T,
    pub lattice_span: Option<u64>,
}

impl<T: Real> GameParams<T> {
    pub fn new(alpha: T, p: T) -> Result<Self> {
        Self::with_lattice_tol(alpha, p, T::lit(LATTICE_TOL))
    }

    pub fn with_lattice_tol(alpha: T, p: T, lattice_tol: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::lit(2.0)) {
            return Err(Error::ParameterDomain(format!("alpha = {alpha} not in (0,2)")));
        }
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::ParameterDomain(format!("p = {p} not in (0,1)")));
        }
        let q = T::one() - p;
        let r = T::one() / q;
        let base = r.powf(T::one() / alpha);
        let rounded = base.round();
        let lattice_span = if rounded >= T::one() && (base - rounded).abs() < lattice_tol {
            rounded.to_u64()
        } else {
            None
        };
        Ok(GameParams { alpha, p, q, r, lattice_span })
    }

    /// Replace the detected lattice span, e.g. to force or suppress the lattice path.
    pub fn with_span_override(mut self, span: Option<u64>) -> Self {
        self.lattice_span = span;
        self
    }

    pub fn regime(&self) -> Regime {
        if self.alpha < T::one() {
            Regime::Below1
        } else if self.alpha == T::one() {
            Regime::One
        } else {
            Regime::Above1
        }
    }

    /// ln r in double-double, derived from q so that q and r stay consistent.
    pub fn ln_r_dd(&self) -> Dd {
        -Dd::new(self.q.to_f64().unwrap()).ln()
    }

    /// Integer r when q = 1/r holds exactly.
    fn integer_r(&self) -> Option<u128> {
        let ri = self.r.round();
        if ri >= T::lit(2.0) && ri * self.q == T::one() {
            ri.to_u128()
        } else {
            None
        }
    }

    /// Smallest m >= 0 with r^m >= n, and ln(n / r^m) in double-double.
    pub fn ceil_log(&self, n: u64) -> (u32, Dd) {
        let ln_n = Dd::new(n as f64).ln();
        if let Some(ri) = self.integer_r() {
            let mut m = 0u32;
            let mut pw: u128 = 1;
            while pw < n as u128 {
                pw *= ri;
                m += 1;
            }
            let ln_g = ln_n - Dd::new(ri as f64).ln().mul_f64(m as f64);
            return (m, ln_g);
        }
        let lr = self.ln_r_dd();
        let x = ln_n.div(lr);
        let near = x.to_f64().round();
        // guard band: a log this close to an integer is taken as an exact power
        let m = if (x - Dd::new(near)).to_f64().abs() < 1e-24 {
            near
        } else {
            x.hi.ceil().max(0.0)
        };
        let m = m.max(0.0) as u32;
        (m, ln_n - lr.mul_f64(m as f64))
    }

    /// log_r n.
    pub fn log_r(&self, n: u64) -> T {
        T::lit(Dd::new(n as f64).ln().div(self.ln_r_dd()).to_f64())
    }
}

/// mu_beta = p / (q^{beta/alpha} - q).
pub fn virtual_moment<T: Real>(gp: &GameParams<T>, beta: T) -> Result<T> {
    if beta == gp.alpha {
        return Err(Error::SingularMoment {
            beta: beta.to_f64().unwrap_or(f64::NAN),
            alpha: gp.alpha.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(gp.p / (gp.q.powf(beta / gp.alpha) - gp.q))
}

/// gamma_n = n / r^{ceil(log_r n)}.
pub fn position_parameter<T: Real>(gp: &GameParams<T>, n: u64) -> T {
    let (_, ln_g) = gp.ceil_log(n);
    T::lit(ln_g.exp().to_f64().min(1.0))
}

/// c_n: mu_1 n off alpha = 1, p r n log_r n at alpha = 1.
pub fn centering<T: Real>(gp: &GameParams<T>, n: u64) -> T {
    let nn = T::from_u64(n).unwrap();
    match gp.regime() {
        Regime::One => gp.p * gp.r * nn * gp.log_r(n),
        _ => virtual_moment(gp, T::one()).expect("alpha != 1") * nn,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GameInstance<T> {
    pub params: GameParams<T>,
    pub n: u64,
    pub gamma_n: T,
    pub c_n: T,
    pub scale: T,
    /// ceil(log_r n)
    pub ceil_log: u32,
}

impl<T: Real> GameInstance<T> {
    pub fn new(params: GameParams<T>, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::ParameterDomain("n must be positive".into()));
        }
        let (m, _) = params.ceil_log(n);
        Ok(GameInstance {
            params,
            n,
            gamma_n: position_parameter(&params, n),
            c_n: centering(&params, n),
            scale: T::from_u64(n).unwrap().powf(T::one() / params.alpha),
            ceil_log: m,
        })
    }

    pub fn log_r_n(&self) -> T {
        self.params.log_r(self.n)
    }
}

/// Number of gain values with dropped mass q^K < tol.
pub fn support_cutoff(q: f64, tol: f64) -> u32 {
    let mut k = ((tol.ln() / q.ln()).floor().max(1.0)) as u32;
    while q.powi(k as i32) >= tol {
        k += 1;
    }
    while k > 1 && q.powi(k as i32 - 1) < tol {
        k -= 1;
    }
    k
}

/// Sum over gains of w_k (e^{i t tau_k} - 1) with tau_k = r^{k/alpha} e^{offset},
/// and the number of retained gains.
fn gain_sum_m1(gp: &GameParams<f64>, t: f64, log_offset: Dd, tol: f64) -> (Complex64, u32) {
    let kmax = support_cutoff(gp.q, tol);
    let step = gp.ln_r_dd().div_f64(gp.alpha);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in (1..=kmax).rev() {
        let tau = (step.mul_f64(k as f64) + log_offset).exp();
        let w = gp.q.powi(k as i32 - 1) * gp.p;
        acc += cis_m1(tau.mul_f64(t)) * w;
    }
    (acc, kmax)
}

/// f(t) = E e^{itX}, truncated so that the dropped mass is below tol.
pub fn gain_char_fn(gp: &GameParams<f64>, t: f64, tol: f64) -> Complex64 {
    gain_sum_m1(gp, t, Dd::ZERO, tol).0 + 1.0
}

/// f(t / n^{1/alpha}), with the scaling folded into the phases.
pub fn scaled_gain_char_fn(gp: &GameParams<f64>, n: u64, t: f64, tol: f64) -> Complex64 {
    let off = -Dd::new(n as f64).ln().div_f64(gp.alpha);
    gain_sum_m1(gp, t, off, tol).0 + 1.0
}

/// f_n(t) = f(t/n^{1/alpha})^n e^{-i t c_n / n^{1/alpha}}.
pub fn normalized_sum_char_fn(gp: &GameParams<f64>, n: u64, t: f64, tol: f64) -> Complex64 {
    let f = scaled_gain_char_fn(gp, n, t, tol);
    let gi = GameInstance::new(*gp, n).expect("n >= 1");
    let shift = Complex64::new(0.0, -t * gi.c_n / gi.scale).exp();
    f.powu(n as u32) * shift
}

/// x_n(t) = n (f(t/n^{1/alpha}) - 1), summed without cancellation.
/// Returns the value and a bound on the truncation error.
pub fn excess_char_fn(gp: &GameParams<f64>, n: u64, t: f64, tol: f64) -> (Complex64, f64) {
    let off = -Dd::new(n as f64).ln().div_f64(gp.alpha);
    let (s, k) = gain_sum_m1(gp, t, off, tol);
    let nn = n as f64;
    (s * nn, 2.0 * nn * gp.q.powi(k as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gp(a: f64, p: f64) -> GameParams<f64> {
        GameParams::new(a, p).unwrap()
    }

    #[test]
    fn construction_and_lattice() {
        let g = gp(1.0, 0.5);
        assert_eq!((g.q, g.r, g.lattice_span), (0.5, 2.0, Some(2)));
        assert_eq!(gp(0.5, 0.5).lattice_span, Some(4));
        assert_eq!(gp(1.5, 1.0 - 2f64.powf(-1.5)).lattice_span, Some(2));
        assert_eq!(gp(1.5, 0.5).lattice_span, None);
        assert!(GameParams::new(2.0, 0.5).is_err());
        assert!(GameParams::new(1.0, 1.0).is_err());
        assert!(GameParams::new(0.0, 0.5).is_err());
        let forced = gp(1.5, 0.5).with_span_override(Some(2));
        assert_eq!(forced.lattice_span, Some(2));
    }

    #[test]
    fn moments() {
        let g = gp(1.0, 0.5);
        assert_relative_eq!(virtual_moment(&g, 2.0).unwrap(), -2.0, epsilon = 1e-15);
        assert_relative_eq!(virtual_moment(&g, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(virtual_moment(&g, 0.5).unwrap(), 1.0 + 2f64.sqrt(), epsilon = 1e-14);
        assert!(matches!(virtual_moment(&g, 1.0), Err(Error::SingularMoment { .. })));
    }

    #[test]
    fn position_and_centering() {
        let g = gp(1.0, 0.5);
        assert_eq!(position_parameter(&g, 4), 1.0);
        assert_eq!(position_parameter(&g, 5), 0.625);
        assert_eq!(position_parameter(&g, 1), 1.0);
        assert_relative_eq!(centering(&g, 4), 8.0, epsilon = 1e-14);
        assert_eq!(centering(&g, 1), 0.0);
        assert_relative_eq!(centering(&gp(0.5, 0.5), 10), -20.0, epsilon = 1e-13);
    }

    #[test]
    fn position_irrational_r() {
        // q = 0.3: r = 10/3; n = 10 lies between r^1 and r^2
        let g = gp(0.7, 0.7);
        let want = 10.0 / (10.0f64 / 3.0).powi(2);
        assert_relative_eq!(position_parameter(&g, 10), want, epsilon = 1e-14);
        assert_eq!(position_parameter(&g, 1), 1.0);
    }

    #[test]
    fn gain_cf_basics() {
        let g = gp(1.0, 0.5);
        let tol = 1e-14;
        assert_relative_eq!(gain_char_fn(&g, 0.0, tol).re, 1.0, epsilon = 1e-15);
        let a = gain_char_fn(&g, 0.8, tol);
        let b = gain_char_fn(&g, -0.8, tol);
        assert!((a - b.conj()).norm() < 1e-15);
        let c = gain_char_fn(&g, std::f64::consts::PI, tol);
        assert!((c - 1.0).norm() < 1e-13, "{c}");
    }

    #[test]
    fn normalized_cf_n2_matches_enumeration() {
        // S_2 for the classical game: P{2^a + 2^b} = 2^{-a-b}
        let g = gp(1.0, 0.5);
        let t = 1.0;
        let mut want = Complex64::new(0.0, 0.0);
        let (scale, c2) = (2.0, 2.0);
        for a in 1..=45 {
            for b in 1..=45 {
                let s = 2f64.powi(a) + 2f64.powi(b);
                let w = 2f64.powi(-a - b);
                want += Complex64::new(0.0, t * (s - c2) / scale).exp() * w;
            }
        }
        let got = normalized_sum_char_fn(&g, 2, t, 1e-15);
        assert!((got - want).norm() < 1e-10, "{got} vs {want}");
    }
}
