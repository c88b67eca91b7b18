//! Exact distribution of S_n on the lattice of the game, plus CDF envelopes for
//! games whose gains are not on an integer lattice.
//!
//! Positions are `origin + span * index`. The plain form uses span N = r^{1/alpha}
//! and origin 0. The reduced form uses the maximal span N(N-1) of the gains:
//! every gain N^k equals N + N(N-1) m_k with m_k = (N^{k-1} - 1)/(N - 1), so S_n
//! lives on nN + N(N-1) Z and two thirds of the plain lattice is empty when N = 4.

use crate::error::{Error, Result};
use crate::fft::convolve_nonneg;
use crate::game::{GameInstance, GameParams};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

/// Largest dense array the oracle will allocate.
pub const MAX_DENSE: usize = 1 << 25;

/// Number type for probabilities.
pub trait Prob: Clone + Debug + PartialOrd + Zero + One + Add<Output = Self> + Mul<Output = Self> + Sub<Output = Self> {
    fn from_f64_exact(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn convolve(a: &[Self], b: &[Self], max_len: usize) -> Vec<Self> {
        if a.is_empty() || b.is_empty() || max_len == 0 {
            return Vec::new();
        }
        let n = (a.len() + b.len() - 1).min(max_len);
        let mut out = vec![Self::zero(); n];
        for (i, x) in a.iter().enumerate() {
            if x.is_zero() || i >= n {
                continue;
            }
            for (j, y) in b.iter().enumerate().take(n - i) {
                if !y.is_zero() {
                    out[i + j] = out[i + j].clone() + x.clone() * y.clone();
                }
            }
        }
        out
    }
}

impl Prob for f64 {
    fn from_f64_exact(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn convolve(a: &[f64], b: &[f64], max_len: usize) -> Vec<f64> {
        convolve_nonneg(a, b, max_len)
    }
}

impl Prob for BigRational {
    fn from_f64_exact(x: f64) -> Self {
        BigRational::from_float(x).expect("finite probability")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 64 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticePmf<P = f64> {
    pub span: f64,
    /// Position of index 0.
    pub origin: f64,
    pub min_index: i64,
    pub probs: Vec<P>,
    /// Bound on the probability not represented in `probs`.
    pub tail_mass: f64,
}

impl<P: Prob> LatticePmf<P> {
    pub fn position(&self, i: usize) -> f64 {
        self.origin + self.span * (self.min_index + i as i64) as f64
    }

    pub fn max_index(&self) -> i64 {
        self.min_index + self.probs.len() as i64 - 1
    }

    pub fn prob_at_index(&self, idx: i64) -> P {
        if idx < self.min_index || idx > self.max_index() {
            P::zero()
        } else {
            self.probs[(idx - self.min_index) as usize].clone()
        }
    }

    pub fn total(&self) -> P {
        self.probs.iter().cloned().fold(P::zero(), |a, b| a + b)
    }

    pub fn to_f64(&self) -> LatticePmf<f64> {
        LatticePmf {
            span: self.span,
            origin: self.origin,
            min_index: self.min_index,
            probs: self.probs.iter().map(|p| p.to_f64()).collect(),
            tail_mass: self.tail_mass,
        }
    }

    /// Drop entries from the top while their cumulative mass stays within `prune`.
    fn prune_top(&mut self, prune: f64) -> f64 {
        let mut dropped = 0.0;
        while let Some(last) = self.probs.last() {
            let v = last.to_f64();
            if dropped + v > prune || self.probs.len() == 1 {
                break;
            }
            dropped += v;
            self.probs.pop();
        }
        dropped
    }

    fn trim_zeros(&mut self) {
        while self.probs.len() > 1 && self.probs.last().is_some_and(|v| v.is_zero()) {
            self.probs.pop();
        }
        let lead = self.probs.iter().take_while(|v| v.is_zero()).count();
        if lead > 0 && lead < self.probs.len() {
            self.probs.drain(..lead);
            self.min_index += lead as i64;
        }
    }
}

impl LatticePmf<f64> {
    /// Sum of probabilities in pairwise order.
    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.probs)
    }
}

fn lattice_base(gp: &GameParams<f64>) -> Result<u64> {
    match gp.lattice_span {
        Some(n) if n >= 2 => Ok(n),
        _ => Err(Error::NotLattice),
    }
}

/// Maximal span N(N-1) of the gains and the residue nN of S_n.
pub fn maximal_span(gp: &GameParams<f64>) -> Result<u64> {
    let n = lattice_base(gp)?;
    Ok(n * (n - 1))
}

fn level_prob<P: Prob>(gp: &GameParams<f64>, k: u32) -> P {
    // q^{k-1} p, exact in P when p is dyadic
    let p = P::from_f64_exact(gp.p);
    let q = P::one() - p.clone();
    let mut v = p;
    for _ in 1..k {
        v = v * q.clone();
    }
    v
}

fn tail_after(gp: &GameParams<f64>, k: u32) -> f64 {
    gp.q.powi(k as i32)
}

/// Dense pmf at indices idx[k-1] for k = 1..=levels.
fn from_levels<P: Prob>(gp: &GameParams<f64>, levels: u32, span: f64, origin: f64, idx: &dyn Fn(u32) -> u64) -> Result<LatticePmf<P>> {
    let lo = idx(1);
    let hi = idx(levels);
    let len = (hi - lo + 1) as usize;
    if len > MAX_DENSE {
        return Err(Error::Budget(format!("dense support {len} exceeds {MAX_DENSE}; raise the tail budget")));
    }
    let mut probs = vec![P::zero(); len];
    for k in 1..=levels {
        probs[(idx(k) - lo) as usize] = level_prob(gp, k);
    }
    Ok(LatticePmf { span, origin, min_index: lo as i64, probs, tail_mass: tail_after(gp, levels) })
}

fn levels_for_budget(gp: &GameParams<f64>, tail_budget: f64) -> Result<u32> {
    if !(tail_budget > 0.0) {
        return Err(Error::ParameterDomain("tail budget must be positive".into()));
    }
    let mut k = 1u32;
    while tail_after(gp, k) > tail_budget {
        k += 1;
        if k > 4000 {
            return Err(Error::Budget("tail budget too small".into()));
        }
    }
    Ok(k)
}

fn pow_index(base: u64, e: u32) -> Result<u64> {
    base.checked_pow(e).ok_or_else(|| Error::Budget("gain index overflows u64".into()))
}

/// Law of one gain on span N: probs at N^k for k = 1..K with q^K <= tail_budget.
pub fn pmf_single<P: Prob>(gp: &GameParams<f64>, tail_budget: f64) -> Result<LatticePmf<P>> {
    let n = lattice_base(gp)?;
    let k = levels_for_budget(gp, tail_budget)?;
    pow_index(n, k - 1)?;
    from_levels(gp, k, n as f64, 0.0, &|k| n.pow(k - 1))
}

/// Levels k with N^k <= max_position.
fn levels_in_window(n: u64, max_position: f64) -> u32 {
    let mut k = 0u32;
    while let Some(v) = n.checked_pow(k + 1) {
        if v as f64 > max_position {
            break;
        }
        k += 1;
    }
    k
}

/// Law of one gain on the maximal span, keeping every gain <= max_position.
/// The dropped mass is exactly P{X > max_position}.
pub fn pmf_single_reduced<P: Prob>(gp: &GameParams<f64>, max_position: f64) -> Result<LatticePmf<P>> {
    let n = lattice_base(gp)?;
    let k = levels_in_window(n, max_position);
    if k == 0 {
        return Err(Error::Domain(format!("window {max_position} is below the smallest gain")));
    }
    let d = n * (n - 1);
    from_levels(gp, k, d as f64, n as f64, &|k| (n.pow(k - 1) - 1) / (n - 1))
}

fn same_span(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Exact convolution; the far tail is pruned up to `prune` total mass.
pub fn convolve<P: Prob>(a: &LatticePmf<P>, b: &LatticePmf<P>, prune: f64) -> Result<LatticePmf<P>> {
    convolve_capped(a, b, prune, usize::MAX)
}

fn convolve_capped<P: Prob>(a: &LatticePmf<P>, b: &LatticePmf<P>, prune: f64, max_len: usize) -> Result<LatticePmf<P>> {
    if !same_span(a.span, b.span) {
        return Err(Error::Domain(format!("lattice span mismatch: {} vs {}", a.span, b.span)));
    }
    let full = a.probs.len() + b.probs.len() - 1;
    if full.min(max_len) > MAX_DENSE {
        return Err(Error::Budget(format!("convolution length {full} exceeds {MAX_DENSE}")));
    }
    let probs = if std::ptr::eq(a, b) {
        P::convolve(&a.probs, &a.probs, max_len)
    } else {
        P::convolve(&a.probs, &b.probs, max_len)
    };
    let mut out = LatticePmf {
        span: a.span,
        origin: a.origin + b.origin,
        min_index: a.min_index + b.min_index,
        probs,
        tail_mass: a.tail_mass + b.tail_mass,
    };
    let pruned = if prune > 0.0 { out.prune_top(prune) } else { 0.0 };
    out.tail_mass += pruned;
    out.trim_zeros();
    Ok(out)
}

/// Law of S_n by binary exponentiation of `pmf_single`. The single-gain cutoff
/// takes half the budget and the per-step prunes the other half.
pub fn pmf_sum<P: Prob>(gp: &GameParams<f64>, n: u64, tail_budget: f64) -> Result<LatticePmf<P>> {
    if n == 0 {
        return Err(Error::ParameterDomain("n must be positive".into()));
    }
    let nf = n as f64;
    let single = pmf_single::<P>(gp, 0.5 * tail_budget / nf)?;
    // every pruned entry of an intermediate is counted at most n times in the result
    let mut step_budget = 0.25 * tail_budget / nf;
    let mut base = single;
    let mut acc: Option<LatticePmf<P>> = None;
    let mut m = n;
    loop {
        if m & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => {
                    step_budget *= 0.5;
                    convolve(&a, &base, step_budget)?
                }
            });
        }
        m >>= 1;
        if m == 0 {
            break;
        }
        step_budget *= 0.5;
        base = convolve(&base, &base, step_budget)?;
    }
    let out = acc.expect("n >= 1");
    if out.tail_mass > tail_budget {
        return Err(Error::Budget(format!("tail {} exceeds budget {tail_budget}; use a larger K", out.tail_mass)));
    }
    Ok(out)
}

/// Law of S_n on the maximal span, exact for every position <= max_position.
/// Gains above the window cannot contribute below it, so nothing is approximated;
/// `tail_mass` is P{S_n > max_position} up to round-off.
pub fn pmf_sum_window(gp: &GameParams<f64>, n: u64, max_position: f64) -> Result<LatticePmf<f64>> {
    if n == 0 {
        return Err(Error::ParameterDomain("n must be positive".into()));
    }
    let nb = lattice_base(gp)? as f64;
    // reduced index of a sum of m gains at position s is (s - m N) / d
    let d = nb * (nb - 1.0);
    let cap = |m: u64| -> usize {
        let v = ((max_position - m as f64 * nb) / d).floor();
        if v < 0.0 {
            0
        } else {
            (v as usize).saturating_add(1)
        }
    };
    if cap(n) == 0 {
        return Err(Error::Domain(format!("window {max_position} is below the smallest sum {}", n as f64 * nb)));
    }
    let single = pmf_single_reduced::<f64>(gp, max_position)?;
    let mut base = single;
    let mut base_count = 1u64;
    let mut acc: Option<(LatticePmf<f64>, u64)> = None;
    let mut m = n;
    let trim = |p: &mut LatticePmf<f64>, count: u64| {
        p.probs.truncate(cap(count));
    };
    trim(&mut base, 1);
    loop {
        if m & 1 == 1 {
            acc = Some(match acc {
                None => (base.clone(), base_count),
                Some((a, c)) => {
                    let c2 = c + base_count;
                    (convolve_capped(&a, &base, 0.0, cap(c2))?, c2)
                }
            });
        }
        m >>= 1;
        if m == 0 {
            break;
        }
        base_count *= 2;
        base = convolve_capped(&base, &base, 0.0, cap(base_count))?;
    }
    let (mut out, _) = acc.expect("n >= 1");
    out.tail_mass = (1.0 - out.mass()).max(0.0);
    Ok(out)
}

/// Step function of (S_n - c_n) / n^{1/alpha} built from a pmf.
#[derive(Clone, Debug)]
pub struct StepCdf {
    /// Standardized atom positions, increasing.
    pub x: Vec<f64>,
    /// Probability of each atom.
    pub jump: Vec<f64>,
    /// F at each atom, inclusive.
    pub cum: Vec<f64>,
    pub tail_mass: f64,
    /// Standardized position of the largest represented lattice point.
    pub x_max: f64,
}

impl StepCdf {
    fn count_le(&self, x: f64) -> usize {
        self.x.partition_point(|&v| v <= x)
    }

    /// F(x) = P{standardized S_n <= x}, as far as the pmf represents it.
    pub fn value(&self, x: f64) -> f64 {
        match self.count_le(x) {
            0 => 0.0,
            i => self.cum[i - 1],
        }
    }

    /// F(x-).
    pub fn left_limit(&self, x: f64) -> f64 {
        match self.x.partition_point(|&v| v < x) {
            0 => 0.0,
            i => self.cum[i - 1],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub fn standardized_cdf(pmf: &LatticePmf<f64>, gi: &GameInstance<f64>) -> StepCdf {
    let mut x = Vec::with_capacity(pmf.probs.len());
    let mut jump = Vec::with_capacity(pmf.probs.len());
    let mut cum = Vec::with_capacity(pmf.probs.len());
    // running sum with Kahan compensation
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (i, &p) in pmf.probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let y = p - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
        x.push((pmf.position(i) - gi.c_n) / gi.scale);
        jump.push(p);
        cum.push(s);
    }
    let x_max = (pmf.position(pmf.probs.len().saturating_sub(1)) - gi.c_n) / gi.scale;
    StepCdf { x, jump, cum, tail_mass: pmf.tail_mass, x_max }
}

/// Two-sided bounds on the CDF of (S_n - c_n)/n^{1/alpha} on a grid.
#[derive(Clone, Debug)]
pub struct CdfEnvelope {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub width_bound: f64,
    /// Mass the upper bound carries for the truncated far tail.
    pub tail_mass: f64,
}

impl CdfEnvelope {
    /// Integral of upper - lower over the grid, without the tail allowance. Unlike `width_bound` it shrinks with the
    /// grid step even when S_n has atoms (atoms keep the pointwise width at their mass).
    pub fn integrated_width(&self) -> f64 {
        self.grid.windows(2).zip(&self.upper).zip(&self.lower).map(|((g, u), l)| (g[1] - g[0]) * (u - self.tail_mass - l).max(0.0)).sum()
    }

    /// Bracket for F(x): [lower at the last grid point <= x, upper at the first grid point >= x].
    pub fn bracket(&self, x: f64) -> (f64, f64) {
        let i = self.grid.partition_point(|&g| g <= x);
        let lo = if i == 0 { 0.0 } else { self.lower[i - 1] };
        let j = self.grid.partition_point(|&g| g < x);
        let hi = if j >= self.grid.len() { 1.0 } else { self.upper[j] };
        (lo, hi)
    }
}

/// Gains (index on grid h, probability) rounded down or up, until the dropped mass is <= budget.
fn rounded_single(gp: &GameParams<f64>, h: f64, up: bool, budget: f64) -> Result<LatticePmf<f64>> {
    let k = levels_for_budget(gp, budget)?;
    let step = gp.ln_r_dd().div_f64(gp.alpha);
    let mut pts: Vec<(u64, f64)> = Vec::new();
    for j in 1..=k {
        let g = step.mul_f64(j as f64).exp().to_f64() / h;
        // snap values that sit on the grid up to round-off
        let near = g.round();
        let idx = if (g - near).abs() <= 1e-9 * g.max(1.0) {
            near
        } else if up {
            g.ceil()
        } else {
            g.floor()
        };
        pts.push((idx as u64, level_prob::<f64>(gp, j)));
    }
    let lo = pts[0].0;
    let hi = pts[pts.len() - 1].0;
    let len = (hi - lo + 1) as usize;
    if len > MAX_DENSE {
        return Err(Error::Budget(format!("rounded support {len} exceeds {MAX_DENSE}")));
    }
    let mut probs = vec![0.0; len];
    for (i, p) in pts {
        probs[(i - lo) as usize] += p;
    }
    Ok(LatticePmf { span: h, origin: 0.0, min_index: lo as i64, probs, tail_mass: tail_after(gp, k) })
}

fn power_by_squaring(single: LatticePmf<f64>, n: u64, step0: f64) -> Result<LatticePmf<f64>> {
    let mut step_budget = step0;
    let mut base = single;
    let mut acc: Option<LatticePmf<f64>> = None;
    let mut m = n;
    loop {
        if m & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => {
                    step_budget *= 0.5;
                    convolve(&a, &base, step_budget)?
                }
            });
        }
        m >>= 1;
        if m == 0 {
            break;
        }
        step_budget *= 0.5;
        base = convolve(&base, &base, step_budget)?;
    }
    Ok(acc.expect("n >= 1"))
}

/// CDF envelope from gains rounded to the grid h: rounding down gives a sum that is
/// pathwise smaller (upper CDF bound), rounding up a larger one (lower bound).
/// `width_ceiling` turns an envelope wider than the ceiling into an error.
pub fn envelope_cdf(gp: &GameParams<f64>, n: u64, grid_step: f64, tail_budget: f64, width_ceiling: Option<f64>) -> Result<CdfEnvelope> {
    if n == 0 || !(grid_step > 0.0) {
        return Err(Error::ParameterDomain("need n >= 1 and grid_step > 0".into()));
    }
    let gi = GameInstance::new(*gp, n)?;
    let nf = n as f64;
    let run = |up: bool| -> Result<LatticePmf<f64>> {
        let single = rounded_single(gp, grid_step, up, 0.5 * tail_budget / nf)?;
        power_by_squaring(single, n, 0.25 * tail_budget / nf)
    };
    let down = run(false)?;
    let upr = run(true)?;
    let lo_idx = down.min_index.min(upr.min_index);
    let hi_idx = down.max_index().max(upr.max_index());
    let mut grid = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let (mut cd, mut cu) = (0.0, 0.0);
    for idx in lo_idx..=hi_idx {
        cd += down.prob_at_index(idx);
        cu += upr.prob_at_index(idx);
        grid.push((idx as f64 * grid_step - gi.c_n) / gi.scale);
        upper.push((cd + down.tail_mass).min(1.0));
        lower.push(cu.min(1.0));
    }
    // F is nondecreasing, so running extrema keep both bounds monotone
    let width_bound = upper.iter().zip(&lower).map(|(u, l)| u - l).fold(0.0, f64::max);
    if let Some(c) = width_ceiling {
        if width_bound > c {
            return Err(Error::Resolution(format!("envelope width {width_bound} exceeds {c}")));
        }
    }
    Ok(CdfEnvelope { grid, lower, upper, width_bound, tail_mass: down.tail_mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::poly::rat;

    fn classic() -> GameParams<f64> {
        GameParams::new(1.0, 0.5).unwrap()
    }

    #[test]
    fn single_gain_weights() {
        let g = classic();
        let s = pmf_single::<BigRational>(&g, 1e-6).unwrap();
        assert_eq!(s.prob_at_index(1), rat(1, 2));
        assert_eq!(s.prob_at_index(2), rat(1, 4));
        assert_eq!(s.prob_at_index(4), rat(1, 8));
        assert_eq!(s.prob_at_index(3), rat(0, 1));
        let k = 20; // 2^-20 <= 1e-6
        assert_eq!(s.total(), BigRational::one() - rat(1, 1 << k));
        assert_eq!(s.tail_mass, 0.5f64.powi(k));
        let h = GameParams::new(0.5, 0.5).unwrap();
        let s = pmf_single::<f64>(&h, 1e-3).unwrap();
        assert_eq!((s.span, s.position(0), s.probs[0]), (4.0, 4.0, 0.5));
        assert_eq!(s.prob_at_index(4), 0.25);
        assert_eq!(s.prob_at_index(16), 0.125);
    }

    #[test]
    fn non_lattice_is_rejected() {
        let g = GameParams::new(0.7, 0.3).unwrap();
        assert_eq!(pmf_single::<f64>(&g, 1e-3), Err(Error::NotLattice));
    }

    #[test]
    fn convolution_basics() {
        let g = classic();
        let x = pmf_single::<BigRational>(&g, 1e-4).unwrap();
        let xx = convolve(&x, &x, 0.0).unwrap();
        assert_eq!(xx.prob_at_index(2), rat(1, 4));
        assert_eq!(xx.tail_mass, 2.0 * x.tail_mass);
        let y = pmf_single::<f64>(&GameParams::new(1.5, 1.0 - 2f64.powf(-1.5)).unwrap(), 1e-5).unwrap();
        let z = pmf_single::<f64>(&g, 1e-5).unwrap();
        assert_eq!(convolve(&y, &z, 0.0).unwrap(), convolve(&z, &y, 0.0).unwrap());
        let w = pmf_single::<f64>(&GameParams::new(0.5, 0.5).unwrap(), 1e-2).unwrap();
        assert!(convolve(&w, &z, 0.0).is_err());
        let pruned = convolve(&z, &z, 1e-3).unwrap();
        let full = convolve(&z, &z, 0.0).unwrap();
        let dropped = full.mass() - pruned.mass();
        assert!(dropped <= 1e-3 + 1e-15);
        assert!((pruned.tail_mass - full.tail_mass - dropped).abs() < 1e-15);
    }

    #[test]
    fn reduced_window_matches_plain() {
        let g = GameParams::new(0.5, 0.5).unwrap();
        let plain = pmf_sum::<f64>(&g, 3, 0.05).unwrap();
        let red = pmf_sum_window(&g, 3, 5000.0).unwrap();
        assert_eq!(red.span, 12.0);
        for (i, p) in red.probs.iter().enumerate() {
            let s = red.position(i);
            let idx = (s / 4.0).round() as i64;
            if idx > plain.max_index() {
                break;
            }
            assert!((plain.prob_at_index(idx) - p).abs() < 1e-16, "s={s}");
        }
        // positions off the maximal lattice carry no mass
        for idx in plain.min_index..=plain.max_index() {
            if (4 * idx - 12) % 12 != 0 {
                assert!(plain.prob_at_index(idx) < 1e-15);
            }
        }
    }

    #[test]
    fn envelope_on_lattice_is_exact() {
        let g = classic();
        let env = envelope_cdf(&g, 3, 2.0, 1e-4, None).unwrap();
        let gi = GameInstance::new(g, 3).unwrap();
        let pmf = pmf_sum::<f64>(&g, 3, 1e-4).unwrap();
        let f = standardized_cdf(&pmf, &gi);
        for (i, &x) in env.grid.iter().enumerate().take(200) {
            assert!((env.lower[i] - f.value(x)).abs() < 1e-15);
            assert!(env.upper[i] - env.lower[i] <= 1e-4 + 1e-15);
        }
    }
}
