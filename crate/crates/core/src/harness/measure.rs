use super::{ErrorMeasurement, Kind, Mode, StudyConfig};
use crate::algebra::{expansion_terms, simplified_terms, AlphaCase, ExpansionTermTable};
use crate::error::{Error, Result};
use crate::game::{GameInstance, GameParams, Regime};
use crate::inversion::{approx_curve, CurveApprox};
use crate::oracle::{envelope_cdf, maximal_span, pmf_sum_window, standardized_cdf, LatticePmf, StepCdf};

/// Table of G_{n,ell-1} (or its simplified variants) for the rate index ell.
pub fn approximant_table(gp: &GameParams<f64>, ell: u32, mode: Mode) -> Result<ExpansionTermTable> {
    if ell == 0 {
        return Err(Error::ParameterDomain("ell must be at least 1".into()));
    }
    let case = if gp.regime() == Regime::One { AlphaCase::Alpha1 } else { AlphaCase::General };
    match mode {
        Mode::Full => expansion_terms(case, ell - 1),
        _ if ell == 1 => expansion_terms(case, 0),
        Mode::Simplified => simplified_terms(ell, gp.regime(), false),
        Mode::SimplifiedTilde => simplified_terms(ell, gp.regime(), true),
    }
}

/// Exact law of S_n below a standardized window end, on the maximal span.
#[derive(Clone, Debug)]
pub struct LatticeSample {
    pub gi: GameInstance<f64>,
    pub pmf: LatticePmf<f64>,
    pub cdf: StepCdf,
    pub x_window: f64,
    /// Estimated round-off of a single probability.
    pub entry_roundoff: f64,
    /// Estimated round-off of the accumulated distribution function.
    pub cdf_roundoff: f64,
}

pub fn sample(gp: &GameParams<f64>, n: u64, x_window: f64) -> Result<LatticeSample> {
    let gi = GameInstance::new(*gp, n)?;
    let pmf = pmf_sum_window(gp, n, gi.c_n + x_window * gi.scale)?;
    let cdf = standardized_cdf(&pmf, &gi);
    let len = pmf.probs.len().max(2) as f64;
    // FFT products: a few ulps per level of the transform, per convolution
    let steps = 2.0 * (64 - n.leading_zeros()) as f64;
    let entry_roundoff = 4.0 * f64::EPSILON * steps * len.log2();
    let cdf_roundoff = entry_roundoff * len.sqrt() + len * f64::EPSILON;
    Ok(LatticeSample { gi, pmf, cdf, x_window, entry_roundoff, cdf_roundoff })
}

/// Window end shared by all n of a study: a per-regime default, shrunk so that the
/// pmf of the largest n fits in `max_entries`.
pub fn default_window(gp: &GameParams<f64>, ns: &[u64], cfg: &StudyConfig) -> Result<f64> {
    let mut x: f64 = match gp.regime() {
        Regime::Below1 => 400.0,
        Regime::One => 2000.0,
        Regime::Above1 => 1e4,
    };
    if gp.lattice_span.is_none() {
        return Ok(x.min(20.0));
    }
    let d = maximal_span(gp)? as f64;
    let base = gp.lattice_span.unwrap() as f64;
    for &n in ns {
        let gi = GameInstance::new(*gp, n)?;
        let top = n as f64 * base + d * cfg.max_entries as f64;
        x = x.min((top - gi.c_n) / gi.scale);
    }
    Ok(x)
}

fn curve_for(s: &LatticeSample, table: &ExpansionTermTable, cfg: &StudyConfig) -> Result<CurveApprox> {
    approx_curve(&s.gi, table, cfg.tol, s.x_window)
}

/// sup_x w(x) |F_n(x) - G(x)| over the window; the step function is compared with the
/// exact extrema of the interpolated G between consecutive atoms.
fn step_sup(s: &LatticeSample, curve: &CurveApprox, weighted: bool) -> (f64, f64) {
    let w = |a: f64, b: f64| if weighted { 1.0 + a.abs().max(b.abs()) } else { 1.0 };
    let mut best = 0.0;
    let mut arg = f64::NAN;
    let seg = |a: f64, b: f64, c: f64, best: &mut f64, arg: &mut f64| {
        let (gmin, gmax) = curve.cdf_extrema(a, b);
        let d = (c - gmin).abs().max((c - gmax).abs()) * w(a, b);
        if d > *best {
            *best = d;
            *arg = if (c - curve.cdf_at(a).0).abs() >= (c - curve.cdf_at(b).0).abs() { a } else { b };
        }
    };
    let first = s.cdf.x.first().copied().unwrap_or(s.x_window);
    let mut prev = curve.spec.x_start.min(first);
    let mut level = 0.0;
    for (&x, &c) in s.cdf.x.iter().zip(&s.cdf.cum) {
        if x > s.x_window {
            break;
        }
        seg(prev, x, level, &mut best, &mut arg);
        prev = x;
        level = c;
    }
    seg(prev, s.x_window, level, &mut best, &mut arg);
    (best, arg)
}

pub fn uniform_error(s: &LatticeSample, table: &ExpansionTermTable, weighted: bool, cfg: &StudyConfig) -> Result<ErrorMeasurement> {
    let curve = curve_for(s, table, cfg)?;
    let (value, argmax_x) = step_sup(s, &curve, weighted);
    let reach = s.x_window.max(curve.spec.x_start.abs());
    let w_max = if weighted { 1.0 + reach } else { 1.0 };
    let value_error_bound = w_max * (curve.cdf_error + s.cdf_roundoff);
    // F and G are both nondecreasing-tailed beyond the window; for the weighted kind this
    // assumes (1 + x)(1 - F(x)) is nonincreasing there
    let f_end = s.cdf.value(s.x_window);
    let g_end = curve.cdf_at(s.x_window).0;
    let tail = (1.0 - f_end).max((curve.total_mass - g_end).abs()) + curve.cdf_error;
    let tail_gap = if weighted { (1.0 + s.x_window) * tail } else { tail };
    Ok(ErrorMeasurement {
        n: s.gi.n,
        gamma_n: s.gi.gamma_n,
        ell: table.ell + 1,
        kind: if weighted { Kind::Weighted } else { Kind::Uniform },
        value,
        value_error_bound,
        argmax_x,
        x_window: s.x_window,
        tail_gap,
        m_hat: 1.2 * curve.max_abs_pdf(),
        inconclusive: value_error_bound > 0.1 * value,
    })
}

/// sup_x (1 + |x|) |F_n(x) - G_{n,ell-1}(x)|, alpha in (1,2).
pub fn nonuniform_error(s: &LatticeSample, table: &ExpansionTermTable, cfg: &StudyConfig) -> Result<ErrorMeasurement> {
    if s.gi.params.regime() != Regime::Above1 {
        return Err(Error::UnsupportedRegime("the weighted distance is defined for alpha in (1,2)".into()));
    }
    uniform_error(s, table, true, cfg)
}

/// sup over the maximal-span lattice of |n^{1/alpha}/d P{S_n = s} - G'((s - c_n)/n^{1/alpha})|,
/// with d the maximal span.
pub fn local_error(s: &LatticeSample, table: &ExpansionTermTable, weighted: bool, cfg: &StudyConfig) -> Result<ErrorMeasurement> {
    let curve = curve_for(s, table, cfg)?;
    let gi = &s.gi;
    let pre = gi.scale / s.pmf.span;
    let to_x = |pos: f64| (pos - gi.c_n) / gi.scale;
    let w = |x: f64| if weighted { 1.0 + x.abs() } else { 1.0 };
    let mut best = 0.0;
    let mut arg = f64::NAN;
    let mut visit = |x: f64, p: f64| {
        let v = w(x) * (pre * p - curve.pdf_at(x).0).abs();
        if v > best {
            best = v;
            arg = x;
        }
    };
    // lattice points below the smallest sum carry no mass
    let mut m = 1.0;
    loop {
        let x = to_x(s.pmf.position(0) - m * s.pmf.span);
        if x < curve.spec.x_start {
            break;
        }
        visit(x, 0.0);
        m += 1.0;
    }
    let mut i = 0usize;
    loop {
        let x = to_x(s.pmf.position(i));
        if x > s.x_window {
            break;
        }
        visit(x, s.pmf.probs.get(i).copied().unwrap_or(0.0));
        i += 1;
    }
    let reach = s.x_window.max(curve.spec.x_start.abs());
    let w_max = if weighted { 1.0 + reach } else { 1.0 };
    let value_error_bound = w_max * (curve.pdf_error + pre * s.entry_roundoff);
    let tail = pre * s.pmf.tail_mass.max(0.0) + curve.pdf_at(s.x_window).0.abs() + curve.pdf_error;
    let tail_gap = if weighted { (1.0 + s.x_window) * tail } else { tail };
    let m_hat = 1.2 * curve.dpdf.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(ErrorMeasurement {
        n: gi.n,
        gamma_n: gi.gamma_n,
        ell: table.ell + 1,
        kind: if weighted { Kind::LocalWeighted } else { Kind::Local },
        value: best,
        value_error_bound,
        argmax_x: arg,
        x_window: s.x_window,
        tail_gap,
        m_hat,
        inconclusive: value_error_bound > 0.1 * best,
    })
}

/// Local distance weighted by 1 + |s - mu_1 n| / n^{1/alpha}, alpha in (1,2).
pub fn local_weighted_error(s: &LatticeSample, table: &ExpansionTermTable, cfg: &StudyConfig) -> Result<ErrorMeasurement> {
    if s.gi.params.regime() != Regime::Above1 {
        return Err(Error::UnsupportedRegime("the weighted local distance is defined for alpha in (1,2)".into()));
    }
    local_error(s, table, true, cfg)
}

/// Interval-valued uniform distance for non-lattice games: `value` is the lower end
/// and `value + value_error_bound` the upper end, both from the oracle envelope.
pub fn envelope_uniform_error(gp: &GameParams<f64>, n: u64, table: &ExpansionTermTable, x_window: f64, cfg: &StudyConfig) -> Result<ErrorMeasurement> {
    let gi = GameInstance::new(*gp, n)?;
    let curve = approx_curve(&gi, table, cfg.tol, x_window)?;
    let env = envelope_cdf(gp, n, cfg.envelope_step * gi.scale, cfg.tail_budget, None)?;
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let mut arg = f64::NAN;
    for i in 0..env.grid.len() {
        let a = env.grid[i];
        if a > x_window {
            break;
        }
        let b = env.grid.get(i + 1).copied().unwrap_or(x_window).min(x_window);
        let (gmin, gmax) = curve.cdf_extrema(a, b);
        let upper = (env.upper[i] - gmin).max(gmax - env.lower[i]);
        let lower = (env.lower[i] - gmax).max(gmin - env.upper[i]).max(0.0);
        if upper > hi {
            hi = upper;
            arg = a;
        }
        lo = lo.max(lower);
    }
    let value_error_bound = hi - lo + curve.cdf_error;
    Ok(ErrorMeasurement {
        n,
        gamma_n: gi.gamma_n,
        ell: table.ell + 1,
        kind: Kind::Uniform,
        value: lo,
        value_error_bound,
        argmax_x: arg,
        x_window,
        tail_gap: env.tail_mass + (1.0 - curve.cdf_at(x_window).0).abs(),
        m_hat: 1.2 * curve.max_abs_pdf(),
        inconclusive: value_error_bound > lo,
    })
}
