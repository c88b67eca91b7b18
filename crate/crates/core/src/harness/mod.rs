//! Error measurements against the exact lattice law, rate studies across n, and
//! report output.

mod measure;
mod report;

pub use measure::{
    approximant_table, default_window, envelope_uniform_error, local_error, local_weighted_error, nonuniform_error, sample, uniform_error,
    LatticeSample,
};
pub use report::{write_csv, write_json};

use crate::error::{Error, Result};
use crate::game::GameParams;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Uniform,
    Weighted,
    Local,
    LocalWeighted,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Uniform => "uniform",
            Kind::Weighted => "weighted",
            Kind::Local => "local",
            Kind::LocalWeighted => "local_weighted",
        }
    }

    pub fn is_local(self) -> bool {
        matches!(self, Kind::Local | Kind::LocalWeighted)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Kind::Uniform),
            "weighted" | "nonuniform" => Ok(Kind::Weighted),
            "local" => Ok(Kind::Local),
            "local_weighted" | "local-weighted" => Ok(Kind::LocalWeighted),
            _ => Err(Error::ParameterDomain(format!("unknown kind {s}"))),
        }
    }
}

/// Which approximant is compared with the exact law.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Full,
    Simplified,
    SimplifiedTilde,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Simplified => "simplified",
            Mode::SimplifiedTilde => "simplified_tilde",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "simplified" => Ok(Mode::Simplified),
            "simplified_tilde" | "simplified-tilde" => Ok(Mode::SimplifiedTilde),
            _ => Err(Error::ParameterDomain(format!("unknown mode {s}"))),
        }
    }
}

/// Knobs shared by all measurements.
#[derive(Clone, Debug)]
pub struct StudyConfig {
    /// Target accuracy of the inverted approximants.
    pub tol: f64,
    /// Largest pmf window, in entries of the maximal-span lattice.
    pub max_entries: usize,
    /// Standardized upper end of the measured window; chosen from the entry budget if unset.
    pub x_window: Option<f64>,
    /// Lower bound on the standardized grid step of the non-lattice envelope.
    pub envelope_step: f64,
    pub tail_budget: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig { tol: 1e-10, max_entries: 1 << 22, x_window: None, envelope_step: 1e-3, tail_budget: 1e-9 }
    }
}

/// One measured distance between the law of the standardized sum and an approximant.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMeasurement {
    pub n: u64,
    pub gamma_n: f64,
    pub ell: u32,
    pub kind: Kind,
    /// Supremum over the measured window [x_start, x_window].
    pub value: f64,
    /// Bound on |value - true supremum over the window|.
    pub value_error_bound: f64,
    pub argmax_x: f64,
    pub x_window: f64,
    /// Bound (or, for weighted kinds, estimate) for the same distance beyond the window.
    pub tail_gap: f64,
    /// 1.2 times the sampled maximum of |G'| (|G''| for local kinds).
    pub m_hat: f64,
    /// Certificate above 10% of the value, or envelope wider than the value.
    pub inconclusive: bool,
}

impl ErrorMeasurement {
    /// The beyond-window gap exceeds the measured value.
    pub fn window_limited(&self) -> bool {
        self.tail_gap > self.value
    }
}

/// Rate exponent and log power of the normalizer n^rate / (log_r n)^log_power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    pub rate: f64,
    pub log_power: u32,
}

impl Normalizer {
    pub fn apply(&self, gp: &GameParams<f64>, n: u64, value: f64) -> f64 {
        let nf = n as f64;
        let mut v = value * nf.powf(self.rate);
        if self.log_power > 0 {
            v /= gp.log_r(n).powi(self.log_power as i32);
        }
        v
    }
}

const EDGE: f64 = 1e-12;

/// Normalizer from the case table of the uniform, nonuniform and local theorems.
pub fn normalizer(alpha: f64, ell: u32, kind: Kind, mode: Mode) -> Result<Normalizer> {
    if ell == 0 {
        return Err(Error::ParameterDomain("ell must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::ParameterDomain(format!("alpha = {alpha} not in (0, 2)")));
    }
    let l = ell as f64;
    let n = |rate: f64| Normalizer { rate, log_power: 0 };
    let one = (alpha - 1.0).abs() < EDGE;
    match kind {
        Kind::Uniform if mode != Mode::Full && ell >= 2 => {
            if one {
                return Err(Error::UnsupportedRegime("no simplified approximants at alpha = 1".into()));
            }
            Ok(n(1.0 / alpha))
        }
        Kind::Weighted if mode != Mode::Full && ell >= 2 => {
            if alpha <= 1.0 {
                return Err(Error::UnsupportedRegime("weighted studies need alpha in (1, 2)".into()));
            }
            Ok(n(1.0 / alpha))
        }
        Kind::Uniform => {
            if one {
                // G_{n,1} is the length-two expansion with remainder 1/n; G_{n,0} leaves (log n)^2 / n
                match ell {
                    1 => Ok(Normalizer { rate: 1.0, log_power: 2 }),
                    2 => Ok(n(1.0)),
                    _ => Err(Error::UnsupportedRegime("uniform studies at alpha = 1 stop at ell = 2".into())),
                }
            } else if alpha < 1.0 {
                if alpha < 1.0 / l - EDGE {
                    Ok(n(l))
                } else {
                    Ok(n(1.0 / alpha))
                }
            } else if alpha <= 2.0 - 1.0 / l + EDGE {
                Ok(n(1.0 / alpha))
            } else {
                Ok(n(l * (2.0 - alpha) / alpha))
            }
        }
        Kind::Weighted => {
            if alpha <= 1.0 {
                return Err(Error::UnsupportedRegime("weighted studies need alpha in (1, 2)".into()));
            }
            if alpha <= 2.0 - 1.0 / l + EDGE {
                Ok(n(1.0 / alpha))
            } else {
                Ok(n(l * (2.0 - alpha) / alpha))
            }
        }
        Kind::Local => {
            if one {
                Ok(Normalizer { rate: l, log_power: 2 * ell })
            } else if alpha < 1.0 {
                Ok(n(l))
            } else {
                Ok(n(l * (2.0 - alpha) / alpha))
            }
        }
        Kind::LocalWeighted => {
            if alpha <= 1.0 {
                return Err(Error::UnsupportedRegime("weighted local studies need alpha in (1, 2)".into()));
            }
            Ok(n(l * (2.0 - alpha) / alpha))
        }
    }
}

/// Boundedness statistics of a normalized column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub max_norm: f64,
    pub median_norm: f64,
    /// Spearman rank correlation of the normalized value against log n.
    pub spearman: f64,
}

impl Summary {
    pub fn ratio(&self) -> f64 {
        self.max_norm / self.median_norm
    }

    /// max/median <= 5 and no upward trend beyond +0.5.
    pub fn bounded(&self) -> bool {
        self.ratio() <= 5.0 && self.spearman <= 0.5
    }
}

#[derive(Clone, Debug)]
pub struct RateReport {
    pub alpha: f64,
    pub p: f64,
    pub ell: u32,
    pub kind: Kind,
    pub mode: Mode,
    pub normalizer: Normalizer,
    pub rows: Vec<ErrorMeasurement>,
    pub normalized: Vec<f64>,
    pub summary: Summary,
}

impl RateReport {
    pub fn new(gp: &GameParams<f64>, ell: u32, kind: Kind, mode: Mode, mut rows: Vec<ErrorMeasurement>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::ParameterDomain("no rows".into()));
        }
        rows.sort_by_key(|r| r.n);
        let normalizer = normalizer(gp.alpha, ell, kind, mode)?;
        let normalized: Vec<f64> = rows.iter().map(|r| normalizer.apply(gp, r.n, r.value)).collect();
        let logs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let summary = Summary { max_norm: normalized.iter().cloned().fold(f64::NEG_INFINITY, f64::max), median_norm: median(&normalized), spearman: spearman(&logs, &normalized) };
        Ok(RateReport { alpha: gp.alpha, p: gp.p, ell, kind, mode, normalizer, rows, normalized, summary })
    }

    /// Rows whose certificate exceeds 10% of the value.
    pub fn flagged(&self) -> impl Iterator<Item = &ErrorMeasurement> {
        self.rows.iter().filter(|r| r.inconclusive)
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

/// Average ranks (ties share the mean rank).
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let m = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / m, rb.iter().sum::<f64>() / m);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Geometric grid lo, lo*2, ... up to hi with `extra` off-power points per octave.
pub fn octave_grid(lo: u64, hi: u64, extra: u32) -> Vec<u64> {
    let mut out = Vec::new();
    let mut base = lo.max(1);
    while base <= hi {
        out.push(base);
        for i in 1..=extra {
            let v = (base as f64 * 2f64.powf(i as f64 / (extra + 1) as f64)).round() as u64;
            if v < hi && v > *out.last().unwrap() && v < 2 * base {
                out.push(v);
            }
        }
        base *= 2;
    }
    out
}

/// Parse `a,b,c`, `lo:hi:xF` (geometric with factor F) or `lo:hi:oK` (octaves with K off-power points).
pub fn parse_ns(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::ParameterDomain(format!("cannot parse n list {s:?}"));
    let mut ns: Vec<u64> = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: u64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: u64 = parts[1].trim().parse().map_err(|_| bad())?;
        let step = parts[2].trim();
        if let Some(f) = step.strip_prefix('x') {
            let f: u64 = f.parse().map_err(|_| bad())?;
            if f < 2 || lo == 0 {
                return Err(bad());
            }
            let mut v = Vec::new();
            let mut n = lo;
            while n <= hi {
                v.push(n);
                n *= f;
            }
            v
        } else if let Some(k) = step.strip_prefix('o') {
            octave_grid(lo, hi, k.parse().map_err(|_| bad())?)
        } else {
            return Err(bad());
        }
    } else {
        s.split(',').map(|t| t.trim().parse::<u64>().map_err(|_| bad())).collect::<Result<_>>()?
    };
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() || ns[0] == 0 {
        return Err(bad());
    }
    Ok(ns)
}

/// Measure every n once per kind and return one report per ell; pmfs are shared across ell.
pub fn rate_studies(gp: &GameParams<f64>, ns: &[u64], ells: &[u32], kind: Kind, mode: Mode, cfg: &StudyConfig) -> Result<Vec<RateReport>> {
    if ns.is_empty() {
        return Err(Error::ParameterDomain("empty n list".into()));
    }
    for &ell in ells {
        normalizer(gp.alpha, ell, kind, mode)?;
    }
    let x_window = match cfg.x_window {
        Some(x) => x,
        None => default_window(gp, ns, cfg)?,
    };
    let mut rows: Vec<Vec<ErrorMeasurement>> = vec![Vec::new(); ells.len()];
    for &n in ns {
        if gp.lattice_span.is_some() {
            let s = sample(gp, n, x_window)?;
            for (slot, &ell) in rows.iter_mut().zip(ells) {
                let table = approximant_table(gp, ell, mode)?;
                let m = match kind {
                    Kind::Uniform => uniform_error(&s, &table, false, cfg)?,
                    Kind::Weighted => nonuniform_error(&s, &table, cfg)?,
                    Kind::Local => local_error(&s, &table, false, cfg)?,
                    Kind::LocalWeighted => local_weighted_error(&s, &table, cfg)?,
                };
                slot.push(m);
            }
        } else {
            if kind != Kind::Uniform {
                return Err(Error::NotLattice);
            }
            for (slot, &ell) in rows.iter_mut().zip(ells) {
                let table = approximant_table(gp, ell, mode)?;
                slot.push(envelope_uniform_error(gp, n, &table, x_window, cfg)?);
            }
        }
    }
    rows.into_iter().zip(ells).map(|(r, &ell)| RateReport::new(gp, ell, kind, mode, r)).collect()
}

pub fn rate_study(gp: &GameParams<f64>, ns: &[u64], ell: u32, kind: Kind, mode: Mode, cfg: &StudyConfig) -> Result<RateReport> {
    Ok(rate_studies(gp, ns, &[ell], kind, mode, cfg)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizers_at_regime_boundaries() {
        let u = |a: f64, l: u32| normalizer(a, l, Kind::Uniform, Mode::Full).unwrap();
        // alpha = 1/ell belongs to the n^{1/alpha} case
        assert_eq!(u(0.5, 2).rate, 2.0);
        assert_eq!(u(0.49, 2).rate, 2.0);
        assert_eq!(u(0.5, 1).rate, 1.0);
        assert_eq!(u(1.0 / 3.0, 3).rate, 3.0);
        assert_eq!(u(0.3, 3).rate, 3.0);
        assert!((u(0.4, 3).rate - 2.5).abs() < 1e-12);
        // alpha = 2 - 1/ell belongs to the n^{1/alpha} case
        assert!((u(1.5, 2).rate - 1.0 / 1.5).abs() < 1e-12);
        assert!((u(1.6, 2).rate - 2.0 * 0.4 / 1.6).abs() < 1e-12);
        assert!((u(1.5, 1).rate - 0.5 / 1.5).abs() < 1e-12);
        assert_eq!(u(1.0, 1), Normalizer { rate: 1.0, log_power: 2 });
        assert_eq!(u(1.0, 2), Normalizer { rate: 1.0, log_power: 0 });
        assert!(normalizer(1.0, 3, Kind::Uniform, Mode::Full).is_err());
        let w = |a: f64, l: u32| normalizer(a, l, Kind::Weighted, Mode::Full).unwrap().rate;
        assert!((w(1.5, 1) - 1.0 / 3.0).abs() < 1e-12);
        assert!((w(1.5, 2) - 1.0 / 1.5).abs() < 1e-12);
        assert!(normalizer(1.0, 1, Kind::Weighted, Mode::Full).is_err());
        let loc = |a: f64, l: u32| normalizer(a, l, Kind::Local, Mode::Full).unwrap();
        assert_eq!(loc(1.0, 2), Normalizer { rate: 2.0, log_power: 4 });
        assert_eq!(loc(0.5, 1).rate, 1.0);
        assert!((loc(1.5, 2).rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((normalizer(1.5, 1, Kind::LocalWeighted, Mode::Full).unwrap().rate - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(normalizer(0.5, 2, Kind::Uniform, Mode::Simplified).unwrap().rate, 2.0);
        assert!(normalizer(1.0, 2, Kind::Uniform, Mode::Simplified).is_err());
        assert!(normalizer(0.5, 0, Kind::Uniform, Mode::Full).is_err());
    }

    #[test]
    fn statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[2.0, 4.0, 6.0, 8.0, 100.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&x, &[1.0; 5]), 0.0);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]) - 0.8660254037844387).abs() < 1e-12);
    }

    #[test]
    fn n_lists() {
        assert_eq!(parse_ns("4:64:x2").unwrap(), vec![4, 8, 16, 32, 64]);
        assert_eq!(parse_ns("8, 3,8").unwrap(), vec![3, 8]);
        assert_eq!(parse_ns("4:16:o3").unwrap(), vec![4, 5, 6, 7, 8, 10, 11, 13, 16]);
        assert!(parse_ns("4:16").is_err());
        assert!(parse_ns("0,2").is_err());
        let g = octave_grid(4, 2048, 3);
        assert_eq!(g.len(), 37);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
