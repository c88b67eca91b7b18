use clap::{Args, Parser, Subcommand};
use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use stp_merge::algebra::{d_table, w_coefficient, w_lower_limit, AlphaCase};
use stp_merge::game::{GameInstance, GameParams};
use stp_merge::harness::{self, Kind, Mode, StudyConfig};
use stp_merge::inversion::approx_curve;
use stp_merge::oracle::pmf_sum;
use stp_merge::semistable::{g_from_y, remainder_r1k, ExponentEvaluator};
use stp_merge::{Error, Result};

#[derive(Parser)]
#[command(name = "harness", version, about = "Merging expansions for generalized St. Petersburg games")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// d_{k,j} and w_{m,k,j} tables as JSON.
    Coeffs {
        #[arg(long, default_value_t = 4)]
        order: u32,
        /// Use the alpha = 1 generator (no first-moment term).
        #[arg(long)]
        alpha1: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Exponent, transforms or approximant curves.
    Eval(EvalArgs),
    /// Exact law of S_n as (s, prob) rows.
    Pmf(Common),
    /// Uniform or weighted error of G_{n,ell-1} across n.
    RateStudy(Common),
    /// Local error of G_{n,ell-1} across n.
    LocalStudy(Common),
}

#[derive(Args, Default)]
struct Common {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    ell: Option<u32>,
    #[arg(long)]
    n: Option<u64>,
    /// List `a,b,c`, geometric `lo:hi:xF` or octaves `lo:hi:oK`.
    #[arg(long)]
    ns: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    tail_budget: Option<f64>,
    /// full, simplified or simplified_tilde.
    #[arg(long)]
    mode: Option<String>,
    /// uniform, weighted, local or local_weighted.
    #[arg(long)]
    kind: Option<String>,
    /// Standardized upper end of the measured window.
    #[arg(long)]
    x_window: Option<f64>,
    #[arg(long)]
    max_entries: Option<usize>,
    /// CSV output path (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exit 3 when any measurement is inconclusive.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// y, gkj or R1k.
    #[arg(long, conflicts_with = "curve")]
    what: Option<String>,
    /// cdf or pdf of G_{n,ell}.
    #[arg(long)]
    curve: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    k: u32,
    #[arg(long, default_value_t = 0)]
    j: u32,
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    from: f64,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    to: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    #[command(flatten)]
    common: Common,
}

/// Flag values with a config-file fallback.
struct Settings<'a> {
    cli: &'a Common,
    file: HashMap<String, String>,
}

impl<'a> Settings<'a> {
    fn load(cli: &'a Common) -> Result<Self> {
        let mut file = HashMap::new();
        if let Some(path) = &cli.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            for (no, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() || line.starts_with('[') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
                let v = v.trim().trim_matches('"');
                file.insert(k.trim().replace('-', "_"), v.to_string());
            }
        }
        Ok(Settings { cli, file })
    }

    fn get<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<Option<T>> {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Config(format!("bad value for {key}: {v}"))),
        }
    }

    fn need<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<T> {
        self.get(cli, key)?.ok_or_else(|| Error::ParameterDomain(format!("--{} is required", key.replace('_', "-"))))
    }

    fn game(&self) -> Result<GameParams<f64>> {
        GameParams::new(self.need(self.cli.alpha, "alpha")?, self.need(self.cli.p, "p")?)
    }

    fn path(&self, cli: &Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        self.get(cli.clone(), key)
    }

    fn strict(&self) -> Result<bool> {
        Ok(self.cli.strict || self.get(None, "strict")?.unwrap_or(false))
    }

    fn study_config(&self) -> Result<StudyConfig> {
        let mut cfg = StudyConfig::default();
        if let Some(t) = self.get(self.cli.tol, "tol")? {
            cfg.tol = t;
        }
        if let Some(t) = self.get(self.cli.tail_budget, "tail_budget")? {
            cfg.tail_budget = t;
        }
        if let Some(m) = self.get(self.cli.max_entries, "max_entries")? {
            cfg.max_entries = m;
        }
        cfg.x_window = self.get(self.cli.x_window, "x_window")?;
        Ok(cfg)
    }
}

fn io_err(e: io::Error) -> Error {
    e.into()
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json_file(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut f, v).map_err(|e| Error::from(io::Error::from(e)))?;
    writeln!(f).map_err(io_err)
}

fn coeffs(order: u32, alpha1: bool, s: &Settings) -> Result<()> {
    if order < 2 {
        return Err(Error::ParameterDomain("--order must be at least 2".into()));
    }
    let case = if alpha1 { AlphaCase::Alpha1 } else { AlphaCase::General };
    let d = d_table(order, case);
    let ds: Vec<_> = d
        .entries()
        .filter(|(_, _, c)| !c.is_zero())
        .map(|(k, j, c)| serde_json::json!({ "k": k, "j": j, "value": c.to_string() }))
        .collect();
    let mut ws = Vec::new();
    for m in 1..=order {
        for k in 0..=order {
            for s_pow in 0..=order.saturating_sub(k) {
                let j = s_pow as i64 - m as i64;
                if j < w_lower_limit(m, k) {
                    continue;
                }
                let w = w_coefficient(m, k, j, &d)?;
                if !w.is_zero() {
                    ws.push(serde_json::json!({ "m": m, "k": k, "j": j, "value": w.to_string() }));
                }
            }
        }
    }
    let v = serde_json::json!({ "order": order, "case": if alpha1 { "alpha1" } else { "general" }, "d": ds, "w": ws });
    match s.path(&s.cli.out, "out")?.or(s.path(&s.cli.json, "json")?) {
        Some(p) => write_json_file(&p, &v),
        None => {
            let mut out = output(None)?;
            serde_json::to_writer_pretty(&mut out, &v).map_err(|e| Error::from(io::Error::from(e)))?;
            writeln!(out).and_then(|_| out.flush()).map_err(io_err)
        }
    }
}

fn grid(from: f64, to: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !(to >= from) {
        return Err(Error::ParameterDomain("need --points >= 1 and --to >= --from".into()));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    Ok((0..points).map(|i| from + (to - from) * i as f64 / (points - 1) as f64).collect())
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn eval(a: &EvalArgs, s: &Settings) -> Result<()> {
    let gp = s.game()?;
    let tol = s.get(s.cli.tol, "tol")?.unwrap_or(1e-12);
    let pts = grid(a.from, a.to, a.points)?;
    let mut w = csv::Writer::from_writer(output(s.path(&s.cli.out, "out")?.as_deref())?);
    let csv_err = Error::from;
    if let Some(curve) = &a.curve {
        let ell = s.get(s.cli.ell, "ell")?.unwrap_or(0);
        let n = s.need(s.cli.n, "n")?;
        let mode: Mode = s.get(s.cli.mode.clone(), "mode")?.unwrap_or_else(|| "full".into()).parse()?;
        let gi = GameInstance::new(gp, n)?;
        let table = harness::approximant_table(&gp, ell + 1, mode)?;
        let c = approx_curve(&gi, &table, tol.max(1e-13), a.to.max(1.0))?;
        let pdf = match curve.as_str() {
            "cdf" => false,
            "pdf" => true,
            other => return Err(Error::ParameterDomain(format!("unknown curve {other}"))),
        };
        w.write_record(["x", "value", "error_bound"]).map_err(csv_err)?;
        for x in pts {
            let (v, e) = if pdf { c.pdf_at(x) } else { c.cdf_at(x) };
            w.write_record([num(x), num(v), num(e)]).map_err(csv_err)?;
        }
    } else {
        let what = a.what.as_deref().unwrap_or("y");
        let ev = ExponentEvaluator::new(gp, a.gamma, tol)?;
        w.write_record(["t", "re", "im", "certified_error"]).map_err(csv_err)?;
        for t in pts {
            let (v, e) = match what {
                "y" => ev.y_with_bound(t),
                "gkj" => {
                    let (y, e) = ev.y_with_bound(t);
                    let g = g_from_y(a.k, a.j, t, y);
                    // first-order propagation of the error in y through y^j e^y
                    let rel = if a.j > 0 && y.norm() > 0.0 { a.j as f64 / y.norm() } else { 0.0 };
                    (g, g.norm() * (1.0 + rel) * e * 1.01)
                }
                "R1k" | "r1k" => {
                    let n = s.need(s.cli.n, "n")?;
                    remainder_r1k(&gp, n, a.k.max(2), t, 64)?
                }
                other => return Err(Error::ParameterDomain(format!("unknown --what {other}"))),
            };
            w.write_record([num(t), num(v.re), num(v.im), num(e)]).map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn pmf(s: &Settings) -> Result<()> {
    let gp = s.game()?;
    let n = s.need(s.cli.n, "n")?;
    let budget = s.get(s.cli.tail_budget, "tail_budget")?.unwrap_or(1e-6);
    let law = pmf_sum::<f64>(&gp, n, budget)?;
    let mut w = csv::Writer::from_writer(output(s.path(&s.cli.out, "out")?.as_deref())?);
    let csv_err = Error::from;
    w.write_record(["s", "prob"]).map_err(csv_err)?;
    for (i, &p) in law.probs.iter().enumerate() {
        if p > 0.0 {
            w.write_record([format!("{}", law.position(i)), num(p)]).map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    if let Some(path) = s.path(&s.cli.json, "json")? {
        let v = serde_json::json!({ "tail_mass": law.tail_mass, "span": law.span, "min_index": law.min_index });
        write_json_file(&path, &v)?;
    }
    Ok(())
}

fn study(s: &Settings, local: bool) -> Result<ExitCode> {
    let gp = s.game()?;
    let ell = s.get(s.cli.ell, "ell")?.unwrap_or(1);
    let ns = match s.get(s.cli.ns.clone(), "ns")? {
        Some(list) => harness::parse_ns(&list)?,
        None => vec![s.need(s.cli.n, "n")?],
    };
    let mode: Mode = s.get(s.cli.mode.clone(), "mode")?.unwrap_or_else(|| "full".into()).parse()?;
    let default_kind = if local { "local" } else { "uniform" };
    let kind: Kind = s.get(s.cli.kind.clone(), "kind")?.unwrap_or_else(|| default_kind.into()).parse()?;
    if kind.is_local() != local {
        let cmd = if local { "local-study" } else { "rate-study" };
        return Err(Error::ParameterDomain(format!("kind {kind} does not belong to {cmd}")));
    }
    let cfg = s.study_config()?;
    let report = harness::rate_study(&gp, &ns, ell, kind, mode, &cfg)?;
    harness::write_csv(&report, output(s.path(&s.cli.out, "out")?.as_deref())?)?;
    if let Some(path) = s.path(&s.cli.json, "json")? {
        write_json_file(&path, &harness::write_json(&report))?;
    }
    let sm = &report.summary;
    eprintln!(
        "{} ell={} mode={}: max={:.4e} median={:.4e} max/median={:.3} spearman={:.3} bounded={}",
        kind,
        ell,
        mode.name(),
        sm.max_norm,
        sm.median_norm,
        sm.ratio(),
        sm.spearman,
        sm.bounded()
    );
    let flagged = report.flagged().count();
    if flagged > 0 {
        eprintln!("{flagged} inconclusive measurement(s)");
        if s.strict()? {
            return Ok(ExitCode::from(3));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.cmd {
        Cmd::Coeffs { order, alpha1, common } => coeffs(*order, *alpha1, &Settings::load(common)?).map(|_| ExitCode::SUCCESS),
        Cmd::Eval(a) => eval(a, &Settings::load(&a.common)?).map(|_| ExitCode::SUCCESS),
        Cmd::Pmf(c) => pmf(&Settings::load(c)?).map(|_| ExitCode::SUCCESS),
        Cmd::RateStudy(c) => study(&Settings::load(c)?, false),
        Cmd::LocalStudy(c) => study(&Settings::load(c)?, true),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ParameterDomain(_)
        | Error::SingularMoment { .. }
        | Error::UnsupportedRegime(_)
        | Error::Domain(_)
        | Error::Regime(_)
        | Error::NotLattice
        | Error::Config(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(64),
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Error::ClosedOutput) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
