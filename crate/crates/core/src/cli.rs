//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use num::{BigInt, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::audit::{self, AuditConfig, Layer};
use crate::error::{PlcError, Result};
use crate::ffield::next_prime;
use crate::pipeline;
use crate::protocol::{iplc_capacity, iplc_scope, jplc_capacity, Dataset, Demand, PrivacyMode, Rational, SetupParams};
use crate::reductions::{self, Reduction, SideInfoInstance};
use crate::transcript::{self, Transcript};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_AUDIT: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Jplc,
    Iplc,
    PirPsi,
    PirSi,
    CapacityTable,
    Audit,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    Joint,
    Individual,
    Recoverability,
    ReductionPsi,
    ReductionSi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayerArg {
    Encoder,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrivacyArg {
    Joint,
    Individual,
}

/// Private linear computation from replicated servers.
#[derive(Debug, Parser)]
#[command(name = "plclab", version)]
pub struct Cli {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Number of servers N.
    #[arg(long, default_value_t = 2)]
    pub servers: u64,
    /// Number of messages K (the largest K for capacity tables).
    #[arg(long)]
    pub messages: Option<u64>,
    /// Demand support size D.
    #[arg(long, conflicts_with = "side_info")]
    pub support: Option<u64>,
    /// Side-information size M, for the retrieval reductions.
    #[arg(long)]
    pub side_info: Option<u64>,
    /// Field size q; the smallest valid prime when omitted.
    #[arg(long)]
    pub field: Option<u64>,
    /// T = t-mult * N^{M'}.
    #[arg(long, default_value_t = 1)]
    pub t_mult: u64,
    #[arg(long, env = "PLCLAB_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Protocol runs, or samples for sampled audits.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Report file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `csv` also writes the rate table next to the JSON report.
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long, value_enum, default_value = "encoder")]
    pub audit_layer: LayerArg,
    /// Pass threshold for audits, e.g. `0.02` or `1/50`.
    #[arg(long)]
    pub tv_threshold: Option<String>,
    /// Which audit to run.
    #[arg(long, value_enum, default_value = "joint")]
    pub criterion: AuditKind,
    /// Protocol audited by the joint and individual criteria.
    #[arg(long, value_enum)]
    pub privacy: Option<PrivacyArg>,
    /// Transcript to write (protocol modes) or to verify (replay).
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

/// Exact rational from `a/b` or a decimal literal.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || PlcError::InvalidParams(format!("cannot read {s:?} as a rational"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a: BigInt = a.trim().parse().map_err(|_| bad())?;
        let b: BigInt = b.trim().parse().map_err(|_| bad())?;
        if b.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::from_big(a, b));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.chars().any(|c| !c.is_ascii_digit()) || (int.is_empty() && frac.is_empty()) {
        return Err(bad());
    }
    let digits = format!("{}{frac}", if int.is_empty() { "0" } else { int });
    let num: BigInt = digits.parse().map_err(|_| bad())?;
    Ok(Rational::from_big(num, BigInt::from(10u32).pow(frac.len() as u32)))
}

/// A finished command: the JSON report, an optional CSV table and the
/// exit status.
#[derive(Debug)]
pub struct Outcome {
    pub report: Value,
    pub csv: Option<String>,
    pub code: i32,
}

fn need(v: Option<u64>, flag: &str) -> Result<u64> {
    v.ok_or_else(|| PlcError::InvalidParams(format!("--{flag} is required for this mode")))
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn setup(cli: &Cli, mode: PrivacyMode, d: u64) -> Result<SetupParams> {
    let k = need(cli.messages, "messages")?;
    if mode == PrivacyMode::Individual && d > 0 && d <= k {
        iplc_scope(k, d)?;
    }
    let probe = SetupParams { n: cli.servers, k, d, q: 2, t: 1, privacy_mode: mode, seed: cli.seed };
    let q = cli.field.unwrap_or_else(|| next_prime(probe.min_field_size()));
    SetupParams::with_multiplier(cli.servers, k, d, q, cli.t_mult, mode, cli.seed)
}

fn rate_row(r: &crate::protocol::RateReport) -> String {
    format!("{},{},{},{},{},{}\n", r.t, r.downloaded_symbols, r.rate.numerator(), r.rate.denominator(), r.capacity.numerator(), r.capacity.denominator())
}

const RATE_HEADER: &str = "t,downloaded,rate_num,rate_den,capacity_num,capacity_den\n";

fn run_protocol(cli: &Cli, mode: PrivacyMode) -> Result<Outcome> {
    let params = setup(cli, mode, need(cli.support, "support")?)?;
    let f = params.field()?;
    let trials = cli.trials.unwrap_or(1).max(1);
    let mut rows = Vec::new();
    let mut csv = String::from(RATE_HEADER);
    let mut all_ok = true;
    let mut first = None;
    for trial in 0..trials {
        let mut rng = trial_rng(cli.seed, trial);
        let demand = Demand::random(f, params.k as usize, params.d as usize, &mut rng)?;
        let data = Dataset::random(f, params.k as usize, params.t as usize, &mut rng)?;
        let run = pipeline::run(&params, &demand, &data, &mut rng)?;
        let ok = run.recovered_ok() && run.report.rate_equals_capacity;
        all_ok &= ok;
        csv.push_str(&rate_row(&run.report));
        rows.push(json!({
            "trial": trial,
            "support": demand.w(),
            "coefficients": demand.v().values(),
            "downloaded_symbols": run.report.downloaded_symbols,
            "rate": run.report.rate,
            "recovered": run.recovered_ok(),
        }));
        if trial == 0 {
            if let Some(path) = &cli.transcript {
                Transcript::from_run(&run, &data).write(path)?;
            }
            first = Some(run.report.clone());
        }
    }
    let r = first.expect("at least one trial");
    let report = json!({
        "mode": cli.mode,
        "params": params,
        "trials": trials,
        "downloaded_symbols": r.downloaded_symbols,
        "rate": r.rate,
        "capacity": r.capacity,
        "rate_equals_capacity": r.rate_equals_capacity,
        "message_bits": r.bits,
        "recovered": rows.iter().all(|x| x["recovered"] == json!(true)),
        "runs": rows,
    });
    Ok(Outcome { report, csv: Some(csv), code: if all_ok { EXIT_OK } else { EXIT_INVARIANT } })
}

fn run_reduction(cli: &Cli, reduction: Reduction) -> Result<Outcome> {
    let m = need(cli.side_info, "side-info")?;
    let params = setup(cli, reduction.privacy_mode(), m + 1)?;
    let f = params.field()?;
    let trials = cli.trials.unwrap_or(1).max(1);
    let mut rows = Vec::new();
    let mut csv = String::from(RATE_HEADER);
    let mut all_ok = true;
    let mut first = None;
    for trial in 0..trials {
        let mut rng = trial_rng(cli.seed, trial);
        let data = Dataset::random(f, params.k as usize, params.t as usize, &mut rng)?;
        let inst = SideInfoInstance::random(params.n as usize, m as usize, &data, &mut rng)?;
        let out = reductions::solve_via(reduction, &inst, &data, &mut rng)?;
        let ok = out.recovered == data.message(inst.i_star);
        all_ok &= ok && out.report.rate_equals_capacity;
        csv.push_str(&rate_row(&out.report));
        rows.push(json!({
            "trial": trial,
            "side_info": inst.side,
            "downloaded_symbols": out.report.downloaded_symbols,
            "rate": out.report.rate,
            "recovered": ok,
        }));
        if trial == 0 {
            if let Some(path) = &cli.transcript {
                Transcript::from_run(&out.run, &data).write(path)?;
            }
        }
        first.get_or_insert(out.report);
    }
    let r = first.expect("at least one trial");
    let report = json!({
        "mode": cli.mode,
        "params": params,
        "side_info_size": m,
        "trials": trials,
        "downloaded_symbols": r.downloaded_symbols,
        "rate": r.rate,
        "capacity": r.capacity,
        "rate_equals_capacity": r.rate_equals_capacity,
        "recovered": rows.iter().all(|x| x["recovered"] == json!(true)),
        "runs": rows,
    });
    Ok(Outcome { report, csv: Some(csv), code: if all_ok { EXIT_OK } else { EXIT_INVARIANT } })
}

fn capacity_table(cli: &Cli) -> Result<Outcome> {
    let n = cli.servers;
    if n == 0 {
        return Err(PlcError::InvalidParams("N must be positive".into()));
    }
    let kmax = need(cli.messages, "messages")?;
    let mut rows = Vec::new();
    let mut csv = String::from("n,k,d,jplc_num,jplc_den,iplc_num,iplc_den\n");
    for k in 1..=kmax {
        for d in 1..=k {
            let j = jplc_capacity(n, k, d)?;
            let i = iplc_capacity(n, k, d).ok();
            let (inum, iden) = i.as_ref().map_or((String::new(), String::new()), |r| (r.numerator().to_string(), r.denominator().to_string()));
            csv.push_str(&format!("{n},{k},{d},{},{},{inum},{iden}\n", j.numerator(), j.denominator()));
            rows.push(json!({ "n": n, "k": k, "d": d, "jplc": j, "iplc": i }));
        }
    }
    Ok(Outcome { report: json!({ "mode": cli.mode, "servers": n, "rows": rows }), csv: Some(csv), code: EXIT_OK })
}

fn run_audit(cli: &Cli) -> Result<Outcome> {
    let threshold = cli.tv_threshold.as_deref().map(parse_rational).transpose()?;
    let layer = match cli.audit_layer {
        LayerArg::Encoder => Layer::Encoder,
        LayerArg::Full => Layer::Full,
    };
    let mut cfg = AuditConfig { layer, threshold, seed: cli.seed, ..AuditConfig::default() };
    if let Some(t) = cli.trials {
        cfg.samples = t;
    }
    let privacy = |default: PrivacyMode| match cli.privacy {
        Some(PrivacyArg::Joint) => PrivacyMode::Joint,
        Some(PrivacyArg::Individual) => PrivacyMode::Individual,
        None => default,
    };
    let report = match cli.criterion {
        AuditKind::Joint => {
            let p = setup(cli, privacy(PrivacyMode::Joint), need(cli.support, "support")?)?;
            serde_json::to_value(audit::audit_joint_privacy(&p, &cfg)?)
        }
        AuditKind::Individual => {
            let p = setup(cli, privacy(PrivacyMode::Individual), need(cli.support, "support")?)?;
            serde_json::to_value(audit::audit_individual_privacy(&p, &cfg)?)
        }
        AuditKind::Recoverability => {
            let p = setup(cli, privacy(PrivacyMode::Joint), need(cli.support, "support")?)?;
            let rep = audit::audit_recoverability(&p, cli.trials.unwrap_or(1000), cli.seed)?;
            let code = if rep.pass { EXIT_OK } else { EXIT_INVARIANT };
            let report = json!({ "mode": cli.mode, "criterion": cli.criterion, "params": p, "report": rep });
            return Ok(Outcome { report, csv: None, code });
        }
        AuditKind::ReductionPsi | AuditKind::ReductionSi => {
            let reduction = if cli.criterion == AuditKind::ReductionPsi { Reduction::PirPsi } else { Reduction::PirSi };
            let m = need(cli.side_info, "side-info")?;
            let p = setup(cli, reduction.privacy_mode(), m + 1)?;
            serde_json::to_value(audit::audit_reduction_marginal(reduction, p.n, p.k, m, p.q, &cfg)?)
        }
    }
    .map_err(|e| PlcError::Invariant(e.to_string()))?;
    let pass = report["pass"] == json!(true);
    let report = json!({ "mode": cli.mode, "criterion": cli.criterion, "report": report });
    Ok(Outcome { report, csv: None, code: if pass { EXIT_OK } else { EXIT_AUDIT } })
}

fn run_replay(cli: &Cli) -> Result<Outcome> {
    let path = cli
        .transcript
        .as_ref()
        .ok_or_else(|| PlcError::InvalidParams("--transcript is required for replay".into()))?;
    let t = Transcript::read(path)?;
    let rep = transcript::replay(&t)?;
    let report = json!({
        "mode": cli.mode,
        "transcript": path.display().to_string(),
        "queries_match": rep.queries_match,
        "answers_match": rep.answers_match,
        "reconstruction_match": rep.reconstruction_match,
        "verified": rep.verified(),
    });
    Ok(Outcome { report, csv: None, code: if rep.verified() { EXIT_OK } else { EXIT_INVARIANT } })
}

/// Executes a parsed command.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    match cli.mode {
        Mode::Jplc => run_protocol(cli, PrivacyMode::Joint),
        Mode::Iplc => run_protocol(cli, PrivacyMode::Individual),
        Mode::PirPsi => run_reduction(cli, Reduction::PirPsi),
        Mode::PirSi => run_reduction(cli, Reduction::PirSi),
        Mode::CapacityTable => capacity_table(cli),
        Mode::Audit => run_audit(cli),
        Mode::Replay => run_replay(cli),
    }
}

fn exit_code(e: &PlcError) -> i32 {
    match e {
        PlcError::Invariant(_) => EXIT_INVARIANT,
        PlcError::CorruptTranscript(_) => EXIT_INVARIANT,
        _ => EXIT_USAGE,
    }
}

fn emit(cli: &Cli, outcome: &Outcome) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(&outcome.report).expect("serializable");
    text.push('\n');
    let csv = outcome.csv.as_deref().filter(|_| cli.format == Format::Csv);
    match &cli.out {
        Some(path) => {
            std::fs::write(path, &text)?;
            if let Some(csv) = csv {
                std::fs::write(path.with_extension("csv"), csv)?;
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if let Some(csv) = csv {
                out.write_all(csv.as_bytes())?;
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(outcome) => match emit(&cli, &outcome) {
            Ok(()) => outcome.code,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
