//! Command-line front end.
//!
//! [`dispatch`] parses arguments, runs one subcommand and returns the exit
//! code together with everything destined for stdout and stderr, so the
//! binary is a thin wrapper and tests can drive the CLI in-process.
//!
//! Exit codes: 0 when the command verified its claim or found nothing,
//! 1 when a check failed or the command reports findings, 2 on usage
//! errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::apparition::{primitive_prime_divisors, rank_table, wall_exponent, wall_scan, write_rank_csv};
use crate::arith::{factorize, FactorCache};
use crate::error::{Error, Result};
use crate::lehmer::{lehmer_search_lucas_with, summarize};
use crate::proof::{
    eq9_scan, final_scan, imp_scan, run_full_proof, run_step, step_identities, CertificateStatus, ProofConfig,
    StepStatus, STEP_IDS,
};
use crate::sequences::{pair_exact, pair_mod, period_mod, residues_mod, SequenceKind};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "LUCAS_LEHMER_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

/// Everything a run depends on. Loaded from defaults, then the config
/// file, then command-line flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RunConfig {
    pub format: Format,
    pub factor_cache: Option<PathBuf>,
    pub proof: ProofConfig,
}

impl RunConfig {
    /// Parses a flat `key = value` file. `format` and `factor_cache` are
    /// read here; every other key belongs to [`ProofConfig`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let format = match table.remove("format") {
            Some(v) => Format::deserialize(v).map_err(|e| Error::Config(format!("format: {e}")))?,
            None => Format::default(),
        };
        let factor_cache = match table.remove("factor_cache") {
            Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err(Error::Config("factor_cache must be a string".into())),
            None => None,
        };
        let proof = ProofConfig::deserialize(toml::Value::Table(table)).map_err(|e| Error::Config(e.to_string()))?;
        Ok(RunConfig {
            format,
            factor_cache,
            proof,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Parser)]
#[command(name = "lucas-lehmer", version, about = "Lucas and Fibonacci arithmetic and a replayable certificate that no Lucas number is a Lehmer number")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Config file (default: $LUCAS_LEHMER_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Factorization work budget in rho iterations.
    #[arg(long, global = true)]
    budget: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Starting precision for certified comparisons, in bits.
    #[arg(long, global = true)]
    bits: Option<u32>,
    /// Number of precision doublings allowed.
    #[arg(long, global = true)]
    escalations: Option<u32>,
    /// Factorization cache file, read before and merged after the run.
    #[arg(long, global = true)]
    factor_cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sequence values, identity checks and periods.
    Seq {
        /// Print L_N.
        #[arg(long, value_name = "N")]
        lucas: Option<u64>,
        /// Print F_N.
        #[arg(long, value_name = "N")]
        fib: Option<u64>,
        /// Check the identity suite for every n <= N.
        #[arg(long, value_name = "N")]
        identities: Option<u64>,
        /// Print the period and residues modulo --modulus.
        #[arg(long, requires = "modulus")]
        period: bool,
        #[arg(long)]
        modulus: Option<u64>,
        #[arg(long, default_value = "lucas")]
        kind: SequenceKind,
        /// Residues to list with --period (default: one period plus two).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Rank of apparition and Wall exponent of primes.
    Rank {
        #[arg(long, conflicts_with = "limit")]
        prime: Option<u64>,
        /// Every prime up to this bound.
        #[arg(long)]
        limit: Option<u64>,
        /// Emit CSV regardless of --format.
        #[arg(long)]
        csv: bool,
    },
    /// Wall exponents of all odd primes up to --limit.
    WallScan {
        #[arg(long)]
        limit: u64,
    },
    /// Primitive prime divisors of T_d.
    Primitive {
        #[arg(long)]
        index: u64,
        #[arg(long, default_value = "lucas")]
        kind: SequenceKind,
    },
    /// Decide the Lehmer property of L_n for 2 <= n <= --max-index.
    LehmerSearch {
        #[arg(long)]
        max_index: u64,
    },
    /// Run the proof pipeline.
    Proof {
        /// Run a single step.
        #[arg(long, conflicts_with = "full")]
        step: Option<String>,
        /// Run every step and print the certificate (the default).
        #[arg(long)]
        full: bool,
    },
    /// Evaluate one of the proof's inequalities over a range.
    CheckIneq {
        #[arg(long, value_enum)]
        which: Which,
        /// Inclusive range `LO..HI`.
        #[arg(long, value_parser = parse_range)]
        range: (u64, u64),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Eq9,
    Final,
    Imp,
}

fn parse_range(s: &str) -> std::result::Result<(u64, u64), String> {
    let (lo, hi) = s.split_once("..").ok_or("expected LO..HI")?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: u64 = lo.trim().parse().map_err(|_| format!("bad lower end {lo:?}"))?;
    let hi: u64 = hi.trim().parse().map_err(|_| format!("bad upper end {hi:?}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

/// Exit code plus the text for each stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn usage(msg: impl Into<String>) -> Self {
        Outcome {
            code: 2,
            stdout: String::new(),
            stderr: msg.into(),
        }
    }
}

/// What a subcommand produced before rendering.
struct Report {
    command: &'static str,
    findings: bool,
    result: Value,
    text: String,
}

impl Report {
    fn new(command: &'static str, findings: bool, result: Value, text: String) -> Self {
        Report {
            command,
            findings,
            result,
            text,
        }
    }
}

fn envelope(r: &Report, cfg: &RunConfig) -> Value {
    json!({
        "command": r.command,
        "status": if r.findings { "findings" } else { "ok" },
        "config": cfg,
        "result": r.result,
    })
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => RunConfig::load(&p)?,
        None => RunConfig::default(),
    };
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    if let Some(p) = &cli.factor_cache {
        cfg.factor_cache = Some(p.clone());
    }
    let pc = &mut cfg.proof;
    if let Some(w) = cli.workers {
        pc.workers = w;
    }
    if let Some(b) = cli.budget {
        pc.budget_iterations = b;
    }
    if let Some(s) = cli.seed {
        pc.seed = s;
    }
    if let Some(b) = cli.bits {
        pc.base_bits = b;
    }
    if let Some(e) = cli.escalations {
        pc.max_escalations = e;
    }
    pc.validate()?;
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command.
pub fn dispatch<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            return if code == 0 {
                Outcome {
                    code: 0,
                    stdout: rendered,
                    stderr: String::new(),
                }
            } else {
                Outcome::usage(rendered)
            };
        }
    };
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => return Outcome::usage(format!("error: {e}\n")),
    };
    match run(&cli.command, &cfg) {
        Ok(out) => out,
        Err(e) => {
            let code = match e {
                Error::InvalidArgument(_)
                | Error::NotOddPrime(_)
                | Error::InvalidModulus(_)
                | Error::WrongParity { .. }
                | Error::Config(_)
                | Error::CacheFormat { .. } => 2,
                _ => 1,
            };
            Outcome {
                code,
                stdout: String::new(),
                stderr: format!("error: {e}\n"),
            }
        }
    }
}

fn render(report: Report, cfg: &RunConfig) -> Outcome {
    let stdout = match cfg.format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&envelope(&report, cfg)).expect("report serializes")),
        Format::Text => report.text,
    };
    Outcome {
        code: i32::from(report.findings),
        stdout,
        stderr: String::new(),
    }
}

fn run(cmd: &Command, cfg: &RunConfig) -> Result<Outcome> {
    match cmd {
        Command::Seq {
            lucas,
            fib,
            identities,
            period,
            modulus,
            kind,
            count,
        } => seq(*lucas, *fib, *identities, *period, *modulus, *kind, *count).map(|r| render(r, cfg)),
        Command::Rank { prime, limit, csv } => rank(cfg, *prime, *limit, *csv),
        Command::WallScan { limit } => {
            let scan = wall_scan(*limit, cfg.proof.workers)?;
            let text = format!(
                "scanned {} odd primes up to {}: {} exceptions\n{}",
                scan.primes_scanned,
                scan.limit,
                scan.exceptions.len(),
                scan.exceptions
                    .iter()
                    .map(|r| format!("  p = {} has e_p = {}\n", r.prime, r.wall_exponent))
                    .collect::<String>()
            );
            Ok(render(Report::new("wall-scan", !scan.exceptions.is_empty(), json!(scan), text), cfg))
        }
        Command::Primitive { index, kind } => {
            let rep = primitive_prime_divisors(*index, *kind, &cfg.proof.budget())?;
            let failed = rep.congruences.iter().any(|c| !c.holds);
            let mut text = format!(
                "{kind} index {index}: primitive primes [{}]{}\n",
                rep.primitive_primes.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", "),
                if rep.exceptional { " (exceptional index)" } else { "" }
            );
            for c in &rep.congruences {
                let _ = writeln!(
                    text,
                    "  {} : (p|5) = {}, p mod {} = {}, {}",
                    c.prime,
                    c.symbol,
                    index,
                    c.residue_mod_d,
                    if c.holds { "ok" } else { "FAILS" }
                );
            }
            Ok(render(Report::new("primitive", failed, json!(rep), text), cfg))
        }
        Command::LehmerSearch { max_index } => lehmer_search(cfg, *max_index),
        Command::Proof { step, .. } => proof(cfg, step.as_deref()),
        Command::CheckIneq { which, range } => check_ineq(cfg, *which, *range).map(|r| render(r, cfg)),
    }
}

#[allow(clippy::too_many_arguments)]
fn seq(
    lucas: Option<u64>,
    fib: Option<u64>,
    identities: Option<u64>,
    period: bool,
    modulus: Option<u64>,
    kind: SequenceKind,
    count: Option<usize>,
) -> Result<Report> {
    let mut results = serde_json::Map::new();
    let mut text = String::new();
    let mut findings = false;
    for (name, index, k) in [("lucas", lucas, SequenceKind::Lucas), ("fib", fib, SequenceKind::Fibonacci)] {
        let Some(n) = index else { continue };
        let symbol = if k == SequenceKind::Lucas { 'L' } else { 'F' };
        match modulus.filter(|_| !period) {
            Some(m) => {
                let r = pair_mod(n, m)?.get(k);
                let _ = writeln!(text, "{symbol}_{n} mod {m} = {r}");
                results.insert(name.into(), json!({ "index": n, "modulus": m, "residue": r }));
            }
            None => {
                let v = pair_exact(n).get(k).to_string();
                let _ = writeln!(text, "{symbol}_{n} = {v}");
                results.insert(name.into(), json!({ "index": n, "value": v }));
            }
        }
    }
    if let Some(n) = identities {
        let step = step_identities(n);
        findings |= step.status != StepStatus::Verified;
        let _ = writeln!(
            text,
            "identities for n <= {n}: {}",
            if findings { "FAILED" } else { "all hold" }
        );
        results.insert("identities".into(), json!(step));
    }
    if period {
        let m = modulus.ok_or_else(|| Error::InvalidArgument("--period needs --modulus".into()))?;
        let p = period_mod(m, kind)?;
        let count = count.unwrap_or(p as usize + 2);
        let residues = residues_mod(kind, m, count)?;
        let _ = writeln!(
            text,
            "{kind} mod {m}: period {p}\nresidues: {}",
            residues.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")
        );
        results.insert("period".into(), json!({ "kind": kind, "modulus": m, "period": p, "residues": residues }));
    }
    if results.is_empty() {
        return Err(Error::InvalidArgument("seq needs --lucas, --fib, --identities or --period".into()));
    }
    Ok(Report::new("seq", findings, Value::Object(results), text))
}

fn rank(cfg: &RunConfig, prime: Option<u64>, limit: Option<u64>, csv: bool) -> Result<Outcome> {
    let records = match (prime, limit) {
        (Some(p), None) => vec![wall_exponent(p)?],
        (None, Some(l)) => rank_table(2, l)?,
        _ => return Err(Error::InvalidArgument("rank needs --prime or --limit".into())),
    };
    if csv {
        let mut buf = Vec::new();
        write_rank_csv(&records, &mut buf)?;
        return Ok(Outcome {
            code: 0,
            stdout: String::from_utf8(buf).expect("csv is utf-8"),
            stderr: String::new(),
        });
    }
    let text = records
        .iter()
        .map(|r| format!("p = {}: z(p) = {}, e_p = {}\n", r.prime, r.rank, r.wall_exponent))
        .collect();
    Ok(render(Report::new("rank", false, json!(records), text), cfg))
}

fn lehmer_search(cfg: &RunConfig, max_index: u64) -> Result<Outcome> {
    let budget = cfg.proof.budget();
    let cache = match &cfg.factor_cache {
        Some(p) => Some(Mutex::new(FactorCache::load(p)?)),
        None => None,
    };
    let factor = |v: &BigUint| match &cache {
        Some(c) => {
            if let Some(hit) = c.lock().expect("cache lock").get(v).filter(|f| f.complete) {
                return Ok(hit.clone());
            }
            let f = factorize(v, &budget)?;
            c.lock().expect("cache lock").insert(f.clone());
            Ok(f)
        }
        None => factorize(v, &budget),
    };
    let verdicts = lehmer_search_lucas_with(max_index, cfg.proof.workers, &factor)?;
    if let (Some(c), Some(p)) = (cache, &cfg.factor_cache) {
        c.into_inner().expect("cache lock").save(p)?;
    }
    let summary = summarize(&verdicts);
    let findings = summary.lehmer_hits > 0 || summary.undecided > 0;
    let stdout = match cfg.format {
        Format::Json => {
            let mut out = String::new();
            for v in &verdicts {
                out.push_str(&serde_json::to_string(v)?);
                out.push('\n');
            }
            let report = Report::new("lehmer-search", findings, json!({ "summary": summary }), String::new());
            out.push_str(&serde_json::to_string(&envelope(&report, cfg))?);
            out.push('\n');
            out
        }
        Format::Text => {
            let mut out = String::new();
            for v in &verdicts {
                let verdict = match v.is_lehmer {
                    Some(true) => "LEHMER",
                    Some(false) => "not Lehmer",
                    None => "unknown",
                };
                let _ = writeln!(
                    out,
                    "n = {:>3}: {verdict} ({:?}{})",
                    v.index,
                    v.obstruction,
                    if v.unconditional { "" } else { ", conditional on omega >= 15" }
                );
            }
            let _ = writeln!(
                out,
                "{} indices: {} Lehmer, {} undecided, {} conditional",
                summary.verdicts, summary.lehmer_hits, summary.undecided, summary.conditional
            );
            out
        }
    };
    Ok(Outcome {
        code: i32::from(findings),
        stdout,
        stderr: String::new(),
    })
}

fn proof(cfg: &RunConfig, step: Option<&str>) -> Result<Outcome> {
    if let Some(id) = step {
        if !STEP_IDS.contains(&id) {
            return Err(Error::InvalidArgument(format!(
                "unknown step {id:?}; steps are {}",
                STEP_IDS.join(", ")
            )));
        }
        let s = run_step(id, &cfg.proof)?;
        let failed = s.status == StepStatus::Failed;
        let text = format!(
            "[{}] {}: {}\n{}\n",
            status_word(s.status),
            s.id,
            s.statement,
            serde_json::to_string_pretty(&s.evidence)?
        );
        return Ok(render(Report::new("proof", failed, json!(s), text), cfg));
    }
    let cert = run_full_proof(&cfg.proof)?;
    let failed = cert.status == CertificateStatus::Failed;
    let stdout = match cfg.format {
        Format::Json => format!("{}\n", cert.to_json()),
        Format::Text => {
            let mut out = String::new();
            for s in &cert.steps {
                let _ = writeln!(out, "[{}] {}: {}", status_word(s.status), s.id, s.statement);
            }
            let _ = writeln!(
                out,
                "certificate: {}",
                if failed { "FAILED" } else { "verified with assumptions" }
            );
            for f in &cert.flags {
                let _ = writeln!(out, "note: {f}");
            }
            out
        }
    };
    Ok(Outcome {
        code: i32::from(failed),
        stdout,
        stderr: String::new(),
    })
}

fn status_word(s: StepStatus) -> &'static str {
    match s {
        StepStatus::Verified => "verified",
        StepStatus::Assumed => "assumed",
        StepStatus::Failed => "FAILED",
    }
}

fn check_ineq(cfg: &RunConfig, which: Which, (lo, hi): (u64, u64)) -> Result<Report> {
    let pc = &cfg.proof;
    let policy = pc.policy();
    match which {
        Which::Eq9 => {
            let scan = eq9_scan(lo, hi, &pc.c1, &pc.c2, &policy, pc.workers)?;
            let text = format!(
                "{} primes in [{lo}, {hi}]; satisfying the p_1 inequality: [{}]\n",
                scan.primes_scanned,
                scan.satisfying.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
            );
            Ok(Report::new("check-ineq", !scan.satisfying.is_empty(), json!(scan), text))
        }
        Which::Final => {
            let inst = final_scan(lo, hi, &pc.c1, &pc.c2, &policy, pc.workers)?;
            let bad: Vec<u64> = inst.iter().filter(|i| !i.holds).map(|i| i.p).collect();
            let text = format!(
                "{} primes in [{lo}, {hi}]; closing inequality fails to hold at: [{}]\n",
                inst.len(),
                bad.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
            );
            Ok(Report::new("check-ineq", !bad.is_empty(), json!({ "instances": inst, "failures": bad }), text))
        }
        Which::Imp => {
            let scan = imp_scan(lo, hi, &pc.c1, &pc.c2, &pc.budget(), &policy, pc.workers)?;
            let bad: Vec<u64> = scan.checks.iter().filter(|c| !c.holds).map(|c| c.index).collect();
            let text = format!(
                "{} odd indices checked in [{lo}, {hi}], {} skipped; bound fails at: [{}]\n",
                scan.checks.len(),
                scan.skipped_incomplete.len(),
                bad.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
            );
            Ok(Report::new("check-ineq", !bad.is_empty(), json!(scan), text))
        }
    }
}
