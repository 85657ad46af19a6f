//! Command-line front end for `rcrobust`.
//!
//! [`run_args`] parses and executes one command and returns the exit code
//! with captured output, so the binary and the tests share one code path.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use rcrobust::acyclic::DEFAULT_PATH_CAP;
use rcrobust::dsl::{emit_workload, parse_schedule, parse_workload};
use rcrobust::fixtures::{fixture, NAMES};
use rcrobust::model::{OpKind, Workload};
use rcrobust::oracle::{oracle_decide, random_workload, BoundedVerdict, RandomParams};
use rcrobust::schema::{classify, Fragment, FragmentReport};
use rcrobust::witness::{explain_schedule, verify_witness};
use rcrobust::{decide, Counterexample, Error, Verdict};

pub const EXIT_ROBUST: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_UNSUPPORTED: i32 = 2;
pub const EXIT_NOT_ROBUST: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "rcrobust", version, about = "Robustness of transaction templates against Read Committed")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Worker threads for the deciders (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Input {
    /// Workload file, or `fixtures:NAME` for a bundled workload.
    pub workload: String,
    /// Comma-separated template names; unique prefixes and initials
    /// (`DC` for DepositChecking) are accepted.
    #[arg(long)]
    pub templates: Option<String>,
    /// Drop all equality and disequality constraints.
    #[arg(long)]
    pub strip_constraints: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide robustness and print a counterexample if there is one.
    Check {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = DEFAULT_PATH_CAP)]
        path_cap: usize,
    },
    /// Report the fragment a workload belongs to.
    Classify {
        #[command(flatten)]
        input: Input,
    },
    /// Bounded brute-force search; with `--seed` and no workload, runs on a
    /// random workload.
    Oracle {
        workload: Option<String>,
        #[arg(long)]
        templates: Option<String>,
        #[arg(long)]
        strip_constraints: bool,
        #[arg(long, default_value_t = 4)]
        max_m: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a schedule document against a workload.
    Verify {
        schedule: PathBuf,
        #[command(flatten)]
        input: Input,
    },
    /// Find minimal sets of R operations whose promotion to U makes the
    /// workload robust.
    Promote {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 4)]
        max_promotions: usize,
        #[arg(long, default_value_t = DEFAULT_PATH_CAP)]
        path_cap: usize,
    },
    /// List bundled workloads, print one, or print a random one.
    Fixtures {
        name: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(code: i32, stdout: String) -> Self {
        Outcome {
            code,
            stdout,
            stderr: String::new(),
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Invalid(_) | Error::Schedule(_) | Error::Usage(_) => EXIT_INPUT,
        Error::Unsupported(_) | Error::Limit(_) => EXIT_UNSUPPORTED,
        Error::Internal(_) => EXIT_INTERNAL,
    }
}

fn failure(e: &Error, format: Format) -> Outcome {
    let code = exit_code(e);
    match format {
        Format::Text => Outcome {
            code,
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
        Format::Json => Outcome::ok(code, format!("{}\n", json!({ "error": e.to_string(), "exit": code }))),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_ROBUST };
            let text = e.render().to_string();
            if code == EXIT_ROBUST {
                Outcome::ok(code, text)
            } else {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            }
        }
    }
}

pub fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.jobs {
        // Errors if the global pool was already built.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let r = match &cli.command {
        Command::Check { input, path_cap } => cmd_check(input, *path_cap, cli.format),
        Command::Classify { input } => cmd_classify(input, cli.format),
        Command::Oracle {
            workload,
            templates,
            strip_constraints,
            max_m,
            seed,
        } => cmd_oracle(workload.as_deref(), templates.as_deref(), *strip_constraints, *max_m, *seed, cli.format),
        Command::Verify { schedule, input } => cmd_verify(schedule, input, cli.format),
        Command::Promote {
            input,
            max_promotions,
            path_cap,
        } => cmd_promote(input, *max_promotions, *path_cap, cli.format),
        Command::Fixtures { name, seed } => cmd_fixtures(name.as_deref(), *seed),
    };
    r.unwrap_or_else(|e| failure(&e, cli.format))
}

/// Reads a workload from a file or the bundled fixtures.
pub fn load_workload(source: &str) -> rcrobust::Result<Workload> {
    if let Some(name) = source.strip_prefix("fixtures:") {
        return fixture(name)
            .ok_or_else(|| Error::Usage(format!("unknown fixture {name}; known: {}", NAMES.join(", "))));
    }
    let text = std::fs::read_to_string(source).map_err(|e| Error::Usage(format!("cannot read {source}: {e}")))?;
    parse_workload(&text)
}

fn initials(name: &str) -> String {
    name.chars().filter(|c| c.is_uppercase()).collect()
}

/// Resolves a template reference: exact name, unique case-insensitive
/// prefix, or unique initials.
pub fn resolve_template(w: &Workload, token: &str) -> rcrobust::Result<String> {
    if let Some(t) = w.template(token) {
        return Ok(t.name.clone());
    }
    let lower = token.to_lowercase();
    let tests: [&dyn Fn(&str) -> bool; 2] = [
        &|n: &str| n.to_lowercase().starts_with(&lower),
        &|n: &str| initials(n).to_lowercase() == lower,
    ];
    for test in tests {
        let hits: Vec<&str> = w.templates.iter().map(|t| t.name.as_str()).filter(|n| test(n)).collect();
        match hits.as_slice() {
            [one] => return Ok(one.to_string()),
            [] => {}
            many => return Err(Error::Usage(format!("template {token} is ambiguous: {}", many.join(", ")))),
        }
    }
    Err(Error::Usage(format!("no template matches {token}")))
}

fn select(w: Workload, templates: Option<&str>, strip: bool) -> rcrobust::Result<Workload> {
    let mut w = match templates {
        Some(list) => {
            let names = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|t| resolve_template(&w, t))
                .collect::<rcrobust::Result<Vec<_>>>()?;
            w.subset(&names)?
        }
        None => w,
    };
    if strip {
        w = w.strip_constraints();
    }
    Ok(w)
}

pub fn prepare(input: &Input) -> rcrobust::Result<Workload> {
    select(load_workload(&input.workload)?, input.templates.as_deref(), input.strip_constraints)
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn names(w: &Workload) -> Vec<&str> {
    w.templates.iter().map(|t| t.name.as_str()).collect()
}

fn render_counterexample(out: &mut String, w: &Workload, c: &Counterexample) {
    let _ = writeln!(out, "counterexample ({} transactions):", c.steps.len());
    for d in &c.description {
        let _ = writeln!(out, "  {d}");
    }
    let _ = writeln!(out, "assignment:");
    for t in &c.witness.transactions {
        let tpl = &w.templates[t.template];
        let asg: Vec<String> = tpl
            .vars
            .iter()
            .zip(&t.assignment)
            .map(|(v, id)| format!("{}={}", v.name, id))
            .collect();
        let _ = writeln!(out, "  T{} ({}): {}", t.tx.id, tpl.name, asg.join(" "));
    }
    let _ = writeln!(out, "schedule:");
    for line in c.witness.render().lines() {
        let _ = writeln!(out, "  {line}");
    }
}

fn counterexample_json(w: &Workload, c: &Counterexample) -> Value {
    json!({
        "steps": c.description,
        "witness": c.witness.to_json(w),
    })
}

fn cmd_check(input: &Input, path_cap: usize, format: Format) -> rcrobust::Result<Outcome> {
    let w = prepare(input)?;
    let (report, verdict) = decide(&w, path_cap)?;
    let (code, verification) = match &verdict {
        Verdict::Robust => (EXIT_ROBUST, None),
        Verdict::NotRobust(c) => {
            let v = verify_witness(&w, &c.witness);
            let code = if v.is_counterexample() { EXIT_NOT_ROBUST } else { EXIT_INTERNAL };
            (code, Some(v))
        }
    };
    let out = match format {
        Format::Json => {
            let mut v = json!({
                "command": "check",
                "templates": names(&w),
                "fragment": report.fragment.to_string(),
                "verdict": if verdict.is_robust() { "robust" } else { "not_robust" },
                "exit": code,
            });
            if let Some(c) = verdict.counterexample() {
                v["counterexample"] = counterexample_json(&w, c);
                v["verification"] = serde_json::to_value(&verification).unwrap_or(Value::Null);
            }
            format!("{v}\n")
        }
        Format::Text => {
            let mut out = String::new();
            let _ = writeln!(out, "templates: {}", names(&w).join(", "));
            let _ = writeln!(out, "fragment: {}", report.fragment);
            match &verdict {
                Verdict::Robust => {
                    let _ = writeln!(out, "verdict: robust");
                }
                Verdict::NotRobust(c) => {
                    let _ = writeln!(out, "verdict: not robust");
                    render_counterexample(&mut out, &w, c);
                    if let Some(v) = &verification {
                        let _ = writeln!(
                            out,
                            "verification: consistent {}, RC-allowed {}, serializable {}",
                            yes(v.consistent),
                            yes(v.rc_allowed),
                            yes(v.serializable)
                        );
                        for p in &v.problems {
                            let _ = writeln!(out, "  problem: {p}");
                        }
                    }
                }
            }
            out
        }
    };
    Ok(Outcome::ok(code, out))
}

fn classify_text(r: &FragmentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "fragment: {}", r.fragment);
    if let Some(p) = &r.pairing {
        let pairs: Vec<String> = p.iter().map(|(a, b)| format!("({a}, {b})")).collect();
        let _ = writeln!(out, "pairing: {}", pairs.join(", "));
    }
    if let Some(k) = r.max_paths {
        let _ = writeln!(out, "max paths between two relations: {k}");
    }
    if r.cycle.is_none() {
        let list = if r.non_restricted.is_empty() {
            "none".to_string()
        } else {
            r.non_restricted.join(", ")
        };
        let _ = writeln!(out, "non-restricted templates: {list}");
    }
    if let Some(c) = &r.cycle {
        let _ = writeln!(out, "cyclic schema graph: {}", c.join(" -> "));
    }
    out
}

fn cmd_classify(input: &Input, format: Format) -> rcrobust::Result<Outcome> {
    let w = prepare(input)?;
    let r = classify(&w);
    let code = if r.fragment == Fragment::Unsupported { EXIT_UNSUPPORTED } else { EXIT_ROBUST };
    let out = match format {
        Format::Json => {
            let mut v = serde_json::to_value(&r).unwrap_or(Value::Null);
            v["command"] = json!("classify");
            v["fragment"] = json!(r.fragment.to_string());
            v["exit"] = json!(code);
            format!("{v}\n")
        }
        Format::Text => classify_text(&r),
    };
    Ok(Outcome::ok(code, out))
}

fn cmd_oracle(
    workload: Option<&str>,
    templates: Option<&str>,
    strip: bool,
    max_m: usize,
    seed: Option<u64>,
    format: Format,
) -> rcrobust::Result<Outcome> {
    let w = match (workload, seed) {
        (Some(source), _) => load_workload(source)?,
        (None, Some(s)) => random_workload(s, &RandomParams::default())?,
        (None, None) => return Err(Error::Usage("oracle needs a workload or --seed".into())),
    };
    let w = select(w, templates, strip)?;
    let verdict = oracle_decide(&w, max_m)?;
    let code = if verdict.is_robust() { EXIT_ROBUST } else { EXIT_NOT_ROBUST };
    let out = match (format, &verdict) {
        (Format::Json, BoundedVerdict::RobustUpTo(m)) => {
            format!("{}\n", json!({ "command": "oracle", "verdict": "robust_up_to", "max_m": m, "exit": code }))
        }
        (Format::Json, BoundedVerdict::NotRobust(c)) => format!(
            "{}\n",
            json!({
                "command": "oracle",
                "verdict": "not_robust",
                "max_m": max_m,
                "counterexample": counterexample_json(&w, c),
                "exit": code,
            })
        ),
        (Format::Text, BoundedVerdict::RobustUpTo(m)) => {
            format!("no counterexample with at most {m} transactions\n")
        }
        (Format::Text, BoundedVerdict::NotRobust(c)) => {
            let mut out = String::from("verdict: not robust\n");
            render_counterexample(&mut out, &w, c);
            out
        }
    };
    Ok(Outcome::ok(code, out))
}

fn cmd_verify(schedule: &PathBuf, input: &Input, format: Format) -> rcrobust::Result<Outcome> {
    let w = prepare(input)?;
    let text = std::fs::read_to_string(schedule)
        .map_err(|e| Error::Usage(format!("cannot read {}: {e}", schedule.display())))?;
    let s = parse_schedule(&text)?;
    let r = explain_schedule(&w, &s);
    let confirmed = r.consistent && r.rc_allowed && !r.serializable;
    let code = if confirmed { EXIT_NOT_ROBUST } else { EXIT_ROBUST };
    let out = match format {
        Format::Json => {
            let mut v = serde_json::to_value(&r).unwrap_or(Value::Null);
            v["command"] = json!("verify");
            v["counterexample"] = json!(confirmed);
            v["exit"] = json!(code);
            format!("{v}\n")
        }
        Format::Text => {
            let mut out = String::new();
            let _ = writeln!(out, "consistent: {}", yes(r.consistent));
            let _ = writeln!(out, "RC-allowed: {}", yes(r.rc_allowed));
            let _ = writeln!(out, "serializable: {}", yes(r.serializable));
            for (id, t) in &r.templates {
                let _ = writeln!(out, "  T{id} instantiates {t}");
            }
            for p in &r.problems {
                let _ = writeln!(out, "  {p}");
            }
            let _ = writeln!(
                out,
                "{}",
                if confirmed {
                    "counterexample confirmed"
                } else {
                    "not a counterexample for this workload"
                }
            );
            out
        }
    };
    Ok(Outcome::ok(code, out))
}

/// An R operation as `(template, op)`.
pub type Promotion = (usize, usize);

#[derive(Debug, Clone, Default)]
pub struct PromotionSearch {
    /// Minimal robust promotion sets, smallest first.
    pub minimal: Vec<Vec<Promotion>>,
    /// Sets whose promoted workload left the decidable fragments.
    pub undecidable: Vec<Vec<Promotion>>,
    /// Sets skipped because promotion would give a variable two U operations.
    pub invalid: Vec<Vec<Promotion>>,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Searches promotion sets by increasing size up to `max`, keeping those
/// that make the workload robust and have no robust proper subset.
pub fn promotion_search(w: &Workload, max: usize, path_cap: usize) -> rcrobust::Result<PromotionSearch> {
    let reads: Vec<Promotion> = w
        .templates
        .iter()
        .enumerate()
        .flat_map(|(t, tpl)| {
            tpl.ops
                .iter()
                .enumerate()
                .filter(|(_, o)| o.kind == OpKind::R)
                .map(move |(i, _)| (t, i))
        })
        .collect();
    let mut res = PromotionSearch::default();
    for k in 0..=max.min(reads.len()) {
        for combo in combinations(reads.len(), k) {
            let set: Vec<Promotion> = combo.iter().map(|&i| reads[i]).collect();
            let as_set: BTreeSet<Promotion> = set.iter().copied().collect();
            if res.minimal.iter().any(|m| m.iter().all(|p| as_set.contains(p))) {
                continue;
            }
            let mut promoted = w.clone();
            let mut valid = true;
            for &(t, op) in &set {
                match promoted.promote(t, op) {
                    Ok(p) => promoted = p,
                    Err(_) => {
                        valid = false;
                        break;
                    }
                }
            }
            if !valid {
                res.invalid.push(set);
                continue;
            }
            match decide(&promoted, path_cap) {
                Ok((_, Verdict::Robust)) => res.minimal.push(set),
                Ok((_, Verdict::NotRobust(_))) => {}
                Err(Error::Unsupported(_) | Error::Limit(_)) => res.undecidable.push(set),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(res)
}

pub fn describe_promotion(w: &Workload, &(t, op): &Promotion) -> String {
    let tpl = &w.templates[t];
    let o = &tpl.ops[op];
    let v = &tpl.vars[o.var];
    format!("{}: R {}:{}", tpl.name, v.name, w.schema.relations[v.rel].name)
}

fn cmd_promote(input: &Input, max: usize, path_cap: usize, format: Format) -> rcrobust::Result<Outcome> {
    let w = prepare(input)?;
    decide(&w, path_cap)?;
    let res = promotion_search(&w, max, path_cap)?;
    let code = if res.minimal.is_empty() { EXIT_NOT_ROBUST } else { EXIT_ROBUST };
    let render = |sets: &[Vec<Promotion>]| -> Vec<Vec<String>> {
        sets.iter()
            .map(|s| s.iter().map(|p| describe_promotion(&w, p)).collect())
            .collect()
    };
    let out = match format {
        Format::Json => format!(
            "{}\n",
            json!({
                "command": "promote",
                "max_promotions": max,
                "minimal": render(&res.minimal),
                "undecidable": render(&res.undecidable),
                "invalid": render(&res.invalid),
                "exit": code,
            })
        ),
        Format::Text => {
            let mut out = String::new();
            if res.minimal.is_empty() {
                let _ = writeln!(out, "no robust promotion set with at most {max} operations");
            }
            for s in render(&res.minimal) {
                if s.is_empty() {
                    let _ = writeln!(out, "already robust: no promotion needed");
                } else {
                    let _ = writeln!(out, "minimal set: {{{}}}", s.join(", "));
                }
            }
            for s in render(&res.undecidable) {
                let _ = writeln!(out, "skipped (undecidable): {{{}}}", s.join(", "));
            }
            out
        }
    };
    Ok(Outcome::ok(code, out))
}

fn cmd_fixtures(name: Option<&str>, seed: Option<u64>) -> rcrobust::Result<Outcome> {
    if let Some(s) = seed {
        return Ok(Outcome::ok(EXIT_ROBUST, emit_workload(&random_workload(s, &RandomParams::default())?)));
    }
    match name {
        None => Ok(Outcome::ok(EXIT_ROBUST, NAMES.iter().map(|n| format!("{n}\n")).collect())),
        Some(n) => {
            let w = fixture(n).ok_or_else(|| Error::Usage(format!("unknown fixture {n}")))?;
            Ok(Outcome::ok(EXIT_ROBUST, emit_workload(&w)))
        }
    }
}
