//! Command-line front end: check, extend, and repair write-access policies
//! over structured DTDs, plus the brute-force oracle and file validators.
//!
//! Reports are deterministic for fixed inputs and flags: a self-describing
//! `key: value` tree by default, or JSON with `--format json`. Timing is
//! only emitted under `--timing` (and is exempt from byte determinism).
//!
//! Exit codes: 0 ok/consistent, 1 analysis-negative (inconsistent policy,
//! no consistent extension, or an oracle witness found), 2 input error,
//! 3 internal assertion failure.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use xupol_core::analysis::{check_consistency, lpce, LpceOutcome, Violation};
use xupol_core::oracle::{find_witness, SearchBounds, Witness};
use xupol_core::policy::{parse_policy, render_policy, Policy};
use xupol_core::repair::{repair, Strategy, Tiebreak};
use xupol_core::schema::{parse_dtd, Dtd};
use xupol_core::tree::format_tree_literal;
use xupol_core::update::{apply, format_op};

pub mod report;

use report::Val;

#[derive(Parser, Debug)]
#[command(
    name = "xupol",
    about = "Consistency analysis and repair for XML update access policies",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Args, Debug)]
pub struct CommonFlags {
    /// Report format.
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Include wall-clock timing in the report (not byte-deterministic).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decide whether a policy is consistent; list every violation.
    Check {
        dtd: PathBuf,
        policy: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Extend a policy to its least-privilege consistent total form.
    Extend {
        dtd: PathBuf,
        policy: PathBuf,
        /// Write the extended policy to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Restore consistency by revoking a small set of allowed privileges.
    Repair {
        dtd: PathBuf,
        policy: PathBuf,
        /// Produce a total repair (forbid everything not allowed). Default.
        #[arg(long, conflicts_with = "partial")]
        total: bool,
        /// Produce a partial repair (keep the forbid set unchanged).
        #[arg(long)]
        partial: bool,
        #[arg(long, value_enum, default_value = "setcover")]
        strategy: StrategyArg,
        /// Maximum justifications kept per edge or vertex (setcover only).
        #[arg(long, default_value_t = 1)]
        mnj: usize,
        /// Comma-separated tiebreak spec: prefer-delete | prefer-insert,
        /// first-edge | second-edge, or seeded.
        #[arg(long, default_value = "prefer-delete,first-edge")]
        tiebreak: String,
        /// Seed for the seeded tiebreak.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the repaired policy to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Search bounded instances for a concrete inconsistency witness.
    Oracle {
        dtd: PathBuf,
        policy: PathBuf,
        /// Largest tree (in nodes) to consider.
        #[arg(long, default_value_t = 8)]
        max_nodes: usize,
        /// Longest allowed sequence to consider.
        #[arg(long, default_value_t = 3)]
        max_seq: usize,
        /// Largest inserted or replacing subtree (in nodes).
        #[arg(long, default_value_t = 3)]
        max_insert: usize,
        /// Comma-separated text value alphabet.
        #[arg(long, default_value = "s")]
        alphabet: String,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Parse and validate a DTD file.
    ValidateDtd {
        dtd: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Parse and validate a policy file against a DTD.
    ValidatePolicy {
        dtd: PathBuf,
        policy: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Naive,
    Setcover,
}

/// Result of one command run: exit code plus captured streams.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_from_env() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    let outcome = execute(args);
    print!("{}", outcome.stdout);
    eprint!("{}", outcome.stderr);
    outcome.code
}

/// Parses arguments (including the binary name) and runs the command.
pub fn execute<I, S>(args: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            return Outcome {
                code: if is_help { 0 } else { 2 },
                stdout: if is_help { e.to_string() } else { String::new() },
                stderr: if is_help { String::new() } else { e.to_string() },
            };
        }
    };
    run(cli)
}

struct Ctx {
    started: std::time::Instant,
}

impl Ctx {
    fn new() -> Self {
        Ctx {
            started: std::time::Instant::now(),
        }
    }

    fn finish(&self, common: &CommonFlags, code: i32, mut fields: Vec<(String, Val)>) -> Outcome {
        if common.timing {
            fields.push((
                "timing_ms".into(),
                Val::Int(self.started.elapsed().as_millis() as i64),
            ));
        }
        let doc = Val::Map(fields);
        let mut stdout = match common.format {
            Format::Text => doc.to_text(),
            Format::Json => doc.to_json(),
        };
        if !stdout.ends_with('\n') {
            stdout.push('\n');
        }
        Outcome {
            code,
            stdout,
            stderr: String::new(),
        }
    }
}

fn input_error(msg: String) -> Outcome {
    Outcome {
        code: 2,
        stdout: String::new(),
        stderr: format!("error: {msg}\n"),
    }
}

fn internal_error(msg: String) -> Outcome {
    Outcome {
        code: 3,
        stdout: String::new(),
        stderr: format!("internal error: {msg}\n"),
    }
}

fn read_file(path: &Path) -> Result<String, Outcome> {
    std::fs::read_to_string(path)
        .map_err(|e| input_error(format!("cannot read `{}`: {e}", path.display())))
}

fn digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn inputs_field(files: &[(&Path, &str)]) -> (String, Val) {
    let items = files
        .iter()
        .map(|(path, text)| {
            Val::Map(vec![
                ("path".into(), Val::Str(path.display().to_string())),
                ("sha256".into(), Val::Str(digest(text))),
            ])
        })
        .collect();
    ("inputs".into(), Val::List(items))
}

fn load_dtd(path: &Path) -> Result<(Dtd, String), Outcome> {
    let text = read_file(path)?;
    let dtd = parse_dtd(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    Ok((dtd, text))
}

fn load_policy(path: &Path, dtd: &Dtd) -> Result<(Policy, String), Outcome> {
    let text = read_file(path)?;
    let policy =
        parse_policy(&text, dtd).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    Ok((policy, text))
}

fn violation_val(v: &Violation) -> Val {
    let arrow = |items: &[xupol_core::ElementType]| -> String {
        items
            .iter()
            .map(|e| e.name().to_string())
            .collect::<Vec<_>>()
            .join(" -> ")
    };
    match v {
        Violation::InsDel {
            ctx,
            star_child,
            witness_forbidden,
        } => Val::Map(vec![
            ("class".into(), Val::Int(1)),
            ("kind".into(), Val::Str("insert-delete".into())),
            ("context".into(), Val::Str(ctx.name().into())),
            ("star_child".into(), Val::Str(star_child.name().into())),
            (
                "forbidden_below".into(),
                Val::Str(witness_forbidden.to_string()),
            ),
        ]),
        Violation::ForbiddenTransitivity { ctx, from, to, path } => Val::Map(vec![
            ("class".into(), Val::Int(2)),
            ("kind".into(), Val::Str("forbidden-transitivity".into())),
            ("context".into(), Val::Str(ctx.name().into())),
            (
                "edge".into(),
                Val::Str(format!("{} -> {}", from.name(), to.name())),
            ),
            ("allowed_path".into(), Val::Str(arrow(path))),
        ]),
        Violation::NegativeCycle {
            ctx,
            vertex,
            cycle,
            witness_forbidden,
        } => Val::Map(vec![
            ("class".into(), Val::Int(3)),
            ("kind".into(), Val::Str("negative-cycle".into())),
            ("context".into(), Val::Str(ctx.name().into())),
            ("vertex".into(), Val::Str(vertex.name().into())),
            ("cycle".into(), Val::Str(arrow(cycle))),
            (
                "forbidden_below".into(),
                Val::Str(witness_forbidden.to_string()),
            ),
        ]),
    }
}

fn uat_list(uats: &BTreeSet<xupol_core::Uat>) -> Val {
    Val::List(uats.iter().map(|u| Val::Str(u.to_string())).collect())
}

fn write_output(path: &Path, content: &str) -> Result<Val, Outcome> {
    std::fs::write(path, content)
        .map_err(|e| input_error(format!("cannot write `{}`: {e}", path.display())))?;
    Ok(Val::Map(vec![
        ("path".into(), Val::Str(path.display().to_string())),
        ("sha256".into(), Val::Str(digest(content))),
    ]))
}

fn witness_val(w: &Witness) -> Val {
    let mut seq_items = Vec::new();
    let mut cur = w.tree.clone();
    for op in &w.allowed_seq {
        seq_items.push(Val::Str(format_op(op, &cur)));
        cur = apply(op, &cur).expect("witness sequence is valid");
    }
    Val::Map(vec![
        ("tree".into(), Val::Str(format_tree_literal(&w.tree))),
        (
            "forbidden".into(),
            Val::Str(format_op(&w.forbidden_op, &w.tree)),
        ),
        ("allowed_sequence".into(), Val::List(seq_items)),
    ])
}

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Check { dtd, policy, common } => cmd_check(&dtd, &policy, &common),
        Command::Extend {
            dtd,
            policy,
            out,
            common,
        } => cmd_extend(&dtd, &policy, out.as_deref(), &common),
        Command::Repair {
            dtd,
            policy,
            total: _,
            partial,
            strategy,
            mnj,
            tiebreak,
            seed,
            out,
            common,
        } => cmd_repair(RepairArgs {
            dtd_path: &dtd,
            policy_path: &policy,
            total: !partial,
            strategy,
            mnj,
            tiebreak_spec: &tiebreak,
            seed,
            out: out.as_deref(),
            common: &common,
        }),
        Command::Oracle {
            dtd,
            policy,
            max_nodes,
            max_seq,
            max_insert,
            alphabet,
            common,
        } => cmd_oracle(&dtd, &policy, max_nodes, max_seq, max_insert, &alphabet, &common),
        Command::ValidateDtd { dtd, common } => cmd_validate_dtd(&dtd, &common),
        Command::ValidatePolicy { dtd, policy, common } => {
            cmd_validate_policy(&dtd, &policy, &common)
        }
    }
}

fn cmd_check(dtd_path: &Path, policy_path: &Path, common: &CommonFlags) -> Outcome {
    let ctx = Ctx::new();
    let (dtd, dtd_text) = match load_dtd(dtd_path) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let (policy, policy_text) = match load_policy(policy_path, &dtd) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let verdict = check_consistency(&dtd, &policy);
    let fields = vec![
        ("command".into(), Val::Str("check".into())),
        inputs_field(&[(dtd_path, &dtd_text), (policy_path, &policy_text)]),
        (
            "policy_mode".into(),
            Val::Str(if policy.is_total(&dtd) { "total" } else { "partial" }.into()),
        ),
        (
            "verdict".into(),
            Val::Str(
                if verdict.consistent {
                    "consistent"
                } else {
                    "inconsistent"
                }
                .into(),
            ),
        ),
        (
            "violation_count".into(),
            Val::Int(verdict.violations.len() as i64),
        ),
        (
            "violations".into(),
            Val::List(verdict.violations.iter().map(violation_val).collect()),
        ),
    ];
    let code = i32::from(!verdict.consistent);
    ctx.finish(common, code, fields)
}

fn cmd_extend(
    dtd_path: &Path,
    policy_path: &Path,
    out: Option<&Path>,
    common: &CommonFlags,
) -> Outcome {
    let ctx = Ctx::new();
    let (dtd, dtd_text) = match load_dtd(dtd_path) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let (policy, policy_text) = match load_policy(policy_path, &dtd) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let mut fields = vec![
        ("command".into(), Val::Str("extend".into())),
        inputs_field(&[(dtd_path, &dtd_text), (policy_path, &policy_text)]),
    ];
    match lpce(&dtd, &policy) {
        LpceOutcome::NotQuasiconsistent { witness } => {
            fields.push(("outcome".into(), Val::Str("no-consistent-extension".into())));
            fields.push(("witness".into(), Val::Str(witness.to_string())));
            ctx.finish(common, 1, fields)
        }
        LpceOutcome::Extended(q) => {
            let rendered = render_policy(&q, &dtd);
            fields.push(("outcome".into(), Val::Str("extended".into())));
            fields.push(("allow_count".into(), Val::Int(q.allow.len() as i64)));
            fields.push(("forbid_count".into(), Val::Int(q.forbid.len() as i64)));
            fields.push((
                "granted_beyond_input".into(),
                uat_list(&q.allow.difference(&policy.allow).cloned().collect()),
            ));
            match out {
                Some(path) => match write_output(path, &rendered) {
                    Ok(v) => fields.push(("output".into(), v)),
                    Err(o) => return o,
                },
                None => fields.push(("policy".into(), Val::Str(rendered))),
            }
            ctx.finish(common, 0, fields)
        }
    }
}

struct RepairArgs<'a> {
    dtd_path: &'a Path,
    policy_path: &'a Path,
    total: bool,
    strategy: StrategyArg,
    mnj: usize,
    tiebreak_spec: &'a str,
    seed: u64,
    out: Option<&'a Path>,
    common: &'a CommonFlags,
}

fn cmd_repair(args: RepairArgs<'_>) -> Outcome {
    let ctx = Ctx::new();
    let (dtd, dtd_text) = match load_dtd(args.dtd_path) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let (policy, policy_text) = match load_policy(args.policy_path, &dtd) {
        Ok(x) => x,
        Err(o) => return o,
    };
    if args.mnj == 0 {
        return input_error("--mnj must be at least 1 (use --strategy naive instead)".into());
    }
    let tiebreak = match Tiebreak::parse(args.tiebreak_spec, args.seed) {
        Ok(tb) => tb,
        Err(e) => return input_error(e),
    };
    let strategy = match args.strategy {
        StrategyArg::Naive => Strategy::Naive,
        StrategyArg::Setcover => Strategy::SetCover { mnj: args.mnj },
    };
    let result = match repair(&dtd, &policy, args.total, strategy, tiebreak) {
        Ok(r) => r,
        Err(e) => return internal_error(e.to_string()),
    };
    let rendered = render_policy(&result.repaired, &dtd);
    let mut fields = vec![
        ("command".into(), Val::Str("repair".into())),
        inputs_field(&[(args.dtd_path, &dtd_text), (args.policy_path, &policy_text)]),
        (
            "mode".into(),
            Val::Str(if args.total { "total" } else { "partial" }.into()),
        ),
        ("strategy".into(), Val::Str(result.strategy.to_string())),
        ("tiebreak".into(), Val::Str(result.tiebreak.to_string())),
        ("seed".into(), Val::Int(args.seed as i64)),
        ("rounds".into(), Val::Int(result.rounds as i64)),
        (
            "removed_count".into(),
            Val::Int(result.removed.len() as i64),
        ),
        ("removed".into(), uat_list(&result.removed)),
        (
            "remaining_allow_count".into(),
            Val::Int(result.repaired.allow.len() as i64),
        ),
    ];
    match args.out {
        Some(path) => match write_output(path, &rendered) {
            Ok(v) => fields.push(("output".into(), v)),
            Err(o) => return o,
        },
        None => fields.push(("policy".into(), Val::Str(rendered))),
    }
    ctx.finish(args.common, 0, fields)
}

fn cmd_oracle(
    dtd_path: &Path,
    policy_path: &Path,
    max_nodes: usize,
    max_seq: usize,
    max_insert: usize,
    alphabet: &str,
    common: &CommonFlags,
) -> Outcome {
    let ctx = Ctx::new();
    let (dtd, dtd_text) = match load_dtd(dtd_path) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let (policy, policy_text) = match load_policy(policy_path, &dtd) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let values: Vec<String> = alphabet.split(',').map(|s| s.to_string()).collect();
    if values.is_empty() || max_nodes == 0 || max_insert == 0 {
        return input_error("oracle bounds must be positive and the alphabet nonempty".into());
    }
    let bounds = SearchBounds {
        max_tree_nodes: max_nodes,
        max_seq_len: max_seq,
        max_insert_nodes: max_insert,
        value_alphabet: values,
    };
    let mut fields = vec![
        ("command".into(), Val::Str("oracle".into())),
        inputs_field(&[(dtd_path, &dtd_text), (policy_path, &policy_text)]),
        (
            "bounds".into(),
            Val::Map(vec![
                ("max_nodes".into(), Val::Int(max_nodes as i64)),
                ("max_seq".into(), Val::Int(max_seq as i64)),
                ("max_insert".into(), Val::Int(max_insert as i64)),
                ("alphabet".into(), Val::Str(alphabet.into())),
            ]),
        ),
    ];
    match find_witness(&dtd, &policy, &bounds) {
        Some(w) => {
            fields.push(("outcome".into(), Val::Str("witness-found".into())));
            fields.push(("witness".into(), witness_val(&w)));
            ctx.finish(common, 1, fields)
        }
        None => {
            fields.push((
                "outcome".into(),
                Val::Str("no-witness-within-bounds".into()),
            ));
            // A bounded search that comes up empty says nothing beyond the
            // bounds; flag the truncation explicitly.
            fields.push(("search_truncated".into(), Val::Bool(true)));
            ctx.finish(common, 0, fields)
        }
    }
}

fn cmd_validate_dtd(dtd_path: &Path, common: &CommonFlags) -> Outcome {
    let ctx = Ctx::new();
    let text = match read_file(dtd_path) {
        Ok(t) => t,
        Err(o) => return o,
    };
    match parse_dtd(&text) {
        Ok(dtd) => {
            let fields = vec![
                ("command".into(), Val::Str("validate-dtd".into())),
                inputs_field(&[(dtd_path, &text)]),
                ("status".into(), Val::Str("ok".into())),
                ("root".into(), Val::Str(dtd.root().name().into())),
                (
                    "element_count".into(),
                    Val::Int(dtd.elements().count() as i64),
                ),
            ];
            ctx.finish(common, 0, fields)
        }
        Err(e) => input_error(format!("{}: {e}", dtd_path.display())),
    }
}

fn cmd_validate_policy(dtd_path: &Path, policy_path: &Path, common: &CommonFlags) -> Outcome {
    let ctx = Ctx::new();
    let (dtd, dtd_text) = match load_dtd(dtd_path) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let (policy, policy_text) = match load_policy(policy_path, &dtd) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let fields = vec![
        ("command".into(), Val::Str("validate-policy".into())),
        inputs_field(&[(dtd_path, &dtd_text), (policy_path, &policy_text)]),
        ("status".into(), Val::Str("ok".into())),
        (
            "mode".into(),
            Val::Str(if policy.is_total(&dtd) { "total" } else { "partial" }.into()),
        ),
        ("allow_count".into(), Val::Int(policy.allow.len() as i64)),
        ("forbid_count".into(), Val::Int(policy.forbid.len() as i64)),
    ];
    ctx.finish(common, 0, fields)
}
