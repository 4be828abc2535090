//! Command-line front end: parses fixture files, runs seeded executions,
//! explores interleavings with audits, checks refinement and proof
//! derivations, and enumerates abstract traces. Exit codes: 0 pass/accepted,
//! 1 fail/rejected, 2 inconclusive, 3 usage error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

use crate::assertion::{CheckError, Domains};
use crate::ats::{enumerate_traces, stutter_close};
use crate::explorer::{
    audit_erasure, audit_lock_invariants, audit_safety, check_refsucc, check_trace_inclusion,
    explore, graph_json, initial_configs, AuditResult, ExploreOpts, Graph, NodeKind,
};
use crate::proof::{
    check_derivation, derivation_from_json, derivation_to_json, elaborate_outline, CheckResult,
    DerivationNode, Reason,
};
use crate::semantics::{step, Next, StepOpts};
use crate::syntax::ast::{AtsSpec, Command, Program};
use crate::syntax::parser::{parse_ats, parse_program};
use crate::syntax::pretty::{ats_to_string, program_to_string};
use crate::syntax::wellformed::check_program;
use crate::value::Addr;

/// Version stamp carried by every JSON report.
pub const SCHEMA_VERSION: u64 = 1;

const EXIT_PASS: i32 = 0;
const EXIT_FAIL: i32 = 1;
const EXIT_INCONCLUSIVE: i32 = 2;
const EXIT_USAGE: i32 = 3;

/// Evaluation budget for assertion queries issued by CLI commands.
const CLI_BUDGET: u64 = 500_000_000;

#[derive(Parser)]
#[command(
    name = "refine",
    version,
    about = "Refinement workbench: bounded checking of concurrent heap programs \
             against abstract transition systems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse inputs, report warnings, and dump normalized sources
    Parse(CommonArgs),
    /// Run one seeded scheduled execution of a program
    Run(CommonArgs),
    /// Explore the interleaving graph and run audits
    Explore(CommonArgs),
    /// Check that a program refines an abstract system
    CheckRefinement(CommonArgs),
    /// Check a proof derivation (from a file or elaborated from a program)
    CheckProof(CommonArgs),
    /// List the bounded observable traces of an abstract system
    EnumerateAts(EnumerateArgs),
    /// Build a candidate derivation from an annotated program
    Elaborate(CommonArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct CommonArgs {
    /// Program source file (.rimp)
    #[arg(long)]
    program: Option<PathBuf>,
    /// Abstract transition system file (.rats)
    #[arg(long)]
    ats: Option<PathBuf>,
    /// Derivation file (.rderiv)
    #[arg(long)]
    derivation: Option<PathBuf>,
    /// Depth bound on explored executions
    #[arg(long, default_value_t = 64)]
    max_steps: usize,
    /// Bound on observation-sequence length
    #[arg(long, default_value_t = 6)]
    max_trace_len: usize,
    /// Integer value domain, inclusive (e.g. -4..8)
    #[arg(long, default_value = "-4..8", value_parser = parse_int_range)]
    int_range: (i64, i64),
    /// Number of ordinary (non-ghost) addresses
    #[arg(long, default_value_t = 4)]
    addr_count: u64,
    /// Maximum sequence-value length
    #[arg(long, default_value_t = 6)]
    max_seq_len: usize,
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Seed for the scheduled `run` command
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the abstract system as written instead of stutter-closing it
    #[arg(long)]
    no_stutter_close: bool,
    /// Audits to run: all, none, or a comma list of safety,locks,erasure
    #[arg(long, default_value = "all")]
    audits: String,
    /// Worker threads for graph exploration
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct EnumerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trace length bound for the listing
    #[arg(long, default_value_t = 3)]
    max_len: usize,
}

fn parse_int_range(s: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected LO..HI, got `{s}`"))?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("bad LO: {e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("bad HI: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

/// A usage-level failure: reported on stderr, exit code 3.
#[derive(Debug)]
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Usage {
        Usage(e.to_string())
    }
}

pub fn run_cli() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_PASS,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let out = match cli.cmd {
        Cmd::Parse(a) => cmd_parse(&a),
        Cmd::Run(a) => cmd_run(&a),
        Cmd::Explore(a) => cmd_explore(&a),
        Cmd::CheckRefinement(a) => cmd_check_refinement(&a),
        Cmd::CheckProof(a) => cmd_check_proof(&a),
        Cmd::EnumerateAts(a) => cmd_enumerate_ats(&a),
        Cmd::Elaborate(a) => cmd_elaborate(&a),
    };
    match out {
        Ok(code) => code,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

// ----- shared plumbing ---------------------------------------------------------

fn read(path: &Path) -> Result<String, Usage> {
    std::fs::read_to_string(path)
        .map_err(|e| Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_program(a: &CommonArgs) -> Result<Program, Usage> {
    let path = a
        .program
        .as_ref()
        .ok_or_else(|| Usage("--program is required".into()))?;
    let src = read(path)?;
    parse_program(&src).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn load_ats(a: &CommonArgs) -> Result<AtsSpec, Usage> {
    let path = a
        .ats
        .as_ref()
        .ok_or_else(|| Usage("--ats is required".into()))?;
    let src = read(path)?;
    parse_ats(&src).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn spec_for_checking(a: &CommonArgs, spec: &AtsSpec) -> AtsSpec {
    if a.no_stutter_close {
        spec.clone()
    } else {
        stutter_close(spec)
    }
}

fn domains(a: &CommonArgs, ghost_addrs: Vec<Addr>) -> Domains {
    Domains {
        int_min: a.int_range.0,
        int_max: a.int_range.1,
        addr_count: a.addr_count,
        max_seq_len: a.max_seq_len,
        max_heap_cells: a.addr_count as usize + ghost_addrs.len(),
        ghost_addrs,
        budget: CLI_BUDGET,
    }
}

fn explore_opts(a: &CommonArgs) -> ExploreOpts {
    ExploreOpts {
        max_steps: a.max_steps,
        max_trace_len: a.max_trace_len,
        workers: a.workers.max(1),
        step: StepOpts {
            addr_count: a.addr_count,
            ..StepOpts::default()
        },
        ..ExploreOpts::default()
    }
}

/// Which audits a selection string enables.
fn audit_selection(s: &str) -> Result<(bool, bool, bool), Usage> {
    match s {
        "all" => return Ok((true, true, true)),
        "none" => return Ok((false, false, false)),
        _ => {}
    }
    let (mut safety, mut locks, mut erasure) = (false, false, false);
    for part in s.split(',') {
        match part.trim() {
            "safety" => safety = true,
            "locks" => locks = true,
            "erasure" => erasure = true,
            other => {
                return Err(Usage(format!(
                    "unknown audit `{other}` (expected safety, locks, erasure)"
                )))
            }
        }
    }
    Ok((safety, locks, erasure))
}

fn audit_json(r: &AuditResult) -> Json {
    match r {
        AuditResult::Pass { warnings } => json!({"result": "pass", "warnings": warnings}),
        AuditResult::Fail { detail } => json!({"result": "fail", "detail": detail}),
        AuditResult::Skipped { reason } => json!({"result": "skipped", "reason": reason}),
    }
}

fn report(a_format: Format, command: &str, verdict: &str, body: Json) -> String {
    match a_format {
        Format::Json => {
            let mut obj = json!({
                "schema_version": SCHEMA_VERSION,
                "command": command,
                "verdict": verdict,
            });
            if let (Json::Object(o), Json::Object(extra)) = (&mut obj, body) {
                o.extend(extra);
            }
            serde_json::to_string_pretty(&obj).expect("report serializes")
        }
        Format::Text => {
            let mut out = format!("{command}: {verdict}\n");
            if let Json::Object(o) = body {
                for (k, v) in o {
                    out.push_str(&format!("  {k}: {v}\n"));
                }
            }
            out.trim_end().to_string()
        }
    }
}

fn verdict_code(verdict: &str) -> i32 {
    match verdict {
        "pass" | "accepted" => EXIT_PASS,
        "inconclusive" => EXIT_INCONCLUSIVE,
        _ => EXIT_FAIL,
    }
}

// ----- subcommands -------------------------------------------------------------

fn cmd_parse(a: &CommonArgs) -> Result<i32, Usage> {
    if a.program.is_none() && a.ats.is_none() && a.derivation.is_none() {
        return Err(Usage(
            "give at least one of --program, --ats, --derivation".into(),
        ));
    }
    let mut body = serde_json::Map::new();
    if a.program.is_some() {
        let p = load_program(a)?;
        let warnings: Vec<String> = check_program(&p).iter().map(|w| w.to_string()).collect();
        body.insert(
            "program".into(),
            json!({"normalized": program_to_string(&p), "warnings": warnings}),
        );
    }
    if a.ats.is_some() {
        let spec = load_ats(a)?;
        body.insert("ats".into(), json!({"normalized": ats_to_string(&spec)}));
    }
    if let Some(path) = &a.derivation {
        let root = derivation_from_json(&read(path)?)
            .map_err(|e| Usage(format!("{}: {e}", path.display())))?;
        body.insert(
            "derivation".into(),
            json!({"root_rule": root.rule.name(), "nodes": count_nodes(&root)}),
        );
    }
    println!("{}", report(a.format, "parse", "pass", Json::Object(body)));
    Ok(EXIT_PASS)
}

fn count_nodes(n: &DerivationNode) -> usize {
    1 + n.children.iter().map(count_nodes).sum::<usize>()
}

fn cmd_run(a: &CommonArgs) -> Result<i32, Usage> {
    let p = load_program(a)?;
    let d = domains(a, p.ghost_addrs());
    let opts = explore_opts(a);
    let starts = initial_configs(&p, &d).map_err(|e| Usage(e.to_string()))?;
    if starts.is_empty() {
        return Err(Usage(
            "no initial state satisfies the precondition within the domains".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (mut stack, mut heap) = starts[rng.gen_range(0..starts.len())].clone();
    let mut cmd: Option<Command> = Some(p.body.clone());
    let mut transcript = Vec::new();
    let mut status = "done";
    for step_no in 0..a.max_steps {
        let Some(c) = &cmd else { break };
        let succs = step(c, &stack, &heap, &BTreeSet::new(), &opts.step);
        if succs.is_empty() {
            status = "blocked";
            break;
        }
        let (label, next) = &succs[rng.gen_range(0..succs.len())];
        transcript.push(json!({
            "step": step_no,
            "rule": label.path.join("/"),
            "prints": label.prints,
        }));
        match next {
            Next::Run(c2, s2, h2) => {
                cmd = Some(c2.clone());
                stack = s2.clone();
                heap = h2.clone();
            }
            Next::Done(s2, h2) => {
                stack = s2.clone();
                heap = h2.clone();
                cmd = None;
            }
            Next::Abort => {
                status = "abort";
                cmd = None;
            }
        }
    }
    if cmd.is_some() && status == "done" {
        status = "step-budget-exhausted";
    }
    let verdict = match status {
        "abort" => "fail",
        "done" => "pass",
        _ => "inconclusive",
    };
    let body = json!({
        "seed": a.seed,
        "status": status,
        "steps": transcript.len(),
        "transcript": transcript,
        "final_stack": stack.to_json(),
        "final_heap": heap.to_json(),
    });
    println!("{}", report(a.format, "run", verdict, body));
    Ok(verdict_code(verdict))
}

/// Explores the graph and runs the selected audits; shared by `explore`
/// and `check-refinement`.
fn explored_with_audits(
    a: &CommonArgs,
    p: &Program,
    d: &Domains,
) -> Result<(Graph, serde_json::Map<String, Json>, bool, bool), Usage> {
    let opts = explore_opts(a);
    let g = explore(p, d, &opts).map_err(|e| Usage(e.to_string()))?;
    let (want_safety, want_locks, want_erasure) = audit_selection(&a.audits)?;
    let mut audits = serde_json::Map::new();
    let mut all_ok = true;
    let mut inconclusive = g.truncated;
    let mut record = |name: &str, r: Result<AuditResult, CheckError>| match r {
        Ok(res) => {
            all_ok &= res.ok();
            audits.insert(name.into(), audit_json(&res));
        }
        Err(e) => {
            inconclusive = true;
            audits.insert(name.into(), json!({"result": "inconclusive", "detail": e.to_string()}));
        }
    };
    if want_safety {
        record("safety", audit_safety(&g, p, d));
    }
    if want_locks {
        record("locks", audit_lock_invariants(&g, p, d));
    }
    if want_erasure {
        let starts = initial_configs(p, d).map_err(|e| Usage(e.to_string()))?;
        record("erasure", Ok(audit_erasure(&g, p, &starts, &opts)));
    }
    Ok((g, audits, all_ok, inconclusive))
}

fn cmd_explore(a: &CommonArgs) -> Result<i32, Usage> {
    let p = load_program(a)?;
    let d = domains(a, p.ghost_addrs());
    let (g, audits, all_ok, inconclusive) = explored_with_audits(a, &p, &d)?;
    let aborts = g
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Abort))
        .count();
    let verdict = if inconclusive {
        "inconclusive"
    } else if all_ok {
        "pass"
    } else {
        "fail"
    };
    let body = json!({
        "nodes": g.nodes.len(),
        "edges": g.edges.len(),
        "initial": g.initial.len(),
        "aborts": aborts,
        "truncated": g.truncated,
        "audits": audits,
        "graph": graph_json(&g),
    });
    println!("{}", report(a.format, "explore", verdict, body));
    Ok(verdict_code(verdict))
}

fn cmd_check_refinement(a: &CommonArgs) -> Result<i32, Usage> {
    let p = load_program(a)?;
    let spec = load_ats(a)?;
    let closed = spec_for_checking(a, &spec);
    let d = domains(a, p.ghost_addrs());
    let (g, audits, audits_ok, mut inconclusive) = explored_with_audits(a, &p, &d)?;

    let mut body = serde_json::Map::new();
    let refsucc_ok = match check_refsucc(&g, &closed, &d) {
        Ok(violations) if violations.is_empty() => {
            body.insert("refsucc".into(), json!({"result": "pass"}));
            Some(true)
        }
        Ok(violations) => {
            let vs: Vec<Json> = violations
                .iter()
                .map(|v| {
                    json!({
                        "edge": v.edge,
                        "kind": v.kind,
                        "from_state": v.from_state,
                        "to_state": v.to_state,
                        "path": v.path,
                    })
                })
                .collect();
            body.insert("refsucc".into(), json!({"result": "fail", "violations": vs}));
            Some(false)
        }
        Err(e) => {
            inconclusive = true;
            body.insert(
                "refsucc".into(),
                json!({"result": "inconclusive", "detail": e.to_string()}),
            );
            None
        }
    };
    let inclusion_ok = match check_trace_inclusion(&g, &closed, &d) {
        Ok(None) => {
            body.insert("trace_inclusion".into(), json!({"result": "pass"}));
            Some(true)
        }
        Ok(Some(cex)) => {
            body.insert(
                "trace_inclusion".into(),
                json!({"result": "fail", "trace": cex.trace, "path": cex.path}),
            );
            Some(false)
        }
        Err(e) => {
            inconclusive = true;
            body.insert(
                "trace_inclusion".into(),
                json!({"result": "inconclusive", "detail": e.to_string()}),
            );
            None
        }
    };
    // soundness cross-check: a refsucc pass must never coexist with a
    // trace-inclusion counterexample on the same budgets
    let cross = match (refsucc_ok, inclusion_ok) {
        (Some(true), Some(false)) => "violated",
        (None, _) | (_, None) => "skipped",
        _ => "ok",
    };
    body.insert("cross_check".into(), json!(cross));
    if cross == "violated" {
        inconclusive = true;
    }

    let pass = refsucc_ok == Some(true) && inclusion_ok == Some(true) && audits_ok;
    let verdict = if cross == "violated" {
        "inconclusive"
    } else if refsucc_ok == Some(false) || inclusion_ok == Some(false) || !audits_ok {
        "fail"
    } else if inconclusive || !pass {
        "inconclusive"
    } else {
        "pass"
    };
    body.insert("audits".into(), Json::Object(audits));
    body.insert(
        "graph".into(),
        json!({"nodes": g.nodes.len(), "edges": g.edges.len(), "truncated": g.truncated}),
    );
    println!(
        "{}",
        report(a.format, "check-refinement", verdict, Json::Object(body))
    );
    Ok(verdict_code(verdict))
}

fn load_or_elaborate_derivation(
    a: &CommonArgs,
    spec: Option<&AtsSpec>,
    d: &Domains,
) -> Result<DerivationNode, Usage> {
    if let Some(path) = &a.derivation {
        return derivation_from_json(&read(path)?)
            .map_err(|e| Usage(format!("{}: {e}", path.display())));
    }
    if a.program.is_some() {
        let p = load_program(a)?;
        return elaborate_outline(&p, spec, d).map_err(|e| Usage(e.to_string()));
    }
    Err(Usage("give --derivation or --program".into()))
}

fn cmd_check_proof(a: &CommonArgs) -> Result<i32, Usage> {
    let spec = match &a.ats {
        Some(_) => Some(spec_for_checking(a, &load_ats(a)?)),
        None => None,
    };
    // ghost cells referenced by the derivation/program determine the domain
    let ghost_addrs = if a.program.is_some() {
        load_program(a)?.ghost_addrs()
    } else {
        let mut out = vec![Addr::stdout()];
        if let Some(s) = &spec {
            out = s.ghost_addrs();
        }
        out
    };
    let d = domains(a, ghost_addrs);
    let root = load_or_elaborate_derivation(a, spec.as_ref(), &d)?;
    let result = check_derivation(&root, spec.as_ref(), &d);
    let (verdict, body) = match &result {
        CheckResult::Accepted => ("accepted", json!({"nodes": count_nodes(&root)})),
        CheckResult::Rejected { path, reason } => {
            let verdict = if matches!(reason, Reason::EntailmentInconclusive(_)) {
                "inconclusive"
            } else {
                "rejected"
            };
            (
                verdict,
                json!({
                    "path": path,
                    "reason": reason.code(),
                    "detail": reason.detail(),
                }),
            )
        }
    };
    println!("{}", report(a.format, "check-proof", verdict, body));
    Ok(verdict_code(verdict))
}

fn cmd_enumerate_ats(e: &EnumerateArgs) -> Result<i32, Usage> {
    let a = &e.common;
    let spec = load_ats(a)?;
    let closed = spec_for_checking(a, &spec);
    let d = domains(a, closed.ghost_addrs());
    let traces = enumerate_traces(&closed, &d, e.max_len).map_err(|e| Usage(e.to_string()))?;
    let listing: Vec<Json> = traces
        .iter()
        .map(|t| serde_json::to_value(t).expect("values serialize"))
        .collect();
    let body = json!({"max_len": e.max_len, "count": listing.len(), "traces": listing});
    println!("{}", report(a.format, "enumerate-ats", "pass", body));
    Ok(EXIT_PASS)
}

fn cmd_elaborate(a: &CommonArgs) -> Result<i32, Usage> {
    let p = load_program(a)?;
    let spec = match &a.ats {
        Some(_) => Some(spec_for_checking(a, &load_ats(a)?)),
        None => None,
    };
    let d = domains(a, p.ghost_addrs());
    match elaborate_outline(&p, spec.as_ref(), &d) {
        Ok(root) => {
            let ghosts: BTreeSet<String> = p.ghost_vars.iter().cloned().collect();
            match a.format {
                Format::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&derivation_to_json(&root, &ghosts))
                        .expect("derivation serializes")
                ),
                Format::Text => println!(
                    "{}",
                    report(
                        a.format,
                        "elaborate",
                        "pass",
                        json!({"root_rule": root.rule.name(), "nodes": count_nodes(&root)}),
                    )
                ),
            }
            Ok(EXIT_PASS)
        }
        Err(e) => {
            let body = json!({"error": e.to_string()});
            println!("{}", report(a.format, "elaborate", "fail", body));
            Ok(EXIT_FAIL)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_range_parses_and_rejects() {
        assert_eq!(parse_int_range("-4..8").unwrap(), (-4, 8));
        assert_eq!(parse_int_range("0..0").unwrap(), (0, 0));
        assert!(parse_int_range("5..1").is_err());
        assert!(parse_int_range("abc").is_err());
    }

    #[test]
    fn audit_selection_forms() {
        assert_eq!(audit_selection("all").unwrap(), (true, true, true));
        assert_eq!(audit_selection("none").unwrap(), (false, false, false));
        assert_eq!(audit_selection("safety,erasure").unwrap(), (true, false, true));
        assert!(audit_selection("bogus").is_err());
    }

    #[test]
    fn verdicts_partition_exit_codes() {
        assert_eq!(verdict_code("pass"), 0);
        assert_eq!(verdict_code("accepted"), 0);
        assert_eq!(verdict_code("fail"), 1);
        assert_eq!(verdict_code("rejected"), 1);
        assert_eq!(verdict_code("inconclusive"), 2);
    }
}
