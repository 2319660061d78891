//! `formalex`: command-line entry points for the offline workflows and the
//! review service.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use clap::{Parser, Subcommand, ValueEnum};
use formalex_core::agent::{AgentConfig, RecordingAgent, RoleAgents, Transcript};
use formalex_core::templates::AgentRole;
use formalex_core::lint::{self, check_equivalence, EquivalenceMode, LintConfig, LintSubject, Severity};
use formalex_core::pipeline::{refine_loop, Outcome, RefineConfig};
use formalex_core::store::{Corpus, Payload, Sample, Status};
use formalex_core::templates::Templates;
use formalex_core::{validate, EvalOptions, Evaluator, FactSet, Predicate, RuleTree};
use formalex_service::{AgentFactory, AppState, ServiceConfig, Tokens, TOKENS_ENV};

#[derive(Parser)]
#[command(name = "formalex", version, about = "Defeasible rule trees: evaluation, linting and dataset curation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a rule tree.
    Validate { tree: PathBuf },
    /// Evaluate a rule tree against a fact set and print true or false.
    Eval {
        tree: PathBuf,
        facts: PathBuf,
        /// Predicate to evaluate instead of the first rule's head.
        #[arg(long)]
        target: Option<String>,
        /// Print the derivation trace after the value.
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Lint a rule tree, a sample file or a whole corpus.
    Lint {
        input: PathBuf,
        /// Exit with 1 when a finding at or above this severity is reported.
        #[arg(long, value_enum)]
        fail_on: Option<FailOn>,
    },
    /// Collapse pass-through chains and print the simplified tree.
    Simplify {
        tree: PathBuf,
        /// Also compare both trees on every fact subset.
        #[arg(long)]
        check: bool,
    },
    /// Drafter/verifier refinement.
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
    /// Move an auto-verified sample into the human review queue.
    Enqueue {
        #[arg(long, env = "FORMALEX_CORPUS")]
        corpus: PathBuf,
        /// Sample ids; all auto-verified samples when omitted.
        ids: Vec<String>,
    },
    /// Run the review service.
    Serve {
        #[arg(long, env = "FORMALEX_CORPUS")]
        corpus: PathBuf,
        #[arg(long, env = "FORMALEX_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
        /// Token list `token=role:id,...`; read from FORMALEX_TOKENS when omitted.
        #[arg(long)]
        tokens: Option<String>,
        /// Directory with the built review UI.
        #[arg(long, env = "FORMALEX_UI_DIR")]
        ui_dir: Option<PathBuf>,
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Write the curated subset as JSON lines.
    Export {
        #[arg(long, env = "FORMALEX_CORPUS")]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print corpus statistics as JSON.
    Stats {
        #[arg(long, env = "FORMALEX_CORPUS")]
        corpus: PathBuf,
    },
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Draft and verify samples for one article until accepted or out of rounds.
    Run {
        #[arg(long)]
        article: String,
        #[arg(long, env = "FORMALEX_CORPUS")]
        corpus: PathBuf,
        /// Replay a recorded transcript instead of calling the agent endpoint.
        #[arg(long)]
        mock: Option<PathBuf>,
        /// Save the agent replies of a live run as a transcript.
        #[arg(long, conflicts_with = "mock")]
        record: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        threshold: Option<u32>,
        #[arg(long)]
        templates: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FailOn {
    Info,
    Warning,
    Error,
}

impl FailOn {
    fn severity(self) -> Severity {
        match self {
            FailOn::Info => Severity::Info,
            FailOn::Warning => Severity::Warning,
            FailOn::Error => Severity::Error,
        }
    }
}

enum Failure {
    /// Exit 1: the input was read but did not pass.
    Domain(String),
    /// Exit 2: bad arguments or unreadable files.
    Usage(String),
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn domain(e: impl std::fmt::Display) -> Failure {
    Failure::Domain(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_tree(path: &Path) -> Result<RuleTree, Failure> {
    RuleTree::parse(&read(path)?).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn load_facts(path: &Path) -> Result<FactSet, Failure> {
    FactSet::parse(&read(path)?).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn load_templates(dir: Option<&Path>) -> Result<Templates, Failure> {
    match dir {
        Some(d) => Templates::load_dir(d).map_err(|e| usage(format!("cannot load templates from {}: {e}", d.display()))),
        None => Ok(Templates::default()),
    }
}

fn open_corpus(path: &Path) -> Result<Corpus, Failure> {
    Corpus::open(path).map_err(usage)
}

fn print_issues(out: &mut impl Write, report: &formalex_core::ValidationReport) -> io::Result<()> {
    for (kind, issues) in [("error", &report.errors), ("warning", &report.warnings), ("note", &report.notes)] {
        for issue in issues {
            writeln!(out, "{kind}\t{}\t{}\t{}", issue.code, issue.location, issue.message)?;
        }
    }
    Ok(())
}

fn cmd_validate(tree: &Path) -> CmdResult {
    let tree = load_tree(tree)?;
    let report = validate(&tree);
    let mut out = io::stdout().lock();
    print_issues(&mut out, &report).map_err(usage)?;
    if report.is_ok() {
        writeln!(out, "ok: {} rule(s)", tree.len()).map_err(usage)?;
        Ok(())
    } else {
        Err(domain(format!("{} validation error(s)", report.errors.len())))
    }
}

fn cmd_eval(tree: &Path, facts: &Path, target: Option<String>, trace: bool, budget: Option<usize>) -> CmdResult {
    let tree = load_tree(tree)?;
    let facts = load_facts(facts)?;
    let mut options = EvalOptions::default();
    if let Some(t) = target {
        options = options.with_target(Predicate::new(t).map_err(usage)?);
    }
    if let Some(b) = budget {
        options = options.with_budget(b);
    }
    let evaluator = Evaluator::new(&tree).map_err(|e| {
        if let formalex_core::EvalError::InvalidTree(report) = &e {
            let _ = print_issues(&mut io::stderr().lock(), report);
        }
        domain(e)
    })?;
    let result = evaluator.evaluate(&facts, &options).map_err(domain)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{}", result.value).map_err(usage)?;
    if trace {
        write!(out, "{}", result.trace.render(&tree, &result.target)).map_err(usage)?;
    }
    for w in &result.warnings {
        writeln!(out, "warning\t{}\t{}", w.code, w.predicate).map_err(usage)?;
    }
    Ok(())
}

/// The three lintable inputs: one sample object, a JSONL corpus, or a bare
/// rule tree (linted with no facts, label or question).
fn lint_inputs(path: &Path) -> Result<Vec<(String, Sample)>, Result<RuleTree, Failure>> {
    let Ok(text) = fs::read_to_string(path) else {
        return Err(Err(usage(format!("cannot read {}", path.display()))));
    };
    if let Ok(sample) = serde_json::from_str::<Sample>(&text) {
        return Ok(vec![(sample.id.to_string(), sample)]);
    }
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let looks_like_sample = serde_json::from_str::<serde_json::Value>(first)
        .map(|v| v.get("rule_tree").is_some())
        .unwrap_or(false);
    if looks_like_sample {
        return match Corpus::open(path) {
            Ok(c) => Ok(c.samples().iter().map(|s| (s.id.to_string(), s.clone())).collect()),
            Err(e) => Err(Err(domain(e))),
        };
    }
    Err(RuleTree::parse(&text).map_err(|e| domain(format!("{}: {e}", path.display()))))
}

fn cmd_lint(input: &Path, fail_on: Option<FailOn>) -> CmdResult {
    let config = LintConfig::default();
    let mut out = io::stdout().lock();
    let mut worst: Option<Severity> = None;
    let mut note = |findings: &[lint::Finding]| {
        for f in findings {
            worst = worst.max(Some(f.severity));
        }
    };
    match lint_inputs(input) {
        Ok(samples) => {
            let many = samples.len() > 1;
            for (id, s) in &samples {
                let findings = lint::lint(
                    LintSubject { tree: &s.rule_tree, facts: &s.facts, label: Some(s.label), question: &s.question },
                    &config,
                );
                note(&findings);
                for f in &findings {
                    if many {
                        write!(out, "{id}\t").map_err(usage)?;
                    }
                    writeln!(out, "{}", f.to_line()).map_err(usage)?;
                }
            }
        }
        Err(tree) => {
            let tree = tree?;
            let facts = FactSet::new();
            let findings = lint::lint(LintSubject { tree: &tree, facts: &facts, label: None, question: "" }, &config);
            note(&findings);
            write!(out, "{}", lint::report_lines(&findings)).map_err(usage)?;
        }
    }
    match (fail_on, worst) {
        (Some(threshold), Some(w)) if w >= threshold.severity() => {
            Err(domain(format!("findings at severity {w} or above")))
        }
        _ => Ok(()),
    }
}

fn cmd_simplify(tree: &Path, check: bool) -> CmdResult {
    let original = load_tree(tree)?;
    let simplified = lint::simplify(&original).map_err(domain)?;
    println!("{}", simplified.to_json_pretty());
    eprintln!("{} rule(s) -> {} rule(s)", original.len(), simplified.len());
    if check {
        let checked = check_equivalence(&original, &simplified, EquivalenceMode::Exhaustive).map_err(domain)?;
        eprintln!("check passed: {checked} fact subset(s) agree");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_pipeline_run(
    article: &str,
    corpus: &Path,
    mock: Option<&Path>,
    record: Option<&Path>,
    max_iters: Option<usize>,
    threshold: Option<u32>,
    templates: Option<&Path>,
) -> CmdResult {
    let mut config = RefineConfig::default();
    if let Some(n) = max_iters {
        if n == 0 {
            return Err(usage("--max-iters must be at least 1"));
        }
        config.max_iterations = n;
    }
    if let Some(t) = threshold {
        config.threshold = t;
    }
    let templates = load_templates(templates)?;
    let mut corpus = open_corpus(corpus)?;
    let log = Arc::new(Mutex::new(Transcript::default()));
    let agents = match mock {
        Some(path) => RoleAgents::scripted(&Transcript::parse(&read(path)?).map_err(usage)?),
        None => {
            let live = RoleAgents::remote(AgentConfig::from_env().map_err(usage)?);
            match record {
                Some(_) => RoleAgents {
                    drafter: Arc::new(RecordingAgent::new(live.drafter, AgentRole::Drafter, log.clone())),
                    scenario: Arc::new(RecordingAgent::new(live.scenario, AgentRole::Scenario, log.clone())),
                    legal: Arc::new(RecordingAgent::new(live.legal, AgentRole::Legal, log.clone())),
                },
                None => live,
            }
        }
    };

    let (sample, history) = refine_loop(article, &config, agents.as_agents(), &templates);
    if let Some(path) = record {
        let text = log.lock().expect("transcript lock poisoned").render();
        fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    }
    corpus.append_history(&history).map_err(domain)?;
    for it in &history.iterations {
        match &it.assessment {
            Some(a) => {
                let scores: Vec<String> = a.reports.iter().map(|r| format!("{}={}", r.kind.as_str(), r.score)).collect();
                println!(
                    "iteration {}: average {:.2} {} [{}]{}",
                    it.index,
                    a.average_f64(),
                    if a.passed { "passed" } else { "below threshold" },
                    scores.join(" "),
                    if it.degraded { " degraded" } else { "" }
                );
            }
            None => println!("iteration {}: no usable draft{}", it.index, if it.degraded { " degraded" } else { "" }),
        }
    }
    match (history.outcome, sample) {
        (Outcome::Accepted { iteration }, Some(sample)) => {
            let id = corpus.append(sample).map_err(domain)?;
            corpus.transition(id, Status::Queued, Payload::None).map_err(domain)?;
            println!("accepted at iteration {iteration}: sample {id} queued for review");
            Ok(())
        }
        _ => Err(domain(format!("no sample accepted after {} iteration(s)", history.iterations.len()))),
    }
}

fn cmd_enqueue(corpus: &Path, ids: &[String]) -> CmdResult {
    let mut corpus = open_corpus(corpus)?;
    let targets: Vec<_> = if ids.is_empty() {
        corpus.samples().iter().filter(|s| s.status == Status::AutoVerified).map(|s| s.id).collect()
    } else {
        ids.iter().map(|i| i.parse().map_err(|_| usage(format!("`{i}` is not a sample id")))).collect::<Result<_, _>>()?
    };
    for id in &targets {
        corpus.transition(*id, Status::Queued, Payload::None).map_err(domain)?;
        println!("{id}\tqueued");
    }
    Ok(())
}

fn cmd_serve(
    corpus: PathBuf,
    listen: &str,
    tokens: Option<String>,
    ui_dir: Option<PathBuf>,
    templates: Option<&Path>,
) -> CmdResult {
    let tokens = match tokens.or_else(|| std::env::var(TOKENS_ENV).ok()) {
        Some(text) => Tokens::parse(&text).map_err(usage)?,
        None => Tokens::default(),
    };
    if tokens.is_empty() {
        eprintln!("no tokens configured: the service is read-only");
    }
    let mut config = ServiceConfig::new(corpus);
    config.tokens = tokens;
    config.ui_dir = ui_dir;
    config.templates = load_templates(templates)?;
    let factory: AgentFactory = Arc::new(|| AgentConfig::from_env().map(RoleAgents::remote).map_err(|e| e.to_string()));
    config.agents = Some(factory);
    let state = AppState::open(config).map_err(usage)?;
    let runtime = tokio::runtime::Runtime::new().map_err(usage)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await.map_err(|e| usage(format!("cannot listen on {listen}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(usage)?);
        tokio::select! {
            r = formalex_service::serve(listener, state) => r.map_err(usage),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

fn cmd_export(corpus: &Path, out: &Path) -> CmdResult {
    let corpus = open_corpus(corpus)?;
    let n = corpus.export_curated(out).map_err(usage)?;
    println!("exported {n} curated sample(s) to {}", out.display());
    Ok(())
}

fn cmd_stats(corpus: &Path) -> CmdResult {
    let corpus = open_corpus(corpus)?;
    let stats = serde_json::to_string_pretty(&corpus.stats()).map_err(usage)?;
    println!("{stats}");
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Validate { tree } => cmd_validate(&tree),
        Command::Eval { tree, facts, target, trace, budget } => cmd_eval(&tree, &facts, target, trace, budget),
        Command::Lint { input, fail_on } => cmd_lint(&input, fail_on),
        Command::Simplify { tree, check } => cmd_simplify(&tree, check),
        Command::Pipeline { command: PipelineCommand::Run { article, corpus, mock, record, max_iters, threshold, templates } } => {
            cmd_pipeline_run(&article, &corpus, mock.as_deref(), record.as_deref(), max_iters, threshold, templates.as_deref())
        }
        Command::Enqueue { corpus, ids } => cmd_enqueue(&corpus, &ids),
        Command::Serve { corpus, listen, tokens, ui_dir, templates } => {
            cmd_serve(corpus, &listen, tokens, ui_dir, templates.as_deref())
        }
        Command::Export { corpus, out } => cmd_export(&corpus, &out),
        Command::Stats { corpus } => cmd_stats(&corpus),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("formalex: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("formalex: {msg}");
            ExitCode::from(2)
        }
    }
}
