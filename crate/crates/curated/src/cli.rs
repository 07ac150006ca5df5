//! Command-line interface.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use curated_core::analysis::{ct_checkpoints, merge_checkpoints, per_event_table, Checkpoint, CurveRow, Experiment};
use curated_core::annotation::session_stats;
use curated_core::learning::{build_training_sets, train_all, EntitySpans};
use curated_core::pipeline::{extract, TupleSet};
use curated_core::projection::{project_records, Projection};
use curated_core::scoring::score;
use curated_core::workflow::WorkflowConfig;
use curated_core::{AnnotationRecord, DocumentSet, InvertedIndex, LogEvent, Ontology, PhraseQuery, ScoreOptions, WorkflowState};

use crate::config::Config;
use crate::formats::{self, write_text};
use crate::plot::render_curve_svg;
use crate::server::{self, AppState, ManualClock, ServerSettings, SystemClock};
use crate::synth::{fixture_config_text, run_teachers, Fixture, FixtureSpec, LocalDesk, ONTOLOGY_TEXT};

#[derive(Debug, Parser)]
#[command(name = "curated", version, about = "Curated-training workbench for event extraction")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize a JSONL corpus.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the phrase index; dump it or run one query.
    Index {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        query: Option<String>,
        #[arg(long, default_value_t = 10)]
        limit: usize,
        /// Write `token<TAB>doc:count ...` lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the annotation service.
    Serve {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long)]
        ontology: Option<PathBuf>,
    },
    /// Project committed records of session logs into event mentions.
    Project {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train trigger, argument and genericity models.
    Train {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        mentions: PathBuf,
        #[command(flatten)]
        ontology: OntologyArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the extraction pipeline over a corpus.
    Extract {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        models: PathBuf,
        #[command(flatten)]
        ontology: OntologyArg,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        argument_threshold: Option<f64>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score system tuples against a key.
    Score {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[command(flatten)]
        neutral: NeutralArgs,
        /// Print JSON lines instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Learning curve over annotation time.
    Curve {
        /// Session logs; checkpoints are aligned across sessions.
        #[arg(long = "session", required = true)]
        sessions: Vec<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArg,
        /// Evaluation corpus.
        #[arg(long)]
        eval: PathBuf,
        #[arg(long)]
        eval_entities: Option<PathBuf>,
        #[arg(long)]
        key: PathBuf,
        #[command(flatten)]
        ontology: OntologyArg,
        #[arg(long, default_value_t = 10.0)]
        interval: f64,
        /// Use raw wall-clock time instead of break-clipped time.
        #[arg(long)]
        raw_time: bool,
        #[command(flatten)]
        neutral: NeutralArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Reading-effort statistics of a session log.
    Stats {
        #[command(flatten)]
        corpus: CorpusArg,
        log: PathBuf,
    },
    /// Re-derive session state from a log and print it as JSON.
    Replay {
        #[command(flatten)]
        corpus: CorpusArg,
        log: PathBuf,
    },
    /// Write the synthetic fixture and, with --teach, scripted sessions.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        train_docs: usize,
        #[arg(long, default_value_t = 60)]
        eval_docs: usize,
        #[arg(long)]
        teach: bool,
    },
}

#[derive(Debug, Args)]
pub struct CorpusArg {
    /// Corpus JSONL; defaults to `corpus.path` from the config.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Entity-span sidecar; defaults to `corpus.entities`.
    #[arg(long)]
    pub entities: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OntologyArg {
    /// Defaults to `extraction.ontology` from the config.
    #[arg(long)]
    pub ontology: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NeutralArgs {
    #[arg(long)]
    pub neutralize_realis: bool,
    /// Entity-to-cluster map; implies coreference neutralization.
    #[arg(long)]
    pub coref_map: Option<PathBuf>,
}

impl NeutralArgs {
    fn options(&self) -> Result<ScoreOptions> {
        let coref_map = match &self.coref_map {
            Some(p) => Some(formats::parse_coref_map(&formats::read_text(p)?, &p.display().to_string())?),
            None => None,
        };
        Ok(ScoreOptions {
            neutralize_realis: self.neutralize_realis,
            neutralize_coref: coref_map.is_some(),
            coref_map,
        })
    }
}

fn corpus_path(arg: &CorpusArg, config: &Config) -> Result<PathBuf> {
    arg.corpus
        .clone()
        .or_else(|| config.corpus.path.clone())
        .context("no corpus given (use --corpus or corpus.path in the config)")
}

fn load_corpus(arg: &CorpusArg, config: &Config) -> Result<(DocumentSet, EntitySpans)> {
    let path = corpus_path(arg, config)?;
    let docs = formats::read_corpus(&path).with_context(|| format!("loading corpus {}", path.display()))?;
    let entities = match arg.entities.clone().or_else(|| config.corpus.entities.clone()) {
        Some(p) => load_entities(&p, &docs)?,
        None => EntitySpans::new(),
    };
    Ok((docs, entities))
}

fn load_entities(path: &Path, docs: &DocumentSet) -> Result<EntitySpans> {
    let (spans, unaligned) = formats::parse_entities(&formats::read_text(path)?, &path.display().to_string(), docs)?;
    if unaligned > 0 {
        eprintln!("{}: {unaligned} entity spans do not align with tokens and were ignored", path.display());
    }
    Ok(spans)
}

fn load_ontology(arg: &OntologyArg, config: &Config) -> Result<Ontology> {
    let path = arg
        .ontology
        .clone()
        .or_else(|| config.extraction.ontology.clone())
        .context("no ontology given (use --ontology or extraction.ontology in the config)")?;
    Ontology::parse(&formats::read_text(&path)?).with_context(|| format!("parsing ontology {}", path.display()))
}

fn replay_log(path: &Path, docs: &DocumentSet, config: WorkflowConfig) -> Result<(Vec<LogEvent>, WorkflowState)> {
    let events = formats::read_log(path)?;
    let state = WorkflowState::replay(events.clone(), docs, config).with_context(|| format!("replaying {}", path.display()))?;
    Ok((events, state))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(write_text(p, text)?),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn projection_counts(projection: &Projection) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for m in &projection.mentions {
        *counts.entry(m.event_type.clone()).or_default() += 1;
    }
    counts
}

pub fn run(cli: Cli) -> Result<()> {
    let config = Config::load_or_default(cli.config.as_deref())?;
    let workflow = config.workflow.workflow_config();
    match cli.command {
        Command::Ingest { input, out } => {
            let docs = formats::read_corpus(&input)?;
            let tokens: usize = docs.iter().map(|d| d.tokens().len()).sum();
            let sentences: usize = docs.iter().map(|d| d.sentences().len()).sum();
            if let Some(out) = out {
                write_text(&out, &formats::corpus_jsonl(&docs))?;
            }
            println!("{} documents, {sentences} sentences, {tokens} tokens", docs.len());
        }
        Command::Index {
            corpus,
            query,
            limit,
            out,
        } => {
            let (docs, _) = load_corpus(&corpus, &config)?;
            let index = InvertedIndex::build(&docs);
            if let Some(out) = out {
                let mut text = String::new();
                for (token, postings) in index.entries() {
                    text.push_str(token);
                    for (doc, count) in postings {
                        text.push_str(&format!("\t{doc}:{count}"));
                    }
                    text.push('\n');
                }
                write_text(&out, &text)?;
            }
            match query {
                Some(q) => {
                    let query = PhraseQuery::parse(&q, limit).map_err(|e| anyhow::anyhow!("query {q:?}: {e}"))?;
                    for doc in index.query_phrase(&query) {
                        println!("{doc}");
                    }
                }
                None => println!("{} documents, {} distinct tokens", index.doc_count(), index.vocabulary_len()),
            }
        }
        Command::Serve {
            corpus,
            bind,
            log_dir,
            ontology,
        } => {
            let path = corpus_path(&corpus, &config)?;
            let docs = formats::read_corpus(&path).with_context(|| format!("corpus {} unavailable", path.display()))?;
            let ontology = match ontology.or_else(|| config.extraction.ontology.clone()) {
                Some(p) => Some(load_ontology(&OntologyArg { ontology: Some(p) }, &config)?),
                None => None,
            };
            let settings = ServerSettings {
                log_dir: log_dir.unwrap_or_else(|| config.server.log_dir.clone()),
                workflow,
                budget_secs: config.workflow.session_budget_secs,
                search_limit: config.server.search_limit,
                ontology,
            };
            let app = AppState::new(Arc::new(docs), settings, Arc::new(SystemClock))?;
            let addr = bind.unwrap_or(config.server.bind);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime
                .block_on(server::serve(Arc::new(app), addr))
                .with_context(|| format!("serving on {addr}"))?;
        }
        Command::Project { corpus, logs, out } => {
            let (docs, _) = load_corpus(&corpus, &config)?;
            let mut records: Vec<AnnotationRecord> = Vec::new();
            for log in &logs {
                let (_, state) = replay_log(log, &docs, workflow)?;
                records.extend(state.committed_records().into_iter().cloned());
            }
            let refs: Vec<&AnnotationRecord> = records.iter().collect();
            let projection = project_records(&docs, &refs)?;
            write_text(&out, &formats::mentions_jsonl(&projection))?;
            let r = &projection.report;
            println!("{}", serde_json::to_string(r)?);
        }
        Command::Train {
            corpus,
            mentions,
            ontology,
            out,
        } => {
            let (docs, entities) = load_corpus(&corpus, &config)?;
            let ontology = load_ontology(&ontology, &config)?;
            let projection = formats::parse_mentions(&formats::read_text(&mentions)?, &mentions.display().to_string())?;
            let sets = build_training_sets(&projection, &docs, &ontology, &entities);
            let (models, skipped) = train_all(&sets, &config.training.train_config());
            for s in &skipped {
                eprintln!("skipped {}: {}", formats::kind_name(&s.kind), s.reason);
            }
            write_text(&out, &formats::model_set_text(&models))?;
        }
        Command::Extract {
            corpus,
            models,
            ontology,
            threshold,
            argument_threshold,
            rules,
            out,
        } => {
            let (docs, entities) = load_corpus(&corpus, &config)?;
            let ontology = load_ontology(&ontology, &config)?;
            let mut section = config.extraction.clone();
            if let Some(t) = threshold {
                section.threshold = t;
            }
            if let Some(t) = argument_threshold {
                section.argument_threshold = t;
            }
            if rules.is_some() {
                section.rules = rules;
            }
            let mut checked = config.clone();
            checked.extraction = section.clone();
            checked.validate().map_err(anyhow::Error::msg)?;
            let extract_config = section.extract_config()?;
            let models = formats::parse_model_set(&formats::read_text(&models)?, &models.display().to_string())?;
            let mut tuples = TupleSet::new();
            for doc in &docs {
                tuples.extend(extract(doc, &models, &ontology, &entities, &extract_config)?);
            }
            emit(out.as_deref(), &formats::tuples_tsv(&tuples, &docs))?;
        }
        Command::Score {
            system,
            key,
            neutral,
            json,
        } => {
            let system = formats::read_tuples(&system)?;
            let key = formats::read_tuples(&key)?;
            let report = score(&system, &key, &neutral.options()?);
            if json {
                print!("{}", formats::score_jsonl(&report));
            } else {
                print!("{}", formats::score_table(&report));
            }
        }
        Command::Curve {
            sessions,
            corpus,
            eval,
            eval_entities,
            key,
            ontology,
            interval,
            raw_time,
            neutral,
            out,
            plot,
        } => {
            if !(interval > 0.0) {
                bail!("--interval must be positive");
            }
            let (train_docs, train_entities) = load_corpus(&corpus, &config)?;
            let eval_docs = formats::read_corpus(&eval)?;
            let eval_entities = match eval_entities {
                Some(p) => load_entities(&p, &eval_docs)?,
                None => EntitySpans::new(),
            };
            let key = formats::read_tuples(&key)?;
            let ontology = load_ontology(&ontology, &config)?;
            let mut curve_workflow = workflow;
            if raw_time {
                curve_workflow.break_threshold = f64::INFINITY;
            }
            let mut per_session = Vec::new();
            for path in &sessions {
                let events = formats::read_log(path)?;
                per_session.push(
                    ct_checkpoints(&events, &train_docs, curve_workflow, interval)
                        .with_context(|| format!("checkpoints of {}", path.display()))?,
                );
            }
            let checkpoints = merge_checkpoints(&per_session);
            let experiment = Experiment {
                ontology: &ontology,
                train_docs: &train_docs,
                train_entities: &train_entities,
                eval_docs: &eval_docs,
                eval_entities: &eval_entities,
                key: &key,
                train_config: config.training.train_config(),
                extract_config: config.extraction.extract_config()?,
                score_options: neutral.options()?,
            };
            let rows = parallel_curve(&experiment, &checkpoints)?;
            write_text(&out, &formats::curve_jsonl(&rows))?;
            if let Some(plot) = plot {
                render_curve_svg(&formats::curve_lines(&rows), &plot, "F1 vs. effective annotation time")?;
            }
            let full: Vec<&AnnotationRecord> = checkpoints.last().map(|c| c.records.iter().collect()).unwrap_or_default();
            let training = projection_counts(&project_records(&train_docs, &full)?);
            let mut eval_counts = BTreeMap::new();
            for t in &key {
                *eval_counts.entry(t.event_type.clone()).or_default() += 1;
            }
            for row in per_event_table(&rows, &training, &eval_counts) {
                let f1 = row.final_f1.map_or_else(|| "-".to_string(), |f| format!("{f:.4}"));
                println!("{}\t{}\t{}", row.event_type, row.label(), f1);
            }
            for (k, row) in rows.iter().enumerate() {
                println!(
                    "checkpoint {k}\t{:.2} min\tP {:.4}\tR {:.4}\tF1 {:.4}",
                    row.point.minutes, row.point.precision, row.point.recall, row.point.f1
                );
            }
        }
        Command::Stats { corpus, log } => {
            let (docs, _) = load_corpus(&corpus, &config)?;
            let (_, state) = replay_log(&log, &docs, workflow)?;
            let stats = session_stats(state.session(), &docs)?;
            println!("words_read\t{}", stats.words_read);
            println!("docs_opened\t{}", stats.docs_opened);
            println!("searches\t{}", stats.searches);
            println!("effective_minutes\t{:.2}", state.elapsed() / 60.0);
        }
        Command::Replay { corpus, log } => {
            let (docs, _) = load_corpus(&corpus, &config)?;
            let (_, state) = replay_log(&log, &docs, workflow)?;
            let view = server::state_view(&state, config.workflow.session_budget_secs);
            println!("{}", serde_json::to_string_pretty(&view)?);
        }
        Command::Synth {
            out,
            seed,
            train_docs,
            eval_docs,
            teach,
        } => synth(&out, seed, train_docs, eval_docs, teach, &config)?,
    }
    Ok(())
}

/// Evaluates checkpoints on worker threads; rows come back in checkpoint order.
pub fn parallel_curve(experiment: &Experiment<'_>, checkpoints: &[Checkpoint]) -> Result<Vec<CurveRow>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(checkpoints.len().max(1));
    let chunk = checkpoints.len().div_ceil(workers).max(1);
    let parts: Vec<Result<Vec<CurveRow>, _>> = std::thread::scope(|scope| {
        let handles: Vec<_> = checkpoints
            .chunks(chunk)
            .map(|part| scope.spawn(move || experiment.curve(part)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("curve worker panicked")).collect()
    });
    let mut rows = Vec::with_capacity(checkpoints.len());
    for part in parts {
        rows.extend(part?);
    }
    Ok(rows)
}

fn synth(out: &Path, seed: u64, train_docs: usize, eval_docs: usize, teach: bool, config: &Config) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let fixture = Fixture::generate(FixtureSpec {
        seed,
        train_docs,
        eval_docs,
    });
    write_text(&out.join("train.jsonl"), &formats::corpus_jsonl(&fixture.train))?;
    write_text(&out.join("eval.jsonl"), &formats::corpus_jsonl(&fixture.eval))?;
    write_text(&out.join("ontology.txt"), ONTOLOGY_TEXT)?;
    write_text(&out.join("curated.toml"), &fixture_config_text())?;
    write_text(
        &out.join("key.tsv"),
        &formats::tuples_tsv_with_offsets(fixture.key.iter().map(|t| (t, None))),
    )?;
    println!(
        "wrote {} training and {} evaluation documents, {} key tuples",
        fixture.train.len(),
        fixture.eval.len(),
        fixture.key.len()
    );
    if teach {
        let clock = Arc::new(ManualClock::new(1_700_000_000.0));
        let settings = ServerSettings {
            log_dir: out.join("logs"),
            workflow: config.workflow.workflow_config(),
            budget_secs: config.workflow.session_budget_secs,
            search_limit: config.server.search_limit,
            ontology: Some(fixture.ontology.clone()),
        };
        let app = Arc::new(AppState::new(Arc::new(fixture.train.clone()), settings, clock.clone())?);
        let mut desk = LocalDesk { app, clock };
        let reports = run_teachers(&mut desk, &fixture, seed).map_err(|e| anyhow::anyhow!("scripted teacher: {e}"))?;
        for (report, event_type) in reports.iter().zip(fixture.ontology.event_types()) {
            println!(
                "session {} ({event_type}): {} visits, {} event present, {} negative, {} skipped, promoted {:?}",
                report.session_id, report.visits, report.event_present, report.negative, report.skipped, report.promoted
            );
        }
    }
    Ok(())
}
