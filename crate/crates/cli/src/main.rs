use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use tracing_subscriber::EnvFilter;

use palace_core::evalbench::{generate_fixture, run_ablations, EvalFixture};
use palace_core::ingest::ConvoOptions;
use palace_core::kgraph::Triple;
use palace_core::palace::palace_exists;
use palace_core::search::search_memories;
use palace_core::stack::diary::{diary_append, diary_read};
use palace_core::stack::wakeup;
use palace_core::timestamp::parse_timestamp;
use palace_core::{Palace, PalaceAddress, PalaceError, SearchMode, SearchRequest};

#[derive(Parser, Debug)]
#[command(name = "palace", version, about = "Verbatim-first local memory for LLM agents")]
struct Cli {
    /// Palace directory
    #[arg(long, global = true, env = "PALACE_PATH")]
    palace: Option<PathBuf>,

    /// Print one JSON document on stdout instead of text
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create a palace (defaults to --palace)
    Init { path: Option<PathBuf> },
    /// Chunk a project directory into drawers
    Mine {
        dir: PathBuf,
        #[arg(long)]
        wing: Option<String>,
    },
    /// Store a JSON-lines conversation export, one drawer per exchange
    MineConvo {
        /// Export file, or `-` for stdin
        file: PathBuf,
        #[arg(long)]
        wing: Option<String>,
        #[arg(long)]
        room: Option<String>,
    },
    /// Search stored memories
    Recall {
        query: String,
        #[arg(long)]
        wing: Option<String>,
        #[arg(long)]
        room: Option<String>,
        #[arg(short = 'k', long = "n-results", default_value_t = 5)]
        k: usize,
        /// 0 disables the cutoff
        #[arg(long, default_value_t = 0.0)]
        max_distance: f64,
        #[arg(long, default_value = "hybrid")]
        mode: SearchMode,
    },
    /// Store one memory verbatim
    Remember {
        text: String,
        #[arg(long)]
        wing: String,
        #[arg(long)]
        room: String,
        #[arg(long)]
        hall: Option<String>,
        #[arg(long)]
        closet: Option<String>,
    },
    /// Counts and the memory protocol directive
    Status,
    /// Wake-up payload: identity, recent essentials, directive
    Wakeup {
        /// File holding the identity text
        #[arg(long)]
        identity: Option<PathBuf>,
    },
    /// Temporal knowledge graph
    Kg {
        #[command(subcommand)]
        command: KgCommand,
    },
    /// Per-agent diaries
    Diary {
        #[command(subcommand)]
        command: DiaryCommand,
    },
    /// Serve tools over JSON-RPC on stdin/stdout until EOF
    Serve,
    /// Synthetic retrieval benchmark
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// List groups of drawers with identical content
    DedupReport,
}

#[derive(Subcommand, Debug)]
enum KgCommand {
    Add {
        subject: String,
        predicate: String,
        object: String,
        #[arg(long)]
        valid_from: Option<String>,
        #[arg(long)]
        valid_to: Option<String>,
        #[arg(long)]
        confidence: Option<f64>,
        #[arg(long)]
        source_file: Option<String>,
    },
    Query {
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        predicate: Option<String>,
        /// Only facts valid at this instant
        #[arg(long)]
        at: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
enum DiaryCommand {
    Append {
        agent: String,
        text: String,
        #[arg(long, default_value = "")]
        session: String,
    },
    Read {
        agent: String,
        #[arg(short = 'n', long, default_value_t = 10)]
        last: usize,
    },
}

#[derive(Args, Debug)]
struct FixtureArgs {
    #[arg(long, default_value_t = 50)]
    questions: usize,
    #[arg(long, default_value_t = 200)]
    distractors: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Write a generated fixture as JSON
    Generate {
        #[command(flatten)]
        fixture: FixtureArgs,
        /// Output file; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the ablation grid and print the report
    Run {
        #[command(flatten)]
        fixture: FixtureArgs,
        /// Load this fixture instead of generating one
        #[arg(long)]
        fixture_file: Option<PathBuf>,
        #[arg(short = 'k', long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value = "semantic")]
        mode: SearchMode,
        /// Keep the per-condition palaces here instead of a temp dir
        #[arg(long)]
        work_dir: Option<PathBuf>,
        /// Include wall-clock timings (makes reports differ between runs)
        #[arg(long)]
        timing: bool,
    },
}

enum Output {
    Json(Value),
    Text(String),
}

fn palace_path(cli_path: &Option<PathBuf>) -> Result<PathBuf, PalaceError> {
    cli_path
        .clone()
        .ok_or_else(|| PalaceError::invalid("no palace given: pass --palace or set PALACE_PATH"))
}

fn open(cli_path: &Option<PathBuf>) -> Result<Palace, PalaceError> {
    let path = palace_path(cli_path)?;
    if !palace_exists(&path) {
        return Err(PalaceError::NotFound(format!("no palace at {}", path.display())));
    }
    Palace::open(path)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<Value, PalaceError> {
    Ok(serde_json::to_value(v)?)
}

fn read_input(path: &Path) -> Result<String, PalaceError> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => PalaceError::NotFound(path.display().to_string()),
        _ => e.into(),
    })
}

fn run(cli: Cli) -> Result<Output, PalaceError> {
    let out = match cli.command {
        Command::Init { path } => {
            let path = match path {
                Some(p) => p,
                None => palace_path(&cli.palace)?,
            };
            let p = Palace::init(&path, None)?;
            let status = p.status()?;
            Output::Json(json!({"palace": p.path(), "status": status}))
        }
        Command::Mine { dir, wing } => {
            let p = open(&cli.palace)?;
            Output::Json(to_json(&p.mine_project(&dir, wing)?)?)
        }
        Command::MineConvo { file, wing, room } => {
            let p = open(&cli.palace)?;
            let export = read_input(&file)?;
            Output::Json(to_json(&p.mine_conversation(&export, &ConvoOptions { wing, room })?)?)
        }
        Command::Recall { query, wing, room, k, max_distance, mode } => {
            let req = SearchRequest {
                wing,
                room,
                n_results: k,
                max_distance,
                mode,
                ..SearchRequest::new(query)
            };
            let results = search_memories(&palace_path(&cli.palace)?, &req)?;
            if cli.json {
                Output::Json(json!({"results": results}))
            } else {
                let mut text = String::new();
                for (i, r) in results.iter().enumerate() {
                    text.push_str(&format!(
                        "#{} {} [{}/{}] fused={:.4} distance={:.4} keyword={:.3}\n{}\n\n",
                        i + 1,
                        r.drawer_id,
                        r.address.wing,
                        r.address.room,
                        r.fused_score,
                        r.distance,
                        r.keyword_score,
                        r.content
                    ));
                }
                if results.is_empty() {
                    text.push_str("no results\n");
                }
                Output::Text(text)
            }
        }
        Command::Remember { text, wing, room, hall, closet } => {
            let p = open(&cli.palace)?;
            let mut addr = PalaceAddress::new(wing, room)?;
            if let Some(h) = hall {
                addr = addr.with_hall(h)?;
            }
            if let Some(c) = closet {
                addr = addr.with_closet(c)?;
            }
            Output::Json(to_json(&p.remember(&text, addr)?)?)
        }
        Command::Status => {
            let p = open(&cli.palace)?;
            let status = p.status()?;
            if cli.json {
                Output::Json(json!({"status": status, "wings": p.wings()?, "rooms": p.rooms(None)?}))
            } else {
                let mut text = format!(
                    "wings: {}  rooms: {}  drawers: {}\n",
                    status.wing_count, status.room_count, status.drawer_count
                );
                for r in p.rooms(None)? {
                    text.push_str(&format!("  {}/{}: {}\n", r.wing, r.room, r.drawers));
                }
                text.push('\n');
                text.push_str(&status.protocol_directive);
                text.push('\n');
                Output::Text(text)
            }
        }
        Command::Wakeup { identity } => {
            let p = open(&cli.palace)?;
            let identity = identity.map(|f| read_input(&f)).transpose()?.unwrap_or_default();
            let w = wakeup(&p, identity.trim())?;
            if cli.json {
                Output::Json(to_json(&w)?)
            } else {
                Output::Text(format!("{}\n", w.render()))
            }
        }
        Command::Kg { command } => {
            let p = open(&cli.palace)?;
            match command {
                KgCommand::Add { subject, predicate, object, valid_from, valid_to, confidence, source_file } => {
                    let mut t = Triple::new(subject, predicate, object);
                    t.valid_from = valid_from;
                    t.valid_to = valid_to;
                    t.source_file = source_file;
                    if let Some(c) = confidence {
                        t.confidence = c;
                    }
                    let (added, id) = p.with_kg_mut(|kg| kg.insert_triple(t))?;
                    Output::Json(json!({"added": added, "triple_id": id}))
                }
                KgCommand::Query { subject, predicate, at } => {
                    let at = at.as_deref().map(parse_timestamp).transpose()?;
                    let triples = p.with_kg(|kg| {
                        let found = match (&subject, &predicate) {
                            (Some(s), _) => kg.query_by_subject(s, at),
                            (None, Some(pr)) => kg.query_by_predicate(pr),
                            (None, None) => return Err(PalaceError::invalid("pass --subject or --predicate")),
                        };
                        Ok(found
                            .into_iter()
                            .filter(|t| predicate.as_ref().is_none_or(|pr| &t.predicate == pr))
                            .filter(|t| at.is_none_or(|at| t.valid_at(at)))
                            .collect::<Vec<_>>())
                    })?;
                    Output::Json(json!({"triples": triples}))
                }
            }
        }
        Command::Diary { command } => {
            let p = open(&cli.palace)?;
            match command {
                DiaryCommand::Append { agent, text, session } => Output::Json(to_json(&diary_append(&p, &agent, &session, &text)?)?),
                DiaryCommand::Read { agent, last } => Output::Json(json!({"entries": diary_read(&p, &agent, last)?})),
            }
        }
        Command::Serve => {
            let p = open(&cli.palace)?;
            palace_core::server::serve(p, io::stdin().lock(), io::stdout().lock())?;
            return Ok(Output::Text(String::new()));
        }
        Command::Bench { command } => match command {
            BenchCommand::Generate { fixture, out } => {
                let f = generate_fixture(fixture.questions, fixture.distractors, fixture.seed)?;
                match out {
                    Some(path) => {
                        f.save(&path)?;
                        Output::Json(json!({
                            "fixture": path,
                            "questions": f.questions.len(),
                            "sessions": f.sessions.len(),
                        }))
                    }
                    None => Output::Json(to_json(&f)?),
                }
            }
            BenchCommand::Run { fixture, fixture_file, k, mode, work_dir, timing } => {
                let f = match fixture_file {
                    Some(path) => EvalFixture::load(&path)?,
                    None => generate_fixture(fixture.questions, fixture.distractors, fixture.seed)?,
                };
                let tmp;
                let dir = match work_dir {
                    Some(d) => {
                        std::fs::create_dir_all(&d)?;
                        d
                    }
                    None => {
                        tmp = tempfile::tempdir()?;
                        tmp.path().to_path_buf()
                    }
                };
                let table = run_ablations(&f, &dir, k, mode, timing)?;
                if cli.json {
                    Output::Json(to_json(&table)?)
                } else {
                    Output::Text(table.render())
                }
            }
        },
        Command::DedupReport => {
            let p = open(&cli.palace)?;
            let groups = p.dedup_report()?;
            if cli.json {
                Output::Json(json!({"groups": groups}))
            } else {
                let mut text = format!("{} duplicate group(s)\n", groups.len());
                for g in &groups {
                    text.push_str(&format!("{}: {}\n", g.content_md5, g.drawer_ids.join(", ")));
                }
                Output::Text(text)
            }
        }
    };
    Ok(out)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json_mode = cli.json;
    match run(cli) {
        Ok(Output::Json(v)) => {
            let text = if json_mode { v.to_string() } else { serde_json::to_string_pretty(&v).unwrap_or_default() };
            println!("{text}");
            ExitCode::SUCCESS
        }
        Ok(Output::Text(t)) => {
            print!("{t}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("palace: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
