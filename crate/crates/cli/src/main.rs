//! `brickstage`: validate, run, replay, export and serve projects.
//!
//! Exit codes: 0 success, 1 verification or validation failure, 2 usage,
//! I/O or parse error. Standard output carries only machine-readable results
//! (a trace digest, or the violation listing of `validate`); everything else
//! goes to standard error.

use std::fs;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use brickstage_core::assets::{costume_paths, load_costume_images, load_costume_sizes};
use brickstage_core::export::{
    canonical_outputs_bytes, canonical_scene_bytes, rasterize, write_ppm, RasterError,
};
use brickstage_core::replay::{replay, run_schedule, ReplayError};
use brickstage_core::{
    parse_project, parse_project_unvalidated, project_digest, trace_digest, validate, CostumeSizes,
    PlayLog, Project, Session, Trace,
};
use brickstage_server::Catalog;

#[derive(Parser)]
#[command(
    name = "brickstage",
    version,
    about = "Deterministic runtime for sprite-and-brick programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a project and list every violation, one per line.
    Validate { project: PathBuf },
    /// Run a project headlessly for ticks 0..=N and print the trace digest.
    Run {
        project: PathBuf,
        #[arg(long)]
        ticks: u64,
        /// RNG seed; defaults to the seed of --events, or 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Play log whose input events are injected at their ticks.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Write the trace as JSON lines to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Replay a play log and print (or check) its trace digest.
    Replay {
        project: PathBuf,
        playlog: PathBuf,
        #[arg(long)]
        expect: Option<String>,
    },
    /// Replay a play log and write one file per tick.
    Export {
        project: PathBuf,
        playlog: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Ppm)]
        format: Format,
    },
    /// Serve live sessions for the projects in a directory.
    Serve {
        project_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// `frame_NNNNNN.ppm` images.
    Ppm,
    /// `frame_NNNNNN.scene.json` canonical scene records, plus
    /// `frame_NNNNNN.outputs.json` canonical outputs records.
    Scene,
}

/// A command's failure: exit code and message for standard error.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn verification(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<ReplayError> for Failure {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::DigestMismatch { .. } => Failure::verification(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { project } => cmd_validate(&project),
        Command::Run {
            project,
            ticks,
            seed,
            events,
            trace,
        } => cmd_run(&project, ticks, seed, events.as_deref(), trace.as_deref()),
        Command::Replay {
            project,
            playlog,
            expect,
        } => cmd_replay(&project, &playlog, expect.as_deref()),
        Command::Export {
            project,
            playlog,
            out,
            format,
        } => cmd_export(&project, &playlog, &out, format),
        Command::Serve { project_dir, port } => cmd_serve(&project_dir, port),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("brickstage: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn asset_dir(project_path: &Path) -> PathBuf {
    project_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

struct Loaded {
    project: Arc<Project>,
    sizes: Arc<CostumeSizes>,
}

fn load_project(path: &Path) -> Result<Loaded, Failure> {
    let project = parse_project(&read(path)?)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let (sizes, errors) = load_costume_sizes(&project, &asset_dir(path));
    for e in errors {
        eprintln!("warning: {e}; the costume cannot be tapped");
    }
    Ok(Loaded {
        project: Arc::new(project),
        sizes: Arc::new(sizes),
    })
}

fn load_log(path: &Path) -> Result<PlayLog, Failure> {
    PlayLog::parse_jsonl(&read(path)?)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn cmd_validate(path: &Path) -> CmdResult {
    let project = parse_project_unvalidated(&read(path)?)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let violations = validate(&project);
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::verification(format!(
            "{} violation(s)",
            violations.len()
        )))
    }
}

fn cmd_run(
    path: &Path,
    ticks: u64,
    seed: Option<u64>,
    events: Option<&Path>,
    trace_out: Option<&Path>,
) -> CmdResult {
    let loaded = load_project(path)?;
    let log = events.map(load_log).transpose()?;
    if let Some(log) = &log {
        let actual = project_digest(&loaded.project).expect("parsed projects are valid");
        if actual != log.project_digest {
            return Err(ReplayError::DigestMismatch {
                expected: log.project_digest.clone(),
                actual,
            }
            .into());
        }
    }
    let seed = seed.or(log.as_ref().map(|l| l.seed)).unwrap_or(0);
    let tick_rate = log.as_ref().map(|l| l.tick_rate);
    let mut session = Session::new(loaded.project, loaded.sizes, seed, tick_rate)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let schedule = log.map(|l| l.events).unwrap_or_default();
    let trace =
        run_schedule(&mut session, &schedule, ticks).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(out) = trace_out {
        write(out, &trace.to_jsonl())?;
    }
    println!("{}", trace_digest(&trace));
    Ok(())
}

fn cmd_replay(path: &Path, log_path: &Path, expect: Option<&str>) -> CmdResult {
    let loaded = load_project(path)?;
    let log = load_log(log_path)?;
    let digest = trace_digest(&replay(&loaded.project, &loaded.sizes, &log)?);
    println!("{digest}");
    match expect {
        Some(want) if !want.eq_ignore_ascii_case(&digest) => Err(Failure::verification(format!(
            "trace digest mismatch: expected {want}, got {digest}"
        ))),
        _ => Ok(()),
    }
}

fn cmd_export(path: &Path, log_path: &Path, out: &Path, format: Format) -> CmdResult {
    let loaded = load_project(path)?;
    let log = load_log(log_path)?;
    let trace = replay(&loaded.project, &loaded.sizes, &log)?;
    fs::create_dir_all(out)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", out.display())))?;
    match format {
        Format::Scene => {
            for r in &trace.records {
                let t = r.scene.tick;
                write(
                    &out.join(format!("frame_{t:06}.scene.json")),
                    &canonical_scene_bytes(&r.scene),
                )?;
                write(
                    &out.join(format!("frame_{t:06}.outputs.json")),
                    &canonical_outputs_bytes(&r.outputs),
                )?;
            }
        }
        Format::Ppm => export_ppm(path, &loaded.project, &trace, out)?,
    }
    println!("{}", trace_digest(&trace));
    Ok(())
}

fn export_ppm(path: &Path, project: &Project, trace: &Trace, out: &Path) -> CmdResult {
    let base = asset_dir(path);
    let (images, errors) = load_costume_images(project, &base);
    for r in &trace.records {
        let image = rasterize(&r.scene, &project.stage, &images).map_err(|e| match e {
            RasterError::MissingAsset { sprite, costume_id } => {
                let file = costume_paths(project, &base)
                    .find(|(s, c, _)| *s == sprite && *c == costume_id)
                    .map(|(_, _, p)| p);
                let cause = errors
                    .iter()
                    .find(|e| e.sprite == sprite && e.costume_id == costume_id)
                    .map(|e| e.source.to_string())
                    .unwrap_or_default();
                match file {
                    Some(file) => Failure::usage(format!(
                        "missing asset {} (costume {costume_id:?} of sprite {sprite:?}): {cause}",
                        file.display()
                    )),
                    None => {
                        Failure::usage(format!("no costume {costume_id:?} for sprite {sprite:?}"))
                    }
                }
            }
        })?;
        write(
            &out.join(format!("frame_{:06}.ppm", r.scene.tick)),
            &write_ppm(&image),
        )?;
    }
    Ok(())
}

fn write(path: &Path, bytes: &[u8]) -> CmdResult {
    fs::write(path, bytes)
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_serve(dir: &Path, port: u16) -> CmdResult {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let catalog = Catalog::load_dir(dir).map_err(|e| Failure::usage(e.to_string()))?;
    if catalog.is_empty() {
        eprintln!("warning: no *.catproj.json files in {}", dir.display());
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::usage(e.to_string()))?;
    runtime.block_on(async {
        let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
        let listener = brickstage_server::bind(addr)
            .await
            .map_err(|e| Failure::usage(format!("cannot listen on {addr}: {e}")))?;
        let local = listener
            .local_addr()
            .map_err(|e| Failure::usage(e.to_string()))?;
        eprintln!("listening on ws://{local}/ws");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        brickstage_server::serve(listener, Arc::new(catalog), shutdown)
            .await
            .map_err(|e| Failure::usage(e.to_string()))
    })
}
