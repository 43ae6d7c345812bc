//! Command implementations behind the `tokenmetric` binary.

pub mod args;
mod commands;
pub mod error;
pub mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Parser;
use serde_json::{Map, Value};

pub use args::Cli;
use args::Command;
pub use error::{exit_code, CliError};
use manifest::{digest_path, recordable_args, sha256_hex, FileDigest, RunManifest, TOOL};

/// Ordered `key = value` results of one command.
#[derive(Debug, Default)]
pub struct Report(Vec<(String, Value)>);

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.0.push((key.into(), value.into()));
    }

    fn write(&self, json: bool, sink: &mut dyn Write) -> std::io::Result<()> {
        if json {
            let map: Map<String, Value> = self.0.iter().cloned().collect();
            writeln!(sink, "{}", Value::Object(map))
        } else {
            for (k, v) in &self.0 {
                match v {
                    Value::String(s) => writeln!(sink, "{k}={s}")?,
                    other => writeln!(sink, "{k}={other}")?,
                }
            }
            Ok(())
        }
    }
}

/// Files read and written by one command, in access order.
#[derive(Debug, Default)]
pub struct RunContext {
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    quiet: bool,
}

impl RunContext {
    fn record(list: &mut Vec<FileDigest>, path: &Path) -> Result<()> {
        let sha256 = digest_path(path)?;
        list.push(FileDigest { path: path.to_string_lossy().into_owned(), sha256 });
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        Self::record(&mut self.inputs, path)
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        Self::record(&mut self.outputs, path)
    }

    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Tokenize { .. } => "tokenize",
        Command::Degrade { .. } => "degrade",
        Command::Chd { .. } => "chd",
        Command::Tokenstats { .. } => "tokenstats",
        Command::Baseline(_) => "baseline",
        Command::Cmms(_) => "cmms",
        Command::Corrupt { .. } => "corrupt",
        Command::Correlate { .. } => "correlate",
        Command::Sweep { .. } => "sweep",
        Command::Synth(_) => "synth",
        Command::Replay { .. } => "replay",
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()).into());
        }
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

/// Runs a parsed command: prints its report to `stdout` and writes the run
/// manifest. `raw_args` are the arguments after the program name.
pub fn execute(cli: Cli, raw_args: &[String], stdout: &mut dyn Write) -> Result<()> {
    let pool = thread_pool(cli.global.threads)?;
    let threads = pool.current_num_threads();
    let (captured, result) = pool.install(|| -> (Vec<u8>, Result<()>) {
        let mut captured = Vec::new();
        if let Command::Replay { manifest } = &cli.command {
            let result = replay(manifest, threads, cli.global.quiet)
                .and_then(|r| Ok(r.write(cli.global.json, &mut captured)?));
            return (captured, result);
        }
        let ctx = match run_command(&cli, &mut captured) {
            Ok(ctx) => ctx,
            Err(e) => return (captured, Err(e)),
        };
        let target = cli.global.manifest.clone().or_else(|| {
            ctx.outputs.first().map(|o| PathBuf::from(format!("{}.manifest.json", o.path.trim_end_matches('/'))))
        });
        let result = match target {
            Some(path) => RunManifest {
                tool: TOOL.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                subcommand: subcommand_name(&cli.command).into(),
                args: recordable_args(raw_args),
                seed: cli.global.seed,
                threads,
                inputs: ctx.inputs,
                outputs: ctx.outputs,
                stdout_sha256: sha256_hex(&captured),
            }
            .save(&path),
            None => Ok(()),
        };
        (captured, result)
    });
    stdout.write_all(&captured)?;
    stdout.flush()?;
    result
}

/// Runs a command, writing its report into `sink`.
pub fn run_command(cli: &Cli, sink: &mut dyn Write) -> Result<RunContext> {
    let mut ctx = RunContext { quiet: cli.global.quiet, ..RunContext::default() };
    let report = commands::dispatch(cli, &mut ctx)?;
    report.write(cli.global.json, sink)?;
    Ok(ctx)
}

fn replace_path_arg(args: &mut [String], old: &str, new: &str) {
    for a in args.iter_mut() {
        if a == old {
            *a = new.to_string();
        } else if let Some((flag, value)) = a.split_once('=') {
            if value == old {
                *a = format!("{flag}={new}");
            }
        }
    }
}

fn replay(path: &Path, threads: usize, quiet: bool) -> Result<Report> {
    let m = RunManifest::load(path).map_err(|e| CliError::Input(format!("{e:#}")))?;
    if m.tool != TOOL {
        return Err(CliError::Input(format!("manifest was written by {:?}", m.tool)).into());
    }
    for input in &m.inputs {
        let now = digest_path(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(CliError::Input(format!("input {} changed since the recorded run", input.path)).into());
        }
    }
    let scratch = tempfile::tempdir()?;
    let mut args = m.args.clone();
    let mut fresh = Vec::with_capacity(m.outputs.len());
    for (i, out) in m.outputs.iter().enumerate() {
        let name = Path::new(&out.path).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let new = scratch.path().join(format!("{i}-{name}"));
        replace_path_arg(&mut args, &out.path, &new.to_string_lossy());
        fresh.push(new);
    }
    let cli = Cli::try_parse_from(std::iter::once(TOOL.to_string()).chain(args.iter().cloned()))
        .map_err(|e| CliError::Input(format!("manifest arguments no longer parse: {e}")))?;
    let mut cli = cli;
    cli.global.quiet |= quiet;
    let mut captured = Vec::new();
    run_command(&cli, &mut captured)?;

    let stdout_sha = sha256_hex(&captured);
    if stdout_sha != m.stdout_sha256 {
        return Err(CliError::ReplayMismatch(format!(
            "stdout digest {stdout_sha} differs from recorded {}",
            m.stdout_sha256
        ))
        .into());
    }
    for (out, new) in m.outputs.iter().zip(&fresh) {
        let sha = digest_path(new)?;
        if sha != out.sha256 {
            return Err(CliError::ReplayMismatch(format!("{} digest {sha} differs from recorded {}", out.path, out.sha256)).into());
        }
    }
    let mut r = Report::default();
    r.push("replay", "ok");
    r.push("subcommand", m.subcommand);
    r.push("outputs_checked", m.outputs.len());
    r.push("threads", threads);
    Ok(r)
}
