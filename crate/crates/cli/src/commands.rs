use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use tokenmetric::baselines::{fit_gaussian, frechet_distance, mmd2};
use tokenmetric::cmms::{
    corrupt_sample, quality_target, read_checkpoint, score_dataset, train_with, write_checkpoint, CorruptionSpec,
    RegressorConfig, TrainConfig, MAX_SEVERITY,
};
use tokenmetric::diagnostics::{adjacent_mi, token_entropy};
use tokenmetric::distances::chd_with;
use tokenmetric::eval::{align_scores, correlate, read_scores, sample_sweep, SweepConfig};
use tokenmetric::exec::{map_range, pairwise_sum};
use tokenmetric::histograms::unigram;
use tokenmetric::image::{DegradeSpec, Image};
use tokenmetric::synth::{derive_seed, iid_tokens, natural_images, structured_tokens, SceneConfig};
use tokenmetric::token_io::{
    read_features, read_tokens, read_tokens_text, write_tokens, write_tokens_text, Codebook, FeatureSet, TokenDataset,
};
use tokenmetric::toy_tokenizer::{build_palette, tokenize};
use tokenmetric::Execution;

use crate::args::{BaselineCommand, Cli, CmmsCommand, Command, SynthCommand, SynthKind};
use crate::{CliError, Report, RunContext};

pub(crate) fn dispatch(cli: &Cli, ctx: &mut RunContext) -> Result<Report> {
    let seed = cli.global.seed;
    match &cli.command {
        Command::Tokenize { input, grid, codebook, out } => cmd_tokenize(ctx, input, *grid, *codebook, out),
        Command::Degrade { input, kind, param, out } => {
            let spec = DegradeSpec::new(*kind, *param, seed)?;
            cmd_degrade(ctx, input, spec, out)
        }
        Command::Chd { real, gen, disp, distance } => {
            let (r, g) = (load_tokens(ctx, real)?, load_tokens(ctx, gen)?);
            let report = chd_with(&r, &g, disp, *distance, Execution::Parallel)?;
            let mut out = Report::default();
            out.push("chd_1d", report.chd_1d);
            out.push("chd_2d", report.chd_2d);
            out.push("chd", report.chd);
            out.push("distance", distance.to_string());
            Ok(out)
        }
        Command::Tokenstats { input, disp, top } => {
            let ds = load_tokens(ctx, input)?;
            let mut out = Report::default();
            out.push("sequences", ds.len());
            out.push("entropy", token_entropy(&ds)?);
            if ds.layout().is_some() {
                out.push("adjacent_mi", adjacent_mi(&ds, disp)?);
            }
            let h = unigram(&ds)?;
            let mut order: Vec<usize> = (0..h.codebook_size()).filter(|&t| h.counts()[t] > 0).collect();
            order.sort_by(|&a, &b| h.counts()[b].cmp(&h.counts()[a]).then(a.cmp(&b)));
            out.push("distinct_tokens", order.len());
            for (rank, &t) in order.iter().take(*top).enumerate() {
                out.push(format!("top{}", rank + 1), format!("{t}:{}", h.prob(t)));
            }
            Ok(out)
        }
        Command::Baseline(BaselineCommand::Frechet { real, gen }) => {
            let (r, g) = (load_features(ctx, real)?, load_features(ctx, gen)?);
            let mut out = Report::default();
            out.push("frechet", frechet_distance(&fit_gaussian(&r)?, &fit_gaussian(&g)?)?);
            Ok(out)
        }
        Command::Baseline(BaselineCommand::Mmd { real, gen, bandwidth }) => {
            let (r, g) = (load_features(ctx, real)?, load_features(ctx, gen)?);
            let mut out = Report::default();
            out.push("mmd2", mmd2(&r, &g, *bandwidth)?);
            Ok(out)
        }
        Command::Cmms(CmmsCommand::Train { tokens, out, full_scale, epochs, batch_size, lr }) => {
            let ds = load_tokens(ctx, tokens)?;
            let (rcfg, mut tcfg) = if *full_scale {
                (
                    RegressorConfig::full_scale(ds.seq_len(), ds.codebook(), seed),
                    TrainConfig { seed, ..TrainConfig::default() },
                )
            } else {
                (RegressorConfig::test_scale(ds.seq_len(), ds.codebook(), seed), TrainConfig::test_scale(seed))
            };
            tcfg.epochs = epochs.unwrap_or(tcfg.epochs);
            tcfg.batch_size = batch_size.unwrap_or(tcfg.batch_size);
            tcfg.learning_rate = lr.unwrap_or(tcfg.learning_rate);
            ctx.note(format!("training on {} sequences for {} epochs", ds.len(), tcfg.epochs));
            let (params, log) = train_with(&ds, None, &tcfg, rcfg, Execution::Parallel)?;
            let mut buf = Vec::new();
            write_checkpoint(&params, &mut buf)?;
            write_file(ctx, out, &buf)?;
            let mut report = Report::default();
            report.push("parameters", params.len());
            report.push("epochs", tcfg.epochs);
            report.push("initial_loss", log.initial_loss);
            report.push("final_loss", log.epoch_losses.last().copied().unwrap_or(log.initial_loss));
            Ok(report)
        }
        Command::Cmms(CmmsCommand::Score { model, tokens, out }) => {
            let params = read_checkpoint(&read_input(ctx, model)?[..])?;
            let ds = load_tokens(ctx, tokens)?;
            let scores = score_dataset(&params, &ds)?;
            if let Some(path) = out {
                let mut text = String::new();
                for (i, s) in scores.iter().enumerate() {
                    text.push_str(&format!("{i} {s}\n"));
                }
                write_file(ctx, path, text.as_bytes())?;
            }
            let mut report = Report::default();
            report.push("count", scores.len());
            report.push("mean", pairwise_sum(&scores) / scores.len() as f64);
            Ok(report)
        }
        Command::Corrupt { input, p, swap, out } => {
            let ds = load_tokens(ctx, input)?;
            if *p + *swap > MAX_SEVERITY {
                ctx.note(format!("combined severity clamped to {MAX_SEVERITY}"));
            }
            let seqs = map_range(Execution::Parallel, ds.len(), |i| {
                let spec = CorruptionSpec { p_uniform: *p, swap_fraction: *swap, pixel: None, seed: derive_seed(seed, i as u64) };
                corrupt_sample(ds.sequence(i), &spec, None, ds.codebook(), ds.layout())
            });
            let mut result = ds.empty_like();
            for s in seqs {
                result.push(s?.0.ids())?;
            }
            save_tokens(ctx, &result, out)?;
            let mut report = Report::default();
            report.push("sequences", result.len());
            report.push("target", quality_target((*p + *swap).min(MAX_SEVERITY))?);
            Ok(report)
        }
        Command::Correlate { metric, human, direction } => {
            let m = read_scores(&read_input(ctx, metric)?[..])?;
            let h = read_scores(&read_input(ctx, human)?[..])?;
            let (a, b) = align_scores(&m, &h)?;
            let r = correlate(&a, &b, *direction)?;
            if r.degenerate {
                ctx.note("warning: a score list has no rank variance; correlations set to 0");
            }
            let mut report = Report::default();
            report.push("n", r.n);
            report.push("spearman", r.spearman);
            report.push("kendall", r.kendall);
            report.push("nmse", json_number(r.nmse));
            report.push("pairwise_accuracy", json_number(r.pairwise_accuracy));
            report.push("degenerate", r.degenerate);
            Ok(report)
        }
        Command::Sweep { real, gen, sizes, repeats, metric, disp } => {
            let (r, g) = (load_tokens(ctx, real)?, load_tokens(ctx, gen)?);
            let cfg = SweepConfig { sizes: sizes.clone(), repeats: *repeats, seed, metric: *metric, displacements: disp.clone() };
            let result = sample_sweep(&r, &g, &cfg)?;
            let mut report = Report::default();
            report.push("metric", metric.to_string());
            report.push("repeats", *repeats);
            for ((n, m), s) in result.sample_sizes.iter().zip(&result.means).zip(&result.stddevs) {
                report.push(format!("mean@{n}"), *m);
                report.push(format!("stddev@{n}"), *s);
            }
            Ok(report)
        }
        Command::Synth(SynthCommand::Tokens { n, codebook, grid, kind, zipf, out }) => {
            let k = Codebook::new(*codebook)?;
            let ds = match kind {
                SynthKind::Structured => structured_tokens(*n, k, *grid, &SceneConfig::default(), seed)?,
                SynthKind::Iid => {
                    let probs: Vec<f64> = (0..k.len()).map(|r| 1.0 / ((r + 1) as f64).powf(*zipf)).collect();
                    iid_tokens(*n, &probs, grid.cells() as usize, Some(*grid), seed)?
                }
            };
            save_tokens(ctx, &ds, out)?;
            let mut report = Report::default();
            report.push("sequences", ds.len());
            Ok(report)
        }
        Command::Synth(SynthCommand::Images { n, width, height, out }) => {
            fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            for (i, img) in natural_images(*n, *width, *height, seed).iter().enumerate() {
                img.save(&out.join(format!("img_{i:05}.png")))?;
            }
            ctx.output(out)?;
            let mut report = Report::default();
            report.push("images", *n);
            Ok(report)
        }
        Command::Replay { .. } => Err(CliError::Usage("replay cannot be nested".into()).into()),
    }
}

fn json_number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

fn read_input(ctx: &mut RunContext, path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(tokenmetric::Error::from).with_context(|| format!("reading {}", path.display()))?;
    ctx.input(path)?;
    Ok(bytes)
}

fn write_file(ctx: &mut RunContext, path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(tokenmetric::Error::from).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(bytes)?;
    f.flush()?;
    ctx.output(path)
}

/// Reads binary or text token files (text files start with `#chtk`).
fn load_tokens(ctx: &mut RunContext, path: &Path) -> Result<TokenDataset> {
    let bytes = read_input(ctx, path)?;
    let ds = if bytes.starts_with(b"#chtk") { read_tokens_text(&bytes[..]) } else { read_tokens(&bytes[..]) };
    ds.with_context(|| format!("parsing {}", path.display()))
}

/// Writes text when the path ends in `.txt`, binary otherwise.
fn save_tokens(ctx: &mut RunContext, ds: &TokenDataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("txt")) {
        write_tokens_text(ds, &mut buf)?;
    } else {
        write_tokens(ds, &mut buf)?;
    }
    write_file(ctx, path, &buf)
}

fn load_features(ctx: &mut RunContext, path: &Path) -> Result<FeatureSet> {
    read_features(&read_input(ctx, path)?[..]).with_context(|| format!("parsing {}", path.display()))
}

/// PNG and PPM files in the directory, in lexicographic filename order.
fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(tokenmetric::Error::from).with_context(|| format!("listing {}", dir.display()))?;
    let mut files = Vec::new();
    for e in entries {
        let p = e?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if p.is_file() && matches!(ext.as_deref(), Some("png" | "ppm")) {
            files.push(p);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if files.is_empty() {
        return Err(CliError::Input(format!("no inputs: {} has no PNG or PPM images", dir.display())).into());
    }
    Ok(files)
}

fn fail_on_errors<T>(ctx: &RunContext, files: &[PathBuf], results: Vec<tokenmetric::Result<T>>) -> Result<Vec<T>> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut failed = 0;
    for (file, r) in files.iter().zip(results) {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                eprintln!("error: {}: {e}", file.display());
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Input(format!("{failed} of {total} images failed")).into());
    }
    ctx.note(format!("processed {total} images"));
    Ok(ok)
}

fn cmd_tokenize(ctx: &mut RunContext, dir: &Path, grid: tokenmetric::token_io::GridLayout, codebook: u32, out: &Path) -> Result<Report> {
    let palette = build_palette(Codebook::new(codebook)?);
    let files = list_images(dir)?;
    ctx.input(dir)?;
    let results = map_range(Execution::Parallel, files.len(), |i| {
        Image::load(&files[i]).and_then(|img| tokenize(&img, grid, &palette))
    });
    let seqs = fail_on_errors(ctx, &files, results)?;
    let mut ds = TokenDataset::new(palette.codebook(), grid.cells() as usize, Some(grid))?;
    for s in &seqs {
        ds.push(s.ids())?;
    }
    save_tokens(ctx, &ds, out)?;
    let mut report = Report::default();
    report.push("sequences", ds.len());
    report.push("grid", grid.to_string());
    report.push("codebook", codebook);
    Ok(report)
}

fn cmd_degrade(ctx: &mut RunContext, dir: &Path, spec: DegradeSpec, out: &Path) -> Result<Report> {
    let files = list_images(dir)?;
    ctx.input(dir)?;
    let results = map_range(Execution::Parallel, files.len(), |i| {
        let per_image = DegradeSpec { seed: derive_seed(spec.seed, i as u64), ..spec };
        Image::load(&files[i]).and_then(|img| per_image.apply(&img))
    });
    let images = fail_on_errors(ctx, &files, results)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (file, img) in files.iter().zip(&images) {
        img.save(&out.join(file.file_name().expect("listed files have names")))?;
    }
    ctx.output(out)?;
    let mut report = Report::default();
    report.push("images", images.len());
    report.push("severity", tokenmetric::image::severity_of(&spec)?);
    Ok(report)
}
