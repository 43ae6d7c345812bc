//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenmetric::baselines::{frechet_distance, mmd2, GaussianFit};
use tokenmetric::cmms::{
    corrupt_tokens, loss_and_grad, quality_target, score_dataset, train, RegressorConfig, RegressorParams, TrainConfig,
};
use tokenmetric::diagnostics::{adjacent_mi, token_entropy};
use tokenmetric::distances::{chd, hellinger_dense};
use tokenmetric::eval::{sample_sweep, spearman, SweepConfig, SweepMetric};
use tokenmetric::histograms::{cooccurrence, unigram, DisplacementSet};
use tokenmetric::image::{DegradeKind, DegradeSpec, Image};
use tokenmetric::synth::{derive_seed, iid_tokens, natural_images, structured_tokens, SceneConfig};
use tokenmetric::token_io::{read_features, read_tokens, write_features, write_tokens, Codebook, FeatureSet, GridLayout, TokenDataset};
use tokenmetric::toy_tokenizer::{build_palette, tokenize_all};
use tokenmetric::Execution;

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn hellinger_closed_forms() -> Outcome {
    let h = hellinger_dense(&[1.0, 0.0], &[0.5, 0.5]).map_err(|e| e.to_string())?;
    let want = (1.0 - 0.5f64.sqrt()).sqrt();
    let same = hellinger_dense(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]).unwrap();
    let disjoint = hellinger_dense(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.3, 0.7]).unwrap();
    check(
        close(h, want, 1e-12) && same == 0.0 && disjoint == 1.0,
        format!("h={h:.15} (want {want:.15}), identical={same}, disjoint={disjoint}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let disp = [
        DisplacementSet::right_down(),
        DisplacementSet::new(vec![(1, 0), (0, 1), (1, 1), (-1, 1)]).unwrap(),
    ];
    for seed in 0..20u64 {
        let ds = support::random_dataset(seed);
        let u = unigram(&ds).unwrap().probs();
        for (g, w) in u.iter().zip(support::unigram(&ds)) {
            worst = worst.max((g - w).abs());
        }
        for d in &disp {
            let got = cooccurrence(&ds, d).unwrap().entries();
            for (pair, mass) in support::unordered_cooc(&ds, d.as_slice()) {
                let g = got.iter().find(|(p, _)| *p == pair).map_or(0.0, |(_, m)| *m);
                worst = worst.max((g - mass).abs());
            }
            let mi = adjacent_mi(&ds, d).unwrap();
            worst = worst.max((mi - support::adjacent_mi(&ds, d.as_slice())).abs());
        }
        let dim = 1 + seed as usize % 5;
        let x = support::random_features(seed, dim, 3 + seed as usize % 7, 0.0);
        let y = support::random_features(seed + 1000, dim, 2 + seed as usize % 5, 0.3);
        worst = worst.max((mmd2(&x, &y, None).unwrap() - support::mmd2(&x, &y)).abs());
    }
    check(worst <= 1e-12, format!("20 seeds, max abs deviation {worst:.2e}"))
}

fn frechet_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let fit = |m: f64, v: f64| GaussianFit::from_parts(&[m], &[v]).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (m1, m2) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let (s1, s2): (f64, f64) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let (a, b) = (fit(m1, s1 * s1), fit(m2, s2 * s2));
        let want = (m1 - m2).powi(2) + (s1 - s2).powi(2);
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        let aa = frechet_distance(&a, &a).unwrap();
        worst = worst.max((ab - want).abs()).max((ab - ba).abs()).max(aa);
    }
    check(worst <= 1e-9, format!("100 parameterizations, max deviation {worst:.2e}"))
}

const MINI_CORPUS: usize = 1000;
const IMG_W: usize = 64;
const IMG_H: usize = 32;

fn mini_grid() -> GridLayout {
    GridLayout::new(8, 16).unwrap()
}

fn degradation_monotonicity() -> Outcome {
    let images = natural_images(MINI_CORPUS, IMG_W, IMG_H, 2024);
    let palette = build_palette(Codebook::new(4096).unwrap());
    let disp = DisplacementSet::default();
    let clean = tokenize_all(&images, mini_grid(), &palette, Execution::Parallel).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    let families: [(&str, Option<DegradeKind>, Vec<f64>); 4] = [
        ("tokens", None, linspace(0.03, 0.3, 10)),
        ("blur", Some(DegradeKind::GaussianBlur), linspace(0.5, 3.0, 10)),
        ("noise", Some(DegradeKind::GaussianNoise), linspace(0.01, 0.1, 10)),
        ("occlusion", Some(DegradeKind::Occlusion), linspace(0.1, 0.4, 10)),
    ];
    for (name, kind, levels) in families {
        let mut values = Vec::new();
        for (li, &level) in levels.iter().enumerate() {
            let seed = derive_seed(7, li as u64);
            let degraded = match kind {
                None => {
                    let mut ds = clean.empty_like();
                    for (i, seq) in clean.sequences().enumerate() {
                        ds.push(corrupt_tokens(seq, level, clean.codebook(), derive_seed(seed, i as u64)).unwrap().ids())
                            .unwrap();
                    }
                    ds
                }
                Some(kind) => {
                    let imgs: Vec<Image> = images
                        .iter()
                        .enumerate()
                        .map(|(i, img)| DegradeSpec::new(kind, level, derive_seed(seed, i as u64)).unwrap().apply(img).unwrap())
                        .collect();
                    tokenize_all(&imgs, mini_grid(), &palette, Execution::Parallel).unwrap()
                }
            };
            values.push(chd(&clean, &degraded, &disp).unwrap().chd);
        }
        let rho = spearman(&values, &levels).unwrap().value;
        ok &= rho >= 0.95;
        lines.push(format!("{name} rho={rho:.3} chd {:.4}..{:.4}", values[0], values[9]));
    }
    check(ok, lines.join("; "))
}

/// Runs at K=1024: with 1000 sequences the plug-in MI estimate at K=4096 is
/// dominated by its sparse-joint bias, which grows with corruption.
fn diagnostics_direction() -> Outcome {
    let grid = mini_grid();
    let k = Codebook::new(1024).unwrap();
    let base = structured_tokens(MINI_CORPUS, k, grid, &SceneConfig::default(), 31).unwrap();
    let disp = DisplacementSet::default();
    let levels = linspace(0.0, 0.3, 10);
    let (mut ent, mut mi) = (Vec::new(), Vec::new());
    for (li, &p) in levels.iter().enumerate() {
        let mut ds = base.empty_like();
        for (i, seq) in base.sequences().enumerate() {
            ds.push(corrupt_tokens(seq, p, k, derive_seed(li as u64, i as u64)).unwrap().ids()).unwrap();
        }
        ent.push(token_entropy(&ds).unwrap());
        mi.push(adjacent_mi(&ds, &disp).unwrap());
    }
    let r_ent = spearman(&ent, &levels).unwrap().value;
    let r_mi = spearman(&mi, &levels).unwrap().value;
    check(
        r_ent >= 0.95 && r_mi <= -0.95,
        format!(
            "entropy rho={r_ent:.3} ({:.3}..{:.3}), mi rho={r_mi:.3} ({:.3}..{:.3})",
            ent[0], ent[9], mi[0], mi[9]
        ),
    )
}

fn gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let cfg = RegressorConfig {
            embed_dim: 8,
            num_layers: 2,
            num_heads: 2,
            mlp_hidden: 8,
            seq_len: 4,
            codebook: Codebook::new(7).unwrap(),
            seed,
        };
        let params = RegressorParams::init(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let seqs: Vec<Vec<u32>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(0..7)).collect()).collect();
        let batch: Vec<(&[u32], f64)> = seqs.iter().map(|s| (s.as_slice(), rng.random_range(0.0..1.0))).collect();
        let (_, grad) = loss_and_grad(&params, &batch).unwrap();
        let h = 1e-4;
        for (i, &analytic) in grad.iter().enumerate() {
            let mut p = params.clone();
            p.values_mut()[i] += h;
            let up = loss_and_grad(&p, &batch).unwrap().0;
            p.values_mut()[i] -= 2.0 * h;
            let down = loss_and_grad(&p, &batch).unwrap().0;
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    check(worst <= 1e-4, format!("5 seeds, max relative error {worst:.2e}"))
}

fn learning_check() -> Outcome {
    let grid = GridLayout::new(4, 8).unwrap();
    let k = Codebook::new(1024).unwrap();
    let scene = SceneConfig::default();
    let corpus = structured_tokens(2000, k, grid, &scene, 101).unwrap();
    let held_out = structured_tokens(200, k, grid, &scene, 202).unwrap();
    let rcfg = RegressorConfig::test_scale(grid.cells() as usize, k, 5);
    let tcfg = TrainConfig::test_scale(6);
    let (params, log) = train(&corpus, &tcfg, rcfg).unwrap();
    let levels = linspace(0.0, 0.3, 10);
    let mut means = Vec::new();
    let (mut all_scores, mut all_p) = (Vec::new(), Vec::new());
    for (li, &p) in levels.iter().enumerate() {
        let mut ds = held_out.empty_like();
        for (i, seq) in held_out.sequences().enumerate() {
            ds.push(corrupt_tokens(seq, p, k, derive_seed(900 + li as u64, i as u64)).unwrap().ids()).unwrap();
        }
        let scores = score_dataset(&params, &ds).unwrap();
        means.push(scores.iter().sum::<f64>() / scores.len() as f64);
        all_p.extend(std::iter::repeat_n(p, scores.len()));
        all_scores.extend(scores);
    }
    let rho = spearman(&means, &levels).unwrap().value;
    let rho_all = spearman(&all_scores, &all_p).unwrap().value;
    let final_loss = *log.epoch_losses.last().unwrap();
    let q0 = quality_target(0.0).unwrap();
    let q3 = quality_target(0.3).unwrap();
    check(
        rho <= -0.9 && q0 == 1.0 && q3 == (-6.0f64).exp(),
        format!(
            "level rho={rho:.3}, per-sequence rho={rho_all:.3}, loss {:.4}->{final_loss:.4}, scores {:.3}..{:.3}, q(0)={q0}, q(0.3)={q3}",
            log.initial_loss, means[0], means[9]
        ),
    )
}

fn sample_efficiency() -> Outcome {
    let grid = mini_grid();
    let k = 1024;
    let zipf = |s: f64| (0..k).map(|r| 1.0 / ((r + 1) as f64).powf(s)).collect::<Vec<f64>>();
    let real = iid_tokens(5000, &zipf(1.1), grid.cells() as usize, Some(grid), 1).unwrap();
    let gen = iid_tokens(5000, &zipf(0.9), grid.cells() as usize, Some(grid), 2).unwrap();
    let cfg = SweepConfig {
        sizes: vec![100, 1000],
        repeats: 20,
        seed: 3,
        metric: SweepMetric::Chd,
        displacements: DisplacementSet::default(),
    };
    let r = sample_sweep(&real, &gen, &cfg).unwrap();
    let cv = r.coefficients_of_variation();
    check(
        cv[1] <= 0.5 * cv[0],
        format!("cv@100={:.4} cv@1000={:.4} ratio={:.3} (means {:.4}, {:.4})", cv[0], cv[1], cv[1] / cv[0], r.means[0], r.means[1]),
    )
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tokenmetric")
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin()).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write_feature_file(path: &Path, seed: u64, shift: f64) {
    let fs = support::random_features(seed, 6, 60, shift);
    let mut buf = Vec::new();
    write_features(&fs, &mut buf).unwrap();
    std::fs::write(path, buf).unwrap();
}

/// Every subcommand, recorded at one thread count and replayed at others.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    write_feature_file(&dir.join("fa.chfv"), 1, 0.0);
    write_feature_file(&dir.join("fb.chfv"), 2, 0.4);
    let human: String = (0..240).map(|i| format!("{i} {}\n", (i % 17) as f64 * 0.1)).collect();
    std::fs::write(dir.join("human.txt"), human).unwrap();

    let commands: Vec<Vec<&str>> = vec![
        vec!["--seed", "5", "synth", "images", "--n", "24", "--width", "32", "--height", "16", "--out", "imgs"],
        vec!["--seed", "6", "degrade", "--in", "imgs", "--kind", "blur", "--param", "1.5", "--out", "d_blur"],
        vec!["--seed", "6", "degrade", "--in", "imgs", "--kind", "noise", "--param", "0.05", "--out", "d_noise"],
        vec!["--seed", "6", "degrade", "--in", "imgs", "--kind", "jpeg", "--param", "40", "--out", "d_jpeg"],
        vec!["--seed", "6", "degrade", "--in", "imgs", "--kind", "occlusion", "--param", "0.2", "--out", "d_occ"],
        vec!["--seed", "6", "degrade", "--in", "imgs", "--kind", "contrast", "--param", "1.3", "--out", "d_con"],
        vec!["tokenize", "--in", "imgs", "--grid", "4x8", "--codebook", "256", "--out", "clean.chtk"],
        vec!["tokenize", "--in", "d_noise", "--grid", "4x8", "--codebook", "256", "--out", "noisy.txt"],
        vec!["--seed", "7", "synth", "tokens", "--n", "240", "--codebook", "256", "--grid", "4x8", "--out", "a.chtk"],
        vec!["--seed", "8", "synth", "tokens", "--n", "240", "--codebook", "256", "--grid", "4x8", "--kind", "iid", "--out", "b.chtk"],
        vec!["--seed", "9", "corrupt", "--in", "a.chtk", "--p", "0.2", "--swap", "0.1", "--out", "a_bad.chtk"],
        vec!["chd", "--real", "a.chtk", "--gen", "a_bad.chtk", "--manifest", "chd.json"],
        vec!["chd", "--real", "clean.chtk", "--gen", "noisy.txt", "--distance", "kl", "--json", "--manifest", "chd_kl.json"],
        vec!["tokenstats", "--in", "a_bad.chtk", "--manifest", "stats.json"],
        vec!["baseline", "frechet", "--real", "fa.chfv", "--gen", "fb.chfv", "--manifest", "fid.json"],
        vec!["baseline", "mmd", "--real", "fa.chfv", "--gen", "fb.chfv", "--manifest", "mmd.json"],
        vec!["--seed", "10", "cmms", "train", "--tokens", "a.chtk", "--out", "m.chmm", "--epochs", "1"],
        vec!["cmms", "score", "--model", "m.chmm", "--tokens", "a_bad.chtk", "--out", "scores.txt"],
        vec!["correlate", "--metric", "scores.txt", "--human", "human.txt", "--manifest", "corr.json"],
        vec!["--seed", "11", "sweep", "--real", "a.chtk", "--gen", "b.chtk", "--sizes", "40,120", "--repeats", "6", "--manifest", "sweep.json"],
    ];
    let mut manifests = Vec::new();
    for cmd in &commands {
        let mut args = vec!["--threads", "1"];
        args.extend(cmd);
        run_cli(dir, &args)?;
        let manifest = match cmd.iter().position(|a| *a == "--manifest") {
            Some(i) => cmd[i + 1].to_string(),
            None => format!("{}.manifest.json", cmd[cmd.iter().position(|a| *a == "--out").unwrap() + 1]),
        };
        manifests.push(manifest);
    }
    let mut replays = 0;
    for m in &manifests {
        for threads in ["2", "4"] {
            let out = run_cli(dir, &["--threads", threads, "replay", m])?;
            if !out.contains("replay=ok") {
                return Err(format!("{m} at {threads} threads: {out}"));
            }
            replays += 1;
        }
    }
    check(replays == 2 * commands.len(), format!("{} runs, {replays} bit-identical replays at 2 and 4 threads", commands.len()))
}

fn dataset_invariants_hold(ds: &TokenDataset) -> bool {
    ds.codebook().size() >= 2
        && ds.seq_len() > 0
        && ds.flat_ids().len() == ds.len() * ds.seq_len()
        && ds.flat_ids().iter().all(|&t| t < ds.codebook().size())
        && ds.layout().is_none_or(|l| l.cells() as usize == ds.seq_len())
}

fn features_invariants_hold(fs: &FeatureSet) -> bool {
    fs.dim() > 0 && fs.flat().len() == fs.dim() * fs.len() && fs.flat().iter().all(|v| v.is_finite())
}

/// 10,000 files with corrupted headers (byte edits, truncations, appended
/// bytes) across both binary formats.
fn format_fuzzing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let (mut panics, mut violations, mut accepted) = (0, 0, 0);
    for case in 0..10_000u64 {
        let tokens = case % 2 == 0;
        let (mut bytes, header) = if tokens {
            let ds = support::random_dataset(case);
            let mut buf = Vec::new();
            write_tokens(&ds, &mut buf).unwrap();
            (buf, 29)
        } else {
            let fs = support::random_features(case, 1 + case as usize % 4, case as usize % 9, 0.0);
            let mut buf = Vec::new();
            write_features(&fs, &mut buf).unwrap();
            (buf, 17)
        };
        for _ in 0..rng.random_range(1..=4) {
            let i = rng.random_range(0..header);
            bytes[i] = match rng.random_range(0..3) {
                0 => rng.random(),
                1 => bytes[i] ^ (1 << rng.random_range(0..8)),
                _ => [0x00, 0xff, 0x7f, 0x80][rng.random_range(0..4)],
            };
        }
        match rng.random_range(0..4) {
            0 => bytes.truncate(rng.random_range(0..=bytes.len())),
            1 => bytes.extend((0..rng.random_range(1..16)).map(|_| rng.random::<u8>())),
            _ => {}
        }
        let result = catch_unwind(AssertUnwindSafe(|| {
            if tokens {
                read_tokens(&bytes[..]).map(|ds| dataset_invariants_hold(&ds))
            } else {
                read_features(&bytes[..]).map(|fs| features_invariants_hold(&fs))
            }
        }));
        match result {
            Err(_) => panics += 1,
            Ok(Ok(valid)) => {
                accepted += 1;
                if !valid {
                    violations += 1;
                }
            }
            Ok(Err(_)) => {}
        }
    }
    check(
        panics == 0 && violations == 0,
        format!("10000 mutated files: {panics} panics, {violations} invalid datasets, {accepted} accepted as valid"),
    )
}

fn main() {
    let criteria: [(&str, Criterion); _] = [
        ("hellinger closed forms", hellinger_closed_forms),
        ("brute-force oracle equivalence", oracle_equivalence),
        ("frechet correctness", frechet_correctness),
        ("degradation monotonicity", degradation_monotonicity),
        ("diagnostics direction", diagnostics_direction),
        ("regressor gradient check", gradient_check),
        ("regressor learning check", learning_check),
        ("sample-efficiency sweep", sample_efficiency),
        ("determinism", determinism),
        ("format fuzzing", format_fuzzing),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
