use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use stereo_budget::bench::{self, Method, Sampling, SweepOptions, SweepRow};
use stereo_budget::encoder::{self, SampleSet};
use stereo_budget::imagecore::io::{read_image, read_pfm, write_image, write_mask, write_pfm};
use stereo_budget::jbf::FilterParams;
use stereo_budget::matcher::{decode, DisparityMap};
use stereo_budget::synthesis::{psnr, synthesize};

use crate::args::{BenchArgs, Cli, Command, DecodeArgs, EncodeArgs, SchemeArg, SynthesizeArgs};
use crate::prov::write_sidecar;
use crate::UsageError;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Encode(a) => encode_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Synthesize(a) => synthesize_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

fn quote(s: &str) -> String {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_./,:=+".contains(c)) {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

fn path_arg(p: &Path) -> String {
    p.display().to_string()
}

/// Prints the command line that reproduces this run and returns it.
fn print_config(sub: &str, flags: &[String]) -> String {
    let line = std::iter::once(format!("sob {sub}"))
        .chain(flags.iter().map(|f| quote(f)))
        .collect::<Vec<_>>()
        .join(" ");
    println!("effective config:\n  {line}");
    line
}

fn read_payload(path: &Path) -> Result<SampleSet> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    encoder::deserialize(&bytes).with_context(|| format!("decoding payload {}", path.display()))
}

fn encode_cmd(a: &EncodeArgs) -> Result<()> {
    let img = read_image(&a.input)?;
    let count = a
        .count
        .unwrap_or_else(|| ((0.04 * (img.width() * img.height()) as f64).round() as usize).max(1));
    let mut flags = vec!["--scheme".into(), a.scheme.name().into()];
    match a.scheme {
        SchemeArg::Grid => flags.extend(["--spacing".into(), a.spacing.to_string()]),
        SchemeArg::Fps => flags.extend([
            "--count".into(),
            count.to_string(),
            "--seed".into(),
            a.seed.to_string(),
            "--adaptive".into(),
            a.adaptive.to_string(),
        ]),
        SchemeArg::Downsample => flags.extend(["--factor".into(), a.factor.to_string()]),
    }
    flags.extend([path_arg(&a.input), path_arg(&a.output)]);
    let command = print_config("encode", &flags);
    let payload = match a.scheme {
        SchemeArg::Grid => encoder::encode_grid(&img, a.spacing)?,
        SchemeArg::Fps => encoder::encode_fps(&img, count, a.seed, a.adaptive)?,
        SchemeArg::Downsample => encoder::encode_downsample(&img, a.factor)?,
    };
    let bytes = encoder::serialize(&payload);
    std::fs::write(&a.output, &bytes).with_context(|| format!("writing {}", a.output.display()))?;
    write_sidecar(&a.output, &command, &[&a.input])?;
    println!("scheme: {}", payload.scheme().name());
    if a.scheme == SchemeArg::Fps {
        println!("seed: {}", a.seed);
    }
    println!("samples: {}", payload.len());
    println!("fraction: {:.2}%", 100.0 * payload.fraction());
    println!("bytes: {}", bytes.len());
    Ok(())
}

fn decode_cmd(a: &DecodeArgs) -> Result<()> {
    let p = a.pipeline.params(a.dmax);
    p.validate()?;
    let scale = a.scale.unwrap_or_else(|| (255 / a.dmax.max(1)).max(1) as u32);
    let mut flags = vec![
        "--strategy".into(),
        a.strategy.name().into(),
        "--payload".into(),
        path_arg(&a.payload),
        "--left".into(),
        path_arg(&a.left),
        "--dmax".into(),
        a.dmax.to_string(),
        "--out".into(),
        path_arg(&a.out),
        "--scale".into(),
        scale.to_string(),
    ];
    flags.extend(a.pipeline.flags(true));
    let command = print_config("decode", &flags);

    let payload = read_payload(&a.payload)?;
    let left = read_image(&a.left)?;
    let t = Instant::now();
    let map = decode(a.strategy, &left, &payload, &p)?;
    let seconds = t.elapsed().as_secs_f64();

    let pgm = a.out.with_extension("pgm");
    let pfm = a.out.with_extension("pfm");
    let mut stable_name = a.out.file_name().unwrap_or_default().to_owned();
    stable_name.push("_stable.png");
    let stable = a.out.with_file_name(stable_name);
    write_image(&pgm, &map.to_image(scale as f32))?;
    write_pfm(&pfm, map.width(), map.height(), &map.to_f32())?;
    write_mask(&stable, map.width(), map.height(), map.stability())?;
    for out in [&pgm, &pfm, &stable] {
        write_sidecar(out, &command, &[&a.payload, &a.left])?;
    }
    println!("payload: {} at {:.2}%", payload.scheme().name(), 100.0 * payload.fraction());
    println!("stable: {:.2}%", 100.0 * map.stable_fraction());
    println!("seconds: {seconds:.3}");
    println!("wrote: {} {} {}", pgm.display(), pfm.display(), stable.display());
    Ok(())
}

/// Nearest non-negative integer disparities; the map's range is its maximum.
fn map_from_pfm(path: &Path) -> Result<DisparityMap> {
    let (w, h, values) = read_pfm(path)?;
    if values.iter().any(|v| !v.is_finite()) {
        anyhow::bail!("{}: non-finite disparity", path.display());
    }
    let d: Vec<u32> = values.iter().map(|v| v.max(0.0).round() as u32).collect();
    let dmax = d.iter().copied().max().unwrap_or(0) as usize;
    Ok(DisparityMap::new(w, h, dmax, d, vec![true; w * h])?)
}

fn synthesize_cmd(a: &SynthesizeArgs) -> Result<()> {
    let mut flags = vec![
        "--left".into(),
        path_arg(&a.left),
        "--disparity".into(),
        path_arg(&a.disparity),
        "--payload".into(),
        path_arg(&a.payload),
    ];
    if let Some(t) = &a.truth {
        flags.extend(["--truth".into(), path_arg(t)]);
    }
    flags.extend([
        "--out".into(),
        path_arg(&a.out),
        "--sign".into(),
        a.sign.name().into(),
        "--sigma-r".into(),
        a.sigma_r.to_string(),
        "--sigma-s-mult".into(),
        a.sigma_s_mult.to_string(),
    ]);
    let command = print_config("synthesize", &flags);

    let left = read_image(&a.left)?;
    let map = map_from_pfm(&a.disparity)?;
    let payload = read_payload(&a.payload)?;
    let fp = FilterParams::new(a.sigma_s_mult * payload.spacing() as f32, a.sigma_r)?;
    let s = synthesize(&left, &map, &payload, a.sign, &fp)?;

    let image = a.out.with_extension("png");
    let mut occ_name = a.out.file_name().unwrap_or_default().to_owned();
    occ_name.push("_occlusion.png");
    let occlusion = a.out.with_file_name(occ_name);
    write_image(&image, &s.output)?;
    write_mask(&occlusion, left.width(), left.height(), &s.warped.occlusion)?;
    for out in [&image, &occlusion] {
        write_sidecar(out, &command, &[&a.left, &a.disparity, &a.payload])?;
    }
    println!("holes: {:.2}%", 100.0 * s.warped.hole_count() as f64 / (left.width() * left.height()) as f64);
    if let Some(t) = &a.truth {
        let truth = read_image(t)?;
        let holes = Some(s.warped.occlusion.as_slice());
        println!("psnr warp: {:.2} dB", psnr(&s.warped.image, &truth, holes)?);
        println!("psnr enhanced: {:.2} dB", psnr(&s.output, &truth, holes)?);
        println!("psnr output (all pixels): {:.2} dB", psnr(&s.output, &truth, None)?);
    }
    println!("wrote: {} {}", image.display(), occlusion.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or("-".into(), |v| format!("{v:.digits$}"))
}

fn bench_cmd(a: &BenchArgs) -> Result<()> {
    let data = a.data.clone().unwrap_or_else(bench::default_data_dir);
    let sampling: Sampling = a.sampling.parse()?;
    let methods: Vec<Method> = a
        .strategies
        .iter()
        .map(|s| s.parse().map_err(|e: stereo_budget::Error| UsageError(e.to_string())))
        .collect::<Result<_, _>>()?;
    let budgets: Vec<f64> = {
        let mut b = a.budgets.clone();
        b.sort_by(f64::total_cmp);
        b
    };
    let mut flags = vec![
        "--data".into(),
        path_arg(&data),
        "--sets".into(),
        a.sets.join(","),
        "--strategies".into(),
        methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
        "--budgets".into(),
        budgets.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(","),
        "--sampling".into(),
        sampling.name().into(),
        "--seed".into(),
        a.seed.to_string(),
        "--threshold".into(),
        a.threshold.to_string(),
        "--out".into(),
        path_arg(&a.out),
    ];
    if let Some(b) = &a.baseline {
        flags.extend(["--baseline".into(), path_arg(b)]);
    }
    if a.no_synthesis {
        flags.push("--no-synthesis".into());
    }
    if a.warmup {
        flags.push("--warmup".into());
    }
    flags.extend(a.pipeline.flags(false));
    print_config("bench", &flags);

    let mut rows: Vec<SweepRow> = Vec::new();
    for name in &a.sets {
        let ds = bench::load_middlebury(&data, name).with_context(|| format!("loading dataset {name}"))?;
        for w in &ds.warnings {
            log::warn!("{w}");
        }
        let mut params = a.pipeline.params(ds.dmax);
        params.sign = ds.sign;
        let opts = SweepOptions {
            params,
            sampling,
            seed: a.seed,
            threshold: a.threshold,
            synthesis: !a.no_synthesis,
            warmup: a.warmup,
        };
        for &m in &methods {
            rows.extend(bench::rate_distortion_sweep(&ds, m, &budgets, &opts)?);
        }
    }
    if let Some(b) = &a.baseline {
        rows = bench::merge_rows(rows, bench::read_csv(b)?);
    }
    bench::write_csv(&a.out, &rows)?;

    println!(
        "{:<10} {:<12} {:<10} {:>8} {:>9} {:>8} {:>9} {:>8} {:>9} {:>8}  status",
        "dataset", "strategy", "scheme", "fraction", "bad_nonoc", "bad_all", "rms_nonoc", "psnr_w", "psnr_enh", "seconds"
    );
    for r in &rows {
        println!(
            "{:<10} {:<12} {:<10} {:>7.2}% {:>9} {:>8} {:>9} {:>8} {:>9} {:>8}  {}",
            r.dataset,
            r.strategy,
            r.scheme,
            100.0 * r.fraction,
            fmt_opt(r.bad_nonocc, 2),
            fmt_opt(r.bad_all, 2),
            fmt_opt(r.rms_nonocc, 3),
            fmt_opt(r.psnr_warp, 2),
            fmt_opt(r.psnr_enhanced, 2),
            fmt_opt(r.seconds, 2),
            r.status
        );
    }
    println!("wrote: {}", a.out.display());
    if rows.iter().any(|r| !r.status.is_empty() && !r.is_ok()) {
        anyhow::bail!("some rows failed; see the status column");
    }
    Ok(())
}
