//! `stbc` command-line frontend.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or configuration error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::Rng;

use stbc_core::analysis::{
    angle_sweep, check_alamouti_combination, min_determinant, min_determinant_single_symbol,
    sweep_argmax, verify_sparsity, write_sweep_csv, MinDetOptions, DEFAULT_MINDET_BUDGET,
};
use stbc_core::channel::{draw_channel, equivalent_channel, noise_variance, transmit, RngStream};
use stbc_core::codes::{CodeDescriptor, CodeKind, SparsityPattern, KAPPA, N_T};
use stbc_core::constellation::make_qam;
use stbc_core::decoder::{
    exhaustive_candidates, fast_leaf_count, DecoderKind, DecoderWorkspace,
    DEFAULT_EXHAUSTIVE_BUDGET,
};
use stbc_core::sim::{run_point, write_ber_csv, SimConfig};
use stbc_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "stbc",
    version,
    about = "Fast-decodable 4x2 space-time block code lab"
)]
struct Cli {
    /// key=value file with default flag values; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the structural properties the fast decoder relies on.
    Verify(VerifyArgs),
    /// Exhaustive minimum determinant over all codeword differences.
    Mindet(MindetArgs),
    /// Minimum determinant as a function of the rotation angle.
    SweepAngle(SweepArgs),
    /// Monte Carlo bit error rate over Rayleigh fading.
    Ber(BerArgs),
    /// Decoder complexity counters on shared channel instances.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct AngleArgs {
    /// Rotation angle with unit: `0.5rad`, `31.7deg`, `acos:0.8881`, `atan:1.618`.
    #[arg(long, value_parser = parse_angle, conflicts_with = "rho_deg", allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Rotation angle in degrees.
    #[arg(long, value_name = "DEG", allow_hyphen_values = true)]
    rho_deg: Option<f64>,
}

impl AngleArgs {
    fn resolve(&self, code: CodeKind) -> f64 {
        self.rho
            .or(self.rho_deg.map(f64::to_radians))
            .unwrap_or_else(|| code.default_rho())
    }
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct VerifyArgs {
    #[arg(long, default_value = "proposed", value_parser = parse_code)]
    code: CodeKind,
    /// Zero pattern to check; defaults to the code's own.
    #[arg(long, value_parser = parse_pattern)]
    pattern: Option<SparsityPattern>,
    #[command(flatten)]
    angle: AngleArgs,
    /// Random channels for the sparsity check.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Random pairs for the Alamouti combination check.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    combination_trials: u64,
    /// QPSK instances decoded by every applicable decoder and the exhaustive oracle.
    #[arg(long, default_value_t = 50)]
    instances: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct MindetArgs {
    #[arg(long, default_value = "proposed", value_parser = parse_code)]
    code: CodeKind,
    #[arg(long, default_value_t = 4)]
    qam: usize,
    #[command(flatten)]
    angle: AngleArgs,
    /// Largest number of difference vectors to scan.
    #[arg(long, default_value_t = DEFAULT_MINDET_BUDGET)]
    budget: u128,
    #[arg(long)]
    workers: Option<usize>,
    /// Only scan differences confined to one symbol.
    #[arg(long)]
    single_symbol: bool,
    /// Also write the report as a one-row CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct SweepArgs {
    #[arg(long, default_value = "proposed", value_parser = parse_code)]
    code: CodeKind,
    #[arg(long, default_value_t = 4)]
    qam: usize,
    /// Angle grid in degrees, `start:step:stop`.
    #[arg(long, default_value = "20:1:40", value_parser = parse_grid)]
    deg: Grid,
    #[arg(long, default_value_t = DEFAULT_MINDET_BUDGET)]
    budget: u128,
    #[arg(long)]
    workers: Option<usize>,
    /// CSV destination; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct BerArgs {
    #[arg(long, default_value = "proposed", value_parser = parse_code)]
    code: CodeKind,
    #[arg(long, default_value = "fast", value_parser = parse_decoder)]
    decoder: DecoderKind,
    #[arg(long, default_value_t = 4)]
    qam: usize,
    #[command(flatten)]
    angle: AngleArgs,
    /// SNR grid in dB, `start:step:stop`.
    #[arg(long, default_value = "0:2:16", value_parser = parse_grid)]
    snr: Grid,
    #[arg(long, default_value_t = 1_000_000)]
    max_frames: u64,
    #[arg(long, default_value_t = 200)]
    min_errors: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_EXHAUSTIVE_BUDGET)]
    budget: u128,
    /// Re-decode every k-th frame with the sphere decoder (0 disables).
    #[arg(long, default_value_t = 0)]
    cross_check: u64,
    /// Record wall time in the CSV.
    #[arg(long)]
    timing: bool,
    /// CSV destination; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct BenchArgs {
    #[arg(long, default_value = "proposed", value_parser = parse_code)]
    code: CodeKind,
    #[arg(long, default_value_t = 4)]
    qam: usize,
    #[command(flatten)]
    angle: AngleArgs,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    instances: u64,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    snr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EXHAUSTIVE_BUDGET)]
    budget: u128,
}

#[derive(Debug, Clone, PartialEq)]
struct Grid(Vec<f64>);

fn parse_code(s: &str) -> Result<CodeKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pattern(s: &str) -> Result<SparsityPattern, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_decoder(s: &str) -> Result<DecoderKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_number(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Angle with an explicit unit.
fn parse_angle(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Some(v) = s.strip_prefix("acos:") {
        let c = parse_number(v)?;
        if !(-1.0..=1.0).contains(&c) {
            return Err(format!("acos argument {c} outside [-1, 1]"));
        }
        return Ok(c.acos());
    }
    if let Some(v) = s.strip_prefix("atan:") {
        return Ok(parse_number(v)?.atan());
    }
    if let Some(v) = s.strip_suffix("deg") {
        return Ok(parse_number(v)?.to_radians());
    }
    if let Some(v) = s.strip_suffix("rad") {
        return parse_number(v);
    }
    Err(format!(
        "angle `{s}` needs a unit: `<v>deg`, `<v>rad`, `acos:<v>` or `atan:<v>`"
    ))
}

/// `start:step:stop` (inclusive) or a single value.
fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(Grid(vec![parse_number(v)?])),
        [a, b, c] => {
            let (start, step, stop) = (parse_number(a)?, parse_number(b)?, parse_number(c)?);
            if step <= 0.0 {
                return Err(format!("grid step must be positive, got {step}"));
            }
            if stop < start {
                return Err(format!("grid stop {stop} is below start {start}"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if n > 100_000 {
                return Err(format!("grid has {n} points"));
            }
            Ok(Grid(
                (0..n)
                    .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                    .collect(),
            ))
        }
        _ => Err(format!("grid `{s}` is not `start:step:stop`")),
    }
}

const SUBCOMMANDS: [&str; 5] = ["verify", "mindet", "sweep-angle", "ber", "bench"];
const SWITCHES: [&str; 2] = ["timing", "single-symbol"];

/// Turns a key=value config file into flags.
fn config_flags(text: &str) -> anyhow::Result<Vec<String>> {
    let mut flags = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got `{line}`", n + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if SWITCHES.contains(&key.as_str()) {
            match value {
                "true" => flags.push(format!("--{key}")),
                "false" => {}
                _ => bail!("config line {}: `{key}` must be true or false", n + 1),
            }
        } else {
            flags.push(format!("--{key}={value}"));
        }
    }
    Ok(flags)
}

/// Splices config-file flags in right after the subcommand so that later,
/// explicit flags override them.
fn expand_config(args: Vec<String>) -> anyhow::Result<Vec<String>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let flags = config_flags(&text)?;
    let Some(pos) = args.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(args);
    };
    let mut out = args[..=pos].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_verify(a: &VerifyArgs) -> anyhow::Result<bool> {
    let rho = a.angle.resolve(a.code);
    let code = CodeDescriptor::new(a.code, rho);
    let pattern = a.pattern.unwrap_or(a.code.native_pattern());
    let mut failed = Vec::new();

    let mut rng = RngStream::new(a.seed, 0);
    let combination = check_alamouti_combination(&mut rng, a.combination_trials as usize);
    println!("alamouti_combination.trials={}", a.combination_trials);
    println!("alamouti_combination.max_deviation={combination:e}");
    if combination >= 1e-12 {
        failed.push("alamouti_combination");
    }

    let mut rng = RngStream::new(a.seed, 1);
    let report = verify_sparsity(&code, pattern, &mut rng, a.trials as usize)?;
    for line in report.to_key_value().lines() {
        println!("sparsity.{line}");
    }
    if !report.passes() {
        failed.push("sparsity");
    }

    if a.instances > 0 {
        let cons = make_qam(4, true)?;
        let mut candidates = vec![DecoderKind::Sphere];
        if code.kind.native_pattern() == SparsityPattern::Conditional {
            candidates.extend([DecoderKind::Fast, DecoderKind::FastAny]);
        }
        let mut mismatches = vec![0u64; candidates.len()];
        let mut rng = RngStream::new(a.seed, 2);
        let mut decoded = 0;
        while decoded < a.instances {
            let sent: Vec<_> = (0..KAPPA)
                .map(|_| cons.point(rng.gen_range(0..4)))
                .collect();
            let ch = draw_channel(&mut rng, 2, N_T, noise_variance(6.0, N_T));
            let y = transmit(&code.codeword(&sent), &ch, &mut rng);
            let Ok(ws) = DecoderWorkspace::prepare(&equivalent_channel(&ch, &code)?, &y) else {
                continue;
            };
            let oracle = DecoderKind::Exhaustive.decode(&ws, &cons, DEFAULT_EXHAUSTIVE_BUDGET)?;
            for (d, miss) in candidates.iter().zip(mismatches.iter_mut()) {
                if d.decode(&ws, &cons, DEFAULT_EXHAUSTIVE_BUDGET)?.symbols != oracle.symbols {
                    *miss += 1;
                }
            }
            decoded += 1;
        }
        println!("decoder_equivalence.instances={}", a.instances);
        for (d, miss) in candidates.iter().zip(&mismatches) {
            println!("decoder_equivalence.{d}.mismatches={miss}");
        }
        if mismatches.iter().any(|&m| m > 0) {
            failed.push("decoder_equivalence");
        }
    }

    if failed.is_empty() {
        println!("result=PASS");
        Ok(true)
    } else {
        println!("result=FAIL");
        println!("failed={}", failed.join(","));
        Ok(false)
    }
}

fn cmd_mindet(a: &MindetArgs) -> anyhow::Result<bool> {
    let rho = a.angle.resolve(a.code);
    let cons = make_qam(a.qam, false)?;
    let report = if a.single_symbol {
        min_determinant_single_symbol(a.code, rho, &cons)
    } else {
        let opts = MinDetOptions {
            budget: a.budget,
            workers: a.workers,
        };
        min_determinant(a.code, rho, &cons, opts)?
    };
    print!("{}", report.to_key_value());
    if a.out.is_some() {
        write_sweep_csv(&[report], output(&a.out)?)?;
    }
    Ok(true)
}

fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<bool> {
    let cons = make_qam(a.qam, false)?;
    let angles: Vec<f64> = a.deg.0.iter().map(|d| d.to_radians()).collect();
    let opts = MinDetOptions {
        budget: a.budget,
        workers: a.workers,
    };
    let reports = angle_sweep(a.code, &cons, &angles, opts)?;
    write_sweep_csv(&reports, output(&a.out)?)?;
    if let Some(best) = sweep_argmax(&reports) {
        let r = &reports[best];
        eprintln!(
            "best angle {:.4} deg ({:.6} rad), min_det={}",
            r.rho.to_degrees(),
            r.rho,
            r.min_det
        );
    }
    Ok(true)
}

fn cmd_ber(a: &BerArgs) -> anyhow::Result<bool> {
    let mut cfg = SimConfig::new(a.code, a.decoder, a.qam, a.snr.0.clone());
    cfg.rho = a.angle.resolve(a.code);
    cfg.max_frames = a.max_frames;
    cfg.min_bit_errors = a.min_errors;
    cfg.seed = a.seed;
    cfg.workers = a.workers;
    cfg.exhaustive_budget = a.budget;
    cfg.record_wall_time = a.timing;
    cfg.cross_check_every = a.cross_check;
    cfg.validate()?;

    let mut records = Vec::new();
    for &snr in &cfg.snr_points_db {
        let r = run_point(&cfg, snr)?;
        eprintln!(
            "snr={:>6.2} dB  frames={:>8}  bit_errors={:>8}  ber={:.4e}  mean_leaf_visits={:.1}",
            r.snr_db,
            r.frames,
            r.bit_errors,
            r.ber(),
            r.mean_leaf_visits()
        );
        if r.cross_check_mismatches > 0 {
            eprintln!(
                "warning: {} of {} cross-checked frames disagree with the sphere decoder",
                r.cross_check_mismatches, r.cross_checks
            );
        }
        records.push(r);
    }
    write_ber_csv(&records, output(&a.out)?)?;
    Ok(records.iter().all(|r| r.cross_check_mismatches == 0))
}

fn cmd_bench(a: &BenchArgs) -> anyhow::Result<bool> {
    let rho = a.angle.resolve(a.code);
    let code = CodeDescriptor::new(a.code, rho);
    let cons = make_qam(a.qam, true)?;
    let m = a.qam;
    let mut decoders = Vec::new();
    if exhaustive_candidates(m, KAPPA) <= a.budget {
        decoders.push(DecoderKind::Exhaustive);
    }
    decoders.push(DecoderKind::Sphere);
    if code.kind.native_pattern() == SparsityPattern::Conditional {
        decoders.extend([DecoderKind::Fast, DecoderKind::FastAny]);
    }

    struct Tally {
        leaves: u64,
        metrics: u64,
        seconds: f64,
        mismatches: u64,
    }
    let mut tallies: Vec<Tally> = decoders
        .iter()
        .map(|_| Tally {
            leaves: 0,
            metrics: 0,
            seconds: 0.0,
            mismatches: 0,
        })
        .collect();
    let mut sphere_above_exhaustive = 0u64;
    let mut rng = RngStream::new(a.seed, 0);
    let mut done = 0;
    while done < a.instances {
        let sent: Vec<_> = (0..KAPPA)
            .map(|_| cons.point(rng.gen_range(0..m)))
            .collect();
        let ch = draw_channel(&mut rng, 2, N_T, noise_variance(a.snr, N_T));
        let y = transmit(&code.codeword(&sent), &ch, &mut rng);
        let Ok(ws) = DecoderWorkspace::prepare(&equivalent_channel(&ch, &code)?, &y) else {
            continue;
        };
        let mut reference: Option<Vec<usize>> = None;
        let mut leaves = Vec::new();
        for (d, t) in decoders.iter().zip(tallies.iter_mut()) {
            let start = Instant::now();
            let r = d.decode(&ws, &cons, a.budget)?;
            t.seconds += start.elapsed().as_secs_f64();
            t.leaves += r.counters.leaf_visits;
            t.metrics += r.counters.metric_evaluations;
            leaves.push(r.counters.leaf_visits);
            match &reference {
                Some(s) if *s != r.symbols => t.mismatches += 1,
                None => reference = Some(r.symbols),
                _ => {}
            }
        }
        if decoders[0] == DecoderKind::Exhaustive && leaves[1] > leaves[0] {
            sphere_above_exhaustive += 1;
        }
        done += 1;
    }

    let n = a.instances as f64;
    println!(
        "code={} constellation={}qam snr_db={} instances={}",
        code.kind, m, a.snr, a.instances
    );
    println!(
        "{:<12} {:>16} {:>20} {:>14} {:>11}",
        "decoder", "mean_leaf_visits", "mean_metric_evals", "us_per_decode", "mismatches"
    );
    for (d, t) in decoders.iter().zip(&tallies) {
        println!(
            "{:<12} {:>16.1} {:>20.1} {:>14.1} {:>11}",
            d.name(),
            t.leaves as f64 / n,
            t.metrics as f64 / n,
            t.seconds / n * 1e6,
            t.mismatches
        );
    }
    let exhaustive_leaves = exhaustive_candidates(m, KAPPA) as f64;
    if let Some(i) = decoders.iter().position(|&d| d == DecoderKind::Fast) {
        let measured = tallies[i].leaves as f64 / n / exhaustive_leaves;
        let predicted = 4.0 * (m as f64).powf(-3.5);
        println!("exhaustive_leaf_count={exhaustive_leaves}");
        println!("fast_leaf_count_predicted={}", fast_leaf_count(m));
        println!("fast_over_exhaustive_measured={measured:e}");
        println!("fast_over_exhaustive_predicted={predicted:e}");
    }
    println!("sphere_above_exhaustive={sphere_above_exhaustive}");
    Ok(sphere_above_exhaustive == 0 && tallies.iter().all(|t| t.mismatches == 0))
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Mindet(a) => cmd_mindet(a),
        Command::SweepAngle(a) => cmd_sweep(a),
        Command::Ber(a) => cmd_ber(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::StructureViolation { .. }) => 1,
        _ => 2,
    }
}

fn config_path_exists(args: &[String]) -> Option<&Path> {
    args.windows(2)
        .find(|w| w[0] == "--config")
        .map(|w| Path::new(&w[1]))
        .filter(|p| !p.exists())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if let Some(missing) = config_path_exists(&args) {
        eprintln!("error: config file {} does not exist", missing.display());
        return ExitCode::from(2);
    }
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
