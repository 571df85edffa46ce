//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::process::Command;
use std::time::Instant;

use rand::Rng;

use stbc_core::analysis::{check_alamouti_combination, verify_sparsity, weight_anticommutation};
use stbc_core::channel::{draw_channel, equivalent_channel, noise_variance, transmit, RngStream};
use stbc_core::codes::{CodeDescriptor, CodeKind, SparsityPattern, KAPPA, N_T};
use stbc_core::constellation::{make_qam, Constellation};
use stbc_core::decoder::{
    exhaustive_candidates, fast_leaf_count, DecoderKind, DecoderWorkspace,
    DEFAULT_EXHAUSTIVE_BUDGET,
};
use stbc_core::sim::{run_point, BerRecord, SimConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn stbc(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stbc"))
        .args(args)
        .output()
        .expect("run stbc");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

fn field(report: &str, key: &str) -> Option<String> {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix('=').map(str::to_string))
}

fn mindet_cli(args: &[&str]) -> Result<(f64, String), String> {
    let (code, out) = stbc(args);
    if code != 0 {
        return Err(format!("`stbc {}` exited with {code}", args.join(" ")));
    }
    let v = field(&out, "min_det")
        .and_then(|v| v.parse().ok())
        .ok_or("no min_det in report")?;
    Ok((v, field(&out, "argmin_delta").unwrap_or_default()))
}

fn min_det_proposed() -> Outcome {
    let (v, _) = mindet_cli(&["mindet", "--code", "proposed", "--qam", "4"])?;
    let msg = format!("min_det={v:.9} (target 10.24 ± 1e-6)");
    if (v - 10.24).abs() <= 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn min_det_djabba() -> Outcome {
    let (v, argmin) = mindet_cli(&[
        "mindet",
        "--code",
        "djabba",
        "--qam",
        "4",
        "--rho",
        "acos:0.8881",
    ])?;
    let (single, _) = mindet_cli(&[
        "mindet",
        "--code",
        "djabba",
        "--qam",
        "4",
        "--rho",
        "acos:0.8881",
        "--single-symbol",
    ])?;
    let support = argmin.split(';').filter(|d| *d != "0+0i").count();
    let msg = format!(
        "min_det={v:.6} (target 0.8304 ± 1e-3), minimizer has {support} nonzero symbols, \
         single-symbol minimum {single:.4}"
    );
    if (v - 0.8304).abs() <= 1e-3 && support > 1 && (single - 7.11).abs() < 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn structure_suite() -> Outcome {
    let code = CodeDescriptor::with_default_rho(CodeKind::Proposed);
    let mut rng = RngStream::new(2024, 0);
    let report = verify_sparsity(&code, SparsityPattern::Conditional, &mut rng, 1000)
        .map_err(|e| e.to_string())?;
    let anti = weight_anticommutation(&code, SparsityPattern::Conditional);
    let combination = check_alamouti_combination(&mut RngStream::new(2024, 1), 10_000);
    let msg = format!(
        "{} channels: max |<q_j,h_k>|/|h_k| = {:.2e} (< 1e-10); anticommutation {:.2e} (< 1e-12); \
         Alamouti combination {:.2e} over 1e4 trials (< 1e-12)",
        report.channels, report.max_violation, anti, combination
    );
    if report.channels >= 1000
        && report.max_violation < 1e-10
        && anti < 1e-12
        && combination < 1e-12
    {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn random_instance(
    rng: &mut RngStream,
    code: &CodeDescriptor,
    cons: &Constellation,
    n0: f64,
) -> (DecoderWorkspace, Vec<usize>) {
    loop {
        let sent: Vec<usize> = (0..KAPPA).map(|_| rng.gen_range(0..cons.order())).collect();
        let s: Vec<_> = sent.iter().map(|&p| cons.point(p)).collect();
        let ch = draw_channel(rng, 2, N_T, n0);
        let y = transmit(&code.codeword(&s), &ch, rng);
        let h_eq = equivalent_channel(&ch, code).expect("equivalent channel");
        if let Ok(ws) = DecoderWorkspace::prepare(&h_eq, &y) {
            return (ws, sent);
        }
    }
}

fn ml_equivalence() -> Outcome {
    let code = CodeDescriptor::with_default_rho(CodeKind::Proposed);
    let cons = make_qam(4, true).unwrap();
    let decoders = [
        DecoderKind::Exhaustive,
        DecoderKind::Sphere,
        DecoderKind::Fast,
        DecoderKind::FastAny,
    ];
    let mut rng = RngStream::new(77, 0);
    let (mut spread, mut differing, mut ties) = (0.0f64, 0, 0);
    for _ in 0..1000 {
        let snr = rng.gen_range(0.0..20.0);
        let (ws, _) = random_instance(&mut rng, &code, &cons, noise_variance(snr, N_T));
        let results: Vec<_> = decoders
            .iter()
            .map(|d| {
                d.decode(&ws, &cons, DEFAULT_EXHAUSTIVE_BUDGET)
                    .expect("decode")
            })
            .collect();
        let (lo, hi) = results
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.metric), hi.max(r.metric))
            });
        spread = spread.max(hi - lo);
        for r in &results[1..] {
            if r.symbols != results[0].symbols {
                if (r.metric - results[0].metric).abs() <= 1e-9 {
                    ties += 1;
                } else {
                    differing += 1;
                }
            }
        }
    }

    let mut counts = Vec::new();
    for d in decoders {
        let mut cfg = SimConfig::new(CodeKind::Proposed, d, 4, vec![6.0]);
        cfg.max_frames = 2000;
        cfg.min_bit_errors = u64::MAX;
        cfg.seed = 5;
        let r = run_point(&cfg, 6.0).map_err(|e| e.to_string())?;
        counts.push(r.bit_errors);
    }
    let msg = format!(
        "1000 instances: metric spread {spread:.1e} (<= 1e-9), {differing} differing decisions, \
         {ties} ties; shared-seed bit errors {counts:?}"
    );
    if spread <= 1e-9 && differing == 0 && counts.iter().all(|&c| c == counts[0]) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn complexity() -> Outcome {
    let code = CodeDescriptor::with_default_rho(CodeKind::Proposed);
    let mut rng = RngStream::new(31, 0);
    let mut lines = Vec::new();
    let mut ok = true;
    for m in [4usize, 16] {
        let cons = make_qam(m, true).unwrap();
        let (ws, _) = random_instance(&mut rng, &code, &cons, noise_variance(10.0, N_T));
        let fast = DecoderKind::Fast
            .decode(&ws, &cons, DEFAULT_EXHAUSTIVE_BUDGET)
            .map_err(|e| e.to_string())?
            .counters
            .leaf_visits;
        let exhaustive = if m == 4 {
            let leaves = DecoderKind::Exhaustive
                .decode(&ws, &cons, DEFAULT_EXHAUSTIVE_BUDGET)
                .map_err(|e| e.to_string())?
                .counters
                .leaf_visits;
            ok &= leaves == 65536 && u128::from(leaves) == exhaustive_candidates(m, KAPPA);
            leaves as f64
        } else {
            exhaustive_candidates(m, KAPPA) as f64
        };
        let formula = 4.0 * (m as f64).powf(4.5);
        let ratio = fast as f64 / exhaustive;
        let predicted = 4.0 * (m as f64).powf(-3.5);
        ok &= fast == fast_leaf_count(m) && fast as f64 == formula && ratio == predicted;
        lines.push(format!(
            "M={m}: exhaustive {exhaustive}{}, fast {fast} (4*M^4.5 = {formula}), ratio {ratio:e} vs 4*M^-3.5 = {predicted:e}",
            if m == 4 { " measured" } else { " by formula" }
        ));
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Runs both codes to at least `min_errors` errors, then extends the shorter
/// run so that both see the same frames.
fn paired_point(snr: f64, min_errors: u64) -> Result<(BerRecord, BerRecord), String> {
    let cfg = |code, decoder| {
        let mut c = SimConfig::new(code, decoder, 4, vec![snr]);
        c.min_bit_errors = min_errors;
        c.max_frames = 50_000_000;
        c.seed = 2009;
        c
    };
    let mut p_cfg = cfg(CodeKind::Proposed, DecoderKind::Fast);
    let mut d_cfg = cfg(CodeKind::Djabba, DecoderKind::Sphere);
    let p = run_point(&p_cfg, snr).map_err(|e| e.to_string())?;
    let d = run_point(&d_cfg, snr).map_err(|e| e.to_string())?;
    let frames = p.frames.max(d.frames);
    for c in [&mut p_cfg, &mut d_cfg] {
        c.max_frames = frames;
        c.min_bit_errors = u64::MAX;
    }
    let p = if p.frames < frames {
        run_point(&p_cfg, snr).map_err(|e| e.to_string())?
    } else {
        p
    };
    let d = if d.frames < frames {
        run_point(&d_cfg, snr).map_err(|e| e.to_string())?
    } else {
        d
    };
    Ok((p, d))
}

fn three_sigma(a: &BerRecord, b: &BerRecord) -> f64 {
    3.0 * (a.ber_std().powi(2) + b.ber_std().powi(2)).sqrt()
}

fn ber_ordering() -> Outcome {
    let mut proposed = Vec::new();
    let mut djabba = Vec::new();
    for snr in (0..=16).step_by(2) {
        let (p, d) = paired_point(snr as f64, 200)?;
        proposed.push(p);
        djabba.push(d);
    }
    let mut problems = Vec::new();
    let mut table = Vec::new();
    for (p, d) in proposed.iter().zip(&djabba) {
        table.push(format!("{}dB {:.2e}/{:.2e}", p.snr_db, p.ber(), d.ber()));
        if p.bit_errors < 200 || d.bit_errors < 200 {
            problems.push(format!("fewer than 200 errors at {} dB", p.snr_db));
        }
        if p.snr_db >= 8.0 && p.ber() > d.ber() + three_sigma(p, d) {
            problems.push(format!("proposed worse than DjABBA at {} dB", p.snr_db));
        }
    }
    for curve in [&proposed, &djabba] {
        for w in curve.windows(2) {
            if w[1].ber() > w[0].ber() + three_sigma(&w[0], &w[1]) {
                problems.push(format!("{} BER rises at {} dB", w[0].code, w[1].snr_db));
            }
        }
    }
    let msg = format!("proposed/DjABBA BER: {}", table.join(", "));
    if problems.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; {}", problems.join("; ")))
    }
}

fn noiseless_exactness() -> Outcome {
    let mut rng = RngStream::new(99, 0);
    let mut worst = 0.0f64;
    let mut wrong = 0;
    let mut runs = Vec::new();
    for kind in [CodeKind::Proposed, CodeKind::Djabba] {
        let code = CodeDescriptor::with_default_rho(kind);
        for m in [4usize, 16] {
            let cons = make_qam(m, true).unwrap();
            let decoders: Vec<DecoderKind> = match (kind, m) {
                (CodeKind::Proposed, 4) => vec![
                    DecoderKind::Exhaustive,
                    DecoderKind::Sphere,
                    DecoderKind::Fast,
                    DecoderKind::FastAny,
                ],
                (CodeKind::Proposed, _) => vec![DecoderKind::Fast, DecoderKind::Sphere],
                (CodeKind::Djabba, 4) => vec![DecoderKind::Exhaustive, DecoderKind::Sphere],
                (CodeKind::Djabba, _) => vec![DecoderKind::Sphere],
            };
            for _ in 0..100 {
                let (ws, sent) = random_instance(&mut rng, &code, &cons, 0.0);
                for d in &decoders {
                    let r = d
                        .decode(&ws, &cons, DEFAULT_EXHAUSTIVE_BUDGET)
                        .map_err(|e| e.to_string())?;
                    worst = worst.max(r.metric);
                    wrong += usize::from(r.symbols != sent);
                }
            }
            let names: Vec<_> = decoders.iter().map(|d| d.name()).collect();
            runs.push(format!("{kind}/{m}qam [{}]", names.join(",")));
        }
    }
    let msg = format!(
        "100 frames each for {}: {wrong} wrong decisions, worst metric {worst:.1e} (< 1e-18)",
        runs.join(" ")
    );
    if wrong == 0 && worst < 1e-18 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("min-det proposed", min_det_proposed),
        ("min-det djabba", min_det_djabba),
        ("structure suite", structure_suite),
        ("ML equivalence", ml_equivalence),
        ("complexity", complexity),
        ("BER ordering", ber_ordering),
        ("noiseless exactness", noiseless_exactness),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("PASS {name} ({secs:.1}s): {msg}"),
            Err(msg) => {
                failures += 1;
                println!("FAIL {name} ({secs:.1}s): {msg}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
