//! Implementations behind the CLI subcommands.

use std::fs;
use std::path::Path;

use serde::Serialize;

use spqt_core::error::Error;
use spqt_core::quant::{self, BlockSize, QuantScheme};
use spqt_core::spectral;
use spqt_core::synth::{self, ZipfEnsemble};
use spqt_core::tensorio::{self, format_value, DenseMatrix};
use spqt_core::verify::{self, ExperimentConfig, Protocol};

use crate::manifest::RunManifest;
use crate::CliError;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(e: Error) -> CliError {
    CliError::Runtime(e.to_string())
}

/// SPQT unless the extension says CSV.
fn load_matrix(path: &Path) -> Result<DenseMatrix, CliError> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let result = if is_csv {
        tensorio::load_csv(path)
    } else {
        tensorio::load_tensor(path)
    };
    result.map_err(runtime)
}

fn save_matrix(m: &DenseMatrix, path: &Path) -> Result<(), CliError> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let result = if is_csv {
        tensorio::save_csv(m, path)
    } else {
        tensorio::save_tensor(m, path)
    };
    result.map_err(runtime)
}

pub fn synth(
    vocab: usize,
    alpha: f64,
    d: usize,
    n: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let ens = ZipfEnsemble::new(vocab, alpha, d, n, seed).map_err(|e| {
        usage(format!(
            "{e}; the Zipf model requires a decay exponent above 1 and at \
             least two tokens"
        ))
    })?;
    let x = synth::build_embedding_matrix(&ens).map_err(runtime)?;
    save_matrix(&x, out)?;
    let config = serde_json::to_string(&ens).expect("ensemble serializes");
    RunManifest::new(&config, seed, &[out])
        .write_for(out)
        .map_err(runtime)?;
    Ok(())
}

/// Maps a preset name and overrides onto a concrete scheme.
fn resolve_scheme(
    name: &str,
    block: Option<usize>,
    level_or_step: Option<f64>,
) -> Result<QuantScheme, CliError> {
    let mut scheme = match name {
        "int4" => QuantScheme::int4(),
        "nvfp4" => QuantScheme::nvfp4(),
        "mxfp4" => QuantScheme::mxfp4(),
        "step" => {
            let step = level_or_step
                .ok_or_else(|| usage("the step scheme needs --l <step> (the explicit step)"))?;
            QuantScheme::uniform_step(step)
        }
        other => {
            return Err(usage(format!(
                "unknown scheme {other:?}; expected int4, nvfp4, mxfp4, or step"
            )))
        }
    };
    if name == "int4" {
        if let Some(l) = level_or_step {
            if l < 1.0 || l.fract() != 0.0 {
                return Err(usage(format!("--l must be a positive integer, got {l}")));
            }
            scheme.l = Some(l as u32);
        }
    }
    if let Some(b) = block {
        scheme.block_size = if b == 0 {
            BlockSize::Global
        } else {
            BlockSize::Size(b)
        };
    }
    scheme.validate().map_err(|e| usage(e.to_string()))?;
    Ok(scheme)
}

#[derive(Serialize)]
struct ErrorStatsLine {
    mean: f64,
    variance: f64,
    min: f64,
    max: f64,
    step: f64,
    degenerate_blocks: usize,
}

pub fn quantize(
    input: &Path,
    scheme_name: &str,
    block: Option<usize>,
    level_or_step: Option<f64>,
    out: &Path,
    err_out: Option<&Path>,
) -> Result<(), CliError> {
    let scheme = resolve_scheme(scheme_name, block, level_or_step)?;
    let a = load_matrix(input)?;
    let q = quant::quantize_blockwise(&a, &scheme).map_err(runtime)?;
    let e = quant::error_matrix(&a, &q.matrix).map_err(runtime)?;
    let stats = quant::error_stats(&e, q.mean_step());

    save_matrix(&q.matrix, out)?;
    let mut outputs = vec![out];
    if let Some(err_path) = err_out {
        save_matrix(&e, err_path)?;
        outputs.push(err_path);
    }

    let line = ErrorStatsLine {
        mean: stats.mean,
        variance: stats.variance,
        min: stats.min,
        max: stats.max,
        step: stats.step_used,
        degenerate_blocks: q.degenerate_blocks,
    };
    println!("{}", serde_json::to_string(&line).expect("stats serialize"));

    let config = serde_json::to_string(&scheme).expect("scheme serializes");
    RunManifest::new(&config, 0, &outputs)
        .write_for(out)
        .map_err(runtime)?;
    Ok(())
}

#[derive(Serialize)]
struct SpectrumSummary {
    rows: usize,
    cols: usize,
    stable_rank: f64,
    frob_sq: f64,
    spec_sq: f64,
    power_fit: Option<spectral::PowerFit>,
}

pub fn spectrum(
    input: &Path,
    csv: &Path,
    fit_lo: Option<usize>,
    fit_hi: Option<usize>,
) -> Result<(), CliError> {
    let a = load_matrix(input)?;
    let fit_range = match (fit_lo, fit_hi) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => return Err(usage("--fit-lo and --fit-hi must be given together")),
    };
    let summary = spectral::summarize(&a, fit_range).map_err(runtime)?;

    let mut text = String::from("k,sigma,cum_energy_frac\n");
    let total: f64 = summary.frob_sq;
    let mut acc = 0.0;
    for (i, s) in summary.sigma.iter().enumerate() {
        acc += s * s;
        let frac = if total > 0.0 { acc / total } else { 1.0 };
        text.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            format_value(*s),
            format_value(frac)
        ));
    }
    fs::write(csv, text).map_err(|e| runtime(Error::io(csv, e)))?;

    let side = SpectrumSummary {
        rows: a.rows(),
        cols: a.cols(),
        stable_rank: summary.stable_rank,
        frob_sq: summary.frob_sq,
        spec_sq: summary.spec_sq,
        power_fit: summary.power_fit.clone(),
    };
    let json = serde_json::to_string(&side).expect("summary serializes");
    println!("{json}");
    let json_path = csv.with_extension("summary.json");
    fs::write(&json_path, &json).map_err(|e| runtime(Error::io(&json_path, e)))?;

    let config = format!(
        "{{\"in\":{:?},\"fit_lo\":{fit_lo:?},\"fit_hi\":{fit_hi:?}}}",
        input.display().to_string()
    );
    RunManifest::new(&config, 0, &[csv, &json_path])
        .write_for(csv)
        .map_err(runtime)?;
    Ok(())
}

pub fn verify(
    config_path: Option<&Path>,
    protocol: &str,
    report_dir: &Path,
) -> Result<(), CliError> {
    let cfg: ExperimentConfig = match config_path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("malformed config {}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let selected: Vec<Protocol> = if protocol == "all" {
        Protocol::ALL.to_vec()
    } else {
        vec![Protocol::parse(protocol).map_err(|e| usage(e.to_string()))?]
    };

    fs::create_dir_all(report_dir).map_err(|e| runtime(Error::io(report_dir, e)))?;

    let mut all_pass = true;
    let mut outputs = Vec::new();
    for p in &selected {
        let report = verify::run_protocol(*p, &cfg).map_err(|e| match e {
            Error::Config(_) => usage(e.to_string()),
            other => runtime(other),
        })?;
        let csv_path = report_dir.join(format!("{}.csv", report.protocol));
        let json_path = report_dir.join(format!("{}.summary.json", report.protocol));
        fs::write(&csv_path, report.table_csv())
            .map_err(|e| runtime(Error::io(&csv_path, e)))?;
        fs::write(&json_path, report.summary_json())
            .map_err(|e| runtime(Error::io(&json_path, e)))?;
        println!(
            "{}: {}",
            report.protocol,
            if report.pass { "pass" } else { "FAIL" }
        );
        all_pass &= report.pass;
        outputs.push(csv_path);
        outputs.push(json_path);
    }

    let config_json = serde_json::to_string(&cfg).expect("config serializes");
    let output_refs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    RunManifest::new(&config_json, cfg.seed, &output_refs)
        .write_for(report_dir)
        .map_err(runtime)?;

    if all_pass {
        Ok(())
    } else {
        Err(CliError::Runtime("one or more protocols failed".into()))
    }
}

#[derive(Serialize)]
struct CompareSummary {
    stable_rank_a: f64,
    stable_rank_b: f64,
    weyl_gap: f64,
    diff_spectral_norm: f64,
    weyl_ok: bool,
}

pub fn compare(a_path: &Path, b_path: &Path, csv: &Path) -> Result<(), CliError> {
    let a = load_matrix(a_path)?;
    let b = load_matrix(b_path)?;
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(CliError::Runtime(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let sigma_a = spectral::singular_values(&a).map_err(runtime)?;
    let sigma_b = spectral::singular_values(&b).map_err(runtime)?;
    let rel = spectral::relative_errors(&sigma_a, &sigma_b, spectral::RELATIVE_ERROR_FLOOR)
        .map_err(runtime)?;

    let mut text = String::from("k,sigma_a,sigma_b,ratio_b_over_a,rel_err\n");
    for (k, eps) in &rel.values {
        let sa = sigma_a[k - 1];
        let sb = sigma_b[k - 1];
        text.push_str(&format!(
            "{k},{},{},{},{}\n",
            format_value(sa),
            format_value(sb),
            format_value(sb / sa),
            format_value(*eps)
        ));
    }
    fs::write(csv, text).map_err(|e| runtime(Error::io(csv, e)))?;

    let diff = b.sub(&a).map_err(runtime)?;
    let diff_norm = spectral::singular_values(&diff).map_err(runtime)?[0];
    let gap = spectral::weyl_gap(&sigma_a, &sigma_b).map_err(runtime)?;
    let summary = CompareSummary {
        stable_rank_a: spectral::stable_rank(&sigma_a).map_err(runtime)?,
        stable_rank_b: spectral::stable_rank(&sigma_b).map_err(runtime)?,
        weyl_gap: gap,
        diff_spectral_norm: diff_norm,
        weyl_ok: gap <= diff_norm * (1.0 + 1e-12),
    };
    let json = serde_json::to_string(&summary).expect("summary serializes");
    println!("{json}");
    let json_path = csv.with_extension("summary.json");
    fs::write(&json_path, &json).map_err(|e| runtime(Error::io(&json_path, e)))?;

    let config = format!(
        "{{\"a\":{:?},\"b\":{:?}}}",
        a_path.display().to_string(),
        b_path.display().to_string()
    );
    RunManifest::new(&config, 0, &[csv, &json_path])
        .write_for(csv)
        .map_err(runtime)?;
    Ok(())
}
