//! Command-line front end: fit models, run goodness-of-fit tests, drive
//! the simulation harness, and emit plot-ready path data.

use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use aftgof::data::StandardizationRecord;
use aftgof::gof::{GofReport, GofSession, DEFAULT_GRID_CAP, MIN_RECOMMENDED_PATHS};
use aftgof::simulate::{HarnessConfig, Scenario};
use aftgof::{Error, Estimator, SurvivalDataset, TestKind};

#[derive(Parser)]
#[command(
    name = "aftgof",
    version,
    about = "Semiparametric AFT model fitting and resampling goodness-of-fit tests"
)]
struct Cli {
    /// Worker threads (default: AFTGOF_THREADS or all cores). Affects
    /// wall time only, never results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct InputOpts {
    /// CSV with one row per subject.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "status")]
    status_col: String,
    /// Comma-separated covariate columns; default: all other columns.
    #[arg(long)]
    covariates: Option<String>,
    /// Center and scale covariates before fitting.
    #[arg(long)]
    standardize: bool,
    /// With --standardize, also rescale two-valued (binary) columns.
    #[arg(long)]
    scale_binary: bool,
}

#[derive(Args)]
struct TestOpts {
    /// mns | mis | mls
    #[arg(long, default_value = "mis")]
    estimator: String,
    /// omni | link | form:<covariate> | all-forms
    #[arg(long, default_value = "omni")]
    test: String,
    /// Standardize the sup statistic by pointwise path spread (default).
    #[arg(long, conflicts_with = "unstd")]
    std: bool,
    /// Use the raw (unstandardized) sup statistic.
    #[arg(long)]
    unstd: bool,
    /// Number of resampled paths K.
    #[arg(long = "paths", default_value_t = 500)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on the omnibus z-grid size.
    #[arg(long, default_value_t = DEFAULT_GRID_CAP)]
    grid_cap: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the AFT model and print the coefficients as JSON.
    Fit {
        #[command(flatten)]
        input: InputOpts,
        #[arg(long, default_value = "mis")]
        estimator: String,
        /// Output directory.
        #[arg(long, default_value = ".")]
        output: PathBuf,
    },
    /// Run a goodness-of-fit test and write the report (and plot data).
    Gof {
        #[command(flatten)]
        input: InputOpts,
        #[command(flatten)]
        test: TestOpts,
        #[arg(long, default_value = ".")]
        output: PathBuf,
        /// Also render the path-overlay figure as SVG.
        #[arg(long)]
        svg: bool,
    },
    /// Monte Carlo rejection-rate study over simulated scenarios.
    Simulate {
        /// s1 | s2
        #[arg(long, default_value = "s1")]
        scenario: String,
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.3")]
        gammas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "100,300")]
        ns: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.2")]
        censorings: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "mns,mis")]
        estimators: Vec<String>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long = "paths", default_value_t = 200)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = ".")]
        output: PathBuf,
    },
    /// Emit only the tidy plot CSV (and optional SVG) for one test.
    Plotdata {
        #[command(flatten)]
        input: InputOpts,
        #[command(flatten)]
        test: TestOpts,
        #[arg(long, default_value = ".")]
        output: PathBuf,
        #[arg(long)]
        svg: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    let code = match run(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn configure_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("AFTGOF_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn run(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Fit {
            input,
            estimator,
            output,
        } => cmd_fit(&input, &estimator, &output),
        Cmd::Gof {
            input,
            test,
            output,
            svg,
        } => cmd_gof(&input, &test, &output, svg, true),
        Cmd::Plotdata {
            input,
            test,
            output,
            svg,
        } => cmd_gof(&input, &test, &output, svg, false),
        Cmd::Simulate {
            scenario,
            gammas,
            ns,
            censorings,
            estimators,
            reps,
            paths,
            seed,
            alpha,
            output,
        } => cmd_simulate(
            &scenario, gammas, ns, censorings, estimators, reps, paths, seed, alpha, &output,
        ),
    }
}

struct LoadedData {
    data: SurvivalDataset,
    record: Option<StandardizationRecord>,
    input_sha256: String,
}

fn load(opts: &InputOpts) -> Result<LoadedData, Error> {
    let mut bytes = Vec::new();
    std::fs::File::open(&opts.input)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Csv {
            path: opts.input.display().to_string(),
            message: e.to_string(),
        })?;
    let input_sha256: String = Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();

    let covariates = match &opts.covariates {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => {
            let mut rdr = csv::Reader::from_reader(bytes.as_slice());
            let headers = rdr.headers().map_err(|e| Error::Csv {
                path: opts.input.display().to_string(),
                message: e.to_string(),
            })?;
            headers
                .iter()
                .filter(|h| *h != opts.time_col && *h != opts.status_col)
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
        }
    };
    let raw = aftgof::load_csv(&opts.input, &opts.time_col, &opts.status_col, &covariates)?;
    if opts.standardize {
        let (data, record) = aftgof::standardize(&raw, !opts.scale_binary)?;
        Ok(LoadedData {
            data,
            record: Some(record),
            input_sha256,
        })
    } else {
        Ok(LoadedData {
            data: raw,
            record: None,
            input_sha256,
        })
    }
}

#[derive(Serialize)]
struct Manifest {
    tool_version: String,
    command_line: Vec<String>,
    seed: Option<u64>,
    paths: Option<usize>,
    estimator: Option<String>,
    input_sha256: Option<String>,
}

fn write_manifest(
    dir: &Path,
    seed: Option<u64>,
    paths: Option<usize>,
    estimator: Option<&str>,
    input_sha256: Option<&str>,
) -> Result<(), Error> {
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command_line: std::env::args().collect(),
        seed,
        paths,
        estimator: estimator.map(|s| s.to_string()),
        input_sha256: input_sha256.map(|s| s.to_string()),
    };
    write_file(
        &dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        let _ = std::fs::create_dir_all(parent);
    }
    std::fs::write(path, contents).map_err(Error::Io)
}

fn cmd_fit(input: &InputOpts, estimator: &str, output: &Path) -> Result<(), Error> {
    let estimator: Estimator = estimator.parse()?;
    let loaded = load(input)?;
    let model = aftgof::fit(&loaded.data, estimator, None)?;
    if !model.converged {
        return Err(Error::NonConvergence(format!(
            "{estimator} fit did not converge after {} iterations",
            model.iterations
        )));
    }

    #[derive(Serialize)]
    struct FitOutput {
        model: aftgof::FittedModel,
        /// Coefficients on the original covariate scale (differs from
        /// `model.beta` only when --standardize was given).
        beta_original_scale: Vec<f64>,
        covariates: Vec<String>,
        standardization: Option<StandardizationRecord>,
        summary: aftgof::data::DatasetSummary,
    }
    let beta_original = match &loaded.record {
        Some(rec) => rec.back_transform_beta(&model.beta),
        None => model.beta.clone(),
    };
    let out = FitOutput {
        beta_original_scale: beta_original,
        covariates: loaded.data.names.clone(),
        standardization: loaded.record.clone(),
        summary: loaded.data.summary(),
        model,
    };
    let json = serde_json::to_string_pretty(&out).expect("fit output serializes");
    write_file(&output.join("fit.json"), &json)?;
    write_manifest(
        output,
        None,
        None,
        Some(&format!("{estimator}")),
        Some(&loaded.input_sha256),
    )?;
    println!("{json}");
    Ok(())
}

fn parse_test(spec: &str, data: &SurvivalDataset) -> Result<Option<TestKind>, Error> {
    match spec {
        "omni" | "omnibus" => Ok(Some(TestKind::Omnibus)),
        "link" => Ok(Some(TestKind::Link)),
        "all-forms" => Ok(None),
        other => {
            let name = other.strip_prefix("form:").ok_or_else(|| {
                Error::Validation(format!(
                    "unknown test {other:?} (expected omni, link, form:<covariate>, or all-forms)"
                ))
            })?;
            let q = data
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Validation(format!("no covariate named {name:?}")))?;
            Ok(Some(TestKind::Form(q)))
        }
    }
}

fn cmd_gof(
    input: &InputOpts,
    opts: &TestOpts,
    output: &Path,
    svg: bool,
    full_report: bool,
) -> Result<(), Error> {
    let estimator: Estimator = opts.estimator.parse()?;
    let standardized = !opts.unstd;
    if opts.paths < MIN_RECOMMENDED_PATHS {
        eprintln!(
            "warning: only {} paths requested; p-values are coarse below {}",
            opts.paths, MIN_RECOMMENDED_PATHS
        );
    }
    let loaded = load(input)?;
    let session = GofSession::new(&loaded.data, estimator, opts.grid_cap)?;
    let tests: Vec<TestKind> = match parse_test(&opts.test, &loaded.data)? {
        Some(t) => vec![t],
        None => (0..loaded.data.p()).map(TestKind::Form).collect(),
    };
    let mut reports = Vec::new();
    for t in &tests {
        let (unstd, std) = session.run_pair(*t, opts.paths, opts.seed)?;
        reports.push(if standardized { std } else { unstd });
    }

    for (idx, r) in reports.iter().enumerate() {
        let tag = if reports.len() == 1 {
            String::new()
        } else {
            format!("_{}", loaded.data.names[idx])
        };
        if full_report {
            let json = serde_json::to_string_pretty(r).expect("report serializes");
            write_file(&output.join(format!("report{tag}.json")), &json)?;
            println!(
                "{} {} standardized={} sup={:.4} p={:.4} (K_effective={})",
                r.estimator, r.test, r.standardized, r.w_obs_sup, r.p_value, r.k_effective
            );
        }
        write_file(&output.join(format!("plot{tag}.csv")), &r.plot_csv())?;
        if svg {
            write_file(&output.join(format!("plot{tag}.svg")), &render_svg(r))?;
        }
    }
    write_manifest(
        output,
        Some(opts.seed),
        Some(opts.paths),
        Some(&format!("{estimator}")),
        Some(&loaded.input_sha256),
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    scenario: &str,
    gammas: Vec<f64>,
    ns: Vec<usize>,
    censorings: Vec<f64>,
    estimators: Vec<String>,
    reps: usize,
    paths: usize,
    seed: u64,
    alpha: f64,
    output: &Path,
) -> Result<(), Error> {
    let scenario: Scenario = scenario.parse()?;
    let estimators: Vec<Estimator> = estimators
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    let config = HarnessConfig {
        scenario,
        gammas,
        ns,
        censorings,
        estimators,
        reps,
        paths,
        seed,
        alpha,
    };
    let result = aftgof::run_harness(&config)?;
    let csv = result.to_csv();
    write_file(&output.join("results.csv"), &csv)?;
    write_file(
        &output.join("results.json"),
        &serde_json::to_string_pretty(&result).expect("harness result serializes"),
    )?;
    write_manifest(output, Some(seed), Some(paths), None, None)?;
    print!("{csv}");
    Ok(())
}

/// Minimal overlay figure: resampled paths in gray, observed in black.
fn render_svg(report: &GofReport) -> String {
    let w = 640.0;
    let h = 400.0;
    let margin = 40.0;
    let all: Vec<&[f64]> = std::iter::once(report.plot.observed.as_slice())
        .chain(report.plot.paths.iter().map(|p| p.as_slice()))
        .collect();
    let ymax = all
        .iter()
        .flat_map(|p| p.iter())
        .fold(1e-12f64, |m, v| m.max(v.abs()));
    let npts = report.plot.observed.len().max(2);
    let x = |i: usize| margin + (w - 2.0 * margin) * i as f64 / (npts - 1) as f64;
    let y = |v: f64| h / 2.0 - v / ymax * (h / 2.0 - margin);
    let polyline = |pts: &[f64], style: &str| {
        let coords: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v)))
            .collect();
        format!(
            "<polyline fill=\"none\" {style} points=\"{}\"/>\n",
            coords.join(" ")
        )
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    svg.push_str(&format!(
        "<line x1=\"{margin}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999\"/>\n",
        h / 2.0,
        w - margin,
        h / 2.0
    ));
    for path in &report.plot.paths {
        svg.push_str(&polyline(path, "stroke=\"#bbbbbb\" stroke-width=\"1\""));
    }
    svg.push_str(&polyline(
        &report.plot.observed,
        "stroke=\"black\" stroke-width=\"2\"",
    ));
    svg.push_str(&format!(
        "<text x=\"{margin}\" y=\"20\" font-size=\"13\">{} {} p={:.3}</text>\n",
        report.estimator, report.test, report.p_value
    ));
    svg.push_str("</svg>\n");
    svg
}
