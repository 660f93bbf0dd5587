//! Command-line driver: sampling runs, exact enumeration, fixture
//! training, comparison, and SVG plotting.
//!
//! Exit codes: 0 success, 1 tolerance/empty-result failure, 2 usage or
//! parse error, 3 iteration timeout, 4 enumeration budget, 5 I/O.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{SecondsFormat, Utc};
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use gwl::dataset::{derive_toy, parse_idx, IdxFile};
use gwl::dos_histogram::{BinSpec, DosHistogram};
use gwl::energy_models::{build_model, Config, EnergyModel};
use gwl::numfmt::g17;
use gwl::oracle::{enumerate_dos, histogram_error, ExactDos, DEFAULT_ENUM_BUDGET};
use gwl::plot::{render_svg, Series};
use gwl::tiny_autodiff::Network;
use gwl::wl_engine::{self, EngineError, EngineParams, ProposalKind, RepresentativeStore, WalkerState};

const EXIT_TOLERANCE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;
const EXIT_BUDGET: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "gwl", about = "Density-of-states sampling over discrete input spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Wang-Landau or gradient Wang-Landau sampling walk.
    Sample {
        /// Model name: ising:L=<n> or nn:<weights-file>
        #[arg(long)]
        model: String,
        #[arg(long, value_parser = ["random", "gwg"], default_value = "gwg")]
        proposal: String,
        /// Output bin range LO:HI:WIDTH
        #[arg(long, default_value = "-300:100:1")]
        bins: String,
        #[arg(long, default_value_t = 10)]
        iters: u32,
        #[arg(long, default_value_t = 1.0)]
        lnf0: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Histogram CSV output path (JSON, checkpoint, manifest and
        /// representative archive are written alongside)
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Resume from an existing checkpoint file
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Steps between representative-sample captures
        #[arg(long, default_value_t = 50_000)]
        sample_stride: u64,
        /// Output-value width of each representative group
        #[arg(long, default_value_t = 5.0)]
        group_width: f64,
        /// Initial config: "zeros" or a path to a JSON array of values
        #[arg(long, default_value = "zeros")]
        init: String,
        #[arg(long, default_value_t = 10_000)]
        flatness_stride: u64,
        #[arg(long, default_value_t = 100_000_000)]
        max_steps: u64,
        /// Restart from the initial config at every iteration
        #[arg(long, default_value_t = false)]
        restart_each_iteration: bool,
        /// Spawn N independent seeded walkers writing suffixed outputs
        #[arg(long, default_value_t = 1)]
        walkers: u32,
    },
    /// Exhaustively enumerate the exact density of states.
    Enumerate {
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "-300:100:1")]
        bins: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an exact DOS CSV against an estimated histogram CSV.
    Compare {
        exact: PathBuf,
        estimate: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        tolerance: f64,
    },
    /// Train a fixture TinyCNN on a toy set derived from IDX files.
    Train {
        #[arg(long)]
        idx_images: PathBuf,
        #[arg(long)]
        idx_labels: PathBuf,
        #[arg(long, default_value_t = 5)]
        side: usize,
        #[arg(long, default_value_t = 200)]
        epochs: u32,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render histogram CSVs to a standalone SVG line chart.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        /// Optional second CSV drawn as an overlay
        #[arg(long)]
        overlay: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(code)
        }
    }
}

type CmdResult = Result<u8, (u8, String)>;

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Sample {
            model,
            proposal,
            bins,
            iters,
            lnf0,
            seed,
            out,
            checkpoint,
            resume,
            sample_stride,
            group_width,
            init,
            flatness_stride,
            max_steps,
            restart_each_iteration,
            walkers,
        } => {
            let params = EngineParams {
                flatness_check_stride: flatness_stride,
                max_steps_per_iteration: max_steps,
                sample_stride,
                group_width,
                group_cap: 200,
                restart_each_iteration,
            };
            if walkers <= 1 {
                return cmd_sample(
                    &model, &proposal, &bins, iters, lnf0, seed, &out, checkpoint.as_deref(),
                    resume.as_deref(), &init, &params,
                );
            }
            for w in 0..walkers {
                let suffixed = suffix_path(&out, &format!(".w{}", w));
                cmd_sample(
                    &model, &proposal, &bins, iters, lnf0, seed + w as u64, &suffixed,
                    None, None, &init, &params,
                )?;
            }
            Ok(0)
        }
        Command::Enumerate { model, bins, out } => cmd_enumerate(&model, &bins, &out),
        Command::Compare { exact, estimate, tolerance } => cmd_compare(&exact, &estimate, tolerance),
        Command::Train { idx_images, idx_labels, side, epochs, lr, seed, out } => {
            cmd_train(&idx_images, &idx_labels, side, epochs, lr, seed, &out)
        }
        Command::Plot { input, overlay, out } => cmd_plot(&input, overlay.as_deref(), &out),
    }
}

fn suffix_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{}{}.{}", stem, suffix, ext))
}

fn parse_bins(text: &str) -> Result<BinSpec, (u8, String)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err((EXIT_USAGE, format!("malformed bins '{}', expected LO:HI:WIDTH", text)));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| (EXIT_USAGE, format!("malformed bins '{}': {}", text, e)))?;
    BinSpec::new(nums[0], nums[1], nums[2]).map_err(|e| (EXIT_USAGE, e.to_string()))
}

fn load_model(name: &str) -> Result<Box<dyn EnergyModel>, (u8, String)> {
    build_model(name).map_err(|e| (EXIT_USAGE, e.to_string()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), (u8, String)> {
    fs::write(path, contents).map_err(|e| (EXIT_IO, format!("{}: {}", path.display(), e)))
}

fn weights_sha256(model_name: &str) -> Option<String> {
    let path = model_name.strip_prefix("nn:")?;
    let bytes = fs::read(path).ok()?;
    Some(format!("{:x}", Sha256::digest(bytes)))
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    model_name: &str,
    proposal: &str,
    bins_text: &str,
    iters: u32,
    lnf0: f64,
    seed: u64,
    out: &Path,
    checkpoint: Option<&Path>,
    resume: Option<&Path>,
    init: &str,
    params: &EngineParams,
) -> CmdResult {
    let started = Utc::now();
    let model = load_model(model_name)?;
    let bins = parse_bins(bins_text)?;
    let proposal_kind = ProposalKind::from_str(proposal)
        .ok_or_else(|| (EXIT_USAGE, format!("unknown proposal '{}'", proposal)))?;
    let init_config = match init {
        "zeros" => Config::zeros(model.space()),
        path => {
            let text = fs::read_to_string(path)
                .map_err(|e| (EXIT_USAGE, format!("init file {}: {}", path, e)))?;
            let values: Vec<u16> = serde_json::from_str(&text)
                .map_err(|e| (EXIT_USAGE, format!("init file {}: {}", path, e)))?;
            Config::new(values)
        }
    };

    let mut state = match resume {
        Some(ck_path) => {
            let text = fs::read_to_string(ck_path)
                .map_err(|e| (EXIT_IO, format!("{}: {}", ck_path.display(), e)))?;
            let state = WalkerState::restore(&text, model.as_ref())
                .map_err(|e| (EXIT_USAGE, e.to_string()))?;
            if state.sched.iteration >= iters {
                println!(
                    "checkpoint already at iteration {} of {}; nothing to do",
                    state.sched.iteration, iters
                );
                return Ok(0);
            }
            state
        }
        None => WalkerState::new(model.as_ref(), bins, lnf0, proposal_kind, seed, init_config.clone())
            .map_err(|e| (EXIT_USAGE, e.to_string()))?,
    };

    let mut reps = RepresentativeStore::new(params.group_width, params.sample_stride, params.group_cap);
    let ck_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| suffix_path(out, ".ck").with_extension("json"));
    let result =
        wl_engine::run_from(&mut state, model.as_ref(), iters, &mut reps, params, &init_config);

    // flush state even on timeout so long runs can resume
    write_file(&ck_path, state.snapshot(model.name()).as_bytes())?;
    let mut csv = Vec::new();
    state
        .hist
        .write_csv(&mut csv)
        .map_err(|e| (EXIT_IO, e.to_string()))?;
    write_file(out, &csv)?;
    write_file(
        &out.with_extension("json"),
        state.hist.to_json(&state.sched).as_bytes(),
    )?;
    write_file(&suffix_path(out, ".reps").with_extension("json"), reps.to_json().as_bytes())?;

    let report = match result {
        Ok(report) => report,
        Err(EngineError::IterationTimeout { iteration, max_steps }) => {
            eprintln!(
                "iteration {} hit the {}-step guard; checkpoint flushed to {}",
                iteration,
                max_steps,
                ck_path.display()
            );
            return Ok(EXIT_TIMEOUT);
        }
        Err(e) => return Err((EXIT_USAGE, e.to_string())),
    };

    let finished = Utc::now();
    let manifest = format!(
        "{{\"command\":\"{}\",\"seed\":{},\"model\":\"{}\",\"bins\":\"{}\",\"proposal\":\"{}\",\"iterations\":{},\"weights_sha256\":{},\"started\":\"{}\",\"finished\":\"{}\",\"iteration_steps\":[{}],\"overflow_low\":{},\"overflow_high\":{},\"final_ln_f\":{}}}",
        std::env::args().collect::<Vec<_>>().join(" ").replace('"', "'"),
        seed,
        model.name(),
        bins_text,
        proposal_kind.as_str(),
        iters,
        weights_sha256(model_name).map(|h| format!("\"{}\"", h)).unwrap_or_else(|| "null".into()),
        started.to_rfc3339_opts(SecondsFormat::Secs, true),
        finished.to_rfc3339_opts(SecondsFormat::Secs, true),
        report.iteration_steps.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        report.overflow_low,
        report.overflow_high,
        g17(report.final_ln_f),
    );
    write_file(&suffix_path(out, ".manifest").with_extension("json"), manifest.as_bytes())?;
    println!(
        "done: {} iterations, {} steps, {} visited bins, wall {:.1}s",
        report.iteration_steps.len(),
        report.iteration_steps.iter().sum::<u64>(),
        state.hist.visited_bin_count(),
        report.wall_seconds
    );
    Ok(0)
}

fn enum_budget() -> u128 {
    std::env::var("GWL_ENUM_BUDGET")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_ENUM_BUDGET)
}

fn cmd_enumerate(model_name: &str, bins_text: &str, out: &Path) -> CmdResult {
    let model = load_model(model_name)?;
    let bins = parse_bins(bins_text)?;
    let dos = match enumerate_dos(model.as_ref(), bins, enum_budget()) {
        Ok(dos) => dos,
        Err(e @ gwl::oracle::OracleError::BudgetExceeded { .. }) => {
            return Err((EXIT_BUDGET, e.to_string()))
        }
        Err(e) => return Err((EXIT_USAGE, e.to_string())),
    };
    let mut csv = Vec::new();
    dos.write_csv(&mut csv).map_err(|e| (EXIT_IO, e.to_string()))?;
    write_file(out, &csv)?;
    println!("enumerated {} configs into {}", dos.total, out.display());
    Ok(0)
}

/// Parses the shared CSV schema back into (BinSpec, s, h, visited).
fn parse_hist_csv(path: &Path) -> Result<(BinSpec, Vec<f64>, Vec<u64>, Vec<bool>), (u8, String)> {
    let text =
        fs::read_to_string(path).map_err(|e| (EXIT_IO, format!("{}: {}", path.display(), e)))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "bin_lo,s,h,visited")) => {}
        _ => return Err((EXIT_USAGE, format!("{}: missing header row", path.display()))),
    }
    let mut bin_lo = Vec::new();
    let mut s = Vec::new();
    let mut h = Vec::new();
    let mut visited = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let fail = || (EXIT_USAGE, format!("{}: malformed row at line {}", path.display(), lineno + 1));
        if fields.len() != 4 {
            return Err(fail());
        }
        bin_lo.push(fields[0].parse::<f64>().map_err(|_| fail())?);
        s.push(fields[1].parse::<f64>().map_err(|_| fail())?);
        h.push(fields[2].parse::<u64>().map_err(|_| fail())?);
        visited.push(fields[3].parse::<bool>().map_err(|_| fail())?);
    }
    if bin_lo.len() < 2 {
        return Err((EXIT_USAGE, format!("{}: need at least 2 bins", path.display())));
    }
    let width = bin_lo[1] - bin_lo[0];
    let lo = bin_lo[0] + width / 2.0;
    let hi = lo + width * bin_lo.len() as f64;
    let spec = BinSpec::new(lo, hi, width).map_err(|e| (EXIT_USAGE, e.to_string()))?;
    Ok((spec, s, h, visited))
}

fn cmd_compare(exact_path: &Path, est_path: &Path, tolerance: f64) -> CmdResult {
    let (exact_spec, _, exact_h, _) = parse_hist_csv(exact_path)?;
    let (est_spec, est_s, est_h, est_visited) = parse_hist_csv(est_path)?;
    if exact_spec != est_spec {
        return Err((EXIT_USAGE, format!("bin specs differ: {:?} vs {:?}", exact_spec, est_spec)));
    }
    let exact = ExactDos {
        spec: exact_spec,
        counts: exact_h.clone(),
        overflow_low: 0,
        overflow_high: 0,
        total: exact_h.iter().map(|&c| c as u128).sum(),
    };
    let mut est = DosHistogram::new(est_spec);
    est.s = est_s;
    est.h = est_h;
    est.visited = est_visited;
    let report = histogram_error(&exact, &est).map_err(|e| (EXIT_USAGE, e.to_string()))?;
    println!(
        "{{\"mean_abs\":{},\"max_abs\":{},\"offset\":{},\"shared_bins\":{},\"missed_bins\":{},\"spurious_bins\":{},\"tolerance\":{}}}",
        g17(report.mean_abs),
        g17(report.max_abs),
        g17(report.offset),
        report.shared_bins,
        report.missed_bins.len(),
        report.spurious_bins.len(),
        g17(tolerance),
    );
    if report.shared_bins > 0 && report.mean_abs <= tolerance {
        Ok(0)
    } else {
        Ok(EXIT_TOLERANCE)
    }
}

fn cmd_train(
    images_path: &Path,
    labels_path: &Path,
    side: usize,
    epochs: u32,
    lr: f64,
    seed: u64,
    out: &Path,
) -> CmdResult {
    let parse_err = |p: &Path, e: String| (EXIT_USAGE, format!("{}: {}", p.display(), e));
    let image_bytes =
        fs::read(images_path).map_err(|e| parse_err(images_path, e.to_string()))?;
    let label_bytes =
        fs::read(labels_path).map_err(|e| parse_err(labels_path, e.to_string()))?;
    let images = match parse_idx(&image_bytes).map_err(|e| parse_err(images_path, e.to_string()))? {
        IdxFile::Images(imgs) => imgs,
        IdxFile::Labels(_) => return Err(parse_err(images_path, "expected an image file".into())),
    };
    let labels = match parse_idx(&label_bytes).map_err(|e| parse_err(labels_path, e.to_string()))? {
        IdxFile::Labels(l) => l,
        IdxFile::Images(_) => return Err(parse_err(labels_path, "expected a label file".into())),
    };
    let toy = derive_toy(&images, &labels, side).map_err(|e| parse_err(images_path, e.to_string()))?;
    if toy.is_empty() {
        return Err((EXIT_USAGE, "no samples with labels 0/1".into()));
    }
    let space = gwl::energy_models::ConfigSpace::grid(side, side, 2);
    let mut net = Network::tiny_cnn(space, 3, 8, seed);
    let mut last_loss = f64::NAN;
    for _ in 0..epochs {
        last_loss = net.sgd_train_step(&toy, lr).map_err(|e| (EXIT_USAGE, e.to_string()))?;
    }
    let correct = toy
        .iter()
        .filter(|(x, label)| {
            let logit = net.forward(x).map(|(z, _)| z).unwrap_or(f64::NAN);
            (logit > 0.0) == (*label == 1)
        })
        .count();
    net.save(out).map_err(|e| (EXIT_IO, e.to_string()))?;
    println!(
        "trained on {} samples, {} epochs: accuracy {:.4}, final loss {:.6}",
        toy.len(),
        epochs,
        correct as f64 / toy.len() as f64,
        last_loss
    );
    Ok(0)
}

fn csv_to_series(path: &Path) -> Result<Series, (u8, String)> {
    let (spec, s, _, visited) = parse_hist_csv(path)?;
    let points: Vec<(f64, f64)> = (0..spec.bin_count())
        .filter(|&b| visited[b])
        .map(|b| (spec.center(b), s[b]))
        .collect();
    Ok(Series { label: path.display().to_string(), points })
}

fn cmd_plot(input: &Path, overlay: Option<&Path>, out: &Path) -> CmdResult {
    let mut series = vec![csv_to_series(input)?];
    if let Some(p) = overlay {
        series.push(csv_to_series(p)?);
    }
    if series.iter().all(|s| s.points.is_empty()) {
        return Err((EXIT_TOLERANCE, "nothing to plot: no visited bins".into()));
    }
    let svg = render_svg(&series, "entropy histogram")
        .map_err(|e| (EXIT_TOLERANCE, e.to_string()))?;
    write_file(out, svg.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(0)
}
