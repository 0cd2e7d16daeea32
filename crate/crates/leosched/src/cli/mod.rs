//! Command-line surface: one subcommand per pipeline stage, file-based
//! I/O, a RunManifest next to every output set. Partial failures (some
//! slots ambiguous) exit 0 with a populated error sidecar; unusable inputs
//! exit 2.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytics::{
    azimuth_report, elevation_report, launch_bin_report, read_records_jsonl, sunlit_report,
    write_records_jsonl, SlotRecord, QUADRANT_NAMES,
};
use crate::manifest::{write_atomic, RunManifest};
use crate::matching::{identify_satellite, MatchConfig};
use crate::model::{evaluate_topk, featurize, train, LabeledSlot, SchedulerModel, TrainConfig};
use crate::obstruction::{
    extract_track, pgm, xor_maps, AzimuthSense, MapGeometry, ObstructionMap, PolarTrack,
};
use crate::orbital::{LaunchCatalog, ObserverLocation, SkyCatalog};
use crate::plot::{cdf_points, line_plot, strip_plot, LineStyle, Series};
use crate::sim::{run_campaign, CampaignConfig};
use crate::trace::{detect_offset, read_trace_csv, slice_slots};

/// Exit code for unusable inputs (missing files, unparsable configs).
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// The run could not start: exit 2.
    Input(String),
    /// The run started but failed: exit 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Runtime(_) => 1,
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "leosched",
    version,
    about = "LEO scheduling analysis: identify serving satellites from terminal \
             obstruction maps, detect reallocation epochs in RTT traces, analyze \
             scheduler preferences, and model the scheduler offline."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Identify the serving satellite per slot from an obstruction-map
    /// directory and a TLE catalog.
    Identify(IdentifyArgs),
    /// Detect the 15-second reallocation epoch offset in an RTT trace.
    Epochs(EpochsArgs),
    /// Scheduler-preference reports over slot records.
    Analyze(AnalyzeArgs),
    /// Train the random-forest scheduler approximation.
    Train(TrainArgs),
    /// Evaluate a trained model against the availability baseline.
    Eval(EvalArgs),
    /// Run a synthetic constellation campaign.
    Simulate(SimulateArgs),
    /// Decode obstruction maps into polar tracks without matching.
    Decode(DecodeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AzimuthSenseArg {
    /// Azimuth grows clockwise from image-up.
    Cw,
    /// Azimuth grows counter-clockwise from image-up.
    Ccw,
}

impl From<AzimuthSenseArg> for AzimuthSense {
    fn from(v: AzimuthSenseArg) -> Self {
        match v {
            AzimuthSenseArg::Cw => AzimuthSense::Clockwise,
            AzimuthSenseArg::Ccw => AzimuthSense::CounterClockwise,
        }
    }
}

#[derive(Args, Debug)]
pub struct IdentifyArgs {
    /// Directory of <terminal>_<slot>_<unix>.pgm obstruction maps.
    #[arg(long)]
    pub maps: PathBuf,
    /// TLE catalog file (2- or 3-line sets).
    #[arg(long)]
    pub tle: PathBuf,
    /// Observer location as LAT,LON,ALT_M (degrees, degrees, meters).
    #[arg(long)]
    pub location: String,
    /// Output CSV of per-slot match results.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional launch-date CSV (norad_id,launch_date).
    #[arg(long)]
    pub launches: Option<PathBuf>,
    /// Map azimuth sense.
    #[arg(long, value_enum, default_value = "cw")]
    pub azimuth_sense: AzimuthSenseArg,
    /// Minimum candidate elevation, degrees.
    #[arg(long, default_value_t = crate::orbital::DEFAULT_MIN_ELEVATION_DEG)]
    pub min_elevation: f64,
}

#[derive(Args, Debug)]
pub struct EpochsArgs {
    /// RTT trace CSV (unix_ms,rtt_ms,lost).
    #[arg(long)]
    pub trace: PathBuf,
    /// Output directory (offset.json, slots.csv).
    #[arg(long)]
    pub out: PathBuf,
    /// Also emit SVG plots.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// SlotRecord JSON-lines file.
    #[arg(long)]
    pub records: PathBuf,
    /// Launch-date CSV (norad_id,launch_date); omit to skip the launch-bin
    /// report.
    #[arg(long)]
    pub launches: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also emit SVG plots.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// SlotRecord JSON-lines file.
    #[arg(long)]
    pub records: PathBuf,
    /// Output model JSON path.
    #[arg(long)]
    pub model: PathBuf,
    /// Training seed (controls split, CV folds, forest randomness).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Minutes to add to UTC for local time-of-day features.
    #[arg(long, default_value_t = 0)]
    pub tz_offset: i32,
    /// Grid of forest sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [50, 100, 200])]
    pub trees: Vec<usize>,
    /// Grid of max depths, comma separated; 0 means unbounded.
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16, 0])]
    pub depths: Vec<usize>,
    /// Grid of minimum samples per split, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [2, 5])]
    pub min_splits: Vec<usize>,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Trained model JSON path.
    #[arg(long)]
    pub model: PathBuf,
    /// SlotRecord JSON-lines file, disjoint from training.
    #[arg(long)]
    pub records: PathBuf,
    /// Top-k values, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 5])]
    pub k: Vec<usize>,
    /// Output CSV (k,model_acc,baseline_acc).
    #[arg(long)]
    pub out: PathBuf,
    /// Minutes to add to UTC for local time-of-day features.
    #[arg(long, default_value_t = 0)]
    pub tz_offset: i32,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Campaign config JSON file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in preset: max-elevation, uniform-random, or field-mimic.
    #[arg(long)]
    pub preset: Option<String>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Duration override, seconds.
    #[arg(long)]
    pub duration: Option<u64>,
    /// Output directory (records.jsonl, maps/, tles.txt, launches.csv).
    #[arg(long)]
    pub out: PathBuf,
    /// Skip writing per-slot PGM maps (faster, records only).
    #[arg(long)]
    pub no_maps: bool,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// Directory of <terminal>_<slot>_<unix>.pgm obstruction maps.
    #[arg(long)]
    pub maps: PathBuf,
    /// Output JSONL of polar tracks.
    #[arg(long)]
    pub out: PathBuf,
    /// Map azimuth sense.
    #[arg(long, value_enum, default_value = "cw")]
    pub azimuth_sense: AzimuthSenseArg,
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli, argv: Vec<String>) -> i32 {
    let result = match cli.command {
        Command::Identify(args) => cmd_identify(&args, argv),
        Command::Epochs(args) => cmd_epochs(&args, argv),
        Command::Analyze(args) => cmd_analyze(&args, argv),
        Command::Train(args) => cmd_train(&args, argv),
        Command::Eval(args) => cmd_eval(&args, argv),
        Command::Simulate(args) => cmd_simulate(&args, argv),
        Command::Decode(args) => cmd_decode(&args, argv),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse_location(s: &str) -> Result<ObserverLocation, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Input(format!(
            "location {s:?}: expected LAT,LON,ALT_M"
        )));
    }
    let num = |p: &str, what: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|e| CliError::Input(format!("location {what} {p:?}: {e}")))
    };
    Ok(ObserverLocation {
        latitude: num(parts[0], "latitude")?,
        longitude: num(parts[1], "longitude")?,
        altitude_m: num(parts[2], "altitude")?,
    })
}

/// Maps grouped by terminal, ordered by capture time.
fn load_map_sequences(
    dir: &Path,
) -> Result<BTreeMap<String, Vec<ObstructionMap>>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut groups: BTreeMap<String, Vec<ObstructionMap>> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(input_err)?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let (terminal, map) = pgm::read_map(&path).map_err(input_err)?;
        groups.entry(terminal).or_default().push(map);
    }
    if groups.is_empty() {
        return Err(CliError::Input(format!(
            "no maps found in {}",
            dir.display()
        )));
    }
    for maps in groups.values_mut() {
        maps.sort_by_key(|m| (m.captured_at, m.slot_index));
    }
    Ok(groups)
}

struct SlotFailure {
    terminal_id: String,
    slot_index: u32,
    captured_at: DateTime<Utc>,
    error: String,
}

/// XOR each map against its predecessor (slot 0 diffs against a blank map
/// after a reset) and extract the trail.
fn decode_sequences(
    groups: &BTreeMap<String, Vec<ObstructionMap>>,
    geom: &MapGeometry,
) -> (Vec<(DateTime<Utc>, PolarTrack)>, Vec<SlotFailure>) {
    let mut tracks = Vec::new();
    let mut failures = Vec::new();
    for (terminal, maps) in groups {
        let mut prev: Option<&ObstructionMap> = None;
        for map in maps {
            let diff = if map.slot_index == 0 {
                // reset boundary: the map itself is the first slot's trail
                Ok(map.clone())
            } else {
                match prev {
                    Some(p) => xor_maps(p, map).map_err(|e| e.to_string()),
                    None => Err("sequence starts mid-cycle".to_string()),
                }
            };
            prev = Some(map);
            match diff.and_then(|d| extract_track(&d, geom, terminal).map_err(|e| e.to_string())) {
                Ok(track) => tracks.push((map.captured_at, track)),
                Err(error) => failures.push(SlotFailure {
                    terminal_id: terminal.clone(),
                    slot_index: map.slot_index,
                    captured_at: map.captured_at,
                    error,
                }),
            }
        }
    }
    (tracks, failures)
}

fn write_failures_sidecar(path: &Path, failures: &[SlotFailure]) -> Result<(), CliError> {
    let mut csv = String::from("terminal_id,slot_index,unix,error\n");
    for f in failures {
        let _ = writeln!(
            csv,
            "{},{},{},{:?}",
            f.terminal_id,
            f.slot_index,
            f.captured_at.timestamp(),
            f.error
        );
    }
    write_atomic(path, csv.as_bytes()).map_err(runtime_err)
}

/// Manifest path next to an output file or inside an output directory.
fn manifest_dir(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.to_path_buf()
    } else {
        out.parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    }
}

fn finish_manifest(
    mut manifest: RunManifest,
    dir: &Path,
    started: std::time::Instant,
) -> Result<(), CliError> {
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(dir).map_err(runtime_err)?;
    Ok(())
}

fn cmd_identify(args: &IdentifyArgs, argv: Vec<String>) -> Result<(), CliError> {
    let started = std::time::Instant::now();
    let obs = parse_location(&args.location)?;
    let tle_text = std::fs::read_to_string(&args.tle)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.tle.display())))?;
    let parsed = crate::orbital::parse_tle_catalog(&tle_text);
    if parsed.records.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no valid TLE records ({} errors)",
            args.tle.display(),
            parsed.errors.len()
        )));
    }
    let launches = match &args.launches {
        Some(path) => LaunchCatalog::from_csv_path(path).map_err(input_err)?,
        None => LaunchCatalog::new(),
    };
    let catalog = SkyCatalog::build(&parsed.records, &launches).with_guard_days(f64::INFINITY);
    let groups = load_map_sequences(&args.maps)?;
    let geom = MapGeometry {
        azimuth_sense: args.azimuth_sense.into(),
    };
    let (tracks, mut failures) = decode_sequences(&groups, &geom);

    let config = MatchConfig {
        min_elevation_deg: args.min_elevation,
        ..MatchConfig::default()
    };
    let mut csv = String::from(
        "terminal_id,slot_index,unix,norad_id,distance,runner_up,margin,orientation,candidates,low_confidence\n",
    );
    for (captured_at, track) in &tracks {
        match identify_satellite(track, &catalog, &obs, *captured_at, &config) {
            Ok(result) => {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{:.4},{:.4},{:.4},{:?},{},{}",
                    track.terminal_id,
                    result.slot_index,
                    captured_at.timestamp(),
                    result.best,
                    result.best_distance,
                    result.runner_up_distance,
                    result.margin,
                    result.orientation,
                    result.candidates_considered,
                    result.low_confidence,
                );
            }
            Err(e) => failures.push(SlotFailure {
                terminal_id: track.terminal_id.clone(),
                slot_index: track.slot_index,
                captured_at: *captured_at,
                error: e.to_string(),
            }),
        }
    }
    write_atomic(&args.out, csv.as_bytes()).map_err(runtime_err)?;
    let sidecar = args.out.with_extension("errors.csv");
    write_failures_sidecar(&sidecar, &failures)?;

    let mut manifest = RunManifest::new("identify", argv);
    manifest.input(&args.maps).input(&args.tle);
    manifest.output(&args.out).output(&sidecar);
    manifest.config = serde_json::json!({
        "location": args.location,
        "azimuth_sense": format!("{:?}", geom.azimuth_sense),
        "min_elevation": args.min_elevation,
    });
    finish_manifest(manifest, &manifest_dir(&args.out, false), started)
}

fn cmd_decode(args: &DecodeArgs, argv: Vec<String>) -> Result<(), CliError> {
    let started = std::time::Instant::now();
    let groups = load_map_sequences(&args.maps)?;
    let geom = MapGeometry {
        azimuth_sense: args.azimuth_sense.into(),
    };
    let (tracks, failures) = decode_sequences(&groups, &geom);
    let mut out = String::new();
    for (captured_at, track) in &tracks {
        let line = serde_json::json!({
            "unix": captured_at.timestamp(),
            "track": track,
        });
        let _ = writeln!(out, "{line}");
    }
    write_atomic(&args.out, out.as_bytes()).map_err(runtime_err)?;
    let sidecar = args.out.with_extension("errors.csv");
    write_failures_sidecar(&sidecar, &failures)?;

    let mut manifest = RunManifest::new("decode", argv);
    manifest.input(&args.maps);
    manifest.output(&args.out).output(&sidecar);
    finish_manifest(manifest, &manifest_dir(&args.out, false), started)
}

fn cmd_epochs(args: &EpochsArgs, argv: Vec<String>) -> Result<(), CliError> {
    let started = std::time::Instant::now();
    let trace = read_trace_csv(&args.trace).map_err(input_err)?;
    let detection = detect_offset(&trace).map_err(input_err)?;
    let slots = slice_slots(&trace, detection.offset_s).map_err(runtime_err)?;

    let offset_json =
        serde_json::to_string_pretty(&detection).map_err(runtime_err)?;
    write_atomic(&args.out.join("offset.json"), offset_json.as_bytes()).map_err(runtime_err)?;

    let mut csv = String::from("slot_start_unix_ms,n,median_ms,p5_ms,p95_ms,loss_rate,bands\n");
    for s in &slots {
        let _ = writeln!(
            csv,
            "{},{},{:.3},{:.3},{:.3},{:.4},{}",
            s.slot_start.timestamp_millis(),
            s.n,
            s.median_ms,
            s.p5_ms,
            s.p95_ms,
            s.loss_rate,
            s.bands.len()
        );
    }
    write_atomic(&args.out.join("slots.csv"), csv.as_bytes()).map_err(runtime_err)?;

    if args.plots {
        let t0 = trace[0].t;
        let points: Vec<(f64, f64)> = trace
            .iter()
            .filter(|s| !s.lost)
            .map(|s| ((s.t - t0).num_milliseconds() as f64 / 1000.0, s.rtt_ms))
            .collect();
        let svg = strip_plot("RTT trace", "time (s)", "RTT (ms)", &points);
        write_atomic(&args.out.join("rtt_strip.svg"), svg.as_bytes()).map_err(runtime_err)?;
    }

    let mut manifest = RunManifest::new("epochs", argv);
    manifest.input(&args.trace);
    manifest.output(args.out.join("offset.json"));
    manifest.output(args.out.join("slots.csv"));
    manifest.config = serde_json::json!({ "plots": args.plots });
    finish_manifest(manifest, &args.out, started)
}

fn load_records(path: &Path) -> Result<Vec<SlotRecord>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    read_records_jsonl(std::io::BufReader::new(file)).map_err(input_err)
}

fn cmd_analyze(args: &AnalyzeArgs, argv: Vec<String>) -> Result<(), CliError> {
    let started = std::time::Instant::now();
    let records = load_records(&args.records)?;
    let mut outputs = Vec::new();

    let elevation = elevation_report(&records).map_err(input_err)?;
    let mut csv = String::from("metric,value\n");
    let _ = writeln!(csv, "median_gap_deg,{:.4}", elevation.median_gap_deg);
    let _ = writeln!(csv, "high_band_available_share,{:.6}", elevation.high_band_available_share);
    let _ = writeln!(csv, "high_band_selected_share,{:.6}", elevation.high_band_selected_share);
    let path = args.out.join("elevation.csv");
    write_atomic(&path, csv.as_bytes()).map_err(runtime_err)?;
    outputs.push(path);

    let azimuth = azimuth_report(&records).map_err(input_err)?;
    let mut csv = String::from("quadrant,available_share,selected_share\n");
    for q in 0..4 {
        let _ = writeln!(
            csv,
            "{},{:.6},{:.6}",
            QUADRANT_NAMES[q], azimuth.available_shares[q], azimuth.selected_shares[q]
        );
    }
    let _ = writeln!(
        csv,
        "north,{:.6},{:.6}",
        azimuth.north_available_share, azimuth.north_selected_share
    );
    let path = args.out.join("azimuth.csv");
    write_atomic(&path, csv.as_bytes()).map_err(runtime_err)?;
    outputs.push(path);

    let launch = match &args.launches {
        Some(path) => {
            let catalog = LaunchCatalog::from_csv_path(path).map_err(input_err)?;
            let report = launch_bin_report(&records, &catalog).map_err(input_err)?;
            let mut csv = String::from("year,month,picked_slots,available_slots,pick_probability\n");
            for row in &report.rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{:.6}",
                    row.bin.year, row.bin.month, row.picked_slots, row.available_slots, row.pick_probability
                );
            }
            let path = args.out.join("launch_bins.csv");
            write_atomic(&path, csv.as_bytes()).map_err(runtime_err)?;
            outputs.push(path);
            Some(report)
        }
        None => None,
    };

    let sunlit = sunlit_report(&records).ok();
    if let Some(s) = &sunlit {
        let mut csv = String::from("metric,value\n");
        let _ = writeln!(csv, "mixed_slots,{}", s.mixed_slots);
        let _ = writeln!(csv, "sunlit_pick_rate,{:.6}", s.sunlit_pick_rate);
        if let Some(v) = s.min_dark_share_on_dark_pick {
            let _ = writeln!(csv, "min_dark_share_on_dark_pick,{v:.6}");
        }
        if let Some(v) = s.dark_pick_elevation_gap_deg {
            let _ = writeln!(csv, "dark_pick_elevation_gap_deg,{v:.4}");
        }
        let path = args.out.join("sunlit.csv");
        write_atomic(&path, csv.as_bytes()).map_err(runtime_err)?;
        outputs.push(path);
    }

    let summary = serde_json::json!({
        "records": records.len(),
        "elevation": {
            "median_gap_deg": elevation.median_gap_deg,
            "high_band_available_share": elevation.high_band_available_share,
            "high_band_selected_share": elevation.high_band_selected_share,
        },
        "azimuth": azimuth,
        "launch_spearman": launch.as_ref().map(|l| l.spearman),
        "sunlit": sunlit,
    });
    let path = args.out.join("summary.json");
    write_atomic(
        &path,
        serde_json::to_string_pretty(&summary).map_err(runtime_err)?.as_bytes(),
    )
    .map_err(runtime_err)?;
    outputs.push(path);

    if args.plots {
        let svg = line_plot(
            "Elevation of selected vs available satellites",
            "elevation (deg)",
            "CDF",
            &[
                Series {
                    label: "selected",
                    points: cdf_points(&elevation.cdf_selected),
                    style: LineStyle::Solid,
                },
                Series {
                    label: "available",
                    points: cdf_points(&elevation.cdf_available),
                    style: LineStyle::Dashed,
                },
            ],
        );
        let path = args.out.join("elevation_cdf.svg");
        write_atomic(&path, svg.as_bytes()).map_err(runtime_err)?;
        outputs.push(path);
    }

    let mut manifest = RunManifest::new("analyze", argv);
    manifest.input(&args.records);
    if let Some(l) = &args.launches {
        manifest.input(l);
    }
    for o in outputs {
        manifest.output(o);
    }
    manifest.config = serde_json::json!({ "plots": args.plots });
    finish_manifest(manifest, &args.out, started)
}

fn featurize_records(records: &[SlotRecord], tz_offset: i32) -> (Vec<LabeledSlot>, usize) {
    let mut slots = Vec::new();
    let mut skipped = 0usize;
    for rec in records {
        match featurize(rec, tz_offset) {
            Ok(slot) => slots.push(slot),
            Err(_) => skipped += 1, // null selection or cohort of one
        }
    }
    (slots, skipped)
}

fn cmd_train(args: &TrainArgs, argv: Vec<String>) -> Result<(), CliError> {
    let started = std::time::Instant::now();
    let records = load_records(&args.records)?;
    let (slots, skipped) = featurize_records(&records, args.tz_offset);
    let config = TrainConfig {
        trees_grid: args.trees.clone(),
        depth_grid: args
            .depths
            .iter()
            .map(|&d| if d == 0 { None } else { Some(d) })
            .collect(),
        min_split_grid: args.min_splits.clone(),
        cv_folds: args.folds,
        ..TrainConfig::default()
    };
    let model = train(&slots, &config, args.seed).map_err(input_err)?;
    model.save(&args.model).map_err(runtime_err)?;
    if skipped > 0 {
        eprintln!("skipped {skipped} records without a usable cohort");
    }
    for row in &model.holdout {
        println!(
            "holdout top-{}: model {:.3}, baseline {:.3}",
            row.k, row.model_accuracy, row.baseline_accuracy
        );
    }

    let mut manifest = RunManifest::new("train", argv);
    manifest.input(&args.records);
    manifest.output(&args.model);
    manifest.seed = Some(args.seed);
    manifest.config = serde_json::to_value(&config).map_err(runtime_err)?;
    finish_manifest(manifest, &manifest_dir(&args.model, false), started)
}

fn cmd_eval(args: &EvalArgs, argv: Vec<String>) -> Result<(), CliError> {
    let started = std::time::Instant::now();
    let model = SchedulerModel::load(&args.model).map_err(input_err)?;
    let records = load_records(&args.records)?;
    let (slots, _) = featurize_records(&records, args.tz_offset);
    let rows = evaluate_topk(&model, &slots, &args.k).map_err(input_err)?;
    let mut csv = String::from("k,model_acc,baseline_acc\n");
    for row in &rows {
        let _ = writeln!(csv, "{},{:.6},{:.6}", row.k, row.model_accuracy, row.baseline_accuracy);
    }
    write_atomic(&args.out, csv.as_bytes()).map_err(runtime_err)?;

    let mut manifest = RunManifest::new("eval", argv);
    manifest.input(&args.model).input(&args.records);
    manifest.output(&args.out);
    manifest.config = serde_json::json!({ "k": args.k, "tz_offset": args.tz_offset });
    finish_manifest(manifest, &manifest_dir(&args.out, false), started)
}

fn cmd_simulate(args: &SimulateArgs, argv: Vec<String>) -> Result<(), CliError> {
    let started = std::time::Instant::now();
    let mut config: CampaignConfig = match (&args.config, &args.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => CampaignConfig::preset(name, args.seed.unwrap_or(0))
            .ok_or_else(|| CliError::Input(format!("unknown preset {name:?}")))?,
        _ => {
            return Err(CliError::Input(
                "exactly one of --config or --preset is required".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
        config.scheduler.seed = seed;
    }
    if let Some(duration) = args.duration {
        config.duration_s = duration;
    }

    let campaign = run_campaign(&config).map_err(input_err)?;

    let config_json = serde_json::to_string_pretty(&config).map_err(runtime_err)?;
    write_atomic(&args.out.join("config.json"), config_json.as_bytes()).map_err(runtime_err)?;

    let tles: String = campaign
        .constellation
        .iter()
        .flat_map(|r| [r.line1.as_str(), "\n", r.line2.as_str(), "\n"])
        .collect();
    write_atomic(&args.out.join("tles.txt"), tles.as_bytes()).map_err(runtime_err)?;
    campaign
        .launches
        .to_csv_path(&args.out.join("launches.csv"))
        .map_err(runtime_err)?;

    let records: Vec<SlotRecord> = campaign.slots.iter().map(|s| s.record.clone()).collect();
    let mut jsonl = Vec::new();
    write_records_jsonl(&mut jsonl, &records).map_err(runtime_err)?;
    write_atomic(&args.out.join("records.jsonl"), &jsonl).map_err(runtime_err)?;

    // ground-truth selections for scoring identification runs
    let mut truth = String::from("terminal_id,slot_index,unix,selected\n");
    for slot in &campaign.slots {
        let _ = writeln!(
            truth,
            "{},{},{},{}",
            slot.record.terminal_id,
            slot.map.slot_index,
            slot.record.slot_start.timestamp(),
            slot.record.selected.map_or(String::new(), |id| id.to_string()),
        );
    }
    write_atomic(&args.out.join("truth.csv"), truth.as_bytes()).map_err(runtime_err)?;

    if !args.no_maps {
        let maps_dir = args.out.join("maps");
        std::fs::create_dir_all(&maps_dir).map_err(runtime_err)?;
        for slot in &campaign.slots {
            pgm::write_map(&maps_dir, &slot.record.terminal_id, &slot.map)
                .map_err(runtime_err)?;
        }
    }
    println!(
        "{} slots ({} empty, {} render failures)",
        campaign.slots.len(),
        campaign.empty_slots,
        campaign.render_failures
    );

    let mut manifest = RunManifest::new("simulate", argv);
    manifest.seed = Some(config.seed);
    manifest.config = serde_json::to_value(&config).map_err(runtime_err)?;
    manifest.output(args.out.join("records.jsonl"));
    manifest.output(args.out.join("truth.csv"));
    manifest.output(args.out.join("tles.txt"));
    manifest.output(args.out.join("launches.csv"));
    finish_manifest(manifest, &args.out, started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_parses_and_help_is_complete() {
        Cli::command().debug_assert();
        // every subcommand documents every flag
        for sub in Cli::command().get_subcommands() {
            for arg in sub.get_arguments() {
                assert!(
                    arg.get_help().is_some(),
                    "undocumented flag --{} on {}",
                    arg.get_id(),
                    sub.get_name()
                );
            }
        }
    }

    #[test]
    fn location_parsing() {
        let obs = parse_location("41.66,-91.53,200").unwrap();
        assert_eq!(obs.latitude, 41.66);
        assert_eq!(obs.longitude, -91.53);
        assert_eq!(obs.altitude_m, 200.0);
        assert!(parse_location("1,2").is_err());
        assert!(parse_location("a,b,c").is_err());
    }

    #[test]
    fn missing_maps_dir_is_input_error() {
        let err = load_map_sequences(Path::new("/nonexistent-dir-xyz")).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_INPUT);
    }

    #[test]
    fn empty_maps_dir_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_map_sequences(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_INPUT);
        assert!(err.to_string().contains("no maps found"));
    }
}
