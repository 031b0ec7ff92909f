//! Command-line front end: `track` detections into trajectories, `simulate`
//! synthetic scenarios, `evaluate` tracks against ground truth, and `bench`
//! an end-to-end sweep over clutter rate and detection probability.
//!
//! Data goes to files and standard output; diagnostics go to standard error.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use monotrack::eval::{clear_mot, EvalObject, MatchCriterion, MotMetrics};
use monotrack::io::{
    parse_calibration, parse_detections, parse_kitti_labels, parse_poses, parse_tracks,
    track_records_from_estimates, write_calibration, write_detections, write_tracks,
    FilterConfigFile, Pose, ScenarioFile, TrackFileRecord,
};
use monotrack::models::{
    detection_to_measurement, CameraModel, ConstantVelocityMotion, Detection, ModelParams,
    ObjectState, PinholeMeasurement,
};
use monotrack::pmbm::PmbmConfig;
use monotrack::sim::simulate;
use monotrack::CameraFilter;

#[derive(Parser)]
#[command(name = "monotrack", version, about = "3D multi-object tracking from monocular detections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tracking filter over a detections file and write tracks.
    Track(TrackArgs),
    /// Generate a synthetic scenario: ground truth plus detections.
    Simulate(SimulateArgs),
    /// Score a tracks file against ground truth with CLEAR-MOT measures.
    Evaluate(EvaluateArgs),
    /// End-to-end synthetic sweep over clutter rate and detection probability.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrackArgs {
    /// Detections file (CSV, or KITTI labels with --kitti-format).
    #[arg(long)]
    detections: PathBuf,
    /// Camera calibration (key=value).
    #[arg(long)]
    calib: PathBuf,
    /// Filter configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-frame ego poses; when given, output states are in the world frame.
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Output tracks file.
    #[arg(long)]
    out: PathBuf,
    /// Read the detections as KITTI tracking labels.
    #[arg(long)]
    kitti_format: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (gt.csv, detections.csv, calib.txt, scenario.toml).
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum CriterionArg {
    /// Bounding-box IoU at 50%.
    #[value(name = "2d")]
    TwoD,
    /// Euclidean distance within 3 m.
    #[value(name = "3d")]
    ThreeD,
    /// Both criteria, one row each.
    Both,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth file in the tracks schema.
    #[arg(long)]
    gt: PathBuf,
    /// Tracks file to score.
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    criterion: CriterionArg,
    /// Metrics CSV output (a row per criterion plus an aggregate row).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Base seed; run r of a combination uses seed + r.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    frames: usize,
    /// Clutter rates to sweep.
    #[arg(long, value_delimiter = ',', default_value = "0,2,5,10")]
    lambdas: Vec<f64>,
    /// Detection probabilities to sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.85,0.95")]
    p_detects: Vec<f64>,
    /// Simulations per combination.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Plot-ready CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Track(args) => cmd_track(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

struct Timing {
    mean_ms: f64,
    max_ms: f64,
}

/// Runs the filter over per-frame detections; returns per-frame
/// `(id, existence, state)` estimates and the per-frame latency summary.
fn track_frames(
    camera: &CameraModel<f64>,
    params: ModelParams<f64>,
    config: PmbmConfig<f64>,
    frames: &[Vec<Detection<f64>>],
) -> Result<(Vec<Vec<(u64, f64, ObjectState<f64>)>>, Timing)> {
    let mut filter = CameraFilter::new(
        ConstantVelocityMotion,
        PinholeMeasurement { camera: *camera },
        params,
        config,
    )
    .context("filter construction")?;
    let mut estimates = Vec::with_capacity(frames.len());
    let mut total = 0.0f64;
    let mut max_ms = 0.0f64;
    for (k, dets) in frames.iter().enumerate() {
        let mut zs: Vec<DVector<f64>> = Vec::with_capacity(dets.len());
        for d in dets {
            zs.push(detection_to_measurement(d).context("invalid detection")?.to_vector());
        }
        let t0 = Instant::now();
        filter.step(&zs).with_context(|| format!("filter step at frame {k}"))?;
        let frame_estimates: Vec<(u64, f64, ObjectState<f64>)> = filter
            .extract_detailed()
            .into_iter()
            .map(|(id, existence, mean)| {
                ObjectState::from_vector(&mean).map(|s| (id.0, existence, s))
            })
            .collect::<Result<_, _>>()?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        total += ms;
        max_ms = max_ms.max(ms);
        estimates.push(frame_estimates);
    }
    let mean_ms = if frames.is_empty() { 0.0 } else { total / frames.len() as f64 };
    Ok((estimates, Timing { mean_ms, max_ms }))
}

fn cmd_track(args: TrackArgs) -> Result<()> {
    let camera = parse_calibration(&args.calib)
        .with_context(|| format!("reading {}", args.calib.display()))?;
    let config_file = match &args.config {
        Some(path) => FilterConfigFile::load(path)
            .with_context(|| format!("reading {}", path.display()))?,
        None => FilterConfigFile::default(),
    };
    let (params, config) = config_file.build(&camera).context("resolving filter configuration")?;
    let frames = if args.kitti_format {
        parse_kitti_labels(&args.detections)
    } else {
        parse_detections(&args.detections)
    }
    .with_context(|| format!("reading {}", args.detections.display()))?;
    let poses: Option<Vec<Pose>> = match &args.poses {
        Some(path) => {
            let poses =
                parse_poses(path).with_context(|| format!("reading {}", path.display()))?;
            if poses.len() < frames.len() {
                bail!("poses file covers {} frames, detections have {}", poses.len(), frames.len());
            }
            Some(poses)
        }
        None => None,
    };

    let (estimates, timing) = track_frames(&camera, params, config, &frames)?;
    let records = track_records_from_estimates(&estimates, &camera, poses.as_deref());
    write_tracks(&args.out, &records)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let produced: usize = estimates.iter().map(|f| f.len()).sum();
    eprintln!(
        "tracked {} frames ({} detections, {} estimates): mean {:.2} ms/frame, max {:.2} ms",
        frames.len(),
        frames.iter().map(|f| f.len()).sum::<usize>(),
        produced,
        timing.mean_ms,
        timing.max_ms
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut scenario = ScenarioFile::load(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let cfg = scenario.build().context("resolving scenario")?;
    let (gt, detections) = simulate(&cfg).context("running the simulator")?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let gt_estimates: Vec<Vec<(u64, f64, ObjectState<f64>)>> = gt
        .frames
        .iter()
        .map(|frame| frame.iter().map(|(id, s)| (*id, 1.0, *s)).collect())
        .collect();
    let gt_records = track_records_from_estimates(&gt_estimates, &cfg.camera, None);
    write_tracks(&args.out.join("gt.csv"), &gt_records)?;
    write_detections(&args.out.join("detections.csv"), &detections)?;
    write_calibration(&args.out.join("calib.txt"), &cfg.camera)?;
    // Echo the resolved scenario (seed overrides included) for provenance.
    std::fs::write(args.out.join("scenario.toml"), scenario.to_toml())?;
    eprintln!(
        "simulated {} frames: {} trajectories, {} detections -> {}",
        cfg.n_frames,
        gt.lifespans.len(),
        detections.iter().map(|f| f.len()).sum::<usize>(),
        args.out.display()
    );
    Ok(())
}

fn records_to_eval(frames: &[Vec<TrackFileRecord>]) -> Vec<Vec<EvalObject<f64>>> {
    frames
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|r| EvalObject {
                    id: r.track_id,
                    bbox: (r.x_min < r.x_max && r.y_min < r.y_max)
                        .then_some([r.x_min, r.y_min, r.x_max, r.y_max]),
                    position: [r.x, r.y, r.z],
                })
                .collect()
        })
        .collect()
}

fn criterion_rows(arg: CriterionArg) -> Vec<(&'static str, MatchCriterion<f64>)> {
    match arg {
        CriterionArg::TwoD => vec![("2d", MatchCriterion::iou_2d())],
        CriterionArg::ThreeD => vec![("3d", MatchCriterion::euclidean_3d())],
        CriterionArg::Both => vec![
            ("2d", MatchCriterion::iou_2d()),
            ("3d", MatchCriterion::euclidean_3d()),
        ],
    }
}

fn metrics_table_row(label: &str, m: &MotMetrics<f64>, in_cm: bool) -> String {
    let motp = if in_cm { format!("{:8.2}cm", m.motp) } else { format!("{:8.2}%", m.motp * 100.0) };
    format!(
        "{label:>4} {:7.2}% {motp} {:6.2}% {:6.2}% {:5} {:5} {:6.2}% {:6.2}% {:6.2}% {:6.3}",
        m.mota * 100.0,
        m.mt * 100.0,
        m.ml * 100.0,
        m.ids,
        m.frag,
        m.f1 * 100.0,
        m.precision * 100.0,
        m.recall * 100.0,
        m.far
    )
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let gt_frames =
        parse_tracks(&args.gt).with_context(|| format!("reading {}", args.gt.display()))?;
    let track_frames =
        parse_tracks(&args.tracks).with_context(|| format!("reading {}", args.tracks.display()))?;
    // Trailing frames with no records are indistinguishable from absent ones,
    // so both sides are padded to the longer length.
    let len = gt_frames.len().max(track_frames.len());
    let mut gt_eval = records_to_eval(&gt_frames);
    let mut track_eval = records_to_eval(&track_frames);
    gt_eval.resize(len, Vec::new());
    track_eval.resize(len, Vec::new());

    let sequence = args
        .tracks
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());

    let mut csv = String::from(MotMetrics::<f64>::csv_header());
    csv.push('\n');
    println!(
        "{:>4} {:>8} {:>10} {:>7} {:>7} {:>5} {:>5} {:>7} {:>7} {:>7} {:>6}",
        "", "MOTA", "MOTP", "MT", "ML", "IDS", "FRAG", "F1", "Pre", "Rec", "FAR"
    );
    for (label, criterion) in criterion_rows(args.criterion) {
        let metrics = clear_mot(&gt_eval, &track_eval, &criterion)?;
        let in_cm = matches!(criterion, MatchCriterion::Euclidean3d { .. });
        println!("{}", metrics_table_row(label, &metrics, in_cm));
        csv.push_str(&metrics.csv_row(&sequence, label));
        csv.push('\n');
        let aggregate = MotMetrics::pooled(std::slice::from_ref(&metrics), in_cm)
            .expect("one sequence pools");
        csv.push_str(&aggregate.csv_row("aggregate", label));
        csv.push('\n');
    }
    if let Some(out) = &args.out {
        std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

/// Initial objects for the bench scenarios: twelve vehicles over the frustum.
fn bench_objects() -> Vec<Vec<f64>> {
    vec![
        vec![-3.0, 0.5, 10.0, 0.6, 0.0, 1.0, 90.0, 65.0],
        vec![2.5, 0.3, 14.0, -0.5, 0.0, -0.6, 90.0, 65.0],
        vec![-6.0, 0.8, 24.0, 1.0, 0.0, 0.8, 90.0, 65.0],
        vec![5.0, 0.5, 30.0, -0.8, 0.0, 1.2, 90.0, 65.0],
        vec![0.5, 0.2, 40.0, 0.4, 0.0, -1.0, 90.0, 65.0],
        vec![-9.0, 0.9, 48.0, 1.2, 0.0, 0.5, 90.0, 65.0],
        vec![4.0, 0.6, 18.0, 0.3, 0.0, 0.9, 90.0, 65.0],
        vec![-2.0, 0.4, 34.0, -0.6, 0.0, -0.8, 90.0, 65.0],
        vec![7.5, 0.7, 44.0, -1.0, 0.0, 0.6, 90.0, 65.0],
        vec![-5.0, 0.5, 12.0, 0.8, 0.0, -0.4, 90.0, 65.0],
        vec![1.5, 0.3, 55.0, 0.2, 0.0, -1.2, 90.0, 65.0],
        vec![-7.5, 0.6, 60.0, 0.9, 0.0, 0.3, 90.0, 65.0],
    ]
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    if args.frames == 0 || args.runs == 0 {
        bail!("frames and runs must be positive");
    }
    let mut csv = String::from(
        "lambda,p_detect,runs,frames,mean_ms,max_ms,mota_3d,ids_mean,frag_mean,far\n",
    );
    println!(
        "{:>7} {:>9} {:>9} {:>9} {:>8} {:>6} {:>6} {:>7}",
        "lambda", "p_detect", "mean_ms", "max_ms", "MOTA3D", "IDS", "FRAG", "FAR"
    );
    for &lambda in &args.lambdas {
        for &p_detect in &args.p_detects {
            let mut scenario = ScenarioFile::default();
            scenario.n_frames = args.frames;
            scenario.model.clutter_rate = lambda;
            scenario.model.p_detect = p_detect;
            scenario.model.birth_mass = 0.05;
            scenario.model.measurement_noise.sigma_pixel = 3.0;
            scenario.model.measurement_noise.sigma_distance = 0.7;
            scenario.model.measurement_noise.sigma_extent = 3.0;
            scenario.initial_objects = bench_objects();

            let mut mean_ms = 0.0f64;
            let mut max_ms = 0.0f64;
            let mut motas = Vec::with_capacity(args.runs);
            let mut ids = Vec::with_capacity(args.runs);
            let mut frags = Vec::with_capacity(args.runs);
            let mut fars = Vec::with_capacity(args.runs);
            for run in 0..args.runs {
                scenario.seed = args.seed + run as u64;
                let cfg = scenario.build().context("resolving bench scenario")?;
                let (gt, detections) = simulate(&cfg)?;
                let (params, config) =
                    FilterConfigFile { model: scenario.model.clone(), ..Default::default() }
                        .build(&cfg.camera)?;
                let (estimates, timing) = track_frames(&cfg.camera, params, config, &detections)?;
                mean_ms += timing.mean_ms / args.runs as f64;
                max_ms = max_ms.max(timing.max_ms);

                let gt_eval = monotrack::eval::eval_objects_from_states(&gt.frames, &cfg.camera);
                let est_frames: Vec<Vec<(u64, ObjectState<f64>)>> = estimates
                    .iter()
                    .map(|f| f.iter().map(|(id, _, s)| (*id, *s)).collect())
                    .collect();
                let est_eval =
                    monotrack::eval::eval_objects_from_states(&est_frames, &cfg.camera);
                let m = clear_mot(&gt_eval, &est_eval, &MatchCriterion::euclidean_3d())?;
                motas.push(m.mota);
                ids.push(m.ids as f64);
                frags.push(m.frag as f64);
                fars.push(m.far);
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            println!(
                "{lambda:>7.1} {p_detect:>9.2} {mean_ms:>9.2} {max_ms:>9.2} {:>7.2}% {:>6.1} {:>6.1} {:>7.3}",
                mean(&motas) * 100.0,
                mean(&ids),
                mean(&frags),
                mean(&fars)
            );
            csv.push_str(&format!(
                "{lambda},{p_detect},{},{},{mean_ms},{max_ms},{},{},{},{}\n",
                args.runs,
                args.frames,
                mean(&motas),
                mean(&ids),
                mean(&frags),
                mean(&fars)
            ));
        }
    }
    if let Some(out) = &args.out {
        std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
