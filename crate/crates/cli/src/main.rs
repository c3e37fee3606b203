//! Command-line front end for mesh part segmentation.

mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use satr::detector::RecordingDetector;
use satr::eval::{ablation_sweep, run_benchmark, EvalError, Manifest, PartEntry, ShapeEntry};
use satr::fixtures::{dumbbell, grid, icosphere, make_fixture, DumbbellParams, Fixture, FixtureKind};
use satr::mesh::{load_mesh, save_mesh, Mesh, MeshFormat, PlyEncoding};
use satr::pipeline::{
    build_detector, ground_truth_faces, label_color, render_views, segment, write_config, PipelineConfig,
    PipelineError, DETECTIONS_FILE,
};

use args::{Cli, Command, ConfigArgs, FixtureArgs, TargetArgs};

const EXIT_INPUT: u8 = 1;
const EXIT_TRANSPORT: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_chain(&e));
            if is_transport(&e) {
                ExitCode::from(EXIT_TRANSPORT)
            } else {
                ExitCode::from(EXIT_INPUT)
            }
        }
    }
}

/// Error chain joined by ": ", skipping causes already quoted by their parent.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

fn is_transport(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<PipelineError>().is_some_and(PipelineError::is_transport)
            || c.downcast_ref::<EvalError>().is_some_and(EvalError::is_transport)
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Segment { target, config, out } => cmd_segment(&target, &config, &out),
        Command::Record { target, config, out } => cmd_record(&target, &config, &out),
        Command::Render { mesh, config, out } => cmd_render(&mesh, &config, &out),
        Command::Evaluate { manifest, config, out } => cmd_evaluate(&manifest, &config, &out),
        Command::Sweep {
            manifest,
            axis,
            config,
            out,
        } => cmd_sweep(&manifest, &axis, &config, &out),
        Command::MakeFixture { kind, params, out } => cmd_make_fixture(kind, &params, &out),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

struct Target {
    mesh: Mesh,
    prompts: Vec<String>,
    truth: Option<Vec<i32>>,
    classes: Vec<i32>,
}

fn load_target(t: &TargetArgs) -> Result<Target> {
    if t.prompts.is_empty() {
        return Err(PipelineError::NoPrompts.into());
    }
    let mesh = load_mesh(&t.mesh, None)?;
    let truth = match &t.labels {
        Some(path) => {
            let labels = satr::eval::load_labels(path)?;
            if labels.len() != mesh.num_faces() {
                bail!(
                    "{} holds {} labels but the mesh has {} faces",
                    path.display(),
                    labels.len(),
                    mesh.num_faces()
                );
            }
            Some(labels)
        }
        None => ground_truth_faces(&mesh),
    };
    let classes = match &t.classes {
        Some(c) if c.len() != t.prompts.len() => bail!("--classes needs one id per prompt"),
        Some(c) => c.clone(),
        None => (0..t.prompts.len() as i32).collect(),
    };
    Ok(Target {
        mesh,
        prompts: t.prompts.clone(),
        truth,
        classes,
    })
}

fn cmd_segment(t: &TargetArgs, c: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = c.resolve()?;
    let target = load_target(t)?;
    let detector = build_detector(
        &cfg.detector,
        target.truth.as_deref().map(|gt| (&target.mesh, gt)),
        &target.classes,
    )?;
    let seg = segment(&target.mesh, &target.prompts, &cfg, detector.as_ref())?;
    seg.write_outputs(&target.mesh, &cfg, out)?;
    let mut counts = vec![0usize; target.prompts.len()];
    let mut background = 0;
    for &l in &seg.labels {
        match usize::try_from(l) {
            Ok(k) => counts[k] += 1,
            Err(_) => background += 1,
        }
    }
    for (p, n) in target.prompts.iter().zip(&counts) {
        println!("{p}: {n} faces");
    }
    if background > 0 {
        println!("background: {background} faces");
    }
    println!("{} detections; outputs in {}", seg.detection_count(), out.display());
    Ok(())
}

fn cmd_record(t: &TargetArgs, c: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = c.resolve()?;
    let target = load_target(t)?;
    let detector = build_detector(
        &cfg.detector,
        target.truth.as_deref().map(|gt| (&target.mesh, gt)),
        &target.classes,
    )?;
    let recorder = RecordingDetector::new(detector);
    let seg = segment(&target.mesh, &target.prompts, &cfg, &recorder)?;
    create_dir(out)?;
    seg.record.save(&out.join(DETECTIONS_FILE))?;
    write_config(&cfg, out)?;
    println!(
        "{} detections over {} queries written to {}",
        seg.detection_count(),
        seg.record.views.len(),
        out.join(DETECTIONS_FILE).display()
    );
    Ok(())
}

fn cmd_render(mesh: &Path, c: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = c.resolve()?;
    let mesh = load_mesh(mesh, None)?;
    let views = render_views(&mesh, &cfg)?;
    create_dir(out)?;
    for (i, v) in views.iter().enumerate() {
        v.write_png(&out.join(format!("view_{i:03}.png")))?;
        v.write_pixel2face(&out.join(format!("view_{i:03}.p2f")))?;
    }
    let cams = satr::pipeline::cameras(&cfg)?;
    let listing: Vec<[f64; 2]> = cams.iter().map(|c| [c.elevation, c.azimuth]).collect();
    write(&out.join("cameras.json"), serde_json::to_string_pretty(&listing)?)?;
    write_config(&cfg, out)?;
    println!("{} views written to {}", views.len(), out.display());
    Ok(())
}

fn cmd_evaluate(manifest: &Path, c: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = c.resolve()?;
    let m = Manifest::load(manifest)?;
    let report = run_benchmark(&m, &cfg)?;
    create_dir(out)?;
    write(&out.join("report.json"), report.to_json())?;
    write(&out.join("report.csv"), report.to_csv()?)?;
    write_config(&cfg, out)?;
    for p in &report.parts {
        println!("{}: {}", p.prompt, fmt_iou(p.iou));
    }
    println!("mIoU: {}", fmt_iou(report.overall));
    if report.failed > 0 {
        println!("{} of {} shapes failed; see report.json", report.failed, report.shapes.len());
    }
    Ok(())
}

fn cmd_sweep(manifest: &Path, axis: &str, c: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = c.resolve()?;
    let axis: satr::eval::SweepAxis = axis.parse().map_err(anyhow::Error::msg)?;
    let m = Manifest::load(manifest)?;
    let table = ablation_sweep(&m, &cfg, &axis)?;
    create_dir(out)?;
    write(&out.join("sweep.json"), table.to_json())?;
    write(&out.join("sweep.csv"), table.to_csv()?)?;
    write_config(&cfg, out)?;
    for row in &table.rows {
        println!("{}={}: mIoU {}", table.axis, row.setting, fmt_iou(row.report.overall));
    }
    Ok(())
}

fn fmt_iou(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn build_fixture(kind: FixtureKind, p: &FixtureArgs) -> Result<Fixture> {
    let positive = |name: &str, v: f64| -> Result<f64> {
        if !(v > 0.0 && v.is_finite()) {
            bail!("{name} must be positive");
        }
        Ok(v)
    };
    Ok(match kind {
        FixtureKind::Dumbbell => {
            let d = DumbbellParams::default();
            let params = DumbbellParams {
                radius_a: positive("radius-a", p.radius_a.unwrap_or(d.radius_a))?,
                radius_b: positive("radius-b", p.radius_b.unwrap_or(d.radius_b))?,
                gap: positive("gap", p.gap.unwrap_or(d.gap))?,
                tube_radius: positive("tube-radius", p.tube_radius.unwrap_or(d.tube_radius))?,
                tube_depth: positive("tube-depth", p.tube_depth.unwrap_or(d.tube_depth))?,
                ..d
            };
            if params.tube_radius >= params.radius_a.min(params.radius_b) {
                bail!("tube-radius must be smaller than both sphere radii");
            }
            dumbbell(&params)
        }
        FixtureKind::Grid if p.nx.is_some() || p.ny.is_some() => {
            let (nx, ny) = (p.nx.unwrap_or(10), p.ny.unwrap_or(10));
            if nx == 0 || ny == 0 {
                bail!("grid needs at least one cell per side");
            }
            let mesh = grid(nx, ny);
            let n = mesh.num_faces();
            Fixture {
                mesh: mesh.with_face_labels(vec![0; n])?,
                parts: vec!["grid".into()],
            }
        }
        FixtureKind::Icosphere if p.subdivisions.is_some() => {
            let s = p.subdivisions.unwrap_or(3);
            if s > 6 {
                bail!("at most 6 subdivisions");
            }
            let mesh = icosphere(s, 1.0, [0.0; 3]);
            let n = mesh.num_faces();
            Fixture {
                mesh: mesh.with_face_labels(vec![0; n])?,
                parts: vec!["sphere".into()],
            }
        }
        other => make_fixture(other),
    })
}

/// Writes the labeled PLY and a one-shape manifest next to it.
fn cmd_make_fixture(kind: FixtureKind, p: &FixtureArgs, out: &Path) -> Result<()> {
    let fx = build_fixture(kind, p)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let labels = fx.mesh.face_labels.clone().unwrap_or_default();
    let colors: Vec<[u8; 3]> = labels.iter().map(|&l| label_color(l)).collect();
    save_mesh(&fx.mesh, out, MeshFormat::Ply, PlyEncoding::Ascii, Some(&colors))?;
    let manifest = Manifest {
        shapes: vec![ShapeEntry {
            mesh: PathBuf::from(out.file_name().context("output needs a file name")?),
            labels: None,
            category: format!("{kind:?}").to_lowercase(),
            detections: None,
        }],
        parts: fx
            .parts
            .iter()
            .enumerate()
            .map(|(i, prompt)| PartEntry {
                class_id: i as i32,
                prompt: prompt.clone(),
            })
            .collect(),
    };
    let manifest_path = out.with_extension("manifest.json");
    write(&manifest_path, manifest.to_json())?;
    println!(
        "{} faces, parts: {}; manifest {}",
        fx.mesh.num_faces(),
        fx.parts.join(", "),
        manifest_path.display()
    );
    Ok(())
}

impl ConfigArgs {
    /// Preset or config file, then command-line overrides.
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => PipelineConfig::load(path)?,
            (None, Some(name)) => PipelineConfig::preset(name)?,
            (None, None) => PipelineConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}
