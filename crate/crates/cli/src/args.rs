use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use satr::eval::parse_color;
use satr::fixtures::FixtureKind;
use satr::geodesic::{GeodesicBackend, Reweighting};
use satr::pipeline::{DetectorKind, PipelineConfig};
use satr::render::ViewSampling;
use satr::scoring::{NormalizeAxis, ViewAggregation};

/// Zero-shot part segmentation of triangle meshes from multi-view 2D boxes.
///
/// Exit status: 0 on success, 1 on bad input, 2 when the detector service
/// cannot be reached or answers malformed responses.
#[derive(Debug, Parser)]
#[command(name = "satr", version)]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment a mesh; writes segmentation.ply, detections.json, scores.bin
    /// and config.toml into the output directory.
    Segment {
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(short, long, default_value = "satr-out")]
        out: PathBuf,
    },
    /// Run the detector over all views and save its answers for replay.
    Record {
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for detections.json and config.toml.
        #[arg(short, long, default_value = "satr-record")]
        out: PathBuf,
    },
    /// Render the configured views as PNG images and pixel-to-face rasters.
    Render {
        /// Mesh file (OBJ or PLY).
        mesh: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long, default_value = "satr-views")]
        out: PathBuf,
    },
    /// Benchmark over a manifest; writes report.json and report.csv.
    Evaluate {
        /// JSON manifest {shapes: [{mesh, labels, category}], parts: [{class_id, prompt}]}.
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long, default_value = "satr-eval")]
        out: PathBuf,
    },
    /// Benchmark once per value of one config axis; writes sweep.json and sweep.csv.
    Sweep {
        manifest: PathBuf,
        /// n_views[=5,10,...], sampling=normal,uniform, reweighting=none,gaussian,max,softmax,
        /// smoothing=off,on or color=rrggbb,...
        #[arg(long)]
        axis: String,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long, default_value = "satr-sweep")]
        out: PathBuf,
    },
    /// Write a labeled synthetic mesh (PLY) plus a one-shape manifest beside it.
    MakeFixture {
        /// snowman, dumbbell, humanoid, grid or icosphere.
        kind: FixtureKind,
        #[command(flatten)]
        params: FixtureArgs,
        /// Output PLY path.
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Mesh file (OBJ or PLY).
    pub mesh: PathBuf,
    /// Text prompt, one per part; repeat the flag for several parts.
    #[arg(short, long = "prompt", required = true)]
    pub prompts: Vec<String>,
    /// Ground-truth face labels for the oracle detector (whitespace or JSON
    /// integers). Defaults to labels stored in the mesh.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Ground-truth class id searched by the oracle for each prompt, comma
    /// separated. Defaults to 0, 1, 2, ...
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<i32>>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub radius_a: Option<f64>,
    #[arg(long)]
    pub radius_b: Option<f64>,
    /// Dumbbell: distance between the two spheres.
    #[arg(long)]
    pub gap: Option<f64>,
    #[arg(long)]
    pub tube_radius: Option<f64>,
    /// Dumbbell: how far the connecting tube dips below the spheres.
    #[arg(long)]
    pub tube_depth: Option<f64>,
    /// Grid: cells along x.
    #[arg(long)]
    pub nx: Option<usize>,
    /// Grid: cells along y.
    #[arg(long)]
    pub ny: Option<usize>,
    /// Icosphere: subdivision level.
    #[arg(long)]
    pub subdivisions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config file; flags below override its values.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Built-in starting point when no config file is given: default, human, baseline.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Number of rendered views.
    #[arg(long)]
    pub views: Option<usize>,
    /// Camera angle sampling: normal or uniform.
    #[arg(long)]
    pub sampling: Option<ViewSampling>,
    /// Seed for view sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Square render size in pixels.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Neighborhood rank for visibility smoothing.
    #[arg(long)]
    pub q: Option<usize>,
    /// Geodesic reweighting: none, gaussian, max or softmax.
    #[arg(long)]
    pub reweighting: Option<Reweighting>,
    /// Visibility smoothing on or off.
    #[arg(long, value_parser = parse_switch)]
    pub smoothing: Option<bool>,
    /// Across-view aggregation: max or sum.
    #[arg(long)]
    pub aggregation: Option<ViewAggregation>,
    /// Score normalization: per_prompt or per_face.
    #[arg(long)]
    pub normalize: Option<NormalizeAxis>,
    /// Faces whose best normalized score is below this are left unlabeled (-1).
    #[arg(long)]
    pub background: Option<f64>,
    /// Geodesic distances: graph or heat.
    #[arg(long)]
    pub geodesic: Option<GeodesicBackend>,
    /// Mesh color for rendering as rrggbb hex.
    #[arg(long, value_parser = parse_color)]
    pub color: Option<[u8; 3]>,
    /// Detector backend: oracle, replay or remote.
    #[arg(long)]
    pub detector: Option<DetectorKind>,
    /// Detection record for the replay backend.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Base URL of the detector service for the remote backend.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Oracle noise: edge jitter as a fraction of box size.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Oracle noise: probability of dropping a true box.
    #[arg(long)]
    pub drop_prob: Option<f64>,
    /// Oracle noise: expected false boxes per query.
    #[arg(long)]
    pub spurious_rate: Option<f64>,
    /// Oracle noise seed.
    #[arg(long)]
    pub noise_seed: Option<u64>,
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(format!("expected on or off, got {other:?}")),
    }
}

impl ConfigArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),+ $(,)?) => {
                $(if let Some(v) = self.$flag.clone() {
                    cfg.$($field).+ = v;
                })+
            };
        }
        set!(
            views => n_views,
            sampling => sampling,
            seed => seed,
            resolution => resolution,
            q => q,
            reweighting => reweighting,
            smoothing => smoothing,
            aggregation => aggregation,
            normalize => normalize,
            geodesic => geodesic,
            color => color,
            detector => detector.kind,
            endpoint => detector.remote.endpoint,
            jitter => detector.noise.jitter_frac,
            drop_prob => detector.noise.drop_prob,
            spurious_rate => detector.noise.spurious_rate,
            noise_seed => detector.noise.seed,
        );
        if let Some(t) = self.background {
            cfg.background = Some(t);
        }
        if let Some(p) = &self.replay {
            cfg.detector.replay = Some(p.clone());
            if self.detector.is_none() {
                cfg.detector.kind = DetectorKind::Replay;
            }
        }
    }
}
