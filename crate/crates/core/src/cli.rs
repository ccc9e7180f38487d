//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid data or config, 3 I/O
//! failure. Diagnostics go to stderr; results only to files.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_scene, AugmentConfig};
use crate::error::{Error, Result};
use crate::evaluate::{
    evaluate, joint_offset_errors, split_extra_long, split_hard_easy, write_per_frame_csv, EvalReport, MatchConfig,
    HARD_HEIGHT_THRESHOLD,
};
use crate::io::{read_json, read_scenes, write_json, write_scenes};
use crate::model::{Lane3D, Point3D, Scene};
use crate::plot::{report_svg, scene_svg};
use crate::projection::project_lane_virtual_top;
use crate::reconstruct::{reconstruct_scene, SolverOptions, TraceRow};
use crate::synth::{add_flat_noise, generate_scene_at, rasterize_top_mask, GenerateConfig, MaskGeometry, TopView};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lane3d", version, about = "Synthetic 3D lane scenes: generate, augment, project, reconstruct, evaluate, plot")]
pub struct Cli {
    /// Worker threads (default: one per core). Output order never depends on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write randomized road scenes.
    Generate(GenerateArgs),
    /// Apply random pitch/roll/yaw rotations to every scene.
    Augment(AugmentArgs),
    /// Project lanes to the flat ground (virtual top view), optionally adding noise and writing masks.
    Project(ProjectArgs),
    /// Recover lane heights from flat-ground lanes.
    Reconstruct(ReconstructArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Render scenes or a report as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draw index mixed into every scene's random stream.
    #[arg(long, default_value_t = 0)]
    pub draw: u64,
}

/// Config of the `project` command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    /// Standard deviation of Gaussian noise on flat coordinates, meters.
    pub noise_sigma: f64,
    pub mask: MaskGeometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskView {
    Real,
    Virtual,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Camera height for the projection (default: each scene's camera).
    #[arg(long)]
    pub h_cam: Option<f64>,
    /// Also write one PGM mask and JSON sidecar per scene here.
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MaskView::Virtual)]
    pub mask_view: MaskView,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub h_cam: Option<f64>,
    /// Solver trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    All,
    ExtraLong,
    Hard,
    Easy,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth scenes.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Predicted scenes.
    #[arg(long)]
    pub pred: PathBuf,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Predictions of further methods for the joint metric.
    #[arg(long, num_args = 1..)]
    pub joint: Vec<PathBuf>,
    /// Per-frame CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::All)]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Ground-truth scenes; one SVG per frame.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Predicted scenes overlaid on the matching frames.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Report JSON; rendered as a bar chart.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Project(a) => cmd_project(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Plot(a) => cmd_plot(a),
    })
}

fn load_or_default<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    path.as_ref().map_or_else(|| Ok(T::default()), read_json)
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let cfg: GenerateConfig = load_or_default(&a.config)?;
    cfg.validate()?;
    let scenes = (0..a.count as u64)
        .into_par_iter()
        .map(|i| generate_scene_at(&cfg, a.seed, i))
        .collect::<Result<Vec<_>>>()?;
    write_scenes(&scenes, &a.out)?;
    eprintln!("wrote {} scenes to {}", scenes.len(), a.out.display());
    Ok(())
}

fn cmd_augment(a: &AugmentArgs) -> Result<()> {
    let mut cfg: AugmentConfig = load_or_default(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let scenes = read_scenes(&a.input)?;
    let out = scenes
        .par_iter()
        .map(|s| {
            let mut aug = augment_scene(s, &cfg, a.draw)?;
            aug.metadata.insert("augment_seed".into(), cfg.seed.to_string());
            aug.metadata.insert("augment_draw".into(), a.draw.to_string());
            Ok(aug)
        })
        .collect::<Result<Vec<_>>>()?;
    write_scenes(&out, &a.out)?;
    let rotated = out.iter().filter(|s| s.metadata.keys().any(|k| k.ends_with("_rad"))).count();
    eprintln!("augmented {} scenes ({rotated} rotated) into {}", out.len(), a.out.display());
    Ok(())
}

fn file_stem(frame_id: &str) -> String {
    frame_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn cmd_project(a: &ProjectArgs) -> Result<()> {
    let cfg: ProjectConfig = load_or_default(&a.config)?;
    cfg.mask.validate()?;
    let scenes = read_scenes(&a.input)?;
    if let Some(dir) = &a.mask_dir {
        fs::create_dir_all(dir)?;
    }
    let view = match a.mask_view {
        MaskView::Real => TopView::Real,
        MaskView::Virtual => TopView::Virtual,
    };
    let out = scenes
        .par_iter()
        .map(|s| {
            let h = a.h_cam.unwrap_or(s.camera.height_m);
            let flat: Vec<_> = s.lanes.iter().map(|l| project_lane_virtual_top(l, h)).collect();
            let flat = if cfg.noise_sigma > 0.0 {
                add_flat_noise(&flat, cfg.noise_sigma, a.seed, &s.frame_id)?
            } else {
                flat
            };
            if let Some(dir) = &a.mask_dir {
                rasterize_top_mask(s, &cfg.mask, view)?.write(dir, &file_stem(&s.frame_id))?;
            }
            let mut p = s.clone();
            p.anchors = None;
            p.lanes = flat
                .into_iter()
                .map(|l| Lane3D::new(l.id, l.points.iter().map(|q| Point3D::new(q.x, q.y, 0.0)).collect(), l.visibility))
                .collect::<Result<Vec<_>>>()?;
            p.metadata.insert("view".into(), "virtual_top".into());
            p.metadata.insert("projection_h_cam".into(), h.to_string());
            if cfg.noise_sigma > 0.0 {
                p.metadata.insert("noise_sigma".into(), cfg.noise_sigma.to_string());
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    write_scenes(&out, &a.out)?;
    eprintln!("projected {} scenes into {}", out.len(), a.out.display());
    Ok(())
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let opts: SolverOptions = load_or_default(&a.config)?;
    opts.validate()?;
    if let Some(h) = a.h_cam {
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("--h-cam must be > 0, got {h}")));
        }
    }
    let scenes = read_scenes(&a.input)?;
    let results = scenes
        .par_iter()
        .map(|s| reconstruct_scene(s, a.h_cam, &opts))
        .collect::<Result<Vec<(Scene, Vec<TraceRow>)>>>()?;
    let out: Vec<Scene> = results.iter().map(|r| r.0.clone()).collect();
    write_scenes(&out, &a.out)?;
    if let Some(path) = &a.trace {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "frame_id,pair,iter,J,step")?;
        for (scene, trace) in &results {
            for r in trace {
                writeln!(w, "{},{},{},{},{}", scene.frame_id, r.pair, r.iter, r.j, r.step)?;
            }
        }
        w.flush()?;
    }
    let unpaired = out
        .iter()
        .flat_map(|s| s.metadata.iter())
        .filter(|(k, v)| k.starts_with("reconstruct_status.") && v.as_str() != "solved")
        .count();
    eprintln!("reconstructed {} scenes ({unpaired} lanes not solved) into {}", out.len(), a.out.display());
    Ok(())
}

/// Keeps the scenes whose frame ids are in `ids`.
fn restrict(scenes: Vec<Scene>, ids: &std::collections::BTreeSet<String>) -> Vec<Scene> {
    scenes.into_iter().filter(|s| ids.contains(&s.frame_id)).collect()
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let base: MatchConfig = load_or_default(&a.config)?;
    base.validate()?;
    let gt_all = read_scenes(&a.input)?;
    let (gt, cfg) = match a.split {
        Split::All => (gt_all, base),
        Split::ExtraLong => split_extra_long(&gt_all, &base),
        Split::Hard => (split_hard_easy(&gt_all, HARD_HEIGHT_THRESHOLD)?.0, base),
        Split::Easy => (split_hard_easy(&gt_all, HARD_HEIGHT_THRESHOLD)?.1, base),
    };
    let ids = gt.iter().map(|s| s.frame_id.clone()).collect();
    let restrict_pred = |path: &Path| -> Result<Vec<Scene>> {
        let pred = read_scenes(path)?;
        Ok(if a.split == Split::All { pred } else { restrict(pred, &ids) })
    };
    let mut report = evaluate(&gt, &restrict_pred(&a.pred)?, &cfg)?;
    if !a.joint.is_empty() {
        let others = a
            .joint
            .iter()
            .map(|p| evaluate(&gt, &restrict_pred(p)?, &cfg))
            .collect::<Result<Vec<EvalReport>>>()?;
        let mut all: Vec<&EvalReport> = vec![&report];
        all.extend(others.iter());
        let joint = joint_offset_errors(&all);
        if joint.empty_intersection {
            eprintln!("warning: no GT lane is matched by every method");
        }
        report.joint = Some(joint);
    }
    write_json(&report, &a.out)?;
    if let Some(path) = &a.csv {
        let mut w = BufWriter::new(fs::File::create(path)?);
        write_per_frame_csv(&report, &mut w)?;
        w.flush()?;
    }
    eprintln!(
        "F {:.4}  AP {:.4}  x near/far {:.4}/{:.4}  z near/far {:.4}/{:.4}",
        report.f_score, report.ap, report.x_err_near, report.x_err_far, report.z_err_near, report.z_err_far
    );
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    if a.input.is_none() && a.report.is_none() {
        return Err(Error::InvalidInput("plot needs --in or --report".into()));
    }
    fs::create_dir_all(&a.out)?;
    let mut written = 0;
    if let Some(input) = &a.input {
        let gt = read_scenes(input)?;
        let pred = a.pred.as_ref().map(read_scenes).transpose()?.unwrap_or_default();
        for s in &gt {
            let p = pred.iter().find(|p| p.frame_id == s.frame_id);
            fs::write(a.out.join(format!("{}.svg", file_stem(&s.frame_id))), scene_svg(s, p))?;
            written += 1;
        }
    }
    if let Some(path) = &a.report {
        let report: EvalReport = read_json(path)?;
        let title = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        fs::write(a.out.join("report.svg"), report_svg(&report, &title))?;
        written += 1;
    }
    eprintln!("wrote {written} SVG files to {}", a.out.display());
    Ok(())
}
