//! `btfstream`: synthesize, compress, serve, fetch, render and inspect
//! progressive BTF containers.

mod commands;
mod config;
mod scene;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bad arguments detected by the front end itself.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser, Debug)]
#[command(name = "btfstream", version, about = "Progressive BTF compression, streaming and rendering")]
pub struct Cli {
    /// Settings file with `key = value` lines; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a seeded synthetic BTF tensor.
    Synth(SynthArgs),
    /// Factorize a tensor and pack it onto a mesh as a container.
    Compress(CompressArgs),
    /// Stream a container to clients.
    Serve(ServeArgs),
    /// Download a served container.
    Fetch(FetchArgs),
    /// Render a container or a served object to an image.
    Render(RenderArgs),
    /// Progressive quality curve against a reference image, as CSV.
    Curve(CurveArgs),
    /// Place an annotation on a served object.
    Annotate(AnnotateArgs),
    /// Print a container's header and chunk table.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output tensor file, `-` for standard output.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
    /// Points per axis of the sampling lattice.
    #[arg(long, default_value_t = 16)]
    pub points: usize,
    #[arg(long, default_value_t = 8)]
    pub light_res: usize,
    #[arg(long, default_value_t = 8)]
    pub view_res: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Materials in the palette.
    #[arg(long, default_value_t = 4)]
    pub palette: usize,
    /// Material patches per axis are `2^patch_depth`.
    #[arg(long, default_value_t = 2)]
    pub patch_depth: u32,
    /// Omit the specular lobe.
    #[arg(long)]
    pub lambertian: bool,
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    /// Input tensor file, `-` for standard input.
    #[arg(default_value = "-")]
    pub tensor: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// OBJ or PLY surface; defaults to a sphere.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Luminance components (default 72).
    #[arg(long = "kY")]
    pub k_y: Option<usize>,
    /// Components per chroma channel (default 8).
    #[arg(long = "kUV")]
    pub k_uv: Option<usize>,
    /// Coarsest streamed octree depth (default 1).
    #[arg(long)]
    pub d_min: Option<u32>,
    /// Finest octree depth (default 4).
    #[arg(long)]
    pub d_max: Option<u32>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    pub container: PathBuf,
    /// Listen address (default 127.0.0.1:7878).
    #[arg(long)]
    pub bind: Option<String>,
    /// Append-only annotation journal, replayed on start.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// Chunk frames in flight per client (default 4).
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Args, Debug)]
pub struct NetArgs {
    /// Seconds to wait on the network (default 30).
    #[arg(long)]
    pub timeout: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FetchArgs {
    pub addr: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ViewArgs {
    /// Camera position.
    #[arg(long, value_parser = scene::parse_vec3, default_value = "0.5,0.5,2.5")]
    pub camera: [f64; 3],
    #[arg(long, value_parser = scene::parse_vec3, default_value = "0.5,0.5,0.5")]
    pub look_at: [f64; 3],
    #[arg(long, value_parser = scene::parse_vec3, default_value = "0,1,0")]
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    #[arg(long, default_value_t = 40.0)]
    pub fov: f64,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, value_parser = scene::parse_size, default_value = "256x256")]
    pub size: (usize, usize),
    /// `dir:x,y,z`, `point:x,y,z` or `spot:px,py,pz:ax,ay,az:cone`, each
    /// optionally followed by `:r,g,b`. Repeatable.
    #[arg(long)]
    pub light: Vec<String>,
    /// Equirectangular environment map replaced by directional lights.
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Lights extracted from `--env` (default 8).
    #[arg(long)]
    pub lights: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Container file or server address.
    pub source: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub view: ViewArgs,
    /// Components per channel to use, as y,u,v.
    #[arg(long)]
    pub ranks: Option<String>,
    /// Streamed level to shade from.
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long)]
    pub no_annotations: bool,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Args, Debug)]
pub struct CurveArgs {
    /// Container file or server address.
    pub source: String,
    /// Reference image; defaults to a render of the complete object.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Output CSV (version,rmse,psnr), `-` for standard output.
    #[arg(long, default_value = "-")]
    pub csv: PathBuf,
    #[command(flatten)]
    pub view: ViewArgs,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    pub addr: String,
    /// marker, text or stroke.
    #[arg(long)]
    pub kind: String,
    #[arg(long, value_parser = scene::parse_vec3)]
    pub pos: [f64; 3],
    #[arg(long)]
    pub text: Option<String>,
    /// Stroke id for stroke points.
    #[arg(long, default_value_t = 1)]
    pub stroke: u32,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    pub container: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<btfstream::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BTFSTREAM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
