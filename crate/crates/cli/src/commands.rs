use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use btfstream::btf::synth::lattice_points;
use btfstream::btf::{synthesize_with_field, BtfTensor, DirectionGrid, MaterialField};
use btfstream::btf::dfmf::{DEFAULT_K_UV, DEFAULT_K_Y};
use btfstream::chunk::{read_container, write_container, Container};
use btfstream::client::{Client, ClientOptions, ProgressiveState};
use btfstream::octree::io::load_mesh;
use btfstream::octree::Mesh;
use btfstream::pipeline::{compress_to_container, CompressOptions};
use btfstream::protocol::{replay_frames, AnnotationBody, Frame};
use btfstream::render::{approximate_environment, quality_curve, render, Camera, Image, LightSource, Reference, RenderOptions};
use btfstream::server::{serve, ServerConfig, DEFAULT_WINDOW};
use log::info;

use crate::config::Config;
use crate::scene::parse_light;
use crate::{AnnotateArgs, Cli, Command, CompressArgs, CurveArgs, FetchArgs, InspectArgs, NetArgs, RenderArgs, ServeArgs, SynthArgs, Usage, ViewArgs};

const DEFAULT_D_MIN: u32 = 1;
const DEFAULT_D_MAX: u32 = 4;
const DEFAULT_ENV_LIGHTS: usize = 8;
const DEFAULT_BIND: &str = "127.0.0.1:7878";
const DEFAULT_TIMEOUT_S: f64 = 30.0;
/// Margin left around meshes that have to be rescaled into the unit cube.
const MESH_MARGIN: f64 = 0.05;

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Compress(a) => compress(a, &config),
        Command::Serve(a) => serve_container(a, &config),
        Command::Fetch(a) => fetch(a, &config),
        Command::Render(a) => render_image(a, &config),
        Command::Curve(a) => curve(a, &config),
        Command::Annotate(a) => annotate(a, &config),
        Command::Inspect(a) => inspect(a),
    }
}

fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.points == 0 || a.light_res == 0 || a.view_res == 0 {
        return Err(Usage("--points, --light-res and --view-res must be at least 1".into()).into());
    }
    let field = MaterialField::from_seed(a.seed, a.palette, a.patch_depth, a.lambertian)?;
    let light = DirectionGrid::new(a.light_res)?;
    let view = DirectionGrid::new(a.view_res)?;
    let tensor = synthesize_with_field(&lattice_points(a.points), &light, &view, &field)?;
    info!("synthesized {} direction pairs x {} points", tensor.pair_count(), tensor.point_count());
    if is_stdio(&a.out) {
        let mut out = BufWriter::new(io::stdout().lock());
        tensor.write_to(&mut out)?;
        out.flush()?;
    } else {
        let mut out = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
        tensor.write_to(&mut out)?;
        out.flush()?;
    }
    Ok(())
}

fn read_tensor(path: &Path) -> Result<BtfTensor> {
    let tensor = if is_stdio(path) {
        let mut bytes = Vec::new();
        io::stdin().lock().read_to_end(&mut bytes)?;
        BtfTensor::read_from(&bytes[..])
    } else {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        BtfTensor::read_from(BufReader::new(file))
    };
    tensor.with_context(|| format!("reading tensor {}", path.display()))
}

fn compress(a: CompressArgs, config: &Config) -> Result<()> {
    let opts = CompressOptions {
        k_y: config.pick(a.k_y, "k_y", DEFAULT_K_Y)?,
        k_uv: config.pick(a.k_uv, "k_uv", DEFAULT_K_UV)?,
        d_min: config.pick(a.d_min, "d_min", DEFAULT_D_MIN)?,
        d_max: config.pick(a.d_max, "d_max", DEFAULT_D_MAX)?,
    };
    // Cheap checks first so bad flags fail before the tensor is read.
    btfstream::btf::dfmf::check_component_count(opts.k_y).context("--kY")?;
    btfstream::btf::dfmf::check_component_count(opts.k_uv).context("--kUV")?;
    if opts.d_min > opts.d_max {
        return Err(Usage(format!("--d-min {} exceeds --d-max {}", opts.d_min, opts.d_max)).into());
    }
    let mesh = match &a.mesh {
        None => Mesh::placeholder_sphere(),
        Some(path) => {
            let mesh = load_mesh(path).with_context(|| format!("loading mesh {}", path.display()))?;
            if mesh.in_unit_cube() {
                mesh
            } else {
                info!("rescaling {} into the unit cube", path.display());
                mesh.normalized(MESH_MARGIN)?
            }
        }
    };
    let tensor = read_tensor(&a.tensor)?;
    let (container, _) = compress_to_container(&tensor, &mesh, opts)?;
    write_container(&container, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    info!("wrote {} chunks to {}", container.chunks.len(), a.out.display());
    Ok(())
}

fn serve_container(a: ServeArgs, config: &Config) -> Result<()> {
    let container = read_container(&a.container).with_context(|| format!("reading {}", a.container.display()))?;
    let bind = a.bind.or_else(|| config.get("bind").map(String::from)).unwrap_or_else(|| DEFAULT_BIND.into());
    let journal = a.journal.or_else(|| config.get("journal").map(PathBuf::from));
    let window = config.pick(a.window, "window", DEFAULT_WINDOW)?;
    if window == 0 {
        return Err(Usage("--window must be at least 1".into()).into());
    }
    let handle = serve(container, bind.as_str(), ServerConfig { window, journal }).with_context(|| format!("serving on {bind}"))?;
    let mut out = io::stdout().lock();
    writeln!(out, "listening on {}", handle.local_addr())?;
    out.flush()?;
    drop(out);
    handle.join();
    Ok(())
}

fn timeout(net: &NetArgs, config: &Config) -> Result<Duration> {
    let secs = config.pick(net.timeout, "timeout", DEFAULT_TIMEOUT_S)?;
    if !(secs.is_finite() && secs > 0.0) {
        return Err(Usage(format!("timeout {secs} must be a positive number of seconds")).into());
    }
    Ok(Duration::from_secs_f64(secs))
}

fn connect(addr: &str, timeout: Duration, record_trace: bool) -> Result<Client> {
    let options = ClientOptions { record_trace, timeout, ..ClientOptions::default() };
    Client::connect(addr, options).with_context(|| format!("connecting to {addr}"))
}

fn download(addr: &str, timeout: Duration, record_trace: bool) -> Result<(Client, Arc<ProgressiveState>)> {
    let client = connect(addr, timeout, record_trace)?;
    let state = client.wait_complete(timeout).with_context(|| format!("downloading from {addr}"))?;
    Ok((client, state))
}

fn fetch(a: FetchArgs, config: &Config) -> Result<()> {
    let (client, state) = download(&a.addr, timeout(&a.net, config)?, false)?;
    client.close();
    write_container(&state.to_container()?, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

enum Source {
    File(PathBuf),
    Server(String),
}

/// An existing path is a container; otherwise anything with a port is an
/// address.
fn source(s: &str) -> Source {
    if Path::new(s).exists() || !s.contains(':') {
        Source::File(PathBuf::from(s))
    } else {
        Source::Server(s.to_string())
    }
}

fn load_state(src: &str, net: &NetArgs, config: &Config) -> Result<Arc<ProgressiveState>> {
    match source(src) {
        Source::File(path) => {
            let container = read_container(&path).with_context(|| format!("reading {}", path.display()))?;
            Ok(Arc::new(ProgressiveState::from_container(&container)?))
        }
        Source::Server(addr) => {
            let (client, state) = download(&addr, timeout(net, config)?, false)?;
            client.close();
            Ok(state)
        }
    }
}

fn camera(v: &ViewArgs) -> Result<Camera> {
    Ok(Camera::new(v.camera, v.look_at, v.up, v.fov, v.size.0, v.size.1)?)
}

fn lights(v: &ViewArgs, config: &Config) -> Result<Vec<LightSource>> {
    let mut out = v.light.iter().map(|s| parse_light(s)).collect::<Result<Vec<_>>>()?;
    if let Some(path) = &v.env {
        let n = config.pick(v.lights, "lights", DEFAULT_ENV_LIGHTS)?;
        let env = Image::load_linear(path).with_context(|| format!("loading environment {}", path.display()))?;
        out.extend(approximate_environment(&env, n)?);
    } else if v.lights.is_some() {
        return Err(Usage("--lights needs --env".into()).into());
    }
    if out.is_empty() {
        // Headlight: a white directional light from the camera.
        let d = [0, 1, 2].map(|i| v.camera[i] - v.look_at[i]);
        out.push(LightSource::directional(d, [1.0; 3])?);
    }
    Ok(out)
}

fn parse_ranks(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| Usage(format!("--ranks: '{p}' is not a count"))))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| Usage("--ranks expects y,u,v".into()).into())
}

fn render_image(a: RenderArgs, config: &Config) -> Result<()> {
    let cam = camera(&a.view)?;
    let lights = lights(&a.view, config)?;
    let ranks = a.ranks.as_deref().map(parse_ranks).transpose()?;
    let state = load_state(&a.source, &a.net, config)?;
    let options = RenderOptions { ranks, level: a.level, annotations: !a.no_annotations };
    let image = render(&state, &cam, &lights, &options)?;
    image.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn curve(a: CurveArgs, config: &Config) -> Result<()> {
    let cam = camera(&a.view)?;
    let lights = lights(&a.view, config)?;
    let (frames, full): (Vec<Frame>, Arc<ProgressiveState>) = match source(&a.source) {
        Source::File(path) => {
            let container: Container = read_container(&path).with_context(|| format!("reading {}", path.display()))?;
            (replay_frames(&container, 0), Arc::new(ProgressiveState::from_container(&container)?))
        }
        Source::Server(addr) => {
            let (client, state) = download(&addr, timeout(&a.net, config)?, true)?;
            let trace = client.trace();
            client.close();
            (trace, state)
        }
    };
    let reference = match &a.reference {
        Some(path) => Reference::from_image(&cam, Image::load(path).with_context(|| format!("loading {}", path.display()))?)?,
        None => Reference::render(&full, &cam, &lights)?,
    };
    let points = quality_curve(&frames, &cam, &lights, &reference)?;
    let mut csv = String::from("version,rmse,psnr\n");
    for p in &points {
        csv.push_str(&format!("{},{},{}\n", p.version, p.metrics.rmse, p.metrics.psnr));
    }
    if is_stdio(&a.csv) {
        io::stdout().lock().write_all(csv.as_bytes())?;
    } else {
        std::fs::write(&a.csv, csv).with_context(|| format!("writing {}", a.csv.display()))?;
    }
    Ok(())
}

fn annotate(a: AnnotateArgs, config: &Config) -> Result<()> {
    let pos = a.pos.map(|v| v as f32);
    let body = match (a.kind.as_str(), a.text) {
        ("marker", None) => AnnotationBody::marker(pos),
        ("text", Some(text)) => AnnotationBody::text(pos, text),
        ("text", None) => return Err(Usage("--kind text needs --text".into()).into()),
        ("stroke", None) => AnnotationBody::stroke_point(pos, a.stroke),
        ("marker" | "stroke", Some(_)) => return Err(Usage("--text only applies to --kind text".into()).into()),
        (other, _) => return Err(Usage(format!("unknown annotation kind '{other}' (marker, text or stroke)")).into()),
    };
    body.validate()?;
    let t = timeout(&a.net, config)?;
    let client = connect(&a.addr, t, false)?;
    let placed = client.place_annotation(body, t).with_context(|| format!("annotating on {}", a.addr))?;
    client.close();
    println!("sequence {} author {}", placed.sequence, placed.author);
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    let c = read_container(&a.container).with_context(|| format!("reading {}", a.container.display()))?;
    let h = &c.header;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "depths: {}..={} ({} streamed levels)", h.d_min, h.d_max, h.level_count())?;
    writeln!(out, "components: kY={} kUV={}", h.k_y, h.k_uv)?;
    writeln!(out, "direction grids: light {0}x{0}, view {1}x{1}", h.light_res, h.view_res)?;
    writeln!(out, "voxels per level: {:?}", h.voxel_counts)?;
    writeln!(out, "geometry: {} bytes, crc {:08x}", h.geometry_len, h.geometry_crc)?;
    writeln!(out, "chunks: {}", h.chunk_count)?;
    writeln!(out, "{:>4}  {:<24} {:>12} {:>12}  crc", "#", "chunk", "raw", "compressed")?;
    for (i, chunk) in c.chunks.iter().enumerate() {
        let d = &chunk.descriptor;
        writeln!(out, "{i:>4}  {:<24} {:>12} {:>12}  {:08x}", d.key.to_string(), d.uncompressed, d.compressed, d.crc)?;
    }
    out.flush()?;
    Ok(())
}
