use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_btfstream"));
    cmd.env("BTFSTREAM_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &["--points", "4", "--light-res", "2", "--view-res", "2", "--seed", "3"];
const SMALL_K: &[&str] = &["--kY", "8", "--kUV", "4", "--d-min", "1", "--d-max", "3"];

/// Synthesizes a small tensor and compresses it; returns the container path.
fn container(dir: &TempDir) -> PathBuf {
    let tensor = dir.path().join("t.btft");
    let out = dir.path().join("c.obtf");
    let synth = run(&[&["synth", "--out", s(&tensor)], SMALL].concat());
    assert_eq!(code(&synth), 0, "{}", stderr(&synth));
    let compress = run(&[&["compress", s(&tensor), "--out", s(&out)], SMALL_K].concat());
    assert_eq!(code(&compress), 0, "{}", stderr(&compress));
    out
}

struct Server {
    child: Child,
    addr: String,
}

impl Server {
    fn start(container: &Path, extra: &[&str]) -> Server {
        let mut child = bin()
            .args([&["serve", s(container), "--bind", "127.0.0.1:0"], extra].concat())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected banner '{line}'")).to_string();
        Server { child, addr }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn inspect_reports_the_chunk_formula() {
    let dir = TempDir::new().unwrap();
    let c = container(&dir);
    let out = run(&["inspect", s(&c)]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    // l = 3, kY = 8, kUV = 4: 4l + kY/4 + kUV/2 = 16.
    assert!(text.contains("chunks: 16"), "{text}");
    assert_eq!(text.lines().filter(|l| l.contains("angular(")).count(), 4);
    assert!(text.contains("depths: 1..=3 (3 streamed levels)"));
}

#[test]
fn compress_rejects_bad_component_counts() {
    let dir = TempDir::new().unwrap();
    let out = run(&["compress", "--kY", "6", "--out", s(&dir.path().join("x.obtf")), "missing.btft"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("component count 6"), "{}", stderr(&out));
    assert!(!dir.path().join("x.obtf").exists());
}

#[test]
fn usage_errors_exit_with_one_and_help_with_zero() {
    let bad_flag = run(&["inspect", "--frobnicate", "x"]);
    assert_eq!(code(&bad_flag), 1);
    assert!(stderr(&bad_flag).contains("Usage"), "{}", stderr(&bad_flag));
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    let help = run(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("annotate"));
}

#[test]
fn missing_files_and_dead_servers_exit_with_two() {
    assert_eq!(code(&run(&["inspect", "/nonexistent/c.obtf"])), 2);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    let out = run(&["fetch", &addr, "--out", "/tmp/never.obtf", "--timeout", "2"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn corrupt_containers_are_validation_errors() {
    let dir = TempDir::new().unwrap();
    let c = container(&dir);
    let mut bytes = std::fs::read(&c).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(&c, bytes).unwrap();
    let out = run(&["inspect", s(&c)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("corrupt"), "{}", stderr(&out));
}

#[test]
fn piped_pipeline_roundtrips_through_serve_and_fetch() {
    let dir = TempDir::new().unwrap();
    let served = dir.path().join("served.obtf");
    let mut synth = bin().args([&["synth"], SMALL].concat()).stdout(Stdio::piped()).spawn().unwrap();
    let compress = bin()
        .args([&["compress", "-", "--out", s(&served)], SMALL_K].concat())
        .stdin(synth.stdout.take().unwrap())
        .output()
        .unwrap();
    assert!(synth.wait().unwrap().success());
    assert_eq!(code(&compress), 0, "{}", stderr(&compress));

    let server = Server::start(&served, &[]);
    let fetched = dir.path().join("fetched.obtf");
    let out = run(&["fetch", &server.addr, "--out", s(&fetched)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read(&fetched).unwrap(), std::fs::read(&served).unwrap());
}

#[test]
fn annotations_are_sequenced_and_validated() {
    let dir = TempDir::new().unwrap();
    let server = Server::start(&container(&dir), &["--journal", s(&dir.path().join("log.journal"))]);
    let marker = run(&["annotate", &server.addr, "--kind", "marker", "--pos", "0.5,0.5,0.5"]);
    assert_eq!(code(&marker), 0, "{}", stderr(&marker));
    assert!(String::from_utf8_lossy(&marker.stdout).starts_with("sequence 1 "));
    let text = run(&["annotate", &server.addr, "--kind", "text", "--pos", "0.2,0.3,0.4", "--text", "crack"]);
    assert!(String::from_utf8_lossy(&text.stdout).starts_with("sequence 2 "), "{}", stderr(&text));

    assert_eq!(code(&run(&["annotate", &server.addr, "--kind", "text", "--pos", "0.2,0.3,0.4"])), 1);
    assert_eq!(code(&run(&["annotate", &server.addr, "--kind", "sticker", "--pos", "0.2,0.3,0.4"])), 1);
    let outside = run(&["annotate", &server.addr, "--kind", "marker", "--pos", "1.5,0.5,0.5"]);
    assert_eq!(code(&outside), 1);
    assert!(stderr(&outside).contains("unit cube"), "{}", stderr(&outside));
}

#[test]
fn render_and_curve_from_file_and_server() {
    let dir = TempDir::new().unwrap();
    let c = container(&dir);
    let view = ["--size", "24x16", "--light", "dir:0.2,0.3,1", "--light", "point:0.5,0.5,2:2,2,2"];
    let png = dir.path().join("a.png");
    let out = run(&[&["render", s(&c), "--out", s(&png)], &view[..]].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ppm = dir.path().join("a.ppm");
    assert_eq!(code(&run(&[&["render", s(&c), "--out", s(&ppm)], &view[..]].concat())), 0);
    assert!(std::fs::read(&ppm).unwrap().starts_with(b"P6\n24 16"));

    let server = Server::start(&c, &[]);
    let from_net = dir.path().join("b.png");
    assert_eq!(code(&run(&[&["render", &server.addr, "--out", s(&from_net)], &view[..]].concat())), 0);
    assert_eq!(std::fs::read(&from_net).unwrap(), std::fs::read(&png).unwrap());

    let csv = dir.path().join("curve.csv");
    let out = run(&[&["curve", &server.addr, "--reference", s(&png), "--csv", s(&csv)], &view[..]].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("version,rmse,psnr"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.len() >= 2);
    assert_eq!(rows.last().unwrap()[1..], [0.0, 99.0]);

    let local = run(&[&["curve", s(&c), "--csv", "-"], &view[..]].concat());
    assert_eq!(code(&local), 0);
    assert!(String::from_utf8_lossy(&local.stdout).ends_with(",0,99\n"));

    let small = run(&[&["curve", s(&c), "--reference", s(&png), "--size", "8x8"], &view[2..]].concat());
    assert_eq!(code(&small), 1);
    assert_eq!(code(&run(&["render", s(&c), "--out", s(&png), "--light", "sun:0,0,1"])), 1);
}

#[test]
fn environment_lights_and_config_file() {
    let dir = TempDir::new().unwrap();
    let c = container(&dir);
    let mut img = Vec::new();
    img.extend_from_slice(b"P6\n16 8\n255\n");
    img.extend(std::iter::repeat_n(200u8, 16 * 8 * 3));
    let ppm = dir.path().join("env.ppm");
    std::fs::write(&ppm, img).unwrap();
    let out = run(&["render", s(&c), "--out", s(&dir.path().join("e.png")), "--size", "8x8", "--env", s(&ppm), "--lights", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(code(&run(&["render", s(&c), "--out", s(&dir.path().join("e.png")), "--env", s(&ppm), "--lights", "3"])), 1);

    let tensor = dir.path().join("t.btft");
    assert_eq!(code(&run(&[&["synth", "--out", s(&tensor)], SMALL].concat())), 0);
    let cfg = dir.path().join("btfstream.conf");
    std::fs::write(&cfg, "k_y = 12\nk_uv = 4\nd_min = 0\nd_max = 2\n").unwrap();
    let out_c = dir.path().join("cfg.obtf");
    let out = run(&["--config", s(&cfg), "compress", s(&tensor), "--out", s(&out_c), "--kUV", "8"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(run(&["inspect", s(&out_c)]).stdout).unwrap();
    assert!(text.contains("components: kY=12 kUV=8"), "{text}");
    assert!(text.contains("depths: 0..=2"), "{text}");

    std::fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(code(&run(&["--config", s(&cfg), "inspect", s(&out_c)])), 1);
}
