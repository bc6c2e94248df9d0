//! Multi-client streaming server. Each connection gets a reader thread and a
//! session thread; the session thread owns the socket's write half and is
//! fed client frames and annotation broadcasts through one channel.

mod log;
mod session;

use std::io::{BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

pub use self::log::{AnnotationLog, Subscriber};
pub use session::{ClientSession, Emission, DEFAULT_WINDOW};

use crate::chunk::Container;
use crate::error::{Error, Result};
use crate::protocol::{error_code, frame_type, read_raw_frame, write_frame, Annotation, Frame, PROTOCOL_VERSION};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Chunk frames in flight per client before an ACK is required.
    pub window: usize,
    pub journal: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { window: DEFAULT_WINDOW, journal: None }
    }
}

#[derive(Debug, Default)]
pub struct Stats {
    pub sessions: AtomicU64,
    pub active: AtomicU64,
    pub chunk_frames: AtomicU64,
    pub bytes_sent: AtomicU64,
    pub errors_sent: AtomicU64,
}

struct Shared {
    container: Arc<Container>,
    log: AnnotationLog,
    config: ServerConfig,
    next_session: AtomicU32,
    stats: Stats,
    stopping: AtomicBool,
    connections: Mutex<Vec<(u32, TcpStream)>>,
}

enum Input {
    Frame(u8, Vec<u8>),
    Event(Annotation),
    /// Reader hit end of stream or a fatal read error.
    Closed(Option<Error>),
}

/// A running server; dropping it does not stop it, call [`ServerHandle::shutdown`].
pub struct ServerHandle {
    shared: Arc<Shared>,
    addr: SocketAddr,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> &Stats {
        &self.shared.stats
    }

    pub fn annotations(&self) -> Arc<Vec<Annotation>> {
        self.shared.log.snapshot()
    }

    pub fn container(&self) -> &Container {
        &self.shared.container
    }

    /// Stops accepting, closes every connection and joins the acceptor.
    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the acceptor exits (it only does after shutdown).
    pub fn join(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    fn stop(&mut self) {
        self.shared.stopping.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        for (_, s) in self.shared.connections.lock().unwrap().iter() {
            let _ = s.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

/// Binds `addr` and serves `container` until shut down.
pub fn serve(container: Container, addr: impl ToSocketAddrs, config: ServerConfig) -> Result<ServerHandle> {
    let log = match &config.journal {
        Some(path) => AnnotationLog::with_journal(path)?,
        None => AnnotationLog::new(),
    };
    let listener = TcpListener::bind(addr).map_err(|e| Error::Connect(format!("bind: {e}")))?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        container: Arc::new(container),
        log,
        config,
        next_session: AtomicU32::new(1),
        stats: Stats::default(),
        stopping: AtomicBool::new(false),
        connections: Mutex::new(Vec::new()),
    });
    let acceptor = {
        let shared = shared.clone();
        std::thread::Builder::new().name("accept".into()).spawn(move || accept_loop(listener, shared))?
    };
    ::log::info!("serving {} chunks on {addr}", shared.container.chunks.len());
    Ok(ServerHandle { shared, addr, acceptor: Some(acceptor) })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stopping.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                ::log::warn!("accept failed: {e}");
                continue;
            }
        };
        let shared = shared.clone();
        let spawned = std::thread::Builder::new().name("session".into()).spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = handle_connection(stream, &shared) {
                ::log::debug!("connection {peer:?} ended: {e}");
            }
        });
        if let Err(e) = spawned {
            ::log::error!("cannot spawn session thread: {e}");
        }
    }
}

struct Conn<'a> {
    shared: &'a Shared,
    writer: BufWriter<TcpStream>,
}

impl Conn<'_> {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        let mut buf = Vec::new();
        write_frame(&mut buf, frame)?;
        self.writer.write_all(&buf)?;
        self.shared.stats.bytes_sent.fetch_add(buf.len() as u64, Ordering::Relaxed);
        if let Frame::Error { .. } = frame {
            self.shared.stats.errors_sent.fetch_add(1, Ordering::Relaxed);
        }
        Ok(())
    }

    fn error(&mut self, code: u16, message: impl Into<String>) -> Result<()> {
        self.send(&Frame::Error { code, message: message.into() })?;
        self.writer.flush()?;
        Ok(())
    }
}

fn handle_connection(stream: TcpStream, shared: &Arc<Shared>) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let mut conn = Conn { shared, writer: BufWriter::new(stream.try_clone()?) };

    match read_raw_frame(&mut reader)? {
        Some((frame_type::HELLO, payload)) => match Frame::decode(frame_type::HELLO, &payload) {
            Ok(Frame::Hello { version }) if version == PROTOCOL_VERSION => {}
            Ok(Frame::Hello { version }) => {
                return conn.error(error_code::VERSION_MISMATCH, format!("protocol version {version} unsupported, expected {PROTOCOL_VERSION}"));
            }
            _ => return conn.error(error_code::MALFORMED, "malformed HELLO"),
        },
        Some((ty, _)) if !frame_type::is_known(ty) => return conn.error(error_code::UNKNOWN_FRAME, format!("unknown frame type 0x{ty:02x}")),
        Some(_) => return conn.error(error_code::UNEXPECTED, "expected HELLO"),
        None => return Ok(()),
    }

    let id = shared.next_session.fetch_add(1, Ordering::SeqCst);
    shared.connections.lock().unwrap().push((id, stream.try_clone()?));
    shared.stats.sessions.fetch_add(1, Ordering::Relaxed);
    shared.stats.active.fetch_add(1, Ordering::Relaxed);

    let (tx, rx) = channel();
    let events = tx.clone();
    let backlog = shared.log.subscribe(id, Box::new(move |a| events.send(Input::Event(a)).is_ok()));
    let reader_thread = spawn_reader(reader, tx)?;
    let session = ClientSession::new(id, shared.container.chunks.len(), shared.config.window, backlog);
    let result = run_session(&mut conn, session, &rx);

    shared.log.unsubscribe(id);
    let _ = stream.shutdown(Shutdown::Both);
    let _ = reader_thread.join();
    shared.connections.lock().unwrap().retain(|(s, _)| *s != id);
    shared.stats.active.fetch_sub(1, Ordering::Relaxed);
    result
}

fn spawn_reader(mut reader: TcpStream, tx: Sender<Input>) -> Result<JoinHandle<()>> {
    Ok(std::thread::Builder::new().name("session-reader".into()).spawn(move || loop {
        match read_raw_frame(&mut reader) {
            Ok(Some((ty, payload))) => {
                if tx.send(Input::Frame(ty, payload)).is_err() {
                    return;
                }
            }
            Ok(None) => {
                let _ = tx.send(Input::Closed(None));
                return;
            }
            Err(e) => {
                let _ = tx.send(Input::Closed(Some(e)));
                return;
            }
        }
    })?)
}

/// What the session loop should do after handling one input.
enum Step {
    Continue,
    Close,
}

fn run_session(conn: &mut Conn<'_>, mut session: ClientSession, rx: &Receiver<Input>) -> Result<()> {
    let container = conn.shared.container.clone();
    loop {
        while let Some(emission) = session.advance()? {
            let frame = match emission {
                Emission::ObjectInfo => Frame::ObjectInfo { header: container.header.clone(), session: session.id() },
                Emission::Geometry => Frame::Geometry(container.geometry.clone()),
                Emission::Sync(list) => Frame::AnnotationSync(list),
                Emission::Event(a) => Frame::AnnotationEvent(a),
                Emission::Chunk(i) => {
                    conn.shared.stats.chunk_frames.fetch_add(1, Ordering::Relaxed);
                    Frame::Chunk(container.chunks[i].clone())
                }
            };
            conn.send(&frame)?;
            // Keep draining inputs so events are not starved by a long window.
            if let Ok(input) = rx.try_recv() {
                if let Step::Close = handle_input(conn, &mut session, input)? {
                    return conn.writer.flush().map_err(Into::into);
                }
            }
        }
        conn.writer.flush()?;
        let input = match rx.recv() {
            Ok(i) => i,
            Err(_) => return Ok(()),
        };
        if let Step::Close = handle_input(conn, &mut session, input)? {
            return conn.writer.flush().map_err(Into::into);
        }
    }
}

fn handle_input(conn: &mut Conn<'_>, session: &mut ClientSession, input: Input) -> Result<Step> {
    match input {
        Input::Event(a) => {
            session.push_event(a)?;
            Ok(Step::Continue)
        }
        Input::Closed(None) => {
            session.close();
            Ok(Step::Close)
        }
        Input::Closed(Some(e)) => {
            session.close();
            if let Error::Protocol(m) = &e {
                let _ = conn.send(&Frame::Error { code: error_code::MALFORMED, message: m.clone() });
            }
            Err(e)
        }
        Input::Frame(ty, payload) => {
            if !frame_type::is_known(ty) {
                conn.error(error_code::UNKNOWN_FRAME, format!("unknown frame type 0x{ty:02x}"))?;
                session.close();
                return Ok(Step::Close);
            }
            match Frame::decode(ty, &payload) {
                Ok(Frame::Ack { count }) => {
                    if let Err(e) = session.ack(count) {
                        conn.error(error_code::UNEXPECTED, e.to_string())?;
                    }
                }
                Ok(Frame::AnnotationAdd(body)) => match body.check() {
                    Ok(()) => {
                        conn.shared.log.append(session.id(), body)?;
                    }
                    Err((code, message)) => conn.error(code, message)?,
                },
                Ok(other) => conn.error(error_code::UNEXPECTED, format!("unexpected frame type 0x{:02x}", other.type_byte()))?,
                Err(e) => conn.error(error_code::MALFORMED, e.to_string())?,
            }
            Ok(Step::Continue)
        }
    }
}
