//! Streaming client. Frames flow through three threads (receive, decompress,
//! apply) joined by bounded queues; consumers read immutable
//! [`ProgressiveState`] snapshots that are swapped in whole.

mod state;

use std::collections::VecDeque;
use std::io::{BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

pub use state::{decode_frame, ChunkData, Decoded, Layers, LevelData, ProgressiveState};

use crate::error::{Error, Result};
use crate::protocol::{error_code, read_frame, write_frame, Annotation, AnnotationBody, Frame, PROTOCOL_VERSION};

#[derive(Debug, Clone)]
pub struct ClientOptions {
    /// Version sent in HELLO.
    pub protocol_version: u16,
    /// Keep a copy of every server frame, see [`Client::trace`].
    pub record_trace: bool,
    /// Acknowledge chunks as they are applied. Without acks the server stops
    /// after one window.
    pub acknowledge: bool,
    /// Bound on connecting and on the handshake.
    pub timeout: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions { protocol_version: PROTOCOL_VERSION, record_trace: false, acknowledge: true, timeout: Duration::from_secs(10) }
    }
}

type Reply = SyncSender<Result<Annotation>>;

#[derive(Default)]
struct Status {
    closed: bool,
    failure: Option<Error>,
    server_errors: Vec<(u16, String)>,
}

struct Shared {
    state: RwLock<Arc<ProgressiveState>>,
    status: Mutex<Status>,
    changed: Condvar,
    /// Submissions awaiting their echo, oldest first. Lock before `writer`.
    pending: Mutex<VecDeque<Reply>>,
    writer: Mutex<TcpStream>,
    trace: Option<Mutex<Vec<Frame>>>,
    acknowledge: bool,
}

impl Shared {
    fn snapshot(&self) -> Arc<ProgressiveState> {
        self.state.read().unwrap().clone()
    }

    fn send(&self, frame: &Frame) -> Result<()> {
        let mut buf = Vec::new();
        write_frame(&mut buf, frame)?;
        self.writer.lock().unwrap().write_all(&buf)?;
        Ok(())
    }

    fn publish(&self, next: ProgressiveState) {
        *self.state.write().unwrap() = Arc::new(next);
        let _guard = self.status.lock().unwrap();
        self.changed.notify_all();
    }

    fn server_error(&self, code: u16, message: String) {
        log::warn!("server error {code}: {message}");
        if matches!(code, error_code::MALFORMED | error_code::BAD_POSITION | error_code::BAD_TEXT) {
            if let Some(reply) = self.pending.lock().unwrap().pop_front() {
                let _ = reply.send(Err(Error::Rejected { code, message }));
                return;
            }
        }
        let mut status = self.status.lock().unwrap();
        status.server_errors.push((code, message));
        self.changed.notify_all();
    }

    fn finish(&self, failure: Option<Error>) {
        {
            let mut status = self.status.lock().unwrap();
            if status.closed {
                return;
            }
            if let Some(e) = &failure {
                log::warn!("stream ended: {e}");
            }
            status.closed = true;
            status.failure = failure;
            self.changed.notify_all();
        }
        // Dropping the reply senders reports delivery-unknown to waiters.
        self.pending.lock().unwrap().clear();
        let _ = self.writer.lock().unwrap().shutdown(Shutdown::Both);
    }
}

enum Stage<T> {
    Item(T),
    End(Option<Error>),
}

/// A live connection to a streaming server.
pub struct Client {
    shared: Arc<Shared>,
    stream: TcpStream,
    threads: Vec<JoinHandle<()>>,
}

impl Client {
    /// Connects, sends HELLO and waits until the server has announced the
    /// object and assigned a session id.
    pub fn connect(addr: impl ToSocketAddrs, options: ClientOptions) -> Result<Client> {
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs().map_err(|e| Error::Connect(format!("resolve: {e}")))?.collect();
        let mut last = Error::Connect("no address to connect to".into());
        let mut stream = None;
        for a in addrs {
            match TcpStream::connect_timeout(&a, options.timeout) {
                Ok(s) => {
                    stream = Some(s);
                    break;
                }
                Err(e) => last = Error::Connect(format!("{a}: {e}")),
            }
        }
        let stream = stream.ok_or(last)?;
        stream.set_nodelay(true)?;
        let client = Client::start(stream, &options)?;
        client.shared.send(&Frame::Hello { version: options.protocol_version })?;
        match client.wait_for(options.timeout, |s| s.session().is_some()) {
            Ok(_) => Ok(client),
            Err(e) => {
                let rejected = client.server_errors().into_iter().next();
                Err(match rejected {
                    Some((code, message)) => Error::Connect(format!("server refused session (code {code}): {message}")),
                    None => Error::Connect(format!("handshake failed: {e}")),
                })
            }
        }
    }

    fn start(stream: TcpStream, options: &ClientOptions) -> Result<Client> {
        let shared = Arc::new(Shared {
            state: RwLock::new(Arc::new(ProgressiveState::new())),
            status: Mutex::new(Status::default()),
            changed: Condvar::new(),
            pending: Mutex::new(VecDeque::new()),
            writer: Mutex::new(stream.try_clone()?),
            trace: options.record_trace.then(|| Mutex::new(Vec::new())),
            acknowledge: options.acknowledge,
        });
        let (raw_tx, raw_rx) = sync_channel(1);
        let (dec_tx, dec_rx) = sync_channel(1);
        let reader = stream.try_clone()?;
        let s = shared.clone();
        let receive = std::thread::Builder::new().name("client-receive".into()).spawn(move || receive_stage(reader, &s, raw_tx))?;
        let decompress = std::thread::Builder::new().name("client-decompress".into()).spawn(move || decompress_stage(raw_rx, dec_tx))?;
        let s = shared.clone();
        let apply = std::thread::Builder::new().name("client-apply".into()).spawn(move || apply_stage(dec_rx, &s))?;
        Ok(Client { shared, stream, threads: vec![receive, decompress, apply] })
    }

    /// Current snapshot; cheap, never blocks on frame application.
    pub fn snapshot(&self) -> Arc<ProgressiveState> {
        self.shared.snapshot()
    }

    pub fn session_id(&self) -> Option<u32> {
        self.snapshot().session()
    }

    /// Blocks until `pred` holds for a snapshot. Fails if the stream ends
    /// first or `timeout` passes.
    pub fn wait_for(&self, timeout: Duration, pred: impl Fn(&ProgressiveState) -> bool) -> Result<Arc<ProgressiveState>> {
        let deadline = Instant::now() + timeout;
        let mut status = self.shared.status.lock().unwrap();
        loop {
            let snap = self.shared.snapshot();
            if pred(&snap) {
                return Ok(snap);
            }
            if status.closed {
                return Err(status.failure.take().unwrap_or(Error::SessionClosed));
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(Error::Timeout("client state".into()));
            }
            status = self.shared.changed.wait_timeout(status, deadline - now).unwrap().0;
        }
    }

    /// Waits for every chunk of the object.
    pub fn wait_complete(&self, timeout: Duration) -> Result<Arc<ProgressiveState>> {
        self.wait_for(timeout, ProgressiveState::is_complete)
    }

    /// Submits an annotation and waits for the server's authoritative echo.
    /// Invalid bodies are rejected before anything is sent.
    pub fn place_annotation(&self, body: AnnotationBody, timeout: Duration) -> Result<Annotation> {
        body.validate()?;
        let (tx, rx) = sync_channel(1);
        {
            let mut pending = self.shared.pending.lock().unwrap();
            if self.shared.status.lock().unwrap().closed {
                return Err(Error::SessionClosed);
            }
            pending.push_back(tx);
            if self.shared.send(&Frame::AnnotationAdd(body)).is_err() {
                pending.pop_back();
                return Err(Error::DeliveryUnknown);
            }
        }
        match rx.recv_timeout(timeout) {
            Ok(result) => result,
            Err(RecvTimeoutError::Disconnected) => Err(Error::DeliveryUnknown),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout("annotation echo".into())),
        }
    }

    /// Error frames the server sent that did not answer a submission.
    pub fn server_errors(&self) -> Vec<(u16, String)> {
        self.shared.status.lock().unwrap().server_errors.clone()
    }

    pub fn is_closed(&self) -> bool {
        self.shared.status.lock().unwrap().closed
    }

    /// Server frames received so far, when recording was requested.
    pub fn trace(&self) -> Vec<Frame> {
        self.shared.trace.as_ref().map(|t| t.lock().unwrap().clone()).unwrap_or_default()
    }

    /// Writes an arbitrary frame, bypassing validation.
    pub fn send_raw(&self, ty: u8, payload: &[u8]) -> Result<()> {
        let mut w = self.shared.writer.lock().unwrap();
        w.write_all(&(payload.len() as u32).to_le_bytes())?;
        w.write_all(&[ty])?;
        w.write_all(payload)?;
        Ok(())
    }

    /// Closes the connection and joins the pipeline threads.
    pub fn close(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        self.shared.finish(None);
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        self.stop();
    }
}

fn receive_stage(stream: TcpStream, shared: &Shared, tx: SyncSender<Stage<Frame>>) {
    let mut reader = BufReader::new(stream);
    loop {
        let end = match read_frame(&mut reader) {
            Ok(Some(frame)) => {
                if let Some(trace) = &shared.trace {
                    trace.lock().unwrap().push(frame.clone());
                }
                if tx.send(Stage::Item(frame)).is_err() {
                    return;
                }
                continue;
            }
            Ok(None) => None,
            Err(Error::Io(e)) if shared.status.lock().unwrap().closed => {
                log::debug!("reader stopped: {e}");
                None
            }
            Err(e) => Some(e),
        };
        let _ = tx.send(Stage::End(end));
        return;
    }
}

fn decompress_stage(rx: Receiver<Stage<Frame>>, tx: SyncSender<Stage<Decoded>>) {
    for msg in rx {
        let out = match msg {
            Stage::Item(frame) => match decode_frame(frame) {
                Ok(d) => Stage::Item(d),
                Err(e) => Stage::End(Some(e)),
            },
            Stage::End(e) => Stage::End(e),
        };
        let last = matches!(out, Stage::End(_));
        if tx.send(out).is_err() || last {
            return;
        }
    }
}

fn apply_stage(rx: Receiver<Stage<Decoded>>, shared: &Shared) {
    for msg in rx {
        let decoded = match msg {
            Stage::Item(Decoded::Error { code, message }) => {
                shared.server_error(code, message);
                continue;
            }
            Stage::Item(d) => d,
            Stage::End(e) => return shared.finish(e),
        };
        let next = match shared.snapshot().apply(&decoded) {
            Ok(next) => next,
            Err(e) => return shared.finish(Some(e)),
        };
        let session = next.session();
        shared.publish(next);
        match decoded {
            Decoded::Chunk { .. } if shared.acknowledge => {
                if let Err(e) = shared.send(&Frame::Ack { count: 1 }) {
                    log::debug!("ack failed: {e}");
                }
            }
            Decoded::Event(a) if Some(a.author) == session => {
                if let Some(reply) = shared.pending.lock().unwrap().pop_front() {
                    let _ = reply.send(Ok(a));
                }
            }
            _ => {}
        }
    }
    shared.finish(None);
}
