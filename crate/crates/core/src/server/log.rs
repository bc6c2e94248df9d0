use std::fs::{File, OpenOptions};
use std::io::{BufReader, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::protocol::{Annotation, AnnotationBody};

/// Receives each appended annotation; returning false unsubscribes.
pub type Subscriber = Box<dyn Fn(Annotation) -> bool + Send>;

struct Inner {
    subscribers: Vec<(u32, Subscriber)>,
    journal: Option<File>,
}

/// Append-only annotation store. Appending assigns the next sequence number
/// and fans the result out to every subscriber while holding the writer
/// lock, so each subscriber sees one global order with no gaps.
pub struct AnnotationLog {
    inner: Mutex<Inner>,
    /// Published after each append; readers never see a partial entry.
    entries: RwLock<Arc<Vec<Annotation>>>,
}

impl Default for AnnotationLog {
    fn default() -> Self {
        AnnotationLog { inner: Mutex::new(Inner { subscribers: Vec::new(), journal: None }), entries: Default::default() }
    }
}

impl AnnotationLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replays an append-only journal of length-prefixed event bodies and
    /// keeps appending to it. A torn final record is dropped.
    pub fn with_journal(path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        if path.exists() {
            let mut r = BufReader::new(File::open(path)?);
            loop {
                let len = match r.read_u32::<LittleEndian>() {
                    Ok(len) => len as usize,
                    Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                    Err(e) => return Err(e.into()),
                };
                let mut body = vec![0u8; len];
                if let Err(e) = r.read_exact(&mut body) {
                    if e.kind() == std::io::ErrorKind::UnexpectedEof {
                        log::warn!("ignoring torn journal record");
                        break;
                    }
                    return Err(e.into());
                }
                let a = Annotation::decode(&body).map_err(|e| Error::Corruption(format!("journal: {e}")))?;
                if a.sequence != entries.len() as u64 + 1 {
                    return Err(Error::Corruption(format!("journal sequence {} after {}", a.sequence, entries.len())));
                }
                entries.push(a);
            }
        }
        let journal = OpenOptions::new().create(true).append(true).open(path)?;
        rewrite_valid_prefix(path, &entries)?;
        log::info!("annotation journal {} holds {} entries", path.display(), entries.len());
        Ok(AnnotationLog {
            inner: Mutex::new(Inner { subscribers: Vec::new(), journal: Some(journal) }),
            entries: RwLock::new(Arc::new(entries)),
        })
    }

    pub fn snapshot(&self) -> Arc<Vec<Annotation>> {
        self.entries.read().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.snapshot().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a subscriber and returns the backlog it must be sent first.
    pub fn subscribe(&self, id: u32, notify: Subscriber) -> Vec<Annotation> {
        let mut inner = self.inner.lock().unwrap();
        inner.subscribers.push((id, notify));
        self.snapshot().as_ref().clone()
    }

    pub fn unsubscribe(&self, id: u32) {
        self.inner.lock().unwrap().subscribers.retain(|(s, _)| *s != id);
    }

    pub fn append(&self, author: u32, body: AnnotationBody) -> Result<Annotation> {
        let mut inner = self.inner.lock().unwrap();
        let current = self.snapshot();
        let a = Annotation { sequence: current.len() as u64 + 1, author, body };
        if let Some(j) = inner.journal.as_mut() {
            let mut rec = Vec::new();
            a.encode(&mut rec);
            let mut framed = Vec::with_capacity(rec.len() + 4);
            framed.write_u32::<LittleEndian>(rec.len() as u32)?;
            framed.extend_from_slice(&rec);
            j.write_all(&framed)?;
            j.flush()?;
        }
        let mut next = current.as_ref().clone();
        next.push(a.clone());
        *self.entries.write().unwrap() = Arc::new(next);
        inner.subscribers.retain(|(_, notify)| notify(a.clone()));
        Ok(a)
    }
}

/// Drops any torn tail so later appends follow a valid record.
fn rewrite_valid_prefix(path: &Path, entries: &[Annotation]) -> Result<()> {
    let mut valid = 0u64;
    for a in entries {
        let mut rec = Vec::new();
        a.encode(&mut rec);
        valid += 4 + rec.len() as u64;
    }
    let f = OpenOptions::new().write(true).open(path)?;
    if f.metadata()?.len() != valid {
        f.set_len(valid)?;
    }
    Ok(())
}
