use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::protocol::Annotation;

pub const DEFAULT_WINDOW: usize = 4;

/// Next thing a session wants written to its client.
#[derive(Debug, Clone, PartialEq)]
pub enum Emission {
    ObjectInfo,
    Geometry,
    Sync(Vec<Annotation>),
    /// Index into the load order.
    Chunk(usize),
    Event(Annotation),
}

/// Transmission state of one client, independent of any transport.
#[derive(Debug)]
pub struct ClientSession {
    id: u32,
    chunk_count: usize,
    window: usize,
    preamble: u8,
    backlog: Option<Vec<Annotation>>,
    /// Chunks already emitted; `None` until geometry has gone out.
    cursor: Option<usize>,
    in_flight: usize,
    events: VecDeque<Annotation>,
    last_sequence: u64,
    closed: bool,
}

impl ClientSession {
    /// `backlog` is every annotation stored when the session subscribed.
    pub fn new(id: u32, chunk_count: usize, window: usize, backlog: Vec<Annotation>) -> Self {
        let last_sequence = backlog.last().map_or(0, |a| a.sequence);
        ClientSession {
            id,
            chunk_count,
            window: window.max(1),
            preamble: 0,
            backlog: Some(backlog),
            cursor: None,
            in_flight: 0,
            events: VecDeque::new(),
            last_sequence,
            closed: false,
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    /// Chunks emitted so far, or `None` before geometry.
    pub fn cursor(&self) -> Option<usize> {
        self.cursor
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn last_sequence(&self) -> u64 {
        self.last_sequence
    }

    pub fn is_done(&self) -> bool {
        self.cursor == Some(self.chunk_count) && self.events.is_empty()
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    /// Queues a broadcast annotation. Sequence numbers must continue densely
    /// from the backlog.
    pub fn push_event(&mut self, a: Annotation) -> Result<()> {
        if a.sequence != self.last_sequence + 1 {
            return Err(Error::Ordering(format!("event {} after {}", a.sequence, self.last_sequence)));
        }
        self.last_sequence = a.sequence;
        self.events.push_back(a);
        Ok(())
    }

    /// Client reports `count` more chunk frames consumed.
    pub fn ack(&mut self, count: u32) -> Result<()> {
        let count = count as usize;
        if count > self.in_flight {
            return Err(Error::invalid(format!("ack of {count} with {} in flight", self.in_flight)));
        }
        self.in_flight -= count;
        Ok(())
    }

    /// The preamble comes first, then queued annotation events take priority
    /// over chunks, which are limited by the in-flight window.
    pub fn advance(&mut self) -> Result<Option<Emission>> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        match self.preamble {
            0 => {
                self.preamble = 1;
                return Ok(Some(Emission::ObjectInfo));
            }
            1 => {
                self.preamble = 2;
                self.cursor = Some(0);
                return Ok(Some(Emission::Geometry));
            }
            2 => {
                self.preamble = 3;
                return Ok(Some(Emission::Sync(self.backlog.take().unwrap_or_default())));
            }
            _ => {}
        }
        if let Some(a) = self.events.pop_front() {
            return Ok(Some(Emission::Event(a)));
        }
        let cursor = self.cursor.expect("set with geometry");
        if cursor < self.chunk_count && self.in_flight < self.window {
            self.cursor = Some(cursor + 1);
            self.in_flight += 1;
            return Ok(Some(Emission::Chunk(cursor)));
        }
        Ok(None)
    }
}
