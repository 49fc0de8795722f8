//! Multi-stream frame distribution: one source per stream feeds a bounded
//! ring buffer owned by an interconnect, which serves any number of sinks.
//!
//! Roles:
//!
//! - **Source** — a thread that pulls frames from one stream session and
//!   forwards every frame to its interconnect.
//! - **Interconnect** — a thread owning one [`RingBuffer`]; processes
//!   pushes and sink queries from a single message queue.
//! - **Sink** — a query handle. Attaching returns the frame stamp current
//!   at attach time; a sink may opt into a counting notification that is
//!   signaled once per buffered frame, so waiting consumes no CPU.
//! - **Control** — whatever code creates and tears the others down,
//!   typically through [`Producer`].
//!
//! Frame stamps are the zero-based global index of a frame within the
//! stream; the counter keeps running when the ring evicts old frames, so a
//! stamp identifies one frame forever.
//!
//! All cross-role communication is message passing plus counting wakeups;
//! queries are synchronous request/reply. The buffer logic itself lives in
//! [`RingBuffer`], which is pure and directly drivable in tests.

use crate::wire::{DataFrame, Timestamp};
use std::collections::{HashMap, VecDeque};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MuxError {
    #[error("the interconnect has terminated")]
    Terminated,
    #[error("sink was created without a notification wakeup")]
    NoNotification,
    #[error("source error: {0}")]
    Source(String),
}

/// Zero-based global frame index within one stream session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameStamp(pub u64);

/// Result of a frame-stamp lookup.
#[derive(Debug, Clone, PartialEq)]
pub enum Lookup<T> {
    /// The frame is still buffered.
    Frame(T),
    /// The stamp is older than the oldest buffered frame.
    Evicted,
    /// The stamp lies beyond the newest received frame.
    NotYet,
}

/// Bounded history of the most recent frames, indexed by frame stamp.
#[derive(Debug, Clone)]
pub struct RingBuffer {
    capacity: usize,
    frames: VecDeque<(FrameStamp, DataFrame)>,
    next_stamp: u64,
}

impl RingBuffer {
    /// `capacity` is in frames and must be nonzero (the interconnect sizes
    /// it as rate x seconds of history).
    pub fn new(capacity: usize) -> RingBuffer {
        assert!(capacity > 0, "ring buffer capacity must be nonzero");
        RingBuffer { capacity, frames: VecDeque::with_capacity(capacity), next_stamp: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Store a frame, evicting the oldest when full. Returns the frame's
    /// stamp; stamps keep counting past eviction.
    pub fn push(&mut self, frame: DataFrame) -> FrameStamp {
        let stamp = FrameStamp(self.next_stamp);
        self.next_stamp += 1;
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back((stamp, frame));
        stamp
    }

    /// Stamp of the most recent frame, `None` before the first frame.
    pub fn newest_stamp(&self) -> Option<FrameStamp> {
        self.frames.back().map(|(s, _)| *s)
    }

    pub fn oldest_stamp(&self) -> Option<FrameStamp> {
        self.frames.front().map(|(s, _)| *s)
    }

    pub fn most_recent(&self) -> Option<(FrameStamp, &DataFrame)> {
        self.frames.back().map(|(s, f)| (*s, f))
    }

    /// Buffered frame minimizing `|frame.timestamp - t|`; ties break toward
    /// the earlier frame. `None` iff the buffer is empty.
    pub fn nearest(&self, t: Timestamp) -> Option<(FrameStamp, &DataFrame)> {
        let mut best: Option<(u64, FrameStamp, &DataFrame)> = None;
        for (s, f) in &self.frames {
            let d = f.timestamp.distance(t);
            if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                best = Some((d, *s, f));
            }
        }
        best.map(|(_, s, f)| (s, f))
    }

    /// Look a frame up by stamp.
    pub fn buffered(&self, stamp: FrameStamp) -> Lookup<&DataFrame> {
        let Some(oldest) = self.oldest_stamp() else {
            // Empty buffer: everything already received was evicted,
            // everything else is still to come.
            return if stamp.0 < self.next_stamp { Lookup::Evicted } else { Lookup::NotYet };
        };
        if stamp < oldest {
            Lookup::Evicted
        } else if stamp.0 >= self.next_stamp {
            Lookup::NotYet
        } else {
            let idx = (stamp.0 - oldest.0) as usize;
            Lookup::Frame(&self.frames[idx].1)
        }
    }
}

/// Counting semaphore: one permit per buffered frame, blocking wait.
#[derive(Debug, Default)]
pub struct Semaphore {
    count: Mutex<u64>,
    cv: Condvar,
}

impl Semaphore {
    pub fn new() -> Semaphore {
        Semaphore::default()
    }

    pub fn release(&self) {
        let mut n = self.count.lock().unwrap();
        *n += 1;
        self.cv.notify_one();
    }

    /// Block until a permit is available and take it.
    pub fn acquire(&self) {
        let mut n = self.count.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
    }

    /// Take a permit if one is available right now.
    pub fn try_acquire(&self) -> bool {
        let mut n = self.count.lock().unwrap();
        if *n > 0 {
            *n -= 1;
            true
        } else {
            false
        }
    }

    /// Wait up to `timeout` for a permit.
    pub fn acquire_timeout(&self, timeout: Duration) -> bool {
        let mut n = self.count.lock().unwrap();
        let deadline = std::time::Instant::now() + timeout;
        while *n == 0 {
            let now = std::time::Instant::now();
            if now >= deadline {
                return false;
            }
            let (guard, res) = self.cv.wait_timeout(n, deadline - now).unwrap();
            n = guard;
            if res.timed_out() && *n == 0 {
                return false;
            }
        }
        *n -= 1;
        true
    }
}

type SinkId = u64;

#[derive(Debug, Clone, Copy)]
enum QueryKind {
    Nearest(Timestamp),
    FrameStamp,
    MostRecent,
    Buffered(FrameStamp),
}

#[derive(Debug)]
enum Reply {
    Frame(Option<(FrameStamp, DataFrame)>),
    Stamp(Option<FrameStamp>),
    Lookup(Lookup<DataFrame>),
}

enum Request {
    Push(DataFrame),
    Attach { sem: Option<Arc<Semaphore>>, reply: mpsc::Sender<(SinkId, Option<FrameStamp>)> },
    Detach(SinkId),
    Query { sink: SinkId, kind: QueryKind, reply: mpsc::Sender<Reply> },
    Stop,
}

/// Buffer-owning role: single consumer of pushes and queries.
pub struct Interconnect {
    tx: mpsc::Sender<Request>,
    thread: Option<JoinHandle<()>>,
}

impl Interconnect {
    /// Spawn an interconnect whose ring holds `capacity` frames.
    pub fn spawn(capacity: usize) -> Interconnect {
        let (tx, rx) = mpsc::channel::<Request>();
        let thread = std::thread::Builder::new()
            .name("hl2ss-interconnect".into())
            .spawn(move || run_interconnect(capacity, rx))
            .expect("spawn interconnect thread");
        Interconnect { tx, thread: Some(thread) }
    }

    fn push_sender(&self) -> mpsc::Sender<Request> {
        self.tx.clone()
    }

    /// Attach a sink. The sink receives the attach-time frame stamp (for
    /// 1-to-1 synchronization with the producer) and, when requested, a
    /// counting wakeup signaled once per subsequently buffered frame.
    pub fn attach(&self, with_notification: bool) -> Result<Sink, MuxError> {
        let sem = with_notification.then(|| Arc::new(Semaphore::new()));
        let (reply_tx, reply_rx) = mpsc::channel();
        self.tx
            .send(Request::Attach { sem: sem.clone(), reply: reply_tx })
            .map_err(|_| MuxError::Terminated)?;
        let (id, attach_stamp) = reply_rx.recv().map_err(|_| MuxError::Terminated)?;
        let (qtx, qrx) = mpsc::channel();
        Ok(Sink { id, tx: self.tx.clone(), reply_tx: qtx, reply_rx: qrx, attach_stamp, sem })
    }

    /// Stop the interconnect thread and wait for it to finish.
    pub fn stop(mut self) {
        let _ = self.tx.send(Request::Stop);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Interconnect {
    fn drop(&mut self) {
        let _ = self.tx.send(Request::Stop);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn run_interconnect(capacity: usize, rx: mpsc::Receiver<Request>) {
    let mut ring = RingBuffer::new(capacity);
    let mut sinks: HashMap<SinkId, Option<Arc<Semaphore>>> = HashMap::new();
    let mut next_sink: SinkId = 0;
    // Requests from the source, control, and sinks arrive on one queue and
    // are served strictly in arrival order, so no role can starve another.
    while let Ok(req) = rx.recv() {
        match req {
            Request::Push(frame) => {
                ring.push(frame);
                for sem in sinks.values().flatten() {
                    sem.release();
                }
            }
            Request::Attach { sem, reply } => {
                let id = next_sink;
                next_sink += 1;
                sinks.insert(id, sem);
                let _ = reply.send((id, ring.newest_stamp()));
            }
            Request::Detach(id) => {
                sinks.remove(&id);
            }
            Request::Query { sink, kind, reply } => {
                if !sinks.contains_key(&sink) {
                    continue; // detached sink; drop the query
                }
                let out = match kind {
                    QueryKind::Nearest(t) => {
                        Reply::Frame(ring.nearest(t).map(|(s, f)| (s, f.clone())))
                    }
                    QueryKind::FrameStamp => Reply::Stamp(ring.newest_stamp()),
                    QueryKind::MostRecent => {
                        Reply::Frame(ring.most_recent().map(|(s, f)| (s, f.clone())))
                    }
                    QueryKind::Buffered(stamp) => Reply::Lookup(match ring.buffered(stamp) {
                        Lookup::Frame(f) => Lookup::Frame(f.clone()),
                        Lookup::Evicted => Lookup::Evicted,
                        Lookup::NotYet => Lookup::NotYet,
                    }),
                };
                let _ = reply.send(out);
            }
            Request::Stop => break,
        }
    }
}

/// Query handle onto one interconnect. Single-owner; queries are
/// synchronous request/reply.
pub struct Sink {
    id: SinkId,
    tx: mpsc::Sender<Request>,
    reply_tx: mpsc::Sender<Reply>,
    reply_rx: mpsc::Receiver<Reply>,
    attach_stamp: Option<FrameStamp>,
    sem: Option<Arc<Semaphore>>,
}

impl Sink {
    /// Frame stamp of the newest frame at attach time; `None` when the sink
    /// attached before the first frame.
    pub fn attach_stamp(&self) -> Option<FrameStamp> {
        self.attach_stamp
    }

    fn query(&self, kind: QueryKind) -> Result<Reply, MuxError> {
        self.tx
            .send(Request::Query { sink: self.id, kind, reply: self.reply_tx.clone() })
            .map_err(|_| MuxError::Terminated)?;
        self.reply_rx.recv().map_err(|_| MuxError::Terminated)
    }

    /// Buffered frame closest in time to `t`; ties break toward the earlier
    /// frame. `None` iff the buffer is empty.
    pub fn get_nearest(&self, t: Timestamp) -> Result<Option<(FrameStamp, DataFrame)>, MuxError> {
        match self.query(QueryKind::Nearest(t))? {
            Reply::Frame(f) => Ok(f),
            _ => Err(MuxError::Terminated),
        }
    }

    /// Stamp of the most recent frame, `None` before the first frame.
    pub fn get_frame_stamp(&self) -> Result<Option<FrameStamp>, MuxError> {
        match self.query(QueryKind::FrameStamp)? {
            Reply::Stamp(s) => Ok(s),
            _ => Err(MuxError::Terminated),
        }
    }

    pub fn get_most_recent_frame(&self) -> Result<Option<(FrameStamp, DataFrame)>, MuxError> {
        match self.query(QueryKind::MostRecent)? {
            Reply::Frame(f) => Ok(f),
            _ => Err(MuxError::Terminated),
        }
    }

    pub fn get_buffered_frame(&self, stamp: FrameStamp) -> Result<Lookup<DataFrame>, MuxError> {
        match self.query(QueryKind::Buffered(stamp))? {
            Reply::Lookup(l) => Ok(l),
            _ => Err(MuxError::Terminated),
        }
    }

    /// Block until the interconnect buffers another frame. Wakeups count,
    /// so a slow sink can drain a backlog one acquire at a time.
    pub fn wait_for_frame(&self) -> Result<(), MuxError> {
        self.sem.as_ref().ok_or(MuxError::NoNotification)?.acquire();
        Ok(())
    }

    pub fn wait_for_frame_timeout(&self, timeout: Duration) -> Result<bool, MuxError> {
        Ok(self.sem.as_ref().ok_or(MuxError::NoNotification)?.acquire_timeout(timeout))
    }

    pub fn try_wait_for_frame(&self) -> Result<bool, MuxError> {
        Ok(self.sem.as_ref().ok_or(MuxError::NoNotification)?.try_acquire())
    }

    pub fn detach(self) {
        let _ = self.tx.send(Request::Detach(self.id));
    }
}

/// Anything a [`Producer`] source thread can pull frames from. Implemented
/// by stream sessions; tests substitute channel-backed fakes.
pub trait FrameSource: Send + 'static {
    /// Block until the next frame arrives.
    fn next_frame(&mut self) -> Result<DataFrame, MuxError>;
    /// A handle that unblocks a pending `next_frame` and makes the source
    /// return an error, so the owning thread can exit.
    fn interrupter(&self) -> Box<dyn FnOnce() + Send>;
}

/// A source/interconnect pair: the receiving thread plus its ring buffer.
pub struct Producer {
    interconnect: Interconnect,
    interrupt: Option<Box<dyn FnOnce() + Send>>,
    source_thread: Option<JoinHandle<()>>,
}

impl Producer {
    /// Spawn the source thread feeding a fresh interconnect whose ring
    /// holds `capacity` frames.
    pub fn start<S: FrameSource>(mut source: S, capacity: usize) -> Producer {
        let interconnect = Interconnect::spawn(capacity);
        let tx = interconnect.push_sender();
        let interrupt = source.interrupter();
        let source_thread = std::thread::Builder::new()
            .name("hl2ss-source".into())
            .spawn(move || {
                while let Ok(frame) = source.next_frame() {
                    if tx.send(Request::Push(frame)).is_err() {
                        break;
                    }
                }
            })
            .expect("spawn source thread");
        Producer { interconnect, interrupt: Some(interrupt), source_thread: Some(source_thread) }
    }

    pub fn attach(&self, with_notification: bool) -> Result<Sink, MuxError> {
        self.interconnect.attach(with_notification)
    }

    /// Interrupt the source, join its thread, and stop the interconnect.
    pub fn stop(mut self) {
        if let Some(interrupt) = self.interrupt.take() {
            interrupt();
        }
        if let Some(t) = self.source_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Producer {
    fn drop(&mut self) {
        if let Some(interrupt) = self.interrupt.take() {
            interrupt();
        }
        if let Some(t) = self.source_thread.take() {
            let _ = t.join();
        }
    }
}
