//! Fan-out of session messages to clients. Publishing never waits: each
//! client has a bounded queue that drops its oldest line on overflow.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use tokio::sync::Notify;

pub type ClientId = u64;

#[derive(Debug, Default)]
struct QueueState {
    lines: VecDeque<Arc<str>>,
    dropped: u64,
    closed: bool,
}

#[derive(Debug)]
pub struct ClientQueue {
    capacity: usize,
    state: Mutex<QueueState>,
    notify: Notify,
}

impl ClientQueue {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            state: Mutex::new(QueueState::default()),
            notify: Notify::new(),
        }
    }

    /// Appends a line; returns true when an older line had to go.
    fn push(&self, line: Arc<str>) -> bool {
        let mut s = self.state.lock().expect("queue lock");
        let overflow = s.lines.len() >= self.capacity;
        if overflow {
            s.lines.pop_front();
            s.dropped += 1;
        }
        s.lines.push_back(line);
        drop(s);
        self.notify.notify_one();
        overflow
    }

    fn close(&self) {
        self.state.lock().expect("queue lock").closed = true;
        self.notify.notify_one();
    }

    pub fn try_recv(&self) -> Option<Arc<str>> {
        self.state.lock().expect("queue lock").lines.pop_front()
    }

    /// Next line, or `None` once the queue is closed and drained.
    pub async fn recv(&self) -> Option<Arc<str>> {
        loop {
            {
                let mut s = self.state.lock().expect("queue lock");
                if let Some(line) = s.lines.pop_front() {
                    return Some(line);
                }
                if s.closed {
                    return None;
                }
            }
            self.notify.notified().await;
        }
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("queue lock").lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.state.lock().expect("queue lock").dropped
    }
}

#[derive(Debug, Default)]
struct HubState {
    next_id: ClientId,
    clients: HashMap<ClientId, Arc<ClientQueue>>,
    /// Lines replayed to late subscribers.
    history: Vec<Arc<str>>,
}

#[derive(Debug)]
pub struct Hub {
    capacity: usize,
    state: Mutex<HubState>,
    dropped: AtomicU64,
}

pub struct Subscription {
    pub id: ClientId,
    pub queue: Arc<ClientQueue>,
}

impl Hub {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            state: Mutex::new(HubState::default()),
            dropped: AtomicU64::new(0),
        }
    }

    /// Registers a client whose queue starts with the recorded history.
    pub fn subscribe(&self) -> Subscription {
        let queue = Arc::new(ClientQueue::new(self.capacity));
        let mut s = self.state.lock().expect("hub lock");
        for line in &s.history {
            if queue.push(line.clone()) {
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
        s.next_id += 1;
        let id = s.next_id;
        s.clients.insert(id, queue.clone());
        Subscription { id, queue }
    }

    pub fn unsubscribe(&self, id: ClientId) {
        if let Some(q) = self.state.lock().expect("hub lock").clients.remove(&id) {
            q.close();
        }
    }

    /// Sends to every client; `record` keeps the line for late subscribers.
    pub fn publish(&self, line: impl Into<Arc<str>>, record: bool) {
        let line = line.into();
        let mut s = self.state.lock().expect("hub lock");
        for q in s.clients.values() {
            if q.push(line.clone()) {
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
        if record {
            s.history.push(line);
        }
    }

    pub fn send_to(&self, id: ClientId, line: impl Into<Arc<str>>) {
        let q = self.state.lock().expect("hub lock").clients.get(&id).cloned();
        if let Some(q) = q {
            if q.push(line.into()) {
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    pub fn client_count(&self) -> usize {
        self.state.lock().expect("hub lock").clients.len()
    }

    /// Lines dropped across all clients so far.
    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn clear_history(&self) {
        self.state.lock().expect("hub lock").history.clear();
    }

    pub fn close_all(&self) {
        let mut s = self.state.lock().expect("hub lock");
        for (_, q) in s.clients.drain() {
            q.close();
        }
    }
}
