//! Subscriber fan-out. Each TCP connection is either a plain JSON-lines
//! stream or, when it opens with an HTTP `GET`, a WebSocket carrying one
//! JSON message per text frame. Subscribers may send control messages the
//! same way. Every subscriber has a bounded queue; when it is full the
//! oldest message is discarded and a `gap` notice precedes the next delivery.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, Sender, TrySendError};
use parking_lot::Mutex;
use tungstenite::Message;

use super::runloop::{ControlMessage, EventSink, PublishMessage};
use super::RealtimeError;

pub const DEFAULT_QUEUE_CAPACITY: usize = 256;

const POLL: Duration = Duration::from_millis(10);

#[derive(Clone)]
struct Subscriber {
    tx: Sender<Arc<str>>,
    /// Publisher-side handle used to discard the oldest queued message.
    rx: Receiver<Arc<str>>,
    dropped: Arc<AtomicU64>,
    alive: Arc<AtomicBool>,
}

impl Subscriber {
    fn offer(&self, line: Arc<str>) {
        let mut line = line;
        loop {
            match self.tx.try_send(line) {
                Ok(()) => return,
                Err(TrySendError::Full(l)) => {
                    if self.rx.try_recv().is_ok() {
                        self.dropped.fetch_add(1, Ordering::Relaxed);
                    }
                    line = l;
                }
                Err(TrySendError::Disconnected(_)) => return,
            }
        }
    }

    /// Next message for the wire, preceded by a gap notice when needed.
    fn take_gap(&self) -> Option<String> {
        let n = self.dropped.swap(0, Ordering::Relaxed);
        (n > 0).then(|| PublishMessage::Gap { dropped: n }.to_json())
    }
}

struct Shared {
    subscribers: Mutex<Vec<Subscriber>>,
    /// Latest control echo, sent first to new subscribers.
    latest_control: Mutex<Option<Arc<str>>>,
    control_tx: Sender<ControlMessage>,
    queue_capacity: usize,
    stop: AtomicBool,
}

/// Network event sink.
pub struct Publisher {
    shared: Arc<Shared>,
    addr: SocketAddr,
}

impl Publisher {
    /// Listens on `addr`; control messages from subscribers arrive on the
    /// returned receiver.
    pub fn bind(addr: impl ToSocketAddrs, queue_capacity: usize) -> Result<(Publisher, Receiver<ControlMessage>), RealtimeError> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (control_tx, control_rx) = unbounded();
        let shared = Arc::new(Shared {
            subscribers: Mutex::new(Vec::new()),
            latest_control: Mutex::new(None),
            control_tx,
            queue_capacity: queue_capacity.max(1),
            stop: AtomicBool::new(false),
        });
        let s = shared.clone();
        std::thread::Builder::new().name("publish-accept".into()).spawn(move || accept_loop(listener, s))?;
        log::info!("publishing on {addr}");
        Ok((Publisher { shared, addr }, control_rx))
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn subscriber_count(&self) -> usize {
        let mut subs = self.shared.subscribers.lock();
        subs.retain(|s| s.alive.load(Ordering::Relaxed));
        subs.len()
    }

    /// Blocks until at least `n` subscribers are connected or `timeout` passes.
    pub fn wait_for_subscribers(&self, n: usize, timeout: Duration) -> bool {
        let end = std::time::Instant::now() + timeout;
        while std::time::Instant::now() < end {
            if self.subscriber_count() >= n {
                return true;
            }
            std::thread::sleep(POLL);
        }
        self.subscriber_count() >= n
    }

    pub fn send(&self, msg: &PublishMessage) {
        let line: Arc<str> = msg.to_json().into();
        if matches!(msg, PublishMessage::Control(_)) {
            *self.shared.latest_control.lock() = Some(line.clone());
        }
        let mut subs = self.shared.subscribers.lock();
        subs.retain(|s| s.alive.load(Ordering::Relaxed));
        for s in subs.iter() {
            s.offer(line.clone());
        }
    }
}

impl EventSink for Publisher {
    fn publish(&mut self, msg: &PublishMessage) {
        self.send(msg);
    }
}

impl Drop for Publisher {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        for s in self.shared.subscribers.lock().iter() {
            s.alive.store(false, Ordering::Relaxed);
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let s = shared.clone();
                let spawned = std::thread::Builder::new().name(format!("subscriber-{peer}")).spawn(move || {
                    if let Err(e) = serve_connection(stream, s) {
                        log::debug!("subscriber {peer}: {e}");
                    }
                });
                if let Err(e) = spawned {
                    log::warn!("cannot serve {peer}: {e}");
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(POLL);
            }
        }
    }
}

fn register(shared: &Shared) -> (Subscriber, Receiver<Arc<str>>) {
    let (tx, rx) = bounded(shared.queue_capacity);
    let sub = Subscriber { tx, rx: rx.clone(), dropped: Arc::new(AtomicU64::new(0)), alive: Arc::new(AtomicBool::new(true)) };
    if let Some(c) = shared.latest_control.lock().clone() {
        sub.offer(c);
    }
    shared.subscribers.lock().push(sub.clone());
    (sub, rx)
}

/// Handles one control line; the reply, if any, is for this subscriber only.
fn handle_control(shared: &Shared, text: &str) -> Option<String> {
    if text.trim().is_empty() {
        return None;
    }
    match ControlMessage::parse(text) {
        Ok(m) => {
            let _ = shared.control_tx.send(m);
            None
        }
        Err(e) => Some(PublishMessage::Error { message: e.to_string() }.to_json()),
    }
}

fn serve_connection(stream: TcpStream, shared: Arc<Shared>) -> Result<(), RealtimeError> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true).ok();
    let mut head = [0u8; 4];
    stream.set_read_timeout(Some(Duration::from_millis(200)))?;
    let n = stream.peek(&mut head).unwrap_or(0);
    stream.set_read_timeout(None)?;
    if n == 4 && &head == b"GET " {
        serve_websocket(stream, shared)
    } else {
        serve_lines(stream, shared)
    }
}

fn serve_lines(stream: TcpStream, shared: Arc<Shared>) -> Result<(), RealtimeError> {
    let (sub, rx) = register(&shared);
    let reader = stream.try_clone()?;
    let (s2, alive) = (shared.clone(), sub.alive.clone());
    let reply = sub.tx.clone();
    std::thread::Builder::new().name("subscriber-read".into()).spawn(move || {
        for line in BufReader::new(reader).lines() {
            match line {
                Ok(l) => {
                    if let Some(r) = handle_control(&s2, &l) {
                        let _ = reply.try_send(r.into());
                    }
                }
                Err(_) => break,
            }
        }
        alive.store(false, Ordering::Relaxed);
    })?;
    let mut w = std::io::BufWriter::new(stream);
    let result = (|| -> std::io::Result<()> {
        while sub.alive.load(Ordering::Relaxed) {
            match rx.recv_timeout(Duration::from_millis(100)) {
                Ok(line) => {
                    if let Some(g) = sub.take_gap() {
                        writeln!(w, "{g}")?;
                    }
                    writeln!(w, "{line}")?;
                    while let Ok(more) = rx.try_recv() {
                        writeln!(w, "{more}")?;
                    }
                    w.flush()?;
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
        Ok(())
    })();
    sub.alive.store(false, Ordering::Relaxed);
    let _ = w.get_ref().shutdown(std::net::Shutdown::Both);
    result.map_err(Into::into)
}

fn serve_websocket(stream: TcpStream, shared: Arc<Shared>) -> Result<(), RealtimeError> {
    let mut ws = tungstenite::accept(stream).map_err(|e| RealtimeError::Protocol(format!("websocket handshake: {e}")))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let (sub, rx) = register(&shared);
    let ws_err = |e: tungstenite::Error| RealtimeError::Protocol(format!("websocket: {e}"));
    let result = (|| -> Result<(), RealtimeError> {
        while sub.alive.load(Ordering::Relaxed) {
            let mut wrote = false;
            while let Ok(line) = rx.try_recv() {
                if let Some(g) = sub.take_gap() {
                    ws.write(Message::text(g)).map_err(ws_err)?;
                }
                ws.write(Message::text(line.to_string())).map_err(ws_err)?;
                wrote = true;
            }
            if wrote {
                ws.flush().map_err(ws_err)?;
            }
            match ws.read() {
                Ok(Message::Text(t)) => {
                    if let Some(r) = handle_control(&shared, t.as_ref()) {
                        let _ = sub.tx.try_send(r.into());
                    }
                }
                Ok(Message::Close(_)) => break,
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
                Err(e) => return Err(ws_err(e)),
            }
        }
        Ok(())
    })();
    sub.alive.store(false, Ordering::Relaxed);
    let _ = ws.close(None);
    result
}
