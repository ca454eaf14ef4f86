//! Byte transports carrying frames: TCP, and an in-process duplex pipe for
//! running servers and clients inside one process.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::frame::{read_frame, write_frame};
use super::message::{codes, DecodeError, Message};
use super::SyncError;

pub trait Connection: Read + Write + Send {}
impl<T: Read + Write + Send> Connection for T {}

pub trait Connector: Send + Sync {
    fn connect(&self, address: &str) -> io::Result<Box<dyn Connection>>;
}

/// Server side of one session.
pub trait FrameHandler: Send {
    /// Exactly one response per inbound frame; `true` closes the session
    /// after the response is written.
    fn handle(&mut self, request: Result<Message, DecodeError>) -> (Message, bool);
}

pub type HandlerFactory = Arc<dyn Fn() -> Box<dyn FrameHandler> + Send + Sync>;

/// Runs one session to completion over `stream`.
pub fn serve_stream<S: Read + Write + ?Sized>(handler: &mut dyn FrameHandler, stream: &mut S) {
    loop {
        let payload = match read_frame(stream) {
            Ok(Some(p)) => p,
            Ok(None) => return,
            Err(SyncError::Malformed(detail)) => {
                // framing is lost; answer once and drop the connection
                let reply = Message::error(codes::MALFORMED, detail);
                if let Ok(text) = reply.encode() {
                    let _ = write_frame(stream, &text);
                }
                return;
            }
            Err(_) => return,
        };
        let (response, close) = handler.handle(Message::decode(&payload));
        let text = response
            .encode()
            .or_else(|e| Message::error(codes::FAILED, e.to_string()).encode())
            .unwrap_or_else(|_| "Error\tfailed\t".to_string());
        let text = if text.len() > super::frame::MAX_PAYLOAD {
            format!("Error\t{}\t{} bytes", codes::TOO_LARGE, text.len())
        } else {
            text
        };
        if write_frame(stream, &text).is_err() || close {
            return;
        }
    }
}

pub struct TcpConnector {
    pub timeout: Duration,
}

impl Default for TcpConnector {
    fn default() -> Self {
        TcpConnector {
            timeout: Duration::from_secs(10),
        }
    }
}

impl Connector for TcpConnector {
    fn connect(&self, address: &str) -> io::Result<Box<dyn Connection>> {
        let addr = address
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "address did not resolve"))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        stream.set_nodelay(true)?;
        Ok(Box::new(stream))
    }
}

/// A TCP listener serving sessions on background threads until stopped.
pub struct FrameServer {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl FrameServer {
    pub fn bind(address: &str, factory: HandlerFactory) -> Result<Self, SyncError> {
        let listener =
            TcpListener::bind(address).map_err(|e| SyncError::Bind(address.to_string(), e))?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let accept = {
            let stop = stop.clone();
            thread::spawn(move || accept_loop(listener, factory, stop))
        };
        Ok(FrameServer {
            local_addr,
            stop,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Stops accepting and waits for open sessions to finish.
    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }
}

impl Drop for FrameServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, factory: HandlerFactory, stop: Arc<AtomicBool>) {
    let mut sessions: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let factory = factory.clone();
                let stop = stop.clone();
                sessions.push(thread::spawn(move || {
                    let _ = stream.set_nonblocking(false);
                    // bounded reads let the session notice shutdown
                    let _ = stream.set_read_timeout(Some(Duration::from_millis(200)));
                    let mut stream = IdleAware {
                        inner: stream,
                        stop,
                    };
                    let mut handler = factory();
                    serve_stream(handler.as_mut(), &mut stream);
                }));
                sessions.retain(|s| !s.is_finished());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(10));
            }
            Err(_) => thread::sleep(Duration::from_millis(10)),
        }
    }
    for s in sessions {
        let _ = s.join();
    }
}

/// Retries read timeouts until the server is stopping, then reports EOF.
struct IdleAware {
    inner: TcpStream,
    stop: Arc<AtomicBool>,
}

impl Read for IdleAware {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        loop {
            match self.inner.read(buf) {
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) =>
                {
                    if self.stop.load(Ordering::SeqCst) {
                        return Ok(0);
                    }
                }
                other => return other,
            }
        }
    }
}

impl Write for IdleAware {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.inner.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// One end of an in-memory duplex byte pipe.
pub struct PipeEnd {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    buf: Vec<u8>,
    pos: usize,
}

pub fn pipe() -> (PipeEnd, PipeEnd) {
    let (a_tx, a_rx) = channel();
    let (b_tx, b_rx) = channel();
    (
        PipeEnd {
            tx: a_tx,
            rx: b_rx,
            buf: Vec::new(),
            pos: 0,
        },
        PipeEnd {
            tx: b_tx,
            rx: a_rx,
            buf: Vec::new(),
            pos: 0,
        },
    )
}

impl Read for PipeEnd {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if out.is_empty() {
            return Ok(0);
        }
        while self.pos >= self.buf.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.buf = chunk;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

impl Write for PipeEnd {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        if data.is_empty() {
            return Ok(0);
        }
        self.tx
            .send(data.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "pipe closed"))?;
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// In-process network: addresses map to handler factories; each connect
/// starts a session thread on the far end of a pipe.
#[derive(Clone, Default)]
pub struct MemoryNetwork {
    listeners: Arc<Mutex<HashMap<String, HandlerFactory>>>,
}

impl MemoryNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn listen(&self, address: &str, factory: HandlerFactory) {
        self.listeners
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(address.to_string(), factory);
    }

    pub fn unlisten(&self, address: &str) {
        self.listeners
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .remove(address);
    }
}

impl Connector for MemoryNetwork {
    fn connect(&self, address: &str) -> io::Result<Box<dyn Connection>> {
        let factory = self
            .listeners
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(address)
            .cloned()
            .ok_or_else(|| io::Error::new(io::ErrorKind::ConnectionRefused, address.to_string()))?;
        let (client, mut server) = pipe();
        thread::spawn(move || {
            let mut handler = factory();
            serve_stream(handler.as_mut(), &mut server);
        });
        Ok(Box::new(client))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// Captured bytes of one connection, by direction.
#[derive(Debug, Clone, Default)]
pub struct Capture {
    pub address: String,
    pub sent: Vec<u8>,
    pub received: Vec<u8>,
}

/// Wraps a connector and records every byte written and read.
pub struct CapturingConnector<C> {
    inner: C,
    log: Arc<Mutex<Vec<Arc<Mutex<Capture>>>>>,
}

impl<C: Connector> CapturingConnector<C> {
    pub fn new(inner: C) -> Self {
        CapturingConnector {
            inner,
            log: Arc::default(),
        }
    }

    pub fn captures(&self) -> Vec<Capture> {
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .map(|c| c.lock().unwrap_or_else(|e| e.into_inner()).clone())
            .collect()
    }
}

struct Tap {
    inner: Box<dyn Connection>,
    capture: Arc<Mutex<Capture>>,
}

impl Read for Tap {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.capture
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .received
            .extend_from_slice(&buf[..n]);
        Ok(n)
    }
}

impl Write for Tap {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.capture
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .sent
            .extend_from_slice(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

impl<C: Connector> Connector for CapturingConnector<C> {
    fn connect(&self, address: &str) -> io::Result<Box<dyn Connection>> {
        let inner = self.inner.connect(address)?;
        let capture = Arc::new(Mutex::new(Capture {
            address: address.to_string(),
            ..Capture::default()
        }));
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(capture.clone());
        Ok(Box::new(Tap { inner, capture }))
    }
}
