use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, error, info, warn};
use sns_core::protocol::{read_frame, write_frame, Transport, MAX_TCP_FRAME};
use sns_core::snapshot::SnapshotError;
use sns_core::Registry;
use thiserror::Error;

use crate::config::ServerConfig;
use crate::handler::Handler;
use crate::survey::{load_survey, SurveyError};

const POLL: Duration = Duration::from_millis(50);
const TCP_IDLE: Duration = Duration::from_secs(10);
const DRAIN_DEADLINE: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error("snapshot: {0}")]
    Snapshot(#[from] SnapshotError),
}

/// Called once the sockets are bound, e.g. to advertise the server through
/// a discovery mechanism. The default does nothing.
pub trait Discovery: Send {
    fn ready(&mut self, _udp: SocketAddr, _tcp: SocketAddr) {}
}

pub struct NoDiscovery;

impl Discovery for NoDiscovery {}

/// Shared flag that stops a running server.
#[derive(Debug, Clone, Default)]
pub struct Shutdown(Arc<AtomicBool>);

impl Shutdown {
    pub fn trigger(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_triggered(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }

    /// The flag, for `signal_hook::flag::register`.
    pub fn flag(&self) -> Arc<AtomicBool> {
        self.0.clone()
    }
}

pub struct Server {
    config: ServerConfig,
    handler: Arc<Handler>,
    udp: UdpSocket,
    tcp: TcpListener,
    shutdown: Shutdown,
}

impl Server {
    /// Builds the registry, restores the snapshot and survey, and binds UDP
    /// and TCP on the same port.
    pub fn bind(config: ServerConfig) -> Result<Self, ServerError> {
        let registry = Arc::new(
            Registry::new(config.grid, config.cell_id).with_max_results(config.max_results),
        );
        if let Some(path) = &config.snapshot {
            if path.exists() {
                let n = registry.restore(path)?;
                info!("restored {n} device(s) from {}", path.display());
            }
        }
        if let Some(path) = &config.survey {
            let n = load_survey(&registry, path)?;
            info!("loaded {n} surveyed device(s) from {}", path.display());
        }
        let udp = UdpSocket::bind(config.bind).map_err(|source| ServerError::Bind {
            addr: config.bind,
            source,
        })?;
        let addr = udp.local_addr()?;
        let tcp = TcpListener::bind(addr).map_err(|source| ServerError::Bind { addr, source })?;
        let handler = Arc::new(Handler::new(
            registry,
            config.auth_token.clone(),
            config.trusted.clone(),
        ));
        Ok(Self {
            config,
            handler,
            udp,
            tcp,
            shutdown: Shutdown::default(),
        })
    }

    pub fn udp_addr(&self) -> SocketAddr {
        self.udp.local_addr().expect("bound socket")
    }

    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp.local_addr().expect("bound socket")
    }

    pub fn registry(&self) -> Arc<Registry> {
        self.handler.registry().clone()
    }

    pub fn shutdown_handle(&self) -> Shutdown {
        self.shutdown.clone()
    }

    /// Serves until the shutdown flag is set, then drains connections and
    /// writes a final snapshot.
    pub fn run(self, mut discovery: impl Discovery) -> Result<(), ServerError> {
        let (udp_addr, tcp_addr) = (self.udp_addr(), self.tcp_addr());
        info!(
            "serving cell {} on udp {udp_addr} tcp {tcp_addr} (order {}, {} cm cells)",
            self.config.cell_id,
            self.config.grid.order(),
            self.config.grid.cell_size_cm()
        );
        discovery.ready(udp_addr, tcp_addr);

        self.udp.set_read_timeout(Some(POLL))?;
        let mut threads: Vec<JoinHandle<()>> = Vec::new();
        for _ in 0..self.config.workers {
            let socket = self.udp.try_clone()?;
            let (handler, stop) = (self.handler.clone(), self.shutdown.clone());
            threads.push(thread::spawn(move || udp_worker(socket, handler, stop)));
        }
        if let Some(path) = self.config.snapshot.clone() {
            let registry = self.registry();
            let (stop, every) = (self.shutdown.clone(), self.config.snapshot_interval);
            threads.push(thread::spawn(move || snapshot_loop(registry, path, every, stop)));
        }

        let active = Arc::new(AtomicUsize::new(0));
        self.accept_loop(&active)?;

        for t in threads {
            let _ = t.join();
        }
        let deadline = Instant::now() + DRAIN_DEADLINE;
        while active.load(Ordering::SeqCst) > 0 && Instant::now() < deadline {
            thread::sleep(POLL / 5);
        }
        if let Some(path) = &self.config.snapshot {
            self.registry().snapshot(path)?;
            info!("wrote snapshot {}", path.display());
        }
        info!("stopped");
        Ok(())
    }

    fn accept_loop(&self, active: &Arc<AtomicUsize>) -> Result<(), ServerError> {
        self.tcp.set_nonblocking(true)?;
        while !self.shutdown.is_triggered() {
            match self.tcp.accept() {
                Ok((stream, peer)) => {
                    if active.load(Ordering::SeqCst) >= self.config.max_connections {
                        warn!("{peer} refused: connection limit reached");
                        drop(stream);
                        continue;
                    }
                    active.fetch_add(1, Ordering::SeqCst);
                    let (handler, stop, active) =
                        (self.handler.clone(), self.shutdown.clone(), active.clone());
                    thread::spawn(move || {
                        if let Err(e) = serve_connection(stream, peer, &handler, &stop) {
                            debug!("{peer} tcp closed: {e}");
                        }
                        active.fetch_sub(1, Ordering::SeqCst);
                    });
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL / 5),
                Err(e) => {
                    warn!("accept failed: {e}");
                    thread::sleep(POLL);
                }
            }
        }
        Ok(())
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> RunningServer {
        let (udp, tcp) = (self.udp_addr(), self.tcp_addr());
        let registry = self.registry();
        let shutdown = self.shutdown_handle();
        let thread = thread::spawn(move || self.run(NoDiscovery));
        RunningServer {
            udp,
            tcp,
            registry,
            shutdown,
            thread: Some(thread),
        }
    }
}

fn udp_worker(socket: UdpSocket, handler: Arc<Handler>, stop: Shutdown) {
    // large enough for any datagram, so oversized ones are seen whole
    let mut buf = vec![0u8; 65_536];
    while !stop.is_triggered() {
        let (len, peer) = match socket.recv_from(&mut buf) {
            Ok(r) => r,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) => {
                // e.g. ICMP port unreachable reported on the next read
                debug!("udp receive: {e}");
                continue;
            }
        };
        if let Some(reply) = handler.handle(&buf[..len], peer, Transport::Udp) {
            if let Err(e) = socket.send_to(&reply, peer) {
                debug!("{peer} udp send: {e}");
            }
        }
    }
}

fn serve_connection(
    mut stream: TcpStream,
    peer: SocketAddr,
    handler: &Handler,
    stop: &Shutdown,
) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(TCP_IDLE))?;
    while !stop.is_triggered() {
        let Some(request) = read_frame(&mut stream, MAX_TCP_FRAME)? else {
            return Ok(());
        };
        if let Some(reply) = handler.handle(&request, peer, Transport::Tcp) {
            write_frame(&mut stream, &reply)?;
        }
    }
    Ok(())
}

fn snapshot_loop(registry: Arc<Registry>, path: PathBuf, every: Duration, stop: Shutdown) {
    let mut last = Instant::now();
    while !stop.is_triggered() {
        thread::sleep(POLL);
        if last.elapsed() >= every {
            match registry.snapshot(&path) {
                Ok(()) => debug!("periodic snapshot written to {}", path.display()),
                Err(e) => error!("periodic snapshot failed: {e}"),
            }
            last = Instant::now();
        }
    }
}

/// A server running on its own thread; stopped when dropped.
pub struct RunningServer {
    pub udp: SocketAddr,
    pub tcp: SocketAddr,
    pub registry: Arc<Registry>,
    shutdown: Shutdown,
    thread: Option<JoinHandle<Result<(), ServerError>>>,
}

impl RunningServer {
    pub fn stop(mut self) -> Result<(), ServerError> {
        self.finish()
    }

    fn finish(&mut self) -> Result<(), ServerError> {
        self.shutdown.trigger();
        match self.thread.take() {
            Some(t) => t.join().expect("server thread panicked"),
            None => Ok(()),
        }
    }

    /// Whether the server thread is still alive.
    pub fn is_running(&self) -> bool {
        self.thread.as_ref().is_some_and(|t| !t.is_finished())
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.finish();
    }
}
