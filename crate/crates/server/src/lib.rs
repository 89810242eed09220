//! WebSocket transport for [`raise_core::world::World`]: one text frame per
//! protocol envelope, one task per connection.

pub mod bot;
pub mod soak;

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinSet;
use tokio_tungstenite::tungstenite::Message;
use tracing::{debug, info, warn};

use raise_core::scenario::{ContentPack, PackError, ValidationReport};
use raise_core::world::protocol::ServerEnvelope;
use raise_core::world::store::StoreError;
use raise_core::world::topology::{TopologyError, WorldTopology, TOPOLOGY_FILE};
use raise_core::world::{ConnId, Outbound, World};

#[derive(Debug, Error)]
pub enum ContentError {
    #[error(transparent)]
    Pack(#[from] PackError),
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("content pack has validation errors")]
    Invalid(Vec<(String, ValidationReport)>),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Loads the pack and `world.json` from `dir`, refusing packs with
/// validation errors (warnings are allowed).
pub fn load_content(dir: &Path) -> Result<(ContentPack, WorldTopology), ContentError> {
    let pack = ContentPack::load(dir)?;
    let reports = pack.validate();
    if reports.iter().any(|(_, r)| !r.is_loadable()) {
        return Err(ContentError::Invalid(reports));
    }
    let path = dir.join(TOPOLOGY_FILE);
    let bytes = std::fs::read(&path).map_err(|source| ContentError::Io { path, source })?;
    let topology = WorldTopology::from_json(&bytes)?;
    topology.check(&pack)?;
    Ok((pack, topology))
}

struct ChannelOutbound(mpsc::UnboundedSender<String>);

impl Outbound for ChannelOutbound {
    fn send(&self, envelope: &ServerEnvelope) {
        // A closed channel means the connection task is gone.
        let _ = self.0.send(envelope.to_text());
    }
}

#[derive(Debug, Default)]
pub struct ShutdownReport {
    pub connections: usize,
    pub sessions_flushed: usize,
    pub flush_errors: Vec<StoreError>,
}

pub struct Server {
    world: Arc<World>,
    listener: TcpListener,
}

impl Server {
    pub async fn bind(addr: SocketAddr, world: Arc<World>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        Ok(Server { world, listener })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    /// Accepts connections until `shutdown` resolves, then flushes open
    /// session records and closes every connection.
    pub async fn run(self, shutdown: impl Future<Output = ()>) -> ShutdownReport {
        let (stop_tx, stop_rx) = watch::channel(false);
        let mut tasks = JoinSet::new();
        let mut accepted = 0;
        tokio::pin!(shutdown);
        loop {
            tokio::select! {
                _ = &mut shutdown => break,
                res = self.listener.accept() => match res {
                    Ok((stream, peer)) => {
                        accepted += 1;
                        let world = Arc::clone(&self.world);
                        tasks.spawn(serve_connection(world, stream, peer, stop_rx.clone()));
                    }
                    Err(e) => warn!(error = %e, "accept failed"),
                },
                Some(_) = tasks.join_next(), if !tasks.is_empty() => {}
            }
        }
        info!(connections = accepted, "shutting down");
        let (sessions_flushed, flush_errors) = self.world.shutdown();
        for e in &flush_errors {
            warn!(error = %e, "session record could not be flushed");
        }
        let _ = stop_tx.send(true);
        let drain = async { while tasks.join_next().await.is_some() {} };
        if tokio::time::timeout(Duration::from_secs(5), drain).await.is_err() {
            warn!("connections did not close in time");
        }
        info!(sessions_flushed, "shutdown complete");
        ShutdownReport {
            connections: accepted,
            sessions_flushed,
            flush_errors,
        }
    }
}

async fn serve_connection(
    world: Arc<World>,
    stream: TcpStream,
    peer: SocketAddr,
    mut stop: watch::Receiver<bool>,
) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            warn!(%peer, error = %e, "websocket handshake failed");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = mpsc::unbounded_channel();
    let conn: ConnId = world.connect(Arc::new(ChannelOutbound(tx)));
    info!(conn, %peer, "connected");
    let reason = loop {
        tokio::select! {
            frame = source.next() => match frame {
                Some(Ok(Message::Text(text))) => world.handle(conn, text.as_str()),
                Some(Ok(Message::Binary(bytes))) => world.handle(conn, &String::from_utf8_lossy(&bytes)),
                Some(Ok(Message::Close(_))) | None => break "peer closed",
                Some(Ok(_)) => {}
                Some(Err(e)) => {
                    debug!(conn, error = %e, "read failed");
                    break "read error";
                }
            },
            out = rx.recv() => match out {
                Some(text) => {
                    if sink.send(Message::text(text)).await.is_err() {
                        break "write error";
                    }
                }
                None => break "outbound closed",
            },
            _ = stop.changed() => break "server shutdown",
        }
    };
    world.disconnect(conn);
    while let Ok(text) = rx.try_recv() {
        if sink.send(Message::text(text)).await.is_err() {
            break;
        }
    }
    let _ = sink.send(Message::Close(None)).await;
    let _ = sink.close().await;
    info!(conn, %peer, reason, "disconnected");
}
