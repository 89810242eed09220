use std::net::{SocketAddr, ToSocketAddrs};
use std::path::Path;
use std::sync::Arc;

use raise_core::world::store::DataStore;
use raise_core::world::{SystemClock, World};
use raise_server::{load_content, ContentError, Server};

use crate::CliError;

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

pub fn run(
    host: &str,
    port: u16,
    content_dir: &Path,
    data_dir: &Path,
    boot_seed: Option<u64>,
) -> Result<(), CliError> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    let (pack, topology) = load_content(content_dir).map_err(|e| match e {
        ContentError::Invalid(reports) => {
            for (id, report) in reports.iter().filter(|(_, r)| !r.errors.is_empty()) {
                println!("{id}: {} error(s)", report.errors.len());
                for f in &report.errors {
                    println!("  error   {f}");
                }
            }
            CliError::Io(format!("content in {} is invalid", content_dir.display()))
        }
        other => CliError::Io(other.to_string()),
    })?;
    let store = DataStore::open(data_dir).map_err(|e| CliError::Io(e.to_string()))?;
    let seed = boot_seed.unwrap_or_else(|| chrono::Utc::now().timestamp_micros() as u64);
    let world = World::new(pack, topology, store, seed, Arc::new(SystemClock))
        .map_err(|e| CliError::Io(e.to_string()))?;
    let addr: SocketAddr = (host, port)
        .to_socket_addrs()
        .ok()
        .and_then(|mut a| a.next())
        .ok_or_else(|| CliError::Usage(format!("cannot resolve {host}:{port}")))?;

    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    runtime.block_on(async {
        let server = Server::bind(addr, Arc::new(world))
            .await
            .map_err(|e| CliError::Io(format!("cannot bind {addr}: {e}")))?;
        let local = server.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
        tracing::info!(%local, "listening");
        let report = server.run(shutdown_signal()).await;
        if report.flush_errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Io(format!(
                "{} session record(s) could not be flushed",
                report.flush_errors.len()
            )))
        }
    })
}
