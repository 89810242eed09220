//! Multi-client soak harness: bots drive random legal actions against a
//! live server, then the server is shut down and every session record is
//! replayed.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::sync::{oneshot, Barrier};

use raise_core::world::protocol::ClientMessage;
use raise_core::world::store::{load_session_record, verify_replay};

use crate::bot::{random_action, BotClient, BotError, BotView};
use crate::{Server, ShutdownReport};

#[derive(Debug, Clone)]
pub struct SoakConfig {
    pub bots: usize,
    /// Random actions across all bots; checkpoints and setup are extra.
    pub actions: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub reply_timeout: Duration,
}

impl Default for SoakConfig {
    fn default() -> Self {
        SoakConfig {
            bots: 10,
            actions: 1000,
            seed: 1,
            checkpoint_every: 10,
            reply_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Default)]
pub struct SoakReport {
    pub actions: usize,
    pub frames: usize,
    pub checkpoints: usize,
    pub sessions_started: usize,
    pub sessions_finished: usize,
    pub errors: BTreeMap<String, usize>,
    pub records: usize,
    pub records_valid: usize,
    pub problems: Vec<String>,
    pub shutdown: ShutdownReport,
}

impl SoakReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty() && self.records == self.records_valid
    }
}

struct BotOutcome {
    view: BotView,
    actions: usize,
    failure: Option<BotError>,
}

async fn drive(
    client: &mut BotClient,
    view: &mut BotView,
    index: usize,
    actions: usize,
    config: &SoakConfig,
    locales: &[String],
    rng: &mut ChaCha8Rng,
    done: &mut usize,
) -> Result<(), BotError> {
    let t = config.reply_timeout;
    let locale = locales[rng.random_range(0..locales.len())].clone();
    client
        .request(
            view,
            ClientMessage::Hello {
                display_name: format!("Bot {index}"),
                locale,
            },
            t,
        )
        .await?;
    let welcome = view.topology.as_ref().map(|t| t.welcome_room().to_string());
    client
        .request(view, ClientMessage::EnterRoom { room_id: welcome.unwrap_or_default() }, t)
        .await?;
    for i in 0..actions {
        let action = random_action(view, locales, rng);
        client.request(view, action, t).await?;
        *done += 1;
        if (i + 1) % config.checkpoint_every == 0 || i + 1 == actions {
            checkpoint(client, view, t).await?;
        }
    }
    Ok(())
}

/// Re-enters the current room; the snapshot reply must equal the fold.
async fn checkpoint(client: &mut BotClient, view: &mut BotView, t: Duration) -> Result<(), BotError> {
    let Some(room_id) = view.room_id().map(str::to_string) else {
        return Ok(());
    };
    let kind = "enter_room";
    let seq = client.send(ClientMessage::EnterRoom { room_id }).await?;
    view.sent(seq, kind);
    view.expect_checkpoint(seq);
    loop {
        let env = client.recv(t).await?.ok_or(BotError::Closed)?;
        view.observe(&env);
        if env.re == Some(seq) {
            return Ok(());
        }
    }
}

/// Runs the soak against `server` and consumes it.
pub async fn run_soak(server: Server, config: SoakConfig) -> SoakReport {
    let world = Arc::clone(server.world());
    let addr = server.local_addr().expect("bound listener has an address");
    let locales = world.pack().manifest.locales.clone();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let server_task = tokio::spawn(server.run(async {
        let _ = stop_rx.await;
    }));

    let barrier = Arc::new(Barrier::new(config.bots + 1));
    let mut bots = Vec::new();
    for i in 0..config.bots {
        let share = config.actions / config.bots + usize::from(i < config.actions % config.bots);
        let config = config.clone();
        let locales = locales.clone();
        let barrier = Arc::clone(&barrier);
        bots.push(tokio::spawn(async move {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(i as u64));
            let mut view = BotView::new();
            let mut done = 0;
            let mut client = match BotClient::connect(addr).await {
                Ok(c) => Some(c),
                Err(e) => {
                    barrier.wait().await;
                    return BotOutcome {
                        view,
                        actions: 0,
                        failure: Some(e),
                    };
                }
            };
            let c = client.as_mut().expect("connected");
            let mut failure =
                drive(c, &mut view, i, share, &config, &locales, &mut rng, &mut done)
                    .await
                    .err();
            barrier.wait().await;
            // Read everything up to the server's close.
            if failure.is_none() {
                loop {
                    match c.recv(config.reply_timeout).await {
                        Ok(Some(env)) => view.observe(&env),
                        Ok(None) => break,
                        Err(e) => {
                            failure = Some(e);
                            break;
                        }
                    }
                }
            }
            BotOutcome {
                view,
                actions: done,
                failure,
            }
        }));
    }
    barrier.wait().await;
    let _ = stop_tx.send(());

    let mut report = SoakReport::default();
    for (i, bot) in bots.into_iter().enumerate() {
        let outcome = match bot.await {
            Ok(o) => o,
            Err(e) => {
                report.problems.push(format!("bot {i} panicked: {e}"));
                continue;
            }
        };
        let v = outcome.view;
        report.actions += outcome.actions;
        report.frames += v.frames;
        report.checkpoints += v.checkpoints;
        report.sessions_started += v.sessions_started;
        report.sessions_finished += v.sessions_finished;
        for (code, n) in &v.errors {
            *report.errors.entry(code.clone()).or_insert(0) += n;
        }
        if let Some(e) = outcome.failure {
            report.problems.push(format!("bot {i}: {e}"));
        }
        let open = v.unanswered();
        if !open.is_empty() {
            report.problems.push(format!("bot {i}: no reply to {open:?}"));
        }
        report
            .problems
            .extend(v.problems.iter().map(|p| format!("bot {i}: {p}")));
    }
    report.shutdown = server_task.await.unwrap_or_default();

    match world.store().session_files() {
        Ok(files) => {
            for path in files {
                report.records += 1;
                let checked = load_session_record(&path)
                    .map_err(|e| e.to_string())
                    .and_then(|rec| {
                        let doc = world
                            .pack()
                            .scenario(&rec.header.scenario_id)
                            .ok_or_else(|| format!("unknown scenario {}", rec.header.scenario_id))?;
                        verify_replay(&rec, doc).map_err(|e| e.to_string())
                    });
                match checked {
                    Ok(()) => report.records_valid += 1,
                    Err(e) => report.problems.push(format!("{}: {e}", path.display())),
                }
            }
        }
        Err(e) => report.problems.push(format!("listing session records: {e}")),
    }
    report
}
