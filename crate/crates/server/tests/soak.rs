use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use raise_core::world::protocol::{ClientMessage, ServerMessage};
use raise_core::world::store::{load_session_record, verify_replay, DataStore, SessionStatusTag};
use raise_core::world::{SystemClock, World};
use raise_server::bot::{random_legal_input, BotClient, BotView};
use raise_server::soak::{run_soak, SoakConfig};
use raise_server::{load_content, ContentError, Server};

fn content_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../content")
}

async fn server(data: &std::path::Path) -> Server {
    let (pack, topology) = load_content(&content_dir()).unwrap();
    let store = DataStore::open(data).unwrap();
    let world = World::new(pack, topology, store, 99, Arc::new(SystemClock)).unwrap();
    let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
    Server::bind(addr, Arc::new(world)).await.unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn small_soak_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_soak(
        server(dir.path()).await,
        SoakConfig {
            bots: 4,
            actions: 200,
            seed: 5,
            ..SoakConfig::default()
        },
    )
    .await;
    eprintln!(
        "actions {} frames {} checkpoints {} started {} finished {} records {} errors {:?}",
        report.actions, report.frames, report.checkpoints, report.sessions_started,
        report.sessions_finished, report.records, report.errors
    );
    assert!(report.is_clean(), "{:#?}", report.problems);
    assert_eq!(report.actions, 200);
    assert!(report.checkpoints >= 20);
    assert!(report.sessions_started > 0);
    assert!(report.records > 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn tutorial_then_shutdown_leaves_replayable_record() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path()).await;
    let addr = srv.local_addr().unwrap();
    let world = Arc::clone(srv.world());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let task = tokio::spawn(srv.run(async {
        let _ = rx.await;
    }));

    let t = Duration::from_secs(5);
    let mut c = BotClient::connect(addr).await.unwrap();
    let mut v = BotView::new();
    c.request(&mut v, ClientMessage::Hello { display_name: "Ana".into(), locale: "pt".into() }, t)
        .await
        .unwrap();
    for room in ["welcome", "tutorial"] {
        c.request(&mut v, ClientMessage::EnterRoom { room_id: room.into() }, t).await.unwrap();
    }
    c.request(&mut v, ClientMessage::StartScenario { scenario_id: "tutorial".into(), seed: Some(3) }, t)
        .await
        .unwrap();
    let mut rng = raise_core::play::policy_rng(1);
    while let Some(input) = random_legal_input(&v, &mut rng) {
        c.request(&mut v, ClientMessage::Input(input), t).await.unwrap();
    }
    assert!(v.session.as_ref().unwrap().view.finished);
    // A second, unfinished session is flushed by the shutdown.
    c.request(&mut v, ClientMessage::StartScenario { scenario_id: "tutorial".into(), seed: None }, t)
        .await
        .unwrap();
    assert!(v.problems.is_empty(), "{:?}", v.problems);

    tx.send(()).unwrap();
    let report = task.await.unwrap();
    assert_eq!(report.sessions_flushed, 1);
    while let Ok(Some(env)) = c.recv(t).await {
        v.observe(&env);
    }

    let files = world.store().session_files().unwrap();
    assert_eq!(files.len(), 2);
    let mut statuses = Vec::new();
    for f in files {
        let rec = load_session_record(&f).unwrap();
        verify_replay(&rec, world.pack().scenario("tutorial").unwrap()).unwrap();
        statuses.push(rec.footer.status);
    }
    statuses.sort_by_key(|s| format!("{s:?}"));
    assert_eq!(statuses, [SessionStatusTag::Finished, SessionStatusTag::Interrupted]);
}

#[tokio::test]
async fn bad_frames_get_error_replies() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path()).await;
    let addr = srv.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let task = tokio::spawn(srv.run(async {
        let _ = rx.await;
    }));
    let mut c = BotClient::connect(addr).await.unwrap();
    c.send_raw("{not json").await.unwrap();
    let env = c.recv(Duration::from_secs(5)).await.unwrap().unwrap();
    assert!(matches!(env.message, ServerMessage::Error { ref code, .. } if code == "BadMessage"));
    c.send(ClientMessage::Chat { text: "hi".into() }).await.unwrap();
    let env = c.recv(Duration::from_secs(5)).await.unwrap().unwrap();
    assert_eq!(env.re, Some(1));
    assert!(matches!(env.message, ServerMessage::Error { ref code, .. } if code == "NotAuthenticated"));
    tx.send(()).unwrap();
    task.await.unwrap();
}

#[test]
fn broken_content_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(content_dir()).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
        }
    }
    let path = dir.path().join("tutorial.scenario.json");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace("\"pass_target\": \"done\"", "\"pass_target\": \"gone\"")).unwrap();
    match load_content(dir.path()) {
        Err(ContentError::Invalid(reports)) => {
            assert!(reports.iter().any(|(id, r)| id == "tutorial" && !r.is_loadable()));
        }
        other => panic!("expected invalid content, got {:?}", other.map(|_| ())),
    }
}
