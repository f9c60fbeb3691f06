use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use brickstage_core::replay::replay;
use brickstage_core::{trace_digest, EventIn, PlayLog};
use brickstage_server::protocol::WireEntry;
use brickstage_server::{bind, serve, Catalog, ClientMessage, ServerMessage, StreamTrace};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

struct Server {
    addr: SocketAddr,
    catalog: Arc<Catalog>,
    _stop: oneshot::Sender<()>,
}

async fn start_server() -> Server {
    let catalog = Arc::new(Catalog::load_dir(&fixtures()).expect("fixtures load"));
    let listener = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel::<()>();
    let c = Arc::clone(&catalog);
    tokio::spawn(async move {
        serve(listener, c, async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    Server {
        addr,
        catalog,
        _stop: tx,
    }
}

struct Client {
    ws: Ws,
}

impl Client {
    async fn connect(addr: SocketAddr) -> Self {
        let (ws, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
        Client { ws }
    }

    async fn send(&mut self, msg: &ClientMessage) {
        self.send_text(serde_json::to_string(msg).unwrap()).await;
    }

    async fn send_text(&mut self, text: String) {
        self.ws.send(Message::Text(text)).await.unwrap();
    }

    async fn recv(&mut self) -> ServerMessage {
        loop {
            let msg = tokio::time::timeout(Duration::from_secs(10), self.ws.next())
                .await
                .expect("server replied in time")
                .expect("stream open")
                .unwrap();
            if let Message::Text(text) = msg {
                return serde_json::from_str(&text).unwrap();
            }
        }
    }
}

fn tap_point(scene: &[WireEntry], sprite: &str) -> (f64, f64) {
    let e = scene.iter().find(|e| e.sprite_name == sprite).unwrap();
    (e.x, e.y)
}

#[tokio::test]
async fn handshake_lists_projects() {
    let server = start_server().await;
    let mut c = Client::connect(server.addr).await;
    match c.recv().await {
        ServerMessage::Hello {
            protocol_version,
            projects,
        } => {
            assert_eq!(protocol_version, 1);
            assert_eq!(projects, ["catch", "flipnote", "hello", "pixel"]);
        }
        other => panic!("expected hello, got {other:?}"),
    }
}

#[tokio::test]
async fn live_session_matches_offline_replay() {
    let server = start_server().await;
    let mut c = Client::connect(server.addr).await;
    assert!(matches!(c.recv().await, ServerMessage::Hello { .. }));

    c.send(&ClientMessage::Load {
        project_name: "catch".into(),
    })
    .await;
    let entry = server.catalog.get("catch").unwrap();
    match c.recv().await {
        ServerMessage::Loaded {
            project_digest,
            stage,
            costumes,
        } => {
            assert_eq!(project_digest, entry.digest);
            assert_eq!((stage.w, stage.h, stage.tick_rate), (480, 800, 30));
            assert_eq!(costumes.len(), 4);
        }
        other => panic!("expected loaded, got {other:?}"),
    }

    c.send(&ClientMessage::Start { seed: 7 }).await;
    let mut stream = StreamTrace::new();
    let mut last_tick = None;
    let mut tapped = false;
    loop {
        let msg = c.recv().await;
        assert!(stream.push(&msg));
        if let ServerMessage::Frame { tick, scene } = &msg {
            assert!(
                last_tick.map_or(*tick == 0, |t| *tick == t + 1),
                "gapless ticks"
            );
            last_tick = Some(*tick);
            if *tick == 40 && !tapped {
                let (x, y) = tap_point(scene, "Mole");
                c.send(&ClientMessage::Tap { x, y }).await;
                tapped = true;
            }
            if *tick == 60 {
                c.send(&ClientMessage::Stop {}).await;
            }
        }
        if let ServerMessage::Ended { tick } = msg {
            assert_eq!(Some(tick), last_tick);
            break;
        }
    }

    c.send(&ClientMessage::SaveLog {}).await;
    let playlog = match c.recv().await {
        ServerMessage::Log { playlog } => playlog,
        other => panic!("expected log, got {other:?}"),
    };
    let log = PlayLog::parse_jsonl(playlog.as_bytes()).unwrap();
    assert_eq!(log.to_jsonl(), playlog);
    assert_eq!(log.seed, 7);
    let taps: Vec<_> = log
        .events
        .iter()
        .filter(|e| matches!(e.event, EventIn::Tap { .. }))
        .collect();
    assert_eq!(taps.len(), 1);
    assert!(taps[0].tick > 40);
    assert_eq!(log.end_tick, last_tick.unwrap());

    let offline = replay(&entry.project, &entry.sizes, &log).unwrap();
    assert_eq!(offline.records.len(), stream.trace().records.len());
    assert_eq!(trace_digest(&offline), trace_digest(stream.trace()));
    // The tap hit the mole, so its reaction shows up in the stream.
    let said_got_me = offline.records.iter().any(|r| {
        r.outputs
            .emitted
            .iter()
            .any(|e| matches!(e, brickstage_core::Emitted::Speak { text, .. } if text == "Got me!"))
    });
    assert!(said_got_me, "{playlog}");
}

#[tokio::test]
async fn protocol_errors_do_not_close_the_connection() {
    let server = start_server().await;
    let mut c = Client::connect(server.addr).await;
    c.recv().await;
    c.send(&ClientMessage::Tap { x: 0.0, y: 0.0 }).await;
    assert!(matches!(c.recv().await, ServerMessage::Error { .. }));
    c.send_text("not json".into()).await;
    assert!(matches!(c.recv().await, ServerMessage::Error { .. }));
    c.send(&ClientMessage::Load {
        project_name: "missing".into(),
    })
    .await;
    assert!(matches!(c.recv().await, ServerMessage::Error { .. }));
    c.send(&ClientMessage::Load {
        project_name: "hello".into(),
    })
    .await;
    assert!(matches!(c.recv().await, ServerMessage::Loaded { .. }));
}

#[tokio::test]
async fn stop_sends_no_frames_afterwards() {
    let server = start_server().await;
    let mut c = Client::connect(server.addr).await;
    c.recv().await;
    c.send(&ClientMessage::Load {
        project_name: "flipnote".into(),
    })
    .await;
    c.recv().await;
    c.send(&ClientMessage::Start { seed: 0 }).await;
    loop {
        if let ServerMessage::Frame { tick: 3, .. } = c.recv().await {
            break;
        }
    }
    c.send(&ClientMessage::Stop {}).await;
    let ended = loop {
        if let ServerMessage::Ended { tick } = c.recv().await {
            break tick;
        }
    };
    tokio::time::sleep(Duration::from_millis(200)).await;
    c.send(&ClientMessage::SaveLog {}).await;
    match c.recv().await {
        ServerMessage::Log { playlog } => {
            let log = PlayLog::parse_jsonl(playlog.as_bytes()).unwrap();
            assert_eq!(log.end_tick, ended);
        }
        other => panic!("frame or event after ended: {other:?}"),
    }
}

#[tokio::test]
async fn concurrent_clients_are_isolated() {
    let server = start_server().await;
    let mut a = Client::connect(server.addr).await;
    let mut b = Client::connect(server.addr).await;
    for (c, name) in [(&mut a, "hello"), (&mut b, "catch")] {
        c.recv().await;
        c.send(&ClientMessage::Load {
            project_name: name.into(),
        })
        .await;
        assert!(matches!(c.recv().await, ServerMessage::Loaded { .. }));
        c.send(&ClientMessage::Start { seed: 1 }).await;
    }
    let collect = |mut c: Client, names: &'static [&'static str]| async move {
        let mut ticks = Vec::new();
        while ticks.len() < 20 {
            if let ServerMessage::Frame { tick, scene } = c.recv().await {
                for e in &scene {
                    assert!(
                        names.contains(&e.sprite_name.as_str()),
                        "foreign sprite {}",
                        e.sprite_name
                    );
                }
                ticks.push(tick);
            }
        }
        ticks
    };
    let (ta, tb) = tokio::join!(
        collect(a, &["Background"]),
        collect(b, &["Stage", "Mole", "Star"])
    );
    let expected: Vec<u64> = (0..20).collect();
    assert_eq!(ta, expected);
    assert_eq!(tb, expected);
}

#[tokio::test]
async fn costume_assets_are_served() {
    let server = start_server().await;
    let mut s = TcpStream::connect(server.addr).await.unwrap();
    s.write_all(
        b"GET /assets/Mole/up?project=catch HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n",
    )
    .await
    .unwrap();
    let mut resp = Vec::new();
    s.read_to_end(&mut resp).await.unwrap();
    assert!(resp.starts_with(b"HTTP/1.1 200"));
    let body_at = resp.windows(4).position(|w| w == b"\r\n\r\n").unwrap() + 4;
    let expected = std::fs::read(fixtures().join("catch/images/mole_up.png")).unwrap();
    assert_eq!(&resp[body_at..], &expected[..]);

    let mut s = TcpStream::connect(server.addr).await.unwrap();
    s.write_all(
        b"GET /assets/Mole/nope?project=catch HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n",
    )
    .await
    .unwrap();
    let mut resp = Vec::new();
    s.read_to_end(&mut resp).await.unwrap();
    assert!(resp.starts_with(b"HTTP/1.1 404"));
}

#[test]
fn missing_project_dir_is_an_error() {
    assert!(Catalog::load_dir(&fixtures().join("does-not-exist")).is_err());
}
