//! Real-time loop and WebSocket front end.
//!
//! The simulation runs on its own thread and is the only owner of the
//! [`Session`]. Connections feed a bounded mailbox that the loop drains
//! between ticks. Replies go back on a per-client channel; telemetry and
//! events go out on a broadcast channel whose slow receivers skip frames
//! instead of holding up the loop.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc};
use tokio_tungstenite::tungstenite::Message;

use crate::session::{ClientId, Output, Session};

pub const MAILBOX_CAPACITY: usize = 1024;
pub const BROADCAST_CAPACITY: usize = 4096;

pub enum Inbound {
    Connect {
        client: ClientId,
        reply: mpsc::UnboundedSender<Arc<str>>,
    },
    Text {
        client: ClientId,
        text: String,
    },
    Disconnect {
        client: ClientId,
    },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoopLimits {
    /// Stop after this many steps.
    pub max_steps: Option<u64>,
}

/// Drives `session` until `stop` is set or a limit is hit, then closes any
/// open recording. Paces to the session's realtime factor.
pub fn run_loop(
    mut session: Session,
    mut mailbox: mpsc::Receiver<Inbound>,
    broadcast: broadcast::Sender<Arc<str>>,
    stop: Arc<AtomicBool>,
    limits: LoopLimits,
) -> Session {
    let mut clients: HashMap<ClientId, mpsc::UnboundedSender<Arc<str>>> = HashMap::new();
    let rtf = session.config().realtime_factor;
    let dt = session.config().dt;
    let mut anchor = (Instant::now(), session.steps());
    let route = |out: Vec<Output>, clients: &HashMap<ClientId, mpsc::UnboundedSender<Arc<str>>>| {
        for o in out {
            let text: Arc<str> = o.text.into();
            match o.to {
                Some(c) => {
                    if let Some(tx) = clients.get(&c) {
                        let _ = tx.send(text);
                    }
                }
                None => {
                    // no subscribers is fine
                    let _ = broadcast.send(text);
                }
            }
        }
    };
    while !stop.load(Ordering::Relaxed) {
        loop {
            match mailbox.try_recv() {
                Ok(Inbound::Connect { client, reply }) => {
                    clients.insert(client, reply);
                    route(session.connect(client), &clients);
                }
                Ok(Inbound::Text { client, text }) => {
                    route(session.handle(client, &text), &clients)
                }
                Ok(Inbound::Disconnect { client }) => {
                    clients.remove(&client);
                    session.disconnect(client);
                }
                Err(_) => break,
            }
        }
        if limits.max_steps.is_some_and(|m| session.steps() >= m) {
            break;
        }
        if session.is_frozen() {
            std::thread::sleep(Duration::from_millis(5));
            anchor = (Instant::now(), session.steps());
            continue;
        }
        route(session.tick(), &clients);
        if rtf > 0.0 {
            let sim_elapsed = (session.steps() - anchor.1) as f64 * dt;
            let due = anchor.0 + Duration::from_secs_f64(sim_elapsed / rtf);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            } else if now - due > Duration::from_millis(250) {
                // fell far behind; do not try to catch up in a burst
                anchor = (now, session.steps());
            }
        }
    }
    route(session.finish(), &clients);
    session
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    sim: Option<JoinHandle<Session>>,
    net: Option<JoinHandle<()>>,
    net_stop: Option<tokio::sync::oneshot::Sender<()>>,
}

impl ServerHandle {
    pub fn is_finished(&self) -> bool {
        self.sim.as_ref().is_none_or(JoinHandle::is_finished)
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::Relaxed);
    }

    /// Waits for the loop to end (after [`stop`](Self::stop) or a limit) and
    /// returns the final session.
    pub fn join(mut self) -> Session {
        let session = self
            .sim
            .take()
            .expect("joined once")
            .join()
            .expect("simulation thread panicked");
        if let Some(tx) = self.net_stop.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.net.take() {
            let _ = h.join();
        }
        session
    }
}

/// Binds `addr` and starts the simulation and network threads.
pub fn spawn(
    session: Session,
    addr: SocketAddr,
    limits: LoopLimits,
) -> std::io::Result<ServerHandle> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = rt.block_on(TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (mail_tx, mail_rx) = mpsc::channel(MAILBOX_CAPACITY);
    let (bcast, _) = broadcast::channel::<Arc<str>>(BROADCAST_CAPACITY);
    let stop = Arc::new(AtomicBool::new(false));
    let (net_stop, mut net_stop_rx) = tokio::sync::oneshot::channel::<()>();

    let sim = {
        let (stop, bcast) = (stop.clone(), bcast.clone());
        std::thread::Builder::new()
            .name("desksim-sim".into())
            .spawn(move || run_loop(session, mail_rx, bcast, stop, limits))?
    };
    let net = std::thread::Builder::new()
        .name("desksim-net".into())
        .spawn(move || {
            rt.block_on(async move {
            let next_id = Arc::new(AtomicU64::new(1));
            loop {
                tokio::select! {
                    _ = &mut net_stop_rx => break,
                    accepted = listener.accept() => {
                        let Ok((stream, _)) = accepted else { continue };
                        let id = next_id.fetch_add(1, Ordering::Relaxed);
                        tokio::spawn(client_task(stream, id, mail_tx.clone(), bcast.subscribe()));
                    }
                }
            }
        });
            rt.shutdown_timeout(Duration::from_millis(200));
        })?;
    Ok(ServerHandle {
        addr,
        stop,
        sim: Some(sim),
        net: Some(net),
        net_stop: Some(net_stop),
    })
}

async fn client_task(
    stream: TcpStream,
    client: ClientId,
    mailbox: mpsc::Sender<Inbound>,
    mut bcast: broadcast::Receiver<Arc<str>>,
) {
    let _ = stream.set_nodelay(true);
    let Ok(ws) = tokio_tungstenite::accept_async(stream).await else {
        return;
    };
    let (mut sink, mut source) = ws.split();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<Arc<str>>();
    if mailbox
        .send(Inbound::Connect {
            client,
            reply: reply_tx,
        })
        .await
        .is_err()
    {
        return;
    }
    loop {
        tokio::select! {
            biased;
            incoming = source.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    if mailbox.send(Inbound::Text { client, text: text.to_string() }).await.is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            reply = reply_rx.recv() => match reply {
                Some(text) => {
                    if sink.send(Message::text(text.to_string())).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
            frame = bcast.recv() => match frame {
                Ok(text) => {
                    if sink.send(Message::text(text.to_string())).await.is_err() {
                        break;
                    }
                }
                // slow consumer: frames were dropped for this client only
                Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => break,
            },
        }
    }
    let _ = mailbox.send(Inbound::Disconnect { client }).await;
    let _ = sink.close().await;
}
