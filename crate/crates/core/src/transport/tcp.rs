use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, ErrorKind};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use super::codec::{read_frame, write_frame};
use super::{Result, TransportError};
use crate::fedcore::{ClientState, FedMessage, ServerState};

/// Address the server listens on when none is given.
pub const BIND_ENV: &str = "FEDTOPIC_BIND";
/// Address clients connect to when none is given.
pub const SERVER_ENV: &str = "FEDTOPIC_SERVER";

enum Event {
    Connected(usize, TcpStream),
    Frame(usize, FedMessage),
    Closed(usize, Option<TransportError>),
}

struct Conn {
    writer: BufWriter<TcpStream>,
    client: Option<u32>,
}

fn spawn_reader(conn: usize, stream: TcpStream, events: mpsc::Sender<Event>) {
    thread::spawn(move || {
        let mut reader = BufReader::new(stream);
        loop {
            match read_frame(&mut reader) {
                Ok(Some(msg)) => {
                    if events.send(Event::Frame(conn, msg)).is_err() {
                        return;
                    }
                }
                Ok(None) => {
                    let _ = events.send(Event::Closed(conn, None));
                    return;
                }
                Err(e) => {
                    let _ = events.send(Event::Closed(conn, Some(e)));
                    return;
                }
            }
        }
    });
}

fn spawn_acceptor(listener: TcpListener, events: mpsc::Sender<Event>, stop: Arc<AtomicBool>) -> Result<()> {
    listener.set_nonblocking(true)?;
    thread::spawn(move || {
        let mut next = 0;
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    log::info!("connection {next} from {peer}");
                    if stream.set_nonblocking(false).is_err() || events.send(Event::Connected(next, stream)).is_err() {
                        return;
                    }
                    next += 1;
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    thread::sleep(Duration::from_millis(10));
                }
            }
        }
    });
    Ok(())
}

fn drop_conn(conns: &mut BTreeMap<usize, Conn>, id: usize) {
    if let Some(c) = conns.remove(&id) {
        let _ = c.writer.get_ref().shutdown(Shutdown::Both);
    }
}

/// Drives `server` over TCP until training finishes. Each connection becomes
/// bound to the client id it registers; a connection whose first message is
/// rejected is dropped without disturbing the run.
pub fn serve(listener: TcpListener, mut server: ServerState) -> Result<ServerState> {
    let (tx, rx) = mpsc::channel();
    let stop = Arc::new(AtomicBool::new(false));
    spawn_acceptor(listener, tx.clone(), stop.clone())?;
    let mut conns: BTreeMap<usize, Conn> = BTreeMap::new();
    let mut bound: BTreeMap<u32, usize> = BTreeMap::new();
    let result = loop {
        if server.is_done() {
            break Ok(());
        }
        let event = rx.recv().expect("acceptor holds a sender");
        match event {
            Event::Connected(id, stream) => match stream.try_clone() {
                Ok(read_half) => {
                    let _ = stream.set_nodelay(true);
                    spawn_reader(id, read_half, tx.clone());
                    conns.insert(
                        id,
                        Conn {
                            writer: BufWriter::new(stream),
                            client: None,
                        },
                    );
                }
                Err(e) => log::warn!("dropping connection {id}: {e}"),
            },
            Event::Closed(id, err) => {
                let client = conns.get(&id).and_then(|c| c.client);
                drop_conn(&mut conns, id);
                if let Some(client) = client {
                    break Err(match err {
                        Some(e) => e,
                        None => TransportError::Closed(format!("by client {client} before training finished")),
                    });
                }
            }
            Event::Frame(id, msg) => {
                let Some(conn) = conns.get(&id) else { continue };
                let sender = msg.client_id();
                match (conn.client, sender) {
                    (Some(c), Some(s)) if c == s => {}
                    (None, Some(s)) if matches!(msg, FedMessage::Register { .. }) && !bound.contains_key(&s) => {}
                    (bound_to, _) => {
                        log::warn!("connection {id} sent an unexpected {}; dropping it", msg.kind());
                        drop_conn(&mut conns, id);
                        if bound_to.is_some() {
                            break Err(TransportError::Unexpected(msg.kind()));
                        }
                        continue;
                    }
                }
                let registering = conn.client.is_none();
                let out = match server.handle(msg) {
                    Ok(out) => out,
                    Err(e) if registering => {
                        log::warn!("rejecting connection {id}: {e}");
                        drop_conn(&mut conns, id);
                        continue;
                    }
                    Err(e) => break Err(e.into()),
                };
                if registering {
                    let s = sender.expect("register carries an id");
                    conns.get_mut(&id).expect("live connection").client = Some(s);
                    bound.insert(s, id);
                }
                let mut failed = None;
                for o in out {
                    let Some(conn) = bound.get(&o.to).and_then(|c| conns.get_mut(c)) else {
                        failed = Some(TransportError::Closed(format!("no connection for client {}", o.to)));
                        break;
                    };
                    if let Err(e) = write_frame(&mut conn.writer, &o.msg) {
                        failed = Some(e);
                        break;
                    }
                }
                if let Some(e) = failed {
                    break Err(e);
                }
            }
        }
    };
    stop.store(true, Ordering::Relaxed);
    for (_, c) in conns {
        let _ = c.writer.get_ref().shutdown(Shutdown::Write);
    }
    result.map(|()| server)
}

/// Connects to `addr`, retrying until `timeout` elapses.
fn dial(addr: impl ToSocketAddrs + Copy, timeout: Duration) -> Result<TcpStream> {
    let start = Instant::now();
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if start.elapsed() < timeout => {
                log::debug!("connect failed ({e}), retrying");
                thread::sleep(Duration::from_millis(100));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Runs `client` against the server at `addr` until it finishes.
pub fn connect(addr: impl ToSocketAddrs + Copy, mut client: ClientState, timeout: Duration) -> Result<ClientState> {
    let stream = dial(addr, timeout)?;
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    for msg in client.start()? {
        write_frame(&mut writer, &msg)?;
    }
    while !client.is_finished() {
        let msg = read_frame(&mut reader)?
            .ok_or_else(|| TransportError::Closed(format!("by the server during round {}", client.round())))?;
        for reply in client.handle(msg)? {
            write_frame(&mut writer, &reply)?;
        }
    }
    Ok(client)
}
