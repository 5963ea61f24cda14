use std::collections::{BTreeMap, VecDeque};
use std::sync::mpsc;
use std::thread;

use super::codec::{decode_frame, encode_frame};
use super::{Result, TransportError};
use crate::fedcore::{ClientState, FedMessage, ServerState};

/// Final states of a finished run.
#[derive(Debug, Clone)]
pub struct Federation {
    pub server: ServerState,
    /// Ordered by client id.
    pub clients: Vec<ClientState>,
}

fn through_wire(msg: &FedMessage) -> Result<FedMessage> {
    Ok(decode_frame(&encode_frame(msg))?)
}

fn index_clients(server: &ServerState, clients: Vec<ClientState>) -> Result<BTreeMap<u32, ClientState>> {
    let n = clients.len();
    let map: BTreeMap<u32, ClientState> = clients.into_iter().map(|c| (c.id(), c)).collect();
    if map.len() != n || n != server.clients() as usize {
        return Err(TransportError::Closed(format!(
            "expected {} clients with distinct ids, got {n}",
            server.clients()
        )));
    }
    Ok(map)
}

/// Runs the whole federation on the calling thread, delivering messages in
/// FIFO order. Every message is encoded and decoded on the way.
pub fn run_sequential(mut server: ServerState, clients: Vec<ClientState>) -> Result<Federation> {
    let mut clients = index_clients(&server, clients)?;
    let mut queue = VecDeque::new();
    for client in clients.values_mut() {
        queue.extend(client.start()?);
    }
    while let Some(msg) = queue.pop_front() {
        for out in server.handle(through_wire(&msg)?)? {
            let client = clients
                .get_mut(&out.to)
                .ok_or_else(|| TransportError::Closed(format!("no client {}", out.to)))?;
            queue.extend(client.handle(through_wire(&out.msg)?)?);
        }
    }
    if !server.is_done() || clients.values().any(|c| !c.is_finished()) {
        return Err(TransportError::Closed("the federation stalled before finishing".into()));
    }
    Ok(Federation {
        server,
        clients: clients.into_values().collect(),
    })
}

enum Event {
    Frame(Vec<u8>),
    Failed(u32),
}

fn client_loop(
    mut client: ClientState,
    to_server: &mpsc::Sender<Event>,
    from_server: mpsc::Receiver<Vec<u8>>,
) -> Result<ClientState> {
    for msg in client.start()? {
        let _ = to_server.send(Event::Frame(encode_frame(&msg)));
    }
    while !client.is_finished() {
        let frame = from_server
            .recv()
            .map_err(|_| TransportError::Closed("by the server".into()))?;
        for reply in client.handle(decode_frame(&frame)?)? {
            let _ = to_server.send(Event::Frame(encode_frame(&reply)));
        }
    }
    Ok(client)
}

/// Runs every client on its own thread, exchanging encoded frames with the
/// server over channels.
pub fn run_threaded(mut server: ServerState, clients: Vec<ClientState>) -> Result<Federation> {
    let clients = index_clients(&server, clients)?;
    let (event_tx, event_rx) = mpsc::channel::<Event>();
    thread::scope(|scope| {
        let mut outboxes = BTreeMap::new();
        let mut handles = Vec::new();
        for (id, client) in clients {
            let (tx, rx) = mpsc::channel();
            outboxes.insert(id, tx);
            let events = event_tx.clone();
            handles.push(scope.spawn(move || {
                let result = client_loop(client, &events, rx);
                if result.is_err() {
                    let _ = events.send(Event::Failed(id));
                }
                result
            }));
        }
        drop(event_tx);

        let mut failure = None;
        let mut client_failed = false;
        while !server.is_done() {
            let Ok(event) = event_rx.recv() else {
                failure = Some(TransportError::Closed("by every client".into()));
                break;
            };
            let frame = match event {
                Event::Frame(f) => f,
                Event::Failed(id) => {
                    log::error!("client {id} failed");
                    client_failed = true;
                    break;
                }
            };
            let outcome = decode_frame(&frame)
                .map_err(TransportError::from)
                .and_then(|msg| server.handle(msg).map_err(TransportError::from));
            match outcome {
                Ok(out) => {
                    for o in out {
                        if let Some(tx) = outboxes.get(&o.to) {
                            let _ = tx.send(encode_frame(&o.msg));
                        }
                    }
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        drop(outboxes);

        let mut finished = Vec::new();
        let mut client_error = None;
        for h in handles {
            match h.join().expect("client thread panicked") {
                Ok(c) => finished.push(c),
                Err(e) => client_error = client_error.or(Some(e)),
            }
        }
        let error = if client_failed { client_error.or(failure) } else { failure.or(client_error) };
        if let Some(e) = error {
            return Err(e);
        }
        Ok(Federation {
            server,
            clients: finished,
        })
    })
}
