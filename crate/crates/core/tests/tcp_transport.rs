use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use fedtopic::corpus::BowCorpus;
use fedtopic::fedcore::{ClientConfig, ClientState, FedMessage, ServerConfig, ServerState, StopRule};
use fedtopic::model::ModelConfig;
use fedtopic::synthgen::{generate_dataset, SynthConfig};
use fedtopic::transport::{connect, run_sequential, serve, write_frame, TransportError};

const TIMEOUT: Duration = Duration::from_secs(30);

fn corpora() -> Vec<BowCorpus> {
    generate_dataset(&SynthConfig {
        nodes: 3,
        topics: 5,
        shared_topics: 2,
        vocab_size: 60,
        docs_train: 30,
        docs_valid: 2,
        len_min: 20,
        len_max: 40,
        alpha: 0.5,
        eta: 0.05,
        seed: 17,
    })
    .unwrap()
    .train
}

fn server(clients: u32) -> ServerState {
    let model = ModelConfig { hidden_sizes: vec![10], seed: 4, ..ModelConfig::new(5, 0) };
    ServerState::new(ServerConfig {
        clients,
        model,
        learning_rate: 0.05,
        stop: StopRule { max_rounds: 8, eps: 1e-12, patience: 2 },
    })
    .unwrap()
}

fn client(id: u32, corpus: &BowCorpus) -> ClientState {
    ClientState::new(ClientConfig { client_id: id, batch_size: 7, seed: 9 }, corpus.clone()).unwrap()
}

#[test]
fn tcp_run_is_bitwise_identical_to_inproc() {
    let data = corpora();
    let reference = run_sequential(server(3), data.iter().enumerate().map(|(i, c)| client(i as u32, c)).collect()).unwrap();

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (served, finished) = thread::scope(|s| {
        let handles: Vec<_> = data
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let cl = client(i as u32, c);
                s.spawn(move || connect(addr, cl, TIMEOUT).unwrap())
            })
            .collect();
        let served = serve(listener, server(3)).unwrap();
        let finished: Vec<ClientState> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        (served, finished)
    });

    let a = served.weights().unwrap().data();
    let b = reference.server.weights().unwrap().data();
    assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(served, reference.server);
    for c in &finished {
        assert!(c.is_finished());
        assert_eq!(c.weights().unwrap(), served.weights().unwrap());
    }
}

#[test]
fn stray_connections_are_dropped_without_disturbing_the_run() {
    let data = corpora();
    let reference = run_sequential(server(2), data[..2].iter().enumerate().map(|(i, c)| client(i as u32, c)).collect()).unwrap();

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let served = thread::scope(|s| {
        let garbage = s.spawn(move || {
            let mut stream = TcpStream::connect(addr).unwrap();
            stream.write_all(&[3, 0, 0, 0, 0x7f, 1, 2, 3]).unwrap();
        });
        let stranger = client(7, &data[2]);
        let unknown = s.spawn(move || connect(addr, stranger, TIMEOUT));
        let handles: Vec<_> = data[..2]
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let cl = client(i as u32, c);
                s.spawn(move || {
                    thread::sleep(Duration::from_millis(300));
                    connect(addr, cl, TIMEOUT).unwrap()
                })
            })
            .collect();
        let served = serve(listener, server(2)).unwrap();
        for h in handles {
            h.join().unwrap();
        }
        garbage.join().unwrap();
        assert!(unknown.join().unwrap().is_err());
        served
    });
    assert_eq!(served, reference.server);
}

#[test]
fn losing_a_registered_client_fails_the_run() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let quitter = thread::spawn(move || {
        let mut stream = TcpStream::connect(addr).unwrap();
        write_frame(&mut stream, &FedMessage::Register { client_id: 0 }).unwrap();
        thread::sleep(Duration::from_millis(200));
    });
    let err = serve(listener, server(1)).unwrap_err();
    quitter.join().unwrap();
    assert!(matches!(err, TransportError::Closed(_)), "{err:?}");
}
