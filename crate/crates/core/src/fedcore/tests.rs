use proptest::prelude::*;

use super::*;
use crate::corpus::{build_vocabulary, BowCorpus};
use crate::model::{init_weights, ModelConfig};
use crate::synthgen::{generate_dataset, SynthConfig};
use crate::transport::{run_sequential, run_threaded};

fn toy_corpora() -> Vec<BowCorpus> {
    let docs = [
        vec![vec!["apple", "pear", "apple"], vec!["pear", "fig"], vec!["fig", "fig", "apple"]],
        vec![vec!["kiwi", "pear"], vec!["kiwi", "lime", "lime"], vec!["pear", "kiwi"], vec!["lime"]],
    ];
    docs.iter()
        .map(|d| BowCorpus::from_tokens(build_vocabulary(d, 1).unwrap(), d))
        .collect()
}

fn small_synthetic(nodes: usize) -> Vec<BowCorpus> {
    let cfg = SynthConfig {
        nodes,
        topics: 2 + 2 * nodes,
        shared_topics: 2,
        vocab_size: 30,
        docs_train: 24,
        docs_valid: 4,
        len_min: 10,
        len_max: 20,
        alpha: 0.5,
        eta: 0.05,
        seed: 3,
    };
    generate_dataset(&cfg).unwrap().train
}

fn model() -> ModelConfig {
    let mut m = ModelConfig::new(3, 0);
    m.hidden_sizes = vec![8, 8];
    m.seed = 11;
    m
}

fn train_cfg(rounds: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        batch_size: 5,
        stop: StopRule {
            max_rounds: rounds,
            eps: 1e-12,
            patience: 3,
        },
        seed: 21,
    }
}

fn parties(corpora: &[BowCorpus], train: &TrainConfig) -> (ServerState, Vec<ClientState>) {
    parties_with(corpora, train, model())
}

fn parties_with(corpora: &[BowCorpus], train: &TrainConfig, model: ModelConfig) -> (ServerState, Vec<ClientState>) {
    let server = ServerState::new(ServerConfig {
        clients: corpora.len() as u32,
        model,
        learning_rate: train.learning_rate,
        stop: train.stop,
    })
    .unwrap();
    let clients = corpora
        .iter()
        .enumerate()
        .map(|(i, c)| {
            ClientState::new(
                ClientConfig {
                    client_id: i as u32,
                    batch_size: train.batch_size,
                    seed: train.seed,
                },
                c.clone(),
            )
            .unwrap()
        })
        .collect();
    (server, clients)
}

/// Server that has finished vocabulary consensus, plus the clients' first uploads.
fn server_in_training(corpora: &[BowCorpus]) -> (ServerState, Vec<ClientState>, Vec<FedMessage>) {
    let (mut server, mut clients) = parties(corpora, &train_cfg(10));
    let mut uploads = Vec::new();
    for c in &mut clients {
        for m in c.start().unwrap() {
            for out in server.handle(m).unwrap() {
                uploads.extend(clients_reply(out));
            }
        }
    }
    let mut first = Vec::new();
    for (i, c) in clients.iter_mut().enumerate() {
        first.extend(c.handle(uploads[i].clone()).unwrap());
    }
    (server, clients, first)
}

fn clients_reply(out: Outbound) -> Option<FedMessage> {
    Some(out.msg)
}

#[test]
fn vocabulary_consensus_broadcasts_the_union() {
    let corpora = toy_corpora();
    let (mut server, mut clients) = parties(&corpora, &train_cfg(5));
    let mut inits = Vec::new();
    for c in &mut clients {
        for m in c.start().unwrap() {
            inits.extend(server.handle(m).unwrap());
        }
    }
    assert_eq!(inits.len(), 2);
    assert_eq!(server.phase(), ServerPhase::Training);
    for (i, out) in inits.iter().enumerate() {
        assert_eq!(out.to, i as u32);
        let FedMessage::GlobalInit { vocab, config, weights } = &out.msg else {
            panic!("expected GlobalInit");
        };
        assert_eq!(vocab.terms(), ["apple", "fig", "kiwi", "lime", "pear"]);
        assert_eq!(vocab.freq("pear"), Some(4.0));
        assert_eq!(config.vocab_size, 5);
        assert_eq!(weights, init_weights(config).unwrap().data());
    }
}

#[test]
fn barrier_waits_for_every_client() {
    let corpora = small_synthetic(3);
    let (mut server, _, uploads) = server_in_training(&corpora);
    assert!(server.handle(uploads[2].clone()).unwrap().is_empty());
    assert!(server.handle(uploads[0].clone()).unwrap().is_empty());
    assert_eq!(server.round(), 0);
    assert_eq!(server.pending_clients(), [0, 2]);
    let out = server.handle(uploads[1].clone()).unwrap();
    assert_eq!(server.round(), 1);
    assert_eq!(out.len(), 3);
    assert!(out.iter().all(|o| matches!(o.msg, FedMessage::GlobalUpdate { round: 1, proceed: true, .. })));
    assert!(server.pending_clients().is_empty());
}

#[test]
fn rejected_messages_leave_the_server_unchanged() {
    let corpora = small_synthetic(2);
    let (mut server, _, uploads) = server_in_training(&corpora);
    server.handle(uploads[0].clone()).unwrap();
    let before = server.clone();
    let cases: Vec<(FedMessage, fn(&FedError) -> bool)> = vec![
        (uploads[0].clone(), |e| matches!(e, FedError::Protocol(ProtocolError::DuplicateGradient { client: 0, round: 0 }))),
        (FedMessage::Register { client_id: 1 }, |e| matches!(e, FedError::Protocol(ProtocolError::WrongPhase { .. }))),
        (FedMessage::Done { round: 0 }, |e| matches!(e, FedError::Protocol(ProtocolError::Invalid(_)))),
        (
            FedMessage::GradientUpload { client_id: 5, round: 0, n_samples: 1, gradient: vec![] },
            |e| matches!(e, FedError::Protocol(ProtocolError::UnknownClient(5))),
        ),
        (
            FedMessage::GradientUpload { client_id: 1, round: 3, n_samples: 1, gradient: vec![] },
            |e| matches!(e, FedError::Protocol(ProtocolError::RoundMismatch { expected: 0, got: 3 })),
        ),
        (
            FedMessage::GradientUpload { client_id: 1, round: 0, n_samples: 1, gradient: vec![0.0; 3] },
            |e| matches!(e, FedError::Protocol(ProtocolError::Layout(_))),
        ),
    ];
    for (msg, check) in cases {
        let err = server.handle(msg).unwrap_err();
        assert!(check(&err), "unexpected error {err:?}");
        assert_eq!(server, before);
    }
}

#[test]
fn gradient_before_consensus_is_a_phase_error() {
    let (mut server, _) = parties(&toy_corpora(), &train_cfg(5));
    let err = server
        .handle(FedMessage::GradientUpload { client_id: 0, round: 0, n_samples: 1, gradient: vec![] })
        .unwrap_err();
    assert!(matches!(err, FedError::Protocol(ProtocolError::WrongPhase { role: "server", .. })));
    let err = server
        .handle(FedMessage::VocabUpload { client_id: 0, vocab: toy_corpora()[0].vocab().clone() })
        .unwrap_err();
    assert!(matches!(err, FedError::Protocol(ProtocolError::NotRegistered(0))));
    server.handle(FedMessage::Register { client_id: 0 }).unwrap();
    assert!(matches!(
        server.handle(FedMessage::Register { client_id: 0 }),
        Err(FedError::Protocol(ProtocolError::DuplicateRegistration(0)))
    ));
}

#[test]
fn server_config_is_validated() {
    let mut cfg = ServerConfig { clients: 2, model: model(), learning_rate: 0.1, stop: StopRule::default() };
    assert!(ServerState::new(cfg.clone()).is_ok());
    cfg.stop.max_rounds = 0;
    assert!(matches!(ServerState::new(cfg.clone()), Err(FedError::Config(_))));
    cfg.stop.max_rounds = 1;
    cfg.clients = 0;
    assert!(ServerState::new(cfg.clone()).is_err());
    cfg.clients = 1;
    cfg.learning_rate = 0.0;
    assert!(ServerState::new(cfg).is_err());
}

#[test]
fn client_rejects_out_of_order_updates() {
    let corpora = small_synthetic(2);
    let (_, clients, _) = server_in_training(&corpora);
    let mut client = clients[0].clone();
    let before = client.clone();
    let w = client.weights().unwrap().data().to_vec();
    let err = client.handle(FedMessage::GlobalUpdate { round: 2, proceed: true, weights: w.clone() }).unwrap_err();
    assert!(matches!(err, FedError::Protocol(ProtocolError::RoundMismatch { expected: 1, got: 2 })));
    let err = client.handle(FedMessage::GlobalUpdate { round: 1, proceed: true, weights: w[1..].to_vec() }).unwrap_err();
    assert!(matches!(err, FedError::Protocol(ProtocolError::Layout(_))));
    assert!(matches!(client.handle(FedMessage::Done { round: 0 }), Err(FedError::Protocol(ProtocolError::WrongPhase { .. }))));
    assert_eq!(client, before);
    assert!(client.start().is_err());
}

#[test]
fn federated_matches_centralized_and_replays() {
    let corpora = small_synthetic(3);
    let train = train_cfg(12);
    let mut m = model();
    m.batch_norm = false;
    let central = run_centralized(&corpora, &m, &train).unwrap();
    let (server, clients) = parties_with(&corpora, &train, m.clone());
    let fed = run_sequential(server, clients).unwrap();
    let w = fed.server.weights().unwrap();
    assert_eq!(fed.server.round(), 12);
    assert_eq!(central.rounds, 12);
    let max_rel = w
        .data()
        .iter()
        .zip(central.weights.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(max_rel < 1e-12, "max deviation {max_rel}");
    for c in &fed.clients {
        assert_eq!(c.weights().unwrap(), w);
        assert!(c.is_finished());
        assert_eq!(c.losses().len(), 12);
    }

    let (server, clients) = parties_with(&corpora, &train, m);
    let again = run_threaded(server, clients).unwrap();
    assert_eq!(again.server, fed.server);
}

#[test]
fn zero_rounds_returns_initial_weights() {
    let corpora = small_synthetic(2);
    let run = run_centralized(&corpora, &model(), &train_cfg(0)).unwrap();
    assert_eq!(run.rounds, 0);
    assert_eq!(run.weights, init_weights(&run.config).unwrap());
}

#[test]
fn convergence_stops_early() {
    let corpora = small_synthetic(2);
    let mut train = train_cfg(1000);
    train.stop.eps = 1.0;
    let (server, clients) = parties(&corpora, &train);
    let fed = run_sequential(server, clients).unwrap();
    assert_eq!(fed.server.round(), 3);
    assert_eq!(run_centralized(&corpora, &model(), &train).unwrap().rounds, 3);
}

#[test]
fn local_training_reduces_validation_loss() {
    let corpus = &small_synthetic(1)[0];
    let cfg = LocalConfig {
        learning_rate: 0.02,
        batch_size: 6,
        max_epochs: 30,
        patience: 30,
        valid_fraction: 0.25,
        seed: 4,
    };
    let run = train_local(corpus, &model(), &cfg).unwrap();
    assert_eq!(run.epochs, 30);
    assert!(run.valid_losses.iter().copied().fold(f64::INFINITY, f64::min) < run.valid_losses[0]);
    assert!(run.train_losses.last().unwrap() < &run.train_losses[0]);
    let again = train_local(corpus, &model(), &cfg).unwrap();
    assert_eq!(again.weights, run.weights);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn arrival_order_does_not_matter(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let corpora = small_synthetic(4);
        let (reference, _, uploads) = server_in_training(&corpora);
        let mut a = reference.clone();
        let mut b = reference;
        let mut out_a = Vec::new();
        let mut out_b = Vec::new();
        for i in 0..4 {
            out_a.extend(a.handle(uploads[i].clone()).unwrap());
            out_b.extend(b.handle(uploads[perm[i]].clone()).unwrap());
        }
        prop_assert_eq!(out_a, out_b);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn aggregation_is_a_weighted_mean(
        rows in proptest::collection::vec((1usize..50, proptest::collection::vec(-10.0..10.0f64, 4)), 1..6)
    ) {
        let layout = std::sync::Arc::new(crate::model::Layout::flat(4));
        let grads: Vec<_> = rows
            .iter()
            .map(|(n, g)| crate::model::GradientVector::from_vec(layout.clone(), g.clone(), *n).unwrap())
            .collect();
        let agg = aggregate(&grads).unwrap();
        let total: usize = rows.iter().map(|r| r.0).sum();
        prop_assert_eq!(agg.n_samples(), total);
        for j in 0..4 {
            let expected: f64 = rows.iter().map(|(n, g)| *n as f64 * g[j]).sum::<f64>() / total as f64;
            prop_assert!((agg.data()[j] - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }
}
