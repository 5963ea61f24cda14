//! Federated training of neural topic models.
//!
//! `L` clients and one server jointly train a single ProdLDA-family topic
//! model. The clients only ever reveal their vocabularies and per-round
//! mini-batch gradients; the server merges the vocabularies, owns the global
//! weights and applies a sample-weighted gradient average every round.
//!
//! Module map:
//!
//! * [`corpus`]: vocabularies, bag-of-words corpora, text file formats.
//! * [`synthgen`]: multi-node synthetic corpora drawn from the LDA generative model.
//! * [`model`]: ProdLDA / CombinedTM forward pass, ELBO, analytic gradients.
//! * [`fedcore`]: protocol state machines, aggregation, centralized and local training.
//! * [`transport`]: framed binary codec, in-process and TCP drivers.
//! * [`eval`]: Hellinger similarity, DSS, TSS, word mover's distance, AMWMD.

pub mod corpus;
pub mod eval;
pub mod fedcore;
pub mod matrix_io;
pub mod model;
pub mod rng;
pub mod synthgen;
pub mod transport;
pub mod wire;

pub use corpus::{BowCorpus, BowDocument, Vocabulary};
pub use fedcore::{ClientState, FedMessage, ServerState};
pub use model::{GradientVector, ModelConfig, ModelWeights};
