use crate::corpus::Vocabulary;
use crate::model::ModelConfig;

/// Everything that crosses the network. Weight and gradient payloads are raw
/// flat arrays; their layout follows from the `ModelConfig` in `GlobalInit`.
#[derive(Debug, Clone, PartialEq)]
pub enum FedMessage {
    Register {
        client_id: u32,
    },
    VocabUpload {
        client_id: u32,
        vocab: Vocabulary,
    },
    GlobalInit {
        vocab: Vocabulary,
        config: ModelConfig,
        weights: Vec<f64>,
    },
    GradientUpload {
        client_id: u32,
        round: u32,
        n_samples: u32,
        gradient: Vec<f64>,
    },
    GlobalUpdate {
        round: u32,
        proceed: bool,
        weights: Vec<f64>,
    },
    Done {
        round: u32,
    },
}

impl FedMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            FedMessage::Register { .. } => "Register",
            FedMessage::VocabUpload { .. } => "VocabUpload",
            FedMessage::GlobalInit { .. } => "GlobalInit",
            FedMessage::GradientUpload { .. } => "GradientUpload",
            FedMessage::GlobalUpdate { .. } => "GlobalUpdate",
            FedMessage::Done { .. } => "Done",
        }
    }

    /// Sender id of client-to-server messages.
    pub fn client_id(&self) -> Option<u32> {
        match self {
            FedMessage::Register { client_id }
            | FedMessage::VocabUpload { client_id, .. }
            | FedMessage::GradientUpload { client_id, .. } => Some(*client_id),
            _ => None,
        }
    }
}
