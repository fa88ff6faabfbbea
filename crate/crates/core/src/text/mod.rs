//! From raw documents to the representation space: tokenization, TF-IDF
//! features, and an optional reconstruction autoencoder on top of them.

mod autoencoder;
mod tfidf;

pub use autoencoder::{encode, pretrain_autoencoder, PretrainConfig, PretrainOutcome};
pub use tfidf::{build_vocab, tokenize, TfidfModel, Vocabulary, DEFAULT_MAX_FEATURES};
