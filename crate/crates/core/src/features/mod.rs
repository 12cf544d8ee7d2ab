//! Frame-level user linguistic streams, system token sequences, and the
//! token vocabulary.

pub mod streams;
pub mod vocab;

pub use streams::{system_token_stream, user_linguistic_stream, EmptyResponse, SystemTokens, TimedToken, ASR_DELAY_MS};
pub use vocab::{merge_plan, merge_vocab, VocabError, VocabMap, NONE, SIL, SPECIALS, SPECIAL_TOKENS, UNSPEC, WAIT};
