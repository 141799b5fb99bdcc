//! Reverse-proxy policy enforcement point for trust tokens.
//!
//! Every request must carry a `User-Key-Signatures` header. The gateway
//! decodes it, verifies each attestation against its directory of server
//! keys, records the resulting score, and either denies the request with a
//! 403 or forwards it to the origin. Successful upstream responses come back
//! with a `User-Key-Signature-Grant` header holding this gateway's signature
//! over the caller's public key.

pub mod config;
pub mod decision;
pub mod gateway;
pub mod key_store;
pub mod policy;
pub mod score_table;
pub mod server;

pub use config::GatewayConfig;
pub use decision::{DecisionLog, DecisionRecord};
pub use gateway::{Gateway, GatewayError, SCORE_HEADER};
pub use policy::{DenyRule, GatewayPolicy, Outcome};
pub use score_table::{render_snapshot, ScoreTable};
pub use server::{router, GatewayHandle};
