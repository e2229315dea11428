//! Blockchain-backed visual homing for robot teams.
//!
//! Robots publish signed summaries of what they see as transactions on a
//! small proof-of-work ledger. A robot that cannot see its goal reads the
//! latest committed views, finds a chain of landmarks shared between
//! teammates, and homes along it.
//!
//! Module map:
//! - [`types`], [`codec`], [`chain`], [`ledger`]: canonical encoding, hashing,
//!   mining, validation, fork choice and the latest-view index.
//! - [`acl`]: identities, the genesis ACL, signatures and delivery receipts.
//! - [`consensus`]: the per-node propose/vote/commit state machine.
//! - [`world`], [`planner`]: geometry, view construction and landmark-chain planning.
//! - [`netsim`]: the deterministic discrete-event simulator, adversaries and benchmarks.
//! - [`vectors`]: golden hash and signature vectors.

pub mod acl;
pub mod chain;
pub mod codec;
pub mod consensus;
pub mod error;
pub mod ledger;
pub mod netsim;
pub mod planner;
pub mod types;
pub mod vectors;
pub mod world;

pub use acl::{sign_tx, verify_tx, Acl, AclEntry, DeliveryReceipt, RobotIdentity, Role, TxVerdict};
pub use chain::{fork_choice, mine_block, verify_block, verify_chain, BlockFault, ChainFault, ChainRules, ForkChoice};
pub use codec::{Hash512, PublicKeyBytes, SignatureBytes};
pub use ledger::{LatestView, LedgerState};
pub use types::{block_hash, canonical_tx_bytes, tx_digest, Block, BlockHeader, FovTransaction, LandmarkId, PanoramicView};
