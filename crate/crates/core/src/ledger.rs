//! Hash-linked ledger: blocks, canonical serialization and chain validation.
//!
//! A block commits to its height, the previous block's hash, an ordered list
//! of decided transactions and a timestamp. The commitment is a SHA-256
//! digest over a canonical, length-prefixed, big-endian encoding, so any
//! single-byte change to a serialized block is detectable and attributable
//! to that block's height.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use std::fmt;
use thiserror::Error;

/// Length in bytes of every digest used by the ledger.
pub const DIGEST_LEN: usize = 32;

/// A SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    /// The all-zero digest, used as the previous-hash of the genesis block.
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Digest, CodecError> {
        let bytes = hex::decode(s).map_err(|_| CodecError::BadDigestHex(s.to_string()))?;
        let arr: [u8; DIGEST_LEN] = bytes
            .try_into()
            .map_err(|_| CodecError::BadDigestHex(s.to_string()))?;
        Ok(Digest(arr))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        self.to_hex().serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(de)?;
        Digest::from_hex(&raw).map_err(serde::de::Error::custom)
    }
}

/// Computes the SHA-256 digest of `bytes`.
pub fn digest(bytes: &[u8]) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    Digest(hasher.finalize().into())
}

/// Opaque 256-bit transaction identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TransactionId(pub Digest);

impl fmt::Display for TransactionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Debug for TransactionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TransactionId({})", self.0)
    }
}

/// A decided transaction as recorded in a block: its id plus the final
/// verdict it received.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxRecord {
    pub id: TransactionId,
    pub accepted: bool,
}

/// One block of the hash-linked chain.
///
/// `block_hash` is the digest of the canonical encoding of the other four
/// fields; see [`Block::compute_hash`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub transactions: Vec<TxRecord>,
    pub timestamp: u64,
    pub block_hash: Digest,
}

/// Appends one length-prefixed field to a canonical encoding.
fn put_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn encode_transactions(transactions: &[TxRecord]) -> Vec<u8> {
    let mut payload = Vec::with_capacity(4 + transactions.len() * (DIGEST_LEN + 1));
    payload.extend_from_slice(&(transactions.len() as u32).to_be_bytes());
    for tx in transactions {
        payload.extend_from_slice(&tx.id.0 .0);
        payload.push(tx.accepted as u8);
    }
    payload
}

impl Block {
    /// Canonical encoding of the hashed fields, in declared order:
    /// height, previous hash, transactions, timestamp. Each field is
    /// length-prefixed with a big-endian `u32`; integers are big-endian.
    fn hash_input(
        height: u64,
        prev_hash: &Digest,
        transactions: &[TxRecord],
        timestamp: u64,
    ) -> Vec<u8> {
        let mut out = Vec::new();
        put_field(&mut out, &height.to_be_bytes());
        put_field(&mut out, &prev_hash.0);
        put_field(&mut out, &encode_transactions(transactions));
        put_field(&mut out, &timestamp.to_be_bytes());
        out
    }

    /// Builds a block, computing its hash from the other fields.
    pub fn new(
        height: u64,
        prev_hash: Digest,
        transactions: Vec<TxRecord>,
        timestamp: u64,
    ) -> Block {
        let block_hash = digest(&Self::hash_input(
            height,
            &prev_hash,
            &transactions,
            timestamp,
        ));
        Block {
            height,
            prev_hash,
            transactions,
            timestamp,
            block_hash,
        }
    }

    /// Recomputes the hash this block *should* carry given its current
    /// field values.
    pub fn compute_hash(&self) -> Digest {
        digest(&Self::hash_input(
            self.height,
            &self.prev_hash,
            &self.transactions,
            self.timestamp,
        ))
    }

    /// Canonical byte encoding: the hashed fields followed by the stored
    /// block hash as a fifth length-prefixed field.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Self::hash_input(
            self.height,
            &self.prev_hash,
            &self.transactions,
            self.timestamp,
        );
        put_field(&mut out, &self.block_hash.0);
        out
    }

    /// Decodes a block from its canonical encoding.
    ///
    /// Parsing is purely structural: stored hashes are *not* checked here,
    /// so a tampered block still parses when its framing is intact and the
    /// semantic damage is surfaced by [`Chain::validate`] instead.
    pub fn from_bytes(bytes: &[u8]) -> Result<Block, CodecError> {
        let mut cur = Cursor::new(bytes);
        let height = cur.read_fixed_field("height", 8)?;
        let height = u64::from_be_bytes(height.try_into().expect("8-byte field"));
        let prev_hash = Digest(
            cur.read_fixed_field("prev_hash", DIGEST_LEN)?
                .try_into()
                .expect("32-byte field"),
        );

        let tx_payload = cur.read_field("transactions")?;
        let mut txs = Cursor::new(tx_payload);
        let count = txs.read_u32("transaction count")? as usize;
        // The count byte is untrusted input: refuse it before allocating
        // record storage it cannot possibly fill.
        let needed = count.saturating_mul(DIGEST_LEN + 1);
        if txs.remaining() < needed {
            return Err(CodecError::UnexpectedEof {
                what: "transaction records",
                needed,
                available: txs.remaining(),
            });
        }
        let mut transactions = Vec::with_capacity(count);
        for _ in 0..count {
            let id = Digest(
                txs.read_exact("transaction id", DIGEST_LEN)?
                    .try_into()
                    .expect("32-byte id"),
            );
            let verdict = txs.read_exact("transaction verdict", 1)?[0];
            let accepted = match verdict {
                0 => false,
                1 => true,
                other => return Err(CodecError::InvalidVerdict(other)),
            };
            transactions.push(TxRecord {
                id: TransactionId(id),
                accepted,
            });
        }
        txs.finish("transactions")?;

        let timestamp = cur.read_fixed_field("timestamp", 8)?;
        let timestamp = u64::from_be_bytes(timestamp.try_into().expect("8-byte field"));
        let block_hash = Digest(
            cur.read_fixed_field("block_hash", DIGEST_LEN)?
                .try_into()
                .expect("32-byte field"),
        );
        cur.finish("block")?;

        Ok(Block {
            height,
            prev_hash,
            transactions,
            timestamp,
            block_hash,
        })
    }
}

/// Minimal byte-slice reader used by the canonical decoders.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn read_exact(&mut self, what: &'static str, n: usize) -> Result<&'a [u8], CodecError> {
        if self.bytes.len() - self.pos < n {
            return Err(CodecError::UnexpectedEof {
                what,
                needed: n,
                available: self.bytes.len() - self.pos,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_u32(&mut self, what: &'static str) -> Result<u32, CodecError> {
        let raw = self.read_exact(what, 4)?;
        Ok(u32::from_be_bytes(raw.try_into().expect("4 bytes")))
    }

    /// Reads one length-prefixed field.
    fn read_field(&mut self, what: &'static str) -> Result<&'a [u8], CodecError> {
        let len = self.read_u32(what)? as usize;
        self.read_exact(what, len)
    }

    /// Reads a length-prefixed field whose length must be exactly `expect`.
    fn read_fixed_field(
        &mut self,
        what: &'static str,
        expect: usize,
    ) -> Result<&'a [u8], CodecError> {
        let len = self.read_u32(what)? as usize;
        if len != expect {
            return Err(CodecError::BadFieldLength {
                what,
                expected: expect,
                found: len,
            });
        }
        self.read_exact(what, expect)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn finish(&self, what: &'static str) -> Result<(), CodecError> {
        if self.pos != self.bytes.len() {
            return Err(CodecError::TrailingBytes {
                what,
                extra: self.bytes.len() - self.pos,
            });
        }
        Ok(())
    }
}

/// Structural decoding failure for blocks and chain dumps.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unexpected end of input while reading {what}: needed {needed} bytes, {available} available")]
    UnexpectedEof {
        what: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("bad length for {what}: expected {expected} bytes, found {found}")]
    BadFieldLength {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{extra} trailing bytes after {what}")]
    TrailingBytes { what: &'static str, extra: usize },
    #[error("invalid verdict byte {0} (expected 0 or 1)")]
    InvalidVerdict(u8),
    #[error("invalid digest hex `{0}`")]
    BadDigestHex(String),
}

/// Failure to append a block to a chain.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("refusing to append a block with no transactions")]
    EmptyBlock,
    #[error("block timestamp {now} precedes chain tip timestamp {tip}")]
    StaleTimestamp { tip: u64, now: u64 },
}

/// What went wrong at a particular height during validation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainFault {
    #[error("stored block hash does not match the recomputed hash")]
    HashMismatch,
    #[error("prev_hash does not match the hash of the preceding block")]
    LinkMismatch,
    #[error("genesis prev_hash is not all-zero")]
    GenesisPrevHash,
    #[error("expected height {expected}, found {found}")]
    HeightMismatch { expected: u64, found: u64 },
    #[error("chain contains no blocks")]
    Empty,
    #[error("malformed block: {0}")]
    Malformed(CodecError),
}

/// Validation verdict: either the whole chain checks out, or the first
/// offending height together with the fault found there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainValidity {
    Valid,
    Invalid { height: u64, fault: ChainFault },
}

impl ChainValidity {
    pub fn is_valid(&self) -> bool {
        matches!(self, ChainValidity::Valid)
    }
}

/// An in-memory hash-linked chain. Always starts from a genesis block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    blocks: Vec<Block>,
}

impl Chain {
    /// Creates a chain holding only the genesis block: height 0, all-zero
    /// previous hash, no transactions, timestamp 0.
    pub fn new() -> Chain {
        Chain {
            blocks: vec![Block::new(0, Digest::ZERO, Vec::new(), 0)],
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// The most recently appended block.
    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always has genesis")
    }

    /// Returns a new chain extended by one block holding `transactions`,
    /// stamped `now`. The original chain is left untouched.
    ///
    /// Appending an empty transaction list or a timestamp older than the
    /// tip's is refused; appending to a valid chain always yields a valid
    /// chain.
    pub fn append_block(
        &self,
        transactions: Vec<TxRecord>,
        now: u64,
    ) -> Result<Chain, LedgerError> {
        if transactions.is_empty() {
            return Err(LedgerError::EmptyBlock);
        }
        let tip = self.tip();
        if now < tip.timestamp {
            return Err(LedgerError::StaleTimestamp {
                tip: tip.timestamp,
                now,
            });
        }
        let block = Block::new(tip.height + 1, tip.block_hash, transactions, now);
        let mut blocks = self.blocks.clone();
        blocks.push(block);
        Ok(Chain { blocks })
    }

    /// Checks structure, hashes and links, reporting the first bad height.
    ///
    /// Valid iff: heights run 0, 1, 2, ... from a genesis whose prev_hash is
    /// all-zero, every block's stored hash recomputes from its fields, and
    /// every block's prev_hash equals the preceding block's stored hash.
    pub fn validate(&self) -> ChainValidity {
        if self.blocks.is_empty() {
            return ChainValidity::Invalid {
                height: 0,
                fault: ChainFault::Empty,
            };
        }
        for (k, block) in self.blocks.iter().enumerate() {
            let expected = k as u64;
            if block.height != expected {
                return ChainValidity::Invalid {
                    height: expected,
                    fault: ChainFault::HeightMismatch {
                        expected,
                        found: block.height,
                    },
                };
            }
            if k == 0 {
                if block.prev_hash != Digest::ZERO {
                    return ChainValidity::Invalid {
                        height: 0,
                        fault: ChainFault::GenesisPrevHash,
                    };
                }
            } else if block.prev_hash != self.blocks[k - 1].block_hash {
                return ChainValidity::Invalid {
                    height: expected,
                    fault: ChainFault::LinkMismatch,
                };
            }
            if block.compute_hash() != block.block_hash {
                return ChainValidity::Invalid {
                    height: expected,
                    fault: ChainFault::HashMismatch,
                };
            }
        }
        ChainValidity::Valid
    }

    /// Canonical dump: a big-endian `u32` block count followed by each
    /// block's encoding as a length-prefixed frame, in height order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.blocks.len() as u32).to_be_bytes());
        for block in &self.blocks {
            put_field(&mut out, &block.to_bytes());
        }
        out
    }

    /// Decodes a dump produced by [`Chain::to_bytes`]. Structural damage is
    /// attributed to the index of the block frame it was found in.
    pub fn from_bytes(bytes: &[u8]) -> Result<Chain, ChainDecodeError> {
        let mut cur = Cursor::new(bytes);
        let count = cur
            .read_u32("block count")
            .map_err(|source| ChainDecodeError {
                block_index: 0,
                source,
            })?;
        // Every frame needs at least its 4-byte length prefix, which bounds
        // how much an untrusted count can make us pre-allocate.
        let mut blocks = Vec::with_capacity((count as usize).min(cur.remaining() / 4));
        for index in 0..count {
            let frame = cur
                .read_field("block frame")
                .map_err(|source| ChainDecodeError {
                    block_index: index as u64,
                    source,
                })?;
            let block = Block::from_bytes(frame).map_err(|source| ChainDecodeError {
                block_index: index as u64,
                source,
            })?;
            blocks.push(block);
        }
        cur.finish("chain dump")
            .map_err(|source| ChainDecodeError {
                block_index: count as u64,
                source,
            })?;
        Ok(Chain { blocks })
    }
}

impl Default for Chain {
    fn default() -> Self {
        Chain::new()
    }
}

/// A structural decode failure located at a block index within a dump.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("block {block_index}: {source}")]
pub struct ChainDecodeError {
    pub block_index: u64,
    pub source: CodecError,
}

/// Decodes and validates a chain dump in one step.
///
/// Decode failures are reported as [`ChainFault::Malformed`] at the height
/// of the offending block frame, so a flipped byte anywhere inside block
/// `k`'s frame surfaces at height `k` whether it breaks parsing or hashing.
pub fn validate_chain_bytes(bytes: &[u8]) -> ChainValidity {
    match Chain::from_bytes(bytes) {
        Ok(chain) => chain.validate(),
        Err(err) => ChainValidity::Invalid {
            height: err.block_index,
            fault: ChainFault::Malformed(err.source),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx_record(tag: u8, accepted: bool) -> TxRecord {
        TxRecord {
            id: TransactionId(digest(&[tag])),
            accepted,
        }
    }

    /// Chain of `n` appended blocks (heights 1..=n), two transactions each.
    fn sample_chain(n: usize) -> Chain {
        let mut chain = Chain::new();
        for k in 0..n {
            let txs = vec![
                tx_record(2 * k as u8, true),
                tx_record(2 * k as u8 + 1, k % 3 != 0),
            ];
            chain = chain.append_block(txs, k as u64).unwrap();
        }
        chain
    }

    #[test]
    fn sha256_known_answers() {
        assert_eq!(
            digest(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            digest(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn genesis_shape() {
        let chain = Chain::new();
        assert_eq!(chain.len(), 1);
        let genesis = chain.tip();
        assert_eq!(genesis.height, 0);
        assert_eq!(genesis.prev_hash, Digest::ZERO);
        assert!(genesis.transactions.is_empty());
        assert_eq!(genesis.timestamp, 0);
        assert_eq!(genesis.block_hash, genesis.compute_hash());
        assert!(chain.validate().is_valid());
    }

    #[test]
    fn append_links_and_stays_valid() {
        let chain = Chain::new();
        let extended = chain.append_block(vec![tx_record(1, true)], 5).unwrap();
        // Pure derivation: the original chain is untouched.
        assert_eq!(chain.len(), 1);
        assert_eq!(extended.len(), 2);
        assert_eq!(extended.tip().height, 1);
        assert_eq!(extended.tip().prev_hash, chain.tip().block_hash);
        assert!(extended.validate().is_valid());
    }

    #[test]
    fn append_refuses_empty_and_stale() {
        let chain = sample_chain(3);
        assert_eq!(
            chain.append_block(Vec::new(), 10),
            Err(LedgerError::EmptyBlock)
        );
        assert_eq!(
            chain.append_block(vec![tx_record(9, true)], 1),
            Err(LedgerError::StaleTimestamp { tip: 2, now: 1 })
        );
        // Equal timestamps are allowed.
        assert!(chain.append_block(vec![tx_record(9, true)], 2).is_ok());
    }

    #[test]
    fn tampered_verdict_is_caught_at_its_height() {
        let mut chain = sample_chain(5);
        chain.blocks[3].transactions[0].accepted = false;
        assert_eq!(
            chain.validate(),
            ChainValidity::Invalid {
                height: 3,
                fault: ChainFault::HashMismatch,
            }
        );
    }

    #[test]
    fn reordered_blocks_fail_at_the_earlier_height() {
        let mut chain = sample_chain(5);
        chain.blocks.swap(2, 4);
        match chain.validate() {
            ChainValidity::Invalid { height, .. } => assert_eq!(height, 2),
            v => panic!("expected invalid chain, got {v:?}"),
        }
    }

    #[test]
    fn broken_link_is_reported_where_it_breaks() {
        let mut chain = sample_chain(4);
        chain.blocks[2].prev_hash = digest(b"somewhere else");
        assert_eq!(
            chain.validate(),
            ChainValidity::Invalid {
                height: 2,
                fault: ChainFault::LinkMismatch,
            }
        );
    }

    #[test]
    fn block_bytes_round_trip() {
        let chain = sample_chain(4);
        for block in chain.blocks() {
            let bytes = block.to_bytes();
            let back = Block::from_bytes(&bytes).unwrap();
            assert_eq!(&back, block);
        }
    }

    #[test]
    fn chain_bytes_round_trip() {
        let chain = sample_chain(6);
        let bytes = chain.to_bytes();
        let back = Chain::from_bytes(&bytes).unwrap();
        assert_eq!(back, chain);
        assert!(validate_chain_bytes(&bytes).is_valid());
    }

    #[test]
    fn block_decode_rejects_trailing_bytes() {
        let block = sample_chain(1).blocks()[1].clone();
        let mut bytes = block.to_bytes();
        bytes.push(0);
        assert!(matches!(
            Block::from_bytes(&bytes),
            Err(CodecError::TrailingBytes { .. })
        ));
    }

    #[test]
    fn block_decode_rejects_bad_verdict_byte() {
        let block = sample_chain(1).blocks()[1].clone();
        let mut bytes = block.to_bytes();
        // The verdict byte of the first transaction sits right after the
        // height, prev_hash and tx-count prefixes plus one 32-byte id.
        let verdict_pos = (4 + 8) + (4 + 32) + 4 + 4 + 32;
        assert!(bytes[verdict_pos] <= 1, "offset arithmetic out of date");
        bytes[verdict_pos] = 7;
        assert_eq!(
            Block::from_bytes(&bytes),
            Err(CodecError::InvalidVerdict(7))
        );
    }

    #[test]
    fn every_single_byte_flip_is_attributed_to_its_block() {
        // Exhaustive over a small chain: flip each byte of each block frame
        // in turn; validation must blame exactly that block's height.
        let chain = sample_chain(4);
        let dump = chain.to_bytes();

        // Recover each frame's [start, end) byte range within the dump.
        let mut frames = Vec::new();
        let mut pos = 4; // skip the u32 block count
        for _ in 0..chain.len() {
            let len = u32::from_be_bytes(dump[pos..pos + 4].try_into().unwrap()) as usize;
            frames.push((pos + 4, pos + 4 + len));
            pos += 4 + len;
        }
        assert_eq!(pos, dump.len());

        for (k, &(start, end)) in frames.iter().enumerate() {
            for offset in start..end {
                let mut mutated = dump.clone();
                mutated[offset] ^= 0x5a;
                match validate_chain_bytes(&mutated) {
                    ChainValidity::Invalid { height, .. } => assert_eq!(
                        height, k as u64,
                        "flip at byte {offset} blamed height {height}, expected {k}"
                    ),
                    ChainValidity::Valid => {
                        panic!("flip at byte {offset} in block {k} went undetected")
                    }
                }
            }
        }
    }

    #[test]
    fn digest_hex_round_trip() {
        let d = digest(b"round trip");
        assert_eq!(Digest::from_hex(&d.to_hex()).unwrap(), d);
        assert!(Digest::from_hex("zz").is_err());
        assert!(Digest::from_hex("abcd").is_err());
        let json = serde_json::to_string(&d).unwrap();
        let back: Digest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }
}
