//! Canonical binary layout for transactions, blocks, and exported chain
//! files. All integers are big-endian; variable fields are length-prefixed.
//! The layout is documented in `docs/wire.md` and is the byte stream that
//! hashes, Merkle leaves, and signatures are computed over, so it must stay
//! bit-stable.

use crate::crypto::{CryptoMode, Digest32, PublicKey, Signature};
use crate::ledger::block::Block;
use crate::ledger::merkle::{MerkleProof, SiblingSide};
use crate::ledger::tx::{
    CandidateInfo, InputAddress, KeyUpdateInfo, StatusTransition, TaskRecordEntry, TaskRecordInfo,
    Transaction, TxExtra, TxHeader, TxPayload, TxType,
};
use crate::protocol::{Fingerprint, UavStatus};
use thiserror::Error;

pub const CHAIN_MAGIC: &[u8; 4] = b"IDBC";
pub const CHAIN_VERSION: u16 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("wire decode error at byte {offset}: {what}")]
pub struct DecodeError {
    pub offset: usize,
    pub what: String,
}

type DResult<T> = Result<T, DecodeError>;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn fail<T>(&self, what: &str) -> DResult<T> {
        Err(DecodeError {
            offset: self.pos,
            what: what.to_string(),
        })
    }

    fn take(&mut self, n: usize) -> DResult<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return self.fail("unexpected end of input");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> DResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> DResult<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> DResult<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> DResult<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn digest(&mut self) -> DResult<Digest32> {
        Ok(self.take(32)?.try_into().unwrap())
    }

    fn varbytes(&mut self) -> DResult<Vec<u8>> {
        let n = self.u16()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    fn longbytes(&mut self) -> DResult<Vec<u8>> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn put_varbytes(out: &mut Vec<u8>, b: &[u8]) {
    debug_assert!(b.len() <= u16::MAX as usize);
    out.extend_from_slice(&(b.len() as u16).to_be_bytes());
    out.extend_from_slice(b);
}

fn put_longbytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_be_bytes());
    out.extend_from_slice(b);
}

fn encode_proof(out: &mut Vec<u8>, proof: &MerkleProof) {
    out.extend_from_slice(&proof.leaf_index.to_be_bytes());
    out.extend_from_slice(&(proof.siblings.len() as u16).to_be_bytes());
    for (hash, side) in &proof.siblings {
        out.extend_from_slice(hash);
        out.push(match side {
            SiblingSide::Left => 0,
            SiblingSide::Right => 1,
        });
    }
}

fn decode_proof(r: &mut Reader) -> DResult<MerkleProof> {
    let leaf_index = r.u32()?;
    let n = r.u16()? as usize;
    let mut siblings = Vec::with_capacity(n);
    for _ in 0..n {
        let hash = r.digest()?;
        let side = match r.u8()? {
            0 => SiblingSide::Left,
            1 => SiblingSide::Right,
            _ => return r.fail("bad sibling side"),
        };
        siblings.push((hash, side));
    }
    Ok(MerkleProof {
        leaf_index,
        siblings,
    })
}

pub fn encode_payload(p: &TxPayload) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    put_varbytes(&mut out, p.public_key.as_bytes());
    match &p.fingerprint {
        None => out.push(0),
        Some(fp) => {
            out.push(1);
            out.extend_from_slice(&fp.0);
        }
    }
    out.extend_from_slice(&p.timestamp_ms.to_be_bytes());
    let extra = encode_extra(&p.extra);
    put_longbytes(&mut out, &extra);
    out
}

fn encode_extra(e: &TxExtra) -> Vec<u8> {
    let mut out = Vec::new();
    match e {
        TxExtra::None => out.push(0),
        TxExtra::Init { is_head } => {
            out.push(1);
            out.push(u8::from(*is_head));
        }
        TxExtra::KeyUpdate(info) => {
            out.push(2);
            out.extend_from_slice(&info.epoch.to_be_bytes());
            out.extend_from_slice(&info.lml_digest);
            out.extend_from_slice(&(info.transitions.len() as u16).to_be_bytes());
            for t in &info.transitions {
                put_varbytes(&mut out, t.uav.as_bytes());
                out.push(t.from.as_u8());
                out.push(t.to.as_u8());
            }
            out.extend_from_slice(&info.receipts_digest);
        }
        TxExtra::Candidate(info) => {
            out.push(3);
            put_varbytes(&mut out, info.candidate.as_bytes());
            out.extend_from_slice(&info.lml_digest);
        }
        TxExtra::TaskRecord(info) => {
            out.push(4);
            out.extend_from_slice(&info.period.to_be_bytes());
            out.extend_from_slice(&(info.entries.len() as u32).to_be_bytes());
            for e in &info.entries {
                out.extend_from_slice(&e.task_id.to_be_bytes());
                put_varbytes(&mut out, e.producer.as_bytes());
                out.extend_from_slice(&e.ciphertext_hash);
                out.extend_from_slice(&e.key_epoch.to_be_bytes());
            }
        }
    }
    out
}

fn decode_extra(buf: &[u8], base_offset: usize) -> DResult<TxExtra> {
    let mut r = Reader::new(buf);
    let shift = |mut e: DecodeError| {
        e.offset += base_offset;
        e
    };
    let tag = r.u8().map_err(shift)?;
    let extra = match tag {
        0 => TxExtra::None,
        1 => TxExtra::Init {
            is_head: r.u8().map_err(shift)? != 0,
        },
        2 => {
            let epoch = r.u64().map_err(shift)?;
            let lml_digest = r.digest().map_err(shift)?;
            let n = r.u16().map_err(shift)? as usize;
            let mut transitions = Vec::with_capacity(n);
            for _ in 0..n {
                let uav = PublicKey(r.varbytes().map_err(shift)?);
                let from = UavStatus::from_u8(r.u8().map_err(shift)?)
                    .ok_or_else(|| shift(DecodeError { offset: r.pos, what: "bad status".into() }))?;
                let to = UavStatus::from_u8(r.u8().map_err(shift)?)
                    .ok_or_else(|| shift(DecodeError { offset: r.pos, what: "bad status".into() }))?;
                transitions.push(StatusTransition { uav, from, to });
            }
            let receipts_digest = r.digest().map_err(shift)?;
            TxExtra::KeyUpdate(KeyUpdateInfo {
                epoch,
                lml_digest,
                transitions,
                receipts_digest,
            })
        }
        3 => {
            let candidate = PublicKey(r.varbytes().map_err(shift)?);
            let lml_digest = r.digest().map_err(shift)?;
            TxExtra::Candidate(CandidateInfo {
                candidate,
                lml_digest,
            })
        }
        4 => {
            let period = r.u32().map_err(shift)?;
            let n = r.u32().map_err(shift)? as usize;
            let mut entries = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                let task_id = r.u64().map_err(shift)?;
                let producer = PublicKey(r.varbytes().map_err(shift)?);
                let ciphertext_hash = r.digest().map_err(shift)?;
                let key_epoch = r.u64().map_err(shift)?;
                entries.push(TaskRecordEntry {
                    task_id,
                    producer,
                    ciphertext_hash,
                    key_epoch,
                });
            }
            TxExtra::TaskRecord(TaskRecordInfo { period, entries })
        }
        _ => {
            return Err(DecodeError {
                offset: base_offset,
                what: "unknown extra tag".into(),
            })
        }
    };
    if !r.done() {
        return Err(DecodeError {
            offset: base_offset + r.pos,
            what: "trailing bytes in extra".into(),
        });
    }
    Ok(extra)
}

pub fn encode_tx(tx: &Transaction) -> Vec<u8> {
    let mut out = Vec::with_capacity(256);
    match &tx.header.input_address {
        InputAddress::Null => out.push(0),
        InputAddress::Previous { block_hash, proof } => {
            out.push(1);
            out.extend_from_slice(block_hash);
            encode_proof(&mut out, proof);
        }
    }
    out.extend_from_slice(&tx.header.cluster_index.to_be_bytes());
    put_varbytes(&mut out, tx.header.generator.as_bytes());
    out.push(tx.tx_type.as_u8());
    let payload = encode_payload(&tx.payload);
    put_longbytes(&mut out, &payload);
    put_varbytes(&mut out, tx.signature.as_bytes());
    out
}

pub fn decode_tx(buf: &[u8]) -> DResult<Transaction> {
    let mut r = Reader::new(buf);
    let tx = decode_tx_inner(&mut r)?;
    if !r.done() {
        return r.fail("trailing bytes after transaction");
    }
    Ok(tx)
}

fn decode_tx_inner(r: &mut Reader) -> DResult<Transaction> {
    let input_address = match r.u8()? {
        0 => InputAddress::Null,
        1 => {
            let block_hash = r.digest()?;
            let proof = decode_proof(r)?;
            InputAddress::Previous { block_hash, proof }
        }
        _ => return r.fail("bad input address tag"),
    };
    let cluster_index = r.u32()?;
    let generator = PublicKey(r.varbytes()?);
    let tx_type = match TxType::from_u8(r.u8()?) {
        Some(t) => t,
        None => return r.fail("unknown transaction type"),
    };
    let payload_start = r.pos + 4;
    let payload_bytes = r.longbytes()?;
    let payload = decode_payload(&payload_bytes, payload_start)?;
    let signature = Signature(r.varbytes()?);
    Ok(Transaction {
        header: TxHeader {
            input_address,
            cluster_index,
            generator,
        },
        tx_type,
        payload,
        signature,
    })
}

fn decode_payload(buf: &[u8], base_offset: usize) -> DResult<TxPayload> {
    let mut r = Reader::new(buf);
    let shift = |mut e: DecodeError| {
        e.offset += base_offset;
        e
    };
    let public_key = PublicKey(r.varbytes().map_err(shift)?);
    let fingerprint = match r.u8().map_err(shift)? {
        0 => None,
        1 => Some(Fingerprint(r.digest().map_err(shift)?)),
        _ => {
            return Err(DecodeError {
                offset: base_offset + r.pos,
                what: "bad fingerprint flag".into(),
            })
        }
    };
    let timestamp_ms = r.u64().map_err(shift)?;
    let extra_start = base_offset + r.pos + 4;
    let extra_bytes = r.longbytes().map_err(shift)?;
    let extra = decode_extra(&extra_bytes, extra_start)?;
    if !r.done() {
        return Err(DecodeError {
            offset: base_offset + r.pos,
            what: "trailing bytes in payload".into(),
        });
    }
    Ok(TxPayload {
        public_key,
        fingerprint,
        timestamp_ms,
        extra,
    })
}

pub fn encode_block_header(b: &Block) -> Vec<u8> {
    let mut out = Vec::with_capacity(128);
    out.extend_from_slice(&b.height.to_be_bytes());
    out.extend_from_slice(&b.prev_hash);
    out.extend_from_slice(&b.merkle_root);
    put_varbytes(&mut out, b.proposer.as_bytes());
    out.extend_from_slice(&b.timestamp_ms.to_be_bytes());
    out
}

pub fn encode_block(b: &Block) -> Vec<u8> {
    let mut out = encode_block_header(b);
    out.extend_from_slice(&(b.transactions.len() as u32).to_be_bytes());
    for tx in &b.transactions {
        put_longbytes(&mut out, &encode_tx(tx));
    }
    out
}

pub fn decode_block(buf: &[u8]) -> DResult<Block> {
    let mut r = Reader::new(buf);
    let b = decode_block_inner(&mut r)?;
    if !r.done() {
        return r.fail("trailing bytes after block");
    }
    Ok(b)
}

fn decode_block_inner(r: &mut Reader) -> DResult<Block> {
    let height = r.u64()?;
    let prev_hash = r.digest()?;
    let merkle_root = r.digest()?;
    let proposer = PublicKey(r.varbytes()?);
    let timestamp_ms = r.u64()?;
    let n = r.u32()? as usize;
    let mut transactions = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let start = r.pos + 4;
        let tx_bytes = r.longbytes()?;
        let tx = decode_tx(&tx_bytes).map_err(|mut e| {
            e.offset += start;
            e
        })?;
        transactions.push(tx);
    }
    Ok(Block {
        height,
        prev_hash,
        merkle_root,
        proposer,
        timestamp_ms,
        transactions,
    })
}

/// Header of an exported chain file: enough context to re-validate the chain
/// standalone (crypto mode, key length, and the base-station key that signs
/// registrations).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainFileHeader {
    pub crypto_mode: CryptoMode,
    pub pk_len: u16,
    pub bs_public_key: PublicKey,
}

pub fn encode_chain_file(header: &ChainFileHeader, blocks: &[Block]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHAIN_MAGIC);
    out.extend_from_slice(&CHAIN_VERSION.to_be_bytes());
    out.push(match header.crypto_mode {
        CryptoMode::Real => 0,
        CryptoMode::Null => 1,
    });
    out.extend_from_slice(&header.pk_len.to_be_bytes());
    put_varbytes(&mut out, header.bs_public_key.as_bytes());
    out.extend_from_slice(&(blocks.len() as u32).to_be_bytes());
    for b in blocks {
        put_longbytes(&mut out, &encode_block(b));
    }
    out
}

pub fn decode_chain_file(buf: &[u8]) -> DResult<(ChainFileHeader, Vec<Block>)> {
    let mut r = Reader::new(buf);
    let magic = r.take(4)?;
    if magic != CHAIN_MAGIC {
        return Err(DecodeError {
            offset: 0,
            what: "bad magic (expected IDBC)".into(),
        });
    }
    let version = r.u16()?;
    if version != CHAIN_VERSION {
        return Err(DecodeError {
            offset: 4,
            what: format!("unsupported chain file version {version}"),
        });
    }
    let crypto_mode = match r.u8()? {
        0 => CryptoMode::Real,
        1 => CryptoMode::Null,
        _ => return r.fail("bad crypto mode"),
    };
    let pk_len = r.u16()?;
    let bs_public_key = PublicKey(r.varbytes()?);
    let n = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let start = r.pos + 4;
        let bytes = r.longbytes()?;
        let b = decode_block(&bytes).map_err(|mut e| {
            e.offset += start;
            e
        })?;
        blocks.push(b);
    }
    if !r.done() {
        return r.fail("trailing bytes after chain");
    }
    Ok((
        ChainFileHeader {
            crypto_mode,
            pk_len,
            bs_public_key,
        },
        blocks,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_pk() -> impl Strategy<Value = PublicKey> {
        proptest::collection::vec(any::<u8>(), 33).prop_map(PublicKey)
    }

    fn arb_extra() -> impl Strategy<Value = TxExtra> {
        prop_oneof![
            Just(TxExtra::None),
            any::<bool>().prop_map(|is_head| TxExtra::Init { is_head }),
            (any::<u64>(), any::<[u8; 32]>(), arb_pk(), any::<[u8; 32]>()).prop_map(
                |(epoch, lml, uav, rec)| TxExtra::KeyUpdate(KeyUpdateInfo {
                    epoch,
                    lml_digest: lml,
                    transitions: vec![StatusTransition {
                        uav,
                        from: UavStatus::Disconnected,
                        to: UavStatus::Marked,
                    }],
                    receipts_digest: rec,
                })
            ),
            (arb_pk(), any::<[u8; 32]>()).prop_map(|(candidate, lml_digest)| TxExtra::Candidate(
                CandidateInfo {
                    candidate,
                    lml_digest
                }
            )),
            (any::<u32>(), any::<u64>(), arb_pk(), any::<[u8; 32]>(), any::<u64>()).prop_map(
                |(period, task_id, producer, ch, ke)| TxExtra::TaskRecord(TaskRecordInfo {
                    period,
                    entries: vec![TaskRecordEntry {
                        task_id,
                        producer,
                        ciphertext_hash: ch,
                        key_epoch: ke,
                    }],
                })
            ),
        ]
    }

    fn arb_tx() -> impl Strategy<Value = Transaction> {
        (
            arb_pk(),
            any::<u32>(),
            proptest::option::of(any::<[u8; 32]>()),
            any::<u64>(),
            arb_extra(),
            proptest::collection::vec(any::<u8>(), 64),
            prop_oneof![
                Just(InputAddress::Null),
                (any::<[u8; 32]>(), any::<u32>(), any::<[u8; 32]>()).prop_map(
                    |(bh, idx, sib)| InputAddress::Previous {
                        block_hash: bh,
                        proof: MerkleProof {
                            leaf_index: idx,
                            siblings: vec![(sib, SiblingSide::Left)],
                        },
                    }
                )
            ],
            any::<u8>(),
        )
            .prop_map(
                |(pk, cluster, fp, ts, extra, sig, input, type_raw)| Transaction {
                    header: TxHeader {
                        input_address: input,
                        cluster_index: cluster,
                        generator: pk.clone(),
                    },
                    tx_type: TxType::from_u8(type_raw % 7).unwrap(),
                    payload: TxPayload {
                        public_key: pk,
                        fingerprint: fp.map(Fingerprint),
                        timestamp_ms: ts,
                        extra,
                    },
                    signature: Signature(sig),
                },
            )
    }

    proptest! {
        #[test]
        fn tx_encoding_round_trips(tx in arb_tx()) {
            let bytes = encode_tx(&tx);
            let back = decode_tx(&bytes).unwrap();
            prop_assert_eq!(back, tx);
        }

        #[test]
        fn block_encoding_round_trips(txs in proptest::collection::vec(arb_tx(), 1..4),
                                      height in any::<u64>(),
                                      ts in any::<u64>()) {
            let block = Block::assemble(height, [7; 32], PublicKey(vec![3; 33]), ts, txs).unwrap();
            let bytes = encode_block(&block);
            let back = decode_block(&bytes).unwrap();
            prop_assert_eq!(back, block);
        }
    }

    #[test]
    fn truncated_tx_reports_offset() {
        let tx = Transaction {
            header: TxHeader {
                input_address: InputAddress::Null,
                cluster_index: 1,
                generator: PublicKey(vec![1; 33]),
            },
            tx_type: TxType::Initialization,
            payload: TxPayload {
                public_key: PublicKey(vec![1; 33]),
                fingerprint: Some(Fingerprint([9; 32])),
                timestamp_ms: 1000,
                extra: TxExtra::Init { is_head: true },
            },
            signature: Signature(vec![0; 64]),
        };
        let bytes = encode_tx(&tx);
        let err = decode_tx(&bytes[..bytes.len() - 10]).unwrap_err();
        assert!(err.offset <= bytes.len());
    }

    #[test]
    fn chain_file_round_trip_and_bad_magic() {
        let header = ChainFileHeader {
            crypto_mode: CryptoMode::Null,
            pk_len: 33,
            bs_public_key: PublicKey(vec![2; 33]),
        };
        let bytes = encode_chain_file(&header, &[]);
        let (h2, blocks) = decode_chain_file(&bytes).unwrap();
        assert_eq!(h2, header);
        assert!(blocks.is_empty());

        let mut bad = bytes.clone();
        bad[0] = b'X';
        let err = decode_chain_file(&bad).unwrap_err();
        assert_eq!(err.offset, 0);
    }
}
