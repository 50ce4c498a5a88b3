//! Chain-level properties: generator chains walk back to registration with
//! verifying proofs, and random accepted/rejected transaction streams never
//! leave an illegal state on the committed chain.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use uavnet_core::crypto::CryptoSuite;
use uavnet_core::ledger::{
    merkle, signing_digest, verify_chain, wire, Block, InputAddress, Ledger, Registration,
    Transaction, TxExtra, TxHeader, TxPayload, TxType,
};
use uavnet_core::protocol::{Fingerprint, UavStatus};
use uavnet_core::sim::{self, presets};

/// Every transaction in a real run's exported chain walks back through its
/// input addresses to the generator's registration, with every hop's
/// inclusion proof verifying.
#[test]
fn generator_chains_walk_back_to_initialization() {
    let report = sim::run(&presets::table2_scenario(7)).unwrap();
    let (_, blocks) = wire::decode_chain_file(&report.chain_bytes).unwrap();
    let by_hash: std::collections::BTreeMap<[u8; 32], &Block> =
        blocks.iter().map(|b| (b.hash(), b)).collect();

    let mut walked = 0usize;
    for block in &blocks {
        for tx in &block.transactions {
            let mut cursor: &Transaction = tx;
            let mut hops = 0;
            loop {
                match &cursor.header.input_address {
                    InputAddress::Null => {
                        assert_eq!(cursor.tx_type, TxType::Initialization);
                        break;
                    }
                    InputAddress::Previous { block_hash, proof } => {
                        let prev_block = by_hash[block_hash];
                        let prev_tx = &prev_block.transactions[proof.leaf_index as usize];
                        assert_eq!(prev_tx.header.generator, cursor.header.generator);
                        assert!(merkle::verify_proof(
                            &wire::encode_tx(prev_tx),
                            proof,
                            &prev_block.merkle_root
                        ));
                        assert!(cursor.payload.timestamp_ms >= prev_tx.payload.timestamp_ms);
                        cursor = prev_tx;
                    }
                }
                hops += 1;
                assert!(hops <= blocks.len(), "input-address cycle");
            }
            walked += 1;
        }
    }
    assert!(walked > 100, "the run produced a real chain ({walked} txs)");
}

/// Random streams of mostly-bogus transactions: whatever the validator
/// accepts must replay cleanly (full re-verification) and only ever move
/// statuses along legal transitions.
#[test]
fn random_tx_streams_keep_committed_state_legal() {
    let suite = CryptoSuite::real();
    for stream in 0..12u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(40_000 + stream);
        let bs = suite.generate_keypair(&mut rng);
        let mut kps = Vec::new();
        let mut regs = Vec::new();
        for c in 0..2u32 {
            for i in 0..4usize {
                let kp = suite.generate_keypair(&mut rng);
                let mut fp = [0u8; 32];
                rng.fill_bytes(&mut fp);
                regs.push(Registration {
                    cluster: c,
                    public: kp.public.clone(),
                    fingerprint: Fingerprint(fp),
                    is_head: i == 0,
                });
                kps.push((c, kp));
            }
        }
        let mut ledger = Ledger::genesis(suite, &bs, &regs, 0).unwrap();
        let mut accepted = 0;
        let mut rejected = 0;

        for step in 0..60u64 {
            let (cluster, target_kp) = &kps[rng.gen::<usize>() % kps.len()];
            let target = target_kp.public.clone();
            let head_pk = ledger.state.head_of(*cluster).unwrap().clone();
            let head_kp = kps
                .iter()
                .find(|(_, kp)| kp.public == head_pk)
                .map(|(_, kp)| kp.clone());
            // Random signer: often the right one, often not.
            let signer = if rng.gen::<u32>() % 3 == 0 {
                kps[rng.gen::<usize>() % kps.len()].1.clone()
            } else {
                head_kp.clone().unwrap_or_else(|| bs.clone())
            };
            let tx_type = match rng.gen::<u32>() % 4 {
                0 => TxType::MemberUavDisconnected,
                1 => TxType::HeadUavUpdate,
                2 => TxType::KeyUpdate,
                _ => TxType::TaskRecord,
            };
            let fp = ledger.state.uavs.get(&target).map(|r| r.fingerprint);
            let extra = match tx_type {
                TxType::KeyUpdate => TxExtra::KeyUpdate(uavnet_core::ledger::KeyUpdateInfo {
                    // Sometimes the correct next epoch, sometimes stale.
                    epoch: if rng.gen::<bool>() {
                        ledger.state.clusters[cluster].key_epoch + 1
                    } else {
                        0
                    },
                    lml_digest: if rng.gen::<bool>() {
                        ledger.state.view_digest(*cluster)
                    } else {
                        [0; 32]
                    },
                    transitions: vec![],
                    receipts_digest: [0; 32],
                }),
                TxType::TaskRecord => TxExtra::TaskRecord(uavnet_core::ledger::TaskRecordInfo {
                    period: step as u32,
                    entries: vec![],
                }),
                _ => TxExtra::None,
            };
            let generator = if tx_type == TxType::KeyUpdate || tx_type == TxType::TaskRecord {
                head_pk.clone()
            } else {
                target.clone()
            };
            let payload = TxPayload {
                public_key: generator.clone(),
                fingerprint: if tx_type == TxType::MemberUavDisconnected
                    || tx_type == TxType::HeadUavUpdate
                {
                    fp
                } else {
                    None
                },
                timestamp_ms: 1_000 + step * 100,
                extra,
            };
            let Ok(input_address) = ledger.input_address_for(&generator) else {
                continue;
            };
            let signature = suite.sign(&signer.secret, &signing_digest(&payload));
            let tx = Transaction {
                header: TxHeader {
                    input_address,
                    cluster_index: *cluster,
                    generator,
                },
                tx_type,
                payload,
                signature,
            };
            let proposer = head_pk.clone();
            let block = Block::assemble(
                ledger.height(),
                ledger.tip_hash(),
                proposer,
                1_000 + step * 100,
                vec![tx],
            )
            .unwrap();
            match ledger.append_block(block) {
                Ok(()) => accepted += 1,
                Err(_) => rejected += 1,
            }
        }
        assert!(rejected > 0, "stream {stream}: fuzz must exercise rejections");
        let _ = accepted;

        // Whatever was committed replays cleanly from raw bytes.
        let header = wire::ChainFileHeader {
            crypto_mode: suite.mode,
            pk_len: suite.pk_len as u16,
            bs_public_key: bs.public.clone(),
        };
        let bytes = wire::encode_chain_file(&header, ledger.blocks());
        let (h, blocks) = wire::decode_chain_file(&bytes).unwrap();
        verify_chain(&h, &blocks).unwrap();

        // And the final statuses are reachable through legal transitions
        // only (replay the per-UAV status path).
        let mut status: std::collections::BTreeMap<_, UavStatus> = ledger
            .blocks()[0]
            .transactions
            .iter()
            .map(|tx| (tx.header.generator.clone(), UavStatus::Native))
            .collect();
        for block in ledger.blocks().iter().skip(1) {
            for tx in &block.transactions {
                match tx.tx_type {
                    TxType::MemberUavDisconnected | TxType::HeadUavDisconnected => {
                        let s = status.get_mut(&tx.header.generator).unwrap();
                        assert!(UavStatus::can_transition(*s, UavStatus::Disconnected));
                        *s = UavStatus::Disconnected;
                    }
                    TxType::KeyUpdate => {
                        if let TxExtra::KeyUpdate(info) = &tx.payload.extra {
                            for t in &info.transitions {
                                let s = status.get_mut(&t.uav).unwrap();
                                assert_eq!(*s, t.from);
                                assert!(UavStatus::can_transition(t.from, t.to));
                                *s = t.to;
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
    }
}
