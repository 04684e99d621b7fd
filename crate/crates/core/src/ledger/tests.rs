use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::bits::BitVector;

fn setup(k: usize) -> (Ledger, Vec<(SecretKey, Party)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let keys: Vec<_> = (0..k).map(|i| keygen(format!("party-{i}").as_str(), &mut rng)).collect();
    let ledger = Ledger::new(keys.iter().map(|(_, p)| p.clone()).collect(), LedgerConfig::default()).unwrap();
    (ledger, keys)
}

fn rec(id: u8) -> Vec<u8> {
    RecPayload {
        id: [id; 32],
        record: vec![id, 1, 2],
    }
    .encode()
}

fn hscan(bits: &[bool]) -> Vec<u8> {
    encode_hscan(&HashVector(BitVector::from_bools(bits.iter().copied())))
}

fn inclusion_height(ledger: &Ledger, payload: &[u8]) -> Option<u64> {
    ledger
        .blocks()
        .iter()
        .find(|b| b.transactions.iter().any(|t| t.payload == payload))
        .map(|b| b.height)
}

#[test]
fn authorized_broadcast_lands_in_next_block() {
    let (mut l, keys) = setup(3);
    let (sk, p) = &keys[0];
    let tx = Transaction::signed(TxType::Rec, rec(1), &p.id, sk);
    l.broadcast(&p.id, sk, tx.clone()).unwrap();
    l.tick();
    assert_eq!(l.retrieve_block(1).unwrap().transactions, vec![tx]);
}

#[test]
fn outsider_is_rejected_and_never_included() {
    let (mut l, _) = setup(2);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (sk, outsider) = keygen("mallory", &mut rng);
    let tx = Transaction::signed(TxType::Rec, rec(5), &outsider.id, &sk);
    assert_eq!(
        l.broadcast(&outsider.id, &sk, tx),
        Err(LedgerError::Unauthorized("mallory".into()))
    );
    for _ in 0..3 {
        l.tick();
    }
    assert_eq!(inclusion_height(&l, &rec(5)), None);
}

#[test]
fn signature_over_altered_payload_is_rejected() {
    let (mut l, keys) = setup(2);
    let (sk, p) = &keys[1];
    let mut tx = Transaction::signed(TxType::Rec, rec(1), &p.id, sk);
    tx.payload = rec(2);
    assert_eq!(l.broadcast(&p.id, sk, tx), Err(LedgerError::BadSignature));
}

#[test]
fn malformed_or_mismatched_transactions_are_rejected() {
    let (mut l, keys) = setup(2);
    let (sk, p) = &keys[0];
    let bad = Transaction::signed(TxType::Rec, vec![1, 2, 3], &p.id, sk);
    assert!(matches!(l.broadcast(&p.id, sk, bad), Err(LedgerError::Malformed(_))));
    let other = Transaction::signed(TxType::Rec, rec(1), &keys[1].1.id, &keys[1].0);
    assert!(l.broadcast(&p.id, sk, other).is_err());
    let tx = Transaction::signed(TxType::Rec, rec(1), &p.id, sk);
    assert_eq!(l.broadcast(&p.id, &keys[1].0, tx), Err(LedgerError::UnknownKey));
    let unsigned = Transaction {
        signature: None,
        ..Transaction::signed(TxType::Rec, rec(1), &p.id, sk)
    };
    assert_eq!(l.broadcast(&p.id, sk, unsigned), Err(LedgerError::BadSignature));
}

#[test]
fn anonymous_broadcast_contract() {
    let (mut l, keys) = setup(2);
    let payload = hscan(&[true, false, true]);
    l.anon_broadcast(&keys[0].0, Transaction::anonymous(TxType::Hscan, payload.clone()), 0)
        .unwrap();
    l.tick();
    let b = l.retrieve_block(1).unwrap();
    assert_eq!(b.transactions.len(), 1);
    assert!(b.transactions[0].party.is_none());
    assert!(b.transactions[0].signature.is_none());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (outsider, _) = keygen("eve", &mut rng);
    assert_eq!(
        l.anon_broadcast(&outsider, Transaction::anonymous(TxType::Hscan, payload.clone()), 0),
        Err(LedgerError::UnknownKey)
    );
    let (sk, p) = &keys[0];
    let signed = Transaction::signed(TxType::Hscan, payload, &p.id, sk);
    assert!(l.anon_broadcast(sk, signed, 0).is_err());
    assert!(l.anon_broadcast(sk, Transaction::anonymous(TxType::Rec, rec(1)), 0).is_err());
}

#[test]
fn delayed_anonymous_tx_trails_by_its_delay() {
    let (mut l, keys) = setup(3);
    let (sk, p) = &keys[0];
    let now_payload = rec(1);
    let late = hscan(&[true; 9]);
    l.broadcast(&p.id, sk, Transaction::signed(TxType::Rec, now_payload.clone(), &p.id, sk))
        .unwrap();
    l.anon_broadcast(sk, Transaction::anonymous(TxType::Hscan, late.clone()), 3).unwrap();
    for _ in 0..6 {
        l.tick();
    }
    let h0 = inclusion_height(&l, &now_payload).unwrap();
    let h3 = inclusion_height(&l, &late).unwrap();
    assert_eq!(h3 - h0, 3);
}

#[test]
fn block_counts_and_retrieval() {
    let (mut l, _) = setup(3);
    assert_eq!(l.get_num_blocks(), 1);
    let g = l.retrieve_block(0).unwrap().clone();
    assert_eq!(g.prev_hash, ZERO_DIGEST);
    assert_eq!(l.retrieve_block(0).unwrap(), &g);
    let mut last = l.get_num_blocks();
    for k in 1..=5 {
        l.tick();
        assert_eq!(l.get_num_blocks(), 1 + k);
        assert!(l.get_num_blocks() >= last);
        last = l.get_num_blocks();
    }
    assert_eq!(
        l.retrieve_block(l.get_num_blocks()),
        Err(LedgerError::OutOfRange { index: 6, len: 6 })
    );
}

#[test]
fn round_robin_production() {
    let (mut l, _) = setup(3);
    for _ in 0..6 {
        l.tick();
    }
    let mut counts = BTreeMap::new();
    for b in &l.blocks()[1..] {
        *counts.entry(b.producer.clone()).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 3);
    assert!(counts.values().all(|&c| c == 2));
}

#[test]
fn fifo_order_and_eligibility_gate() {
    let (mut l, keys) = setup(1);
    let (sk, p) = &keys[0];
    let a = Transaction::signed(TxType::Rec, rec(1), &p.id, sk);
    let b = Transaction::signed(TxType::Rec, rec(2), &p.id, sk);
    l.broadcast(&p.id, sk, a.clone()).unwrap();
    l.broadcast(&p.id, sk, b.clone()).unwrap();
    l.anon_broadcast(sk, Transaction::anonymous(TxType::Hscan, hscan(&[true])), 4).unwrap();
    assert_eq!(l.now(), 1);
    // The delayed entry has not_before_tick = 5.
    for t in 1..=4 {
        let block = l.produce_block(t).unwrap();
        assert!(block.transactions.iter().all(|tx| tx.tx_type == TxType::Rec));
    }
    assert_eq!(l.retrieve_block(1).unwrap().transactions, vec![a, b]);
    assert_eq!(l.produce_block(5).unwrap().transactions.len(), 1);
}

#[test]
fn empty_blocks_can_be_disabled() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (_, p) = keygen("solo", &mut rng);
    let mut l = Ledger::new(vec![p], LedgerConfig { empty_blocks: false }).unwrap();
    assert!(l.tick().is_none());
    assert_eq!(l.get_num_blocks(), 1);
}

#[test]
fn membership_validation() {
    assert_eq!(Ledger::new(vec![], LedgerConfig::default()).unwrap_err(), LedgerError::EmptyMembership);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (_, a) = keygen("a", &mut rng);
    assert!(matches!(
        Ledger::new(vec![a.clone(), a.clone()], LedgerConfig::default()),
        Err(LedgerError::DuplicateParty(_))
    ));
    let (sk_b, mut b) = keygen("b", &mut rng);
    b.authorized = false;
    let mut l = Ledger::new(vec![a, b.clone()], LedgerConfig::default()).unwrap();
    assert_eq!(l.members().len(), 1);
    let tx = Transaction::signed(TxType::Rec, rec(1), &b.id, &sk_b);
    assert!(matches!(l.broadcast(&b.id, &sk_b, tx), Err(LedgerError::Unauthorized(_))));
}

#[test]
fn verify_chain_detects_tampering() {
    let (mut l, keys) = setup(3);
    for (i, (sk, p)) in keys.iter().enumerate() {
        l.broadcast(&p.id, sk, Transaction::signed(TxType::Rec, rec(i as u8), &p.id, sk))
            .unwrap();
        l.tick();
    }
    l.tick();
    l.tick();
    assert_eq!(l.verify_chain(), Ok(()));

    let mut blocks = l.blocks().to_vec();
    blocks[2].transactions[0].payload[0] ^= 1;
    let v = verify_blocks(&blocks).unwrap_err();
    assert_eq!((v.height, v.kind), (2, ViolationKind::BlockHash));

    let mut blocks = l.blocks().to_vec();
    let p1 = blocks[1].producer.clone();
    blocks[1].producer = blocks[2].producer.clone();
    blocks[2].producer = p1;
    for b in &mut blocks[1..] {
        b.hash = b.compute_hash();
    }
    let mut prev = blocks[0].hash;
    for b in &mut blocks[1..] {
        b.prev_hash = prev;
        b.hash = b.compute_hash();
        prev = b.hash;
    }
    let v = verify_blocks(&blocks).unwrap_err();
    assert_eq!(v.height, 1);
    assert!(matches!(v.kind, ViolationKind::Producer { .. }));
}

#[test]
fn block_encoding_round_trip_and_file_store() {
    let (mut l, keys) = setup(2);
    let (sk, p) = &keys[0];
    l.broadcast(&p.id, sk, Transaction::signed(TxType::Rec, rec(3), &p.id, sk)).unwrap();
    l.anon_broadcast(sk, Transaction::anonymous(TxType::Hscan, hscan(&[false; 12])), 0)
        .unwrap();
    l.tick();
    for b in l.blocks() {
        assert_eq!(&decode_block(&encode_block(b)).unwrap(), b);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.bin");
    for b in l.blocks() {
        append_block(&path, b).unwrap();
    }
    let loaded = load_chain(&path).unwrap();
    assert_eq!(loaded, l.blocks());
    let rebuilt = Ledger::from_blocks(loaded, LedgerConfig::default()).unwrap();
    assert_eq!(rebuilt.members(), l.members());

    let mut out = Vec::new();
    export_jsonl(l.blocks(), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 2);
    let second: BlockJson = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(second.transactions[1].tx_type, "hscan");
    assert_eq!(second.transactions[1].party, None);
}

#[test]
fn hscan_payload_rejects_padding_and_length_errors() {
    let h = HashVector(BitVector::from_bools([true; 10]));
    let enc = encode_hscan(&h);
    assert_eq!(decode_hscan(&enc).unwrap(), h);
    let mut bad = enc.clone();
    *bad.last_mut().unwrap() |= 1;
    assert!(decode_hscan(&bad).is_err());
    assert!(decode_hscan(&enc[..enc.len() - 1]).is_err());
    assert!(decode_hscan(&[0, 0, 0, 0]).is_err());
}
