use proptest::prelude::*;

use rrp_core::codec;
use rrp_core::crypto::{det_key_gen, digest_parts};
use rrp_core::ercset::{create_erc_set, is_revoked_erc, merge_erc_set, FilterParams};
use rrp_core::pseudonym::{create_rrp, get_capability, verify_capability, ClientId};
use rrp_core::slot_tree::EpochConfig;

fn client(name: &[u8]) -> ClientId {
    ClientId(digest_parts(&[name]).0)
}

#[test]
fn capability_and_filter_survive_the_wire() {
    let pm = det_key_gen(&digest_parts(&[b"flow-pm"]));
    let cfg = EpochConfig::new(9, 86_400, 600, 2).unwrap();
    let params = FilterParams::new(8 * 8192, 7).unwrap();
    let a = create_rrp(client(b"a"), 9, 1, &pm, 4).unwrap();
    let b = create_rrp(client(b"b"), 9, 3, &pm, 4).unwrap();

    let cap = get_capability(&a, 100, &cfg).unwrap();
    let cap = codec::decode_capability(&codec::encode_capability(&cap).unwrap()).unwrap();
    assert!(verify_capability(&cap, &pm.public(), 100, &cfg));
    assert!(!verify_capability(&cap, &pm.public(), 101, &cfg));

    // two PMs revoke different clients independently, then merge over the wire
    let ra: Vec<_> = (90..cfg.slots()).map(|s| get_capability(&a, s, &cfg).unwrap()).collect();
    let rb: Vec<_> = (0..cfg.slots()).map(|s| get_capability(&b, s, &cfg).unwrap()).collect();
    let fa = create_erc_set(&ra, &cfg, params).unwrap();
    let fb = create_erc_set(&rb, &cfg, params).unwrap();
    let fb = codec::decode_erc_set(&codec::encode_erc_set(&fb)).unwrap();
    let merged = merge_erc_set(&fa, &fb).unwrap();
    assert_eq!(merged, merge_erc_set(&fb, &fa).unwrap());

    assert!(is_revoked_erc(&merged, &cap));
    assert!(is_revoked_erc(&merged, &get_capability(&b, 0, &cfg).unwrap()));
    // slots before the revoked range stay clean up to false positives
    let clean = (0..90).filter(|&s| !is_revoked_erc(&merged, &get_capability(&a, s, &cfg).unwrap())).count();
    assert!(clean >= 88, "{clean} of 90 early slots clean");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn revoked_range_never_slips_through(slots in 1u64..48, a in 0u64..48, b in 0u64..48, seed in any::<u64>()) {
        let (first, last) = (a.min(b) % slots, a.max(b) % slots);
        let (first, last) = (first.min(last), first.max(last));
        let pm = det_key_gen(&digest_parts(&[b"prop-pm", &seed.to_be_bytes()]));
        let cfg = EpochConfig::new(seed % 1000, slots, 1, 2).unwrap();
        let rrp = create_rrp(client(&seed.to_be_bytes()), cfg.epoch_id(), 1, &pm, 1).unwrap();
        let caps: Vec<_> = (0..slots).map(|s| get_capability(&rrp, s, &cfg).unwrap()).collect();
        let erc = create_erc_set(&caps[first as usize..=last as usize], &cfg, FilterParams::new(4096, 5).unwrap()).unwrap();
        let erc = codec::decode_erc_set(&codec::encode_erc_set(&erc)).unwrap();
        for s in first..=last {
            prop_assert!(is_revoked_erc(&erc, &caps[s as usize]));
        }
    }
}
