//! Canonical byte encodings for capabilities, filters, endorsement bundles,
//! revocation orders, protocol messages and PM snapshots.
//!
//! Integers are big-endian. Filter bits keep the layout of
//! [`BloomFilter::bits`] so independently built filters stay mergeable.
//!
//! Messages use the frame `tag u8 ‖ len u32 ‖ payload`. Standalone files are
//! wrapped in an envelope `"EDGS" ‖ version ‖ tag ‖ len u32 ‖ payload`.

use thiserror::Error;

use crate::crypto::{PublicKey, Signature};
use crate::ercset::{BloomFilter, ErcSet, FilterParams, SALT_LEN};
use crate::pm::{IssueDenial, PmSnapshot, RevocationOrder};
use crate::pseudonym::{Capability, ClientId, Latchkey};
use crate::slot_tree::NodeLabel;
use crate::verifier::Decision;
use crate::wire::{AuthResponse, Endorsement, EndorsementBundle, FilterBundle, Message, RrpRequest, RrpResponse};

pub const VERSION: u8 = 0x01;
pub const CAPABILITY_MAGIC: [u8; 4] = *b"RRPC";
pub const FILTER_MAGIC: [u8; 4] = *b"ERCS";
pub const BUNDLE_MAGIC: [u8; 4] = *b"RRPE";
pub const ORDER_MAGIC: [u8; 4] = *b"RRPO";
pub const ENVELOPE_MAGIC: [u8; 4] = *b"EDGS";

/// Envelope tag of a PM snapshot file.
pub const SNAPSHOT_TAG: u8 = 0x10;

/// Largest payload a frame may declare.
pub const MAX_FRAME: u32 = 64 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("input truncated: need {needed} more bytes at offset {at}")]
    Truncated { at: usize, needed: usize },
    #[error("{0} trailing bytes after a complete value")]
    TrailingBytes(usize),
    #[error("bad magic {found:02x?}, expected {expected:02x?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown tag {0:#04x}")]
    UnknownTag(u8),
    #[error("declared length {0} exceeds the frame limit")]
    Oversized(u64),
    #[error("invalid field: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("a latchkey label belongs to epoch {label} inside a capability for epoch {capability}")]
    ForeignLabel { label: u64, capability: u64 },
    #[error("too many {0} for the length field")]
    TooMany(&'static str),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let left = self.buf.len() - self.pos;
        if left < n {
            return Err(DecodeError::Truncated { at: self.pos, needed: n - left });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), DecodeError> {
        let found = self.array::<4>()?;
        if found != expected {
            return Err(DecodeError::BadMagic { expected, found });
        }
        match self.u8()? {
            VERSION => Ok(()),
            v => Err(DecodeError::UnsupportedVersion(v)),
        }
    }

    fn finish(self) -> Result<(), DecodeError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

fn whole<'a, T>(bytes: &'a [u8], f: impl FnOnce(&mut Reader<'a>) -> Result<T, DecodeError>) -> Result<T, DecodeError> {
    let mut r = Reader::new(bytes);
    let v = f(&mut r)?;
    r.finish()?;
    Ok(v)
}

fn count_u8(n: usize, what: &'static str) -> Result<u8, EncodeError> {
    u8::try_from(n).map_err(|_| EncodeError::TooMany(what))
}

fn count_u32(n: usize, what: &'static str) -> Result<u32, EncodeError> {
    u32::try_from(n).map_err(|_| EncodeError::TooMany(what))
}

// ---- capability ----

/// `"RRPC" ‖ 0x01 ‖ epoch u64 ‖ pub 32 ‖ endorsement 64 ‖ count u8 ‖
/// count × (level u8 ‖ index u64 ‖ sig 64)`. Labels carry the capability's
/// epoch, so a latchkey for another epoch cannot be encoded.
pub fn encode_capability(cap: &Capability) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(110 + cap.latchkeys.len() * 73);
    write_capability(cap, &mut out)?;
    Ok(out)
}

fn write_capability(cap: &Capability, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let count = count_u8(cap.latchkeys.len(), "latchkeys")?;
    out.extend_from_slice(&CAPABILITY_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&cap.epoch_id.to_be_bytes());
    out.extend_from_slice(cap.pseudonym_pub.as_bytes());
    out.extend_from_slice(cap.endorsement.as_bytes());
    out.push(count);
    for l in &cap.latchkeys {
        if l.label.epoch_id != cap.epoch_id {
            return Err(EncodeError::ForeignLabel { label: l.label.epoch_id, capability: cap.epoch_id });
        }
        out.push(l.label.level);
        out.extend_from_slice(&l.label.index.to_be_bytes());
        out.extend_from_slice(l.sig.as_bytes());
    }
    Ok(())
}

fn read_capability(r: &mut Reader) -> Result<Capability, DecodeError> {
    r.magic(CAPABILITY_MAGIC)?;
    let epoch_id = r.u64()?;
    let pseudonym_pub = PublicKey(r.array()?);
    let endorsement = Signature(r.array()?);
    let count = r.u8()?;
    let mut latchkeys = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let level = r.u8()?;
        let index = r.u64()?;
        let sig = Signature(r.array()?);
        latchkeys.push(Latchkey { label: NodeLabel { epoch_id, level, index }, sig });
    }
    Ok(Capability { epoch_id, pseudonym_pub, endorsement, latchkeys })
}

pub fn decode_capability(bytes: &[u8]) -> Result<Capability, DecodeError> {
    whole(bytes, read_capability)
}

// ---- filter ----

/// `"ERCS" ‖ 0x01 ‖ epoch u64 ‖ m u64 ‖ k u8 ‖ salt 16 ‖ ceil(m/8) bytes`.
pub fn encode_filter(f: &BloomFilter) -> Vec<u8> {
    let mut out = Vec::with_capacity(38 + f.bits().len());
    write_filter(f, &mut out);
    out
}

fn write_filter(f: &BloomFilter, out: &mut Vec<u8>) {
    let p = f.params();
    out.extend_from_slice(&FILTER_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&f.epoch_id().to_be_bytes());
    out.extend_from_slice(&p.m.to_be_bytes());
    out.push(p.k);
    out.extend_from_slice(f.salt());
    out.extend_from_slice(f.bits());
}

fn read_filter(r: &mut Reader) -> Result<BloomFilter, DecodeError> {
    r.magic(FILTER_MAGIC)?;
    let epoch_id = r.u64()?;
    let m = r.u64()?;
    let k = r.u8()?;
    let salt: [u8; SALT_LEN] = r.array()?;
    let params = FilterParams::new(m, k).map_err(|_| DecodeError::Invalid("filter parameters"))?;
    let len = m.div_ceil(8);
    if len > MAX_FRAME as u64 {
        return Err(DecodeError::Oversized(len));
    }
    let bits = r.take(len as usize)?.to_vec();
    BloomFilter::from_parts(params, epoch_id, salt, bits).ok_or(DecodeError::Invalid("bits set beyond m"))
}

pub fn decode_filter(bytes: &[u8]) -> Result<BloomFilter, DecodeError> {
    whole(bytes, read_filter)
}

pub fn encode_erc_set(set: &ErcSet) -> Vec<u8> {
    encode_filter(&set.filter)
}

pub fn decode_erc_set(bytes: &[u8]) -> Result<ErcSet, DecodeError> {
    Ok(ErcSet { filter: decode_filter(bytes)? })
}

// ---- endorsement bundle ----

/// `"RRPE" ‖ 0x01 ‖ epoch u64 ‖ count u32 ‖ count × (instance u32 ‖ sig 64)`.
pub fn encode_bundle(b: &EndorsementBundle) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::new();
    write_bundle(b, &mut out)?;
    Ok(out)
}

fn write_bundle(b: &EndorsementBundle, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    out.extend_from_slice(&BUNDLE_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&b.epoch_id.to_be_bytes());
    out.extend_from_slice(&count_u32(b.items.len(), "endorsements")?.to_be_bytes());
    for e in &b.items {
        out.extend_from_slice(&e.instance.to_be_bytes());
        out.extend_from_slice(e.sig.as_bytes());
    }
    Ok(())
}

fn read_bundle(r: &mut Reader) -> Result<EndorsementBundle, DecodeError> {
    r.magic(BUNDLE_MAGIC)?;
    let epoch_id = r.u64()?;
    let count = r.u32()?;
    let mut items = Vec::with_capacity((count as usize).min(4096));
    for _ in 0..count {
        let instance = r.u32()?;
        if instance == 0 {
            return Err(DecodeError::Invalid("instance 0"));
        }
        items.push(Endorsement { instance, sig: Signature(r.array()?) });
    }
    Ok(EndorsementBundle { epoch_id, items })
}

pub fn decode_bundle(bytes: &[u8]) -> Result<EndorsementBundle, DecodeError> {
    whole(bytes, read_bundle)
}

// ---- revocation order ----

/// `"RRPO" ‖ 0x01 ‖ cid 32 ‖ rts u64 ‖ epoch u64 ‖ sig 64`.
pub fn encode_order(o: &RevocationOrder) -> Vec<u8> {
    let mut out = Vec::with_capacity(117);
    write_order(o, &mut out);
    out
}

fn write_order(o: &RevocationOrder, out: &mut Vec<u8>) {
    out.extend_from_slice(&ORDER_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&o.cid.0);
    out.extend_from_slice(&o.rts.to_be_bytes());
    out.extend_from_slice(&o.epoch_id.to_be_bytes());
    out.extend_from_slice(o.admin_sig.as_bytes());
}

fn read_order(r: &mut Reader) -> Result<RevocationOrder, DecodeError> {
    r.magic(ORDER_MAGIC)?;
    Ok(RevocationOrder {
        cid: ClientId(r.array()?),
        rts: r.u64()?,
        epoch_id: r.u64()?,
        admin_sig: Signature(r.array()?),
    })
}

pub fn decode_order(bytes: &[u8]) -> Result<RevocationOrder, DecodeError> {
    whole(bytes, read_order)
}

// ---- messages ----

fn write_filters(b: &FilterBundle, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    out.extend_from_slice(&b.clock_epoch.to_be_bytes());
    out.push(count_u8(b.filters.len(), "filters")?);
    for f in &b.filters {
        write_filter(&f.filter, out);
    }
    Ok(())
}

fn read_filters(r: &mut Reader) -> Result<FilterBundle, DecodeError> {
    let clock_epoch = r.u64()?;
    let n = r.u8()?;
    let filters = (0..n).map(|_| read_filter(r).map(|filter| ErcSet { filter })).collect::<Result<_, _>>()?;
    Ok(FilterBundle { clock_epoch, filters })
}

fn encode_payload(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::new();
    match msg {
        Message::RequestRrp(req) => {
            out.extend_from_slice(&req.cid.0);
            out.extend_from_slice(&req.epoch_id.to_be_bytes());
            out.extend_from_slice(&req.count.to_be_bytes());
            match &req.proof {
                None => out.push(0),
                Some(cap) => {
                    out.push(1);
                    write_capability(cap, &mut out)?;
                }
            }
        }
        Message::RrpResponse(RrpResponse::Issued(b)) => {
            out.push(0);
            write_bundle(b, &mut out)?;
        }
        Message::RrpResponse(RrpResponse::Denied { epoch_id, reason }) => {
            out.push(reason.code());
            out.extend_from_slice(&epoch_id.to_be_bytes());
        }
        Message::Revoke(o) => write_order(o, &mut out),
        Message::ErcPush(b) | Message::ErcPullResp(b) | Message::EpochReport(b) => write_filters(b, &mut out)?,
        Message::ErcPullReq { clock_epoch } => out.extend_from_slice(&clock_epoch.to_be_bytes()),
        Message::AuthRequest(cap) => write_capability(cap, &mut out)?,
        Message::AuthResponse(a) => {
            out.extend_from_slice(a.pseudonym_pub.as_bytes());
            out.push(a.decision.code());
        }
    }
    Ok(out)
}

fn decode_payload(tag: u8, payload: &[u8]) -> Result<Message, DecodeError> {
    whole(payload, |r| {
        Ok(match tag {
            0x01 => {
                let cid = ClientId(r.array()?);
                let epoch_id = r.u64()?;
                let count = r.u32()?;
                let proof = match r.u8()? {
                    0 => None,
                    1 => Some(read_capability(r)?),
                    _ => return Err(DecodeError::Invalid("proof flag")),
                };
                Message::RequestRrp(RrpRequest { cid, epoch_id, count, proof })
            }
            0x02 => match r.u8()? {
                0 => Message::RrpResponse(RrpResponse::Issued(read_bundle(r)?)),
                code => {
                    let reason = IssueDenial::from_code(code).ok_or(DecodeError::Invalid("denial code"))?;
                    Message::RrpResponse(RrpResponse::Denied { epoch_id: r.u64()?, reason })
                }
            },
            0x03 => Message::Revoke(read_order(r)?),
            0x04 => Message::ErcPush(read_filters(r)?),
            0x05 => Message::ErcPullReq { clock_epoch: r.u64()? },
            0x06 => Message::ErcPullResp(read_filters(r)?),
            0x07 => Message::EpochReport(read_filters(r)?),
            0x08 => Message::AuthRequest(read_capability(r)?),
            0x09 => {
                let pseudonym_pub = PublicKey(r.array()?);
                let decision = Decision::from_code(r.u8()?).ok_or(DecodeError::Invalid("decision code"))?;
                Message::AuthResponse(AuthResponse { pseudonym_pub, decision })
            }
            t => return Err(DecodeError::UnknownTag(t)),
        })
    })
}

/// `tag u8 ‖ len u32 ‖ payload`.
pub fn encode_message(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let payload = encode_payload(msg)?;
    let len = count_u32(payload.len(), "payload bytes")?;
    let mut out = Vec::with_capacity(5 + payload.len());
    out.push(msg.tag());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Splits one frame off the front of `bytes`; returns the tag, payload and
/// the number of bytes consumed.
pub fn read_frame(bytes: &[u8]) -> Result<(u8, &[u8], usize), DecodeError> {
    let mut r = Reader::new(bytes);
    let tag = r.u8()?;
    let len = r.u32()?;
    if len > MAX_FRAME {
        return Err(DecodeError::Oversized(len as u64));
    }
    let payload = r.take(len as usize)?;
    Ok((tag, payload, r.pos))
}

pub fn decode_message(bytes: &[u8]) -> Result<Message, DecodeError> {
    let (tag, payload, used) = read_frame(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - used));
    }
    decode_payload(tag, payload)
}

// ---- envelope and snapshot ----

pub fn seal(tag: u8, payload: &[u8]) -> Result<Vec<u8>, EncodeError> {
    let len = count_u32(payload.len(), "payload bytes")?;
    let mut out = Vec::with_capacity(10 + payload.len());
    out.extend_from_slice(&ENVELOPE_MAGIC);
    out.push(VERSION);
    out.push(tag);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn open(bytes: &[u8]) -> Result<(u8, &[u8]), DecodeError> {
    let mut r = Reader::new(bytes);
    r.magic(ENVELOPE_MAGIC)?;
    let tag = r.u8()?;
    let len = r.u32()?;
    let payload = r.take(len as usize)?;
    r.finish()?;
    Ok((tag, payload))
}

/// Snapshot payload: `epoch_now u64 ‖ n u32 ‖ n × (cid 32 ‖ enrolled u64) ‖
/// n u32 ‖ n × (cid 32 ‖ epoch u64 ‖ issued u32) ‖ n u8 ‖ filters`, sealed
/// under [`SNAPSHOT_TAG`]. Client ids are secrets; the file belongs inside the
/// trust boundary.
pub fn encode_snapshot(s: &PmSnapshot) -> Result<Vec<u8>, EncodeError> {
    let mut p = Vec::new();
    p.extend_from_slice(&s.epoch_now.to_be_bytes());
    p.extend_from_slice(&count_u32(s.registry.len(), "clients")?.to_be_bytes());
    for (cid, e) in &s.registry {
        p.extend_from_slice(&cid.0);
        p.extend_from_slice(&e.to_be_bytes());
    }
    p.extend_from_slice(&count_u32(s.issued.len(), "counters")?.to_be_bytes());
    for (cid, e, n) in &s.issued {
        p.extend_from_slice(&cid.0);
        p.extend_from_slice(&e.to_be_bytes());
        p.extend_from_slice(&n.to_be_bytes());
    }
    p.push(count_u8(s.filters.len(), "filters")?);
    for f in &s.filters {
        write_filter(&f.filter, &mut p);
    }
    seal(SNAPSHOT_TAG, &p)
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<PmSnapshot, DecodeError> {
    let (tag, payload) = open(bytes)?;
    if tag != SNAPSHOT_TAG {
        return Err(DecodeError::UnknownTag(tag));
    }
    whole(payload, |r| {
        let epoch_now = r.u64()?;
        let n = r.u32()?;
        let mut registry = Vec::with_capacity((n as usize).min(4096));
        for _ in 0..n {
            registry.push((ClientId(r.array()?), r.u64()?));
        }
        let n = r.u32()?;
        let mut issued = Vec::with_capacity((n as usize).min(4096));
        for _ in 0..n {
            issued.push((ClientId(r.array()?), r.u64()?, r.u32()?));
        }
        let n = r.u8()?;
        let filters = (0..n).map(|_| read_filter(r).map(|filter| ErcSet { filter })).collect::<Result<_, _>>()?;
        Ok(PmSnapshot { epoch_now, registry, issued, filters })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{det_key_gen, KeyPair, Seed};
    use crate::ercset::RevocationSet;
    use crate::pseudonym::{create_rrp, get_capability};
    use crate::slot_tree::EpochConfig;
    use crate::verifier::AuthDenial;
    use proptest::prelude::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pm() -> KeyPair {
        det_key_gen(&Seed([1; 32]))
    }

    fn fig3_cap(slot: u64) -> Capability {
        let cfg = EpochConfig::new(0, 60, 15, 2).unwrap();
        let r = create_rrp(ClientId([2; 32]), 0, 1, &pm(), 4).unwrap();
        get_capability(&r, slot, &cfg).unwrap()
    }

    fn filter() -> BloomFilter {
        let mut f = BloomFilter::new(FilterParams::new(1003, 3).unwrap(), 7);
        for s in 0..4 {
            for l in fig3_cap(s).latchkeys {
                f.insert_latchkey(&l.sig);
            }
        }
        f
    }

    fn all_messages() -> Vec<Message> {
        let order = RevocationOrder::sign(&pm(), ClientId([3; 32]), 2, 5);
        let fb = FilterBundle {
            clock_epoch: 7,
            filters: vec![ErcSet { filter: filter() }, ErcSet::empty(FilterParams::new(64, 2).unwrap(), 8)],
        };
        vec![
            Message::RequestRrp(RrpRequest { cid: ClientId([4; 32]), epoch_id: 1, count: 10, proof: None }),
            Message::RequestRrp(RrpRequest {
                cid: ClientId([4; 32]),
                epoch_id: 1,
                count: 10,
                proof: Some(fig3_cap(2)),
            }),
            Message::RrpResponse(RrpResponse::Issued(EndorsementBundle {
                epoch_id: 3,
                items: vec![
                    Endorsement { instance: 1, sig: Signature([9; 64]) },
                    Endorsement { instance: 2, sig: Signature([8; 64]) },
                ],
            })),
            Message::RrpResponse(RrpResponse::Denied { epoch_id: 3, reason: IssueDenial::Revoked }),
            Message::Revoke(order),
            Message::ErcPush(fb.clone()),
            Message::ErcPullReq { clock_epoch: 9 },
            Message::ErcPullResp(fb.clone()),
            Message::EpochReport(FilterBundle { clock_epoch: 1, filters: vec![] }),
            Message::AuthRequest(fig3_cap(0)),
            Message::AuthResponse(AuthResponse {
                pseudonym_pub: PublicKey([5; 32]),
                decision: Decision::Denied(AuthDenial::WrongSlot),
            }),
            Message::AuthResponse(AuthResponse { pseudonym_pub: PublicKey([5; 32]), decision: Decision::Granted }),
        ]
    }

    #[test]
    fn capability_layout() {
        let cap = fig3_cap(0);
        let bytes = encode_capability(&cap).unwrap();
        assert_eq!(&bytes[..5], b"RRPC\x01");
        assert_eq!(bytes.len(), 4 + 1 + 8 + 32 + 64 + 1 + 3 * (1 + 8 + 64));
        assert_eq!(bytes[109], 3);
        assert_eq!(decode_capability(&bytes).unwrap(), cap);
        assert_eq!(encode_capability(&decode_capability(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn foreign_label_refused() {
        let mut cap = fig3_cap(1);
        cap.latchkeys[0].label.epoch_id = 9;
        assert!(matches!(encode_capability(&cap), Err(EncodeError::ForeignLabel { .. })));
    }

    #[test]
    fn filter_layout() {
        let f = filter();
        let bytes = encode_filter(&f);
        assert_eq!(&bytes[..5], b"ERCS\x01");
        assert_eq!(&bytes[5..13], &7u64.to_be_bytes());
        assert_eq!(&bytes[13..21], &1003u64.to_be_bytes());
        assert_eq!(bytes[21], 3);
        assert_eq!(bytes.len(), 38 + 126);
        assert_eq!(decode_filter(&bytes).unwrap(), f);
    }

    #[test]
    fn flipped_magic() {
        let mut bytes = encode_filter(&filter());
        bytes[1] ^= 0x20;
        assert!(matches!(decode_filter(&bytes), Err(DecodeError::BadMagic { .. })));
        let mut bytes = encode_capability(&fig3_cap(0)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_capability(&bytes), Err(DecodeError::BadMagic { .. })));
    }

    #[test]
    fn version_truncation_and_trailing() {
        let mut bytes = encode_filter(&filter());
        bytes[4] = 2;
        assert_eq!(decode_filter(&bytes), Err(DecodeError::UnsupportedVersion(2)));
        let bytes = encode_filter(&filter());
        assert!(matches!(decode_filter(&bytes[..bytes.len() - 1]), Err(DecodeError::Truncated { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(decode_filter(&long), Err(DecodeError::TrailingBytes(1)));
        // bits past m must be zero
        let mut dirty = bytes;
        *dirty.last_mut().unwrap() |= 0x80;
        assert_eq!(decode_filter(&dirty), Err(DecodeError::Invalid("bits set beyond m")));
    }

    #[test]
    fn message_roundtrip() {
        for msg in all_messages() {
            let bytes = encode_message(&msg).unwrap();
            assert_eq!(bytes[0], msg.tag());
            assert_eq!(u32::from_be_bytes(bytes[1..5].try_into().unwrap()) as usize, bytes.len() - 5);
            assert_eq!(decode_message(&bytes).unwrap(), msg, "{}", msg.kind());
            for cut in [1, 4, bytes.len() - 1] {
                assert!(decode_message(&bytes[..cut]).is_err());
            }
        }
        assert_eq!(decode_message(&[0x42, 0, 0, 0, 0]), Err(DecodeError::UnknownTag(0x42)));
    }

    #[test]
    fn standalone_artifacts_roundtrip() {
        let order = RevocationOrder::sign(&pm(), ClientId([3; 32]), 2, 5);
        assert_eq!(decode_order(&encode_order(&order)).unwrap(), order);
        let b = EndorsementBundle { epoch_id: 1, items: vec![Endorsement { instance: 4, sig: Signature([1; 64]) }] };
        assert_eq!(decode_bundle(&encode_bundle(&b).unwrap()).unwrap(), b);
        let snap = PmSnapshot {
            epoch_now: 3,
            registry: vec![(ClientId([1; 32]), 0), (ClientId([2; 32]), 2)],
            issued: vec![(ClientId([1; 32]), 3, 10)],
            filters: vec![ErcSet { filter: filter() }],
        };
        let bytes = encode_snapshot(&snap).unwrap();
        assert_eq!(&bytes[..6], b"EDGS\x01\x10");
        assert_eq!(decode_snapshot(&bytes).unwrap(), snap);
        let mut bad = bytes.clone();
        bad[3] = b'T';
        assert!(matches!(decode_snapshot(&bad), Err(DecodeError::BadMagic { .. })));
    }

    #[test]
    fn encodings_are_injective_on_samples() {
        let mut seen = std::collections::HashSet::new();
        for msg in all_messages() {
            assert!(seen.insert(encode_message(&msg).unwrap()));
        }
        for s in 0..4 {
            assert!(seen.insert(encode_capability(&fig3_cap(s)).unwrap()));
        }
    }

    /// Random inputs, plus mutations of valid encodings, never panic.
    #[test]
    fn fuzz_decoders() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let seeds: Vec<Vec<u8>> = all_messages().iter().map(|m| encode_message(m).unwrap()).collect();
        for i in 0..100_000 {
            let bytes = if i % 2 == 0 {
                let len = rng.gen_range(0..256);
                let mut b = vec![0u8; len];
                rng.fill_bytes(&mut b);
                if len > 0 && i % 4 == 0 {
                    b[0] = rng.gen_range(1..=9);
                }
                b
            } else {
                let mut b = seeds[rng.gen_range(0..seeds.len())].clone();
                for _ in 0..rng.gen_range(1..4) {
                    let j = rng.gen_range(0..b.len());
                    b[j] = rng.gen();
                }
                if rng.gen_bool(0.3) {
                    b.truncate(rng.gen_range(0..b.len()));
                }
                b
            };
            let _ = decode_message(&bytes);
            let _ = decode_capability(&bytes);
            let _ = decode_filter(&bytes);
            let _ = decode_snapshot(&bytes);
            let _ = decode_order(&bytes);
            let _ = decode_bundle(&bytes);
        }
    }

    proptest! {
        #[test]
        fn capability_canonical(epoch in any::<u64>(), levels in proptest::collection::vec((any::<u8>(), any::<u64>(), any::<u8>()), 0..12), pk in any::<[u8; 32]>()) {
            let cap = Capability {
                epoch_id: epoch,
                pseudonym_pub: PublicKey(pk),
                endorsement: Signature([3; 64]),
                latchkeys: levels.iter().map(|(l, i, s)| Latchkey { label: NodeLabel { epoch_id: epoch, level: *l, index: *i }, sig: Signature([*s; 64]) }).collect(),
            };
            let bytes = encode_capability(&cap).unwrap();
            prop_assert_eq!(decode_capability(&bytes).unwrap(), cap);
        }

        #[test]
        fn filter_canonical(m in 8u64..2000, k in 1u8..8, epoch in any::<u64>(), items in proptest::collection::vec(any::<[u8; 8]>(), 0..20)) {
            let mut f = BloomFilter::new(FilterParams::new(m, k).unwrap(), epoch);
            for it in &items {
                f.insert(it);
            }
            let bytes = encode_filter(&f);
            let back = decode_filter(&bytes).unwrap();
            prop_assert_eq!(encode_filter(&back), bytes);
            prop_assert_eq!(back, f);
        }
    }
}
