//! Protocol messages exchanged between PMs, verifiers, clients and the
//! administrator. Byte encodings live in [`crate::codec`].

use crate::crypto::{PublicKey, Signature};
use crate::ercset::ErcSet;
use crate::pm::{IssueDenial, RevocationOrder};
use crate::pseudonym::{Capability, ClientId};
use crate::verifier::Decision;

/// Transport address of a simulated node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Addr {
    Admin,
    Pm(u32),
    Verifier(u32),
    Client(u32),
}

impl std::fmt::Display for Addr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Addr::Admin => write!(f, "admin"),
            Addr::Pm(i) => write!(f, "pm{i}"),
            Addr::Verifier(i) => write!(f, "v{i}"),
            Addr::Client(i) => write!(f, "c{i}"),
        }
    }
}

/// PM endorsement of one pseudonym instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endorsement {
    pub instance: u32,
    pub sig: Signature,
}

/// What a PM hands back on issuance; the client rebuilds the key pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndorsementBundle {
    pub epoch_id: u64,
    pub items: Vec<Endorsement>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RrpRequest {
    pub cid: ClientId,
    pub epoch_id: u64,
    pub count: u32,
    pub proof: Option<Capability>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RrpResponse {
    Issued(EndorsementBundle),
    Denied { epoch_id: u64, reason: IssueDenial },
}

/// Filters a node holds, stamped with the sender's clock epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterBundle {
    pub clock_epoch: u64,
    pub filters: Vec<ErcSet>,
}

impl FilterBundle {
    pub fn filter_for(&self, epoch_id: u64) -> Option<&ErcSet> {
        self.filters.iter().find(|f| f.epoch_id() == epoch_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthResponse {
    pub pseudonym_pub: PublicKey,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    RequestRrp(RrpRequest),
    RrpResponse(RrpResponse),
    Revoke(RevocationOrder),
    ErcPush(FilterBundle),
    ErcPullReq { clock_epoch: u64 },
    ErcPullResp(FilterBundle),
    EpochReport(FilterBundle),
    AuthRequest(Capability),
    AuthResponse(AuthResponse),
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::RequestRrp(_) => 0x01,
            Message::RrpResponse(_) => 0x02,
            Message::Revoke(_) => 0x03,
            Message::ErcPush(_) => 0x04,
            Message::ErcPullReq { .. } => 0x05,
            Message::ErcPullResp(_) => 0x06,
            Message::EpochReport(_) => 0x07,
            Message::AuthRequest(_) => 0x08,
            Message::AuthResponse(_) => 0x09,
        }
    }

    pub fn kind(&self) -> &'static str {
        tag_name(self.tag())
    }
}

pub fn tag_name(tag: u8) -> &'static str {
    match tag {
        0x01 => "requestRRP",
        0x02 => "rrpResponse",
        0x03 => "revoke",
        0x04 => "ercPush",
        0x05 => "ercPullReq",
        0x06 => "ercPullResp",
        0x07 => "epochReport",
        0x08 => "authRequest",
        0x09 => "authResponse",
        _ => "unknown",
    }
}

/// Side effect requested by a node handler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: Addr,
    pub msg: Message,
}
