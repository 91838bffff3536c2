//! Fixed 40-byte request/response records — the IPC ABI.
//!
//! Layout is little-endian and frozen so a cross-process port changes no
//! logic. Payloads never travel inline: a record references a registered
//! region by (region, offset, length).
//!
//! ```text
//! RequestRecord (40 bytes)            ResponseRecord (40 bytes)
//!  0  op: u8                           0  kind: u8
//!  1  pad: [u8; 3]                     1  pad: [u8; 3]
//!  4  fd: u32                          4  fd: u32
//!  8  region: u32                      8  region: u32
//! 12  offset: u64                     12  offset: u64
//! 20  length: u64                     20  length: u64 (byte_count)
//! 28  flags: u32                      28  status: u32
//! 32  seq: u64                        32  seq: u64
//! ```

pub const RECORD_BYTES: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum OpCode {
    Connect = 1,
    Send = 2,
    RecvReady = 3,
    Close = 4,
}

impl OpCode {
    pub fn from_u8(v: u8) -> Option<OpCode> {
        match v {
            1 => Some(OpCode::Connect),
            2 => Some(OpCode::Send),
            3 => Some(OpCode::RecvReady),
            4 => Some(OpCode::Close),
            _ => None,
        }
    }
}

/// What a response record carries: a reply to a request, unsolicited
/// inbound data, or the peer-closed marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum RespKind {
    Reply = 1,
    Data = 2,
    Eof = 3,
}

impl RespKind {
    pub fn from_u8(v: u8) -> Option<RespKind> {
        match v {
            1 => Some(RespKind::Reply),
            2 => Some(RespKind::Data),
            3 => Some(RespKind::Eof),
            _ => None,
        }
    }
}

pub const STATUS_OK: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestRecord {
    pub op: OpCode,
    pub fd: u32,
    pub region: u32,
    pub offset: u64,
    pub length: u64,
    pub flags: u32,
    pub seq: u64,
}

impl RequestRecord {
    pub fn to_bytes(&self) -> [u8; RECORD_BYTES] {
        let mut b = [0u8; RECORD_BYTES];
        b[0] = self.op as u8;
        b[4..8].copy_from_slice(&self.fd.to_le_bytes());
        b[8..12].copy_from_slice(&self.region.to_le_bytes());
        b[12..20].copy_from_slice(&self.offset.to_le_bytes());
        b[20..28].copy_from_slice(&self.length.to_le_bytes());
        b[28..32].copy_from_slice(&self.flags.to_le_bytes());
        b[32..40].copy_from_slice(&self.seq.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; RECORD_BYTES]) -> Option<RequestRecord> {
        Some(RequestRecord {
            op: OpCode::from_u8(b[0])?,
            fd: u32::from_le_bytes(b[4..8].try_into().unwrap()),
            region: u32::from_le_bytes(b[8..12].try_into().unwrap()),
            offset: u64::from_le_bytes(b[12..20].try_into().unwrap()),
            length: u64::from_le_bytes(b[20..28].try_into().unwrap()),
            flags: u32::from_le_bytes(b[28..32].try_into().unwrap()),
            seq: u64::from_le_bytes(b[32..40].try_into().unwrap()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseRecord {
    pub kind: RespKind,
    pub fd: u32,
    pub region: u32,
    pub offset: u64,
    /// Bytes transferred (byte_count).
    pub length: u64,
    pub status: u32,
    pub seq: u64,
}

impl ResponseRecord {
    pub fn reply(fd: u32, seq: u64, status: u32, byte_count: u64) -> Self {
        ResponseRecord {
            kind: RespKind::Reply,
            fd,
            region: 0,
            offset: 0,
            length: byte_count,
            status,
            seq,
        }
    }

    pub fn to_bytes(&self) -> [u8; RECORD_BYTES] {
        let mut b = [0u8; RECORD_BYTES];
        b[0] = self.kind as u8;
        b[4..8].copy_from_slice(&self.fd.to_le_bytes());
        b[8..12].copy_from_slice(&self.region.to_le_bytes());
        b[12..20].copy_from_slice(&self.offset.to_le_bytes());
        b[20..28].copy_from_slice(&self.length.to_le_bytes());
        b[28..32].copy_from_slice(&self.status.to_le_bytes());
        b[32..40].copy_from_slice(&self.seq.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; RECORD_BYTES]) -> Option<ResponseRecord> {
        Some(ResponseRecord {
            kind: RespKind::from_u8(b[0])?,
            fd: u32::from_le_bytes(b[4..8].try_into().unwrap()),
            region: u32::from_le_bytes(b[8..12].try_into().unwrap()),
            offset: u64::from_le_bytes(b[12..20].try_into().unwrap()),
            length: u64::from_le_bytes(b[20..28].try_into().unwrap()),
            status: u32::from_le_bytes(b[28..32].try_into().unwrap()),
            seq: u64::from_le_bytes(b[32..40].try_into().unwrap()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_golden_bytes() {
        let r = RequestRecord {
            op: OpCode::Send,
            fd: 0x0102_0304,
            region: 0x0a0b_0c0d,
            offset: 0x1122_3344_5566_7788,
            length: 0x0000_0000_0001_0000,
            flags: 0x9000_0001,
            seq: 7,
        };
        let b = r.to_bytes();
        assert_eq!(b.len(), 40);
        assert_eq!(b[0], 2);
        assert_eq!(&b[1..4], &[0, 0, 0]); // pad
        assert_eq!(&b[4..8], &[0x04, 0x03, 0x02, 0x01]);
        assert_eq!(&b[8..12], &[0x0d, 0x0c, 0x0b, 0x0a]);
        assert_eq!(&b[12..20], &[0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11]);
        assert_eq!(&b[20..28], &[0, 0, 1, 0, 0, 0, 0, 0]);
        assert_eq!(&b[28..32], &[0x01, 0x00, 0x00, 0x90]);
        assert_eq!(&b[32..40], &[7, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(RequestRecord::from_bytes(&b), Some(r));
    }

    #[test]
    fn response_roundtrip_and_bad_kind() {
        let r = ResponseRecord {
            kind: RespKind::Data,
            fd: 3,
            region: 9,
            offset: 4096,
            length: 65536,
            status: STATUS_OK,
            seq: 42,
        };
        let b = r.to_bytes();
        assert_eq!(ResponseRecord::from_bytes(&b), Some(r));

        let mut bad = b;
        bad[0] = 0xff;
        assert_eq!(ResponseRecord::from_bytes(&bad), None);
    }
}
