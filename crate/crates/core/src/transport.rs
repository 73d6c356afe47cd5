//! Channel messages and the on-disk container for encoded runs.
//!
//! Container layout (all integers big-endian):
//!
//! ```text
//! magic        4 bytes  "OCCZ"
//! version      u16      1
//! mode         u8       0 = sync, 1 = async
//! coder        u8       0 = shannon, 1 = huffman
//! alpha        f64
//! gamma1       f64
//! eta1         f64
//! beta         f64
//! predictor    u64      predictor fingerprint
//! alphabet     u32
//! steps        u64
//! payload_bits u64      sum of payload bits
//! body
//! crc32        u32      over header and body
//! ```
//!
//! The sync body holds one record per slot: a present byte (0 or 1) and, for
//! present slots, an unsigned LEB128 bit length followed by the payload bytes.
//! The async body is the concatenated bitstream, `ceil(payload_bits / 8)`
//! bytes. Bits are packed MSB-first and padding bits are zero.

use std::io::Read;

use thiserror::Error;

use crate::codec::{CoderBackend, Mode, StepOutcome};
use crate::coder::BitString;
use crate::conformal::ConformalConfig;

pub const CONTAINER_MAGIC: [u8; 4] = *b"OCCZ";
pub const CONTAINER_VERSION: u16 = 1;
/// Conventional file extension.
pub const CONTAINER_EXTENSION: &str = "occ";

const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 4 * 8 + 8 + 4 + 8 + 8;
const CHECKSUM_LEN: usize = 4;

/// What the encoder puts on the channel in one slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SlotMessage {
    /// Nothing transmitted.
    Absent,
    /// A frame, possibly with zero payload bits.
    Present(BitString),
}

impl SlotMessage {
    pub fn bit_len(&self) -> usize {
        match self {
            SlotMessage::Absent => 0,
            SlotMessage::Present(bits) => bits.len(),
        }
    }

    pub fn is_present(&self) -> bool {
        matches!(self, SlotMessage::Present(_))
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("not a container (bad magic bytes)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("container truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("invalid field {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("payload accounting mismatch: header says {header} bits, body holds {body}")]
    PayloadMismatch { header: u64, body: u64 },
    #[error("{0} trailing bytes after body")]
    TrailingBytes(usize),
    #[error("body does not match mode {0}")]
    BodyMode(&'static str),
}

/// Everything the decoder needs besides the predictor itself.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ContainerHeader {
    pub mode: Mode,
    pub coder: CoderBackend,
    pub conformal: ConformalConfig,
    pub predictor_hash: u64,
    pub alphabet_size: u32,
    pub steps: u64,
    pub payload_bits: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContainerBody {
    Slots(Vec<SlotMessage>),
    Stream(BitString),
}

impl ContainerBody {
    pub fn payload_bits(&self) -> u64 {
        match self {
            ContainerBody::Slots(slots) => slots.iter().map(|s| s.bit_len() as u64).sum(),
            ContainerBody::Stream(bits) => bits.len() as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamContainer {
    pub header: ContainerHeader,
    pub body: ContainerBody,
}

impl StreamContainer {
    /// Packs encoder output. Async messages are concatenated into one stream.
    pub fn from_outcomes(
        mode: Mode,
        coder: CoderBackend,
        conformal: ConformalConfig,
        predictor_hash: u64,
        alphabet_size: u32,
        outcomes: &[StepOutcome],
    ) -> Self {
        let body = match mode {
            Mode::Sync => {
                ContainerBody::Slots(outcomes.iter().map(|o| o.message.clone()).collect())
            }
            Mode::Async => {
                let mut stream = BitString::new();
                for o in outcomes {
                    if let SlotMessage::Present(bits) = &o.message {
                        stream.extend_from(bits);
                    }
                }
                ContainerBody::Stream(stream)
            }
        };
        StreamContainer {
            header: ContainerHeader {
                mode,
                coder,
                conformal,
                predictor_hash,
                alphabet_size,
                steps: outcomes.len() as u64,
                payload_bits: body.payload_bits(),
            },
            body,
        }
    }

    /// Serialized size in bits minus payload bits.
    pub fn wire_overhead_bits(&self) -> u64 {
        write_container(self).len() as u64 * 8 - self.header.payload_bits
    }
}

fn mode_byte(mode: Mode) -> u8 {
    match mode {
        Mode::Sync => 0,
        Mode::Async => 1,
    }
}

fn coder_byte(coder: CoderBackend) -> u8 {
    match coder {
        CoderBackend::Shannon => 0,
        CoderBackend::Huffman => 1,
    }
}

/// Serializes a container. The header's step and payload counts are taken
/// from the body.
pub fn write_container(container: &StreamContainer) -> Vec<u8> {
    let h = &container.header;
    let body = &container.body;
    let steps = match body {
        ContainerBody::Slots(slots) => slots.len() as u64,
        ContainerBody::Stream(_) => h.steps,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + CHECKSUM_LEN);
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_be_bytes());
    out.push(mode_byte(h.mode));
    out.push(coder_byte(h.coder));
    for v in [
        h.conformal.alpha,
        h.conformal.gamma1,
        h.conformal.eta1,
        h.conformal.beta,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&h.predictor_hash.to_be_bytes());
    out.extend_from_slice(&h.alphabet_size.to_be_bytes());
    out.extend_from_slice(&steps.to_be_bytes());
    out.extend_from_slice(&body.payload_bits().to_be_bytes());
    match body {
        ContainerBody::Slots(slots) => {
            for slot in slots {
                match slot {
                    SlotMessage::Absent => out.push(0),
                    SlotMessage::Present(bits) => {
                        out.push(1);
                        leb128::write::unsigned(&mut out, bits.len() as u64)
                            .expect("writing to a Vec cannot fail");
                        out.extend_from_slice(bits.as_bytes());
                    }
                }
            }
        }
        ContainerBody::Stream(bits) => out.extend_from_slice(bits.as_bytes()),
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TransportError> {
        if self.bytes.len() < n {
            return Err(TransportError::Truncated);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], TransportError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, TransportError> {
        Ok(self.array::<1>()?[0])
    }

    fn u64(&mut self) -> Result<u64, TransportError> {
        self.array().map(u64::from_be_bytes)
    }

    fn f64(&mut self) -> Result<f64, TransportError> {
        self.array().map(f64::from_be_bytes)
    }

    fn varint(&mut self) -> Result<u64, TransportError> {
        let mut reader = self.bytes;
        let v = leb128::read::unsigned(&mut reader).map_err(|e| match e {
            leb128::read::Error::IoError(_) => TransportError::Truncated,
            leb128::read::Error::Overflow => TransportError::InvalidField {
                field: "bitlen",
                reason: "varint overflow".into(),
            },
        })?;
        self.bytes = reader;
        Ok(v)
    }

    fn bits(&mut self, len: u64, field: &'static str) -> Result<BitString, TransportError> {
        let len = usize::try_from(len).map_err(|_| TransportError::Truncated)?;
        let bytes = self.take(len.div_ceil(8))?.to_vec();
        let bits = BitString::from_bytes(bytes.clone(), len).map_err(|e| {
            TransportError::InvalidField {
                field,
                reason: e.to_string(),
            }
        })?;
        if bits.as_bytes() != bytes.as_slice() {
            return Err(TransportError::InvalidField {
                field,
                reason: "nonzero padding bits".into(),
            });
        }
        Ok(bits)
    }
}

/// Parses and verifies a container.
pub fn read_container(bytes: &[u8]) -> Result<StreamContainer, TransportError> {
    if bytes.len() < 4 || bytes[..4] != CONTAINER_MAGIC {
        return Err(TransportError::BadMagic);
    }
    if bytes.len() >= 6 {
        let version = u16::from_be_bytes([bytes[4], bytes[5]]);
        if version != CONTAINER_VERSION {
            return Err(TransportError::UnsupportedVersion(version));
        }
    }
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(TransportError::Truncated);
    }
    let (content, crc) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let stored = u32::from_be_bytes(crc.try_into().expect("length checked"));
    let computed = crc32fast::hash(content);
    if stored != computed {
        return Err(TransportError::Checksum { stored, computed });
    }

    let mut cur = Cursor {
        bytes: &content[6..],
    };
    let mode = match cur.u8()? {
        0 => Mode::Sync,
        1 => Mode::Async,
        b => {
            return Err(TransportError::InvalidField {
                field: "mode",
                reason: format!("unknown value {b}"),
            })
        }
    };
    let coder = match cur.u8()? {
        0 => CoderBackend::Shannon,
        1 => CoderBackend::Huffman,
        b => {
            return Err(TransportError::InvalidField {
                field: "coder",
                reason: format!("unknown value {b}"),
            })
        }
    };
    let conformal = ConformalConfig {
        alpha: cur.f64()?,
        gamma1: cur.f64()?,
        eta1: cur.f64()?,
        beta: cur.f64()?,
    };
    let predictor_hash = cur.u64()?;
    let alphabet_size = u32::from_be_bytes(cur.array()?);
    let steps = cur.u64()?;
    let payload_bits = cur.u64()?;

    let body = match mode {
        Mode::Sync => {
            let mut slots = Vec::new();
            for _ in 0..steps {
                let slot = match cur.u8()? {
                    0 => SlotMessage::Absent,
                    1 => {
                        let len = cur.varint()?;
                        SlotMessage::Present(cur.bits(len, "slot payload")?)
                    }
                    b => {
                        return Err(TransportError::InvalidField {
                            field: "present",
                            reason: format!("unknown value {b}"),
                        })
                    }
                };
                slots.push(slot);
            }
            ContainerBody::Slots(slots)
        }
        Mode::Async => ContainerBody::Stream(cur.bits(payload_bits, "stream")?),
    };
    if !cur.bytes.is_empty() {
        return Err(TransportError::TrailingBytes(cur.bytes.len()));
    }
    let body_bits = body.payload_bits();
    if body_bits != payload_bits {
        return Err(TransportError::PayloadMismatch {
            header: payload_bits,
            body: body_bits,
        });
    }
    Ok(StreamContainer {
        header: ContainerHeader {
            mode,
            coder,
            conformal,
            predictor_hash,
            alphabet_size,
            steps,
            payload_bits,
        },
        body,
    })
}

/// Reads a whole container from `reader`.
pub fn read_container_from<R: Read>(mut reader: R) -> Result<StreamContainer, ContainerIoError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    Ok(read_container(&bytes)?)
}

#[derive(Debug, Error)]
pub enum ContainerIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] TransportError),
}
