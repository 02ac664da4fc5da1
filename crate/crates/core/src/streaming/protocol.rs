//! Length-prefixed binary wire protocol between tracked devices and the
//! recording host. Little-endian throughout.
//!
//! ```text
//! magic 0xA5 0x55 | type u8 | payload length u32 | payload
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::geometry::Pose;
use crate::Micros;

pub const MAGIC: [u8; 2] = [0xA5, 0x55];
pub const HEADER_LEN: usize = 7;
pub const PROTOCOL_VERSION: u16 = 1;
/// Upper bound accepted by [`MessageReader`] before allocating a payload.
pub const MAX_PAYLOAD: u32 = 64 * 1024;

pub const TYPE_HELLO: u8 = 0x01;
pub const TYPE_SAMPLE: u8 = 0x02;
pub const TYPE_EVENT: u8 = 0x03;
pub const TYPE_CLOCK_PING: u8 = 0x04;
pub const TYPE_CLOCK_PONG: u8 = 0x05;
pub const TYPE_BYE: u8 = 0x06;

const SAMPLE_PAYLOAD_LEN: usize = 1 + 4 + 8 + 7 * 8 + 8 + 2 + 1;
const EVENT_PAYLOAD_LEN: usize = 1 + 8;
const CLOCK_PAYLOAD_LEN: usize = 4 + 3 * 8;

pub const BUTTON_TRIGGER: u16 = 1 << 0;
pub const BUTTON_B: u16 = 1 << 1;
pub const FLAG_TRACKING_LOST: u8 = 1 << 0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("BadMagic: expected a5 55, found {0:02x?}")]
    BadMagic(Vec<u8>),
    #[error("UnknownType: 0x{0:02x}")]
    UnknownType(u8),
    #[error("LengthMismatch: type 0x{msg_type:02x} declares {declared} payload bytes, expected {expected}")]
    LengthMismatch {
        msg_type: u8,
        declared: usize,
        expected: usize,
    },
    #[error("TruncatedPayload: need {needed} bytes, have {available}")]
    TruncatedPayload { needed: usize, available: usize },
    #[error("InvalidField: {0}")]
    InvalidField(&'static str),
}

#[derive(Debug, Error)]
pub enum StreamReadError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("Io: {0}")]
    Io(#[from] io::Error),
}

/// Tracked device producing a sample stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Source {
    LeftController = 0,
    RightController = 1,
    Hmd = 2,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::LeftController, Source::RightController, Source::Hmd];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    /// Bit in [`crate::streaming::SyncedFrame::validity`].
    pub fn validity_bit(self) -> u8 {
        1 << self.code()
    }

    pub fn name(self) -> &'static str {
        match self {
            Source::LeftController => "left",
            Source::RightController => "right",
            Source::Hmd => "head",
        }
    }

    pub fn is_controller(self) -> bool {
        self != Source::Hmd
    }
}

/// Event codes carried by EVENT messages. Unknown codes pass through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventCode(pub u8);

impl EventCode {
    pub const ZERO_POINT_RESET: EventCode = EventCode(1);
    pub const EPISODE_START: EventCode = EventCode(2);
    pub const EPISODE_STOP: EventCode = EventCode(3);
    pub const DOCK_CONFIRM: EventCode = EventCode(4);

    pub fn name(self) -> &'static str {
        match self.0 {
            1 => "zero_point_reset",
            2 => "episode_start",
            3 => "episode_stop",
            4 => "dock_confirm",
            _ => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub source: Source,
    pub seq: u32,
    pub device_time: Micros,
    /// Device body pose in the tracking frame.
    pub pose: Pose,
    /// meters; `None` for the headset (NaN on the wire)
    pub gripper_width: Option<f64>,
    pub buttons: u16,
    pub flags: u8,
}

impl StreamSample {
    pub fn tracking_lost(&self) -> bool {
        self.flags & FLAG_TRACKING_LOST != 0
    }
}

/// One clock-handshake exchange. A PING carries the host send time; the
/// device's PONG echoes it and adds its own clock reading; the host stamps
/// `host_recv` on receipt. Unset fields are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClockProbe {
    pub probe_id: u32,
    pub host_send: Micros,
    pub device: Micros,
    pub host_recv: Micros,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolMessage {
    Hello {
        proto_version: u16,
        source: Source,
        descriptor: String,
    },
    Sample(StreamSample),
    Event {
        code: EventCode,
        device_time: Micros,
    },
    ClockPing(ClockProbe),
    ClockPong(ClockProbe),
    Bye,
}

impl ProtocolMessage {
    pub fn type_code(&self) -> u8 {
        match self {
            ProtocolMessage::Hello { .. } => TYPE_HELLO,
            ProtocolMessage::Sample(_) => TYPE_SAMPLE,
            ProtocolMessage::Event { .. } => TYPE_EVENT,
            ProtocolMessage::ClockPing(_) => TYPE_CLOCK_PING,
            ProtocolMessage::ClockPong(_) => TYPE_CLOCK_PONG,
            ProtocolMessage::Bye => TYPE_BYE,
        }
    }
}

pub fn encode_message(msg: &ProtocolMessage) -> Vec<u8> {
    let mut payload = Vec::with_capacity(SAMPLE_PAYLOAD_LEN);
    match msg {
        ProtocolMessage::Hello {
            proto_version,
            source,
            descriptor,
        } => {
            payload.extend_from_slice(&proto_version.to_le_bytes());
            payload.push(source.code());
            let bytes = descriptor.as_bytes();
            let n = bytes.len().min(u16::MAX as usize);
            payload.extend_from_slice(&(n as u16).to_le_bytes());
            payload.extend_from_slice(&bytes[..n]);
        }
        ProtocolMessage::Sample(s) => {
            payload.push(s.source.code());
            payload.extend_from_slice(&s.seq.to_le_bytes());
            payload.extend_from_slice(&s.device_time.to_le_bytes());
            for v in s.pose.to_array() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            payload.extend_from_slice(&s.gripper_width.unwrap_or(f64::NAN).to_le_bytes());
            payload.extend_from_slice(&s.buttons.to_le_bytes());
            payload.push(s.flags);
        }
        ProtocolMessage::Event { code, device_time } => {
            payload.push(code.0);
            payload.extend_from_slice(&device_time.to_le_bytes());
        }
        ProtocolMessage::ClockPing(p) | ProtocolMessage::ClockPong(p) => {
            payload.extend_from_slice(&p.probe_id.to_le_bytes());
            payload.extend_from_slice(&p.host_send.to_le_bytes());
            payload.extend_from_slice(&p.device.to_le_bytes());
            payload.extend_from_slice(&p.host_recv.to_le_bytes());
        }
        ProtocolMessage::Bye => {}
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(msg.type_code());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Parsed message header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub msg_type: u8,
    pub payload_len: u32,
}

pub fn decode_header(bytes: &[u8]) -> Result<FrameHeader, ProtocolError> {
    let have = bytes.len().min(2);
    if bytes[..have] != MAGIC[..have] {
        return Err(ProtocolError::BadMagic(bytes[..have].to_vec()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::TruncatedPayload {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let msg_type = bytes[2];
    if !(TYPE_HELLO..=TYPE_BYE).contains(&msg_type) {
        return Err(ProtocolError::UnknownType(msg_type));
    }
    let payload_len = u32::from_le_bytes(bytes[3..7].try_into().unwrap());
    Ok(FrameHeader {
        msg_type,
        payload_len,
    })
}

/// Decodes exactly one message occupying the whole buffer.
pub fn decode_message(bytes: &[u8]) -> Result<ProtocolMessage, ProtocolError> {
    let (msg, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        let h = decode_header(bytes)?;
        return Err(ProtocolError::LengthMismatch {
            msg_type: h.msg_type,
            declared: h.payload_len as usize,
            expected: bytes.len() - HEADER_LEN,
        });
    }
    Ok(msg)
}

/// Decodes the first message in `bytes`, returning it with the number of
/// bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(ProtocolMessage, usize), ProtocolError> {
    let h = decode_header(bytes)?;
    let len = h.payload_len as usize;
    let total = HEADER_LEN.saturating_add(len);
    if bytes.len() < total {
        return Err(ProtocolError::TruncatedPayload {
            needed: total,
            available: bytes.len(),
        });
    }
    let msg = decode_payload(h.msg_type, &bytes[HEADER_LEN..total])?;
    Ok((msg, total))
}

fn expect_len(msg_type: u8, payload: &[u8], expected: usize) -> Result<(), ProtocolError> {
    if payload.len() != expected {
        return Err(ProtocolError::LengthMismatch {
            msg_type,
            declared: payload.len(),
            expected,
        });
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.buf[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

fn decode_payload(msg_type: u8, p: &[u8]) -> Result<ProtocolMessage, ProtocolError> {
    let mut c = Cursor { buf: p, pos: 0 };
    let source = |code: u8| Source::from_code(code).ok_or(ProtocolError::InvalidField("source"));
    match msg_type {
        TYPE_HELLO => {
            if p.len() < 5 {
                return Err(ProtocolError::LengthMismatch {
                    msg_type,
                    declared: p.len(),
                    expected: 5,
                });
            }
            let proto_version = c.u16();
            let src = source(c.u8())?;
            let n = c.u16() as usize;
            expect_len(msg_type, p, 5 + n)?;
            let descriptor = std::str::from_utf8(&p[5..])
                .map_err(|_| ProtocolError::InvalidField("descriptor utf-8"))?
                .to_owned();
            Ok(ProtocolMessage::Hello {
                proto_version,
                source: src,
                descriptor,
            })
        }
        TYPE_SAMPLE => {
            expect_len(msg_type, p, SAMPLE_PAYLOAD_LEN)?;
            let src = source(c.u8())?;
            let seq = c.u32();
            let device_time = c.u64();
            let mut a = [0.0; 7];
            for v in &mut a {
                *v = c.f64();
            }
            let width = c.f64();
            Ok(ProtocolMessage::Sample(StreamSample {
                source: src,
                seq,
                device_time,
                pose: Pose::from_array(a),
                gripper_width: if width.is_nan() { None } else { Some(width) },
                buttons: c.u16(),
                flags: c.u8(),
            }))
        }
        TYPE_EVENT => {
            expect_len(msg_type, p, EVENT_PAYLOAD_LEN)?;
            Ok(ProtocolMessage::Event {
                code: EventCode(c.u8()),
                device_time: c.u64(),
            })
        }
        TYPE_CLOCK_PING | TYPE_CLOCK_PONG => {
            expect_len(msg_type, p, CLOCK_PAYLOAD_LEN)?;
            let probe = ClockProbe {
                probe_id: c.u32(),
                host_send: c.u64(),
                device: c.u64(),
                host_recv: c.u64(),
            };
            Ok(if msg_type == TYPE_CLOCK_PING {
                ProtocolMessage::ClockPing(probe)
            } else {
                ProtocolMessage::ClockPong(probe)
            })
        }
        TYPE_BYE => {
            expect_len(msg_type, p, 0)?;
            Ok(ProtocolMessage::Bye)
        }
        other => Err(ProtocolError::UnknownType(other)),
    }
}

pub fn write_message<W: Write>(w: &mut W, msg: &ProtocolMessage) -> io::Result<()> {
    w.write_all(&encode_message(msg))
}

/// Pulls messages off an ordered byte stream.
pub struct MessageReader<R> {
    inner: R,
}

impl<R: Read> MessageReader<R> {
    pub fn new(inner: R) -> Self {
        MessageReader { inner }
    }

    /// `Ok(None)` on a clean end of stream between messages.
    pub fn next_message(&mut self) -> Result<Option<ProtocolMessage>, StreamReadError> {
        let mut header = [0u8; HEADER_LEN];
        let mut got = 0;
        while got < HEADER_LEN {
            let n = self.inner.read(&mut header[got..])?;
            if n == 0 {
                if got == 0 {
                    return Ok(None);
                }
                decode_header(&header[..got])?;
                return Err(ProtocolError::TruncatedPayload {
                    needed: HEADER_LEN,
                    available: got,
                }
                .into());
            }
            got += n;
        }
        let h = decode_header(&header)?;
        if h.payload_len > MAX_PAYLOAD {
            return Err(ProtocolError::LengthMismatch {
                msg_type: h.msg_type,
                declared: h.payload_len as usize,
                expected: MAX_PAYLOAD as usize,
            }
            .into());
        }
        let mut buf = header.to_vec();
        buf.resize(HEADER_LEN + h.payload_len as usize, 0);
        let mut filled = HEADER_LEN;
        while filled < buf.len() {
            let n = self.inner.read(&mut buf[filled..])?;
            if n == 0 {
                return Err(ProtocolError::TruncatedPayload {
                    needed: buf.len(),
                    available: filled,
                }
                .into());
            }
            filled += n;
        }
        Ok(Some(decode_message(&buf)?))
    }

    pub fn into_inner(self) -> R {
        self.inner
    }
}

impl<R: Read> Iterator for MessageReader<R> {
    type Item = Result<ProtocolMessage, StreamReadError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_message().transpose()
    }
}
