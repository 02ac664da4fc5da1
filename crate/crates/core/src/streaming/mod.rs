//! Device streams: wire protocol, clock alignment and fixed-rate resampling.

pub mod clock;
pub mod protocol;
pub mod resample;

pub use clock::{align_clock, ClockError, ClockExchange, ClockModel};
pub use protocol::{
    decode_message, decode_prefix, encode_message, write_message, ClockProbe, EventCode,
    MessageReader, ProtocolError, ProtocolMessage, Source, StreamReadError, StreamSample,
    BUTTON_B, BUTTON_TRIGGER, FLAG_TRACKING_LOST, PROTOCOL_VERSION,
};
pub use resample::{
    resample, tick_time, ResampleConfig, ResampleError, Resampled, SourceStreams, SyncedFrame,
    ALL_VALID, DEFAULT_HOLD_LIMIT, DEFAULT_RATE_HZ,
};
