//! Device-to-pipeline clock alignment from round-trip handshakes.

use thiserror::Error;

use super::protocol::ClockProbe;
use crate::Micros;

pub const MIN_EXCHANGES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClockError {
    #[error("InsufficientExchanges: {0} exchanges, need at least {MIN_EXCHANGES}")]
    InsufficientExchanges(usize),
    #[error("InvalidExchange: receive time {recv_t} precedes send time {send_t}")]
    InvalidExchange { send_t: Micros, recv_t: Micros },
}

/// One completed round trip, all times in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockExchange {
    pub send_t: Micros,
    pub device_t: Micros,
    pub recv_t: Micros,
}

impl From<ClockProbe> for ClockExchange {
    fn from(p: ClockProbe) -> Self {
        ClockExchange {
            send_t: p.host_send,
            device_t: p.device,
            recv_t: p.host_recv,
        }
    }
}

/// `pipeline_time = device_time + offset`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockModel {
    pub offset: i64,
    pub confidence: usize,
}

impl ClockModel {
    pub fn to_pipeline(&self, device_time: Micros) -> Micros {
        let t = device_time as i128 + self.offset as i128;
        t.clamp(0, u64::MAX as i128) as Micros
    }
}

/// Median over exchanges of `(send_t + recv_t) / 2 - device_t`.
pub fn align_clock(exchanges: &[ClockExchange]) -> Result<ClockModel, ClockError> {
    if exchanges.len() < MIN_EXCHANGES {
        return Err(ClockError::InsufficientExchanges(exchanges.len()));
    }
    // Doubled offsets keep the half-microsecond midpoints exact.
    let mut doubled = Vec::with_capacity(exchanges.len());
    for e in exchanges {
        if e.recv_t < e.send_t {
            return Err(ClockError::InvalidExchange {
                send_t: e.send_t,
                recv_t: e.recv_t,
            });
        }
        doubled.push(e.send_t as i128 + e.recv_t as i128 - 2 * e.device_t as i128);
    }
    doubled.sort_unstable();
    let n = doubled.len();
    // Quadrupled median, then round half away from zero back to microseconds.
    let quad = if n % 2 == 1 {
        2 * doubled[n / 2]
    } else {
        doubled[n / 2 - 1] + doubled[n / 2]
    };
    let offset = if quad >= 0 { (quad + 2) / 4 } else { (quad - 2) / 4 };
    Ok(ClockModel {
        offset: offset as i64,
        confidence: n,
    })
}
