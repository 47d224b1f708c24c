//! Binary timestamp file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset 0   "QITS"          magic
//! offset 4   u16             format version (1)
//! offset 6   u32             tick, picoseconds
//! offset 10  u8              channel count
//! offset 11  records         u64 tick + u8 channel, 9 bytes each
//! ```
//!
//! Records are ordered by `(tick, channel)`.

use std::io::{Read, Write};

use thiserror::Error;

use crate::detector::TimestampStream;

pub const MAGIC: [u8; 4] = *b"QITS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 11;
pub const RECORD_LEN: usize = 9;

#[derive(Debug, Error)]
pub enum TsFileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("invalid streams: {0}")]
    Streams(String),
}

fn format_err(offset: usize, message: impl Into<String>) -> TsFileError {
    TsFileError::Format { offset, message: message.into() }
}

/// Per-channel tick lists sharing one tick size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampFile {
    pub tick_ps: u32,
    pub channels: Vec<Vec<u64>>,
}

impl TimestampFile {
    /// Collects streams into channels `0..=max channel`.
    pub fn from_streams(streams: &[&TimestampStream]) -> Result<Self, TsFileError> {
        let Some(first) = streams.first() else {
            return Err(TsFileError::Streams("no streams".into()));
        };
        let tick_ps = first.tick_ps;
        let count = streams.iter().map(|s| s.channel as usize + 1).max().unwrap_or(0);
        let mut channels = vec![Vec::new(); count];
        let mut seen = vec![false; count];
        for s in streams {
            if s.tick_ps != tick_ps {
                return Err(TsFileError::Streams(format!(
                    "tick mismatch: {} ps vs {} ps",
                    s.tick_ps, tick_ps
                )));
            }
            if !s.is_sorted() {
                return Err(TsFileError::Streams(format!("channel {} is not sorted", s.channel)));
            }
            let c = s.channel as usize;
            if seen[c] {
                return Err(TsFileError::Streams(format!("channel {c} given twice")));
            }
            seen[c] = true;
            channels[c] = s.ticks.clone();
        }
        Ok(Self { tick_ps, channels })
    }

    pub fn channel_count(&self) -> u8 {
        self.channels.len() as u8
    }

    pub fn record_count(&self) -> usize {
        self.channels.iter().map(Vec::len).sum()
    }

    /// Largest tick in any channel plus one, or 0 when empty.
    pub fn inferred_duration_ticks(&self) -> u64 {
        self.channels.iter().filter_map(|c| c.last()).max().map_or(0, |&t| t + 1)
    }

    /// Stream of one channel. `duration_ticks` defaults to the inferred value.
    pub fn stream(&self, channel: u8, duration_ticks: Option<u64>) -> Option<TimestampStream> {
        let ticks = self.channels.get(channel as usize)?.clone();
        let duration = duration_ticks.unwrap_or_else(|| self.inferred_duration_ticks());
        Some(TimestampStream::new(ticks, channel, self.tick_ps, duration))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * self.record_count());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.tick_ps.to_le_bytes());
        out.push(self.channel_count());
        // k-way merge by (tick, channel)
        let mut cursors = vec![0usize; self.channels.len()];
        loop {
            let mut best: Option<(u64, usize)> = None;
            for (c, ticks) in self.channels.iter().enumerate() {
                if let Some(&t) = ticks.get(cursors[c]) {
                    if best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, c));
                    }
                }
            }
            let Some((t, c)) = best else { break };
            cursors[c] += 1;
            out.extend_from_slice(&t.to_le_bytes());
            out.push(c as u8);
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TsFileError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, TsFileError> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(format_err(0, "bad magic, expected \"QITS\""));
        }
        if bytes.len() < 6 {
            return Err(format_err(4, "truncated header: missing version"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(format_err(4, format!("unsupported version {version}")));
        }
        if bytes.len() < 10 {
            return Err(format_err(6, "truncated header: missing tick"));
        }
        let tick_ps = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        if tick_ps == 0 {
            return Err(format_err(6, "tick must be positive"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(format_err(10, "truncated header: missing channel count"));
        }
        let count = bytes[10] as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() % RECORD_LEN != 0 {
            let offset = HEADER_LEN + body.len() / RECORD_LEN * RECORD_LEN;
            return Err(format_err(offset, "truncated record"));
        }
        let mut channels: Vec<Vec<u64>> = vec![Vec::new(); count];
        for (i, rec) in body.chunks_exact(RECORD_LEN).enumerate() {
            let offset = HEADER_LEN + i * RECORD_LEN;
            let tick = u64::from_le_bytes(rec[..8].try_into().unwrap());
            let c = rec[8] as usize;
            if c >= count {
                return Err(format_err(offset + 8, format!("channel {c} not below channel count {count}")));
            }
            if channels[c].last().is_some_and(|&prev| tick < prev) {
                return Err(format_err(offset, format!("channel {c} timestamps decrease")));
            }
            channels[c].push(tick);
        }
        Ok(Self { tick_ps, channels })
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TsFileError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::parse(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TimestampFile {
        TimestampFile { tick_ps: 81, channels: vec![vec![1, 5, 5, 9], vec![0, 5, 20]] }
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let bytes = f.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 7 * RECORD_LEN);
        assert_eq!(TimestampFile::parse(&bytes).unwrap(), f);
        assert_eq!(f.inferred_duration_ticks(), 21);
    }

    #[test]
    fn records_sorted_by_tick_then_channel() {
        let bytes = sample().to_bytes();
        let recs: Vec<(u64, u8)> = bytes[HEADER_LEN..]
            .chunks_exact(RECORD_LEN)
            .map(|r| (u64::from_le_bytes(r[..8].try_into().unwrap()), r[8]))
            .collect();
        let mut sorted = recs.clone();
        sorted.sort();
        assert_eq!(recs, sorted);
    }

    #[test]
    fn empty_file_is_header_only() {
        let f = TimestampFile { tick_ps: 81, channels: vec![vec![], vec![]] };
        let bytes = f.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(TimestampFile::parse(&bytes).unwrap(), f);
    }

    fn offset_of(e: TsFileError) -> usize {
        match e {
            TsFileError::Format { offset, .. } => offset,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn errors_name_the_offset() {
        let good = sample().to_bytes();
        let mut b = good.clone();
        b[0] = b'X';
        assert_eq!(offset_of(TimestampFile::parse(&b).unwrap_err()), 0);
        let mut b = good.clone();
        b[4] = 2;
        assert_eq!(offset_of(TimestampFile::parse(&b).unwrap_err()), 4);
        let mut b = good.clone();
        b[6..10].copy_from_slice(&0u32.to_le_bytes());
        assert_eq!(offset_of(TimestampFile::parse(&b).unwrap_err()), 6);
        let b = &good[..good.len() - 3];
        assert_eq!(offset_of(TimestampFile::parse(b).unwrap_err()), HEADER_LEN + 6 * RECORD_LEN);
        let mut b = good.clone();
        b[HEADER_LEN + 8] = 7;
        assert_eq!(offset_of(TimestampFile::parse(&b).unwrap_err()), HEADER_LEN + 8);
        let mut b = good.clone();
        b[HEADER_LEN + RECORD_LEN..HEADER_LEN + RECORD_LEN + 8].copy_from_slice(&100u64.to_le_bytes());
        assert!(TimestampFile::parse(&b).is_err());
    }

    #[test]
    fn from_streams_rejects_mixed_ticks() {
        let a = TimestampStream::new(vec![1], 0, 81, 10);
        let b = TimestampStream::new(vec![1], 1, 80, 10);
        assert!(TimestampFile::from_streams(&[&a, &b]).is_err());
        let c = TimestampStream::new(vec![2, 1], 1, 81, 10);
        assert!(TimestampFile::from_streams(&[&a, &c]).is_err());
    }
}
