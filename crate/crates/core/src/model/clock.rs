use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimestampError {
    #[error("frame name {0:?} does not match the configured pattern")]
    UnparseableName(String),
    #[error("frame rate must be positive")]
    BadFrameRate,
}

/// Filename pattern `<prefix><zero-padded index>.<ext>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePattern {
    pub prefix: String,
    pub pad: usize,
    pub ext: String,
}

impl Default for FramePattern {
    fn default() -> Self {
        FramePattern {
            prefix: String::from("frame_"),
            pad: 6,
            ext: String::from("jpg"),
        }
    }
}

impl FramePattern {
    /// Frame index encoded in `name`.
    pub fn index(&self, name: &str) -> Result<u64, TimestampError> {
        let bad = || TimestampError::UnparseableName(name.into());
        let rest = name.strip_prefix(self.prefix.as_str()).ok_or_else(bad)?;
        let (digits, ext) = rest.rsplit_once('.').ok_or_else(bad)?;
        if ext != self.ext || digits.is_empty() || digits.len() < self.pad {
            return Err(bad());
        }
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        // Wider-than-pad numbers must not carry extra leading zeros.
        if digits.len() > self.pad && self.pad > 0 && digits.starts_with('0') {
            return Err(bad());
        }
        digits.parse().map_err(|_| bad())
    }

    pub fn name(&self, index: u64) -> String {
        format!("{}{:0width$}.{}", self.prefix, index, self.ext, width = self.pad)
    }
}

/// Pattern plus sampling rate: converts frame names to seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameClock {
    pub pattern: FramePattern,
    pub fps: f64,
}

impl Default for FrameClock {
    fn default() -> Self {
        FrameClock {
            pattern: FramePattern::default(),
            fps: 3.0,
        }
    }
}

impl FrameClock {
    pub fn new(pattern: FramePattern, fps: f64) -> Self {
        FrameClock { pattern, fps }
    }

    /// `index / fps` for a frame name.
    pub fn frame_timestamp(&self, name: &str) -> Result<f64, TimestampError> {
        if !(self.fps > 0.0) {
            return Err(TimestampError::BadFrameRate);
        }
        Ok(self.pattern.index(name)? as f64 / self.fps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_at_three_fps() {
        let clock = FrameClock::default();
        assert_eq!(clock.frame_timestamp("frame_000000.jpg"), Ok(0.0));
        assert_eq!(clock.frame_timestamp("frame_000009.jpg"), Ok(3.0));
        assert_eq!(clock.frame_timestamp("frame_1234567.jpg"), Ok(1234567.0 / 3.0));
    }

    #[test]
    fn rejects_foreign_names() {
        let clock = FrameClock::default();
        for name in ["IMG_1.png", "frame_12.jpg", "frame_000001.png", "frame_00000a.jpg", "frame_0000001.jpg"] {
            assert!(
                matches!(clock.frame_timestamp(name), Err(TimestampError::UnparseableName(_))),
                "{name}"
            );
        }
    }

    #[test]
    fn name_round_trip() {
        let p = FramePattern::default();
        assert_eq!(p.name(42), "frame_000042.jpg");
        assert_eq!(p.index(&p.name(42)), Ok(42));
    }
}
