//! Text codec, framing and character-interleaved spatial multiplexing.
//!
//! Characters map to 5-bit codes sent most significant bit first:
//!
//! | chars   | codes  |
//! |---------|--------|
//! | `a`–`z` | 1–26   |
//! | space   | 27     |
//! | `.`     | 28     |
//! | `,`     | 29     |
//! | `?`     | 30     |
//! | EOT     | 31     |
//!
//! Code 0 is reserved. EOT is all ones so that the end indicator always
//! sprays. In MIMO mode characters alternate between the two streams,
//! odd positions (1st, 3rd, …) on stream 0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::TimingConfig;

pub const BITS_PER_CHAR: usize = 5;
pub const EOT: u8 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Siso,
    Mimo,
}

impl Mode {
    pub fn streams(self) -> usize {
        match self {
            Mode::Siso => 1,
            Mode::Mimo => 2,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Siso => "siso",
            Mode::Mimo => "mimo",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "siso" => Ok(Mode::Siso),
            "mimo" => Ok(Mode::Mimo),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// Code for a supported character after case folding.
pub fn char_code(c: char) -> Option<u8> {
    let c = c.to_ascii_lowercase();
    match c {
        'a'..='z' => Some(c as u8 - b'a' + 1),
        ' ' => Some(27),
        '.' => Some(28),
        ',' => Some(29),
        '?' => Some(30),
        _ => None,
    }
}

/// Character for a payload code; `None` for the reserved code 0 and EOT.
pub fn code_char(code: u8) -> Option<char> {
    match code {
        1..=26 => Some((b'a' + code - 1) as char),
        27 => Some(' '),
        28 => Some('.'),
        29 => Some(','),
        30 => Some('?'),
        _ => None,
    }
}

fn push_code(bits: &mut Vec<bool>, code: u8) {
    for k in (0..BITS_PER_CHAR).rev() {
        bits.push(code >> k & 1 == 1);
    }
}

fn group_code(group: &[bool]) -> u8 {
    group.iter().fold(0, |acc, b| acc << 1 | u8::from(*b))
}

/// An encoded message: one bit stream per spatial stream, each closed by
/// EOT.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub mode: Mode,
    pub streams: Vec<Vec<bool>>,
    /// Characters carried by each stream, in order.
    pub stream_chars: Vec<String>,
    pub char_count: usize,
    pub payload_bits: usize,
}

impl Frame {
    /// Payload bits of stream `s`, excluding its EOT.
    pub fn stream_payload_bits(&self, s: usize) -> usize {
        self.streams[s].len() - BITS_PER_CHAR
    }
}

/// Splits characters round-robin across `n` streams.
pub fn split_streams(chars: &[char], n: usize) -> Vec<String> {
    let mut out = vec![String::new(); n];
    for (i, c) in chars.iter().enumerate() {
        out[i % n].push(*c);
    }
    out
}

/// Inverse of [`split_streams`]. Once a stream runs dry the others keep
/// their order.
pub fn interleave(streams: &[String]) -> String {
    let cols: Vec<Vec<char>> = streams.iter().map(|s| s.chars().collect()).collect();
    let longest = cols.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = String::new();
    for k in 0..longest {
        for col in &cols {
            if let Some(c) = col.get(k) {
                out.push(*c);
            }
        }
    }
    out
}

pub fn encode_text(msg: &str, mode: Mode) -> Result<Frame> {
    if msg.is_empty() {
        return Err(Error::EmptyMessage);
    }
    let mut chars = Vec::with_capacity(msg.len());
    for c in msg.chars() {
        char_code(c).ok_or(Error::UnsupportedCharacter(c))?;
        chars.push(c.to_ascii_lowercase());
    }
    let stream_chars = split_streams(&chars, mode.streams());
    let streams = stream_chars
        .iter()
        .map(|s| {
            let mut bits = Vec::with_capacity((s.len() + 1) * BITS_PER_CHAR);
            for c in s.chars() {
                push_code(&mut bits, char_code(c).expect("checked above"));
            }
            push_code(&mut bits, EOT);
            bits
        })
        .collect();
    Ok(Frame {
        mode,
        streams,
        stream_chars,
        char_count: chars.len(),
        payload_bits: chars.len() * BITS_PER_CHAR,
    })
}

/// Decodes 5-bit groups up to the first EOT. Returns the characters and
/// whether an EOT was found; a trailing partial group is ignored.
pub fn decode_stream_lossy(bits: &[bool]) -> (String, bool) {
    let mut out = String::new();
    for group in bits.chunks_exact(BITS_PER_CHAR) {
        let code = group_code(group);
        if code == EOT {
            return (out, true);
        }
        out.push(code_char(code).unwrap_or('?'));
    }
    (out, false)
}

pub fn decode_text(streams: &[Vec<bool>], mode: Mode) -> Result<String> {
    if streams.len() != mode.streams() {
        return Err(Error::InvalidParameter(format!(
            "{mode} frame needs {} streams, got {}",
            mode.streams(),
            streams.len()
        )));
    }
    let mut decoded = Vec::with_capacity(streams.len());
    for (s, bits) in streams.iter().enumerate() {
        if bits.len() % BITS_PER_CHAR != 0 {
            return Err(Error::MalformedStream {
                stream: s,
                len: bits.len(),
            });
        }
        let (text, terminated) = decode_stream_lossy(bits);
        if !terminated {
            return Err(Error::MissingEndIndicator(s));
        }
        decoded.push(text);
    }
    Ok(interleave(&decoded))
}

/// Air time of a frame: payload slots of the longest stream times `T_s`,
/// plus the fixed overhead `O`, which covers the start and end indicators.
pub fn frame_air_time(f: &Frame, timing: &TimingConfig) -> f64 {
    let longest = (0..f.streams.len())
        .map(|s| f.stream_payload_bits(s))
        .max()
        .unwrap_or(0);
    longest as f64 * timing.symbol_period + timing.overhead
}
