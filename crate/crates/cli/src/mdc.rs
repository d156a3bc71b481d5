//! MDC1 signal container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "MDC1" | version u16 | channels u32 | samples u64 | rate f64 | units u8
//! | per channel: label length u16, UTF-8 label bytes
//! | payload: channels × samples f32, row-major (channel by channel)
//! | CRC32 of every preceding byte, u32
//! ```

use std::path::Path;

use mudec_core::{MultiChannelSignal, Units};
use ndarray::Array2;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"MDC1";
pub const VERSION: u16 = 1;

pub fn encode(sig: &MultiChannelSignal) -> Vec<u8> {
    let (c, n) = sig.data().dim();
    let labels = sig.channel_labels();
    let label_bytes: usize = labels.iter().map(|l| 2 + l.len()).sum();
    let mut out = Vec::with_capacity(4 + 2 + 4 + 8 + 8 + 1 + label_bytes + 4 * c * n + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&sig.sample_rate_hz().to_le_bytes());
    out.push(sig.units().tag());
    for label in labels {
        // Labels longer than u16::MAX bytes are cut at a char boundary.
        let mut end = label.len().min(u16::MAX as usize);
        while !label.is_char_boundary(end) {
            end -= 1;
        }
        out.extend_from_slice(&(end as u16).to_le_bytes());
        out.extend_from_slice(&label.as_bytes()[..end]);
    }
    for &v in sig.data().iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {} (wanted {n} more)", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<MultiChannelSignal, String> {
    if bytes.len() < 4 + 4 {
        return Err(format!("{} bytes is too short for an MDC1 container", bytes.len()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(format!("CRC mismatch: stored {stored:08x}, computed {actual:08x}"));
    }

    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic, not an MDC1 container".into());
    }
    let version = u16::from_le_bytes(r.array()?);
    if version != VERSION {
        return Err(format!("unsupported MDC1 version {version}"));
    }
    let c = u32::from_le_bytes(r.array()?) as usize;
    let n = usize::try_from(u64::from_le_bytes(r.array()?)).map_err(|_| "sample count overflows usize")?;
    let rate = f64::from_le_bytes(r.array()?);
    let tag = r.take(1)?[0];
    let units = Units::from_tag(tag).ok_or_else(|| format!("unknown units tag {tag}"))?;
    let mut labels = Vec::with_capacity(c.min(1 << 16));
    for _ in 0..c {
        let len = u16::from_le_bytes(r.array()?) as usize;
        let raw = r.take(len)?;
        labels.push(String::from_utf8(raw.to_vec()).map_err(|_| "channel label is not UTF-8")?);
    }
    let expected = c.checked_mul(n).and_then(|v| v.checked_mul(4)).ok_or("declared size overflows")?;
    let remaining = body.len() - r.pos;
    if remaining != expected {
        return Err(format!(
            "declared {c} channels × {n} samples needs {expected} payload bytes, found {remaining}"
        ));
    }
    let payload = r.take(expected)?;
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    let data = Array2::from_shape_vec((c, n), data).map_err(|e| e.to_string())?;
    MultiChannelSignal::new(data, rate, labels, units).map_err(|e| e.to_string())
}

/// Writes `sig` and returns the stored CRC.
pub fn write(path: &Path, sig: &MultiChannelSignal) -> Result<u32> {
    let bytes = encode(sig);
    std::fs::write(path, &bytes).map_err(|e| CliError::io(path, e))?;
    Ok(u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes")))
}

pub fn read(path: &Path) -> Result<MultiChannelSignal> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|msg| CliError::format(path, msg))
}

/// The trailing CRC of a container on disk, after validating it.
pub fn stored_crc(path: &Path) -> Result<u32> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|msg| CliError::format(path, msg))?;
    Ok(u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MultiChannelSignal {
        let data = Array2::from_shape_fn((3, 5), |(c, t)| c as f64 * 10.0 + t as f64 * 0.25);
        MultiChannelSignal::new(data, 2048.0, vec!["a".into(), "ch-β".into(), "".into()], Units::Volts).unwrap()
    }

    #[test]
    fn round_trip_is_exact_for_f32_values() {
        let sig = sample();
        let back = decode(&encode(&sig)).unwrap();
        assert_eq!(back, sig);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample());
        assert_eq!(&bytes[..4], b"MDC1");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[10..18].try_into().unwrap()), 5);
        assert_eq!(f64::from_le_bytes(bytes[18..26].try_into().unwrap()), 2048.0);
        // header 27, labels 2+1 + 2+5 + 2+0, payload 60, crc 4
        assert_eq!(bytes.len(), 27 + 12 + 60 + 4);
        let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        assert_eq!(crc, crc32fast::hash(&bytes[..bytes.len() - 4]));
    }

    #[test]
    fn any_flipped_byte_is_rejected() {
        let bytes = encode(&sample());
        for i in 0..bytes.len() {
            let mut b = bytes.clone();
            b[i] ^= 0x40;
            assert!(decode(&b).is_err(), "flip at {i} accepted");
        }
    }

    #[test]
    fn size_mismatch_with_valid_crc_is_rejected() {
        let mut bytes = encode(&sample());
        bytes.truncate(bytes.len() - 8);
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        let err = decode(&bytes).unwrap_err();
        assert!(err.contains("payload bytes"), "{err}");
    }

    #[test]
    fn truncated_input() {
        assert!(decode(b"MDC").is_err());
        assert!(decode(&[]).is_err());
    }

    #[test]
    fn values_are_stored_as_f32() {
        let data = Array2::from_elem((1, 1), 0.1f64);
        let sig = MultiChannelSignal::new(data, 1.0, vec!["x".into()], Units::Dimensionless).unwrap();
        let back = decode(&encode(&sig)).unwrap();
        assert_eq!(back.data()[[0, 0]], 0.1f32 as f64);
    }
}
