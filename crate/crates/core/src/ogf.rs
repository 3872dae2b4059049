//! OGF v1: the portable binary container for one [`FieldSeries`].
//!
//! ```text
//! offset  type                 content
//! 0       [u8; 4]              magic "OGF1"
//! 4       u32                  version = 1
//! 8       u32 × 3              n_lat, n_lon, T
//! 20      i32                  start year
//! 24      u8                   start month (1..=12)
//! 25      u16 + bytes          name (UTF-8)
//! ..      u16 + bytes          units (UTF-8)
//! ..      f64 × n_lat          latitudes
//! ..      f64 × n_lon          longitudes
//! ..      ceil(cells / 8)      ocean mask, row-major, LSB-first within a byte
//! ..      f32 × T·cells        values [t][lat][lon], land = 0x7FC00000
//! ..      u32                  CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! All integers and floats are little-endian. Values are stored as `f32`, so
//! a roundtrip is bit-exact for series whose values are `f32`-representable
//! (anything read from disk or passed through [`FieldSeries::quantize_f32`]).

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, FormatError, Result};
use crate::grid::{FieldSeries, GeoGrid, TimeAxis, YearMonth};

pub const MAGIC: [u8; 4] = *b"OGF1";
pub const VERSION: u32 = 1;
/// On-disk land sentinel (quiet NaN).
pub const LAND_BITS: u32 = 0x7FC0_0000;

/// Exact encoded size of a series with the given dimensions and strings.
pub fn encoded_len(n_lat: usize, n_lon: usize, t: usize, name: &str, units: &str) -> usize {
    let cells = n_lat * n_lon;
    25 + 2 + name.len() + 2 + units.len() + 8 * (n_lat + n_lon) + cells.div_ceil(8) + 4 * t * cells + 4
}

fn put_str(out: &mut Vec<u8>, s: &str) -> std::result::Result<(), FormatError> {
    let len = u16::try_from(s.len()).map_err(|_| FormatError::Invalid(format!("string too long: {} bytes", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn encode(series: &FieldSeries) -> std::result::Result<Vec<u8>, FormatError> {
    let g = &series.grid;
    let cells = g.n_cells();
    let mut out = Vec::with_capacity(encoded_len(g.n_lat(), g.n_lon(), series.len(), &series.name, &series.units));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [g.n_lat(), g.n_lon(), series.len()] {
        let d = u32::try_from(d).map_err(|_| FormatError::Shape(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&series.time.start.year.to_le_bytes());
    out.push(series.time.start.month);
    put_str(&mut out, &series.name)?;
    put_str(&mut out, &series.units)?;
    for v in g.lat().iter().chain(g.lon()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut bits = vec![0u8; cells.div_ceil(8)];
    for (k, &ocean) in g.mask().iter().enumerate() {
        if ocean {
            bits[k / 8] |= 1 << (k % 8);
        }
    }
    out.extend_from_slice(&bits);
    let mask = g.mask();
    for (k, &v) in series.values().iter().enumerate() {
        let word = if mask[k % cells] { (v as f32).to_bits() } else { LAND_BITS };
        out.extend_from_slice(&word.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub(crate) struct Cursor<'a> {
    pub(crate) buf: &'a [u8],
    pub(crate) pos: usize,
    /// Bytes available to the payload (excludes the CRC trailer).
    pub(crate) end: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        if self.pos + n > self.end {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                available: self.end.saturating_sub(self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> std::result::Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> std::result::Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn i32(&mut self) -> std::result::Result<i32, FormatError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, FormatError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| FormatError::Shape("coordinate count overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
    }

    pub(crate) fn u64(&mut self) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> std::result::Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> std::result::Result<Vec<f32>, FormatError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| FormatError::Shape("tensor size overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
    }

    pub(crate) fn string(&mut self, what: &'static str) -> std::result::Result<String, FormatError> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| FormatError::Utf8(what))
    }
}

pub fn decode(buf: &[u8]) -> std::result::Result<FieldSeries, FormatError> {
    if buf.len() < 4 {
        return Err(FormatError::Truncated {
            offset: 0,
            needed: 4,
            available: buf.len(),
        });
    }
    let found: [u8; 4] = buf[..4].try_into().unwrap();
    if found != MAGIC {
        return Err(FormatError::BadMagic { expected: MAGIC, found });
    }
    let mut cur = Cursor {
        buf,
        pos: 4,
        end: buf.len().saturating_sub(4).max(4),
    };
    let version = cur.u32()?;
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let n_lat = cur.u32()? as usize;
    let n_lon = cur.u32()? as usize;
    let t = cur.u32()? as usize;
    let year = cur.i32()?;
    let month = cur.u8()?;
    let name = cur.string("name")?;
    let units = cur.string("units")?;
    let lat = cur.f64s(n_lat)?;
    let lon = cur.f64s(n_lon)?;
    let cells = n_lat
        .checked_mul(n_lon)
        .ok_or_else(|| FormatError::Shape("grid size overflow".into()))?;
    let bits = cur.take(cells.div_ceil(8))?;
    let mask: Vec<bool> = (0..cells).map(|k| bits[k / 8] >> (k % 8) & 1 == 1).collect();
    let n_values = t
        .checked_mul(cells)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FormatError::Shape("value count overflow".into()))?;
    let raw = cur.take(n_values)?;
    if buf.len() < cur.pos + 4 {
        return Err(FormatError::Truncated {
            offset: cur.pos,
            needed: 4,
            available: buf.len() - cur.pos,
        });
    }
    if buf.len() != cur.pos + 4 {
        return Err(FormatError::Trailing(buf.len() - cur.pos - 4));
    }
    let stored = u32::from_le_bytes(buf[cur.pos..].try_into().unwrap());
    let computed = crc32fast::hash(&buf[..cur.pos]);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }

    let grid = GeoGrid::new(lat, lon, mask).map_err(|e| FormatError::Shape(e.to_string()))?;
    let start = YearMonth::new(year, month).map_err(|e| FormatError::Invalid(e.to_string()))?;
    let time = TimeAxis::new(start, t).map_err(|e| FormatError::Shape(e.to_string()))?;
    let mut values = Vec::with_capacity(t * cells);
    for (k, b) in raw.chunks_exact(4).enumerate() {
        let word = u32::from_le_bytes(b.try_into().unwrap());
        if grid.mask()[k % cells] {
            values.push(f32::from_bits(word) as f64);
        } else if word != LAND_BITS {
            return Err(FormatError::Invalid(format!("land cell {} holds {word:#010x}", k % cells)));
        } else {
            values.push(f64::NAN);
        }
    }
    FieldSeries::new(Arc::new(grid), time, name, units, values).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn write(series: &FieldSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(series).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<FieldSeries> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> FieldSeries {
        let g = Arc::new(GeoGrid::regular(2, 2, (0.0, 1.0), (10.0, 11.0), vec![true, true, true, false]).unwrap());
        let time = TimeAxis::new(YearMonth::new(1990, 3).unwrap(), 1).unwrap();
        FieldSeries::new(g, time, "sosstsst", "degC", vec![1.0, 2.0, 3.0, f64::NAN]).unwrap()
    }

    fn bits(s: &FieldSeries) -> Vec<u64> {
        s.values().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn small_roundtrip_is_bit_identical() {
        let s = small();
        let back = decode(&encode(&s).unwrap()).unwrap();
        assert_eq!(back.name, s.name);
        assert_eq!(back.units, s.units);
        assert_eq!(back.time, s.time);
        assert_eq!(*back.grid, *s.grid);
        assert_eq!(bits(&back)[..3], bits(&s)[..3]);
        assert!(back.values()[3].is_nan());
        // Re-encoding the decoded series reproduces the same bytes.
        assert_eq!(encode(&back).unwrap(), encode(&s).unwrap());
    }

    #[test]
    fn desk_size_file_has_closed_form_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mask: Vec<bool> = (0..48 * 64).map(|k| k % 7 != 3).collect();
        let g = Arc::new(GeoGrid::regular(48, 64, (20.0, 60.0), (280.0, 350.0), mask).unwrap());
        let time = TimeAxis::new(YearMonth::new(1979, 1).unwrap(), 240).unwrap();
        let s = FieldSeries::from_fn(g, time, "sosstsst", "degC", |_, _| rng.random_range(-3.0f32..30.0) as f64).unwrap();
        let bytes = encode(&s).unwrap();
        // 25 fixed header + (2+8) name + (2+4) units + 8·(48+64) coords
        // + 3072/8 mask + 4·240·3072 values + 4 crc
        assert_eq!(bytes.len(), 2_950_445);
        assert_eq!(bytes.len(), encoded_len(48, 64, 240, "sosstsst", "degC"));
        let back = decode(&bytes).unwrap();
        assert_eq!(bits(&back).len(), bits(&s).len());
        for (a, b) in back.values().iter().zip(s.values()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn corrupted_magic_is_reported() {
        let mut bytes = encode(&small()).unwrap();
        bytes[1] = b'X';
        assert!(matches!(decode(&bytes), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = encode(&small()).unwrap();
        for cut in [2, 10, 30, bytes.len() - 6, bytes.len() - 1] {
            let err = decode(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, FormatError::Truncated { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn flipped_value_byte_fails_checksum() {
        let mut bytes = encode(&small()).unwrap();
        let n = bytes.len();
        bytes[n - 8] ^= 0x01;
        assert!(matches!(decode(&bytes), Err(FormatError::Checksum { .. })));
    }

    #[test]
    fn trailing_garbage_is_a_shape_error() {
        let mut bytes = encode(&small()).unwrap();
        bytes.extend_from_slice(&[0, 0]);
        assert!(matches!(decode(&bytes), Err(FormatError::Trailing(2))));
    }

    #[test]
    fn land_sentinel_bits_on_disk() {
        let bytes = encode(&small()).unwrap();
        let n = bytes.len();
        let last = u32::from_le_bytes(bytes[n - 8..n - 4].try_into().unwrap());
        assert_eq!(last, LAND_BITS);
    }
}
