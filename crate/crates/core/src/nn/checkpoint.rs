//! Versioned binary checkpoints.
//!
//! ```text
//! "MCK1" | u32 version
//! u32 in_channels | 4 × u32 widths | u32 n_prescribed | u8 mode | f64 bn_eps | f64 bn_momentum
//! u64 seed
//! u32 n | n × tensor            parameters, declaration order
//! u32 n | n × tensor            batch-norm running statistics
//! u8 has_optimizer [ u64 step | 5 × f64 lr, wd, β₁, β₂, ε | m: f32 × P | v: f32 × P ]
//! u32 CRC-32 of everything above
//!
//! tensor = u16 name_len | name | u8 ndim | ndim × u32 dims | f32 values
//! ```
//!
//! Integers and floats are little-endian.

use std::path::Path;

use super::adamw::{AdamW, AdamWConfig};
use super::unet::{Mode, NetConfig, Network, ParamSpec};
use crate::error::{Error, FormatError, Result};
use crate::ogf::Cursor;

const MAGIC: [u8; 4] = *b"MCK1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Network<f32>,
    /// Initialization seed the network was trained from.
    pub seed: u64,
    pub optimizer: Option<AdamW<f32>>,
}

fn mode_code(m: Mode) -> u8 {
    match m {
        Mode::Mixed => 0,
        Mode::PredictionOnly => 1,
        Mode::PrescriptionOnly => 2,
    }
}

fn put_tensors(out: &mut Vec<u8>, specs: &[ParamSpec], values: &[f32]) {
    out.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for s in specs {
        out.extend_from_slice(&(s.name.len() as u16).to_le_bytes());
        out.extend_from_slice(s.name.as_bytes());
        out.push(s.shape.len() as u8);
        for d in &s.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in &values[s.range.clone()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let net = &ck.net;
    let c = &net.cfg;
    let mut out = Vec::with_capacity(64 + 4 * (net.params.len() + net.running.len()) * 3);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(c.in_channels as u32).to_le_bytes());
    for w in c.widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.extend_from_slice(&(c.n_prescribed as u32).to_le_bytes());
    out.push(mode_code(c.mode));
    out.extend_from_slice(&c.bn_eps.to_le_bytes());
    out.extend_from_slice(&c.bn_momentum.to_le_bytes());
    out.extend_from_slice(&ck.seed.to_le_bytes());
    put_tensors(&mut out, net.specs(), &net.params);
    put_tensors(&mut out, net.running_specs(), &net.running);
    match &ck.optimizer {
        None => out.push(0),
        Some(o) => {
            out.push(1);
            out.extend_from_slice(&o.step.to_le_bytes());
            for v in [o.cfg.lr, o.cfg.weight_decay, o.cfg.beta1, o.cfg.beta2, o.cfg.eps] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in o.m.iter().chain(&o.v) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn get_tensors(cur: &mut Cursor<'_>, specs: &[ParamSpec], into: &mut [f32], what: &str) -> Result<(), FormatError> {
    let n = cur.u32()? as usize;
    if n != specs.len() {
        return Err(FormatError::Shape(format!("{what}: {n} tensors stored, architecture has {}", specs.len())));
    }
    for s in specs {
        let name = cur.string("tensor name")?;
        let ndim = cur.u8()? as usize;
        let shape: Vec<usize> = (0..ndim).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<_, _>>()?;
        if name != s.name || shape != s.shape {
            return Err(FormatError::Shape(format!("{what}: stored {name} {shape:?}, expected {} {:?}", s.name, s.shape)));
        }
        into[s.range.clone()].copy_from_slice(&cur.f32s(s.range.len())?);
    }
    Ok(())
}

pub fn decode(buf: &[u8]) -> Result<Checkpoint, FormatError> {
    if buf.len() < 8 {
        return Err(FormatError::Truncated {
            offset: 0,
            needed: 8,
            available: buf.len(),
        });
    }
    let found: [u8; 4] = buf[..4].try_into().unwrap();
    if found != MAGIC {
        return Err(FormatError::BadMagic { expected: MAGIC, found });
    }
    let end = buf.len() - 4;
    let stored = u32::from_le_bytes(buf[end..].try_into().unwrap());
    let computed = crc32fast::hash(&buf[..end]);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    let mut cur = Cursor { buf, pos: 4, end };
    let version = cur.u32()?;
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let in_channels = cur.u32()? as usize;
    let mut widths = [0usize; 4];
    for w in &mut widths {
        *w = cur.u32()? as usize;
    }
    let n_prescribed = cur.u32()? as usize;
    let mode = match cur.u8()? {
        0 => Mode::Mixed,
        1 => Mode::PredictionOnly,
        2 => Mode::PrescriptionOnly,
        m => return Err(FormatError::Invalid(format!("mode code {m}"))),
    };
    let cfg = NetConfig {
        in_channels,
        widths,
        n_prescribed,
        mode,
        bn_eps: cur.f64()?,
        bn_momentum: cur.f64()?,
    };
    let seed = cur.u64()?;
    let mut net = Network::<f32>::new(cfg, seed).map_err(|e| FormatError::Invalid(e.to_string()))?;
    let specs = net.specs().to_vec();
    get_tensors(&mut cur, &specs, &mut net.params, "parameters")?;
    let running = net.running_specs().to_vec();
    get_tensors(&mut cur, &running, &mut net.running, "running statistics")?;
    let optimizer = match cur.u8()? {
        0 => None,
        1 => {
            let step = cur.u64()?;
            let cfg = AdamWConfig {
                lr: cur.f64()?,
                weight_decay: cur.f64()?,
                beta1: cur.f64()?,
                beta2: cur.f64()?,
                eps: cur.f64()?,
            };
            let p = net.n_params();
            let m = cur.f32s(p)?;
            let v = cur.f32s(p)?;
            Some(AdamW { cfg, step, m, v })
        }
        f => return Err(FormatError::Invalid(format!("optimizer flag {f}"))),
    };
    if cur.pos != end {
        return Err(FormatError::Trailing(end - cur.pos));
    }
    Ok(Checkpoint { net, seed, optimizer })
}

pub fn write(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, encode(ck))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Checkpoint> {
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

    fn sample(with_opt: bool) -> Checkpoint {
        let mut net = Network::<f32>::new(NetConfig::new(12, [2, 3, 4, 5], Mode::Mixed), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        net.running.iter_mut().for_each(|v| *v = rng.random());
        let optimizer = with_opt.then(|| {
            let mut o = AdamW::new(AdamWConfig::default(), net.n_params());
            o.step = 17;
            o.m.iter_mut().for_each(|v| *v = rng.random());
            o.v.iter_mut().for_each(|v| *v = rng.random());
            o
        });
        Checkpoint { net, seed: 4, optimizer }
    }

    #[test]
    fn roundtrip_is_bitwise() {
        for opt in [false, true] {
            let ck = sample(opt);
            let back = decode(&encode(&ck)).unwrap();
            assert_eq!(back, ck);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back.net.params), bits(&ck.net.params));
            assert_eq!(encode(&back), encode(&ck));
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut b = encode(&sample(false));
        let k = b.len() / 2;
        b[k] ^= 1;
        assert!(matches!(decode(&b), Err(FormatError::Checksum { .. })));
        let b = encode(&sample(false));
        assert!(decode(&b[..b.len() - 9]).is_err());
        let mut b = encode(&sample(false));
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn every_mode_roundtrips() {
        for mode in Mode::ALL {
            let net = Network::<f32>::new(NetConfig::new(12, [2, 2, 2, 2], mode), 9).unwrap();
            let ck = Checkpoint { net, seed: 9, optimizer: None };
            assert_eq!(decode(&encode(&ck)).unwrap(), ck);
        }
    }
}
