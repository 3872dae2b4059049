//! Writes and reads back a field series (OGF) and a network checkpoint, and
//! shows that a corrupted byte is caught by the checksum.
use mlhc_cbm::config::RunConfig;
use mlhc_cbm::nn::checkpoint::{self, Checkpoint};
use mlhc_cbm::nn::{Mode, Network};
use mlhc_cbm::{ogf, synth};

fn main() -> mlhc_cbm::Result<()> {
    let dir = std::env::temp_dir().join("mlhc_cbm_formats");
    std::fs::create_dir_all(&dir)?;
    let cfg = RunConfig::parse("synth.n_lat = 12\nsynth.n_lon = 16\nsynth.years = 3\n")?;
    let data = synth::generate_member(&cfg.synth, 0)?;
    let sst = data.get("sosstsst")?;

    let path = dir.join("sst.ogf");
    ogf::write(sst, &path)?;
    let back = ogf::read(&path)?;
    let same = back.values().iter().zip(sst.values()).all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
    println!("{}: {} bytes, {} months, bitwise equal {same}", path.display(), std::fs::metadata(&path)?.len(), back.len());

    let mut bytes = std::fs::read(&path)?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    match ogf::decode(&bytes) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("flipped byte {mid}: {e}"),
    }

    let net = Network::<f32>::new(cfg.net_config(Mode::Mixed), 7)?;
    let ck = Checkpoint { net, seed: 7, optimizer: None };
    let path = dir.join("mixed.ckpt");
    checkpoint::write(&ck, &path)?;
    let back = checkpoint::read(&path)?;
    println!("{}: {} parameters, roundtrip equal {}", path.display(), back.net.n_params(), back == ck);
    Ok(())
}
