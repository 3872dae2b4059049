//! Generates one member of the synthetic ocean and prints a summary of every
//! field, then writes the member as OGF files under a temporary directory.
use mlhc_cbm::config::RunConfig;
use mlhc_cbm::synth;

fn main() -> mlhc_cbm::Result<()> {
    let cfg = RunConfig::parse("synth.n_lat = 24\nsynth.n_lon = 32\nsynth.years = 5\n")?;
    let grid = std::sync::Arc::new(synth::synth_grid(&cfg.synth)?);
    let m = synth::synthesize_member(&cfg.synth, 0, &grid)?;
    println!("grid {}×{}, {} ocean cells, {} months from {}", grid.n_lat(), grid.n_lon(), grid.n_ocean(), m.dataset.time().len, m.dataset.time().start);
    for s in m.dataset.vars() {
        let (mean, std) = synth::pooled_moments(s);
        println!("{:<12} {:<8} mean {mean:>12.4e}  std {std:>10.4e}", s.name, s.units);
    }
    let (mean, std) = synth::pooled_moments(&m.mlhc);
    println!("{:<12} {:<8} mean {mean:>12.4e}  std {std:>10.4e}", "mlhc", "teacher");

    let dir = std::env::temp_dir().join("mlhc_cbm_synth_world");
    m.dataset.write_dir(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}
