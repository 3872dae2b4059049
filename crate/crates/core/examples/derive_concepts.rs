//! Derives the four prescribed concepts and the wind-stress curl from a
//! synthetic member and shows their basin-mean seasonal cycles.
use mlhc_cbm::concepts::{derive_concepts, PhysConstants};
use mlhc_cbm::config::RunConfig;
use mlhc_cbm::grid::{basin_mean, Weighting};
use mlhc_cbm::synth;

fn main() -> mlhc_cbm::Result<()> {
    let cfg = RunConfig::parse("synth.n_lat = 24\nsynth.n_lon = 32\nsynth.years = 4\n")?;
    let data = synth::generate_member(&cfg.synth, 0)?;
    let cs = derive_concepts(&data, &PhysConstants::default())?;
    println!("{:<12} {}", "month", (1..=12).map(|m| format!("{m:>10}")).collect::<String>());
    for s in cs.as_array().into_iter().chain([data.get("sowsc")?]) {
        let bm = basin_mean(s, Weighting::CosLat)?;
        let mut cyc = [0.0; 12];
        let mut n = [0usize; 12];
        for (t, v) in bm.iter().enumerate() {
            let m = s.time.month_of(t) as usize - 1;
            cyc[m] += v;
            n[m] += 1;
        }
        let row: String = cyc.iter().zip(n).map(|(v, k)| format!("{:>10.2e}", v / k as f64)).collect();
        println!("{:<12} {row}  [{}]", s.name, s.units);
    }
    Ok(())
}
