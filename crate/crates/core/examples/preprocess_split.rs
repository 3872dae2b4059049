//! Runs the conditioning chain (detrend, clip, smooth, z-score) on a small
//! synthetic ensemble and prints the split, clip thresholds and sample counts.
use mlhc_cbm::config::RunConfig;
use mlhc_cbm::preprocess::{prepare, SplitKind};
use mlhc_cbm::synth;

fn main() -> mlhc_cbm::Result<()> {
    let cfg = RunConfig::parse("synth.n_lat = 24\nsynth.n_lon = 32\nsynth.years = 10\nsynth.n_members = 3\n")?;
    let members = synth::synthesize(&cfg.synth)?;
    let p = prepare(&members, &cfg.preprocess)?;
    let base = p.train.base;
    for k in SplitKind::ALL {
        let r = p.split.range(k);
        let set = p.set(k);
        println!("{:<5} months {:>3}..{:<3} ({} to {})  {} samples", k.name(), r.start, r.end, base.at(r.start), base.at(r.end - 1), set.len());
    }
    println!("\nclip thresholds (2nd, 98th percentile of the training period):");
    for (name, lo, hi) in &p.clip {
        println!("  {name:<14} {lo:>12.4e} {hi:>12.4e}");
    }
    let s = p.train.sample(0);
    println!("\nfirst sample: target {} member {}, x has {} values, concept target {}", s.target_time, s.member, s.x.len(), s.c_target.len());
    Ok(())
}
