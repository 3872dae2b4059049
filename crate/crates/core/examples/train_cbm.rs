//! Trains one mixed-mode concept-bottleneck network on a small synthetic
//! world and prints the loss history and the bottleneck contributions.
use mlhc_cbm::config::RunConfig;
use mlhc_cbm::diagnostics::{bottleneck_contributions, ordering_matches};
use mlhc_cbm::nn::{train, Mode};
use mlhc_cbm::preprocess::prepare;
use mlhc_cbm::synth;

fn main() -> mlhc_cbm::Result<()> {
    env_logger::Builder::new().filter_level(log::LevelFilter::Info).init();
    let cfg = RunConfig::parse(
        "synth.n_lat = 24\nsynth.n_lon = 32\nsynth.years = 10\nsynth.n_members = 2\nnet.widths = 4, 8, 16, 32\ntrain.epochs = 8\n",
    )?;
    let members = synth::synthesize(&cfg.synth)?;
    let p = prepare(&members, &cfg.preprocess)?;
    let (net, history) = train(&cfg.net_config(Mode::Mixed), &p.train, Some(&p.val), &cfg.train, 0)?;
    print!("{}", history.to_csv());
    let c = bottleneck_contributions(&net)?;
    for (l, v) in c.labels.iter().zip(&c.values) {
        println!("{l:<14} {v:.3}");
    }
    println!("concept ordering matches the teacher: {}", ordering_matches(&c, &cfg.synth.generative_weights));
    Ok(())
}
