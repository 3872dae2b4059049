//! Mechanistic diagnostics on a briefly trained mixed ensemble: contribution
//! spread, free-concept discrepancy composites, a regional retrospective and
//! a lagged correlation between two of the retrospective series.
use mlhc_cbm::config::RunConfig;
use mlhc_cbm::diagnostics::{bottleneck_contributions, contribution_spread, free_concept_discrepancy, peak_lag, retrospective, Region};
use mlhc_cbm::ensemble::{predict_ensemble, target_series, train_ensemble, Variable};
use mlhc_cbm::eval::Season;
use mlhc_cbm::nn::{Mode, Network};
use mlhc_cbm::preprocess::prepare;
use mlhc_cbm::synth;

fn main() -> mlhc_cbm::Result<()> {
    let cfg = RunConfig::parse(
        "synth.n_lat = 16\nsynth.n_lon = 32\nsynth.years = 12\nsynth.n_members = 2\npreprocess.split = 0.6, 0.15, 0.25\nnet.widths = 4, 8, 8, 16\ntrain.epochs = 4\nensemble.seeds = 0, 1, 2\nensemble.configs = mixed\n",
    )?;
    let members = synth::synthesize(&cfg.synth)?;
    let p = prepare(&members, &cfg.preprocess)?;
    let e = train_ensemble(&cfg.ensemble, &cfg.net_config(Mode::Mixed), &p.train, None, &cfg.train)?.remove(0);

    let cv: Vec<_> = e.members.iter().map(|m| bottleneck_contributions(&m.net)).collect::<mlhc_cbm::Result<_>>()?;
    let sp = contribution_spread(&cv)?;
    for j in 0..sp.labels.len() {
        println!("{:<14} mean {:.3} std {:.3}", sp.labels[j], sp.mean[j], sp.std[j]);
    }

    let nets: Vec<&Network<f32>> = e.members.iter().map(|m| &m.net).collect();
    let pred = predict_ensemble(&nets, &p.test, 8)?;
    let comps = free_concept_discrepancy(&pred.means(Variable::Mlhc)?, &pred.means(Variable::Free)?, &Season::ALL)?;
    for c in &comps {
        let v: Vec<f64> = c.values.iter().copied().filter(|x| !x.is_nan()).collect();
        println!("discrepancy {} over {} steps: basin mean {:.3}", c.season.name(), c.n_steps, v.iter().sum::<f64>() / v.len() as f64);
    }

    let y = pred.means(Variable::Mlhc)?.swap_remove(0);
    let obs = target_series(&p.test, Variable::Mlhc)?.swap_remove(0);
    let n2 = target_series(&p.test, Variable::Concept(1))?.swap_remove(0);
    let end = y.time.end();
    let region = Region { lat: (35.0, 50.0), lon: (290.0, 320.0) };
    let r = retrospective(&[("mlhc_pred", &y), ("mlhc_obs", &obs), ("von2_obs", &n2)], region, end, 6)?;
    print!("{}", r.to_csv());
    let (lag, corr) = peak_lag(&r.fields[2].region_mean, &r.fields[1].region_mean, 2).unwrap_or((0, f64::NAN));
    println!("von2 leads mlhc by {lag} months (r = {corr:.2}) over the window ending {end}");
    Ok(())
}
