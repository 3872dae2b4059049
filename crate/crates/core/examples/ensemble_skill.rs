//! Trains a two-seed ensemble of each configuration and prints the pooled
//! seasonal ACC table on the test period.
use mlhc_cbm::config::RunConfig;
use mlhc_cbm::ensemble::{predict_ensemble, target_series, train_ensemble, Variable};
use mlhc_cbm::eval::{reports, seasonal_table, table_csv, AccMode, ConfigPredictions};
use mlhc_cbm::nn::{Mode, Network};
use mlhc_cbm::preprocess::prepare;
use mlhc_cbm::synth;

fn main() -> mlhc_cbm::Result<()> {
    let cfg = RunConfig::parse(
        "synth.n_lat = 16\nsynth.n_lon = 32\nsynth.years = 12\nsynth.n_members = 2\npreprocess.split = 0.6, 0.15, 0.25\nnet.widths = 4, 8, 8, 16\ntrain.epochs = 6\nensemble.seeds = 0, 1\n",
    )?;
    let members = synth::synthesize(&cfg.synth)?;
    let p = prepare(&members, &cfg.preprocess)?;
    let ensembles = train_ensemble(&cfg.ensemble, &cfg.net_config(Mode::Mixed), &p.train, None, &cfg.train)?;
    let mut configs = Vec::new();
    for e in &ensembles {
        let nets: Vec<&Network<f32>> = e.members.iter().map(|m| &m.net).collect();
        let pred = predict_ensemble(&nets, &p.test, cfg.eval.predict_batch)?;
        let fields = Variable::EVAL_ORDER
            .into_iter()
            .filter(|&v| reports(e.mode, v))
            .map(|v| Ok((v, pred.means(v)?)))
            .collect::<mlhc_cbm::Result<_>>()?;
        configs.push(ConfigPredictions { mode: e.mode, fields });
    }
    let targets = Variable::EVAL_ORDER
        .into_iter()
        .map(|v| Ok((v, target_series(&p.test, v)?)))
        .collect::<mlhc_cbm::Result<Vec<_>>>()?;
    print!("{}", table_csv(&seasonal_table(&configs, &targets, AccMode::Pooled)?));
    Ok(())
}
