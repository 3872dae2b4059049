//! The command-line stages, each reading the previous stage's outputs from
//! the run directory and writing its own outputs plus a manifest.
//!
//! ```text
//! <out>/data/m<k>/*.ogf            synth
//! <out>/concepts/m<k>/*.ogf        derive
//! <out>/preprocess/                preprocess   norm_stats.txt, samples.csv, clip.csv
//! <out>/train/<config>/v<i>.ckpt   train        plus v<i>_history.csv
//! <out>/eval/                      eval         ACC tables, maps, basin series
//! <out>/diagnose/                  diagnose     contributions, spread, regularization, discrepancy
//! <out>/retro/                     retro        event retrospective
//! ```
//!
//! Every manifest records a hash of the configuration keys the stage depends
//! on; a downstream stage refuses to run on a missing or stale upstream.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use sha2::{Digest, Sha256};

use crate::concepts::{derive_concepts, ConceptSet, CONCEPT_NAMES};
use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::diagnostics::{
    bottleneck_contributions, contribution_spread, contributions_csv, delta_summary, free_concept_discrepancy, ordering_matches,
    regularization_csv, regularization_report, retrospective, spread_csv,
};
use crate::ensemble::{data_hash, predict_ensemble, target_series, train_ensemble, EnsemblePrediction, Member, Variable};
use crate::error::{Error, Result};
use crate::eval::{acc_map, acc_scalar, basin_timeseries, reports, seasonal_table, table_csv, AccMode, ConfigPredictions, Season};
use crate::grid::{Climatology, FieldSeries};
use crate::nn::checkpoint::{self, Checkpoint};
use crate::nn::{Mode, Network};
use crate::preprocess::{prepare, MemberData, Prepared, SampleSet};
use crate::render::{symmetric_limit, write_ppm};
use crate::{ogf, synth};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Derive,
    Preprocess,
    Train,
    Eval,
    Diagnose,
    Retro,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Synth,
        Command::Derive,
        Command::Preprocess,
        Command::Train,
        Command::Eval,
        Command::Diagnose,
        Command::Retro,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Derive => "derive",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Diagnose => "diagnose",
            Command::Retro => "retro",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Output directory below the run root.
    pub fn dir(self) -> &'static str {
        match self {
            Command::Synth => "data",
            Command::Derive => "concepts",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Diagnose => "diagnose",
            Command::Retro => "retro",
        }
    }

    /// Config sections whose values determine this stage's outputs.
    pub fn sections(self) -> &'static [&'static str] {
        match self {
            Command::Synth | Command::Derive => &["synth"],
            Command::Preprocess => &["synth", "preprocess"],
            Command::Train => &["synth", "preprocess", "net", "train", "ensemble"],
            Command::Eval => &["synth", "preprocess", "net", "train", "ensemble", "eval"],
            Command::Diagnose | Command::Retro => &["synth", "preprocess", "net", "train", "ensemble", "eval", "diagnostics"],
        }
    }

    fn upstream(self) -> Option<Command> {
        match self {
            Command::Synth => None,
            Command::Derive => Some(Command::Synth),
            Command::Preprocess => Some(Command::Derive),
            Command::Train => Some(Command::Preprocess),
            Command::Eval | Command::Diagnose | Command::Retro => Some(Command::Train),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical config lines in `sections`.
pub fn config_hash(cfg: &RunConfig, sections: &[&str]) -> String {
    let text: String = cfg
        .to_text()
        .lines()
        .filter(|l| sections.iter().any(|s| l.starts_with(&format!("{s}."))))
        .map(|l| format!("{l}\n"))
        .collect();
    sha256_hex(text.as_bytes())
}

/// Stage record written as `manifest.txt`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    /// `input.<label> = <hash>` lines.
    pub inputs: BTreeMap<String, String>,
    /// Output paths relative to the stage directory, with SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub echo: String,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.txt";

    fn new(cmd: Command, cfg: &RunConfig) -> Self {
        Self {
            command: cmd.name().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash(cfg, cmd.sections()),
            echo: cfg.to_text(),
            ..Self::default()
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("command = {}\nversion = {}\nconfig_hash = {}\n", self.command, self.version, self.config_hash);
        for (k, v) in &self.inputs {
            writeln!(s, "input.{k} = {v}").unwrap();
        }
        for (k, v) in &self.outputs {
            writeln!(s, "output.{k} = {v}").unwrap();
        }
        for l in self.echo.lines() {
            writeln!(s, "config {l}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::default();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("config ") {
                m.echo.push_str(rest);
                m.echo.push('\n');
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Invalid(format!("manifest line `{line}`")))?;
            match k {
                "command" => m.command = v.into(),
                "version" => m.version = v.into(),
                "config_hash" => m.config_hash = v.into(),
                _ => {
                    if let Some(k) = k.strip_prefix("input.") {
                        m.inputs.insert(k.into(), v.into());
                    } else if let Some(k) = k.strip_prefix("output.") {
                        m.outputs.insert(k.into(), v.into());
                    } else {
                        return Err(Error::Invalid(format!("manifest key `{k}`")));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(dir.join(Self::FILE))?)
    }

    /// Records every file below `dir` except the manifest itself.
    fn record_outputs(&mut self, dir: &Path) -> Result<()> {
        let mut files = Vec::new();
        walk(dir, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
            if rel != Self::FILE {
                self.outputs.insert(rel, sha256_hex(&std::fs::read(&f)?));
            }
        }
        Ok(())
    }

    fn write(&mut self, dir: &Path) -> Result<()> {
        self.record_outputs(dir)?;
        std::fs::write(dir.join(Self::FILE), self.to_text())?;
        Ok(())
    }

    /// Whether every recorded output still exists with its hash.
    pub fn outputs_intact(&self, dir: &Path) -> bool {
        self.outputs
            .iter()
            .all(|(rel, h)| std::fs::read(dir.join(rel)).map(|b| sha256_hex(&b) == *h).unwrap_or(false))
    }
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn stage_dir(cfg: &RunConfig, cmd: Command) -> PathBuf {
    cfg.out.join(cmd.dir())
}

/// Fresh output directory for `cmd`.
fn clean_dir(cfg: &RunConfig, cmd: Command) -> Result<PathBuf> {
    let dir = stage_dir(cfg, cmd);
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Manifest of `cmd`, which must match the current config.
fn require(cfg: &RunConfig, cmd: Command) -> Result<Manifest> {
    let dir = stage_dir(cfg, cmd);
    let missing = || Error::MissingInput {
        path: dir.join(Manifest::FILE),
        command: cmd.name().into(),
    };
    let m = Manifest::read(&dir).map_err(|_| missing())?;
    if m.config_hash != config_hash(cfg, cmd.sections()) || !m.outputs_intact(&dir) {
        return Err(missing());
    }
    Ok(m)
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<()> {
    if let Some(up) = cmd.upstream() {
        require(cfg, up)?;
    }
    info!("{} -> {}", cmd.name(), stage_dir(cfg, cmd).display());
    match cmd {
        Command::Synth => cmd_synth(cfg),
        Command::Derive => cmd_derive(cfg),
        Command::Preprocess => cmd_preprocess(cfg),
        Command::Train => cmd_train(cfg),
        Command::Eval => cmd_eval(cfg),
        Command::Diagnose => cmd_diagnose(cfg),
        Command::Retro => cmd_retro(cfg),
    }
}

/// Runs the stages from `synth` to `retro` in order.
pub fn run_all(cfg: &RunConfig) -> Result<()> {
    Command::ALL.into_iter().try_for_each(|c| run(c, cfg))
}

fn member_dir(root: &Path, m: usize) -> PathBuf {
    root.join(format!("m{m}"))
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let dir = clean_dir(cfg, Command::Synth)?;
    synth::write_members(&cfg.synth, &dir)?;
    Manifest::new(Command::Synth, cfg).write(&dir)
}

pub fn cmd_derive(cfg: &RunConfig) -> Result<()> {
    use rayon::prelude::*;
    let data = stage_dir(cfg, Command::Synth);
    let dir = clean_dir(cfg, Command::Derive)?;
    (0..cfg.synth.n_members).into_par_iter().try_for_each(|m| -> Result<()> {
        let ds = Dataset::read_dir(&member_dir(&data, m), m)?;
        let concepts = derive_concepts(&ds, &cfg.synth.constants)?;
        let out = member_dir(&dir, m);
        std::fs::create_dir_all(&out)?;
        for s in concepts.as_array() {
            ogf::write(s, out.join(format!("{}.ogf", s.name)))?;
        }
        Ok(())
    })?;
    let mut man = Manifest::new(Command::Derive, cfg);
    man.inputs.insert("data".into(), Manifest::read(&data)?.config_hash);
    man.write(&dir)
}

fn load_members(cfg: &RunConfig) -> Result<Vec<MemberData>> {
    use rayon::prelude::*;
    let data = stage_dir(cfg, Command::Synth);
    let cdir = stage_dir(cfg, Command::Derive);
    (0..cfg.synth.n_members)
        .into_par_iter()
        .map(|m| {
            let dataset = Dataset::read_dir(&member_dir(&data, m), m)?;
            let read = |name: &str| -> Result<FieldSeries> {
                let mut s = ogf::read(member_dir(&cdir, m).join(format!("{name}.ogf")))?;
                s.grid = dataset.grid().clone();
                Ok(s)
            };
            let concepts = ConceptSet::from_array([read(CONCEPT_NAMES[0])?, read(CONCEPT_NAMES[1])?, read(CONCEPT_NAMES[2])?, read(CONCEPT_NAMES[3])?])?;
            let mut mlhc = ogf::read(member_dir(&data, m).join("mlhc.ogf"))?;
            mlhc.grid = dataset.grid().clone();
            Ok(MemberData { dataset, concepts, mlhc })
        })
        .collect()
}

/// Re-runs the (deterministic) conditioning chain and checks it against the
/// hashes the preprocess stage recorded.
fn load_prepared(cfg: &RunConfig) -> Result<Prepared> {
    let m = require(cfg, Command::Preprocess)?;
    let p = prepare(&load_members(cfg)?, &cfg.preprocess)?;
    if m.inputs.get("data_hash") != Some(&data_hash(&p.train)) {
        return Err(Error::MissingInput {
            path: stage_dir(cfg, Command::Preprocess).join(Manifest::FILE),
            command: Command::Preprocess.name().into(),
        });
    }
    Ok(p)
}

fn samples_csv(p: &Prepared) -> String {
    let mut s = String::from("split,member,month\n");
    for set in [&p.train, &p.val, &p.test] {
        for r in &set.samples {
            writeln!(s, "{},{},{}", set.kind.name(), set.members[r.member].member, set.base.at(r.t)).unwrap();
        }
    }
    s
}

pub fn cmd_preprocess(cfg: &RunConfig) -> Result<()> {
    let p = prepare(&load_members(cfg)?, &cfg.preprocess)?;
    let dir = clean_dir(cfg, Command::Preprocess)?;
    p.stats.write(&dir.join("norm_stats.txt"))?;
    std::fs::write(dir.join("samples.csv"), samples_csv(&p))?;
    let mut clip = String::from("variable,lo,hi\n");
    for (n, lo, hi) in &p.clip {
        writeln!(clip, "{n},{lo},{hi}").unwrap();
    }
    std::fs::write(dir.join("clip.csv"), clip)?;
    let mut man = Manifest::new(Command::Preprocess, cfg);
    man.inputs.insert("data_hash".into(), data_hash(&p.train));
    man.write(&dir)
}

fn ckpt_path(dir: &Path, mode: Mode, i: usize) -> PathBuf {
    dir.join(mode.name()).join(format!("v{}.ckpt", i + 1))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let dir = stage_dir(cfg, Command::Train);
    let p = load_prepared(cfg)?;
    let hash = data_hash(&p.train);
    if let Ok(m) = Manifest::read(&dir) {
        if m.config_hash == config_hash(cfg, Command::Train.sections()) && m.inputs.get("data_hash") == Some(&hash) && m.outputs_intact(&dir) {
            info!("train: checkpoints up to date, reusing");
            return Ok(());
        }
    }
    let base = cfg.net_config(Mode::Mixed);
    let val = cfg.train.validate.then_some(&p.val);
    let ensembles = train_ensemble(&cfg.ensemble, &base, &p.train, val, &cfg.train)?;
    let dir = clean_dir(cfg, Command::Train)?;
    for e in &ensembles {
        for (i, Member { seed, net, history }) in e.members.iter().enumerate() {
            let ck = Checkpoint {
                net: net.clone(),
                seed: *seed,
                optimizer: None,
            };
            let path = ckpt_path(&dir, e.mode, i);
            checkpoint::write(&ck, &path)?;
            std::fs::write(path.with_file_name(format!("v{}_history.csv", i + 1)), history.to_csv())?;
        }
    }
    let mut man = Manifest::new(Command::Train, cfg);
    man.inputs.insert("data_hash".into(), hash);
    man.inputs.insert("seeds".into(), cfg.ensemble.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
    man.write(&dir)
}

/// Checkpointed members of one configuration.
fn load_ensemble(cfg: &RunConfig, mode: Mode) -> Result<Vec<Network<f32>>> {
    let dir = stage_dir(cfg, Command::Train);
    (0..cfg.ensemble.seeds.len())
        .map(|i| {
            let path = ckpt_path(&dir, mode, i);
            if !path.exists() {
                return Err(Error::MissingInput {
                    path,
                    command: Command::Train.name().into(),
                });
            }
            let ck = checkpoint::read(&path)?;
            if ck.net.cfg != cfg.net_config(mode) || ck.seed != cfg.ensemble.seeds[i] {
                return Err(Error::MissingInput {
                    path,
                    command: Command::Train.name().into(),
                });
            }
            Ok(ck.net)
        })
        .collect()
}

fn predictions(cfg: &RunConfig, set: &SampleSet) -> Result<Vec<(Mode, EnsemblePrediction)>> {
    cfg.ensemble
        .configs
        .iter()
        .map(|&mode| {
            let nets = load_ensemble(cfg, mode)?;
            let refs: Vec<&Network<f32>> = nets.iter().collect();
            Ok((mode, predict_ensemble(&refs, set, cfg.eval.predict_batch)?))
        })
        .collect()
}

fn config_predictions(preds: &[(Mode, EnsemblePrediction)]) -> Result<Vec<ConfigPredictions>> {
    preds
        .iter()
        .map(|(mode, p)| {
            let fields = Variable::EVAL_ORDER
                .into_iter()
                .filter(|&v| reports(*mode, v))
                .map(|v| Ok((v, p.means(v)?)))
                .collect::<Result<_>>()?;
            Ok(ConfigPredictions { mode: *mode, fields })
        })
        .collect()
}

fn targets(set: &SampleSet) -> Result<Vec<(Variable, Vec<FieldSeries>)>> {
    Variable::EVAL_ORDER.into_iter().map(|v| Ok((v, target_series(set, v)?))).collect()
}

fn write_map(dir: &Path, stem: &str, s: &FieldSeries, scale: usize) -> Result<()> {
    ogf::write(s, dir.join(format!("{stem}.ogf")))?;
    let v = s.frame(0);
    write_ppm(dir.join(format!("{stem}.ppm")), &s.grid, v, symmetric_limit(v), scale)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let p = load_prepared(cfg)?;
    let preds = predictions(cfg, &p.test)?;
    let cps = config_predictions(&preds)?;
    let tg = targets(&p.test)?;
    let dir = clean_dir(cfg, Command::Eval)?;
    for mode in [AccMode::Pooled, AccMode::MapMean] {
        let rows = seasonal_table(&cps, &tg, mode)?;
        std::fs::write(dir.join(format!("acc_{}.csv", mode.name())), table_csv(&rows))?;
    }

    let maps = dir.join("maps");
    std::fs::create_dir_all(&maps)?;
    for cp in &cps {
        for (var, pred) in &cp.fields {
            let tgt = &tg.iter().find(|t| t.0 == *var).unwrap().1;
            let clim = Climatology::fit_many(&tgt.iter().collect::<Vec<_>>())?;
            let segs: Vec<(&FieldSeries, &FieldSeries)> = pred.iter().zip(tgt).collect();
            for season in Season::ALL {
                let m = acc_map(&segs, &clim, season)?;
                let stem = format!("{}_{}_{}", cp.mode.name(), var.name(), season.name());
                ogf::write(&m.to_series("acc")?, maps.join(format!("{stem}.ogf")))?;
                write_ppm(maps.join(format!("{stem}.ppm")), &m.grid, &m.values, 1.0, cfg.eval.image_scale)?;
            }
        }
    }

    // per-member MLHC skill next to the ensemble mean
    let mut members = String::from("config,member,season,acc\n");
    let mlhc_t = &tg[0].1;
    let clim = Climatology::fit_many(&mlhc_t.iter().collect::<Vec<_>>())?;
    for (mode, ep) in &preds {
        let per = ep.member_series(Variable::Mlhc)?;
        let mean = ep.means(Variable::Mlhc)?;
        for season in Season::ALL {
            for (label, series) in per.iter().enumerate().map(|(i, s)| (format!("v{}", i + 1), s)).chain([("mean".to_string(), &mean)]) {
                let segs: Vec<(&FieldSeries, &FieldSeries)> = series.iter().zip(mlhc_t).collect();
                let a = acc_scalar(&segs, &clim, season, AccMode::Pooled)?;
                writeln!(members, "{},{label},{},{:.6}", mode.name(), season.name(), a.acc).unwrap();
            }
        }
    }
    std::fs::write(dir.join("member_acc.csv"), members)?;

    let basin = dir.join("basin");
    std::fs::create_dir_all(&basin)?;
    let ids: Vec<usize> = crate::ensemble::segments(&p.test)?.iter().map(|s| p.test.members[s.0].member).collect();
    for (mode, ep) in &preds {
        for (k, f) in ep.fields(Variable::Mlhc)?.iter().enumerate() {
            let b = basin_timeseries(f, &mlhc_t[k], cfg.eval.weighting)?;
            std::fs::write(basin.join(format!("{}_m{}.csv", mode.name(), ids[k])), b.to_csv())?;
        }
    }
    let mut man = Manifest::new(Command::Eval, cfg);
    man.inputs.insert("data_hash".into(), data_hash(&p.train));
    man.write(&dir)
}

pub fn cmd_diagnose(cfg: &RunConfig) -> Result<()> {
    let p = load_prepared(cfg)?;
    let dir = clean_dir(cfg, Command::Diagnose)?;
    let teacher = cfg.synth.generative_weights;

    let mut contrib = Vec::new();
    let mut spreads = Vec::new();
    let mut ordering = String::from("config,seed,matches_teacher\n");
    for &mode in &cfg.ensemble.configs {
        let nets = load_ensemble(cfg, mode)?;
        let mut vs = Vec::new();
        for (net, &seed) in nets.iter().zip(&cfg.ensemble.seeds) {
            let c = bottleneck_contributions(net)?;
            if mode.supervised() {
                writeln!(ordering, "{},{seed},{}", mode.name(), ordering_matches(&c, &teacher)).unwrap();
            }
            vs.push(c.clone());
            contrib.push((mode, seed, c));
        }
        if vs.len() > 1 {
            spreads.push((mode, contribution_spread(&vs)?));
        }
    }
    std::fs::write(dir.join("contributions.csv"), contributions_csv(&contrib))?;
    std::fs::write(dir.join("spread.csv"), spread_csv(&spreads))?;
    std::fs::write(dir.join("ordering.csv"), ordering)?;

    let preds = predictions(cfg, &p.test)?;
    if cfg.ensemble.configs.contains(&Mode::Mixed) && cfg.ensemble.configs.contains(&Mode::PrescriptionOnly) {
        let rows = seasonal_table(&config_predictions(&preds)?, &targets(&p.test)?, AccMode::Pooled)?;
        let reg = regularization_report(&rows)?;
        std::fs::write(dir.join("regularization.csv"), regularization_csv(&reg))?;
        let mut summary = String::from("variable,mean_delta,signs\n");
        for var in Variable::EVAL_ORDER {
            if let Some((mean, signs)) = delta_summary(&reg, var) {
                writeln!(summary, "{},{:.6},{signs}", var.name(), mean).unwrap();
            }
        }
        std::fs::write(dir.join("regularization_summary.csv"), summary)?;
    }

    if cfg.ensemble.configs.contains(&Mode::Mixed) {
        let val = predictions(&RunConfig { ensemble: crate::ensemble::EnsembleSpec { configs: vec![Mode::Mixed], ..cfg.ensemble.clone() }, ..cfg.clone() }, &p.val)?;
        let test = preds.iter().find(|(m, _)| *m == Mode::Mixed).unwrap();
        let mut y = val[0].1.means(Variable::Mlhc)?;
        y.extend(test.1.means(Variable::Mlhc)?);
        let mut free = val[0].1.means(Variable::Free)?;
        free.extend(test.1.means(Variable::Free)?);
        let comps = free_concept_discrepancy(&y, &free, &Season::ALL)?;
        let out = dir.join("discrepancy");
        std::fs::create_dir_all(&out)?;
        let mut csv = String::from("season,n_steps,mean,min,max\n");
        for c in &comps {
            let s = c.to_series("discrepancy")?;
            write_map(&out, &format!("mixed_{}", c.season.name()), &s, cfg.eval.image_scale)?;
            let v: Vec<f64> = c.values.iter().copied().filter(|x| !x.is_nan()).collect();
            let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, x| (a.0.min(*x), a.1.max(*x)));
            writeln!(csv, "{},{},{:.6},{lo:.6},{hi:.6}", c.season.name(), c.n_steps, v.iter().sum::<f64>() / v.len() as f64).unwrap();
        }
        std::fs::write(out.join("summary.csv"), csv)?;
    }
    let mut man = Manifest::new(Command::Diagnose, cfg);
    man.inputs.insert("data_hash".into(), data_hash(&p.train));
    man.write(&dir)
}

pub fn cmd_retro(cfg: &RunConfig) -> Result<()> {
    let p = load_prepared(cfg)?;
    let mode = if cfg.ensemble.configs.contains(&Mode::Mixed) { Mode::Mixed } else { cfg.ensemble.configs[0] };
    let nets = load_ensemble(cfg, mode)?;
    let refs: Vec<&Network<f32>> = nets.iter().collect();
    let ep = predict_ensemble(&refs, &p.test, cfg.eval.predict_batch)?;
    let vars: Vec<Variable> = if mode.supervised() {
        vec![Variable::Mlhc, Variable::Concept(1), Variable::Concept(2)]
    } else {
        vec![Variable::Mlhc]
    };
    let mut owned: Vec<(String, FieldSeries)> = Vec::new();
    for &v in &vars {
        owned.push((format!("{}_pred", v.name()), ep.means(v)?.swap_remove(0)));
        owned.push((format!("{}_obs", v.name()), target_series(&p.test, v)?.swap_remove(0)));
    }
    let fields: Vec<(&str, &FieldSeries)> = owned.iter().map(|(n, s)| (n.as_str(), s)).collect();
    let d = &cfg.diagnostics;
    let r = retrospective(&fields, d.region, d.event, d.window)?;
    let dir = clean_dir(cfg, Command::Retro)?;
    std::fs::write(dir.join("retrospective.csv"), r.to_csv())?;
    let maps = dir.join("maps");
    std::fs::create_dir_all(&maps)?;
    for f in &r.fields {
        ogf::write(&f.maps, maps.join(format!("{}.ogf", f.name)))?;
        let limit = symmetric_limit(f.maps.values());
        for (k, ym) in r.months().iter().enumerate() {
            write_ppm(maps.join(format!("{}_{ym}.ppm", f.name)), &f.maps.grid, f.maps.frame(k), limit, cfg.eval.image_scale * 4)?;
        }
    }
    let mut man = Manifest::new(Command::Retro, cfg);
    man.inputs.insert("data_hash".into(), data_hash(&p.train));
    man.inputs.insert("member".into(), p.test.members[0].member.to_string());
    man.write(&dir)
}
