//! Runs every pipeline stage on the tiny configuration, the same way the
//! `mlhc-cbm all --config configs/tiny.cfg` command does, and lists outputs.
use std::path::Path;

use mlhc_cbm::config::RunConfig;
use mlhc_cbm::pipeline::{run_all, Command, Manifest};

fn main() -> mlhc_cbm::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.cfg");
    let mut cfg = RunConfig::load(&root)?;
    cfg.out = std::env::temp_dir().join("mlhc_cbm_tiny_run");
    run_all(&cfg)?;
    for cmd in Command::ALL {
        let m = Manifest::read(&cfg.out.join(cmd.dir()))?;
        println!("{:<11} {:>4} files  config {}", cmd.name(), m.outputs.len(), &m.config_hash[..12]);
    }
    print!("{}", std::fs::read_to_string(cfg.out.join("eval/acc_pooled.csv"))?);
    Ok(())
}
