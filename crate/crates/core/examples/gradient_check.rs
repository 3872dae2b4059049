//! Central finite-difference checks of every layer kernel and of the composed
//! network in each bottleneck configuration.
use mlhc_cbm::nn::gradcheck::{check_layers, check_network, tiny_config};
use mlhc_cbm::nn::Mode;

fn main() -> mlhc_cbm::Result<()> {
    let mut reports = check_layers(1, 12);
    for mode in Mode::ALL {
        let mut r = check_network(&tiny_config(mode), 2, 30)?;
        r.name = format!("network/{}", mode.name());
        reports.push(r);
    }
    println!("{:<28} {:>6} {:>8} {:>10}", "check", "probes", "skipped", "max rel");
    for r in &reports {
        println!("{:<28} {:>6} {:>8} {:>10.2e}", r.name, r.probes.len(), r.skipped, r.max_rel());
        if let Some(w) = r.worst() {
            println!("{:<28} worst {}: analytic {:.6e} numeric {:.6e}", "", w.label, w.analytic, w.numeric);
        }
    }
    Ok(())
}
