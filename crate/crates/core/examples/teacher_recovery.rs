//! Ordinary least squares of the teacher target on the z-scored concepts of
//! the previous month recovers the generative weights.
use mlhc_cbm::config::RunConfig;
use mlhc_cbm::synth;

fn main() -> mlhc_cbm::Result<()> {
    let cfg = RunConfig::parse("synth.n_lat = 24\nsynth.n_lon = 32\nsynth.years = 8\n")?;
    let grid = std::sync::Arc::new(synth::synth_grid(&cfg.synth)?);
    let m = synth::synthesize_member(&cfg.synth, 0, &grid)?;
    let cs = m.concepts.as_array();
    let z: Vec<(f64, f64)> = cs.iter().map(|s| synth::pooled_moments(s)).collect();

    // normal equations with an intercept
    let mut a = [[0.0; 5]; 5];
    let mut b = [0.0; 5];
    for t in 0..m.mlhc.len() {
        for &c in grid.ocean_cells() {
            let mut x = [1.0; 5];
            for k in 0..4 {
                x[k + 1] = (cs[k].get(t, c) - z[k].0) / z[k].1;
            }
            let y = m.mlhc.get(t, c);
            for i in 0..5 {
                b[i] += x[i] * y;
                for j in 0..5 {
                    a[i][j] += x[i] * x[j];
                }
            }
        }
    }
    for i in 0..5 {
        for r in i + 1..5 {
            let f = a[r][i] / a[i][i];
            for c in i..5 {
                a[r][c] -= f * a[i][c];
            }
            b[r] -= f * b[i];
        }
    }
    let mut w = [0.0; 5];
    for i in (0..5).rev() {
        w[i] = (b[i] - (i + 1..5).map(|c| a[i][c] * w[c]).sum::<f64>()) / a[i][i];
    }
    for (k, name) in mlhc_cbm::concepts::CONCEPT_NAMES.iter().enumerate() {
        let truth = cfg.synth.generative_weights[k];
        println!("{name:<14} fitted {:.4}  generative {truth:.2}  rel err {:.2}%", w[k + 1], 100.0 * (w[k + 1] - truth).abs() / truth);
    }
    Ok(())
}
