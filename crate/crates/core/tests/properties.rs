use std::sync::Arc;

use proptest::prelude::*;

use mlhc_cbm::config::RunConfig;
use mlhc_cbm::diagnostics::ContributionVector;
use mlhc_cbm::eval::pearson;
use mlhc_cbm::nn::lambda_schedule;
use mlhc_cbm::preprocess::detrend_linear;
use mlhc_cbm::{ogf, FieldSeries, GeoGrid, TimeAxis, YearMonth};

fn series(n_lat: usize, n_lon: usize, len: usize, mask: &[bool], vals: &[f64]) -> FieldSeries {
    let g = Arc::new(GeoGrid::regular(n_lat, n_lon, (-10.0, 10.0), (0.0, 30.0), mask.to_vec()).unwrap());
    let t = TimeAxis::new(YearMonth { year: 1990, month: 3 }, len).unwrap();
    FieldSeries::new(g, t, "x", "K", vals.to_vec()).unwrap().quantize_f32()
}

fn field() -> impl Strategy<Value = FieldSeries> {
    (1usize..5, 1usize..5, 2usize..6).prop_flat_map(|(a, b, t)| {
        let n = a * b;
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(-1e3f64..1e3, n * t),
        )
            .prop_map(move |(mut m, v)| {
                m[0] = true;
                series(a, b, t, &m, &v)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ogf_roundtrip_is_bitwise(s in field()) {
        let buf = ogf::encode(&s).unwrap();
        let back = ogf::decode(&buf).unwrap();
        prop_assert_eq!(ogf::encode(&back).unwrap(), buf);
        prop_assert_eq!(&back.grid, &s.grid);
        for (a, b) in back.values().iter().zip(s.values()) {
            prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn ogf_rejects_any_single_byte_flip(s in field(), at in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut buf = ogf::encode(&s).unwrap();
        let i = at.index(buf.len());
        buf[i] ^= 1 << bit;
        prop_assert!(ogf::decode(&buf).is_err());
    }

    #[test]
    fn pearson_ignores_positive_affine_maps(
        v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        k in 0.1f64..10.0,
        c in -100.0f64..100.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let scaled: Vec<f64> = a.iter().map(|x| k * x + c).collect();
        match (pearson(&a, &b), pearson(&scaled, &b)) {
            (Some(r), Some(s)) => {
                prop_assert!((r - s).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
            (None, _) | (_, None) => {}
        }
    }

    #[test]
    fn contributions_are_a_distribution(w in prop::collection::vec(-5.0f64..5.0, 1..8), k in 1e-3f64..1e3) {
        prop_assume!(w.iter().any(|x| *x != 0.0));
        let labels: Vec<String> = (0..w.len()).map(|i| i.to_string()).collect();
        let a = ContributionVector::from_weights(&w, labels.clone()).unwrap();
        let neg: Vec<f64> = w.iter().map(|x| -k * x).collect();
        let b = ContributionVector::from_weights(&neg, labels).unwrap();
        prop_assert!((a.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(a.values.iter().all(|v| *v >= 0.0));
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(a.ranking(), b.ranking());
    }

    #[test]
    fn lambda_decays_monotonically(epochs in 2usize..200, l1 in 0.0f64..0.8) {
        let mut prev = f64::INFINITY;
        for e in 0..epochs {
            let l = lambda_schedule(e, epochs, 0.8, l1).unwrap();
            prop_assert!(l <= prev && l >= l1 && l <= 0.8);
            prev = l;
        }
        prop_assert_eq!(lambda_schedule(epochs - 1, epochs, 0.8, l1).unwrap(), l1);
    }

    #[test]
    fn detrending_removes_any_line(a in -50.0f64..50.0, b in -5.0f64..5.0, len in 2usize..40) {
        let vals: Vec<f64> = (0..len).flat_map(|t| [a + b * t as f64, 2.0 * a - b * t as f64]).collect();
        let s = FieldSeries::new(
            Arc::new(GeoGrid::all_ocean(1, 2, (0.0, 1.0), (0.0, 1.0)).unwrap()),
            TimeAxis::new(YearMonth { year: 2000, month: 1 }, len).unwrap(),
            "x",
            "1",
            vals,
        )
        .unwrap();
        let d = detrend_linear(&s).unwrap();
        prop_assert!(d.values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn config_text_roundtrips(epochs in 2usize..100, lr in 1e-5f64..1e-1, seeds in prop::collection::vec(0u64..1000, 1..6), scale in 0.5f64..16.0) {
        let mut cfg = RunConfig::default();
        cfg.train.epochs = epochs;
        cfg.train.optimizer.lr = lr;
        cfg.ensemble.seeds = seeds;
        cfg.synth.spatial_scale = scale;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
