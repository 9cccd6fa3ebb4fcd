use fes_core::dnn::{self, du, ScheduleConfig};
use fes_core::eval::metrics;
use fes_core::kriging::{KrigingModel, KrigingOptions};
use fes_core::pod;
use fes_core::spectral::{self, Spectrum, Stage, WavelengthGrid};
use fes_core::synthgen::{full_factorial, latin_hypercube, SamplingPlan};
use proptest::prelude::*;

fn spectrum_values(w: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..10.0, w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn du_round_trip(x in prop::collection::vec(-1e3f64..1e3, 1..300), nd in 1usize..20) {
        let down = du::downsample(&x, nd);
        prop_assert_eq!(down.len(), du::sub_len(x.len(), nd) * nd);
        prop_assert_eq!(du::upsample(&down, nd, x.len()).unwrap(), x);
    }

    #[test]
    fn param_count_matches_layer_shapes(l in 2usize..10, c in 1usize..64, k in 0usize..8, d in 1usize..32) {
        let cfg = dnn::NetworkConfig { n_layers: l, n_channels: c, kernel_size: 2 * k + 1, downsample: d, input_width: 64 };
        let k = 2 * k + 1;
        let by_layer = (d * c * k + c) + (l - 2) * (c * c * k + c) + (c * d * k + d);
        prop_assert_eq!(dnn::param_count(&cfg), by_layer);
        prop_assert_eq!(dnn::receptive_field(&cfg), d * (l * (k - 1) + 1));
    }

    #[test]
    fn oh_normalization_is_scale_free(v in spectrum_values(424), scale in 0.01f64..100.0) {
        let grid = WavelengthGrid::desk();
        let a = Spectrum::new(grid, v.clone(), 0.2, Stage::DarkSubtracted).unwrap();
        let b = Spectrum::new(grid, v.iter().map(|x| x * scale).collect(), 0.2, Stage::DarkSubtracted).unwrap();
        let (na, nb) = (spectral::oh_normalize(&a).unwrap(), spectral::oh_normalize(&b).unwrap());
        prop_assert!((spectral::band_mean(&na, 306.0, 313.0).unwrap() - 1.0).abs() < 1e-12);
        for (x, y) in na.intensities().iter().zip(nb.intensities()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn dark_subtraction_is_exact(v in spectrum_values(64), d in spectrum_values(64)) {
        let grid = WavelengthGrid::new(300.0, 320.0, 64).unwrap();
        let raw = Spectrum::new(grid, v.clone(), 0.2, Stage::RawCounts).unwrap();
        let dark = Spectrum::new(grid, d.clone(), 0.2, Stage::RawCounts).unwrap();
        let s = spectral::dark_subtract(&raw, &dark).unwrap();
        prop_assert_eq!(s.stage(), Stage::DarkSubtracted);
        for ((r, dk), o) in v.iter().zip(&d).zip(s.intensities()) {
            prop_assert_eq!(*o, r - dk);
        }
    }

    #[test]
    fn pod_projection_inverts_reconstruction(
        rows in prop::collection::vec(spectrum_values(24), 6..12),
        c in prop::collection::vec(-3.0f64..3.0, 4),
    ) {
        let basis = match pod::fit_basis(&rows, 4) {
            Ok(b) => b,
            Err(_) => return Ok(()),
        };
        prop_assert!(basis.orthonormality_error() < 1e-9);
        let back = basis.project(&basis.reconstruct(&c).unwrap()).unwrap();
        for (a, b) in c.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let e = basis.energy_fraction();
        prop_assert!(e.windows(2).all(|p| p[0] >= p[1] - 1e-12));
        prop_assert!(basis.cumulative_energy() <= 1.0 + 1e-12);
    }

    #[test]
    fn metrics_ignore_condition_order_and_units(
        preds in prop::collection::vec(prop::collection::vec(0.5f64..2.0, 1..6), 1..6),
        scale in 0.1f64..50.0,
    ) {
        let truth: Vec<f64> = (0..preds.len()).map(|i| 1.0 + 0.1 * i as f64).collect();
        let a = metrics(&preds, &truth).unwrap();
        let scaled: Vec<Vec<f64>> = preds.iter().map(|p| p.iter().map(|v| v * scale).collect()).collect();
        let st: Vec<f64> = truth.iter().map(|t| t * scale).collect();
        let b = metrics(&scaled, &st).unwrap();
        let rp: Vec<Vec<f64>> = preds.iter().rev().cloned().collect();
        let rt: Vec<f64> = truth.iter().rev().copied().collect();
        let c = metrics(&rp, &rt).unwrap();
        for m in [b, c] {
            prop_assert!((a.rel_error - m.rel_error).abs() < 1e-9 && (a.rsd - m.rsd).abs() < 1e-9);
        }
        prop_assert!(a.rel_error >= 0.0 && a.rsd >= 0.0);
    }

    #[test]
    fn schedule_stays_within_bounds(step in 0usize..2000, t_mult in 1usize..3) {
        let s = ScheduleConfig { t_mult, ..Default::default() };
        let lr = s.lr(step);
        prop_assert!(lr >= s.eta_min && lr <= s.eta_max);
    }

    #[test]
    fn latin_hypercube_hits_every_stratum(n in 1usize..40, seed in any::<u64>()) {
        let plan = SamplingPlan::latin_hypercube(n, seed);
        let pts = latin_hypercube(&plan).unwrap();
        prop_assert_eq!(pts.len(), n);
        let stratum = |v: f64, (lo, hi): (f64, f64)| (((v - lo) / (hi - lo) * n as f64) as usize).min(n - 1);
        let mut p: Vec<usize> = pts.iter().map(|c| stratum(c.pressure_bar, plan.pressure_range)).collect();
        let mut f: Vec<usize> = pts.iter().map(|c| stratum(c.equivalence_ratio, plan.phi_range)).collect();
        p.sort_unstable();
        f.sort_unstable();
        prop_assert_eq!(&p, &(0..n).collect::<Vec<_>>());
        prop_assert_eq!(&f, &(0..n).collect::<Vec<_>>());
        prop_assert_eq!(latin_hypercube(&plan).unwrap(), pts);
    }

    #[test]
    fn factorial_is_a_grid_product(np in 1usize..8, nf in 1usize..8) {
        let pts = full_factorial(&SamplingPlan::full_factorial(np, nf)).unwrap();
        prop_assert_eq!(pts.len(), np * nf);
        let mut ps: Vec<u64> = pts.iter().map(|c| c.pressure_bar.to_bits()).collect();
        ps.sort_unstable();
        ps.dedup();
        prop_assert_eq!(ps.len(), np);
    }

    #[test]
    fn composite_loss_blends_sse(
        pred in prop::collection::vec(-2.0f64..2.0, 48),
        target in prop::collection::vec(-2.0f64..2.0, 48),
    ) {
        let (l0, g0) = dnn::composite_loss(&pred, &target, 16, None, 0.0).unwrap();
        let sse: f64 = pred.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 3.0;
        prop_assert!((l0 - sse).abs() <= 1e-12 * sse.max(1.0));
        for ((g, a), b) in g0.iter().zip(&pred).zip(&target) {
            prop_assert!((g - 2.0 * (a - b) / 3.0).abs() < 1e-12);
        }
        let (same, _) = dnn::composite_loss(&pred, &pred, 16, None, 0.0).unwrap();
        prop_assert_eq!(same, 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kriging_ignores_site_order(
        pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..9),
        q in (0.0f64..1.0, 0.0f64..1.0),
        shift in 1usize..8,
    ) {
        let mut sites: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a, b]).collect();
        sites.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sites.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-3 && (a[1] - b[1]).abs() < 1e-3);
        prop_assume!(sites.len() >= 3);
        let targets: Vec<Vec<f64>> = sites.iter().map(|s| vec![1.0 + 5.0 * s[0] * s[1] + s[1]]).collect();
        let opts = KrigingOptions::default();
        let a = KrigingModel::fit(&sites, &targets, &opts).unwrap();
        let k = shift % sites.len();
        sites.rotate_left(k);
        let mut rotated = targets.clone();
        rotated.rotate_left(k);
        let b = KrigingModel::fit(&sites, &rotated, &opts).unwrap();
        let (pa, pb) = (a.predict(&[q.0, q.1]).unwrap(), b.predict(&[q.0, q.1]).unwrap());
        prop_assert!((pa.mean[0] - pb.mean[0]).abs() < 1e-6 * pa.mean[0].abs().max(1.0));
        for (s, t) in sites.iter().zip(&rotated) {
            prop_assert!(((b.predict(s).unwrap().mean[0] - t[0]) / t[0]).abs() < 1e-6);
        }
    }
}
