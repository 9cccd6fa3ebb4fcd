use fes_core::io::{Config, Dataset, Role, SpectrumKind};
use fes_core::spectral::{self, WavelengthGrid};
use fes_core::synthgen::ccd::{oh_reference_condition, OH_REFERENCE_NM};
use fes_core::synthgen::{acquire, assign_roles, build_dataset, clean_spectrum, predicted_snr, stream_rng, CcdConfig, EmitterModel};

fn reference_rate(grid: &WavelengthGrid, model: &EmitterModel, ccd: &CcdConfig) -> (usize, f64) {
    let flux = clean_spectrum(&oh_reference_condition(), grid, model).unwrap();
    let px = grid.nearest_pixel(OH_REFERENCE_NM);
    (px, ccd.electron_rate(flux[px]))
}

#[test]
fn reference_pixel_rate_is_calibrated_on_both_grids() {
    let model = EmitterModel::default();
    let ccd = CcdConfig::calibrated_for(&model);
    for grid in [WavelengthGrid::desk(), WavelengthGrid::default_instrument()] {
        let (_, rate) = reference_rate(&grid, &model, &ccd);
        assert!((rate - 2315.0).abs() / 2315.0 < 0.02, "{rate}");
    }
    assert!((ccd.read_noise_e - 24.0).abs() < 1e-12);
    assert!((ccd.dark_current_eps - 414.05).abs() < 1e-9);
}

#[test]
fn empirical_snr_follows_noise_budget() {
    let model = EmitterModel::default();
    let ccd = CcdConfig::calibrated_for(&model);
    let grid = WavelengthGrid::desk();
    let flux = clean_spectrum(&oh_reference_condition(), &grid, &model).unwrap();
    let (px, rate) = reference_rate(&grid, &model, &ccd);
    let mut rng = stream_rng(17, 3);
    let mut snrs = Vec::new();
    for tau in [0.05, 0.2, 0.4, 2.0, 20.0] {
        let dark = ccd.dark_current_eps * tau;
        let v: Vec<f64> = (0..3000)
            .map(|_| acquire(&flux, &grid, tau, &ccd, &mut rng).unwrap().intensities()[px] - dark)
            .collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        let predicted = predicted_snr(rate, tau, &ccd);
        assert!(((m / sd) - predicted).abs() / predicted < 0.05, "tau {tau}: {} vs {predicted}", m / sd);
        snrs.push(predicted);
    }
    // read-noise dominated at short exposure (SNR ~ tau), shot-noise limited at long (SNR ~ sqrt tau)
    assert!(snrs[1] / snrs[0] > 2.8);
    let shot = snrs[4] / snrs[3];
    assert!((shot - 10f64.sqrt()).abs() / 10f64.sqrt() < 0.1, "{shot}");
}

#[test]
fn acquisitions_are_unbiased() {
    let model = EmitterModel::default();
    let ccd = CcdConfig::calibrated_for(&model);
    let grid = WavelengthGrid::new(300.0, 330.0, 60).unwrap();
    let cond = fes_core::GasCondition::new(4.0, 0.9).unwrap();
    let flux = clean_spectrum(&cond, &grid, &model).unwrap();
    let tau = 0.2;
    let n = 500;
    let mut rng = stream_rng(5, 9);
    let mut acc = vec![0.0; grid.n_pixels];
    for _ in 0..n {
        for (a, v) in acc.iter_mut().zip(acquire(&flux, &grid, tau, &ccd, &mut rng).unwrap().intensities()) {
            *a += v;
        }
    }
    let mut worst: f64 = 0.0;
    for (i, a) in acc.iter().enumerate() {
        let signal = ccd.electron_rate(flux[i]) * tau;
        let dark = ccd.dark_current_eps * tau;
        let var = signal + dark + ccd.read_noise_e * ccd.read_noise_e;
        let z = (a / n as f64 - signal - dark) / (var / n as f64).sqrt();
        worst = worst.max(z.abs());
    }
    assert!(worst < 4.5, "{worst}");
}

#[test]
fn dataset_round_trips_through_disk() {
    let cfg = Config::desk();
    let (train, test) = cfg.conditions().unwrap();
    let roles = assign_roles(&train, &test, cfg.training.validation_fraction, cfg.seed);
    let plan = fes_core::synthgen::AcquisitionPlan { n_ls: 2, n_hs: 1, n_dark: 4, ..cfg.acquisition_plan() };
    let ds = build_dataset(&roles, &plan, &cfg.grid().unwrap(), &cfg.ccd_config(), &cfg.emitter_model()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.content_hash(), ds.content_hash());
    assert_eq!(back.manifest_bytes(), ds.manifest_bytes());

    let ls = back.records_where(SpectrumKind::LowSnr, |r| r == Role::Test);
    assert_eq!(ls.len(), test.len() * 2);
    for &i in &ls {
        let s = back.normalized(i).unwrap();
        assert!((spectral::band_mean(&s, 306.0, 313.0).unwrap() - 1.0).abs() < 1e-9);
    }
    let roles_seen: Vec<Role> = back.manifest.conditions.iter().map(|c| c.role).collect();
    assert_eq!(roles_seen.iter().filter(|r| **r == Role::Test).count(), 9);
    assert_eq!(roles_seen.iter().filter(|r| **r == Role::Validation).count(), 3);

    let mut other = cfg.acquisition_plan();
    other.seed += 1;
    let plan2 = fes_core::synthgen::AcquisitionPlan { n_ls: 2, n_hs: 1, n_dark: 4, ..other };
    let ds2 = build_dataset(&roles, &plan2, &cfg.grid().unwrap(), &cfg.ccd_config(), &cfg.emitter_model()).unwrap();
    assert_ne!(ds2.content_hash(), ds.content_hash());
}
