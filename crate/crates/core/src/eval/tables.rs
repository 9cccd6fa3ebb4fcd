//! Tab-separated, plot-ready tables with a header row.

use std::fmt::Write;

use super::{ExposureRow, RfRow, SchemeResult};
use crate::dnn::EpochLog;

fn role_name(r: crate::io::Role) -> &'static str {
    match r {
        crate::io::Role::Train => "train",
        crate::io::Role::Validation => "validation",
        crate::io::Role::Test => "test",
    }
}

/// One row per scheme: REC, REP and RSD for pressure and equivalence ratio.
pub fn scheme_table(results: &[SchemeResult]) -> String {
    let mut s = String::from("scheme\trec_p\trec_phi\trep_p\trep_phi\trsd_p\trsd_phi\n");
    for r in results {
        writeln!(
            s,
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.scheme.name(),
            r.rec_pressure,
            r.rec_phi,
            r.rep_pressure,
            r.rep_phi,
            r.rsd_pressure,
            r.rsd_phi
        )
        .unwrap();
    }
    s
}

/// Per-condition prediction mean and spread for every scheme.
pub fn condition_table(results: &[SchemeResult]) -> String {
    let mut s = String::from("scheme\tcondition\trole\tp_true\tphi_true\tn\tp_mean\tp_std\tphi_mean\tphi_std\n");
    for r in results {
        for c in &r.conditions {
            writeln!(
                s,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                r.scheme.name(),
                c.condition_index,
                role_name(c.role),
                c.pressure_bar,
                c.equivalence_ratio,
                c.n,
                c.pressure_mean,
                c.pressure_std,
                c.phi_mean,
                c.phi_std
            )
            .unwrap();
        }
    }
    s
}

pub fn rf_table(rows: &[RfRow]) -> String {
    let mut s = String::from(
        "n_layers\tkernel_size\tdownsample\treceptive_field\tprobe_footprint\tparam_count\trep_p\trep_phi\trsd_p\trsd_phi\n",
    );
    for r in rows {
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.n_layers,
            r.kernel_size,
            r.downsample,
            r.receptive_field,
            r.probe_footprint,
            r.param_count,
            r.rep_pressure,
            r.rep_phi,
            r.rsd_pressure,
            r.rsd_phi
        )
        .unwrap();
    }
    s
}

pub fn exposure_table(rows: &[ExposureRow]) -> String {
    let mut s = String::from("tau_s\tsnr");
    if let Some(first) = rows.first() {
        for (scheme, _, _) in &first.accuracy {
            write!(s, "\tacc_p_{0}\tacc_phi_{0}", scheme.name()).unwrap();
        }
    }
    s.push('\n');
    for r in rows {
        write!(s, "{}\t{:.4}", r.tau_s, r.snr).unwrap();
        for (_, p, phi) in &r.accuracy {
            write!(s, "\t{p:.4}\t{phi:.4}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn training_log_table(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch\tstep\tlr\ttrain_loss\tval_loss\n");
    for r in log {
        writeln!(s, "{}\t{}\t{:.6e}\t{:.8e}\t{:.8e}", r.epoch, r.step, r.lr, r.train_loss, r.val_loss).unwrap();
    }
    s
}
