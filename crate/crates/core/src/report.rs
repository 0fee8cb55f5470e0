//! Report serialization: CSV rows, a JSON document with fits and verdicts,
//! and plain-text plot data.
//!
//! Floats are printed with Rust's shortest round-trip formatting, so two runs
//! that compute identical numbers emit identical bytes.

use serde_json::json;

use crate::sweep::SweepReport;

/// Fixed CSV column order; documented in the README.
pub const CSV_COLUMNS: &[&str] = &[
    "eps",
    "under_resolved",
    "elastic",
    "bulk",
    "total",
    "int_f_b34",
    "int_f_b12",
    "scaled_bulk_b12",
    "lp_1",
    "lp_2",
    "lp_3",
    "l2_ref_norm",
    "quasinorm_b12",
    "eps_sup_grad",
    "el_residual",
    "regular_scale_c0",
    "badset_nodes",
    "badset_radius",
    "cover_balls",
    "cover_covered",
    "cover_nbhd_vol",
    "cover_vol_over_r3",
    "mono_max_rel_violation",
    "mono_allowance_ratio",
    "phase_iso",
    "phase_uniaxial",
    "phase_biaxial",
    "solver_iters",
    "solver_final_grad",
    "solver_converged",
];

pub fn report_csv(report: &SweepReport) -> String {
    let mut out = String::new();
    out.push_str(&CSV_COLUMNS.join(","));
    out.push('\n');
    for r in &report.rows {
        let mut fields: Vec<String> = Vec::with_capacity(CSV_COLUMNS.len());
        fields.push(r.epsilon.to_string());
        fields.push((r.under_resolved as u8).to_string());
        fields.push(r.elastic.to_string());
        fields.push(r.bulk.to_string());
        fields.push(r.total.to_string());
        fields.push(r.int_f_fit_region.to_string());
        fields.push(r.int_f_inner.to_string());
        fields.push(r.scaled_bulk_inner.to_string());
        for i in 0..3 {
            fields.push(
                r.lp_distances
                    .get(i)
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        fields.push(r.l2_reference_norm.to_string());
        fields.push(r.quasinorm_inner.to_string());
        fields.push(r.eps_sup_grad.to_string());
        fields.push(r.el_residual.to_string());
        fields.push(r.regular_scale_c0.to_string());
        fields.push(r.badset_nodes.to_string());
        fields.push(r.badset_containment_radius.to_string());
        fields.push(r.cover_balls.to_string());
        fields.push((r.cover_covered as u8).to_string());
        fields.push(r.cover_nbhd_volume.to_string());
        fields.push(r.cover_vol_over_r3.to_string());
        fields.push(r.mono_max_rel_violation.to_string());
        fields.push(r.mono_allowance_ratio.to_string());
        fields.push(r.phase_iso.to_string());
        fields.push(r.phase_uniaxial.to_string());
        fields.push(r.phase_biaxial.to_string());
        fields.push(r.solver_iterations.to_string());
        fields.push(r.solver_final_grad.to_string());
        fields.push((r.solver_converged as u8).to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Full JSON document. Wall-clock timings are included only when requested so
/// reproducibility comparisons can strip them.
pub fn report_json(report: &SweepReport, include_timing: bool) -> String {
    let mut doc = json!({
        "provenance": {
            "code_version": report.code_version,
            "config_hash": report.config_hash,
            "config_echo": report.config_echo,
        },
        "grid": { "n": report.n, "h": report.h },
        "material": {
            "a": report.a, "b": report.b, "c": report.c, "s_star": report.s_star,
        },
        "lp_exponents": report.lp_exponents,
        "rows": report.rows,
        "fits": {
            "int_f_fit_region": report.fit_int_f,
        },
        "analytic_quasinorm": {
            "value": report.analytic_quasinorm,
            "target": report.analytic_quasinorm_target,
        },
        "flags": {
            "bulk_monotone_in_eps": report.bulk_monotone_in_eps,
        },
        "certificates": report.certificates,
    });
    if include_timing {
        doc["timing"] = json!({ "solver_seconds_per_row": report.wall_times });
    }
    serde_json::to_string_pretty(&doc).expect("report serialization")
}

/// Plain-text plot data: coupling, bulk integral, and the fitted line.
pub fn plot_data(report: &SweepReport) -> String {
    let mut out = String::from("# eps int_f_b34 fit\n");
    for r in &report.rows {
        let fit = report
            .fit_int_f
            .map(|f| (f.intercept + f.slope * r.epsilon.ln()).exp())
            .unwrap_or(f64::NAN);
        out.push_str(&format!("{} {} {}\n", r.epsilon, r.int_f_fit_region, fit));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minimize::SolveOptions;
    use crate::qtensor::MaterialParams;
    use crate::sweep::{run_hedgehog_sweep, SweepConfig};

    #[test]
    fn small_sweep_emits_stable_reports() {
        let p = MaterialParams::new(1.0, 1.0, 1.0).unwrap();
        let mut cfg = SweepConfig::new(16, p, vec![0.55, 0.42]);
        cfg.solve = SolveOptions {
            max_iters: 4000,
            ..SolveOptions::default()
        };
        let report = run_hedgehog_sweep(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);

        let csv = report_csv(&report);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("eps,"));
        let header_cols = csv.lines().next().unwrap().split(',').count();
        let row_cols = csv.lines().nth(1).unwrap().split(',').count();
        assert_eq!(header_cols, row_cols);

        let js = report_json(&report, true);
        assert!(js.contains("\"certificates\""));
        assert!(js.contains("\"timing\""));
        let js_clean = report_json(&report, false);
        assert!(!js_clean.contains("\"timing\""));

        let plot = plot_data(&report);
        assert!(plot.starts_with("# eps"));
        assert_eq!(plot.lines().count(), 3);

        // Reruns are bit-identical away from timing.
        let report2 = run_hedgehog_sweep(&cfg).unwrap();
        assert_eq!(csv, report_csv(&report2));
        assert_eq!(js_clean, report_json(&report2, false));
        assert_eq!(report.config_hash, report2.config_hash);
    }
}
