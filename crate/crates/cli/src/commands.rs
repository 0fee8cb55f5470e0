//! Subcommand implementations and the exit-code contract:
//! 0 success, 1 usage/IO error, 2 solver non-convergence, 3 certificate
//! failure.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use qtensor_core::sweep::BoundaryMode;
use qtensor_core::{
    bulk_gradient, bulk_potential, cover_bad_set, discrete_energy, dist_to_vacuum,
    el_residual_check, equal_eigenvalue_curve, load_field, minimize, plot_data, report_csv,
    report_json, run_hedgehog_sweep, save_field, save_mask, Ball, CoverParams, FieldDiagnostics,
    Grid, MaterialParams, QField, QTensor, SolveOptions, StepPolicy, SweepConfig,
};

use crate::config::Config;

pub struct Ctx<'a> {
    pub config: &'a Config,
    pub out: &'a Path,
    pub deterministic: bool,
    pub verbose: u8,
}

impl Ctx<'_> {
    fn log(&self, level: u8, msg: &str) {
        if self.verbose >= level {
            eprintln!("{msg}");
        }
    }

    fn write_out(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }
}

fn material_from(cfg: &Config) -> Result<MaterialParams> {
    let a = cfg.req_f64("material.a")?;
    let b = cfg.req_f64("material.b")?;
    let c = cfg.req_f64("material.c")?;
    MaterialParams::new(a, b, c).map_err(|e| anyhow::anyhow!("material constants: {e}"))
}

fn solve_options_from(cfg: &Config) -> Result<SolveOptions> {
    let policy = cfg
        .opt_str("solve.step_policy")
        .unwrap_or_else(|| "barzilai-borwein".into())
        .parse::<StepPolicy>()
        .map_err(|e| anyhow::anyhow!("config key 'solve.step_policy': {e}"))?;
    Ok(SolveOptions {
        grad_tol: cfg.opt_f64_nullable("solve.grad_tol")?,
        max_iters: cfg.opt_u64("solve.max_iters", 20_000)?,
        step_policy: policy,
        record_every: cfg.opt_u64("solve.record_every", 100)?,
    })
}

/// Echo of the effective configuration: every key the command consumed, with
/// defaults resolved, in sorted order. Re-running from this file reproduces
/// the run.
fn echo_effective(ctx: &Ctx, pairs: &[(&str, String)]) -> Result<()> {
    let mut sorted: Vec<&(&str, String)> = pairs.iter().collect();
    sorted.sort_by_key(|(k, _)| *k);
    let mut text = String::new();
    for (k, v) in sorted {
        writeln!(text, "{k} = {v}").unwrap();
    }
    ctx.write_out("effective_config.txt", &text)
}

pub fn cmd_solve(ctx: &Ctx) -> Result<i32> {
    let cfg = ctx.config;
    let n = cfg.req_usize("grid.n")?;
    let params = material_from(cfg)?;
    let epsilon = cfg.req_f64("epsilon")?;
    let boundary = cfg.req_str("boundary.mode")?;
    let default_init = match boundary.as_str() {
        "hedgehog" => "reference",
        "constant-vacuum" => "vacuum",
        other => bail!("config key 'boundary.mode': unknown mode '{other}' (hedgehog | constant-vacuum)"),
    };
    let init = cfg
        .opt_str("init.mode")
        .unwrap_or_else(|| default_init.to_string());
    let core_cells = cfg.opt_f64("init.core_cells", 3.0)?;
    let opts = solve_options_from(cfg)?;
    cfg.finish()?;

    let grid = Grid::new(n).map_err(|e| anyhow::anyhow!("config key 'grid.n': {e}"))?;
    if epsilon < 2.0 * grid.h() {
        bail!(
            "config key 'epsilon': {epsilon} below the resolution floor 2h = {}",
            2.0 * grid.h()
        );
    }
    let mut field = match boundary.as_str() {
        "hedgehog" => QField::with_hedgehog_boundary(grid, params, epsilon),
        _ => QField::constant_vacuum(grid, params, epsilon, [0.0, 0.0, 1.0]),
    };
    match init.as_str() {
        "reference" => field.fill_hedgehog_reference(core_cells * grid.h()),
        "vacuum" => {
            if boundary == "hedgehog" {
                bail!("config key 'init.mode': vacuum init needs the constant-vacuum boundary");
            }
        }
        "zero" => {
            for idx in 0..grid.node_count() {
                if !field.mask()[idx] {
                    field.set_q(idx, QTensor::ZERO);
                }
            }
        }
        other => bail!("config key 'init.mode': unknown mode '{other}' (reference | vacuum | zero)"),
    }

    ctx.log(
        1,
        &format!(
            "solving n={n} eps={epsilon} boundary={boundary} deterministic={}",
            ctx.deterministic
        ),
    );
    let stats = minimize(&mut field, &opts).context("solver")?;
    ctx.log(
        1,
        &format!(
            "done: {} iterations, final gradient {:.3e}, converged {}",
            stats.iterations, stats.final_grad_norm, stats.converged
        ),
    );

    save_field(&field, &ctx.out.join("field.qtf")).context("writing field.qtf")?;
    ctx.write_out(
        "stats.json",
        &serde_json::to_string_pretty(&stats).expect("stats serialization"),
    )?;
    echo_effective(
        ctx,
        &[
            ("grid.n", n.to_string()),
            ("material.a", params.a.to_string()),
            ("material.b", params.b.to_string()),
            ("material.c", params.c.to_string()),
            ("epsilon", epsilon.to_string()),
            ("boundary.mode", boundary.clone()),
            ("init.mode", init.clone()),
            ("init.core_cells", core_cells.to_string()),
            (
                "solve.grad_tol",
                opts.grad_tol.map(|t| t.to_string()).unwrap_or("auto".into()),
            ),
            ("solve.max_iters", opts.max_iters.to_string()),
            ("solve.step_policy", opts.step_policy.to_string()),
            ("solve.record_every", opts.record_every.to_string()),
        ],
    )?;
    Ok(if stats.converged { 0 } else { 2 })
}

pub fn cmd_sweep(ctx: &Ctx) -> Result<i32> {
    let cfg = ctx.config;
    let n = cfg.req_usize("grid.n")?;
    let params = material_from(cfg)?;
    let epsilons = cfg.req_f64_list("sweep.epsilons")?;
    let mut sweep = SweepConfig::new(n, params, epsilons);
    sweep.boundary = match cfg
        .opt_str("boundary.mode")
        .unwrap_or_else(|| "hedgehog".into())
        .as_str()
    {
        "hedgehog" => BoundaryMode::Hedgehog,
        "constant-vacuum" => BoundaryMode::ConstantVacuum,
        other => bail!(
            "config key 'boundary.mode': unknown mode '{other}' (hedgehog | constant-vacuum)"
        ),
    };
    sweep.lp_exponents = cfg.opt_f64_list("sweep.lp_exponents", &[1.5, 2.0, 2.5])?;
    sweep.fit_region = Ball::new([0.0; 3], cfg.opt_f64("sweep.fit_region_radius", 0.75)?);
    sweep.inner_region = Ball::new([0.0; 3], cfg.opt_f64("sweep.inner_region_radius", 0.5)?);
    sweep.init_core_cells = cfg.opt_f64("init.core_cells", 3.0)?;
    sweep.badset_delta_factor = cfg.opt_f64("badset.delta_factor", 0.1)?;
    sweep.badset_r_factor = cfg.opt_f64("badset.r_factor", 4.0)?;
    sweep.cover_eta = cfg.opt_f64("cover.eta", 0.05)?;
    sweep.cover_beta = cfg.opt_f64("cover.beta", 0.25)?;
    sweep.cover_budget = cfg.opt_usize("cover.budget", 4096)?;
    sweep.phase_tol = cfg.opt_f64("phase.tol", 1e-3)?;
    sweep.solve = solve_options_from(cfg)?;
    sweep.snapshot_dir = Some(ctx.out.to_path_buf());
    cfg.finish()?;

    ctx.log(
        1,
        &format!(
            "sweep: n={n}, {} couplings, deterministic={}",
            sweep.epsilons.len(),
            ctx.deterministic
        ),
    );
    let report = run_hedgehog_sweep(&sweep).context("sweep")?;

    ctx.write_out("report.csv", &report_csv(&report))?;
    ctx.write_out("report.json", &report_json(&report, true))?;
    ctx.write_out("plotdata.txt", &plot_data(&report))?;
    ctx.write_out("effective_config.txt", &report.config_echo)?;

    for c in &report.certificates {
        let kind = if c.hard { "certificate" } else { "flag" };
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        println!("{kind} {}: {verdict} - {}", c.name, c.details);
    }
    if !report.hard_pass() {
        return Ok(3);
    }
    if !report.all_converged() {
        return Ok(2);
    }
    Ok(0)
}

pub fn cmd_diagnose(ctx: &Ctx) -> Result<i32> {
    let cfg = ctx.config;
    let field_path = cfg.req_str("field.path")?;
    let theta_centers = cfg.opt_vec3_list("theta.centers")?;
    let theta_radii = cfg.opt_f64_list("theta.radii", &[])?;
    let badset_r = cfg.opt_f64_nullable("badset.r")?;
    let badset_delta = cfg.opt_f64_nullable("badset.delta")?;
    let region_radius = cfg.opt_f64("region.radius", 0.5)?;
    let cover_eta = cfg.opt_f64("cover.eta", 0.05)?;
    let cover_beta = cfg.opt_f64("cover.beta", 0.25)?;
    let cover_budget = cfg.opt_usize("cover.budget", 4096)?;
    let want_quasinorm = cfg.opt_str("quasinorm").map(|v| v == "true").unwrap_or(true);
    let stress_region = cfg.opt_vec3_list("stress.region_center")?;
    let stress_radius = cfg.opt_f64("stress.region_radius", 0.4)?;
    cfg.finish()?;

    let field = load_field(Path::new(&field_path))
        .with_context(|| format!("config key 'field.path': cannot load '{field_path}'"))?;
    let grid = field.grid();
    let region = Ball::new([0.0; 3], region_radius);
    let diag = FieldDiagnostics::new(&field);
    let energy = discrete_energy(&field);
    let el = el_residual_check(&field, &region);

    let mut summary = serde_json::json!({
        "field": field_path,
        "n": grid.n(),
        "epsilon": field.epsilon(),
        "energy": { "elastic": energy.elastic, "bulk": energy.bulk, "total": energy.total },
        "el_residual": el.residual,
        "eps_sup_grad": el.eps_sup_grad,
    });

    if let Some(centers) = theta_centers {
        let mut csv = String::from("cx,cy,cz,r,theta\n");
        for c in centers {
            let radii = if theta_radii.is_empty() {
                qtensor_core::monotonicity_ladder(&grid, c)
            } else {
                theta_radii.clone()
            };
            let prof = diag.monotonicity_profile(c, &radii).context("theta profile")?;
            for (r, t) in prof.radii.iter().zip(&prof.thetas) {
                writeln!(csv, "{},{},{},{},{}", c[0], c[1], c[2], r, t).unwrap();
            }
        }
        ctx.write_out("theta_profiles.csv", &csv)?;
    }

    if let (Some(r), Some(delta)) = (badset_r, badset_delta) {
        let cover_params = CoverParams {
            r,
            delta,
            eta: cover_eta,
            beta: cover_beta,
            budget: cover_budget,
        };
        let (cover, mask) = cover_bad_set(&diag, &region, &cover_params).context("covering")?;
        save_mask(&mask, &field, &ctx.out.join("badset_mask.qtnm"))?;
        ctx.write_out(
            "cover.json",
            &serde_json::to_string_pretty(&cover).expect("cover serialization"),
        )?;
        summary["badset"] = serde_json::json!({
            "nodes": mask.len(),
            "containment_radius": mask.containment_radius(&grid, [0.0; 3]),
            "cover_balls": cover.balls.len(),
        });
    }

    if want_quasinorm {
        summary["quasinorm"] = serde_json::json!(diag.weak_l3_quasinorm(&region));
    }
    if let Some(centers) = stress_region {
        let c = centers.first().copied().unwrap_or([0.0; 3]);
        summary["stress_residual"] =
            serde_json::json!(diag.stress_energy_residual(&Ball::new(c, stress_radius)));
    }

    ctx.write_out(
        "summary.json",
        &serde_json::to_string_pretty(&summary).expect("summary serialization"),
    )?;
    Ok(0)
}

// Deterministic 64-bit mix for the self-check sampling.
struct SplitMix(u64);

impl SplitMix {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// 1D minimizer: golden-section bracket, then bisection on the sign of the
/// central-difference derivative. Pure value comparison stalls at sqrt(eps)
/// around a quadratic minimum; the derivative sign localizes much closer.
fn numeric_argmin(mut lo: f64, mut hi: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    let scale = hi.abs().max(lo.abs()).max(1.0);
    let step = 1e-6 * scale;
    let slope = |x: f64| f(x + step) - f(x - step);
    let (mut a, mut b) = (lo - 10.0 * step, hi + 10.0 * step);
    if slope(a) > 0.0 || slope(b) < 0.0 {
        return 0.5 * (lo + hi);
    }
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        if slope(mid) <= 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

pub fn cmd_verify(ctx: &Ctx) -> Result<i32> {
    let cfg = ctx.config;
    let n = cfg.req_usize("grid.n")?;
    let params = material_from(cfg)?;
    let epsilon = cfg.req_f64("epsilon")?;
    cfg.finish()?;

    let mut all_ok = true;
    let mut lines: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool, detail: String| {
        let line = format!("verify {name}: {} - {detail}", if ok { "PASS" } else { "FAIL" });
        println!("{line}");
        lines.push(line);
        all_ok &= ok;
    };

    // Closed-form constants against 1D numeric minimization.
    let mut rng = SplitMix(0x5eed);
    let mut worst_s = 0.0f64;
    let mut worst_l = 0.0f64;
    let mut worst_f = 0.0f64;
    let mut barrier_ok = true;
    for _ in 0..20 {
        let p = MaterialParams::new(
            rng.uniform(0.2, 3.0),
            rng.uniform(0.2, 3.0),
            rng.uniform(0.2, 3.0),
        )
        .unwrap();
        let s_num = numeric_argmin(1e-9, 3.0 * p.s_star, &|s| p.uniaxial_bulk(s));
        worst_s = worst_s.max((s_num - p.s_star).abs() / p.s_star);
        worst_f = worst_f.max(p.uniaxial_bulk(p.s_star).abs());
        let l_num = numeric_argmin(0.0, 2.0 * p.s_star, &|l| equal_eigenvalue_curve(l, &p));
        worst_l = worst_l.max((l_num - p.lambda_star).abs() / p.lambda_star);
        barrier_ok &= p.g_at_lambda_star > 0.0;
    }
    check(
        "closed_form_constants",
        worst_s <= 1e-8 && worst_l <= 1e-8 && worst_f <= 1e-10 && barrier_ok,
        format!("s* rel {worst_s:.2e}, lambda* rel {worst_l:.2e}, f(s*) {worst_f:.2e}"),
    );

    // Bulk gradient against finite differences.
    let mut worst_g = 0.0f64;
    for _ in 0..200 {
        let q = QTensor::new(std::array::from_fn(|_| rng.uniform(-2.0, 2.0)));
        let g = bulk_gradient(&q, &params);
        let gn = g.0.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
        for i in 0..5 {
            let mut qp = q;
            qp.0[i] += 1e-5;
            let mut qm = q;
            qm.0[i] -= 1e-5;
            let fd = (bulk_potential(&qp, &params) - bulk_potential(&qm, &params)) / 2e-5;
            worst_g = worst_g.max((fd - g.0[i]).abs() / gn);
        }
    }
    check(
        "bulk_gradient_fd",
        worst_g <= 1e-5,
        format!("max relative error {worst_g:.2e}"),
    );

    // Vacuum distance against a direction scan.
    let mut worst_d = 0.0f64;
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    for _ in 0..50 {
        let q = QTensor::new(std::array::from_fn(|_| rng.uniform(-2.0, 2.0)));
        let m = q.to_matrix();
        let quad = |v: [f64; 3]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += v[i] * m[i][j] * v[j];
                }
            }
            s
        };
        let mut best = f64::NEG_INFINITY;
        let mut best_n = [0.0, 0.0, 1.0];
        for i in 0..4000 {
            let z: f64 = 1.0 - 2.0 * (i as f64 + 0.5) / 4000.0;
            let rho = (1.0 - z * z).sqrt();
            let th = golden_angle * i as f64;
            let dir = [rho * th.cos(), rho * th.sin(), z];
            let v = quad(dir);
            if v > best {
                best = v;
                best_n = dir;
            }
        }
        // Shrinking-cap refinement around the scan winner.
        let mut cap = 0.06;
        for _ in 0..3 {
            let tang = if best_n[0].abs() < 0.9 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 1.0, 0.0]
            };
            let dotw = tang[0] * best_n[0] + tang[1] * best_n[1] + tang[2] * best_n[2];
            let mut w = [
                tang[0] - dotw * best_n[0],
                tang[1] - dotw * best_n[1],
                tang[2] - dotw * best_n[2],
            ];
            let wn = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            w = [w[0] / wn, w[1] / wn, w[2] / wn];
            let u = [
                best_n[1] * w[2] - best_n[2] * w[1],
                best_n[2] * w[0] - best_n[0] * w[2],
                best_n[0] * w[1] - best_n[1] * w[0],
            ];
            let center = best_n;
            for i in -10i32..=10 {
                for j in -10i32..=10 {
                    let da = cap * i as f64 / 10.0;
                    let db = cap * j as f64 / 10.0;
                    let mut v = [
                        center[0] + da * w[0] + db * u[0],
                        center[1] + da * w[1] + db * u[1],
                        center[2] + da * w[2] + db * u[2],
                    ];
                    let vn = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    v = [v[0] / vn, v[1] / vn, v[2] / vn];
                    let val = quad(v);
                    if val > best {
                        best = val;
                        best_n = v;
                    }
                }
            }
            cap /= 8.0;
        }
        let brute =
            (q.norm_sq() - 2.0 * params.s_star * best + 2.0 * params.s_star * params.s_star / 3.0)
                .max(0.0)
                .sqrt();
        let closed = dist_to_vacuum(&q, &params);
        worst_d = worst_d.max((closed - brute).abs() / closed.max(1e-9));
    }
    check(
        "vacuum_distance_oracle",
        worst_d <= 1e-3,
        format!("max relative mismatch {worst_d:.2e}"),
    );

    // Trivial-field suite.
    let grid = Grid::new(n).map_err(|e| anyhow::anyhow!("config key 'grid.n': {e}"))?;
    let mut field = QField::constant_vacuum(grid, params, epsilon, [0.0, 0.0, 1.0]);
    let stats = minimize(&mut field, &SolveOptions::default()).context("solver")?;
    let energy = discrete_energy(&field);
    let diag = FieldDiagnostics::new(&field);
    let region = Ball::new([0.0; 3], 0.5);
    let mask = diag.bad_set(&region, 0.5, params.s_star / 10.0);
    let theta = diag.theta([0.1, -0.1, 0.0], 0.25).context("theta")?;
    let stress = diag.stress_energy_residual(&Ball::new([0.0; 3], 0.4));
    let mut rs_ok = true;
    for probe in [[0.0, 0.0, 0.0], [0.3, -0.2, 0.1], [-0.45, 0.4, 0.33]] {
        rs_ok &= diag.regular_scale(probe) == 1.0;
    }
    check(
        "trivial_field_suite",
        stats.converged
            && stats.iterations == 0
            && energy.total.abs() <= 1e-10
            && mask.is_empty()
            && theta.abs() <= 1e-10
            && stress == 0.0
            && rs_ok,
        format!(
            "energy {:.2e}, bad nodes {}, theta {theta:.2e}, stress {stress:.2e}, regular scale cap {rs_ok}",
            energy.total,
            mask.len()
        ),
    );

    drop(check);
    ctx.write_out("verify.txt", &(lines.join("\n") + "\n"))?;
    Ok(if all_ok { 0 } else { 3 })
}
