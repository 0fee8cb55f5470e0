//! Pinching-driven ball covering of the bad set.
//!
//! Within a ball, either every sampled point sheds a fixed amount of weighted
//! energy between the two scales (then the ball itself is kept when it meets
//! the bad set), or some point retains its energy at the small scale; the bad
//! points then concentrate near that point, so the search recenters there and
//! halves the radius. The energy drop per level forces termination. Residual
//! bad nodes that escape the descent chain get sibling chains of their own,
//! so the returned balls always contain the companion pointwise mask.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{BadSetMask, DiagError, FieldDiagnostics};
use crate::grid::Ball;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoverAction {
    /// Pinched point found; recentered there at half the radius.
    Recenter,
    /// Uniform energy drop at this scale; ball emitted.
    Emit,
    /// Radius floor reached; ball emitted.
    EmitFloor,
    /// Ball met no bad nodes; nothing emitted.
    Skip,
    /// Residual chain started at an uncovered bad node.
    Sibling,
}

#[derive(Debug, Clone, Serialize)]
pub struct PinchRecord {
    pub center: [f64; 3],
    pub radius: f64,
    /// Max of theta at the full radius over the sample lattice.
    pub theta_top: f64,
    /// Theta at the inner scale for the chosen recenter point (or the sample
    /// max when no pinch was found).
    pub theta_small: f64,
    /// Energy drop between the two scales at the recorded point.
    pub drop: f64,
    pub samples: usize,
    pub action: CoverAction,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverResult {
    pub balls: Vec<Ball>,
    pub pinch_trace: Vec<PinchRecord>,
    /// Recursion nodes consumed (budget accounting).
    pub nodes_visited: usize,
    /// Parameters of the companion pointwise mask the cover contains.
    pub mask_r: f64,
    pub mask_delta: f64,
}

pub struct CoverParams {
    /// Emitted ball radius floor; at least 4h.
    pub r: f64,
    /// Distance threshold of the bad set.
    pub delta: f64,
    /// Pinching fraction of the top-level density max; also scales the
    /// regular-scale threshold of the companion mask (eta' = eta).
    pub eta: f64,
    /// Radius contraction per recenter step, `R -> 2 beta R`; beta in (0, 1/2).
    pub beta: f64,
    /// Recursion node budget.
    pub budget: usize,
}

impl Default for CoverParams {
    fn default() -> Self {
        CoverParams {
            r: 0.0,
            delta: 0.0,
            eta: 0.05,
            beta: 0.25,
            budget: 4096,
        }
    }
}

/// Sample lattice of spacing `max(h, R/10)` covering `B_{2R}(x)` clipped to
/// the region (and the cube).
fn sample_lattice(diag: &FieldDiagnostics, x: [f64; 3], big_r: f64, region: &Ball) -> Vec<[f64; 3]> {
    let h = diag.field().grid().h();
    let spacing = (big_r / 10.0).max(h);
    let reach = 2.0 * big_r;
    let m = (reach / spacing).ceil() as i64;
    let mut pts = Vec::new();
    for i in -m..=m {
        for j in -m..=m {
            for k in -m..=m {
                let p = [
                    x[0] + i as f64 * spacing,
                    x[1] + j as f64 * spacing,
                    x[2] + k as f64 * spacing,
                ];
                let d2 = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2) + (p[2] - x[2]).powi(2);
                if d2 > reach * reach {
                    continue;
                }
                if !region.contains(p) {
                    continue;
                }
                if p.iter().any(|v| v.abs() > 1.0) {
                    continue;
                }
                pts.push(p);
            }
        }
    }
    pts
}

/// Cover the bad set of a region by balls of radius at least `r`, following
/// the pinching descent. Returns the balls, the per-level trace, and the
/// parameters of the pointwise mask the cover is guaranteed to contain
/// (regular-scale threshold `eta * r`, distance threshold `delta`).
pub fn cover_bad_set(
    diag: &FieldDiagnostics,
    region: &Ball,
    params: &CoverParams,
) -> Result<(CoverResult, BadSetMask), DiagError> {
    let grid = diag.field().grid();
    let h = grid.h();
    if params.r < 4.0 * h {
        return Err(DiagError::InvalidCoverParams(format!(
            "floor radius {} below 4h = {}",
            params.r,
            4.0 * h
        )));
    }
    if !(params.eta > 0.0) {
        return Err(DiagError::InvalidCoverParams("eta must be positive".into()));
    }
    if !(params.beta > 0.0 && params.beta < 0.5) {
        return Err(DiagError::InvalidCoverParams(
            "beta must lie in (0, 1/2)".into(),
        ));
    }
    if region.radius < 2.0 * h {
        return Err(DiagError::Resolution {
            r: region.radius,
            min: 2.0 * h,
        });
    }

    // Companion pointwise oracle: the covered set uses the eta-scaled
    // regular-scale threshold, as the pinching confinement provides.
    let mask_r = (params.eta * params.r).min(1.0);
    let mask = diag.bad_set(region, mask_r, params.delta);

    let budget = AtomicUsize::new(0);
    let mut balls: Vec<Ball> = Vec::new();
    let mut trace: Vec<PinchRecord> = Vec::new();

    if mask.is_empty() {
        // Record the trivial top level for the trace and return the empty cover.
        return Ok((
            CoverResult {
                balls,
                pinch_trace: vec![PinchRecord {
                    center: region.center,
                    radius: region.radius,
                    theta_top: 0.0,
                    theta_small: 0.0,
                    drop: 0.0,
                    samples: 0,
                    action: CoverAction::Skip,
                }],
                nodes_visited: 0,
                mask_r,
                mask_delta: params.delta,
            },
            mask,
        ));
    }

    descend_chain(
        diag,
        region,
        region.center,
        region.radius,
        params,
        &mask,
        &budget,
        &mut balls,
        &mut trace,
    )?;

    // Residual pass: any bad node the chain left uncovered starts a sibling
    // chain; a direct floor ball is the fallback if the chain wanders away.
    loop {
        let uncovered = mask
            .bad_nodes
            .iter()
            .copied()
            .find(|&idx| !balls.iter().any(|b| b.contains(grid.pos(idx))));
        let Some(idx) = uncovered else { break };
        let z = grid.pos(idx);
        trace.push(PinchRecord {
            center: z,
            radius: region.radius,
            theta_top: 0.0,
            theta_small: 0.0,
            drop: 0.0,
            samples: 0,
            action: CoverAction::Sibling,
        });
        descend_chain(
            diag,
            region,
            z,
            region.radius,
            params,
            &mask,
            &budget,
            &mut balls,
            &mut trace,
        )?;
        if !balls.iter().any(|b| b.contains(z)) {
            balls.push(Ball::new(z, params.r));
        }
    }

    Ok((
        CoverResult {
            balls,
            pinch_trace: trace,
            nodes_visited: budget.load(Ordering::Relaxed),
            mask_r,
            mask_delta: params.delta,
        },
        mask,
    ))
}

#[allow(clippy::too_many_arguments)]
fn descend_chain(
    diag: &FieldDiagnostics,
    region: &Ball,
    start: [f64; 3],
    start_radius: f64,
    params: &CoverParams,
    mask: &BadSetMask,
    budget: &AtomicUsize,
    balls: &mut Vec<Ball>,
    trace: &mut Vec<PinchRecord>,
) -> Result<(), DiagError> {
    let grid = diag.field().grid();
    let h = grid.h();
    let mut center = start;
    let mut radius = start_radius;
    let mut eta_abs: Option<f64> = None;

    loop {
        let used = budget.fetch_add(1, Ordering::Relaxed) + 1;
        if used > params.budget {
            return Err(DiagError::BudgetExceeded(params.budget));
        }

        let ball = Ball::new(center, radius);
        let any_bad = mask
            .bad_nodes
            .iter()
            .any(|&idx| ball.contains(grid.pos(idx)));
        if !any_bad {
            trace.push(PinchRecord {
                center,
                radius,
                theta_top: 0.0,
                theta_small: 0.0,
                drop: 0.0,
                samples: 0,
                action: CoverAction::Skip,
            });
            return Ok(());
        }
        if radius <= params.r * (1.0 + 1e-12) {
            trace.push(PinchRecord {
                center,
                radius,
                theta_top: 0.0,
                theta_small: 0.0,
                drop: 0.0,
                samples: 0,
                action: CoverAction::EmitFloor,
            });
            balls.push(ball);
            return Ok(());
        }

        let samples = sample_lattice(diag, center, radius, region);
        // The density needs at least 2h of support on both scales.
        let r_small = (radius / 20.0).max(2.0 * h);
        let theta_big: Vec<f64> = samples
            .par_iter()
            .with_min_len(8)
            .map(|&p| diag.theta(p, radius).unwrap_or(0.0))
            .collect();
        let e_top = theta_big.iter().cloned().fold(0.0f64, f64::max);
        let eta = *eta_abs.get_or_insert(params.eta * e_top);

        let theta_small: Vec<f64> = samples
            .par_iter()
            .with_min_len(8)
            .map(|&p| diag.theta(p, r_small).unwrap_or(0.0))
            .collect();
        // First index wins ties so the recursion is deterministic.
        let mut best: Option<(usize, f64)> = None;
        for (i, &ts) in theta_small.iter().enumerate() {
            if ts > e_top - eta {
                if best.map(|(_, b)| ts > b).unwrap_or(true) {
                    best = Some((i, ts));
                }
            }
        }
        match best {
            None => {
                trace.push(PinchRecord {
                    center,
                    radius,
                    theta_top: e_top,
                    theta_small: theta_small.iter().cloned().fold(0.0f64, f64::max),
                    drop: eta,
                    samples: samples.len(),
                    action: CoverAction::Emit,
                });
                balls.push(ball);
                return Ok(());
            }
            Some((i, ts)) => {
                trace.push(PinchRecord {
                    center: samples[i],
                    radius,
                    theta_top: e_top,
                    theta_small: ts,
                    drop: e_top - ts,
                    samples: samples.len(),
                    action: CoverAction::Recenter,
                });
                center = samples[i];
                radius = (2.0 * params.beta * radius).max(params.r);
            }
        }
    }
}

/// Discrete volume of the `margin`-neighborhood of (union of balls) clipped
/// to `clip`: counts grid nodes within `margin` of a node inside the clipped
/// union.
pub fn neighborhood_volume(
    diag: &FieldDiagnostics,
    balls: &[Ball],
    clip: &Ball,
    margin: f64,
) -> f64 {
    let grid = diag.field().grid();
    let h = grid.h();
    let n = grid.n() as i64;
    // Nodes in the clipped union.
    let mut seed = vec![false; grid.node_count()];
    let mut seeds = Vec::new();
    for b in balls {
        for idx in grid.nodes_in_ball(b) {
            if !seed[idx] && clip.contains(grid.pos(idx)) {
                seed[idx] = true;
                seeds.push(idx);
            }
        }
    }
    if seeds.is_empty() {
        return 0.0;
    }
    // Dilate by the margin in index space.
    let reach = (margin / h).ceil() as i64;
    let reach2 = (margin / h) * (margin / h);
    let mut hit = vec![false; grid.node_count()];
    for &idx in &seeds {
        let (i, j, k) = grid.ijk(idx);
        let (i, j, k) = (i as i64, j as i64, k as i64);
        for di in -reach..=reach {
            let ii = i + di;
            if ii < 0 || ii >= n {
                continue;
            }
            for dj in -reach..=reach {
                let jj = j + dj;
                if jj < 0 || jj >= n {
                    continue;
                }
                for dk in -reach..=reach {
                    let kk = k + dk;
                    if kk < 0 || kk >= n {
                        continue;
                    }
                    if ((di * di + dj * dj + dk * dk) as f64) < reach2 {
                        hit[grid.idx(ii as usize, jj as usize, kk as usize)] = true;
                    }
                }
            }
        }
    }
    let count = hit.iter().filter(|&&x| x).count();
    count as f64 * h * h * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::QField;
    use crate::grid::Grid;
    use crate::qtensor::MaterialParams;

    fn params111() -> MaterialParams {
        MaterialParams::new(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn vacuum_field_yields_empty_cover() {
        let g = Grid::new(20).unwrap();
        let f = QField::constant_vacuum(g, params111(), 0.4, [0.0, 0.0, 1.0]);
        let d = FieldDiagnostics::new(&f);
        let p = CoverParams {
            r: 5.0 * g.h(),
            delta: 0.15,
            ..CoverParams::default()
        };
        let (cover, mask) = cover_bad_set(&d, &Ball::new([0.0; 3], 0.5), &p).unwrap();
        assert!(cover.balls.is_empty());
        assert!(mask.is_empty());
    }

    #[test]
    fn cover_contains_companion_mask_on_rough_field() {
        // Unminimized reference field with a tight core: the defect region is
        // bad, and the cover must contain the mask exactly.
        let g = Grid::new(24).unwrap();
        let p = params111();
        let mut f = QField::with_hedgehog_boundary(g, p, 0.25);
        f.fill_hedgehog_reference(2.0 * g.h());
        let d = FieldDiagnostics::new(&f);
        let region = Ball::new([0.0; 3], 0.5);
        let cp = CoverParams {
            r: 4.0 * g.h(),
            delta: p.s_star / 10.0,
            ..CoverParams::default()
        };
        let (cover, mask) = cover_bad_set(&d, &region, &cp).unwrap();
        assert!(!mask.is_empty());
        assert!(!cover.balls.is_empty());
        for &idx in &mask.bad_nodes {
            let pos = g.pos(idx);
            assert!(
                cover.balls.iter().any(|b| b.contains(pos)),
                "bad node at {pos:?} uncovered"
            );
        }
    }

    #[test]
    fn tiny_budget_errors_out() {
        let g = Grid::new(24).unwrap();
        let p = params111();
        let mut f = QField::with_hedgehog_boundary(g, p, 0.25);
        f.fill_hedgehog_reference(2.0 * g.h());
        let d = FieldDiagnostics::new(&f);
        let cp = CoverParams {
            r: 4.0 * g.h(),
            delta: p.s_star / 10.0,
            budget: 1,
            ..CoverParams::default()
        };
        match cover_bad_set(&d, &Ball::new([0.0; 3], 0.5), &cp) {
            Err(DiagError::BudgetExceeded(1)) => {}
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let g = Grid::new(20).unwrap();
        let f = QField::constant_vacuum(g, params111(), 0.4, [0.0, 0.0, 1.0]);
        let d = FieldDiagnostics::new(&f);
        let region = Ball::new([0.0; 3], 0.5);
        let bad_r = CoverParams {
            r: g.h(),
            delta: 0.1,
            ..CoverParams::default()
        };
        assert!(matches!(
            cover_bad_set(&d, &region, &bad_r),
            Err(DiagError::InvalidCoverParams(_))
        ));
        let bad_beta = CoverParams {
            r: 5.0 * g.h(),
            delta: 0.1,
            beta: 0.7,
            ..CoverParams::default()
        };
        assert!(matches!(
            cover_bad_set(&d, &region, &bad_beta),
            Err(DiagError::InvalidCoverParams(_))
        ));
    }
}
