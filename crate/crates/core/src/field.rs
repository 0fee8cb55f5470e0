//! Q-tensor fields on the cube grid: boundary data, reference maps,
//! nodal gradient stencil, and ball-restricted quadrature.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Ball, Grid};
use crate::qtensor::{MaterialParams, QTensor, BASIS_DIM};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("no grid node lies inside the ball (radius below grid resolution)")]
    EmptyIntersection,
    #[error("fields live on different grids")]
    GridMismatch,
}

/// A Q-tensor per node plus a Dirichlet mask. Masked nodes carry boundary
/// data and are never written by solver operations. The field owns the
/// parameters and the coupling constant it is solved at, so diagnostics
/// cannot be run with mismatched physics.
#[derive(Debug, Clone)]
pub struct QField {
    grid: Grid,
    epsilon: f64,
    params: MaterialParams,
    data: Vec<f64>,
    mask: Vec<bool>,
}

impl QField {
    /// Zero field with no Dirichlet nodes.
    pub fn zeros(grid: Grid, params: MaterialParams, epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "epsilon must be positive");
        QField {
            grid,
            epsilon,
            params,
            data: vec![0.0; grid.node_count() * BASIS_DIM],
            mask: vec![false; grid.node_count()],
        }
    }

    pub(crate) fn from_raw(
        grid: Grid,
        params: MaterialParams,
        epsilon: f64,
        data: Vec<f64>,
        mask: Vec<bool>,
    ) -> Self {
        assert_eq!(data.len(), grid.node_count() * BASIS_DIM);
        assert_eq!(mask.len(), grid.node_count());
        QField {
            grid,
            epsilon,
            params,
            data,
            mask,
        }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        assert!(epsilon > 0.0);
        self.epsilon = epsilon;
    }

    #[inline]
    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn q(&self, idx: usize) -> QTensor {
        let o = idx * BASIS_DIM;
        QTensor([
            self.data[o],
            self.data[o + 1],
            self.data[o + 2],
            self.data[o + 3],
            self.data[o + 4],
        ])
    }

    /// Write a node value. Panics on masked nodes: boundary data is frozen.
    pub fn set_q(&mut self, idx: usize, q: QTensor) {
        assert!(!self.mask[idx], "attempt to write a Dirichlet node");
        self.data[idx * BASIS_DIM..(idx + 1) * BASIS_DIM].copy_from_slice(&q.0);
    }

    pub(crate) fn data_mut_unchecked(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Hedgehog Dirichlet data on the cube faces: each face node x gets
    /// `s* (x̂⊗x̂ - I/3)` with `x̂ = x/|x|`; the mask is true exactly on the
    /// faces and the interior starts at zero.
    pub fn with_hedgehog_boundary(grid: Grid, params: MaterialParams, epsilon: f64) -> Self {
        let mut f = QField::zeros(grid, params, epsilon);
        let n = grid.n();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if grid.is_face(i, j, k) {
                        let idx = grid.idx(i, j, k);
                        let p = grid.pos(idx);
                        let q = hedgehog_value(&params, p, 0.0);
                        f.data[idx * BASIS_DIM..(idx + 1) * BASIS_DIM].copy_from_slice(&q.0);
                        f.mask[idx] = true;
                    }
                }
            }
        }
        f
    }

    /// Constant vacuum field `s* (n⊗n - I/3)` with the faces frozen; the
    /// debug boundary mode with zero energy.
    pub fn constant_vacuum(
        grid: Grid,
        params: MaterialParams,
        epsilon: f64,
        director: [f64; 3],
    ) -> Self {
        let norm = (director[0].powi(2) + director[1].powi(2) + director[2].powi(2)).sqrt();
        let n = [director[0] / norm, director[1] / norm, director[2] / norm];
        let q = QTensor::uniaxial(params.s_star, n);
        let mut f = QField::zeros(grid, params, epsilon);
        for idx in 0..grid.node_count() {
            f.data[idx * BASIS_DIM..(idx + 1) * BASIS_DIM].copy_from_slice(&q.0);
            let (i, j, k) = grid.ijk(idx);
            f.mask[idx] = grid.is_face(i, j, k);
        }
        f
    }

    /// Overwrite all free nodes with the radial reference map
    /// `s(|x|) (x̂⊗x̂ - I/3)`, `s(rho) = s* min(1, rho/core_radius)`. With
    /// `core_radius = 0` the order is `s*` everywhere and the origin node
    /// (present when n is odd) takes the value zero.
    pub fn fill_hedgehog_reference(&mut self, core_radius: f64) {
        assert!(core_radius >= 0.0);
        for idx in 0..self.grid.node_count() {
            if self.mask[idx] {
                continue;
            }
            let p = self.grid.pos(idx);
            let q = hedgehog_value(&self.params, p, core_radius);
            self.data[idx * BASIS_DIM..(idx + 1) * BASIS_DIM].copy_from_slice(&q.0);
        }
    }

    /// Full radial hedgehog field (faces frozen); `core_radius = 0` gives the
    /// exact reference map used for L^p distances.
    pub fn hedgehog_reference(
        grid: Grid,
        params: MaterialParams,
        epsilon: f64,
        core_radius: f64,
    ) -> Self {
        let mut f = QField::with_hedgehog_boundary(grid, params, epsilon);
        f.fill_hedgehog_reference(core_radius);
        f
    }

    /// Squared nodal gradient from the forward-difference link stencil,
    /// one-sided inward on the far faces: `sum_k |Q(x+h e_k) - Q(x)|^2 / h^2`.
    /// Exact for linear fields.
    pub fn gradient_sq(&self, idx: usize) -> f64 {
        let n = self.grid.n();
        let (i, j, k) = self.grid.ijk(idx);
        let h2 = self.grid.h() * self.grid.h();
        let mut s = 0.0;
        let strides = [n * n, n, 1usize];
        let coords = [i, j, k];
        let o = idx * BASIS_DIM;
        for ax in 0..3 {
            let other = if coords[ax] + 1 < n {
                (idx + strides[ax]) * BASIS_DIM
            } else {
                (idx - strides[ax]) * BASIS_DIM
            };
            for c in 0..BASIS_DIM {
                let d = self.data[other + c] - self.data[o + c];
                s += d * d;
            }
        }
        s / h2
    }

    /// Per-node squared gradients for the whole field.
    pub fn gradient_sq_all(&self) -> Vec<f64> {
        (0..self.grid.node_count())
            .into_par_iter()
            .map(|idx| self.gradient_sq(idx))
            .collect()
    }
}

/// Radial hedgehog value at a point, with a linear core ramp of the given
/// radius (no ramp when zero; the origin maps to zero either way).
pub fn hedgehog_value(params: &MaterialParams, p: [f64; 3], core_radius: f64) -> QTensor {
    let rho = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    if rho == 0.0 {
        return QTensor::ZERO;
    }
    let nhat = [p[0] / rho, p[1] / rho, p[2] / rho];
    let s = if core_radius > 0.0 && rho < core_radius {
        params.s_star * rho / core_radius
    } else {
        params.s_star
    };
    QTensor::uniaxial(s, nhat)
}

/// Voxel-center quadrature of a nodal density over a ball clipped to the
/// cube: `h^3` times the sum over nodes strictly inside.
pub fn integrate_ball(grid: &Grid, density: &[f64], ball: &Ball) -> Result<f64, FieldError> {
    assert_eq!(density.len(), grid.node_count());
    let nodes = grid.nodes_in_ball(ball);
    if nodes.is_empty() {
        return Err(FieldError::EmptyIntersection);
    }
    let h3 = grid.h().powi(3);
    // Index-ordered summation keeps results independent of threading.
    let total: f64 = nodes.iter().map(|&idx| density[idx]).sum();
    Ok(h3 * total)
}
