//! Uniform grid over the cube [-1, 1]^3 and ball regions.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("grid needs at least 8 nodes per axis, got {0}")]
    TooCoarse(usize),
}

/// Uniform node lattice on [-1, 1]^3 with `n` nodes per axis and spacing
/// `h = 2/(n-1)`. Node (i, j, k) sits at (-1 + i h, -1 + j h, -1 + k h);
/// coordinates are computed so the far corner lands on (1, 1, 1) exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self, GridError> {
        if n < 8 {
            return Err(GridError::TooCoarse(n));
        }
        Ok(Grid {
            n,
            h: 2.0 / (n as f64 - 1.0),
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.n;
        let j = (idx / self.n) % self.n;
        let i = idx / (self.n * self.n);
        (i, j, k)
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        2.0 * i as f64 / (self.n as f64 - 1.0) - 1.0
    }

    #[inline]
    pub fn pos(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.ijk(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    #[inline]
    pub fn is_face(&self, i: usize, j: usize, k: usize) -> bool {
        let m = self.n - 1;
        i == 0 || j == 0 || k == 0 || i == m || j == m || k == m
    }

    /// Smallest axis index with coordinate >= x (clamped to the grid).
    fn axis_lo(&self, x: f64) -> usize {
        let t = (x + 1.0) / self.h;
        (t.ceil().max(0.0) as usize).min(self.n - 1)
    }

    /// Largest axis index with coordinate <= x (clamped to the grid).
    fn axis_hi(&self, x: f64) -> usize {
        let t = (x + 1.0) / self.h;
        (t.floor().max(0.0) as usize).min(self.n - 1)
    }

    /// Node indices strictly inside the ball, in lattice order.
    pub fn nodes_in_ball(&self, ball: &Ball) -> Vec<usize> {
        let mut out = Vec::new();
        let r = ball.radius;
        let c = ball.center;
        let (i0, i1) = (self.axis_lo(c[0] - r), self.axis_hi(c[0] + r));
        let (j0, j1) = (self.axis_lo(c[1] - r), self.axis_hi(c[1] + r));
        let (k0, k1) = (self.axis_lo(c[2] - r), self.axis_hi(c[2] + r));
        let r2 = r * r;
        for i in i0..=i1 {
            let dx = self.coord(i) - c[0];
            let dx2 = dx * dx;
            if dx2 >= r2 {
                continue;
            }
            for j in j0..=j1 {
                let dy = self.coord(j) - c[1];
                let dxy = dx2 + dy * dy;
                if dxy >= r2 {
                    continue;
                }
                for k in k0..=k1 {
                    let dz = self.coord(k) - c[2];
                    if dxy + dz * dz < r2 {
                        out.push(self.idx(i, j, k));
                    }
                }
            }
        }
        out
    }

    /// Max of a nodal quantity over the ball (clipped to the cube), without
    /// materializing the node list.
    pub fn max_in_ball(&self, values: &[f64], ball: &Ball) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let r = ball.radius;
        let c = ball.center;
        let r2 = r * r;
        let (i0, i1) = (self.axis_lo(c[0] - r), self.axis_hi(c[0] + r));
        let (j0, j1) = (self.axis_lo(c[1] - r), self.axis_hi(c[1] + r));
        let (k0, k1) = (self.axis_lo(c[2] - r), self.axis_hi(c[2] + r));
        for i in i0..=i1 {
            let dx = self.coord(i) - c[0];
            let dx2 = dx * dx;
            if dx2 >= r2 {
                continue;
            }
            for j in j0..=j1 {
                let dy = self.coord(j) - c[1];
                let dxy = dx2 + dy * dy;
                if dxy >= r2 {
                    continue;
                }
                for k in k0..=k1 {
                    let dz = self.coord(k) - c[2];
                    if dxy + dz * dz < r2 {
                        let v = values[self.idx(i, j, k)];
                        if v > best {
                            best = v;
                        }
                    }
                }
            }
        }
        best
    }
}

/// Open ball `{ y : |y - center| < radius }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ball {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Ball {
    pub fn new(center: [f64; 3], radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        Ball { center, radius }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let d2 = (p[0] - self.center[0]).powi(2)
            + (p[1] - self.center[1]).powi(2)
            + (p[2] - self.center[2]).powi(2);
        d2 < self.radius * self.radius
    }

    pub fn dist_to_center(&self, p: [f64; 3]) -> f64 {
        ((p[0] - self.center[0]).powi(2)
            + (p[1] - self.center[1]).powi(2)
            + (p[2] - self.center[2]).powi(2))
        .sqrt()
    }
}
