//! Square lattices over the shape-space box `[-theta_m, theta_m]^2`.

use std::ops::{Add, Mul};

use nalgebra::{Matrix3x2, Vector2};
use serde::{Deserialize, Serialize};

use crate::chain::{FrameTag, ShapePoint};
use crate::error::{OalError, Result};
use crate::rft::ContactCondition;

/// `(n+1) x (n+1)` lattice with spacing `h = 2 theta_m / n`.
///
/// Vertex `(i, j)` sits at `w1 = -theta_m + i h`, `w2 = -theta_m + j h` and is
/// stored at flat index `i (n+1) + j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub n: usize,
    pub theta_m: f64,
}

impl Lattice {
    pub fn new(n: usize, theta_m: f64) -> Result<Self> {
        if n < 1 {
            return Err(OalError::InvalidConfig("lattice resolution must be >= 1".into()));
        }
        if !(theta_m.is_finite() && theta_m > 0.0) {
            return Err(OalError::InvalidConfig(format!(
                "lattice half-width must be positive, got {theta_m}"
            )));
        }
        Ok(Self { n, theta_m })
    }

    pub fn side(&self) -> usize {
        self.n + 1
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        2.0 * self.theta_m / self.n as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        // exact at both ends
        if i == self.n {
            self.theta_m
        } else {
            -self.theta_m + i as f64 * self.h()
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.side() + j
    }

    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx / self.side(), idx % self.side())
    }

    pub fn point(&self, i: usize, j: usize) -> ShapePoint {
        ShapePoint::new(self.coord(i), self.coord(j))
    }

    pub fn point_at(&self, idx: usize) -> ShapePoint {
        let (i, j) = self.ij(idx);
        self.point(i, j)
    }

    pub fn contains(&self, w: ShapePoint) -> bool {
        let tol = 1e-12 * self.theta_m.max(1.0);
        w.w1.abs() <= self.theta_m + tol && w.w2.abs() <= self.theta_m + tol
    }

    /// Fractional lattice coordinates of a shape point.
    pub fn locate(&self, w: ShapePoint) -> Option<(f64, f64)> {
        if !self.contains(w) {
            return None;
        }
        let h = self.h();
        let fi = ((w.w1 + self.theta_m) / h).clamp(0.0, self.n as f64);
        let fj = ((w.w2 + self.theta_m) / h).clamp(0.0, self.n as f64);
        Some((fi, fj))
    }

    /// Flat index of the vertex mirrored through the origin.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let (i, j) = self.ij(idx);
        self.index(self.n - i, self.n - j)
    }

    /// Index of the center vertex (rounded down for odd `n`).
    pub fn center_index(&self) -> usize {
        self.index(self.n / 2, self.n / 2)
    }
}

/// Values sampled at every lattice vertex, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid<T> {
    pub lattice: Lattice,
    pub values: Vec<T>,
    pub valid: Vec<bool>,
}

pub type ScalarGrid = FieldGrid<f64>;
pub type VectorGrid = FieldGrid<Vector2<f64>>;

impl<T: Copy> FieldGrid<T> {
    pub fn from_fn(lattice: Lattice, mut f: impl FnMut(ShapePoint) -> T) -> Self {
        let values: Vec<T> = (0..lattice.len()).map(|k| f(lattice.point_at(k))).collect();
        let valid = vec![true; values.len()];
        Self { lattice, values, valid }
    }

    pub fn from_values(lattice: Lattice, values: Vec<T>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != lattice.len() || valid.len() != lattice.len() {
            return Err(OalError::GridMismatch(format!(
                "expected {} values, got {} values and {} mask entries",
                lattice.len(),
                values.len(),
                valid.len()
            )));
        }
        Ok(Self { lattice, values, valid })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[self.lattice.index(i, j)]
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[self.lattice.index(i, j)]
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> FieldGrid<U> {
        FieldGrid {
            lattice: self.lattice,
            values: self.values.iter().map(|v| f(*v)).collect(),
            valid: self.valid.clone(),
        }
    }

    pub fn same_lattice<U>(&self, other: &FieldGrid<U>) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(OalError::GridMismatch(format!(
                "lattices differ: {:?} vs {:?}",
                self.lattice, other.lattice
            )));
        }
        Ok(())
    }
}

impl<T> FieldGrid<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    /// Bilinear interpolation; `None` outside the domain or next to an invalid vertex.
    pub fn interpolate(&self, w: ShapePoint) -> Option<T> {
        let (fi, fj) = self.lattice.locate(w)?;
        let n = self.lattice.n;
        let i0 = (fi.floor() as usize).min(n - 1);
        let j0 = (fj.floor() as usize).min(n - 1);
        let (ti, tj) = (fi - i0 as f64, fj - j0 as f64);
        let corners = [(i0, j0), (i0 + 1, j0), (i0, j0 + 1), (i0 + 1, j0 + 1)];
        let weights = [(1.0 - ti) * (1.0 - tj), ti * (1.0 - tj), (1.0 - ti) * tj, ti * tj];
        let mut acc: Option<T> = None;
        for ((i, j), wt) in corners.into_iter().zip(weights) {
            if wt == 0.0 {
                continue;
            }
            if !self.is_valid(i, j) {
                return None;
            }
            let term = self.get(i, j) * wt;
            acc = Some(match acc {
                None => term,
                Some(a) => a + term,
            });
        }
        // every weight vanished only if all were skipped, impossible for a point inside
        acc.or_else(|| Some(self.get(i0, j0)))
    }
}

impl ScalarGrid {
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .fold(0.0_f64, |m, (v, _)| m.max(v.abs()))
    }
}

/// Local connection sampled over a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionGrid {
    pub grid: FieldGrid<Matrix3x2<f64>>,
    pub condition: ContactCondition,
    pub frame: FrameTag,
    /// Failure message per invalid vertex, in index order.
    pub failures: Vec<(usize, String)>,
}

impl ConnectionGrid {
    pub fn lattice(&self) -> Lattice {
        self.grid.lattice
    }

    /// Row `k` (0 forward, 1 lateral, 2 rotational) as a 2-vector field.
    pub fn row(&self, k: usize) -> VectorGrid {
        self.grid.map(|m| Vector2::new(m[(k, 0)], m[(k, 1)]))
    }
}
