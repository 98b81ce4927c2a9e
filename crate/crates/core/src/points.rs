//! Point sets and the box domain `[-1, 1]^d`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GasError, Result};

pub const BOUNDARY_TOL: f64 = 1e-12;

/// Points in `R^d` stored row-major in one flat buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "point dimension must be positive");
        Self { dim, coords: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        assert!(dim > 0, "point dimension must be positive");
        Self {
            dim,
            coords: Vec::with_capacity(dim * n),
        }
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(GasError::InvalidArgument(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(dim: usize, points: &[P]) -> Result<Self> {
        let mut s = Self::with_capacity(dim, points.len());
        for p in points {
            s.push(p.as_ref())?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(GasError::DimensionMismatch {
                layer: 0,
                expected: self.dim,
                got: p.len(),
            });
        }
        self.coords.extend_from_slice(p);
        Ok(())
    }

    pub fn extend(&mut self, other: &PointSet) {
        assert_eq!(self.dim, other.dim);
        self.coords.extend_from_slice(&other.coords);
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut s = PointSet::with_capacity(self.dim, indices.len());
        for &i in indices {
            s.coords.extend_from_slice(self.get(i));
        }
        s
    }

    /// Consecutive sub-range `[start, end)` as a new set.
    pub fn slice(&self, start: usize, end: usize) -> PointSet {
        PointSet {
            dim: self.dim,
            coords: self.coords[start * self.dim..end * self.dim].to_vec(),
        }
    }
}

/// The hypercube `[-1, 1]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub dim: usize,
}

impl BoxDomain {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|v| (-1.0..=1.0).contains(v))
    }

    /// Every coordinate inside the box and at least one within
    /// [`BOUNDARY_TOL`] of a face.
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.contains_tol(x) && x.iter().any(|v| (v.abs() - 1.0).abs() <= BOUNDARY_TOL)
    }

    fn contains_tol(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.abs() <= 1.0 + BOUNDARY_TOL)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for v in x {
            *v = v.clamp(-1.0, 1.0);
        }
    }

    pub fn sample_interior<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointSet {
        let mut s = PointSet::with_capacity(self.dim, n);
        for _ in 0..n * self.dim {
            s.coords.push(rng.random_range(-1.0..=1.0));
        }
        s
    }

    /// Uniform on the boundary: a face is picked uniformly (all faces have
    /// equal area), its fixed coordinate is set exactly to `±1`.
    pub fn sample_boundary<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointSet {
        let mut s = PointSet::with_capacity(self.dim, n);
        let mut p = vec![0.0; self.dim];
        for _ in 0..n {
            let face = rng.random_range(0..2 * self.dim);
            for v in p.iter_mut() {
                *v = rng.random_range(-1.0..=1.0);
            }
            p[face / 2] = if face % 2 == 0 { -1.0 } else { 1.0 };
            s.coords.extend_from_slice(&p);
        }
        s
    }

    /// Tensor lattice with `n` nodes per axis on `[-half_width, half_width]^d`,
    /// last coordinate fastest.
    pub fn lattice(dim: usize, n: usize, half_width: f64) -> PointSet {
        let total = n.pow(dim as u32);
        let node = |i: usize| {
            if n == 1 {
                0.0
            } else {
                -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64
            }
        };
        let mut s = PointSet::with_capacity(dim, total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            for &i in &idx {
                s.coords.push(node(i));
            }
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn boundary_samples_lie_on_faces() {
        let dom = BoxDomain::new(3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let b = dom.sample_boundary(500, &mut rng);
        assert_eq!(b.len(), 500);
        for p in b.iter() {
            assert!(dom.on_boundary(p));
            assert!(p.iter().any(|v| v.abs() == 1.0));
        }
    }

    #[test]
    fn interior_point_not_on_boundary() {
        let dom = BoxDomain::new(2);
        assert!(!dom.on_boundary(&[0.3, -0.99]));
        assert!(dom.on_boundary(&[0.3, -1.0]));
        assert!(!dom.on_boundary(&[1.5, 1.0]));
    }

    #[test]
    fn lattice_row_major() {
        let l = BoxDomain::lattice(2, 3, 1.0);
        assert_eq!(l.len(), 9);
        assert_eq!(l.get(0), &[-1.0, -1.0]);
        assert_eq!(l.get(1), &[-1.0, 0.0]);
        assert_eq!(l.get(3), &[0.0, -1.0]);
        assert_eq!(l.get(8), &[1.0, 1.0]);
        assert_eq!(BoxDomain::lattice(10, 3, 0.1).len(), 59_049);
    }
}
