//! Per-cell and per-face storage.

use std::ops::{Add, Index, IndexMut, Mul};

use crate::geom::Vec2;
use crate::mesh::Mesh;

/// Value types that can be linearly combined (scalars and 2-vectors).
pub trait Linear: Copy + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn is_finite(&self) -> bool;
}

impl Linear for f64 {
    fn zero() -> f64 {
        0.0
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Linear for Vec2 {
    fn zero() -> Vec2 {
        Vec2::ZERO
    }
    fn is_finite(&self) -> bool {
        Vec2::is_finite(*self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellField<T>(pub Vec<T>);

#[derive(Debug, Clone, PartialEq)]
pub struct FaceField<T>(pub Vec<T>);

macro_rules! field_impl {
    ($name:ident, $count:ident) => {
        impl<T: Linear> $name<T> {
            pub fn zeros(mesh: &Mesh) -> Self {
                $name(vec![T::zero(); mesh.$count()])
            }

            pub fn constant(mesh: &Mesh, value: T) -> Self {
                $name(vec![value; mesh.$count()])
            }

            pub fn from_fn(mesh: &Mesh, f: impl FnMut(usize) -> T) -> Self {
                $name((0..mesh.$count()).map(f).collect())
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn iter(&self) -> std::slice::Iter<'_, T> {
                self.0.iter()
            }

            pub fn all_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }

        impl<T> Index<usize> for $name<T> {
            type Output = T;
            fn index(&self, i: usize) -> &T {
                &self.0[i]
            }
        }

        impl<T> IndexMut<usize> for $name<T> {
            fn index_mut(&mut self, i: usize) -> &mut T {
                &mut self.0[i]
            }
        }
    };
}

field_impl!(CellField, n_cells);
field_impl!(FaceField, n_faces);

impl CellField<Vec2> {
    /// Extract one Cartesian component as a scalar field.
    pub fn component(&self, axis: usize) -> CellField<f64> {
        CellField(self.0.iter().map(|v| v.comp(axis)).collect())
    }

    pub fn set_component(&mut self, axis: usize, values: &CellField<f64>) {
        for (v, &s) in self.0.iter_mut().zip(values.iter()) {
            v.set_comp(axis, s);
        }
    }
}

/// Volume-weighted relative L2 distance between two cell vector fields.
pub fn rel_l2_vec(mesh: &Mesh, a: &CellField<Vec2>, b: &CellField<Vec2>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (c, (&va, &vb)) in mesh.cells.iter().zip(a.iter().zip(b.iter())) {
        num += (va - vb).norm_sq() * c.volume;
        den += vb.norm_sq() * c.volume;
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Volume-weighted L2 norm of the difference to a reference scalar field.
pub fn l2_scalar_error(mesh: &Mesh, a: &CellField<f64>, b: &CellField<f64>) -> f64 {
    let mut num = 0.0;
    let mut vol = 0.0;
    for (c, (&va, &vb)) in mesh.cells.iter().zip(a.iter().zip(b.iter())) {
        num += (va - vb) * (va - vb) * c.volume;
        vol += c.volume;
    }
    (num / vol).sqrt()
}

/// Volume-weighted L2 norm of the difference of vector fields.
pub fn l2_vec_error(mesh: &Mesh, a: &CellField<Vec2>, b: &CellField<Vec2>) -> f64 {
    let mut num = 0.0;
    let mut vol = 0.0;
    for (c, (&va, &vb)) in mesh.cells.iter().zip(a.iter().zip(b.iter())) {
        num += (va - vb).norm_sq() * c.volume;
        vol += c.volume;
    }
    (num / vol).sqrt()
}
