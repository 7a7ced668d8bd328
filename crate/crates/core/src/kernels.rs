//! Small numeric kernels shared by the filter and network code.
//!
//! The eight independent accumulators let the compiler vectorize reductions
//! without reassociating floating-point adds on its own.

use std::ops::{Add, AddAssign, Mul};

pub trait Lane: Copy + Default + Add<Output = Self> + Mul<Output = Self> + AddAssign {}

impl Lane for f32 {}
impl Lane for f64 {}

#[inline]
pub fn dot<T: Lane>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::default(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::default();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    let s01 = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    let s23 = (acc[4] + acc[5]) + (acc[6] + acc[7]);
    (s01 + s23) + tail
}

#[inline]
pub fn axpy<T: Lane>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

#[inline]
pub fn sum<T: Lane>(a: &[T]) -> T {
    let mut acc = [T::default(); 8];
    let mut c = a.chunks_exact(8);
    for x in &mut c {
        for i in 0..8 {
            acc[i] += x[i];
        }
    }
    let mut tail = T::default();
    for x in c.remainder() {
        tail += *x;
    }
    let s01 = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    let s23 = (acc[4] + acc[5]) + (acc[6] + acc[7]);
    (s01 + s23) + tail
}
