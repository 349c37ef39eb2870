//! Dense row-major image planes and boolean masks.

use std::ops::{Index, IndexMut};

use rayon::prelude::*;

/// A `width × height` plane stored row-major. Pixel `(u, v)` is column `u`, row `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type Mask = Image<bool>;

impl<T> Image<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "image buffer length mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self::from_vec(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn contains(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && (u as usize) < self.width && (v as usize) < self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<&T> {
        if u < self.width && v < self.height {
            Some(&self.data[v * self.width + u])
        } else {
            None
        }
    }

    pub fn row(&self, v: usize) -> &[T] {
        &self.data[v * self.width..(v + 1) * self.width]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Image<U> {
        Image::from_vec(self.width, self.height, self.data.iter().map(f).collect())
    }

    pub fn same_dims<U>(&self, other: &Image<U>) -> bool {
        self.dims() == other.dims()
    }
}

impl<T: Clone> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self::from_vec(width, height, vec![value; width * height])
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|p| *p = value.clone());
    }
}

impl<T: Send> Image<T> {
    /// Row-parallel construction. The result does not depend on thread scheduling.
    pub fn from_fn_par(width: usize, height: usize, f: impl Fn(usize, usize) -> T + Sync) -> Self {
        let data: Vec<T> = (0..height)
            .into_par_iter()
            .flat_map_iter(|v| (0..width).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        Self::from_vec(width, height, data)
    }
}

impl<T> Index<(usize, usize)> for Image<T> {
    type Output = T;

    #[inline]
    fn index(&self, (u, v): (usize, usize)) -> &T {
        debug_assert!(u < self.width && v < self.height);
        &self.data[v * self.width + u]
    }
}

impl<T> IndexMut<(usize, usize)> for Image<T> {
    #[inline]
    fn index_mut(&mut self, (u, v): (usize, usize)) -> &mut T {
        debug_assert!(u < self.width && v < self.height);
        &mut self.data[v * self.width + u]
    }
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn union(&self, other: &Mask) -> Mask {
        assert!(self.same_dims(other), "mask size mismatch");
        Image::from_vec(
            self.width,
            self.height,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        )
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        assert!(self.same_dims(other), "mask size mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    /// Sets every pixel within `radius` (Chebyshev distance) of a set pixel.
    pub fn dilate(&self, radius: usize) -> Mask {
        let (w, h) = self.dims();
        let rows = Mask::from_fn(w, h, |u, v| {
            (u.saturating_sub(radius)..=(u + radius).min(w - 1)).any(|x| self[(x, v)])
        });
        Mask::from_fn(w, h, |u, v| {
            (v.saturating_sub(radius)..=(v + radius).min(h - 1)).any(|y| rows[(u, y)])
        })
    }
}
