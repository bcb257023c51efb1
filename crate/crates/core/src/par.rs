//! Row-parallel helpers.
//!
//! With the `parallel` feature these fan out over the current rayon pool;
//! without it they run on the calling thread. Work is always split by whole
//! rows and never reduced across rows, so both paths produce bit-identical
//! results.

use ndarray::{Array2, ArrayViewMut1};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(row_index, row)` for every row of a standard-layout matrix.
pub fn for_each_row_mut<F>(m: &mut Array2<f64>, f: F)
where
    F: Fn(usize, ArrayViewMut1<'_, f64>) + Sync + Send,
{
    let cols = m.ncols();
    if cols == 0 {
        return;
    }
    let data = m
        .as_slice_mut()
        .expect("row helpers require standard layout");
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, row)| f(i, ArrayViewMut1::from(row)));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(cols)
        .enumerate()
        .for_each(|(i, row)| f(i, ArrayViewMut1::from(row)));
}

/// Like [`for_each_row_mut`], collecting one value per row in row order.
pub fn map_rows_mut<T, F>(m: &mut Array2<f64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, ArrayViewMut1<'_, f64>) -> T + Sync + Send,
{
    let cols = m.ncols();
    if cols == 0 {
        return Vec::new();
    }
    let data = m
        .as_slice_mut()
        .expect("row helpers require standard layout");
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(cols)
            .enumerate()
            .map(|(i, row)| f(i, ArrayViewMut1::from(row)))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(cols)
            .enumerate()
            .map(|(i, row)| f(i, ArrayViewMut1::from(row)))
            .collect()
    }
}

/// `(0..n).map(f).collect()`, in index order.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Whether this build fans out over rayon.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
