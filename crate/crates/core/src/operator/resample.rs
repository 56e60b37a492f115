use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Keeps every `factor`-th point along each of the trailing `grid_axes` axes.
/// Leading axes (samples, time, channels) are left untouched.
pub fn downsample_axes(u: &Tensor, factor: usize, grid_axes: std::ops::Range<usize>) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::Config("downsample factor must be at least 1".into()));
    }
    let shape = u.shape();
    if grid_axes.end > shape.len() || grid_axes.is_empty() {
        return Err(Error::Shape(format!("grid axes {grid_axes:?} out of range for shape {shape:?}")));
    }
    for ax in grid_axes.clone() {
        if shape[ax] % factor != 0 {
            return Err(Error::Shape(format!(
                "axis {ax} has extent {} which is not divisible by {factor}",
                shape[ax]
            )));
        }
    }
    if factor == 1 {
        return Ok(u.clone());
    }
    let new_shape: Vec<usize> = shape
        .iter()
        .enumerate()
        .map(|(ax, &n)| if grid_axes.contains(&ax) { n / factor } else { n })
        .collect();
    let mut strides = vec![1usize; shape.len()];
    for ax in (0..shape.len().saturating_sub(1)).rev() {
        strides[ax] = strides[ax + 1] * shape[ax + 1];
    }
    let total: usize = new_shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..total {
        let src: usize = idx
            .iter()
            .enumerate()
            .map(|(ax, &i)| strides[ax] * if grid_axes.contains(&ax) { i * factor } else { i })
            .sum();
        out.push(u.data()[src]);
        for ax in (0..idx.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < new_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    Tensor::from_vec(&new_shape, out)
}

/// Strided subsampling of a pure grid tensor (every axis is spatial).
pub fn downsample(u: &Tensor, factor: usize) -> Result<Tensor> {
    downsample_axes(u, factor, 0..u.ndim())
}
