use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Equal-weight mean of behavior-specific embeddings.
pub fn fuse(views: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
    let first = views
        .first()
        .ok_or_else(|| Error::objective("fuse", "no behaviors to fuse"))?;
    let mut sum = first.to_owned();
    for v in &views[1..] {
        if v.dim() != sum.dim() {
            return Err(Error::Shape {
                context: "fuse",
                expected: sum.dim(),
                actual: v.dim(),
            });
        }
        sum += v;
    }
    let n = views.len() as f64;
    sum.mapv_inplace(|x| x / n);
    Ok(sum)
}

/// Cotangent reaching each behavior stream from a cotangent on the fused
/// output.
pub fn fuse_adjoint(d_fused: ArrayView2<f64>, num_behaviors: usize) -> Array2<f64> {
    let n = num_behaviors as f64;
    d_fused.mapv(|x| x / n)
}
