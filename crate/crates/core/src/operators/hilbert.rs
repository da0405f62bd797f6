use crate::error::{Error, Result};
use crate::haar::StepFunction;
use crate::scalar::Scalar;

/// `Hf(x) = (1/π) Σ_k f_k log(|x − a_k| / |x − b_k|)`, exact for step functions.
///
/// Summed by edges: `(1/π) Σ_m (f_m − f_{m−1}) log|x − e_m|` with `f_{−1} = f_N = 0`.
pub fn hilbert_exact<T: Scalar>(f: &StepFunction<T>, xs: &[f64]) -> Result<Vec<T>> {
    let mesh = f.mesh();
    let n = mesh.cells();
    let vals: Vec<f64> = f.values().iter().map(|v| v.to_f64_lossy()).collect();
    let edges: Vec<(f64, f64)> = (0..=n)
        .filter_map(|m| {
            let before = if m == 0 { 0.0 } else { vals[m - 1] };
            let after = if m == n { 0.0 } else { vals[m] };
            let jump = after - before;
            (jump != 0.0).then(|| (if m == n { mesh.right() } else { mesh.cell_left(m) }, jump))
        })
        .collect();
    xs.iter()
        .map(|&x| {
            for m in 0..=n {
                let e = if m == n { mesh.right() } else { mesh.cell_left(m) };
                if x == e {
                    return Err(Error::SingularPoint(x));
                }
            }
            let s: f64 = edges.iter().map(|&(e, j)| j * (x - e).abs().ln()).sum();
            Ok(T::lit(s / std::f64::consts::PI))
        })
        .collect()
}

/// `Hf` at every cell midpoint, as a step function on the same mesh.
pub fn hilbert_at_midpoints<T: Scalar>(f: &StepFunction<T>) -> Result<StepFunction<T>> {
    let mesh = *f.mesh();
    let xs: Vec<f64> = (0..mesh.cells()).map(|k| mesh.cell_mid(k)).collect();
    StepFunction::new(mesh, hilbert_exact(f, &xs)?)
}
