use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Least-squares polynomial fit `y ≈ Σ_d coeffs[d] x^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub coeffs: Vec<f64>,
    /// Coefficient of determination; `None` when y has no variance.
    pub r_squared: Option<f64>,
}

/// `None` when there are fewer distinct x values than coefficients.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Option<PolyFit> {
    assert_eq!(x.len(), y.len(), "x and y lengths differ");
    let mut distinct: Vec<f64> = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return None;
    }

    let design = DMatrix::from_fn(x.len(), degree + 1, |i, j| x[i].powi(j as i32));
    let target = DVector::from_column_slice(y);
    let coeffs = design
        .clone()
        .svd(true, true)
        .solve(&target, 1e-12)
        .ok()?;

    let fitted = &design * &coeffs;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let r_squared = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    Some(PolyFit {
        coeffs: coeffs.iter().copied().collect(),
        r_squared,
    })
}
