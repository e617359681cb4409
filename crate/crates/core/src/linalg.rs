use nalgebra::DMatrix;

/// Flow map `Φ = exp(A·dt)` and accumulated noise covariance
/// `∫₀^dt e^{Aτ} G e^{Aᵀτ} dτ` of `dX = A X dt + dW` with `⟨dW dWᵀ⟩ = G dt`,
/// via Van Loan's block exponential on a short step, then doubled back up
/// with `Φ(2h) = Φ(h)²`, `Q(2h) = Φ(h) Q(h) Φ(h)ᵀ + Q(h)`.
pub(crate) fn van_loan(drift: &DMatrix<f64>, noise: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let scale = drift.norm() * dt.abs();
    let doublings = if scale > 1.0 { scale.log2().ceil() as i32 } else { 0 };
    let (mut flow, mut cov) = van_loan_block(drift, noise, dt / 2f64.powi(doublings));
    for _ in 0..doublings {
        cov = &flow * &cov * flow.transpose() + &cov;
        symmetrize(&mut cov);
        flow = &flow * &flow;
    }
    (flow, cov)
}

fn van_loan_block(drift: &DMatrix<f64>, noise: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = drift.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-drift * dt));
    block.view_mut((0, n), (n, n)).copy_from(&(noise * dt));
    block.view_mut((n, n), (n, n)).copy_from(&(drift.transpose() * dt));
    let expm = block.exp();
    let flow = expm.view((n, n), (n, n)).transpose();
    let upper = expm.view((0, n), (n, n)).into_owned();
    let mut cov = &flow * upper;
    symmetrize(&mut cov);
    (flow, cov)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// A factor `L` with `L Lᵀ = cov` for a positive semi-definite matrix.
/// Cholesky when it succeeds, clamped eigen-decomposition otherwise.
pub(crate) fn psd_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if cov.iter().all(|&v| v == 0.0) {
        return DMatrix::zeros(cov.nrows(), cov.ncols());
    }
    if let Some(chol) = cov.clone().cholesky() {
        return chol.l();
    }
    let eig = cov.clone().symmetric_eigen();
    let mut l = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn van_loan_reproduces_free_kernel_covariance() {
        let drift = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let noise = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]);
        let (flow, cov) = van_loan(&drift, &noise, 1.5);
        assert!((flow[(0, 1)] - 1.5).abs() < 1e-14);
        assert!((cov[(0, 0)] - 2.0 / 3.0 * 1.5f64.powi(3)).abs() < 1e-13);
        assert!((cov[(0, 1)] - 1.5f64.powi(2)).abs() < 1e-13);
        assert!((cov[(1, 1)] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn van_loan_stays_accurate_for_stiff_friction() {
        let beta = 100.0;
        let drift = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -beta]);
        let noise = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]);
        let (flow, cov) = van_loan(&drift, &noise, 1.0);
        assert!((flow[(0, 1)] - (1.0 - (-beta).exp()) / beta).abs() < 1e-14);
        assert!((cov[(1, 1)] - (1.0 - (-2.0 * beta).exp()) / beta).abs() < 1e-14);
        let var_x = 2.0 / beta.powi(2) * (1.0 - 2.0 * (1.0 - (-beta).exp()) / beta + (1.0 - (-2.0 * beta).exp()) / (2.0 * beta));
        assert!((cov[(0, 0)] - var_x).abs() < 1e-14 * var_x.max(1.0) + 1e-15);
    }

    #[test]
    fn psd_factor_handles_singular_matrices() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = psd_factor(&cov);
        assert!((&l * l.transpose() - &cov).norm() < 1e-12);
        let zero = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(psd_factor(&zero).norm(), 0.0);
    }
}
