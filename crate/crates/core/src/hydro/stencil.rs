use crate::error::Result;
use crate::Error;

/// Floor applied before square roots.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Cells whose stencil touches density below this fraction of the peak are
/// masked from the quantum-potential term.
pub const RELATIVE_DENSITY_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumPotential {
    /// `∇[Δρ^½/ρ^½]`
    pub qp_term: Vec<f64>,
    /// `Q = 2·coefficient·Δρ^½/ρ^½`
    pub q_potential: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Second-order finite differences of `ρ^½`.
///
/// The ratio `Δs/s` needs one neighbour on each side and its gradient needs
/// two, so two cells at each edge are always masked. Values on masked cells
/// are `NaN` where the stencil does not fit, otherwise computed but not
/// trustworthy.
pub fn quantum_potential_term(rho: &[f64], spacing: f64, coefficient: f64) -> Result<QuantumPotential> {
    let n = rho.len();
    if n < 5 {
        return Err(Error::GridTooSmall { cells: n, min: 5 });
    }
    let s: Vec<f64> = rho.iter().map(|&r| r.max(DENSITY_FLOOR).sqrt()).collect();
    let h2 = spacing * spacing;
    let mut ratio = vec![f64::NAN; n];
    for i in 1..n - 1 {
        ratio[i] = (s[i + 1] - 2.0 * s[i] + s[i - 1]) / (h2 * s[i]);
    }
    let mut qp_term = vec![f64::NAN; n];
    for i in 2..n - 2 {
        qp_term[i] = (ratio[i + 1] - ratio[i - 1]) / (2.0 * spacing);
    }
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let cutoff = RELATIVE_DENSITY_CUTOFF * peak;
    let low: Vec<bool> = rho.iter().map(|&r| !(r >= cutoff) || r <= DENSITY_FLOOR).collect();
    let mask = (0..n)
        .map(|i| i < 2 || i >= n - 2 || low[i - 2..=i + 2].iter().any(|&l| l))
        .collect();
    Ok(QuantumPotential {
        qp_term,
        q_potential: ratio.iter().map(|r| 2.0 * coefficient * r).collect(),
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(n: usize, half: f64, var: f64) -> (Vec<f64>, Vec<f64>, f64) {
        let h = 2.0 * half / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| -half + i as f64 * h).collect();
        let rho = x
            .iter()
            .map(|x| (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
            .collect();
        (x, rho, h)
    }

    #[test]
    fn unit_gaussian_values() {
        let (x, rho, h) = gaussian(801, 8.0, 1.0);
        let qp = quantum_potential_term(&rho, h, 1.0).unwrap();
        assert!((qp.q_potential[400] + 1.0).abs() < 1e-4);
        let at_one = x.iter().position(|&v| (v - 1.0).abs() < 1e-9).unwrap();
        assert!((qp.qp_term[at_one] - 0.5).abs() < 1e-4);
        assert!(qp.qp_term[400].abs() < 1e-12);
    }

    #[test]
    fn matches_closed_form_to_second_order() {
        let err = |n| {
            let (x, rho, h) = gaussian(n, 6.0, 2.0);
            let qp = quantum_potential_term(&rho, h, 1.0).unwrap();
            (0..n)
                .filter(|&i| !qp.mask[i])
                .map(|i| (qp.qp_term[i] - x[i] / 8.0).abs())
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(201), err(401));
        assert!(coarse / fine > 3.5, "{coarse} {fine}");
    }

    #[test]
    fn uniform_density_has_no_term() {
        let qp = quantum_potential_term(&[0.25; 16], 0.1, 3.0).unwrap();
        for i in 2..14 {
            assert_eq!(qp.qp_term[i], 0.0);
            assert!(!qp.mask[i]);
        }
        assert!(qp.mask[0] && qp.mask[1] && qp.mask[14] && qp.mask[15]);
    }

    #[test]
    fn tails_and_small_grids() {
        let mut rho = vec![1.0; 20];
        rho[10] = 0.0;
        let qp = quantum_potential_term(&rho, 1.0, 1.0).unwrap();
        assert!((8..=12).all(|i| qp.mask[i]));
        assert!(!qp.mask[7] && !qp.mask[13]);
        assert!(matches!(quantum_potential_term(&[1.0; 4], 1.0, 1.0), Err(Error::GridTooSmall { .. })));
    }
}
