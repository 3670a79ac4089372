//! Uniform 1-D grids and composite trapezoid quadrature.

use crate::error::{Error, Result};

/// Uniform node-centred grid on `[0, ell]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    n: usize,
    dx: f64,
    ell: f64,
}

impl Grid1D {
    /// Grid with `n` nodes (including both end points).
    pub fn new(ell: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Config(format!("grid needs at least 3 nodes, got {n}")));
        }
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::Config(format!("road length must be positive, got {ell}")));
        }
        Ok(Self {
            n,
            dx: ell / (n - 1) as f64,
            ell,
        })
    }

    /// Grid whose spacing is `dx`; `ell / dx` must be an integer to 1e-9.
    pub fn with_spacing(ell: f64, dx: f64) -> Result<Self> {
        let cells = ell / dx;
        let rounded = cells.round();
        if !(dx > 0.0) || (cells - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::Config(format!(
                "spacing {dx} km does not divide road length {ell} km"
            )));
        }
        Self::new(ell, rounded as usize + 1)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.ell
        } else {
            i as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn check_len(&self, got: usize) -> Result<()> {
        if got != self.n {
            return Err(Error::Shape { expected: self.n, got });
        }
        Ok(())
    }
}

/// Composite trapezoid rule for samples with uniform spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            h * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Trapezoid rule applied to the pointwise product `f * g`.
pub fn trapezoid_dot(f: &[f64], g: &[f64], h: f64) -> f64 {
    debug_assert_eq!(f.len(), g.len());
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = f[1..n - 1].iter().zip(&g[1..n - 1]).map(|(a, b)| a * b).sum();
    h * (inner + 0.5 * (f[0] * g[0] + f[n - 1] * g[n - 1]))
}

/// Squared L² norm by the trapezoid rule.
pub fn l2_squared(f: &[f64], h: f64) -> f64 {
    trapezoid_dot(f, f, h)
}

pub fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// First derivative of uniformly sampled data: centred in the interior,
/// second-order one-sided at both ends.
pub fn derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 3, "derivative needs at least three samples");
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
    }
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_for_linear_data() {
        let g = Grid1D::new(2.0, 11).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((trapezoid(&f, g.dx()) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_is_exact_for_quadratics() {
        let g = Grid1D::new(1.0, 9).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|x| x * x - x).collect();
        let d = derivative(&f, g.dx());
        for (i, di) in d.iter().enumerate() {
            assert!((di - (2.0 * g.x(i) - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn spacing_must_divide_length() {
        assert!(Grid1D::with_spacing(1.0, 0.003).is_err());
        let g = Grid1D::with_spacing(1.0, 0.005).unwrap();
        assert_eq!(g.len(), 201);
        assert!((g.dx() * 200.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_grids_are_rejected() {
        assert!(Grid1D::new(1.0, 2).is_err());
    }
}
