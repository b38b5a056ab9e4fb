//! Adaptive Gauss–Legendre quadrature for the Fourier pricing integrals.
//!
//! A segment is integrated with a fixed-order rule on `p` equal panels, and
//! `p` is doubled until two successive estimates agree to the requested
//! tolerance. The semi-infinite pricing integral is handled by chaining
//! geometrically growing segments until a whole segment contributes
//! negligibly.

use super::OracleError;

/// Nodes and weights of the `n`-point rule on `[-1, 1]`, computed by
/// Newton iteration on the Legendre recurrence.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "rule order must be at least 2");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi initial guess for the i-th positive root
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // evaluate P_n and P_n' by upward recurrence
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integral of `f` over `[a, b]` with a single panel.
    pub fn integrate_panel(&self, f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    fn integrate_panels(&self, f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, p: usize) -> f64 {
        let step = (b - a) / p as f64;
        let mut acc = 0.0;
        for i in 0..p {
            let lo = a + step * i as f64;
            acc += self.integrate_panel(f, lo, lo + step);
        }
        acc
    }

    /// Integrates `[a, b]` with panel doubling until successive estimates
    /// differ by less than `tol`.
    pub fn integrate_adaptive(
        &self,
        f: &mut impl FnMut(f64) -> f64,
        a: f64,
        b: f64,
        tol: f64,
        max_panels: usize,
    ) -> Result<f64, OracleError> {
        let mut panels = 1;
        let mut prev = self.integrate_panels(f, a, b, panels);
        while panels < max_panels {
            panels *= 2;
            let next = self.integrate_panels(f, a, b, panels);
            let diff = (next - prev).abs();
            if diff < tol {
                return Ok(next);
            }
            prev = next;
        }
        // one more refinement to estimate the residual honestly
        let next = self.integrate_panels(f, a, b, panels * 2);
        let residual = (next - prev).abs();
        if residual < tol {
            return Ok(next);
        }
        Err(OracleError::QuadratureNonConvergence { residual, tol })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_match_known_small_rules() {
        let g2 = GaussLegendre::new(2);
        let r = 1.0 / 3.0f64.sqrt();
        assert!((g2.nodes[0] + r).abs() < 1e-14);
        assert!((g2.nodes[1] - r).abs() < 1e-14);
        assert!((g2.weights[0] - 1.0).abs() < 1e-14);

        let g3 = GaussLegendre::new(3);
        assert!((g3.nodes[1]).abs() < 1e-14);
        assert!((g3.weights[1] - 8.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_two() {
        for n in [2, 5, 16, 64, 65] {
            let g = GaussLegendre::new(n);
            let sum: f64 = g.weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-12, "order {n}: {sum}");
        }
    }

    #[test]
    fn exact_for_polynomials() {
        let g = GaussLegendre::new(8);
        // degree 15 is exact for an 8-point rule
        let exact = 2.0 / 15.0; // int_{-1}^{1} x^14 dx
        let got = g.integrate_panel(&mut |x: f64| x.powi(14), -1.0, 1.0);
        assert!((got - exact).abs() < 1e-14);
    }

    #[test]
    fn adaptive_converges_on_oscillatory_integrand() {
        let g = GaussLegendre::new(16);
        let got = g
            .integrate_adaptive(&mut |x: f64| (40.0 * x).cos() * (-x).exp(), 0.0, 10.0, 1e-12, 1024)
            .unwrap();
        // antiderivative of e^{-x} cos(40x) is e^{-x}(40 sin(40x) - cos(40x)) / 1601
        let anti = |x: f64| (-x).exp() * (40.0 * (40.0 * x).sin() - (40.0 * x).cos()) / 1601.0;
        let exact = anti(10.0) - anti(0.0);
        assert!((got - exact).abs() < 1e-9, "got {got}, exact {exact}");
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = GaussLegendre::new(2);
        // a 2-point rule on at most 4 panels cannot resolve cos(137 x)
        let err = g.integrate_adaptive(&mut |x: f64| (137.0 * x).cos(), 0.0, 10.0, 1e-12, 4);
        assert!(matches!(
            err,
            Err(OracleError::QuadratureNonConvergence { .. })
        ));
    }
}
