//! Heston characteristic function in the numerically stable branch of the
//! complex logarithm (the "little trap" form), normalized so that it is the
//! characteristic function of the log-return `ln(S_tau / S_0)`.

use super::OracleError;
use crate::domain::HestonParams;
use num_complex::Complex64;

/// Drift-stripped factor `psi(u) = E[exp(i u (ln S_tau - ln S_0 - r tau))]`.
///
/// `psi(0) = 1` and `psi(-i) = 1` (the martingale normalization), hence the
/// full log-return characteristic function is `exp(i u r tau) * psi(u)`.
pub(crate) fn heston_psi(
    u: Complex64,
    p: &HestonParams,
    nu0: f64,
    tau: f64,
) -> Result<Complex64, OracleError> {
    let i = Complex64::new(0.0, 1.0);
    let sigma2 = p.sigma * p.sigma;
    let xi = Complex64::new(p.kappa, 0.0) - i * p.rho * p.sigma * u;
    let d = (xi * xi + sigma2 * (i * u + u * u)).sqrt();
    let g = (xi - d) / (xi + d);
    let e = (-d * tau).exp();
    let log_term = ((1.0 - g * e) / (1.0 - g)).ln();
    let a = (p.kappa * p.theta / sigma2) * ((xi - d) * tau - 2.0 * log_term);
    let b = (xi - d) / sigma2 * (1.0 - e) / (1.0 - g * e);
    let psi = (a + b * nu0).exp();
    if psi.re.is_finite() && psi.im.is_finite() {
        Ok(psi)
    } else {
        Err(OracleError::NumericalInstability {
            u_re: u.re,
            u_im: u.im,
            params: *p,
            tau,
        })
    }
}

/// Risk-neutral characteristic function of the log-return,
/// `E[exp(i u ln(S_tau / S_0))]`. Multiply by `exp(i u ln S_0)` for the
/// characteristic function of log-spot at maturity.
pub fn heston_char_fn(
    u: Complex64,
    p: &HestonParams,
    nu0: f64,
    tau: f64,
) -> Result<Complex64, OracleError> {
    if tau < 0.0 {
        return Err(OracleError::InvalidInput(format!(
            "tau = {tau} must be nonnegative"
        )));
    }
    if !p.feller_holds() {
        return Err(OracleError::FellerViolated(*p));
    }
    let i = Complex64::new(0.0, 1.0);
    Ok((i * u * p.r * tau).exp() * heston_psi(u, p, nu0, tau)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> HestonParams {
        HestonParams::new(2.0, 0.09, 0.3, -0.7, 0.03)
    }

    #[test]
    fn unit_mass_at_zero() {
        let cf = heston_char_fn(Complex64::new(0.0, 0.0), &params(), 0.04, 0.7).unwrap();
        assert!((cf - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn martingale_identity() {
        // E[S_tau / S_0] = e^{r tau}, i.e. char fn at u = -i
        for tau in [0.05, 0.5, 1.0] {
            let cf = heston_char_fn(Complex64::new(0.0, -1.0), &params(), 0.12, tau).unwrap();
            let expect = (params().r * tau).exp();
            assert!(
                (cf - Complex64::new(expect, 0.0)).norm() < 1e-12,
                "tau {tau}: {cf}"
            );
        }
    }

    #[test]
    fn degenerate_maturity_is_unit() {
        // ln(S_0/S_0) = 0 at tau = 0, so the log-return char fn is 1 for
        // every u; the log-spot version is the pure phase e^{i u ln S_0}.
        for u in [0.5, 1.0, 17.0] {
            let cf = heston_char_fn(Complex64::new(u, 0.0), &params(), 0.2, 0.0).unwrap();
            assert!((cf - Complex64::new(1.0, 0.0)).norm() < 1e-14, "u {u}");
        }
    }

    #[test]
    fn modulus_bounded_by_one_on_reals() {
        let p = params();
        for u in [0.1, 1.0, 5.0, 25.0, 120.0] {
            let cf = heston_char_fn(Complex64::new(u, 0.0), &p, 0.04, 0.9).unwrap();
            assert!(cf.norm() <= 1.0 + 1e-12, "u {u}: |cf| = {}", cf.norm());
        }
    }

    #[test]
    fn long_maturity_stays_stable() {
        // the trap branch must not jump even for large kappa*tau
        let p = HestonParams::new(3.0, 0.2, 0.9, -0.9, 0.08);
        let mut prev = heston_char_fn(Complex64::new(0.01, 0.0), &p, 0.4, 1.0).unwrap();
        let mut max_step = 0.0f64;
        let mut u = 0.01;
        while u < 150.0 {
            u += 0.05;
            let cf = heston_char_fn(Complex64::new(u, 0.0), &p, 0.4, 1.0).unwrap();
            max_step = max_step.max((cf - prev).norm());
            prev = cf;
        }
        assert!(max_step < 0.2, "discontinuity of size {max_step}");
    }

    #[test]
    fn rejects_feller_violation_and_negative_tau() {
        let bad = HestonParams::new(0.5, 0.01, 1.0, -0.5, 0.0);
        assert!(matches!(
            heston_char_fn(Complex64::new(1.0, 0.0), &bad, 0.04, 0.5),
            Err(OracleError::FellerViolated(_))
        ));
        assert!(matches!(
            heston_char_fn(Complex64::new(1.0, 0.0), &params(), 0.04, -0.1),
            Err(OracleError::InvalidInput(_))
        ));
    }
}
