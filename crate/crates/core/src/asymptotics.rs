//! Small-delay series for zigzag motion, closed-form bifurcation curves, and
//! the dead-zone periodic orbit law.
//!
//! All series are evaluated exactly as truncated; nothing beyond the listed
//! terms is added.

use crate::model::{on_equilibria, GKind, Params, Rule, State};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AsymptoticError {
    #[error("control too weak at theta = {theta}: a*theta*G(theta) - sin(theta) = {margin} <= 0")]
    NoIntersection { theta: f64, margin: f64 },
    #[error("formula is singular at the given parameters ({0})")]
    Singular(&'static str),
    #[error("the controlled system has no saddle equilibrium")]
    NoEquilibrium,
    #[error("no small periodic orbit: a*sigma*G(sigma) - sin(sigma) = {0} <= 0")]
    NoPeriodicOrbit(f64),
    #[error("needs rule {0}")]
    WrongRule(Rule),
    #[error("only defined for G = cos")]
    NeedsCosine,
}

/// Branch of the zigzag expansions, keyed on whether the orbit is back in the
/// OFF region before two delays have elapsed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesBranch {
    /// `T_int ≤ 2τ`.
    Short,
    /// `T_int ≥ 2τ`.
    Long,
}

/// `a θ G(θ) − sin θ`, positive when the control beats gravity at `θ`.
pub fn control_margin(theta: f64, a: f64, g: GKind) -> f64 {
    a * theta * g.eval(theta) - theta.sin()
}

/// Free motion from `(θ0, sθ0)` during the first delay.
pub fn series_off_segment(theta0: f64, s: f64, t: f64) -> f64 {
    theta0 + theta0 * s * t + 0.5 * theta0.sin() * t * t
}

/// Expansion coefficients of a zigzag about `θ1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaCoefficients {
    pub a1_hat: f64,
    pub a2_hat: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5_hat: f64,
    pub a6: f64,
    pub a6_hat: f64,
}

pub fn alpha_coefficients(theta: f64, a: f64, b: f64, g: GKind) -> AlphaCoefficients {
    let gv = g.eval(theta);
    let sn = theta.sin();
    let abtg2 = a * b * theta * gv * gv;
    AlphaCoefficients {
        a1_hat: -abtg2 / 6.0,
        a2_hat: 0.5 * abtg2,
        a3: -0.5 * (a * theta * gv - sn),
        a4: -0.5 * b * theta * gv,
        a5_hat: -0.5 * abtg2,
        a6: -b * sn * gv * gv / 6.0,
        a6_hat: b * gv * (a * theta * gv - sn) / 6.0,
    }
}

/// Piecewise cubic description of one zigzag, centred on the first switching
/// point `(θ1, φ1)` at `t = τ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZigzagSeries {
    pub theta1: f64,
    pub s: f64,
    pub tau: f64,
    pub alpha: AlphaCoefficients,
    g_theta1: f64,
}

impl ZigzagSeries {
    pub fn new(theta1: f64, p: &Params) -> Self {
        ZigzagSeries { theta1, s: p.s, tau: p.tau, alpha: alpha_coefficients(theta1, p.a, p.b, p.g), g_theta1: p.g.eval(theta1) }
    }

    /// Angle at time `t` from the window that contains it.
    pub fn theta(&self, t: f64) -> f64 {
        let (c0, c1, c2, c3) = self.poly(t);
        let u = t - self.tau;
        c0 + u * (c1 + u * (c2 + u * c3))
    }

    /// Time derivative of [`Self::theta`].
    pub fn phi(&self, t: f64) -> f64 {
        let (_, c1, c2, c3) = self.poly(t);
        let u = t - self.tau;
        c1 + u * (2.0 * c2 + 3.0 * u * c3)
    }

    /// Polynomial in `t − τ` for the window containing `t`.
    fn poly(&self, t: f64) -> (f64, f64, f64, f64) {
        if t <= self.tau {
            self.branch_poly(0)
        } else if t <= 2.0 * self.tau {
            self.branch_poly(1)
        } else {
            self.branch_poly(2)
        }
    }

    /// Coefficients of the first (OFF), second and third (ON) windows.
    pub fn branch_poly(&self, window: usize) -> (f64, f64, f64, f64) {
        let th = self.theta1;
        let sn = th.sin();
        let al = &self.alpha;
        let tau = self.tau;
        let lin = self.s * th + sn * tau;
        match window {
            0 => (th, lin, 0.5 * sn, 0.0),
            // `a6` carries one factor of `G` too many; without dividing it out
            // this window disagrees with the last one at `t = 2τ` at cubic order.
            1 => (th, lin, al.a3 + al.a4 * self.s, al.a6 / self.g_theta1),
            _ => (
                th + al.a1_hat * tau.powi(3),
                lin + al.a2_hat * tau * tau,
                al.a3 + al.a4 * self.s + al.a5_hat * tau,
                al.a6_hat,
            ),
        }
    }

    /// Branch decided by the sign of `φ − sθ` at `t = 2τ`.
    pub fn branch(&self) -> SeriesBranch {
        let (c0, c1, c2, c3) = self.branch_poly(1);
        let u = self.tau;
        let theta = c0 + u * (c1 + u * (c2 + u * c3));
        let phi = c1 + u * (2.0 * c2 + 3.0 * u * c3);
        if phi - self.s * theta <= 0.0 {
            SeriesBranch::Short
        } else {
            SeriesBranch::Long
        }
    }
}

pub fn series_zigzag(theta1: f64, p: &Params, t: f64) -> f64 {
    ZigzagSeries::new(theta1, p).theta(t)
}

/// Coefficients of the return time to `Σ1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TintCoefficients {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub xi3_hat: f64,
}

fn margin_checked(theta: f64, a: f64, g: GKind) -> Result<f64, AsymptoticError> {
    let d = control_margin(theta, a, g);
    if d > 0.0 {
        Ok(d)
    } else {
        Err(AsymptoticError::NoIntersection { theta, margin: d })
    }
}

pub fn tint_coefficients(theta1: f64, p: &Params) -> Result<TintCoefficients, AsymptoticError> {
    let (a, b) = (p.a, p.b);
    let gv = p.g.eval(theta1);
    let sn = theta1.sin();
    let d = margin_checked(theta1, a, p.g)?;
    let atg = a * theta1 * gv;
    Ok(TintCoefficients {
        xi1: atg / d,
        xi2: -b * theta1 * sn * gv / (d * d),
        xi3: -0.5 * b * sn.powi(3) * gv / d.powi(3),
        xi3_hat: 0.5 * b * gv * (sn * sn - 3.0 * atg * sn + atg * atg) / (d * d),
    })
}

pub fn series_t_int_branch(theta1: f64, p: &Params, branch: SeriesBranch) -> Result<f64, AsymptoticError> {
    let c = tint_coefficients(theta1, p)?;
    let third = match branch {
        SeriesBranch::Short => c.xi3,
        SeriesBranch::Long => c.xi3_hat,
    };
    Ok(c.xi1 * p.tau + c.xi2 * p.s * p.tau + third * p.tau * p.tau)
}

/// Time of return to `Σ1`, measured from the start of the zigzag.
pub fn series_t_int(theta1: f64, p: &Params) -> Result<f64, AsymptoticError> {
    margin_checked(theta1, p.a, p.g)?;
    let branch = ZigzagSeries::new(theta1, p).branch();
    series_t_int_branch(theta1, p, branch)
}

/// Coefficients of the energy change over one zigzag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaHCoefficients {
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    pub zeta4: f64,
    pub zeta5: f64,
    pub zeta4_hat: f64,
    pub zeta5_hat: f64,
}

impl DeltaHCoefficients {
    pub fn eval(&self, s: f64, tau: f64, branch: SeriesBranch) -> f64 {
        let (z4, z5) = match branch {
            SeriesBranch::Short => (self.zeta4, self.zeta5),
            SeriesBranch::Long => (self.zeta4_hat, self.zeta5_hat),
        };
        self.zeta1 * s * tau + self.zeta2 * tau * tau + self.zeta3 * s * s * tau + z4 * s * tau * tau + z5 * tau.powi(3)
    }
}

pub fn delta_h_coefficients(theta1: f64, a: f64, b: f64, g: GKind) -> Result<DeltaHCoefficients, AsymptoticError> {
    let th = theta1;
    let gv = g.eval(th);
    let sn = th.sin();
    let d = margin_checked(th, a, g)?;
    let atg = a * th * gv;
    let g2 = gv * gv;
    let mid = sn - 0.5 * atg;
    Ok(DeltaHCoefficients {
        zeta1: -a * a * th.powi(3) * g2 / d,
        zeta2: -a * a * th * th * g2 * mid / d,
        zeta3: 2.0 * a * b * th.powi(3) * g2 * mid / (d * d),
        zeta4: -2.0 * a * b * th * th * g2 * (sn.powi(3) - 2.75 * atg * sn * sn + 2.0 * atg * atg * sn - 0.5 * atg.powi(3))
            / d.powi(3),
        zeta5: -a * b * th * sn * g2 / 6.0
            * (sn.powi(3) - 6.0 * atg * sn * sn + 8.0 * atg * atg * sn - 3.0 * atg.powi(3))
            / d.powi(3),
        zeta4_hat: 2.0 * a * b * th * th * g2 * (sn * sn - 0.75 * atg * sn + 0.25 * atg * atg) / (d * d),
        zeta5_hat: a * b * th * g2 / 6.0 * (sn.powi(3) + 7.0 * atg * sn * sn - 9.0 * atg * atg * sn + 3.0 * atg.powi(3))
            / (d * d),
    })
}

/// Branch of the energy change, from the predicted return time.
pub fn delta_h_branch(theta1: f64, p: &Params) -> Result<SeriesBranch, AsymptoticError> {
    let t_int = series_t_int(theta1, p)?;
    Ok(if t_int <= 2.0 * p.tau { SeriesBranch::Short } else { SeriesBranch::Long })
}

/// Energy change `H2 − H1` over one zigzag.
pub fn series_delta_h(theta1: f64, p: &Params) -> Result<f64, AsymptoticError> {
    let c = delta_h_coefficients(theta1, p.a, p.b, p.g)?;
    Ok(c.eval(p.s, p.tau, delta_h_branch(theta1, p)?))
}

pub fn series_delta_h_branch(theta1: f64, p: &Params, branch: SeriesBranch) -> Result<f64, AsymptoticError> {
    Ok(delta_h_coefficients(theta1, p.a, p.b, p.g)?.eval(p.s, p.tau, branch))
}

/// Coefficient of `θ1²` in the energy change for small amplitude (same for
/// both choices of `G`).
pub fn small_amplitude_coefficient(a: f64, b: f64, s: f64, tau: f64) -> Result<f64, AsymptoticError> {
    if a == 1.0 {
        return Err(AsymptoticError::Singular("a = 1"));
    }
    let am1 = a - 1.0;
    Ok(-a * a / am1 * s * tau + a * a * (a - 2.0) / (2.0 * am1) * tau * tau
        - a * b * (a - 2.0) / (am1 * am1) * s * s * tau
        + a * b * (a * a - 3.0 * a + 4.0) / (2.0 * am1 * am1) * s * tau * tau
        + a * b * (3.0 * a.powi(3) - 9.0 * a * a + 7.0 * a + 1.0) / (6.0 * am1 * am1) * tau.powi(3))
}

/// Delay at which a zigzag orbit is born from the origin.
pub fn dib_curve(a: f64, b: f64, s: f64) -> Result<f64, AsymptoticError> {
    if a == 0.0 || a == 1.0 || a == 2.0 {
        return Err(AsymptoticError::Singular("a in {0, 1, 2}"));
    }
    let am2 = a - 2.0;
    Ok(2.0 * s / am2
        - 2.0 * (2.0 + 8.0 * a - 15.0 * a * a + 6.0 * a.powi(3)) / (3.0 * a * (a - 1.0) * am2.powi(3)) * b * s * s)
}

/// Delay at which the quartic amplitude term vanishes (criticality change).
pub fn criticality_curve(a: f64, b: f64, s: f64, g: GKind) -> Result<f64, AsymptoticError> {
    match g {
        GKind::Cosine => {
            let q = 3.0 * a * a - 8.0 * a + 6.0;
            if a == 0.0 || a == 1.0 || q == 0.0 {
                return Err(AsymptoticError::Singular("a in {0, 1}"));
            }
            let poly = -243.0 * a.powi(6) + 1674.0 * a.powi(5) - 4491.0 * a.powi(4) + 5862.0 * a.powi(3)
                - 3611.0 * a * a
                + 642.0 * a
                + 175.0;
            Ok((3.0 * a - 5.0) / q * s + b * poly / (6.0 * a * (a - 1.0) * q.powi(3)) * s * s)
        }
        GKind::One => {
            if a == 0.0 || a == 1.0 {
                return Err(AsymptoticError::Singular("a in {0, 1}"));
            }
            Ok(-2.0 / a * s - 2.0 * b * (a * a - 2.0) * (3.0 * a - 1.0) / (3.0 * a.powi(4) * (a - 1.0)) * s * s)
        }
    }
}

/// Linearisation of the undelayed controlled system at its saddle `(θ*, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaddleEigen {
    pub theta_star: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
}

impl SaddleEigen {
    /// Eigenvector `(1, λ)` for the given eigenvalue.
    pub fn eigenvector(lambda: f64) -> State {
        State::new(1.0, lambda)
    }

    pub fn unstable_direction(&self) -> State {
        Self::eigenvector(self.lambda_plus)
    }

    pub fn stable_direction(&self) -> State {
        Self::eigenvector(self.lambda_minus)
    }
}

pub fn saddle_eigen(p: &Params) -> Result<SaddleEigen, AsymptoticError> {
    if p.g != GKind::Cosine {
        return Err(AsymptoticError::NeedsCosine);
    }
    let th = *on_equilibria(p).first().ok_or(AsymptoticError::NoEquilibrium)?;
    let c = th.cos();
    let half_trace = -p.b * c / 2.0;
    let disc = p.b * p.b * c * c / 4.0 + (2.0 * th - (2.0 * th).sin()) / (2.0 * th * c);
    let root = disc.sqrt();
    Ok(SaddleEigen { theta_star: th, lambda_plus: half_trace + root, lambda_minus: half_trace - root })
}

/// Delay at which a zigzag orbit homoclinic to the saddle exists.
pub fn homoclinic_curve(a: f64, b: f64, s: f64) -> Result<f64, AsymptoticError> {
    let e = saddle_eigen(&Params::rule1(a, b, 0.0, s, GKind::Cosine))?;
    Ok(-(2.0 / e.theta_star.cos() + b / e.lambda_plus) * s / a)
}

/// Return-time coefficients for the dead-zone rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeadZoneTintCoefficients {
    pub chi1: f64,
    pub chi2: f64,
    pub chi3: f64,
}

fn rule2_margin(p: &Params) -> Result<f64, AsymptoticError> {
    if p.rule != Rule::Rule2 {
        return Err(AsymptoticError::WrongRule(Rule::Rule2));
    }
    let d = control_margin(p.sigma, p.a, p.g);
    if d > 0.0 {
        Ok(d)
    } else {
        Err(AsymptoticError::NoIntersection { theta: p.sigma, margin: d })
    }
}

pub fn dead_zone_tint_coefficients(p: &Params) -> Result<DeadZoneTintCoefficients, AsymptoticError> {
    let d = rule2_margin(p)?;
    let gs = p.g.eval(p.sigma);
    Ok(DeadZoneTintCoefficients {
        chi1: 2.0 / d,
        chi2: -2.0 / 3.0 * p.b * gs / (d * d),
        chi3: 2.0 * p.a * p.sigma * gs / d,
    })
}

/// Time at which the orbit of `(σ, φ0)` returns to `θ = σ`.
pub fn series_t_int_rule2(phi0: f64, p: &Params) -> Result<f64, AsymptoticError> {
    let c = dead_zone_tint_coefficients(p)?;
    Ok(c.chi1 * phi0 + c.chi2 * phi0 * phi0 + c.chi3 * p.tau)
}

pub fn series_delta_h_rule2(phi0: f64, p: &Params) -> Result<f64, AsymptoticError> {
    let d = rule2_margin(p)?;
    let gs = p.g.eval(p.sigma);
    Ok(2.0 * p.a * p.sigma * gs * phi0 * p.tau - 2.0 / 3.0 * p.b * gs / d * phi0.powi(3))
}

/// Small periodic orbit around `(σ, 0)` under the dead-zone rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeadZoneOrbit {
    /// Velocity at which the orbit leaves `θ = σ`.
    pub phi0: f64,
    pub stable: bool,
}

pub fn rule2_periodic(p: &Params) -> Result<DeadZoneOrbit, AsymptoticError> {
    let d = match rule2_margin(p) {
        Ok(d) => d,
        Err(AsymptoticError::NoIntersection { margin, .. }) => return Err(AsymptoticError::NoPeriodicOrbit(margin)),
        Err(e) => return Err(e),
    };
    if p.b <= 0.0 {
        return Err(AsymptoticError::Singular("b <= 0"));
    }
    let phi0 = (3.0 * p.a * p.sigma * d * p.tau / p.b).sqrt();
    // dΔH/dφ0 at the orbit is −(4/3) b G(σ) φ0² / margin.
    let slope = -4.0 / 3.0 * p.b * p.g.eval(p.sigma) / d * phi0 * phi0;
    Ok(DeadZoneOrbit { phi0, stable: slope < 0.0 || phi0 == 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p1(a: f64, b: f64, tau: f64, s: f64, g: GKind) -> Params {
        Params::rule1(a, b, tau, s, g)
    }

    #[test]
    fn off_segment_examples() {
        assert_eq!(series_off_segment(0.4, -0.1, 0.0), 0.4);
        assert_eq!(series_off_segment(0.0, -0.1, 0.7), 0.0);
    }

    #[test]
    fn zigzag_series_is_continuous_at_first_switch() {
        let p = p1(1.5, 2.0, 0.01, -0.01, GKind::Cosine);
        let z = ZigzagSeries::new(0.3, &p);
        assert_eq!(z.branch_poly(0).0, 0.3);
        assert_eq!(z.branch_poly(1).0, 0.3);
        assert_eq!(z.theta(p.tau), 0.3);
        // Middle and last windows meet at t = 2τ.
        let u = p.tau;
        let ev = |(c0, c1, c2, c3): (f64, f64, f64, f64)| c0 + u * (c1 + u * (c2 + u * c3));
        // The cubic terms of the two windows cancel exactly there.
        assert!((ev(z.branch_poly(1)) - ev(z.branch_poly(2))).abs() < 1e-15);
    }

    #[test]
    fn tint_limit_for_unit_gain() {
        let p = p1(2.0, 1.0, 0.01, 0.0, GKind::One);
        let c = tint_coefficients(1e-7, &p).unwrap();
        assert!((c.xi1 - 2.0).abs() < 1e-9);
        let p = p1(0.9, 2.0, 0.01, -0.01, GKind::Cosine);
        assert!(matches!(series_t_int(0.01, &p), Err(AsymptoticError::NoIntersection { .. })));
    }

    #[test]
    fn delta_h_vanishes_without_delay_or_slope() {
        let p = p1(1.5, 2.0, 0.0, 0.0, GKind::Cosine);
        assert_eq!(series_delta_h(0.2, &p).unwrap(), 0.0);
    }

    #[test]
    fn dib_limits() {
        let s = -1e-6;
        assert!((dib_curve(1.0 + 1e-9, 0.0, s).unwrap() / -s - 2.0).abs() < 1e-6);
        assert!(dib_curve(1.999, 0.0, s).unwrap() / -s > 1000.0);
        assert!(dib_curve(2.0, 2.0, s).is_err());
        let t = dib_curve(1.5, 2.0, -0.01).unwrap();
        assert!((t - 0.04).abs() < 0.002);
    }

    #[test]
    fn dib_zeroes_small_amplitude_coefficient_to_third_order() {
        let r = |s: f64| {
            let tau = dib_curve(1.5, 2.0, s).unwrap();
            small_amplitude_coefficient(1.5, 2.0, s, tau).unwrap()
        };
        let (r1, r2) = (r(-0.01), r(-0.005));
        // Residual is quartic in s.
        assert!((r1 / r2 - 16.0).abs() < 1.0, "ratio {}", r1 / r2);
    }

    #[test]
    fn criticality_curve_leading_terms() {
        assert_eq!(criticality_curve(1.5, 2.0, 0.0, GKind::Cosine).unwrap(), 0.0);
        assert!((criticality_curve(1.5, 0.0, -0.01, GKind::One).unwrap() - 0.02 / 1.5).abs() < 1e-16);
    }

    #[test]
    fn saddle_eigen_matches_jacobian() {
        for &(a, b) in &[(1.5, 2.0), (1.2, 0.5), (2.5, 4.0)] {
            let p = p1(a, b, 0.0, -0.01, GKind::Cosine);
            let e = saddle_eigen(&p).unwrap();
            let th = e.theta_star;
            // Jacobian of (φ, sin θ − (aθ + bφ) cos θ) at (θ*, 0).
            let j21 = th.cos() - a * th.cos() + a * th * th.sin();
            let j22 = -b * th.cos();
            let tr = j22;
            let det = -j21;
            let disc = (tr * tr / 4.0 - det).sqrt();
            assert!((e.lambda_plus - (tr / 2.0 + disc)).abs() < 1e-10);
            assert!((e.lambda_minus - (tr / 2.0 - disc)).abs() < 1e-10);
            assert!(e.lambda_plus * e.lambda_minus < 0.0);
        }
        let p = p1(4.0 / PI, 0.0, 0.0, 0.0, GKind::Cosine);
        let e = saddle_eigen(&p).unwrap();
        let th = PI / 4.0;
        let expect = ((2.0 * th - (2.0 * th).sin()) / (2.0 * th * th.cos())).sqrt();
        assert!((e.lambda_plus - expect).abs() < 1e-10 && (e.lambda_minus + expect).abs() < 1e-10);
    }

    #[test]
    fn homoclinic_curve_vanishes_at_zero_slope() {
        assert_eq!(homoclinic_curve(1.8, 2.0, 0.0).unwrap(), 0.0);
        assert!(homoclinic_curve(0.9, 2.0, -0.01).is_err());
    }

    #[test]
    fn dead_zone_orbit() {
        let p = Params::rule2(2.5, 0.5, 0.0, 0.3, GKind::Cosine);
        assert_eq!(rule2_periodic(&p).unwrap().phi0, 0.0);
        let o1 = rule2_periodic(&p.with_tau(1e-4)).unwrap();
        let o2 = rule2_periodic(&p.with_tau(4e-4)).unwrap();
        assert!((o2.phi0 / o1.phi0 - 2.0).abs() < 1e-12);
        assert!(o1.stable);
        // ΔH vanishes on the orbit.
        let q = p.with_tau(1e-3);
        let o = rule2_periodic(&q).unwrap();
        assert!(series_delta_h_rule2(o.phi0, &q).unwrap().abs() < 1e-15);
        let c = dead_zone_tint_coefficients(&q).unwrap();
        assert!(c.chi1 > 0.0);
        assert!(matches!(rule2_periodic(&Params::rule2(0.5, 0.5, 0.01, 0.3, GKind::Cosine)), Err(AsymptoticError::NoPeriodicOrbit(_))));
    }
}
