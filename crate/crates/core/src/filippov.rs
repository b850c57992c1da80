//! The undelayed system: grazing points, sliding regions on `Σ1`, and a
//! Filippov integrator.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::model::{decision_from_signs, hamiltonian, manifold_value, off_field, on_field, Manifold, Params, Rule, State};
use crate::roots::{bisect, first_sign_change};

const ROOT_TOL: f64 = 1e-14;
const EVENT_TOL: f64 = 1e-12;
const Q_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilippovError {
    #[error("the OFF grazing condition has no root for s = {0} (need -1 < s <= 0)")]
    NoGrazingRoot(f64),
    #[error("theta = {theta} is not in a sliding region (q = {q})")]
    NotSliding { theta: f64, q: f64 },
    #[error("zero-delay analysis needs rule 1")]
    WrongRule,
    #[error("start state is not finite")]
    NonFiniteStart,
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
}

/// `sin θ / θ`, continuous at zero.
#[inline]
fn sinc(theta: f64) -> f64 {
    if theta.abs() < 1e-8 {
        1.0 - theta * theta / 6.0
    } else {
        theta.sin() / theta
    }
}

/// OFF grazing function: `sin θ/θ − s²`.
pub fn off_grazing_function(theta: f64, s: f64) -> f64 {
    sinc(theta) - s * s
}

/// ON grazing function: `sin θ/θ − s² − (a + b s) G(θ)`.
pub fn on_grazing_function(theta: f64, p: &Params) -> f64 {
    sinc(theta) - p.s * p.s - (p.a + p.b * p.s) * p.g.eval(theta)
}

/// Point of `Σ1` where the free pendulum is tangent to it.
pub fn grazing_off(s: f64) -> Result<f64, FilippovError> {
    if !(s > -1.0 && s <= 0.0) {
        return Err(FilippovError::NoGrazingRoot(s));
    }
    if s == 0.0 {
        return Ok(PI);
    }
    bisect(|th| off_grazing_function(th, s), 1e-12, PI, ROOT_TOL).ok_or(FilippovError::NoGrazingRoot(s))
}

/// Point of `Σ1` where the undelayed controlled field is tangent to it.
pub fn grazing_on(p: &Params) -> Option<f64> {
    let f = |th: f64| on_grazing_function(th, p);
    let k = p.a + p.b * p.s + p.s * p.s;
    match p.g {
        crate::model::GKind::One => {
            if !(k > 2.0 / PI && k < 1.0) {
                return None;
            }
            bisect(f, 1e-12, FRAC_PI_2, ROOT_TOL)
        }
        crate::model::GKind::Cosine => {
            if !(k > 1.0) {
                return None;
            }
            let (lo, hi) = first_sign_change(f, 1e-12, FRAC_PI_2, 256)?;
            bisect(f, lo, hi, ROOT_TOL)
        }
    }
}

/// Attracting sliding interval of `θ > 0` on `Σ1` (mirrored for `θ < 0`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlidingRegion {
    pub lo: f64,
    pub hi: f64,
    pub attracting: bool,
}

impl SlidingRegion {
    pub fn contains(&self, theta: f64) -> bool {
        let t = theta.abs();
        t > self.lo && t < self.hi
    }
}

pub fn sliding_region(p: &Params) -> Option<SlidingRegion> {
    if p.rule != Rule::Rule1 {
        return None;
    }
    let upper = grazing_off(p.s).map(|t| t.min(FRAC_PI_2)).unwrap_or(FRAC_PI_2);
    let (lo, hi) = match p.g {
        crate::model::GKind::One => {
            let k = p.a + p.b * p.s + p.s * p.s;
            if k >= 1.0 {
                (0.0, upper)
            } else {
                (grazing_on(p)?, upper)
            }
        }
        crate::model::GKind::Cosine => (0.0, grazing_on(p)?.min(upper)),
    };
    (lo < hi).then_some(SlidingRegion { lo, hi, attracting: true })
}

/// Weight of the ON field in the convex combination tangent to `Σ1`.
pub fn filippov_q_raw(theta: f64, p: &Params) -> f64 {
    let num = sinc(theta) - p.s * p.s;
    num / ((p.a + p.b * p.s) * p.g.eval(theta))
}

pub fn filippov_q(theta: f64, p: &Params) -> Result<f64, FilippovError> {
    let q = filippov_q_raw(theta, p);
    if q.is_finite() && (-Q_SLACK..=1.0 + Q_SLACK).contains(&q) {
        Ok(q.clamp(0.0, 1.0))
    } else {
        Err(FilippovError::NotSliding { theta, q })
    }
}

/// Sliding field `(1 − q) f_OFF + q f_ON` at a point of `Σ1`.
pub fn sliding_field(x: State, p: &Params) -> State {
    let q = filippov_q_raw(x.theta, p);
    off_field(x) * (1.0 - q) + on_field(x, x, p) * q
}

/// Closed-form sliding motion along `Σ1`.
pub fn sliding_solution(theta0: f64, s: f64, t: f64) -> State {
    let th = theta0 * (s * t).exp();
    State::new(th, s * th)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZeroDelayEventKind {
    EnterSliding,
    ExitSliding,
    CrossSigma1,
    CrossSigma2,
    ReachEquilibrium,
}

impl ZeroDelayEventKind {
    pub fn label(self) -> &'static str {
        match self {
            ZeroDelayEventKind::EnterSliding => "enter_sliding",
            ZeroDelayEventKind::ExitSliding => "exit_sliding",
            ZeroDelayEventKind::CrossSigma1 => "cross_sigma1",
            ZeroDelayEventKind::CrossSigma2 => "cross_sigma2",
            ZeroDelayEventKind::ReachEquilibrium => "equilibrium",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroDelayEvent {
    pub t: f64,
    pub kind: ZeroDelayEventKind,
    pub state: State,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Off,
    On,
    Sliding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroDelayRun {
    pub samples: Vec<(f64, State, Mode)>,
    pub events: Vec<ZeroDelayEvent>,
    pub diverged: bool,
}

impl ZeroDelayRun {
    pub fn final_state(&self) -> State {
        self.samples.last().map(|s| s.1).unwrap_or_default()
    }
}

fn mode_field(x: State, mode: Mode, p: &Params) -> State {
    match mode {
        Mode::Off => off_field(x),
        Mode::On => on_field(x, x, p),
        Mode::Sliding => sliding_field(x, p),
    }
}

fn rk4(x: State, h: f64, mode: Mode, p: &Params) -> State {
    let k1 = mode_field(x, mode, p);
    let k2 = mode_field(x + k1 * (0.5 * h), mode, p);
    let k3 = mode_field(x + k2 * (0.5 * h), mode, p);
    let k4 = mode_field(x + k3 * h, mode, p);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Sliding is possible at a point of `Σ1` when both fields point at it.
fn slides_at(theta: f64, p: &Params) -> bool {
    theta != 0.0 && filippov_q(theta, p).is_ok() && sliding_region(p).is_some_and(|r| r.contains(theta))
}

/// Integrates the undelayed Filippov system from `x0` with fixed step `dt`.
pub fn simulate_zero_delay(x0: State, p: &Params, t_max: f64, dt: f64) -> Result<ZeroDelayRun, FilippovError> {
    if p.rule != Rule::Rule1 {
        return Err(FilippovError::WrongRule);
    }
    if !x0.is_finite() {
        return Err(FilippovError::NonFiniteStart);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FilippovError::BadStep(dt));
    }
    let mut run = ZeroDelayRun { samples: Vec::new(), events: Vec::new(), diverged: false };
    let mut t = 0.0;
    let mut x = x0;
    run.samples.push((t, x, Mode::Off));

    if x.theta == 0.0 && x.phi == 0.0 {
        run.events.push(ZeroDelayEvent { t, kind: ZeroDelayEventKind::ReachEquilibrium, state: x });
        return Ok(run);
    }

    // Side signs of Σ1 and Σ2; a start on a manifold takes the side the OFF
    // field points to.
    let mut signs = [sgn(manifold_value(x, Manifold::Sigma1, p)), sgn(x.theta)];
    let mut mode;
    if signs[0] == 0 && slides_at(x.theta, p) {
        mode = Mode::Sliding;
        run.events.push(ZeroDelayEvent { t, kind: ZeroDelayEventKind::EnterSliding, state: x });
    } else {
        let f = off_field(x);
        if signs[0] == 0 {
            signs[0] = sgn(f.phi - p.s * f.theta);
        }
        if signs[1] == 0 {
            signs[1] = sgn(f.theta);
        }
        mode = if decision_from_signs(Rule::Rule1, signs) { Mode::On } else { Mode::Off };
    }
    run.samples[0].2 = mode;

    while t < t_max {
        let h = dt.min(t_max - t);
        if mode == Mode::Sliding {
            let x1 = rk4(x, h, mode, p);
            if slides_at(x1.theta, p) {
                t += h;
                x = x1;
                run.samples.push((t, x, mode));
                if x.norm() < 1e-9 || mode_field(x, mode, p).norm() < 1e-14 {
                    run.events.push(ZeroDelayEvent { t, kind: ZeroDelayEventKind::ReachEquilibrium, state: x });
                    break;
                }
                continue;
            }
            // Locate the exit along the sliding arc.
            let mut lo = 0.0;
            let mut hi = h;
            while hi - lo > EVENT_TOL {
                let mid = 0.5 * (lo + hi);
                if slides_at(rk4(x, mid, mode, p).theta, p) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            x = rk4(x, hi, mode, p);
            t += hi;
            let q = filippov_q_raw(x.theta, p);
            mode = if q >= 0.5 { Mode::On } else { Mode::Off };
            signs = [0, sgn(x.theta)];
            signs[0] = if mode == Mode::On { signs[1] } else { -signs[1] };
            run.events.push(ZeroDelayEvent { t, kind: ZeroDelayEventKind::ExitSliding, state: x });
            run.samples.push((t, x, mode));
            continue;
        }

        let x1 = rk4(x, h, mode, p);
        let v1 = [sgn(manifold_value(x1, Manifold::Sigma1, p)), sgn(x1.theta)];
        let crossed: Vec<usize> = (0..2).filter(|&i| v1[i] != signs[i]).collect();
        if crossed.is_empty() {
            t += h;
            x = x1;
            run.samples.push((t, x, mode));
        } else {
            // Earliest sign change among the crossed manifolds.
            let mut best: Option<(f64, usize)> = None;
            for &i in &crossed {
                let m = if i == 0 { Manifold::Sigma1 } else { Manifold::Sigma2 };
                let mut lo = 0.0;
                let mut hi = h;
                while hi - lo > EVENT_TOL {
                    let mid = 0.5 * (lo + hi);
                    if sgn(manifold_value(rk4(x, mid, mode, p), m, p)) == signs[i] {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if best.is_none_or(|(tb, _)| hi < tb) {
                    best = Some((hi, i));
                }
            }
            let (tc, i) = best.unwrap();
            x = rk4(x, tc, mode, p);
            t += tc;
            signs[i] = -signs[i];
            if i == 0 && slides_at(x.theta, p) {
                // Snap onto the manifold before following the sliding flow.
                x.phi = p.s * x.theta;
                mode = Mode::Sliding;
                run.events.push(ZeroDelayEvent { t, kind: ZeroDelayEventKind::EnterSliding, state: x });
            } else {
                let kind = if i == 0 { ZeroDelayEventKind::CrossSigma1 } else { ZeroDelayEventKind::CrossSigma2 };
                run.events.push(ZeroDelayEvent { t, kind, state: x });
                mode = if decision_from_signs(Rule::Rule1, signs) { Mode::On } else { Mode::Off };
            }
            run.samples.push((t, x, mode));
        }
        if x.theta.abs() > FRAC_PI_2 {
            run.diverged = true;
            break;
        }
        if x.norm() < 1e-9 && (hamiltonian(x) - 1.0).abs() < 1e-9 {
            run.events.push(ZeroDelayEvent { t, kind: ZeroDelayEventKind::ReachEquilibrium, state: x });
            break;
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GKind;

    #[test]
    fn grazing_off_examples() {
        assert_eq!(grazing_off(0.0).unwrap(), PI);
        let s = -(2.0 / PI).sqrt();
        assert!((grazing_off(s).unwrap() - FRAC_PI_2).abs() < 1e-10);
        let r = grazing_off(-0.3).unwrap();
        assert!(r > FRAC_PI_2 && r < PI);
        assert!(off_grazing_function(r, -0.3).abs() < 1e-10);
        assert!(grazing_off(-1.0).is_err());
        assert!(grazing_off(0.1).is_err());
    }

    #[test]
    fn grazing_on_examples() {
        let p = Params::rule1(0.8, 2.0, 0.0, 0.0, GKind::One);
        let r = grazing_on(&p).unwrap();
        assert!((r.sin() / r - 0.8).abs() < 1e-10);
        // Approaching the upper bound of the existence window pushes the root to zero.
        let p = Params::rule1(0.999_999, 0.0, 0.0, 0.0, GKind::One);
        assert!(grazing_on(&p).unwrap() < 1e-2);
        let p = Params::rule1(0.9, 2.0, 0.0, -0.01, GKind::Cosine);
        assert!(grazing_on(&p).is_none());
    }

    #[test]
    fn sliding_region_examples() {
        let p = Params::rule1(0.8, 2.0, 0.0, 0.0, GKind::One);
        let r = sliding_region(&p).unwrap();
        assert_eq!(r.hi, FRAC_PI_2);
        assert!((r.lo - grazing_on(&p).unwrap()).abs() < 1e-15);
        let p = Params::rule1(1.5, 2.0, 0.0, -0.01, GKind::Cosine);
        let r = sliding_region(&p).unwrap();
        assert_eq!(r.lo, 0.0);
        assert!(on_grazing_function(r.hi, &p).abs() < 1e-10);
        assert!(sliding_region(&p.with_a(0.9)).is_none());
    }

    #[test]
    fn q_limits() {
        let p = Params::rule1(1.5, 2.0, 0.0, -0.01, GKind::Cosine);
        let q0 = filippov_q(1e-9, &p).unwrap();
        assert!((q0 - (1.0 - p.s * p.s) / (p.a + p.b * p.s)).abs() < 1e-12);
        let q = filippov_q(0.1, &p).unwrap();
        assert!(q > 0.0 && q < 1.0);
        let th = grazing_off(-0.3).unwrap();
        let p = Params::rule1(1.5, 2.0, 0.0, -0.3, GKind::One);
        assert!(filippov_q_raw(th, &p).abs() < 1e-12);
    }

    #[test]
    fn q_solves_tangency_numerically() {
        // Independent check: find the weight making the combined field tangent
        // to Σ1 by bisection.
        let p = Params::rule1(1.5, 2.0, 0.0, -0.01, GKind::Cosine);
        for &th in &[0.05, 0.1, 0.2] {
            let x = State::new(th, p.s * th);
            let hdot = |q: f64| {
                let f = off_field(x) * (1.0 - q) + on_field(x, x, &p) * q;
                f.phi - p.s * f.theta
            };
            let q_num = bisect(hdot, 0.0, 1.0, 1e-15).unwrap();
            assert!((q_num - filippov_q(th, &p).unwrap()).abs() < 1e-12);
        }
        let p = Params::rule1(0.8, 2.0, 0.0, -0.05, GKind::One);
        let region = sliding_region(&p).unwrap();
        let th = 0.5 * (region.lo + region.hi);
        let x = State::new(th, p.s * th);
        let hdot = |q: f64| {
            let f = off_field(x) * (1.0 - q) + on_field(x, x, &p) * q;
            f.phi - p.s * f.theta
        };
        let q_num = bisect(hdot, 0.0, 1.0, 1e-15).unwrap();
        assert!((q_num - filippov_q(th, &p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sliding_solution_examples() {
        assert_eq!(sliding_solution(0.3, 0.0, 5.0), State::new(0.3, 0.0));
        let x = sliding_solution(0.4, -0.3, 2f64.ln() / 0.3);
        assert!((x.theta - 0.2).abs() < 1e-15 && (x.phi + 0.06).abs() < 1e-15);
        assert!(sliding_solution(0.4, -0.3, 500.0).norm() < 1e-60);
    }

    #[test]
    fn sliding_velocity_is_tangent() {
        let p = Params::rule1(1.5, 2.0, 0.0, -0.2, GKind::Cosine);
        let r = sliding_region(&p).unwrap();
        for k in 1..10 {
            let th = r.lo + (r.hi - r.lo) * k as f64 / 10.0;
            let f = sliding_field(State::new(th, p.s * th), &p);
            assert!((f.phi - p.s * f.theta).abs() < 1e-10);
        }
    }

    #[test]
    fn simulated_sliding_follows_exponential() {
        let p = Params::rule1(2.0, 2.0, 0.0, -0.3, GKind::Cosine);
        assert!(sliding_region(&p).unwrap().contains(0.2));
        let th0 = 0.2;
        let run = simulate_zero_delay(State::new(th0, p.s * th0), &p, 5.0, 1e-3).unwrap();
        assert_eq!(run.events[0].kind, ZeroDelayEventKind::EnterSliding);
        for &(t, x, m) in &run.samples {
            assert_eq!(m, Mode::Sliding);
            let e = sliding_solution(th0, p.s, t);
            assert!((x.theta - e.theta).abs() < 1e-8 && (x.phi - e.phi).abs() < 1e-8);
        }
    }

    #[test]
    fn origin_stays_put() {
        let p = Params::rule1(1.5, 2.0, 0.0, -0.3, GKind::Cosine);
        let run = simulate_zero_delay(State::ORIGIN, &p, 1.0, 1e-3).unwrap();
        assert_eq!(run.events[0].kind, ZeroDelayEventKind::ReachEquilibrium);
        assert_eq!(run.final_state(), State::ORIGIN);
    }

    #[test]
    fn weak_cosine_control_diverges() {
        let p = Params::rule1(0.8, 0.5, 0.0, -0.3, GKind::Cosine);
        let run = simulate_zero_delay(State::new(0.01, 0.05), &p, 50.0, 1e-3).unwrap();
        assert!(run.diverged);
    }
}
