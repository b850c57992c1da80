//! Model types and vector fields of the switched pendulum.
//!
//! The OFF system is the free inverted pendulum `θ' = φ, φ' = sin θ`. The ON
//! system adds delayed PD feedback, `φ' = sin θ − (a θ_d + b φ_d) G(θ)`, where
//! `(θ_d, φ_d)` is the state one delay earlier. Which system is active is
//! decided by a switching rule evaluated on the delayed state.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::roots;

/// Choice of the force coupling `G(θ)`: `1` for an applied torque,
/// `cos θ` for a cart-driven pivot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GKind {
    One,
    Cosine,
}

impl GKind {
    #[inline]
    pub fn eval(self, theta: f64) -> f64 {
        match self {
            GKind::One => 1.0,
            GKind::Cosine => theta.cos(),
        }
    }

    #[inline]
    pub fn derivative(self, theta: f64) -> f64 {
        match self {
            GKind::One => 0.0,
            GKind::Cosine => -theta.sin(),
        }
    }
}

impl fmt::Display for GKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GKind::One => write!(f, "one"),
            GKind::Cosine => write!(f, "cos"),
        }
    }
}

/// Switching rule deciding when the control is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    /// ON iff `θ_d (φ_d − s θ_d) > 0`.
    Rule1,
    /// ON iff `|θ_d| > σ`.
    Rule2,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Rule1 => write!(f, "1"),
            Rule::Rule2 => write!(f, "2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("delay tau must be finite and non-negative, got {0}")]
    NegativeDelay(f64),
    #[error("rule 1 requires s <= 0, got s = {0}")]
    PositiveSlope(f64),
    #[error("rule 2 requires sigma > 0, got sigma = {0}")]
    NonPositiveSigma(f64),
    #[error("parameter {name} is not finite")]
    NotFinite { name: &'static str },
}

/// All model constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Params {
    /// Position gain.
    pub a: f64,
    /// Velocity gain.
    pub b: f64,
    /// Delay in dimensionless time.
    pub tau: f64,
    /// Slope of the rule-1 manifold `φ = s θ`.
    pub s: f64,
    /// Half-width of the rule-2 dead zone.
    pub sigma: f64,
    pub g: GKind,
    pub rule: Rule,
}

impl Params {
    pub fn rule1(a: f64, b: f64, tau: f64, s: f64, g: GKind) -> Self {
        Params { a, b, tau, s, sigma: 0.0, g, rule: Rule::Rule1 }
    }

    pub fn rule2(a: f64, b: f64, tau: f64, sigma: f64, g: GKind) -> Self {
        Params { a, b, tau, s: 0.0, sigma, g, rule: Rule::Rule2 }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_a(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    pub fn with_g(mut self, g: GKind) -> Self {
        self.g = g;
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, v) in [("a", self.a), ("b", self.b), ("tau", self.tau), ("s", self.s), ("sigma", self.sigma)] {
            if !v.is_finite() {
                return Err(ParamError::NotFinite { name });
            }
        }
        if self.tau < 0.0 {
            return Err(ParamError::NegativeDelay(self.tau));
        }
        match self.rule {
            Rule::Rule1 if self.s > 0.0 => Err(ParamError::PositiveSlope(self.s)),
            Rule::Rule2 if self.sigma <= 0.0 => Err(ParamError::NonPositiveSigma(self.sigma)),
            _ => Ok(()),
        }
    }

    /// Switching manifolds belonging to the configured rule, in event priority order.
    pub fn manifolds(&self) -> &'static [Manifold] {
        match self.rule {
            Rule::Rule1 => &[Manifold::Sigma1, Manifold::Sigma2],
            Rule::Rule2 => &[Manifold::Sigma3, Manifold::Sigma4],
        }
    }
}

/// A point of the `(θ, φ)` phase plane, or a velocity in it.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct State {
    pub theta: f64,
    pub phi: f64,
}

impl State {
    pub const ORIGIN: State = State { theta: 0.0, phi: 0.0 };

    #[inline]
    pub const fn new(theta: f64, phi: f64) -> Self {
        State { theta, phi }
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.theta.hypot(self.phi)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.phi.is_finite()
    }
}

impl Add for State {
    type Output = State;
    #[inline]
    fn add(self, o: State) -> State {
        State::new(self.theta + o.theta, self.phi + o.phi)
    }
}

impl Sub for State {
    type Output = State;
    #[inline]
    fn sub(self, o: State) -> State {
        State::new(self.theta - o.theta, self.phi - o.phi)
    }
}

impl Mul<f64> for State {
    type Output = State;
    #[inline]
    fn mul(self, k: f64) -> State {
        State::new(self.theta * k, self.phi * k)
    }
}

impl Neg for State {
    type Output = State;
    #[inline]
    fn neg(self) -> State {
        State::new(-self.theta, -self.phi)
    }
}

/// The four switching manifolds: `Σ1: φ = sθ`, `Σ2: θ = 0`, `Σ3: θ = σ`, `Σ4: θ = −σ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Manifold {
    Sigma1,
    Sigma2,
    Sigma3,
    Sigma4,
}

impl Manifold {
    pub fn index(self) -> usize {
        match self {
            Manifold::Sigma1 => 1,
            Manifold::Sigma2 => 2,
            Manifold::Sigma3 => 3,
            Manifold::Sigma4 => 4,
        }
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sigma{}", self.index())
    }
}

/// Defining function `h` of a manifold: zero on it, sign gives the side.
#[inline]
pub fn manifold_value(x: State, m: Manifold, p: &Params) -> f64 {
    match m {
        Manifold::Sigma1 => x.phi - p.s * x.theta,
        Manifold::Sigma2 => x.theta,
        Manifold::Sigma3 => x.theta - p.sigma,
        Manifold::Sigma4 => x.theta + p.sigma,
    }
}

/// Gradient of `h` with respect to `(θ, φ)`.
#[inline]
pub fn manifold_gradient(m: Manifold, p: &Params) -> State {
    match m {
        Manifold::Sigma1 => State::new(-p.s, 1.0),
        _ => State::new(1.0, 0.0),
    }
}

/// Control decision from the signs of the rule's manifold functions
/// (`signs[0]` for Σ1/Σ3, `signs[1]` for Σ2/Σ4). Zero signs mean "on the
/// manifold", which counts as OFF.
#[inline]
pub fn decision_from_signs(rule: Rule, signs: [i8; 2]) -> bool {
    match rule {
        Rule::Rule1 => (signs[0] as i32) * (signs[1] as i32) > 0,
        Rule::Rule2 => signs[0] > 0 || signs[1] < 0,
    }
}

/// Whether the control is applied given the delayed state. Boundary points are OFF.
#[inline]
pub fn control_active(x_delayed: State, p: &Params) -> bool {
    match p.rule {
        Rule::Rule1 => x_delayed.theta * (x_delayed.phi - p.s * x_delayed.theta) > 0.0,
        Rule::Rule2 => x_delayed.theta.abs() > p.sigma,
    }
}

/// Free pendulum field `(φ, sin θ)`.
#[inline]
pub fn off_field(x: State) -> State {
    State::new(x.phi, x.theta.sin())
}

/// Controlled field `(φ, sin θ − (a θ_d + b φ_d) G(θ))`.
#[inline]
pub fn on_field(x: State, x_delayed: State, p: &Params) -> State {
    let force = p.a * x_delayed.theta + p.b * x_delayed.phi;
    State::new(x.phi, x.theta.sin() - force * p.g.eval(x.theta))
}

/// Which equations of motion are integrated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Dynamics {
    /// Full nonlinear pendulum.
    #[default]
    Nonlinear,
    /// Linearisation about the upright position: `φ' = θ − u (a θ_d + b φ_d)`.
    /// Valid for either choice of `G`.
    Linearized,
}

impl Dynamics {
    #[inline]
    pub fn off(self, x: State) -> State {
        match self {
            Dynamics::Nonlinear => off_field(x),
            Dynamics::Linearized => State::new(x.phi, x.theta),
        }
    }

    #[inline]
    pub fn on(self, x: State, x_delayed: State, p: &Params) -> State {
        match self {
            Dynamics::Nonlinear => on_field(x, x_delayed, p),
            Dynamics::Linearized => State::new(x.phi, x.theta - (p.a * x_delayed.theta + p.b * x_delayed.phi)),
        }
    }

    /// Energy of the OFF system (conserved along OFF arcs).
    #[inline]
    pub fn energy(self, x: State) -> f64 {
        match self {
            Dynamics::Nonlinear => hamiltonian(x),
            Dynamics::Linearized => 0.5 * x.phi * x.phi + 1.0 - 0.5 * x.theta * x.theta,
        }
    }
}

/// `H = φ²/2 + cos θ`, conserved by the OFF system. The stable manifold of
/// the origin lies on `H = 1`.
#[inline]
pub fn hamiltonian(x: State) -> f64 {
    0.5 * x.phi * x.phi + x.theta.cos()
}

/// Positive equilibria `θ` of the instantaneous ON system, i.e. roots of
/// `sin θ = a θ G(θ)` in `(0, π]`, in increasing order.
pub fn on_equilibria(p: &Params) -> Vec<f64> {
    if p.a <= 0.0 {
        return Vec::new();
    }
    // Dividing by θ removes the trivial root at the origin.
    let f = |th: f64| th.sin() / th - p.a * p.g.eval(th);
    let mut roots = Vec::new();
    let brackets = [(1e-9, FRAC_PI_2), (FRAC_PI_2, PI)];
    for (lo, hi) in brackets {
        let n = 64;
        let mut x_prev = lo;
        let mut f_prev = f(lo);
        for i in 1..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            let fx = f(x);
            if fx == 0.0 {
                if roots.last().is_none_or(|r: &f64| (r - x).abs() > 1e-9) {
                    roots.push(x);
                }
            } else if f_prev != 0.0 && fx.signum() != f_prev.signum() {
                if let Some(r) = roots::bisect(f, x_prev, x, 1e-12) {
                    if roots.last().is_none_or(|q: &f64| (q - r).abs() > 1e-9) {
                        roots.push(r);
                    }
                }
            }
            x_prev = x;
            f_prev = fx;
        }
    }
    roots
}
