//! Post-processing of engine runs: oscillation tags, one-oscillation return
//! maps and short OFF windows.

use super::sim::{EngineError, Event, EventKind, SimConfig, Simulator, Termination};
use crate::model::{hamiltonian, Manifold, Params, Rule, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OscillationTag {
    /// Excursion that leaves and returns through `Σ1`.
    Zigzag,
    /// Half turn about the origin, returning through `Σ2`.
    SpiralHalf,
    /// Never left the ON region again.
    TrappedON,
    /// Switched off exactly on the stable manifold of the origin.
    WsAsymptotic,
}

fn on_entry(ev: &Event) -> Option<Manifold> {
    match ev.kind {
        EventKind::ManifoldCross { manifold, on_side: true } => Some(manifold),
        _ => None,
    }
}

fn off_entry(ev: &Event) -> bool {
    matches!(ev.kind, EventKind::ManifoldCross { on_side: false, .. })
}

/// Tags every span between consecutive entries into an ON region. A span is
/// named after the manifold through which the orbit re-enters the ON region,
/// which is where the stable manifold of the origin routes it.
pub fn classify_oscillation(events: &[Event], p: &Params) -> Vec<OscillationTag> {
    debug_assert_eq!(p.rule, Rule::Rule1);
    let entries: Vec<usize> = events.iter().enumerate().filter(|(_, e)| on_entry(e).is_some()).map(|(i, _)| i).collect();
    let mut tags = Vec::new();
    for (n, &i) in entries.iter().enumerate() {
        let end = entries.get(n + 1).copied();
        let span = &events[i + 1..end.unwrap_or(events.len())];
        let ws = span.iter().any(|e| e.kind == EventKind::WsCoincidence);
        match end {
            Some(j) => {
                if ws {
                    tags.push(OscillationTag::WsAsymptotic);
                } else if on_entry(&events[j]) == Some(Manifold::Sigma1) {
                    tags.push(OscillationTag::Zigzag);
                } else {
                    tags.push(OscillationTag::SpiralHalf);
                }
            }
            None => {
                if !span.iter().any(off_entry) {
                    tags.push(OscillationTag::TrappedON);
                } else if ws {
                    tags.push(OscillationTag::WsAsymptotic);
                }
            }
        }
    }
    tags
}

/// Every OFF-region residence shorter than the delay, as
/// `(residence time, θ where the orbit leaves the OFF region)`.
pub fn detect_short_off(events: &[Event], p: &Params) -> Vec<(f64, f64)> {
    if p.tau <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut entered: Option<f64> = None;
    for ev in events {
        match ev.kind {
            EventKind::ManifoldCross { on_side: false, .. } => entered = Some(ev.t),
            EventKind::ManifoldCross { on_side: true, .. } => {
                if let Some(t_in) = entered.take() {
                    let dur = ev.t - t_in;
                    if dur < p.tau {
                        out.push((dur, ev.state.theta));
                    }
                }
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReturnMapError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("the return map needs rule {0}")]
    WrongRule(Rule),
    #[error("starting amplitude must be positive, got {0}")]
    BadAmplitude(f64),
    #[error("orbit left the OFF region through {0} instead of completing a zigzag")]
    NotZigzag(Manifold),
    #[error("orbit switched off on the stable manifold of the origin")]
    OnStableManifold,
    #[error("orbit stayed in the ON region")]
    TrappedOn,
    #[error("orbit diverged before returning")]
    Diverged,
    #[error("no return within the time limit")]
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnOptions {
    pub dt: f64,
    pub t_limit: f64,
}

impl ReturnOptions {
    pub fn for_params(p: &Params) -> Self {
        let dt = if p.tau > 0.0 { (p.tau / 20.0).min(1e-3) } else { 1e-3 };
        ReturnOptions { dt, t_limit: 60.0 }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }
}

/// One pass of an oscillation started on a switching manifold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillationReturn {
    /// State when the control first switches on.
    pub first_switch: State,
    /// State when the control next switches off.
    pub second_switch: State,
    /// `H` at the second switching point minus `H` at the first.
    pub delta_h: f64,
    /// Time at which the orbit re-enters the OFF region.
    pub t_int: f64,
    /// Time between the OFF entry and the first re-entry into an ON region.
    /// Shorter than the delay when the orbit dips out of the OFF region before
    /// the control has switched off.
    pub t_off: f64,
    /// Time of the return to the manifold.
    pub t_return: f64,
    /// State at the return.
    pub return_state: State,
    /// Manifold of the return.
    pub return_manifold: Manifold,
    /// Extremes of θ over the pass, sampled at step ends.
    pub theta_max: f64,
    pub theta_min: f64,
}

/// Follows `x0` through one ON excursion and the OFF stretch after it, up to
/// the next entry into an ON region that happens after the control has
/// switched off again.
pub fn one_oscillation(x0: State, p: &Params, cfg: SimConfig) -> Result<OscillationReturn, ReturnMapError> {
    let mut sim = Simulator::new(x0, p, cfg)?;
    let mut first_on: Option<State> = None;
    let mut t_int: Option<f64> = None;
    let mut second_off: Option<State> = None;
    let mut ret: Option<Event> = None;
    let mut first_reentry: Option<f64> = None;
    let mut ws = false;
    let (mut th_max, mut th_min) = (x0.theta, x0.theta);
    let mut seen = 0;
    let mut term = None;
    'outer: loop {
        while seen < sim.events().len() {
            let ev = sim.events()[seen];
            seen += 1;
            match ev.kind {
                EventKind::ControlOn if first_on.is_none() => first_on = Some(ev.state),
                EventKind::ManifoldCross { on_side: false, .. } if t_int.is_none() => t_int = Some(ev.t),
                EventKind::ControlOff if t_int.is_some() && second_off.is_none() => second_off = Some(ev.state),
                EventKind::WsCoincidence => ws = true,
                EventKind::ManifoldCross { on_side: true, .. } if ev.t > 0.0 && t_int.is_some() => {
                    first_reentry.get_or_insert(ev.t);
                    ret = Some(ev);
                    if second_off.is_some() {
                        term = Some(Termination::Stopped);
                        break 'outer;
                    }
                }
                _ => {}
            }
        }
        if term.is_some() {
            break;
        }
        let more = sim.step();
        let x = sim.state();
        th_max = th_max.max(x.theta);
        th_min = th_min.min(x.theta);
        if !more {
            term = sim.termination();
        }
    }
    let term = term.unwrap();
    if ws {
        return Err(ReturnMapError::OnStableManifold);
    }
    match (term, ret) {
        (Termination::Stopped, Some(ev)) => {
            let (manifold, _) = ev.kind.crossing().unwrap();
            let first = first_on.expect("control switched on before returning");
            let second = second_off.unwrap();
            let t_int = t_int.unwrap();
            Ok(OscillationReturn {
                first_switch: first,
                second_switch: second,
                delta_h: hamiltonian(second) - hamiltonian(first),
                t_int,
                t_off: first_reentry.unwrap_or(ev.t) - t_int,
                t_return: ev.t,
                return_state: ev.state,
                return_manifold: manifold,
                theta_max: th_max.max(ev.state.theta),
                theta_min: th_min.min(ev.state.theta),
            })
        }
        (Termination::ConvergedOrigin, _) => Err(ReturnMapError::OnStableManifold),
        (Termination::Diverged, _) if t_int.is_none() => Err(ReturnMapError::TrappedOn),
        (Termination::Diverged, _) => Err(ReturnMapError::Diverged),
        (_, _) if t_int.is_none() => Err(ReturnMapError::TrappedOn),
        _ => Err(ReturnMapError::Timeout),
    }
}

fn run_one_oscillation(x0: State, p: &Params, opts: ReturnOptions) -> Result<OscillationReturn, ReturnMapError> {
    one_oscillation(x0, p, SimConfig::new(opts.t_limit, opts.dt).lean())
}

/// Result of one zigzag from `(θ0, sθ0)` back to `Σ1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZigzagReturn {
    pub theta0: f64,
    /// Exit ordinate on `Σ1` after one zigzag.
    pub theta3: f64,
    pub delta_h: f64,
    pub t_int: f64,
    pub t_off: f64,
    pub theta1: f64,
    pub phi1: f64,
    pub theta2: f64,
    pub phi2: f64,
    pub period: f64,
}

/// Follows the orbit of `(θ0, sθ0)` through exactly one zigzag.
pub fn zigzag_return_map(theta0: f64, p: &Params) -> Result<ZigzagReturn, ReturnMapError> {
    zigzag_return_map_with(theta0, p, ReturnOptions::for_params(p))
}

pub fn zigzag_return_map_with(theta0: f64, p: &Params, opts: ReturnOptions) -> Result<ZigzagReturn, ReturnMapError> {
    if p.rule != Rule::Rule1 {
        return Err(ReturnMapError::WrongRule(Rule::Rule1));
    }
    if !(theta0 > 0.0) {
        return Err(ReturnMapError::BadAmplitude(theta0));
    }
    let r = run_one_oscillation(State::new(theta0, p.s * theta0), p, opts)?;
    if r.return_manifold != Manifold::Sigma1 {
        return Err(ReturnMapError::NotZigzag(r.return_manifold));
    }
    Ok(ZigzagReturn {
        theta0,
        theta3: r.return_state.theta,
        delta_h: r.delta_h,
        t_int: r.t_int,
        t_off: r.t_off,
        theta1: r.first_switch.theta,
        phi1: r.first_switch.phi,
        theta2: r.second_switch.theta,
        phi2: r.second_switch.phi,
        period: r.t_return,
    })
}

/// Result of one rule-2 oscillation started at `(σ, φ0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeadZoneReturn {
    pub phi0: f64,
    /// Velocity at the next entry into an ON region, reflected to `Σ3` if the
    /// orbit crossed to the other side.
    pub phi_next: f64,
    /// True if the orbit re-entered through `Σ4`.
    pub crossed: bool,
    pub delta_h: f64,
    pub t_int: f64,
    pub t_off: f64,
    pub period: f64,
}

/// Follows the orbit of `(σ, φ0)`, `φ0 > 0`, until it next enters an ON region.
pub fn dead_zone_return_map(phi0: f64, p: &Params) -> Result<DeadZoneReturn, ReturnMapError> {
    dead_zone_return_map_with(phi0, p, ReturnOptions::for_params(p))
}

pub fn dead_zone_return_map_with(phi0: f64, p: &Params, opts: ReturnOptions) -> Result<DeadZoneReturn, ReturnMapError> {
    if p.rule != Rule::Rule2 {
        return Err(ReturnMapError::WrongRule(Rule::Rule2));
    }
    if !(phi0 > 0.0) {
        return Err(ReturnMapError::BadAmplitude(phi0));
    }
    let r = run_one_oscillation(State::new(p.sigma, phi0), p, opts)?;
    let crossed = r.return_manifold == Manifold::Sigma4;
    Ok(DeadZoneReturn {
        phi0,
        phi_next: if crossed { -r.return_state.phi } else { r.return_state.phi },
        crossed,
        delta_h: r.delta_h,
        t_int: r.t_int,
        t_off: r.t_off,
        period: r.t_return,
    })
}
