use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use super::history::{History, HistorySegment};
use crate::model::{decision_from_signs, manifold_gradient, manifold_value, Dynamics, Manifold, ParamError, Params, State};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("step size dt must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("t_max must be finite and non-negative, got {0}")]
    BadHorizon(f64),
    #[error("initial state ({theta}, {phi}) lies on {manifold} but the OFF field points away from the ON region")]
    InvalidStart { theta: f64, phi: f64, manifold: Manifold },
    #[error("initial state is not finite")]
    NonFiniteStart,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EventKind {
    /// Crossing of a switching manifold; `on_side` is the control decision
    /// for the region just entered.
    ManifoldCross { manifold: Manifold, on_side: bool },
    ControlOn,
    ControlOff,
    /// Exit from an OFF region less than one delay after entering it.
    ShortOffWindow,
    /// Control switched off exactly on the stable manifold of the origin.
    WsCoincidence,
    Diverged,
    ConvergedOrigin,
}

impl EventKind {
    pub fn label(&self) -> String {
        match self {
            EventKind::ManifoldCross { manifold, on_side } => {
                format!("cross_{manifold}_{}", if *on_side { "into_on" } else { "into_off" })
            }
            EventKind::ControlOn => "control_on".into(),
            EventKind::ControlOff => "control_off".into(),
            EventKind::ShortOffWindow => "short_off".into(),
            EventKind::WsCoincidence => "ws_coincidence".into(),
            EventKind::Diverged => "diverged".into(),
            EventKind::ConvergedOrigin => "converged_origin".into(),
        }
    }

    pub fn crossing(&self) -> Option<(Manifold, bool)> {
        match *self {
            EventKind::ManifoldCross { manifold, on_side } => Some((manifold, on_side)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub state: State,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={:.6} {} ({:.6}, {:.6})", self.t, self.kind.label(), self.state.theta, self.state.phi)
    }
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ReachedTMax,
    Diverged,
    ConvergedOrigin,
    /// A caller-supplied stop condition fired.
    Stopped,
    /// With zero delay the orbit started to chatter on a sliding segment; use
    /// the Filippov simulator for that regime.
    ZeroDelaySliding,
}

/// What the system did before `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum InitialHistory {
    /// The orbit has been in an OFF region for at least one delay, so the
    /// control is off on `[0, τ]` regardless of the earlier path.
    #[default]
    ConstantOff,
    /// The orbit leaves an equilibrium of the ON system along an eigen
    /// direction, `x(t) = equilibrium + direction·e^{rate t}` for `t ≤ 0`,
    /// with the control already applied.
    Departure { equilibrium: State, direction: State, rate: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub t_max: f64,
    pub dt: f64,
    pub dynamics: Dynamics,
    /// Stop with `Diverged` once `|θ|` exceeds this.
    pub theta_limit: Option<f64>,
    /// Stop with `Diverged` once `‖(θ, φ)‖` exceeds this.
    pub norm_limit: Option<f64>,
    pub origin_tol: f64,
    pub event_tol: f64,
    /// Keep the whole trajectory; otherwise only the part needed by the delay.
    pub keep_history: bool,
    pub initial: InitialHistory,
}

impl SimConfig {
    pub fn new(t_max: f64, dt: f64) -> Self {
        SimConfig {
            t_max,
            dt,
            dynamics: Dynamics::Nonlinear,
            theta_limit: Some(FRAC_PI_2),
            norm_limit: None,
            origin_tol: 1e-9,
            event_tol: 1e-12,
            keep_history: true,
            initial: InitialHistory::ConstantOff,
        }
    }

    pub fn linearized(mut self) -> Self {
        self.dynamics = Dynamics::Linearized;
        self.theta_limit = None;
        self.norm_limit = Some(1e8);
        self
    }

    pub fn lean(mut self) -> Self {
        self.keep_history = false;
        self
    }

    pub fn with_initial(mut self, initial: InitialHistory) -> Self {
        self.initial = initial;
        self
    }
}

/// Result of a finished run.
#[derive(Clone, Debug)]
pub struct SimResult {
    pub segments: Vec<HistorySegment>,
    pub events: Vec<Event>,
    pub termination: Termination,
    pub final_time: f64,
    pub final_state: State,
}

impl SimResult {
    /// Samples the dense trajectory every `stride` time units (plus the end point).
    pub fn sample(&self, stride: f64) -> Vec<(f64, State, bool)> {
        let mut out = Vec::new();
        if self.segments.is_empty() {
            return out;
        }
        let mut next = self.segments[0].t_lo;
        for seg in &self.segments {
            while next <= seg.t_hi {
                out.push((next, seg.eval(next), seg.control_on));
                if stride <= 0.0 {
                    return out;
                }
                next += stride;
            }
        }
        let last = self.segments.last().unwrap();
        if out.last().is_none_or(|s| s.0 < last.t_hi) {
            out.push((last.t_hi, last.x_hi, last.control_on));
        }
        out
    }

    /// Dense state at time `t`.
    pub fn state_at(&self, t: f64) -> Option<State> {
        if self.segments.is_empty() {
            return None;
        }
        let idx = self.segments.partition_point(|s| s.t_hi < t).min(self.segments.len() - 1);
        Some(self.segments[idx].eval(t))
    }
}

/// Sign of `v` as `-1/0/1`.
#[inline]
fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

const SUBSAMPLES: usize = 4;
const WS_MIN_NORM: f64 = 1e-3;
const MIN_REFINED_STEP: f64 = 1e-9;

/// Method-of-steps integrator for the delayed switched system.
///
/// Between control toggles the active system is an ODE (OFF) or a DDE whose
/// delayed argument is read from the stored dense history (ON). Manifold
/// crossings are located on the dense output and schedule a toggle one delay
/// later; toggle times and their delay-shifted images are forced step ends.
pub struct Simulator {
    p: Params,
    cfg: SimConfig,
    history: History,
    t: f64,
    x: State,
    control_on: bool,
    decision: bool,
    signs: [i8; 2],
    pending: VecDeque<(f64, bool)>,
    breaks: Vec<f64>,
    events: Vec<Event>,
    last_off_entry: Option<f64>,
    last_cross: [f64; 2],
    x0: State,
    done: Option<Termination>,
}

impl Simulator {
    pub fn new(x0: State, p: &Params, cfg: SimConfig) -> Result<Self, EngineError> {
        p.validate()?;
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(EngineError::BadStep(cfg.dt));
        }
        if !(cfg.t_max >= 0.0 && cfg.t_max.is_finite()) {
            return Err(EngineError::BadHorizon(cfg.t_max));
        }
        if !x0.is_finite() {
            return Err(EngineError::NonFiniteStart);
        }
        let manifolds = p.manifolds();
        let mut sim = Simulator {
            p: *p,
            history: History::default(),
            t: 0.0,
            x: x0,
            control_on: false,
            decision: false,
            signs: [0; 2],
            pending: VecDeque::new(),
            breaks: Vec::new(),
            events: Vec::new(),
            last_off_entry: None,
            last_cross: [f64::NEG_INFINITY; 2],
            x0,
            done: None,
            cfg,
        };

        match sim.cfg.initial {
            InitialHistory::ConstantOff => {
                // On a manifold the side is fixed by where the OFF field carries
                // the orbit next.
                let v = sim.cfg.dynamics.off(x0);
                let mut started_on = None;
                for (k, &m) in manifolds.iter().enumerate() {
                    let h = manifold_value(x0, m, p);
                    sim.signs[k] = if h != 0.0 {
                        sgn(h)
                    } else {
                        let g = manifold_gradient(m, p);
                        let dh = g.theta * v.theta + g.phi * v.phi;
                        if dh != 0.0 && started_on.is_none() {
                            started_on = Some(m);
                        }
                        sgn(dh)
                    };
                }
                sim.decision = decision_from_signs(p.rule, sim.signs);
                if let Some(m) = started_on {
                    if !sim.decision {
                        return Err(EngineError::InvalidStart { theta: x0.theta, phi: x0.phi, manifold: m });
                    }
                    sim.events.push(Event {
                        t: 0.0,
                        kind: EventKind::ManifoldCross { manifold: m, on_side: true },
                        state: x0,
                    });
                }
                if sim.decision {
                    sim.schedule_toggle(0.0, true);
                }
            }
            InitialHistory::Departure { .. } => {
                for (k, &m) in manifolds.iter().enumerate() {
                    sim.signs[k] = sgn(manifold_value(x0, m, p));
                }
                sim.decision = decision_from_signs(p.rule, sim.signs);
                sim.control_on = true;
            }
        }
        if sim.p.tau == 0.0 {
            sim.apply_due_toggles();
        }
        sim.check_termination();
        Ok(sim)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> State {
        self.x
    }

    pub fn control_on(&self) -> bool {
        self.control_on
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn termination(&self) -> Option<Termination> {
        self.done
    }

    pub fn params(&self) -> &Params {
        &self.p
    }

    /// Stored segments (all of them unless the run is lean).
    pub fn segments(&self) -> impl Iterator<Item = &HistorySegment> {
        self.history.segments()
    }

    fn schedule_toggle(&mut self, t_cross: f64, value: bool) {
        let at = t_cross + self.p.tau;
        let pos = self.pending.partition_point(|&(t, _)| t <= at);
        self.pending.insert(pos, (at, value));
    }

    fn add_break(&mut self, t: f64) {
        if t > self.t && t <= self.cfg.t_max {
            let pos = self.breaks.partition_point(|&b| b < t);
            if self.breaks.get(pos) != Some(&t) {
                self.breaks.insert(pos, t);
            }
        }
    }

    fn delayed(&self, t: f64) -> State {
        if self.p.tau == 0.0 {
            unreachable!("zero delay is evaluated with the current state");
        }
        let td = t - self.p.tau;
        match self.history.first_time() {
            Some(t0) if td >= t0 => self.history.lookup(td).unwrap(),
            _ => match self.cfg.initial {
                InitialHistory::ConstantOff => self.history.lookup(td).unwrap_or(self.x0),
                InitialHistory::Departure { equilibrium, direction, rate } => {
                    if td <= 0.0 {
                        equilibrium + direction * (rate * td).exp()
                    } else {
                        self.history.lookup(td).unwrap_or(self.x0)
                    }
                }
            },
        }
    }

    #[inline]
    fn field(&self, t: f64, x: State, on: bool) -> State {
        let dyn_ = self.cfg.dynamics;
        if !on {
            dyn_.off(x)
        } else if self.p.tau == 0.0 {
            dyn_.on(x, x, &self.p)
        } else {
            dyn_.on(x, self.delayed(t), &self.p)
        }
    }

    fn rk4(&self, t: f64, x: State, h: f64) -> State {
        let on = self.control_on;
        let k1 = self.field(t, x, on);
        let k2 = self.field(t + 0.5 * h, x + k1 * (0.5 * h), on);
        let k3 = self.field(t + 0.5 * h, x + k2 * (0.5 * h), on);
        let k4 = self.field(t + h, x + k3 * h, on);
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    fn make_segment(&self, t_hi: f64) -> HistorySegment {
        let h = t_hi - self.t;
        let x_hi = self.rk4(self.t, self.x, h);
        HistorySegment {
            t_lo: self.t,
            t_hi,
            x_lo: self.x,
            x_hi,
            f_lo: self.field(self.t, self.x, self.control_on),
            f_hi: self.field(t_hi, x_hi, self.control_on),
            control_on: self.control_on,
        }
    }

    /// Sign changes of the manifold functions along a candidate segment.
    fn crossings(&self, seg: &HistorySegment) -> Vec<(f64, usize, i8)> {
        let manifolds = self.p.manifolds();
        let mut out = Vec::new();
        for (k, &m) in manifolds.iter().enumerate() {
            let h_at = |t: f64| manifold_value(seg.eval(t), m, &self.p);
            let mut running = self.signs[k];
            let mut t_prev = seg.t_lo;
            for j in 1..=SUBSAMPLES {
                let tj = if j == SUBSAMPLES {
                    seg.t_hi
                } else {
                    seg.t_lo + seg.duration() * j as f64 / SUBSAMPLES as f64
                };
                let sj = if j == SUBSAMPLES { sgn(manifold_value(seg.x_hi, m, &self.p)) } else { sgn(h_at(tj)) };
                if sj != 0 && sj != running {
                    // Bisection for the first point on the new side.
                    let (mut lo, mut hi) = (t_prev, tj);
                    while hi - lo > self.cfg.event_tol {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if sgn(h_at(mid)) == sj {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    out.push((hi, k, sj));
                    running = sj;
                }
                t_prev = tj;
            }
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        out
    }

    fn apply_due_toggles(&mut self) {
        while let Some(&(at, value)) = self.pending.front() {
            if at > self.t {
                break;
            }
            self.pending.pop_front();
            if value == self.control_on {
                continue;
            }
            self.control_on = value;
            let kind = if value { EventKind::ControlOn } else { EventKind::ControlOff };
            self.events.push(Event { t: self.t, kind, state: self.x });
            if self.p.tau > 0.0 {
                for k in 1..=3 {
                    self.add_break(self.t + k as f64 * self.p.tau);
                }
            }
            if !value && !self.decision {
                let x = self.x;
                let on_stable_branch = x.theta * x.phi <= 0.0;
                // Near the origin every state has H close to 1, so the energy
                // test says nothing there.
                let away = x.norm() >= WS_MIN_NORM;
                if on_stable_branch && away && (self.cfg.dynamics.energy(x) - 1.0).abs() <= 1e-9 {
                    self.events.push(Event { t: self.t, kind: EventKind::WsCoincidence, state: x });
                }
            }
        }
    }

    fn process_crossing(&mut self, tc: f64, k: usize, sign: i8, state: State) {
        let m = self.p.manifolds()[k];
        self.signs[k] = sign;
        let new_decision = decision_from_signs(self.p.rule, self.signs);
        self.events.push(Event {
            t: tc,
            kind: EventKind::ManifoldCross { manifold: m, on_side: new_decision },
            state,
        });
        if new_decision != self.decision {
            if new_decision {
                if let Some(t_in) = self.last_off_entry.take() {
                    if self.p.tau > 0.0 && tc - t_in < self.p.tau {
                        self.events.push(Event { t: tc, kind: EventKind::ShortOffWindow, state });
                    }
                }
            } else {
                self.last_off_entry = Some(tc);
            }
            self.decision = new_decision;
            self.schedule_toggle(tc, new_decision);
        }
        self.last_cross[k] = tc;
    }

    fn check_termination(&mut self) {
        if self.done.is_some() {
            return;
        }
        let x = self.x;
        let diverged = !x.is_finite()
            || self.cfg.theta_limit.is_some_and(|lim| x.theta.abs() > lim)
            || self.cfg.norm_limit.is_some_and(|lim| x.norm() > lim);
        if diverged {
            self.events.push(Event { t: self.t, kind: EventKind::Diverged, state: x });
            self.done = Some(Termination::Diverged);
            return;
        }
        let tol = self.cfg.origin_tol;
        if !self.control_on
            && self.pending.iter().all(|&(_, v)| !v)
            && x.norm() < tol
            && (self.cfg.dynamics.energy(x) - 1.0).abs() < tol
        {
            self.events.push(Event { t: self.t, kind: EventKind::ConvergedOrigin, state: x });
            self.done = Some(Termination::ConvergedOrigin);
            return;
        }
        if self.t >= self.cfg.t_max {
            self.done = Some(Termination::ReachedTMax);
        }
    }

    /// Advances by one accepted step. Returns `false` once the run has ended.
    pub fn step(&mut self) -> bool {
        if self.done.is_some() {
            return false;
        }
        let tau = self.p.tau;
        let mut h = if tau > 0.0 { self.cfg.dt.min(tau) } else { self.cfg.dt };
        let mut t_end = self.t + h;
        if let Some(&(at, _)) = self.pending.front() {
            t_end = t_end.min(at);
        }
        if let Some(&b) = self.breaks.first() {
            t_end = t_end.min(b);
        }
        t_end = t_end.min(self.cfg.t_max);
        if t_end <= self.t {
            // Degenerate step: only due toggles remain.
            self.t = t_end.max(self.t);
            self.apply_due_toggles();
            self.check_termination();
            return self.done.is_none();
        }

        let (seg, crossings) = loop {
            let seg = self.make_segment(t_end);
            let crossings = self.crossings(&seg);
            let repeated = (0..2).any(|k| crossings.iter().filter(|c| c.1 == k).count() > 1);
            h = t_end - self.t;
            if repeated && h > MIN_REFINED_STEP {
                t_end = self.t + 0.25 * h;
                continue;
            }
            break (seg, crossings);
        };

        if tau == 0.0 && !crossings.is_empty() {
            // Fields switch at the crossing itself: end the step there, located
            // on the integrator rather than the interpolant so the new state is
            // on the far side of the manifold.
            let (tc_dense, k, sign) = crossings[0];
            if tc_dense - self.last_cross[k] < 1e-10 {
                self.done = Some(Termination::ZeroDelaySliding);
                return false;
            }
            let m = self.p.manifolds()[k];
            let lo_guess = (tc_dense - 1e-3 * h).max(self.t);
            let side = |t: f64, sim: &Self| sgn(manifold_value(sim.rk4(sim.t, sim.x, t - sim.t), m, &sim.p));
            let (mut lo, mut hi) = if side(lo_guess, self) != sign { (lo_guess, seg.t_hi) } else { (self.t, seg.t_hi) };
            if side(hi, self) != sign {
                hi = seg.t_hi;
            }
            while hi - lo > self.cfg.event_tol {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if side(mid, self) == sign {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let tc = hi;
            let seg = self.make_segment(tc);
            let state = seg.x_hi;
            self.history.push(seg);
            self.t = tc;
            self.x = state;
            self.process_crossing(tc, k, sign, state);
            self.apply_due_toggles();
        } else {
            for &(tc, k, sign) in &crossings {
                let state = seg.eval(tc);
                self.process_crossing(tc, k, sign, state);
            }
            self.t = seg.t_hi;
            self.x = seg.x_hi;
            self.history.push(seg);
            self.apply_due_toggles();
        }
        while self.breaks.first().is_some_and(|&b| b <= self.t) {
            self.breaks.remove(0);
        }
        if !self.cfg.keep_history {
            let keep_from = self.t - tau - 2.0 * self.cfg.dt;
            self.history.prune_before(keep_from);
        }
        self.check_termination();
        self.done.is_none()
    }

    /// Runs until termination or until `stop` returns true for a newly
    /// recorded event.
    pub fn run_until<F: FnMut(&Event) -> bool>(&mut self, mut stop: F) -> Termination {
        let mut seen = 0;
        loop {
            while seen < self.events.len() {
                let ev = self.events[seen];
                seen += 1;
                if stop(&ev) {
                    self.done = Some(Termination::Stopped);
                    return Termination::Stopped;
                }
            }
            if !self.step() {
                // Events recorded by the final step.
                let mut fired = false;
                while seen < self.events.len() {
                    let ev = self.events[seen];
                    seen += 1;
                    fired |= stop(&ev);
                }
                return if fired { Termination::Stopped } else { self.done.unwrap() };
            }
        }
    }

    pub fn run(&mut self) -> Termination {
        self.run_until(|_| false)
    }

    pub fn finish(self) -> SimResult {
        SimResult {
            termination: self.done.unwrap_or(Termination::Stopped),
            final_time: self.t,
            final_state: self.x,
            events: self.events,
            segments: self.history.into_vec(),
        }
    }
}

/// Simulates from `x0` with the constant-OFF history up to `t_max`.
pub fn simulate(x0: State, p: &Params, t_max: f64, dt: f64) -> Result<SimResult, EngineError> {
    simulate_with(x0, p, SimConfig::new(t_max, dt))
}

pub fn simulate_with(x0: State, p: &Params, cfg: SimConfig) -> Result<SimResult, EngineError> {
    let mut sim = Simulator::new(x0, p, cfg)?;
    sim.run();
    Ok(sim.finish())
}
