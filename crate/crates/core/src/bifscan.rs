//! Numerical location of bifurcations and regimes by shooting with the delay
//! engine. Every locator works on engine runs only; the asymptotic formulas
//! are used at most to centre a search bracket.

use rayon::prelude::*;

use crate::engine::{
    dead_zone_return_map_with, one_oscillation, zigzag_return_map_with, EventKind, InitialHistory,
    OscillationReturn, ReturnMapError, ReturnOptions, SimConfig, Simulator, Termination,
};
use crate::model::{on_equilibria, GKind, Manifold, Params, Rule, State};
use crate::roots::{bisect_predicate, golden_min, newton};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BifKind {
    /// Zigzag orbit born from the origin.
    Dib,
    SaddleNode,
    Homoclinic,
    BoundaryEquilibrium,
    /// Local dead-zone orbit replaced by the symmetric orbit about the origin.
    SymmetricHomoclinic,
    /// OFF residence of the stable zigzag orbit shrinks to the delay.
    TimeEqualsTau,
    /// The bifurcating branch at the DIB changes from stable to unstable.
    CriticalityChange,
    /// Linearised plane: zigzag probe returns to `Σ1` at unit ratio.
    PlaneZigzagUnit,
    /// Linearised plane: zigzag probe switches off on the OFF stable line.
    PlaneZigzagOntoStable,
    /// Linearised plane: spiral probe returns to `Σ2` at unit ratio.
    PlaneSpiralUnit,
    /// Linearised plane: spiral probe switches off on the OFF stable line.
    PlaneSpiralOntoStable,
}

impl BifKind {
    pub fn label(self) -> &'static str {
        match self {
            BifKind::Dib => "DIB",
            BifKind::SaddleNode => "SN",
            BifKind::Homoclinic => "HC",
            BifKind::BoundaryEquilibrium => "BEB",
            BifKind::SymmetricHomoclinic => "SHC",
            BifKind::TimeEqualsTau => "TOFF_EQ_TAU",
            BifKind::CriticalityChange => "CRIT",
            BifKind::PlaneZigzagUnit => "ZIGZAG_UNIT",
            BifKind::PlaneZigzagOntoStable => "ZIGZAG_WS",
            BifKind::PlaneSpiralUnit => "SPIRAL_UNIT",
            BifKind::PlaneSpiralOntoStable => "SPIRAL_WS",
        }
    }
}

/// A located bifurcation. `witness` is a kind-specific diagnostic (orbit
/// amplitude, saddle position, probe disagreement); `residual` is what the
/// locator drove to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BifPoint {
    pub kind: BifKind,
    pub a: f64,
    pub b: f64,
    pub tau: f64,
    /// `s` under rule 1, `σ` under rule 2.
    pub s_or_sigma: f64,
    pub witness: f64,
    pub residual: f64,
}

impl BifPoint {
    fn at(kind: BifKind, p: &Params, witness: f64, residual: f64) -> Self {
        let s_or_sigma = match p.rule {
            Rule::Rule1 => p.s,
            Rule::Rule2 => p.sigma,
        };
        BifPoint { kind, a: p.a, b: p.b, tau: p.tau, s_or_sigma, witness, residual }
    }
}

/// Probe amplitudes for the small-amplitude indicator.
pub const DIB_PROBES: [f64; 2] = [1e-3, 1e-4];

const PARAM_TOL: f64 = 1e-11;

/// `θ3/θ0 − 1` after one zigzag from `(θ0, sθ0)`: negative when small orbits
/// zigzag in.
pub fn dib_indicator(p: &Params, theta0: f64) -> Option<f64> {
    zigzag_return_map_with(theta0, p, ReturnOptions::for_params(p)).ok().map(|r| r.theta3 / theta0 - 1.0)
}

fn sign_bracket<F: Fn(f64) -> Option<f64> + Sync>(f: &F, lo: f64, hi: f64, n: usize) -> Option<(f64, f64)> {
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let fs: Vec<Option<f64>> = xs.par_iter().map(|&x| f(x)).collect();
    (0..n).find_map(|i| match (fs[i], fs[i + 1]) {
        (Some(u), Some(v)) if u != 0.0 && u.signum() != v.signum() => Some((xs[i], xs[i + 1])),
        _ => None,
    })
}

/// Bisects a sign change of `f` on `[lo, hi]`. Gives up if `f` is undefined
/// somewhere inside.
fn refine_sign<F: Fn(f64) -> Option<f64>>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let s_lo = f(lo)?.signum();
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?;
        if v == 0.0 {
            return Some(mid);
        }
        if v.signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn locate_dib_along<F>(set: F, lo: f64, hi: f64, kind_param: &dyn Fn(f64) -> Params) -> Option<BifPoint>
where
    F: Fn(f64, f64) -> Option<f64> + Sync,
{
    let coarse = |x: f64| set(x, DIB_PROBES[0]);
    let (l, h) = sign_bracket(&coarse, lo, hi, 48)?;
    let x3 = refine_sign(&coarse, l, h, PARAM_TOL)?;
    let fine = |x: f64| set(x, DIB_PROBES[1]);
    let pad = 1e-2 * (h - l).max(1e-6 * x3.abs());
    let (l4, h4) = sign_bracket(&fine, (x3 - pad).max(lo), (x3 + pad).min(hi), 8).or_else(|| sign_bracket(&fine, lo, hi, 48))?;
    let x4 = refine_sign(&fine, l4, h4, PARAM_TOL)?;
    let p = kind_param(x4);
    let residual = fine(x4).map_or(f64::NAN, f64::abs);
    Some(BifPoint::at(BifKind::Dib, &p, ((x3 - x4) / x4).abs(), residual))
}

/// Delay at which small zigzag orbits turn from inward to outward, searched on
/// `[tau_lo, tau_hi]` with the other parameters of `p` fixed.
pub fn find_dib(p: &Params, tau_lo: f64, tau_hi: f64) -> Option<BifPoint> {
    if p.rule != Rule::Rule1 {
        return None;
    }
    let p = *p;
    locate_dib_along(move |tau, th| dib_indicator(&p.with_tau(tau), th), tau_lo, tau_hi, &|tau| p.with_tau(tau))
}

/// Same indicator, searched in the position gain at fixed delay.
pub fn find_dib_in_a(p: &Params, a_lo: f64, a_hi: f64) -> Option<BifPoint> {
    if p.rule != Rule::Rule1 {
        return None;
    }
    let p = *p;
    locate_dib_along(move |a, th| dib_indicator(&p.with_a(a), th), a_lo, a_hi, &|a| p.with_a(a))
}

/// Default delay bracket for DIB searches.
pub const DIB_TAU_RANGE: (f64, f64) = (1e-3, 0.5);

/// Amplitude used to decide on which side of the origin the bifurcating
/// branch lies.
pub const CRITICALITY_PROBE: f64 = 0.02;

/// True if moderate zigzags still decay at the DIB, so the bifurcating orbit
/// is stable.
pub fn dib_is_supercritical(p_at_dib: &Params) -> Option<bool> {
    dib_indicator(p_at_dib, CRITICALITY_PROBE).map(|v| v < 0.0)
}

/// Position gain at which the DIB changes criticality, searched on
/// `[a_lo, a_hi]`.
pub fn find_criticality_change(p: &Params, a_lo: f64, a_hi: f64) -> Option<BifPoint> {
    let f = |a: f64| {
        let q = p.with_a(a);
        let d = find_dib(&q, DIB_TAU_RANGE.0, DIB_TAU_RANGE.1)?;
        dib_indicator(&q.with_tau(d.tau), CRITICALITY_PROBE)
    };
    let (l, h) = sign_bracket(&f, a_lo, a_hi, 8)?;
    let a = refine_sign(&f, l, h, 1e-6)?;
    let d = find_dib(&p.with_a(a), DIB_TAU_RANGE.0, DIB_TAU_RANGE.1)?;
    let q = p.with_a(a).with_tau(d.tau);
    Some(BifPoint::at(BifKind::CriticalityChange, &q, CRITICALITY_PROBE, f(a).map_or(f64::NAN, f64::abs)))
}

fn zigzag_theta_range(p: &Params) -> (f64, f64) {
    let hi = match on_equilibria(p).first() {
        Some(&th) if p.g == GKind::Cosine => 0.95 * th,
        _ => 1.5,
    };
    (0.01_f64.min(0.5 * hi), hi)
}

/// Smallest value of `ΔH/θ0²` over zigzag amplitudes, with its location and
/// the raw `ΔH` there.
fn min_scaled_delta_h(p: &Params) -> Option<(f64, f64, f64)> {
    let (lo, hi) = zigzag_theta_range(p);
    let opts = ReturnOptions::for_params(p);
    let eval = |th: f64| zigzag_return_map_with(th, p, opts).ok().map(|r| (r.delta_h / (th * th), r.delta_h));
    let n = 32;
    let grid: Vec<f64> = (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect();
    let vals: Vec<Option<(f64, f64)>> = grid.iter().map(|&t| eval(t)).collect();
    let k = (0..=n).filter(|&i| vals[i].is_some()).min_by(|&i, &j| vals[i].unwrap().0.total_cmp(&vals[j].unwrap().0))?;
    let l = grid[k.saturating_sub(1)];
    let h = grid[(k + 1).min(n)];
    let (th, _) = golden_min(|t| eval(t).map_or(f64::INFINITY, |v| v.0), l, h, 1e-9 * h);
    let (scaled, raw) = eval(th)?;
    Some((scaled, th, raw))
}

/// Saddle-node of zigzag orbits below the DIB delay. Returns `None` when the
/// DIB is supercritical, since the branch then has no fold near the origin.
pub fn find_saddle_node(p: &Params) -> Option<BifPoint> {
    if p.rule != Rule::Rule1 || p.tau < 0.0 {
        return None;
    }
    let dib = find_dib(p, DIB_TAU_RANGE.0, DIB_TAU_RANGE.1)?;
    let m = |tau: f64| min_scaled_delta_h(&p.with_tau(tau)).map(|v| v.0);
    let hi = dib.tau * (1.0 - 1e-4);
    if m(hi)? >= 0.0 {
        return None;
    }
    let mut lo = None;
    for f in [0.99, 0.97, 0.93, 0.85, 0.7, 0.5, 0.3] {
        let t = dib.tau * f;
        if m(t).is_some_and(|v| v > 0.0) {
            lo = Some(t);
            break;
        }
    }
    let lo = lo?;
    let tau = refine_sign(&m, lo, hi, PARAM_TOL * dib.tau)?;
    // The located delay sits on the side where the orbit pair still exists.
    let q = p.with_tau(tau);
    let (_, th, raw) = min_scaled_delta_h(&q)?;
    Some(BifPoint::at(BifKind::SaddleNode, &q, th, raw.abs()))
}

/// A periodic zigzag orbit, the fixed point of the `Σ1` return map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZigzagOrbit {
    pub theta0: f64,
    /// Derivative of the return map at the fixed point.
    pub slope: f64,
    pub stable: bool,
    pub t_off: f64,
    pub period: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

fn zigzag_pass(theta0: f64, p: &Params, opts: ReturnOptions) -> Result<OscillationReturn, ReturnMapError> {
    let r = one_oscillation(State::new(theta0, p.s * theta0), p, SimConfig::new(opts.t_limit, opts.dt).lean())?;
    if r.return_manifold != Manifold::Sigma1 {
        return Err(ReturnMapError::NotZigzag(r.return_manifold));
    }
    Ok(r)
}

/// Fixed points of the zigzag return map with amplitude in `[lo, hi]`, found
/// from sign changes of `θ3 − θ0` on an `n`-point geometric grid.
pub fn zigzag_orbits_in(p: &Params, lo: f64, hi: f64, n: usize) -> Vec<ZigzagOrbit> {
    if p.rule != Rule::Rule1 || p.tau <= 0.0 {
        return Vec::new();
    }
    let grid: Vec<f64> = (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect();
    zigzag_orbits_on(p, &grid)
}

fn zigzag_orbits_on(p: &Params, grid: &[f64]) -> Vec<ZigzagOrbit> {
    let opts = ReturnOptions::for_params(p);
    let g = |th: f64| zigzag_pass(th, p, opts).ok().map(|r| r.return_state.theta - th);
    let vals: Vec<Option<f64>> = grid.iter().map(|&t| g(t)).collect();
    let mut out = Vec::new();
    for i in 0..grid.len() - 1 {
        let (Some(u), Some(v)) = (vals[i], vals[i + 1]) else { continue };
        if u.signum() == v.signum() {
            continue;
        }
        let Some(th) = refine_sign(&g, grid[i], grid[i + 1], 1e-13 * grid[i + 1]) else { continue };
        let h = 1e-5 * th;
        let (Some(gp), Some(gm)) = (g(th + h), g(th - h)) else { continue };
        let slope = 1.0 + (gp - gm) / (2.0 * h);
        let Ok(r) = zigzag_pass(th, p, opts) else { continue };
        out.push(ZigzagOrbit {
            theta0: th,
            slope,
            stable: slope.abs() < 1.0,
            t_off: r.t_off,
            period: r.t_return,
            theta_min: r.theta_min,
            theta_max: r.theta_max,
        });
    }
    out
}

/// Like [`zigzag_orbits_in`] over the default amplitude range. The grid also
/// holds the minimiser of `ΔH/θ0²`, so a close pair near a fold still lands
/// in separate cells.
pub fn zigzag_orbits(p: &Params) -> Vec<ZigzagOrbit> {
    if p.rule != Rule::Rule1 || p.tau <= 0.0 {
        return Vec::new();
    }
    let (lo, hi) = zigzag_theta_range(p);
    let n = 40;
    let mut grid: Vec<f64> = (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect();
    if let Some((_, th, _)) = min_scaled_delta_h(p) {
        if th > lo && th < hi {
            grid.push(th);
            grid.sort_by(f64::total_cmp);
        }
    }
    zigzag_orbits_on(p, &grid)
}

/// Saddle of the undelayed ON system with its delayed escape rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaddleDeparture {
    pub equilibrium: State,
    /// Unit-θ direction `(−1, −rate)` pointing back toward the origin.
    pub direction: State,
    /// Real root of the delayed characteristic equation continued from the
    /// undelayed unstable eigenvalue.
    pub rate: f64,
}

/// Saddle at positive `θ` of the ON system, if there is one.
pub fn saddle_departure(p: &Params) -> Option<SaddleDeparture> {
    let (a, b, tau, g) = (p.a, p.b, p.tau, p.g);
    for th in on_equilibria(p) {
        let gv = g.eval(th);
        let k = th.cos() - a * th * g.derivative(th);
        if k - a * gv <= 0.0 {
            continue;
        }
        let guess = -0.5 * b * gv + (0.25 * b * b * gv * gv + k - a * gv).sqrt();
        let rate = newton(|l| l * l - k + (a + b * l) * gv * (-l * tau).exp(), guess, 1e-14, 100)?;
        if !(rate > 0.0) {
            continue;
        }
        return Some(SaddleDeparture { equilibrium: State::new(th, 0.0), direction: State::new(-1.0, -rate), rate });
    }
    None
}

/// Offset of the shooting start from the saddle.
pub const SHOOTING_OFFSET: f64 = 1e-8;

fn shooting_config(p: &Params, d: &SaddleDeparture, t_max: f64) -> SimConfig {
    let dt = if p.tau > 0.0 { (p.tau / 20.0).min(1e-3) } else { 1e-3 };
    SimConfig::new(t_max, dt).lean().with_initial(InitialHistory::Departure {
        equilibrium: d.equilibrium,
        direction: d.direction * SHOOTING_OFFSET,
        rate: d.rate,
    })
}

/// Follows the inward branch of the saddle's unstable manifold through one
/// zigzag. `Some(true)` if it escapes past the saddle, `Some(false)` if it
/// makes it back into the OFF region.
pub fn homoclinic_outcome(p: &Params) -> Option<bool> {
    let d = saddle_departure(p)?;
    let start = d.equilibrium + d.direction * SHOOTING_OFFSET;
    let mut sim = Simulator::new(start, p, shooting_config(p, &d, 400.0)).ok()?;
    let mut crossings = 0;
    let term = sim.run_until(|ev| {
        if matches!(ev.kind, EventKind::ManifoldCross { .. }) {
            crossings += 1;
        }
        crossings >= 3
    });
    match term {
        Termination::Stopped => Some(false),
        Termination::Diverged if crossings >= 2 => Some(true),
        _ => None,
    }
}

/// Delay of the homoclinic connection to the saddle, bracketed on
/// `[tau_lo, tau_hi]`.
pub fn find_homoclinic(p: &Params, tau_lo: f64, tau_hi: f64) -> Option<BifPoint> {
    if p.rule != Rule::Rule1 {
        return None;
    }
    let d0 = saddle_departure(p)?;
    let f = |tau: f64| homoclinic_outcome(&p.with_tau(tau)).map(|e| if e { 1.0 } else { -1.0 });
    let (l, h) = sign_bracket(&f, tau_lo, tau_hi, 40)?;
    let tau = refine_sign(&f, l, h, PARAM_TOL)?;
    Some(BifPoint::at(BifKind::Homoclinic, &p.with_tau(tau), d0.equilibrium.theta, h - l))
}

/// Where the inward branch of the unstable manifold first meets `Σ1`, or
/// `None` if it reaches the origin without doing so.
pub fn unstable_manifold_crossing(p: &Params) -> Option<State> {
    let d = saddle_departure(p)?;
    let start = d.equilibrium + d.direction * SHOOTING_OFFSET;
    let mut cfg = shooting_config(p, &d, 400.0);
    cfg.origin_tol = 1e-3 * d.equilibrium.theta;
    let mut sim = Simulator::new(start, p, cfg).ok()?;
    let mut hit = None;
    sim.run_until(|ev| match ev.kind {
        EventKind::ManifoldCross { manifold: Manifold::Sigma1, .. } => {
            hit = Some(ev.state);
            true
        }
        _ => false,
    });
    hit
}

// ---------------------------------------------------------------- bursting

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttractorKind {
    Periodic,
    Aperiodic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BurstDiagnostics {
    /// Small zigzags turn outward.
    pub a1: Option<f64>,
    /// The unstable manifold of the saddle starts to meet `Σ1`.
    pub a2: Option<f64>,
    /// OFF residence of the stable zigzag orbit equals the delay.
    pub a3: Option<f64>,
    pub sample_a: f64,
    /// `θ` where the unstable manifold re-enters the OFF region at `sample_a`.
    pub excursion_reentry_theta: Option<f64>,
    /// `θ` at the first short OFF window of the orbit from the origin at
    /// `sample_a`.
    pub short_off_exit_theta: Option<f64>,
    pub attractor_kind: Option<AttractorKind>,
    /// Period, counted in short OFF windows, when the attractor is periodic.
    pub attractor_period: Option<usize>,
}

const BURST_START: f64 = 1e-4;

fn a_bisect_predicate<F: Fn(f64) -> bool>(pred: F, lo: f64, hi: f64) -> Option<f64> {
    if pred(lo) || !pred(hi) {
        return None;
    }
    Some(bisect_predicate(pred, lo, hi, 1e-6))
}

/// `a3`: the stable zigzag orbit is followed down in `a` from `a_hi` until its
/// OFF residence equals the delay. Safeguarded secant: a step that leaves the
/// bracket or lands where the orbit has gone is replaced by bisection.
pub fn find_time_equals_tau(p: &Params, a_lo: f64, a_hi: f64) -> Option<BifPoint> {
    let f = |a: f64| -> Option<(f64, ZigzagOrbit)> {
        let q = p.with_a(a);
        let orb = zigzag_orbits(&q).into_iter().rfind(|o| o.stable)?;
        Some((orb.t_off - q.tau, orb))
    };
    let (mut f_hi, _) = f(a_hi)?;
    if f_hi <= 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (a_lo, a_hi);
    if f(lo).is_some_and(|v| v.0 > 0.0) {
        return None;
    }
    let mut prev: Option<(f64, f64)> = None;
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        let x = match prev {
            Some((xp, fp)) if fp != f_hi => {
                let s = hi - f_hi * (hi - xp) / (f_hi - fp);
                if s > lo && s < hi { s } else { mid }
            }
            _ => mid,
        };
        match f(x) {
            Some((v, _)) if v > 0.0 => {
                prev = Some((hi, f_hi));
                hi = x;
                f_hi = v;
            }
            Some((v, _)) => {
                prev = Some((x, v));
                lo = x;
            }
            None => {
                prev = None;
                lo = x;
            }
        }
    }
    let (v, orb) = f(hi)?;
    Some(BifPoint::at(BifKind::TimeEqualsTau, &p.with_a(hi), orb.theta_max, v.abs()))
}

/// Smallest period `k` for which the last values of `seq` repeat with
/// period `k` to within `tol`.
pub fn detect_period(seq: &[f64], max_period: usize, tol: f64) -> Option<usize> {
    (1..=max_period).find(|&k| {
        let need = 4 * k;
        seq.len() >= need + k && (seq.len() - need..seq.len()).all(|i| (seq[i] - seq[i - k]).abs() <= tol)
    })
}

/// Short OFF windows of the orbit started at `(θ0, sθ0)`, as
/// `(time, θ at exit)`.
pub fn short_off_sequence(p: &Params, theta0: f64, t_max: f64) -> Vec<(f64, f64)> {
    let dt = (p.tau / 20.0).min(1e-3);
    let Ok(mut sim) = Simulator::new(State::new(theta0, p.s * theta0), p, SimConfig::new(t_max, dt).lean()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut entered = None;
    sim.run_until(|ev| {
        match ev.kind {
            EventKind::ManifoldCross { on_side: false, .. } => entered = Some(ev.t),
            EventKind::ManifoldCross { on_side: true, .. } => {
                if let Some(t_in) = entered.take() {
                    if ev.t - t_in < p.tau {
                        out.push((ev.t, ev.state.theta));
                    }
                }
            }
            _ => {}
        }
        false
    });
    out
}

/// Bursting diagnostics over `a ∈ [a_lo, a_hi]` at the delay and slope of
/// `p`, with orbit details recorded at `sample_a`.
pub fn burst_diagnose(p: &Params, a_lo: f64, a_hi: f64, sample_a: f64) -> BurstDiagnostics {
    let (a1, (a2, a3)) = rayon::join(
        || a_bisect_predicate(|a| dib_indicator(&p.with_a(a), BURST_START).is_some_and(|v| v > 0.0), a_lo, a_hi),
        || {
            rayon::join(
                || a_bisect_predicate(|a| unstable_manifold_crossing(&p.with_a(a)).is_some(), a_lo, a_hi),
                || find_time_equals_tau(p, a_lo, a_hi).map(|b| b.a),
            )
        },
    );
    let q = p.with_a(sample_a);
    let reentry = unstable_manifold_crossing(&q).map(|x| x.theta);
    let seq = short_off_sequence(&q, BURST_START, 3000.0);
    let first = seq.first().map(|v| v.1);
    let late: Vec<f64> = seq.iter().filter(|v| v.0 > 1500.0).map(|v| v.1).collect();
    let (kind, period) = if late.len() < 8 {
        (None, None)
    } else {
        match detect_period(&late, 12, 1e-6) {
            Some(k) => (Some(AttractorKind::Periodic), Some(k)),
            None => (Some(AttractorKind::Aperiodic), None),
        }
    };
    BurstDiagnostics {
        a1,
        a2,
        a3,
        sample_a,
        excursion_reentry_theta: reentry,
        short_off_exit_theta: first,
        attractor_kind: kind,
        attractor_period: period,
    }
}

// ------------------------------------------------------- linearised plane

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ZigzagFate {
    In,
    Out,
    ToSpiral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpiralFate {
    In,
    Out,
    ToZigzag,
}

impl ZigzagFate {
    pub fn label(self) -> &'static str {
        match self {
            ZigzagFate::In => "zigzag_in",
            ZigzagFate::Out => "zigzag_out",
            ZigzagFate::ToSpiral => "zigzag_to_spiral",
        }
    }
}

impl SpiralFate {
    pub fn label(self) -> &'static str {
        match self {
            SpiralFate::In => "spiral_in",
            SpiralFate::Out => "spiral_out",
            SpiralFate::ToZigzag => "spiral_to_zigzag",
        }
    }
}

/// Fate of the two probe orbits of the linearised system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PlaneRegionLabel {
    pub zigzag: ZigzagFate,
    pub spiral: SpiralFate,
    /// A probe stayed in the ON region for the whole run.
    pub zigzag_trapped: bool,
    pub spiral_trapped: bool,
}

/// Raw outcome of one linear probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeOutcome {
    /// Manifold of the next entry into an ON region, if the pass completed.
    pub returned_to: Option<Manifold>,
    /// Return amplitude over start amplitude.
    pub ratio: f64,
    /// `φ + θ` at the control switch-off, scaled by the start amplitude. Its
    /// sign tells which side of the OFF stable line `φ = −θ` the orbit is on.
    pub stable_side: f64,
    pub trapped: bool,
}

const PLANE_T_MAX: f64 = 400.0;

fn linear_probe(start: State, amplitude: f64, p: &Params) -> ProbeOutcome {
    let dt = if p.tau > 0.0 { (p.tau / 40.0).min(1e-2) } else { 1e-3 };
    let mut cfg = SimConfig::new(PLANE_T_MAX, dt).lean().linearized();
    cfg.theta_limit = None;
    cfg.norm_limit = Some(1e8 * amplitude);
    cfg.origin_tol = 1e-9 * amplitude;
    match one_oscillation(start, p, cfg) {
        Ok(r) => {
            let ratio = match r.return_manifold {
                Manifold::Sigma1 => r.return_state.theta.abs() / amplitude,
                _ => r.return_state.phi.abs() / amplitude,
            };
            ProbeOutcome {
                returned_to: Some(r.return_manifold),
                ratio,
                stable_side: (r.second_switch.phi + r.second_switch.theta) / amplitude,
                trapped: false,
            }
        }
        Err(ReturnMapError::OnStableManifold) => {
            ProbeOutcome { returned_to: None, ratio: 0.0, stable_side: 0.0, trapped: false }
        }
        Err(_) => ProbeOutcome { returned_to: None, ratio: f64::INFINITY, stable_side: f64::NAN, trapped: true },
    }
}

/// Probes `scale·(1, s)` and `scale·(0, 1)`.
pub fn plane_probes(p: &Params, scale: f64) -> (ProbeOutcome, ProbeOutcome) {
    let q = Params { rule: Rule::Rule1, ..*p };
    rayon::join(
        || linear_probe(State::new(scale, q.s * scale), scale, &q),
        || linear_probe(State::new(0.0, scale), scale, &q),
    )
}

pub fn classify_plane_point_scaled(a: f64, b: f64, tau: f64, s: f64, scale: f64) -> PlaneRegionLabel {
    let p = Params::rule1(a, b, tau, s, GKind::One);
    let (z, sp) = plane_probes(&p, scale);
    let zigzag = match z.returned_to {
        Some(Manifold::Sigma1) if z.ratio < 1.0 => ZigzagFate::In,
        Some(Manifold::Sigma1) => ZigzagFate::Out,
        Some(_) => ZigzagFate::ToSpiral,
        None if z.trapped => ZigzagFate::Out,
        None => ZigzagFate::In,
    };
    let spiral = match sp.returned_to {
        Some(Manifold::Sigma2) if sp.ratio < 1.0 => SpiralFate::In,
        Some(Manifold::Sigma2) => SpiralFate::Out,
        Some(_) => SpiralFate::ToZigzag,
        None if sp.trapped => SpiralFate::Out,
        None => SpiralFate::In,
    };
    PlaneRegionLabel { zigzag, spiral, zigzag_trapped: z.trapped, spiral_trapped: sp.trapped }
}

/// Classifies a point of the `(a, b)` plane for the linearised system.
pub fn classify_plane_point(a: f64, b: f64, tau: f64, s: f64) -> PlaneRegionLabel {
    classify_plane_point_scaled(a, b, tau, s, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneCell {
    pub a: f64,
    pub b: f64,
    pub label: PlaneRegionLabel,
}

/// Labels every grid point, row by row in `b` then `a`.
pub fn plane_scan(a_values: &[f64], b_values: &[f64], tau: f64, s: f64) -> Vec<PlaneCell> {
    let pts: Vec<(f64, f64)> = b_values.iter().flat_map(|&b| a_values.iter().map(move |&a| (a, b))).collect();
    pts.par_iter().map(|&(a, b)| PlaneCell { a, b, label: classify_plane_point(a, b, tau, s) }).collect()
}

fn plane_indicator(kind: BifKind, a: f64, b: f64, tau: f64, s: f64) -> Option<f64> {
    let p = Params::rule1(a, b, tau, s, GKind::One);
    let (z, sp) = plane_probes(&p, 1.0);
    match kind {
        BifKind::PlaneZigzagUnit if z.returned_to == Some(Manifold::Sigma1) => Some(z.ratio - 1.0),
        BifKind::PlaneZigzagOntoStable if !z.trapped => Some(z.stable_side),
        BifKind::PlaneSpiralUnit if sp.returned_to == Some(Manifold::Sigma2) => Some(sp.ratio - 1.0),
        BifKind::PlaneSpiralOntoStable if !sp.trapped => Some(sp.stable_side),
        _ => None,
    }
}

/// Points of the four linearised-plane curves crossed along each row `b` of
/// the `a` grid, each refined by bisection in `a`.
pub fn plane_curves(a_values: &[f64], b_values: &[f64], tau: f64, s: f64) -> Vec<BifPoint> {
    let kinds = [
        BifKind::PlaneZigzagUnit,
        BifKind::PlaneZigzagOntoStable,
        BifKind::PlaneSpiralUnit,
        BifKind::PlaneSpiralOntoStable,
    ];
    let jobs: Vec<(BifKind, f64)> = kinds.iter().flat_map(|&k| b_values.iter().map(move |&b| (k, b))).collect();
    let rows: Vec<Vec<BifPoint>> = jobs
        .par_iter()
        .map(|&(kind, b)| {
            let f = |a: f64| plane_indicator(kind, a, b, tau, s);
            let vals: Vec<Option<f64>> = a_values.iter().map(|&a| f(a)).collect();
            let mut out = Vec::new();
            for i in 0..a_values.len().saturating_sub(1) {
                let (Some(u), Some(v)) = (vals[i], vals[i + 1]) else { continue };
                if u == 0.0 || u.signum() == v.signum() {
                    continue;
                }
                if let Some(a) = refine_sign(&f, a_values[i], a_values[i + 1], 1e-8) {
                    let p = Params::rule1(a, b, tau, s, GKind::One);
                    out.push(BifPoint::at(kind, &p, 0.0, f(a).map_or(f64::NAN, f64::abs)));
                }
            }
            out
        })
        .collect();
    rows.into_iter().flatten().collect()
}

// ------------------------------------------------------------- dead zone

/// Periodic orbit of the dead-zone rule, as a fixed point of the map from
/// `(σ, φ0)` to the next entry into an ON region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeadZoneOrbit {
    pub phi0: f64,
    /// True for the symmetric orbit that visits both sides of the dead zone.
    pub symmetric: bool,
    pub slope: f64,
    pub stable: bool,
    pub period: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

fn dead_zone_opts(p: &Params) -> ReturnOptions {
    ReturnOptions { t_limit: 30.0, ..ReturnOptions::for_params(p) }
}

fn dead_zone_pass(phi0: f64, p: &Params) -> Result<OscillationReturn, ReturnMapError> {
    let o = dead_zone_opts(p);
    one_oscillation(State::new(p.sigma, phi0), p, SimConfig::new(o.t_limit, o.dt).lean())
}

/// Fixed points of the dead-zone map with `φ0` in `[lo, hi]`.
pub fn dead_zone_orbits_in(p: &Params, lo: f64, hi: f64, n: usize) -> Vec<DeadZoneOrbit> {
    if p.rule != Rule::Rule2 || p.tau <= 0.0 {
        return Vec::new();
    }
    let opts = dead_zone_opts(p);
    let map = |phi: f64| dead_zone_return_map_with(phi, p, opts).ok();
    let grid: Vec<f64> = (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect();
    let mut vals = Vec::with_capacity(grid.len());
    for &phi in &grid {
        let r = map(phi);
        let stop = r.is_none();
        vals.push(r.map(|r| (r.crossed, r.phi_next - phi)));
        // Larger starts escape the same way.
        if stop {
            break;
        }
    }
    let mut out = Vec::new();
    for i in 0..vals.len().saturating_sub(1) {
        let (Some((cu, u)), Some((cv, v))) = (vals[i], vals[i + 1]) else { continue };
        if cu != cv || u.signum() == v.signum() {
            continue;
        }
        let g = |phi: f64| map(phi).filter(|r| r.crossed == cu).map(|r| r.phi_next - phi);
        let Some(phi) = refine_sign(&g, grid[i], grid[i + 1], 1e-13 * grid[i + 1]) else { continue };
        let h = 1e-5 * phi;
        let (Some(gp), Some(gm)) = (g(phi + h), g(phi - h)) else { continue };
        let slope = 1.0 + (gp - gm) / (2.0 * h);
        let Ok(r) = dead_zone_pass(phi, p) else { continue };
        let (theta_min, theta_max) = if cu { (-r.theta_max, r.theta_max) } else { (r.theta_min, r.theta_max) };
        out.push(DeadZoneOrbit { phi0: phi, symmetric: cu, slope, stable: slope.abs() < 1.0, period: r.t_return, theta_min, theta_max });
    }
    out
}

pub fn dead_zone_orbits(p: &Params) -> Vec<DeadZoneOrbit> {
    dead_zone_orbits_in(p, 1e-4, 3.0, 120)
}

/// Stable local orbit around `(σ, 0)` near the given velocity guess.
pub fn dead_zone_local_orbit(p: &Params, phi_guess: f64) -> Option<DeadZoneOrbit> {
    dead_zone_orbits_in(p, phi_guess / 4.0, phi_guess * 4.0, 32).into_iter().find(|o| !o.symmetric && o.stable)
}

/// Position gain at which the ON equilibrium sits on the dead-zone edge.
pub fn boundary_equilibrium(p: &Params) -> Option<BifPoint> {
    if p.rule != Rule::Rule2 {
        return None;
    }
    let gs = p.g.eval(p.sigma);
    if gs <= 0.0 || p.sigma <= 0.0 {
        return None;
    }
    let a = p.sigma.sin() / (p.sigma * gs);
    Some(BifPoint::at(BifKind::BoundaryEquilibrium, &p.with_a(a), p.sigma, 0.0))
}

fn has_local_orbit(p: &Params) -> bool {
    dead_zone_orbits(p).iter().any(|o| !o.symmetric)
}

/// Lower end in `a` of the window where a local orbit around `(σ, 0)` exists.
/// For `G = 1` this coincides with the boundary-equilibrium gain.
pub fn find_dead_zone_onset(p: &Params, a_lo: f64, a_hi: f64) -> Option<BifPoint> {
    let a = a_bisect_predicate(|a| has_local_orbit(&p.with_a(a)), a_lo, a_hi)?;
    let q = p.with_a(a);
    let witness = boundary_equilibrium(&q).map_or(f64::NAN, |b| a - b.a);
    Some(BifPoint::at(BifKind::Homoclinic, &q, witness, 1e-6))
}

/// Upper end in `a` of the local-orbit window, past which only the symmetric
/// orbit remains.
pub fn find_symmetric_transition(p: &Params, a_lo: f64, a_hi: f64) -> Option<BifPoint> {
    let a = a_bisect_predicate(|a| !has_local_orbit(&p.with_a(a)), a_lo, a_hi)?;
    Some(BifPoint::at(BifKind::SymmetricHomoclinic, &p.with_a(a), f64::NAN, 1e-6))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn power_law_exponent(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// DIB, saddle-node and homoclinic points at each `a` of the grid, in grid
/// order. The homoclinic search is centred on the asymptotic delay when that
/// is available.
pub fn curve_sweep(p: &Params, a_values: &[f64]) -> Vec<BifPoint> {
    let per_a: Vec<Vec<BifPoint>> = a_values
        .par_iter()
        .map(|&a| {
            let q = p.with_a(a);
            let mut out = Vec::new();
            out.extend(find_dib(&q, DIB_TAU_RANGE.0, DIB_TAU_RANGE.1));
            out.extend(find_saddle_node(&q));
            if saddle_departure(&q).is_some() {
                let (lo, hi) = match crate::asymptotics::homoclinic_curve(a, q.b, q.s) {
                    Ok(t) if t > 0.0 => (0.3 * t, 2.0 * t),
                    _ => DIB_TAU_RANGE,
                };
                out.extend(find_homoclinic(&q, lo, hi));
            }
            out
        })
        .collect();
    per_a.into_iter().flatten().collect()
}

// ------------------------------------------------------------- diagrams

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchKind {
    Equilibrium,
    ZigzagOrbit,
    LocalOrbit,
    SymmetricOrbit,
}

impl BranchKind {
    pub fn label(self) -> &'static str {
        match self {
            BranchKind::Equilibrium => "equilibrium",
            BranchKind::ZigzagOrbit => "zigzag",
            BranchKind::LocalOrbit => "local",
            BranchKind::SymmetricOrbit => "symmetric",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchRow {
    pub a: f64,
    pub branch_id: String,
    pub kind: BranchKind,
    pub theta_min: f64,
    pub theta_max: f64,
    pub stable: bool,
}

fn equilibrium_rows(p: &Params) -> Vec<BranchRow> {
    on_equilibria(p)
        .into_iter()
        .filter(|&th| p.rule == Rule::Rule1 || th > p.sigma)
        .enumerate()
        .map(|(k, th)| {
            let gv = p.g.eval(th);
            let stiff = th.cos() - p.a * th * p.g.derivative(th) - p.a * gv;
            BranchRow {
                a: p.a,
                branch_id: format!("equilibrium{k}"),
                kind: BranchKind::Equilibrium,
                theta_min: th,
                theta_max: th,
                stable: stiff < 0.0 && p.b * gv > 0.0,
            }
        })
        .collect()
}

/// Equilibria and periodic orbits at each `a`, in the order of `a_values`.
pub fn bif_diagram(p: &Params, a_values: &[f64]) -> Vec<BranchRow> {
    let per_a: Vec<Vec<BranchRow>> = a_values
        .par_iter()
        .map(|&a| {
            let q = p.with_a(a);
            let mut rows = equilibrium_rows(&q);
            match q.rule {
                Rule::Rule1 => {
                    for (k, o) in zigzag_orbits(&q).into_iter().enumerate() {
                        rows.push(BranchRow {
                            a,
                            branch_id: format!("zigzag{k}"),
                            kind: BranchKind::ZigzagOrbit,
                            theta_min: o.theta_min,
                            theta_max: o.theta_max,
                            stable: o.stable,
                        });
                    }
                }
                Rule::Rule2 => {
                    for (k, o) in dead_zone_orbits(&q).into_iter().enumerate() {
                        let kind = if o.symmetric { BranchKind::SymmetricOrbit } else { BranchKind::LocalOrbit };
                        rows.push(BranchRow {
                            a,
                            branch_id: format!("{}{k}", kind.label()),
                            kind,
                            theta_min: o.theta_min,
                            theta_max: o.theta_max,
                            stable: o.stable,
                        });
                    }
                }
            }
            rows
        })
        .collect();
    per_a.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn period_detection() {
        let seq: Vec<f64> = (0..40).map(|i| [0.3, 0.5, 0.4][i % 3]).collect();
        assert_eq!(detect_period(&seq, 6, 1e-12), Some(3));
        let drift: Vec<f64> = (0..40).map(|i| i as f64 * 0.01).collect();
        assert_eq!(detect_period(&drift, 6, 1e-6), None);
    }

    #[test]
    fn power_law_recovers_exponent() {
        let xs: [f64; 3] = [1e-4, 1e-3, 1e-2];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(0.5)).collect();
        assert!((power_law_exponent(&xs, &ys) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_saddle_for_constant_gain() {
        for a in [0.5, 1.5, 3.0] {
            assert!(saddle_departure(&Params::rule1(a, 2.0, 0.05, -0.01, GKind::One)).is_none());
        }
    }

    #[test]
    fn saddle_rate_reduces_to_undelayed_eigenvalue() {
        let p = Params::rule1(1.5, 2.0, 0.0, -0.01, GKind::Cosine);
        let d = saddle_departure(&p).unwrap();
        let e = crate::asymptotics::saddle_eigen(&p).unwrap();
        assert!((d.rate - e.lambda_plus).abs() < 1e-12);
        assert!((d.equilibrium.theta - e.theta_star).abs() < 1e-12);
    }
}
