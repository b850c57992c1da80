use delayswitch::engine::{
    classify_oscillation, detect_short_off, simulate, simulate_with, zigzag_return_map, EventKind, OscillationTag,
    SimConfig, SimResult, Termination,
};
use delayswitch::filippov::simulate_zero_delay;
use delayswitch::model::{hamiltonian, GKind, Manifold, Params, Rule, State};
use proptest::prelude::*;

fn fig4() -> Params {
    Params::rule1(2.5, 2.0, 0.25, -0.3, GKind::Cosine)
}

fn fig1() -> Params {
    Params::rule1(1.5, 4.0, 0.5, -0.3, GKind::Cosine)
}

fn toggles(run: &SimResult) -> Vec<f64> {
    run.events.iter().filter(|e| matches!(e.kind, EventKind::ControlOn | EventKind::ControlOff)).map(|e| e.t).collect()
}

fn crossings(run: &SimResult) -> Vec<f64> {
    run.events.iter().filter(|e| e.kind.crossing().is_some()).map(|e| e.t).collect()
}

#[test]
fn every_toggle_lags_a_crossing_by_the_delay() {
    for (p, x0) in [
        (fig4(), State::new(0.5, -0.15)),
        (fig1(), State::new(0.0, 0.05)),
        (Params::rule2(2.5, 4.0, 0.5, 0.3, GKind::Cosine), State::new(0.3, 0.2)),
    ] {
        let run = simulate(x0, &p, 30.0, 1e-3).unwrap();
        let cross = crossings(&run);
        let t = toggles(&run);
        assert!(t.len() > 5);
        for tt in t {
            assert!(
                cross.iter().any(|c| (c + p.tau - tt).abs() <= 1e-12),
                "toggle at {tt} has no crossing one delay earlier"
            );
        }
    }
}

#[test]
fn engine_order_is_four() {
    // Switch times land at varying offsets inside a step, so single ratios
    // scatter; a least-squares slope over several steps does not.
    let p = fig4();
    let x0 = State::new(0.5, -0.15);
    let end = |dt: f64| simulate(x0, &p, 3.0, dt).unwrap().final_state;
    let reference = end(0.04 / 256.0);
    let pts: Vec<(f64, f64)> =
        [0.04, 0.02, 0.01, 0.005].iter().map(|&h: &f64| (h.ln(), (end(h) - reference).norm().ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope - 4.0).abs() < 0.2, "slope {slope}");
}

#[test]
fn theta_moves_with_the_sign_of_phi_at_vertical_crossings() {
    let p = Params::rule2(2.5, 4.0, 0.5, 0.3, GKind::Cosine);
    for (q, x0) in [(fig1(), State::new(0.0, 0.05)), (p, State::new(0.3, 0.2))] {
        let run = simulate(x0, &q, 30.0, 1e-3).unwrap();
        let mut n = 0;
        for e in &run.events {
            let Some((m, _)) = e.kind.crossing() else { continue };
            if m == Manifold::Sigma1 {
                continue;
            }
            let before = run.state_at(e.t - 1e-6).unwrap().theta;
            let after = run.state_at(e.t + 1e-6).unwrap().theta;
            assert_eq!((after - before).signum(), e.state.phi.signum());
            n += 1;
        }
        assert!(n > 3);
    }
}

#[test]
fn off_history_longer_than_delay_forgets_the_past() {
    let p = fig4();
    let run = simulate(State::new(0.5, -0.15), &p, 20.0, 1e-3).unwrap();
    // The last ControlOff before a long OFF stretch: restart from a point
    // that has been OFF for more than one delay.
    let offs: Vec<f64> = run.events.iter().filter(|e| e.kind == EventKind::ControlOff).map(|e| e.t).collect();
    let ons: Vec<f64> = run.events.iter().filter(|e| e.kind == EventKind::ControlOn).map(|e| e.t).collect();
    let (t_off, t_on) = offs
        .iter()
        .filter_map(|&f| ons.iter().find(|&&o| o > f).map(|&o| (f, o)))
        .find(|(f, o)| o - f > 2.0 * p.tau)
        .expect("long OFF stretch");
    let cross_before = crossings(&run).into_iter().filter(|&c| c < t_on - p.tau).next_back().unwrap();
    let t_mid = cross_before.max(t_off) + p.tau + 1e-3;
    assert!(t_mid < t_on - p.tau);
    let restart = simulate(run.state_at(t_mid).unwrap(), &p, 3.0, 1e-3).unwrap();
    for k in 0..=30 {
        let t = 0.1 * k as f64;
        let d = (restart.state_at(t).unwrap() - run.state_at(t_mid + t).unwrap()).norm();
        assert!(d < 1e-8, "t = {t}: {d}");
    }
}

#[test]
fn zero_delay_engine_matches_filippov_without_sliding() {
    // a + bs + s² < 1: no sliding, so both integrators follow plain switching.
    let p = Params::rule1(1.3, 2.0, 0.0, -0.3, GKind::Cosine);
    let x0 = State::new(0.2, 0.0);
    let engine = simulate(x0, &p, 6.0, 1e-3).unwrap();
    let filippov = simulate_zero_delay(x0, &p, 6.0, 1e-3).unwrap();
    assert_ne!(engine.termination, Termination::ZeroDelaySliding);
    for &(t, x, _) in filippov.samples.iter().step_by(50) {
        let d = (engine.state_at(t).unwrap() - x).norm();
        assert!(d < 1e-6, "t = {t}: {d}");
    }
}

#[test]
fn fig1_orbits_zigzag_in_and_spiral_out() {
    let p = fig1();
    let inner = simulate(State::new(0.5, -0.15), &p, 80.0, 1e-3).unwrap();
    assert_eq!(inner.termination, Termination::ConvergedOrigin);
    let tags = classify_oscillation(&inner.events, &p);
    assert!(tags.len() > 5 && tags.iter().all(|&t| t == OscillationTag::Zigzag), "{tags:?}");

    let outer = simulate(State::new(0.0, 0.05), &p, 80.0, 1e-3).unwrap();
    assert_eq!(outer.termination, Termination::ReachedTMax);
    let tags = classify_oscillation(&outer.events, &p);
    assert!(tags.len() > 20 && tags.iter().all(|&t| t == OscillationTag::SpiralHalf), "{tags:?}");
    // Successive half turns alternate sides and settle.
    let peaks: Vec<f64> = outer
        .events
        .iter()
        .filter(|e| e.kind.crossing() == Some((Manifold::Sigma2, true)))
        .map(|e| e.state.phi)
        .collect();
    assert!(peaks.windows(2).all(|w| w[0] * w[1] < 0.0));
    let tail = &peaks[peaks.len() - 4..];
    assert!(tail[0].abs() > 0.5 && (tail[2] - tail[0]).abs() < 1e-3 && (tail[3] - tail[1]).abs() < 1e-3, "{tail:?}");
}

#[test]
fn fig4_zigzag_shrinks_with_energy_gain() {
    let r = zigzag_return_map(0.5, &fig4()).unwrap();
    assert!(r.theta3 < 0.5);
    // H(θ, sθ) falls with θ along the sliding line, so shrinking gains energy.
    assert!(r.delta_h > 0.0);
    let h = |th: f64| hamiltonian(State::new(th, -0.3 * th));
    assert!((r.delta_h - (h(r.theta3) - h(0.5))).abs() < 1e-9);
}

#[test]
fn short_off_windows_in_the_bursting_regime() {
    let p = Params::rule1(1.18, 2.0, 0.3, -0.1, GKind::Cosine);
    let run = simulate_with(State::new(1e-4, -1e-5), &p, SimConfig::new(600.0, 1e-3)).unwrap();
    let short = detect_short_off(&run.events, &p);
    assert!(!short.is_empty());
    assert!(short.iter().all(|&(dur, _)| dur < p.tau));
    assert!((short[0].1 - 0.32).abs() < 0.02, "{:?}", short[0]);
}

#[test]
fn zero_length_run_has_only_the_start() {
    let run = simulate(State::new(0.1, 0.0), &fig4(), 0.0, 1e-3).unwrap();
    assert_eq!(run.final_time, 0.0);
    assert_eq!(run.final_state, State::new(0.1, 0.0));
}

fn params_strategy() -> impl Strategy<Value = Params> {
    (1.1f64..3.0, 0.5f64..4.0, 0.05f64..0.5, -0.5f64..-0.01, 0.1f64..0.4, any::<bool>(), any::<bool>()).prop_map(
        |(a, b, tau, s, sigma, cos, rule1)| {
            let g = if cos { GKind::Cosine } else { GKind::One };
            if rule1 {
                Params::rule1(a, b, tau, s, g)
            } else {
                Params::rule2(a, b, tau, sigma, g)
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn negated_start_negates_the_run(p in params_strategy(), th in -0.6f64..0.6, ph in -0.6f64..0.6) {
        let x0 = State::new(th, ph);
        let (Ok(u), Ok(v)) = (simulate(x0, &p, 10.0, 2e-3), simulate(-x0, &p, 10.0, 2e-3)) else {
            return Ok(());
        };
        prop_assert_eq!(u.termination, v.termination);
        prop_assert_eq!(u.segments.len(), v.segments.len());
        for (x, y) in u.segments.iter().zip(&v.segments) {
            prop_assert!((x.x_hi + y.x_hi).norm() <= 1e-12);
            prop_assert_eq!(x.control_on, y.control_on);
        }
        prop_assert_eq!(u.events.len(), v.events.len());
        if p.rule == Rule::Rule1 {
            prop_assert_eq!(classify_oscillation(&u.events, &p), classify_oscillation(&v.events, &p));
        }
    }

    #[test]
    fn energy_is_flat_on_off_stretches(p in params_strategy(), th in -0.6f64..0.6, ph in -0.6f64..0.6) {
        let Ok(run) = simulate(State::new(th, ph), &p, 10.0, 1e-3) else { return Ok(()); };
        let mut h0 = None;
        for seg in &run.segments {
            if seg.control_on {
                h0 = None;
                continue;
            }
            let h = *h0.get_or_insert(hamiltonian(seg.x_lo));
            prop_assert!((hamiltonian(seg.x_hi) - h).abs() <= 1e-11);
        }
    }
}
