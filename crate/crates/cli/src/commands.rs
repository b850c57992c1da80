use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use delayswitch::asymptotics::{criticality_curve, dib_curve, homoclinic_curve, rule2_periodic};
use delayswitch::bifscan::{
    bif_diagram, boundary_equilibrium, burst_diagnose, curve_sweep, find_criticality_change,
    find_dead_zone_onset, find_dib_in_a, find_symmetric_transition, plane_curves, plane_scan, short_off_sequence,
    BifKind, BifPoint, BranchKind,
};
use delayswitch::engine::{classify_oscillation, simulate_with, OscillationTag, SimConfig};
use delayswitch::filippov::{grazing_off, grazing_on, simulate_zero_delay, sliding_region};
use delayswitch::io;
use delayswitch::model::{on_equilibria, GKind, Params, Rule, State};

use crate::config::{ConfigError, RunConfig};
use crate::svg::Plot;

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Numeric(String),
    Io(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numeric(_) | Failure::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "invalid configuration: {e}"),
            Failure::Numeric(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(e) => write!(f, "{e:#}"),
        }
    }
}

type Res = Result<(), Failure>;

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_dir(cfg: &RunConfig) -> anyhow::Result<std::path::PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn csv_ctx(r: io::CsvResult, name: &str) -> anyhow::Result<()> {
    r.with_context(|| format!("writing {name}"))
}

fn save_svg(dir: &Path, name: &str, plot: &Plot) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, plot.render()).with_context(|| format!("cannot write {}", path.display()))
}

fn require_rule(p: &Params, rule: Rule, what: &str) -> Result<(), ConfigError> {
    if p.rule != rule {
        return Err(ConfigError(format!("{what} needs rule {rule}")));
    }
    Ok(())
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn phase_frame(p: &Params, plot: &mut Plot, span: f64) {
    let n = 200;
    let thetas: Vec<f64> = (0..=n).map(|i| -span + 2.0 * span * i as f64 / n as f64).collect();
    let stable: Vec<(f64, f64)> = thetas.iter().map(|&t| (t, -2.0 * (0.5 * t).sin())).collect();
    let unstable: Vec<(f64, f64)> = thetas.iter().map(|&t| (t, 2.0 * (0.5 * t).sin())).collect();
    plot.line(&stable, "gray", false);
    plot.line(&unstable, "gray", true);
    let big = 1e3;
    match p.rule {
        Rule::Rule1 => {
            plot.line(&[(-span, -span * p.s), (span, span * p.s)], "black", true);
            plot.line(&[(0.0, -big), (0.0, big)], "black", true);
        }
        Rule::Rule2 => {
            plot.line(&[(p.sigma, -big), (p.sigma, big)], "black", true);
            plot.line(&[(-p.sigma, -big), (-p.sigma, big)], "black", true);
        }
    }
}

fn tag_summary(tags: &[OscillationTag]) -> String {
    if tags.is_empty() {
        return "none".into();
    }
    let count = |t: OscillationTag| tags.iter().filter(|&&x| x == t).count();
    format!(
        "{} zigzag, {} spiral-half, {} trapped, {} on stable manifold",
        count(OscillationTag::Zigzag),
        count(OscillationTag::SpiralHalf),
        count(OscillationTag::TrappedON),
        count(OscillationTag::WsAsymptotic)
    )
}

pub fn simulate(cfg: &RunConfig) -> Res {
    let p = cfg.params()?;
    let t_max = cfg.f64_or("tmax", 50.0)?;
    if t_max < 0.0 {
        return Err(ConfigError(format!("`tmax` must be non-negative, got {t_max}")).into());
    }
    let dt = cfg.dt_for(&p)?;
    let stride = cfg.f64_or("stride", 0.01)?;
    if !(stride > 0.0) {
        return Err(ConfigError(format!("`stride` must be positive, got {stride}")).into());
    }
    let starts = cfg.starts()?;
    let plot_on = cfg.bool_or("plot", false)?;
    let dir = out_dir(cfg)?;
    let mut curves = Vec::new();
    for (k, &(th, ph)) in starts.iter().enumerate() {
        let run = simulate_with(State::new(th, ph), &p, SimConfig::new(t_max, dt))
            .map_err(|e| Failure::Numeric(format!("start ({th}, {ph}): {e}")))?;
        let samples = run.sample(stride);
        csv_ctx(io::write_trajectory(create(&dir, &format!("trajectory_{k}.csv"))?, &samples), "trajectory")?;
        csv_ctx(io::write_events(create(&dir, &format!("events_{k}.csv"))?, &run.events), "events")?;
        let tags = match p.rule {
            Rule::Rule1 => tag_summary(&classify_oscillation(&run.events, &p)),
            Rule::Rule2 => "untagged under rule 2".into(),
        };
        println!(
            "start {k} ({th}, {ph}): {:?} at t = {:.6}, final (theta, phi) = ({:.6e}, {:.6e}), {} events, oscillations: {tags}",
            run.termination,
            run.final_time,
            run.final_state.theta,
            run.final_state.phi,
            run.events.len()
        );
        curves.push(samples.iter().map(|(_, x, _)| (x.theta, x.phi)).collect::<Vec<_>>());
    }
    if plot_on {
        let all: Vec<(f64, f64)> = curves.iter().flatten().copied().collect();
        let mut plot = Plot::fitting(&all).labels("phase plane", "theta", "phi");
        let span = all.iter().map(|v| v.0.abs()).fold(0.5, f64::max) * 1.2;
        phase_frame(&p, &mut plot, span);
        for (k, c) in curves.iter().enumerate() {
            plot.line(c, COLORS[k % COLORS.len()], false);
        }
        save_svg(&dir, "phase.svg", &plot)?;
    }
    Ok(())
}

pub fn zero_delay(cfg: &RunConfig) -> Res {
    let p = cfg.params()?;
    require_rule(&p, Rule::Rule1, "zero-delay")?;
    let t_max = cfg.f64_or("tmax", 20.0)?;
    let dt = cfg.f64_or("dt", 1e-3)?;
    let every = cfg.usize_or("every", 10)?;
    let (th, ph) = cfg.starts()?[0];
    let dir = out_dir(cfg)?;
    let run = simulate_zero_delay(State::new(th, ph), &p, t_max, dt).map_err(|e| Failure::Numeric(e.to_string()))?;
    csv_ctx(io::write_zero_delay(create(&dir, "zero_delay.csv")?, &run, every), "zero_delay.csv")?;
    csv_ctx(io::write_zero_delay_events(create(&dir, "zero_delay_events.csv")?, &run), "zero_delay_events.csv")?;
    match sliding_region(&p) {
        Some(r) => println!("sliding region on sigma1: {:.12} <= |theta| <= {:.12} (attracting: {})", r.lo, r.hi, r.attracting),
        None => println!("no sliding region on sigma1"),
    }
    if let Ok(g) = grazing_off(p.s) {
        println!("OFF field grazes sigma1 at theta = {g:.12}");
    }
    if let Some(g) = grazing_on(&p) {
        println!("ON field grazes sigma1 at theta = {g:.12}");
    }
    let fin = run.final_state();
    println!("{} events, final (theta, phi) = ({:.6e}, {:.6e}), diverged: {}", run.events.len(), fin.theta, fin.phi, run.diverged);
    if cfg.get("a_min").is_some() {
        zero_delay_diagram(cfg, &p, &dir)?;
    }
    Ok(())
}

/// Equilibrium branches and the ON grazing point of the undelayed system
/// against `a`. The origin is stable exactly when the controlled
/// linearisation is, `a > 1`, where the saddle pair is born.
fn zero_delay_diagram(cfg: &RunConfig, p: &Params, dir: &Path) -> Res {
    let grid = cfg.grid("a", 61)?;
    let mut rows = Vec::new();
    let mut stable_pts = Vec::new();
    let mut unstable_pts = Vec::new();
    let mut graze_pts = Vec::new();
    for &a in &grid {
        let q = p.with_a(a);
        let origin_stable = a > 1.0;
        rows.push(vec![io::num(a), "origin".into(), io::num(0.0), stability(origin_stable).into()]);
        if origin_stable { stable_pts.push((a, 0.0)) } else { unstable_pts.push((a, 0.0)) }
        for (k, th) in on_equilibria(&q).into_iter().enumerate() {
            rows.push(vec![io::num(a), format!("saddle{k}"), io::num(th), stability(false).into()]);
            unstable_pts.push((a, th));
        }
        if let Some(g) = grazing_on(&q) {
            rows.push(vec![io::num(a), "grazing_on".into(), io::num(g), "".into()]);
            graze_pts.push((a, g));
        }
    }
    let header = ["a", "branch_id", "theta", "stability"];
    csv_ctx(io::write_table(create(dir, "zero_delay_diagram.csv")?, &header, &rows), "zero_delay_diagram.csv")?;
    let y_hi = unstable_pts.iter().chain(&graze_pts).map(|v| v.1).fold(0.5, f64::max).min(std::f64::consts::PI);
    let mut plot = Plot::new((grid[0], grid[grid.len() - 1]), (-0.05, y_hi * 1.05)).labels("undelayed system", "a", "theta");
    plot.points(&stable_pts, "black");
    plot.points(&unstable_pts, "gray");
    plot.line(&graze_pts, "black", true);
    save_svg(dir, "zero_delay_diagram.svg", &plot)?;
    let pf = 1.0;
    let sl = 1.0 - p.b * p.s - p.s * p.s;
    println!("equilibrium pair meets the origin at a = {pf}, ON grazing point meets the origin at a = {sl:.12}");
    Ok(())
}

fn stability(stable: bool) -> &'static str {
    if stable { "stable" } else { "unstable" }
}

pub fn asymptote(cfg: &RunConfig) -> Res {
    let curve = cfg.get("curve").unwrap_or("dib").to_string();
    let g = cfg.g()?;
    let dir = out_dir(cfg)?;
    let mut rows = Vec::new();
    let mut push = |name: &str, x: f64, y: Result<f64, String>| match y {
        Ok(v) => rows.push(vec![name.to_string(), io::num(x), io::num(v), "ok".to_string()]),
        Err(e) => {
            eprintln!("warning: {name} at {x}: {e}; row skipped");
            rows.push(vec![name.to_string(), io::num(x), "nan".to_string(), "skipped_singular".to_string()]);
        }
    };
    match curve.as_str() {
        "dib" | "criticality" | "homoclinic" => {
            let b = cfg.f64_req("b")?;
            let s = cfg.f64_req("s")?;
            for a in cfg.grid("a", 41)? {
                let y = match curve.as_str() {
                    "dib" => dib_curve(a, b, s),
                    "criticality" => criticality_curve(a, b, s, g),
                    _ => homoclinic_curve(a, b, s),
                };
                push(&curve, a, y.map_err(|e| e.to_string()));
            }
        }
        "rule2" => {
            let a = cfg.f64_req("a")?;
            let b = cfg.f64_req("b")?;
            let sigma = cfg.f64_req("sigma")?;
            let lo = cfg.f64_req("tau_min")?;
            let hi = cfg.f64_req("tau_max")?;
            let n = cfg.usize_or("tau_n", 21)?;
            if n == 0 || !(lo > 0.0 && hi >= lo) {
                return Err(ConfigError("empty grid: rule2 needs 0 < tau_min <= tau_max and tau_n > 0".into()).into());
            }
            for i in 0..n {
                let tau = if n == 1 { lo } else { lo * (hi / lo).powf(i as f64 / (n - 1) as f64) };
                let p = Params::rule2(a, b, tau, sigma, g);
                push("rule2", tau, rule2_periodic(&p).map(|o| o.phi0).map_err(|e| e.to_string()));
            }
        }
        other => {
            return Err(ConfigError(format!("`curve` must be dib, criticality, homoclinic or rule2, got `{other}`")).into())
        }
    }
    csv_ctx(io::write_table(create(&dir, "asymptote.csv")?, &["curve", "x", "y", "status"], &rows), "asymptote.csv")?;
    println!("{} rows written to {}", rows.len(), dir.join("asymptote.csv").display());
    Ok(())
}

fn write_points(dir: &Path, pts: &[BifPoint]) -> anyhow::Result<()> {
    csv_ctx(io::write_bif_points(create(dir, "bifurcations.csv")?, pts), "bifurcations.csv")
}

pub fn scan(cfg: &RunConfig) -> Res {
    match cfg.get("kind").unwrap_or("curves") {
        "curves" => scan_curves(cfg),
        "plane" => scan_plane(cfg),
        "diagram" => scan_diagram(cfg),
        other => Err(ConfigError(format!("`kind` must be curves, plane or diagram, got `{other}`")).into()),
    }
}

fn scan_curves(cfg: &RunConfig) -> Res {
    let mut c = cfg.clone();
    if c.get("a").is_none() {
        c.set("a", "1.5")?;
    }
    let p = c.params()?;
    require_rule(&p, Rule::Rule1, "scan kind=curves")?;
    let grid = cfg.grid("a", 17)?;
    let dir = out_dir(cfg)?;
    let mut pts = curve_sweep(&p, &grid);
    if let (Some(&lo), Some(&hi)) = (grid.first(), grid.last()) {
        pts.extend(find_criticality_change(&p, lo, hi));
    }
    write_points(&dir, &pts)?;
    let mut rows = Vec::new();
    let fine: Vec<f64> = (0..=200).map(|i| grid[0] + (grid[grid.len() - 1] - grid[0]) * i as f64 / 200.0).collect();
    let mut dib_line = Vec::new();
    let mut hc_line = Vec::new();
    for &a in &fine {
        for (name, y) in [
            ("dib", dib_curve(a, p.b, p.s)),
            ("criticality", criticality_curve(a, p.b, p.s, p.g)),
            ("homoclinic", homoclinic_curve(a, p.b, p.s)),
        ] {
            match y {
                Ok(v) => {
                    rows.push(vec![name.into(), io::num(a), io::num(v), "ok".into()]);
                    if name == "dib" {
                        dib_line.push((a, -v / p.s));
                    } else if name == "homoclinic" && p.g == GKind::Cosine {
                        hc_line.push((a, -v / p.s));
                    }
                }
                Err(_) => rows.push(vec![name.into(), io::num(a), "nan".into(), "skipped_singular".into()]),
            }
        }
    }
    csv_ctx(io::write_table(create(&dir, "asymptote.csv")?, &["curve", "x", "y", "status"], &rows), "asymptote.csv")?;
    let scaled: Vec<(f64, f64)> = pts.iter().map(|b| (b.a, -b.tau / p.s)).collect();
    let mut plot = Plot::fitting(&scaled).labels("bifurcation set", "a", "-tau/s");
    plot.line(&dib_line, "black", true);
    plot.line(&hc_line, "black", true);
    for (k, kind) in [BifKind::Dib, BifKind::SaddleNode, BifKind::Homoclinic, BifKind::CriticalityChange].iter().enumerate() {
        let line: Vec<(f64, f64)> = pts.iter().filter(|b| b.kind == *kind).map(|b| (b.a, -b.tau / p.s)).collect();
        plot.line(&line, COLORS[k], false);
        plot.points(&line, COLORS[k]);
        if let Some(&(x, y)) = line.first() {
            plot.text(x, y, kind.label());
        }
    }
    save_svg(&dir, "overlay.svg", &plot)?;
    for b in &pts {
        println!("{:<5} a = {:.6}  tau = {:.8}  witness = {:.6e}", b.kind.label(), b.a, b.tau, b.witness);
    }
    Ok(())
}

fn scan_plane(cfg: &RunConfig) -> Res {
    let tau = cfg.f64_req("tau")?;
    let s = cfg.f64_or("s", 0.0)?;
    if tau < 0.0 || s > 0.0 {
        return Err(ConfigError("plane scan needs tau >= 0 and s <= 0".into()).into());
    }
    let a_grid = cfg.grid("a", 21)?;
    let b_grid = cfg.grid("b", 21)?;
    let dir = out_dir(cfg)?;
    let cells = plane_scan(&a_grid, &b_grid, tau, s);
    csv_ctx(io::write_plane(create(&dir, "plane.csv")?, &cells), "plane.csv")?;
    let curves = plane_curves(&a_grid, &b_grid, tau, s);
    write_points(&dir, &curves)?;
    let mut plot = Plot::new((a_grid[0], a_grid[a_grid.len() - 1]), (b_grid[0], b_grid[b_grid.len() - 1]))
        .labels("linearised plane", "a", "b");
    for (k, kind) in [BifKind::PlaneZigzagUnit, BifKind::PlaneZigzagOntoStable, BifKind::PlaneSpiralUnit, BifKind::PlaneSpiralOntoStable]
        .iter()
        .enumerate()
    {
        let mut pts: Vec<(f64, f64)> = curves.iter().filter(|c| c.kind == *kind).map(|c| (c.a, c.b)).collect();
        pts.sort_by(|x, y| x.1.total_cmp(&y.1));
        plot.points(&pts, COLORS[k]);
    }
    save_svg(&dir, "plane.svg", &plot)?;
    println!("{} cells, {} curve points", cells.len(), curves.len());
    Ok(())
}

fn scan_diagram(cfg: &RunConfig) -> Res {
    let mut c = cfg.clone();
    if c.get("a").is_none() {
        c.set("a", "1.5")?;
    }
    let p = c.params()?;
    let grid = cfg.grid("a", 41)?;
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let dir = out_dir(cfg)?;
    let rows = bif_diagram(&p, &grid);
    csv_ctx(io::write_branches(create(&dir, "branches.csv")?, &rows), "branches.csv")?;
    let mut marks: Vec<BifPoint> = Vec::new();
    match p.rule {
        Rule::Rule1 => marks.extend(find_dib_in_a(&p, lo, hi)),
        Rule::Rule2 => {
            marks.extend(boundary_equilibrium(&p).filter(|b| b.a >= lo && b.a <= hi));
            // Both window ends are bracketed from a grid point that has a local orbit.
            let inside = rows.iter().filter(|r| r.kind == BranchKind::LocalOrbit).map(|r| r.a).collect::<Vec<_>>();
            if let (Some(&first), Some(&last)) = (inside.first(), inside.last()) {
                marks.extend(find_dead_zone_onset(&p, lo, first));
                marks.extend(find_symmetric_transition(&p, last, hi));
            }
        }
    }
    write_points(&dir, &marks)?;
    let all: Vec<(f64, f64)> = rows.iter().map(|r| (r.a, r.theta_max)).collect();
    let mut plot = Plot::fitting(&all).labels("bifurcation diagram", "a", "theta");
    for (k, kind) in [BranchKind::Equilibrium, BranchKind::ZigzagOrbit, BranchKind::LocalOrbit, BranchKind::SymmetricOrbit].iter().enumerate() {
        for stable in [true, false] {
            let sel: Vec<&_> = rows.iter().filter(|r| r.kind == *kind && r.stable == stable).collect();
            let top: Vec<(f64, f64)> = sel.iter().map(|r| (r.a, r.theta_max)).collect();
            plot.points(&top, if stable { COLORS[k] } else { "gray" });
            if *kind != BranchKind::Equilibrium {
                let bottom: Vec<(f64, f64)> = sel.iter().map(|r| (r.a, r.theta_min)).collect();
                plot.points(&bottom, if stable { COLORS[k] } else { "gray" });
            }
        }
    }
    if p.rule == Rule::Rule2 {
        plot.line(&[(lo, p.sigma), (hi, p.sigma)], "black", true);
    }
    save_svg(&dir, "diagram.svg", &plot)?;
    for b in &marks {
        println!("{:<5} a = {:.6}  tau = {:.6}  witness = {:.6e}", b.kind.label(), b.a, b.tau, b.witness);
    }
    println!("{} branch rows", rows.len());
    Ok(())
}

pub fn burst(cfg: &RunConfig) -> Res {
    let sample_a = cfg.f64_or("sample_a", 1.18)?;
    let mut c = cfg.clone();
    if c.get("a").is_none() {
        c.set("a", &sample_a.to_string())?;
    }
    let p = c.params()?;
    require_rule(&p, Rule::Rule1, "burst")?;
    if p.tau <= 0.0 {
        return Err(ConfigError("burst needs tau > 0".into()).into());
    }
    let a_lo = cfg.f64_or("a_min", 1.10)?;
    let a_hi = cfg.f64_or("a_max", 1.25)?;
    if !(a_hi > a_lo) {
        return Err(ConfigError(format!("empty range: a_max ({a_hi}) must exceed a_min ({a_lo})")).into());
    }
    let dir = out_dir(cfg)?;
    let d = burst_diagnose(&p, a_lo, a_hi, sample_a);
    let opt = |v: Option<f64>| v.map_or("nan".to_string(), io::num);
    let kind = d.attractor_kind.map_or("undetermined".to_string(), |k| format!("{k:?}").to_lowercase());
    let rows = vec![
        vec!["a1".to_string(), opt(d.a1)],
        vec!["a2".to_string(), opt(d.a2)],
        vec!["a3".to_string(), opt(d.a3)],
        vec!["sample_a".to_string(), io::num(d.sample_a)],
        vec!["excursion_reentry_theta".to_string(), opt(d.excursion_reentry_theta)],
        vec!["short_off_exit_theta".to_string(), opt(d.short_off_exit_theta)],
        vec!["attractor_kind".to_string(), kind],
        vec!["attractor_period".to_string(), d.attractor_period.map_or("nan".to_string(), |k| k.to_string())],
    ];
    csv_ctx(io::write_table(create(&dir, "burst.csv")?, &["quantity", "value"], &rows), "burst.csv")?;
    let seq = short_off_sequence(&p.with_a(sample_a), 1e-4, cfg.f64_or("tmax", 3000.0)?);
    let seq_rows: Vec<Vec<String>> = seq.iter().map(|(t, th)| vec![io::num(*t), io::num(*th)]).collect();
    csv_ctx(io::write_table(create(&dir, "short_off.csv")?, &["t", "theta_exit"], &seq_rows), "short_off.csv")?;
    for r in &rows {
        println!("{:<24} {}", r[0], r[1]);
    }
    Ok(())
}
