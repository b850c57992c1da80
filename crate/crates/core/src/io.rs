//! CSV output. Numbers are written with 17 significant digits so that values
//! round-trip exactly.

use std::io::Write;

use crate::bifscan::{BifPoint, BranchRow, PlaneCell};
use crate::engine::{Event, SimResult};
use crate::filippov::{Mode, ZeroDelayRun};
use crate::model::{hamiltonian, State};

pub type CsvResult = Result<(), csv::Error>;

/// Formats `x` with 17 significant digits.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// Generic table: a header row and string cells.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> CsvResult {
    let mut wr = writer(w);
    wr.write_record(header)?;
    for r in rows {
        wr.write_record(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Samples `(t, state, control on)`, with the energy of each state.
pub fn write_trajectory<W: Write>(w: W, samples: &[(f64, State, bool)]) -> CsvResult {
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|(t, x, on)| vec![num(*t), num(x.theta), num(x.phi), (*on as u8).to_string(), num(hamiltonian(*x))])
        .collect();
    write_table(w, &["t", "theta", "phi", "control_on", "H"], &rows)
}

pub fn write_events<W: Write>(w: W, events: &[Event]) -> CsvResult {
    let rows: Vec<Vec<String>> =
        events.iter().map(|e| vec![num(e.t), e.kind.label(), num(e.state.theta), num(e.state.phi)]).collect();
    write_table(w, &["t", "kind", "theta", "phi"], &rows)
}

/// Trajectory sampled every `stride` time units, plus the final state.
pub fn write_run<W: Write>(w: W, run: &SimResult, stride: f64) -> CsvResult {
    write_trajectory(w, &run.sample(stride))
}

fn mode_label(m: Mode) -> &'static str {
    match m {
        Mode::Off => "off",
        Mode::On => "on",
        Mode::Sliding => "sliding",
    }
}

pub fn write_zero_delay<W: Write>(w: W, run: &ZeroDelayRun, every: usize) -> CsvResult {
    let every = every.max(1);
    let n = run.samples.len();
    let rows: Vec<Vec<String>> = run
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| i % every == 0 || i + 1 == n)
        .map(|(_, (t, x, m))| vec![num(*t), num(x.theta), num(x.phi), mode_label(*m).to_string()])
        .collect();
    write_table(w, &["t", "theta", "phi", "mode"], &rows)
}

pub fn write_zero_delay_events<W: Write>(w: W, run: &ZeroDelayRun) -> CsvResult {
    let rows: Vec<Vec<String>> = run
        .events
        .iter()
        .map(|e| vec![num(e.t), e.kind.label().to_string(), num(e.state.theta), num(e.state.phi)])
        .collect();
    write_table(w, &["t", "kind", "theta", "phi"], &rows)
}

pub fn write_bif_points<W: Write>(w: W, points: &[BifPoint]) -> CsvResult {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|b| {
            vec![b.kind.label().to_string(), num(b.a), num(b.b), num(b.tau), num(b.s_or_sigma), num(b.witness)]
        })
        .collect();
    write_table(w, &["kind", "a", "b", "tau", "s_or_sigma", "witness"], &rows)
}

pub fn write_plane<W: Write>(w: W, cells: &[PlaneCell]) -> CsvResult {
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![num(c.a), num(c.b), c.label.zigzag.label().to_string(), c.label.spiral.label().to_string()]
        })
        .collect();
    write_table(w, &["a", "b", "zigzag_label", "spiral_label"], &rows)
}

pub fn write_branches<W: Write>(w: W, rows: &[BranchRow]) -> CsvResult {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let stability = if r.stable { "stable" } else { "unstable" };
            vec![num(r.a), r.branch_id.clone(), num(r.theta_min), num(r.theta_max), stability.to_string()]
        })
        .collect();
    write_table(w, &["a", "branch_id", "theta_min", "theta_max", "stability"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 1e-300, std::f64::consts::PI] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::NAN), "nan");
    }

    #[test]
    fn empty_trajectory_is_header_only() {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,theta,phi,control_on,H\n");
    }
}
