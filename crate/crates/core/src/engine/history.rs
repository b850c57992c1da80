use std::collections::VecDeque;

use crate::model::State;

/// One accepted integration step with its cubic Hermite interpolant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistorySegment {
    pub t_lo: f64,
    pub t_hi: f64,
    pub x_lo: State,
    pub x_hi: State,
    /// Time derivatives at the two ends.
    pub f_lo: State,
    pub f_hi: State,
    pub control_on: bool,
}

impl HistorySegment {
    #[inline]
    pub fn duration(&self) -> f64 {
        self.t_hi - self.t_lo
    }

    /// Dense output at `t` (extrapolates outside the segment).
    #[inline]
    pub fn eval(&self, t: f64) -> State {
        let h = self.t_hi - self.t_lo;
        if h <= 0.0 {
            return self.x_lo;
        }
        let s = (t - self.t_lo) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        self.x_lo * h00 + self.f_lo * (h10 * h) + self.x_hi * h01 + self.f_hi * (h11 * h)
    }
}

/// Stored trajectory, queried by the delayed terms.
#[derive(Clone, Debug, Default)]
pub(crate) struct History {
    segs: VecDeque<HistorySegment>,
    /// Number of segments dropped from the front when pruning.
    dropped: usize,
}

impl History {
    pub fn push(&mut self, seg: HistorySegment) {
        self.segs.push_back(seg);
    }

    pub fn first_time(&self) -> Option<f64> {
        self.segs.front().map(|s| s.t_lo)
    }

    pub fn lookup(&self, t: f64) -> Option<State> {
        if self.segs.is_empty() {
            return None;
        }
        let idx = self.segs.partition_point(|s| s.t_hi < t);
        let idx = idx.min(self.segs.len() - 1);
        Some(self.segs[idx].eval(t))
    }

    /// Drops segments that end before `t`.
    pub fn prune_before(&mut self, t: f64) {
        while self.segs.len() > 1 && self.segs[0].t_hi < t {
            self.segs.pop_front();
            self.dropped += 1;
        }
    }

    pub fn into_vec(self) -> Vec<HistorySegment> {
        self.segs.into()
    }

    pub fn segments(&self) -> impl Iterator<Item = &HistorySegment> {
        self.segs.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubics() {
        // x(t) = t^3 - t, x' = 3t^2 - 1
        let x = |t: f64| t * t * t - t;
        let dx = |t: f64| 3.0 * t * t - 1.0;
        let seg = HistorySegment {
            t_lo: 0.5,
            t_hi: 1.25,
            x_lo: State::new(x(0.5), 0.0),
            x_hi: State::new(x(1.25), 0.0),
            f_lo: State::new(dx(0.5), 0.0),
            f_hi: State::new(dx(1.25), 0.0),
            control_on: false,
        };
        for i in 0..=10 {
            let t = 0.5 + 0.075 * i as f64;
            assert!((seg.eval(t).theta - x(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn lookup_picks_covering_segment() {
        let mut h = History::default();
        for k in 0..4 {
            let t = k as f64;
            h.push(HistorySegment {
                t_lo: t,
                t_hi: t + 1.0,
                x_lo: State::new(t, 0.0),
                x_hi: State::new(t + 1.0, 0.0),
                f_lo: State::new(1.0, 0.0),
                f_hi: State::new(1.0, 0.0),
                control_on: false,
            });
        }
        assert!((h.lookup(2.5).unwrap().theta - 2.5).abs() < 1e-15);
        h.prune_before(2.0);
        assert_eq!(h.first_time(), Some(1.0));
        h.prune_before(2.5);
        assert_eq!(h.first_time(), Some(2.0));
        assert!((h.lookup(3.75).unwrap().theta - 3.75).abs() < 1e-15);
    }
}
