//! Time-stamped sample buffer with linear interpolation, used for the delayed
//! input and state lookups.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HistoryError {
    #[error("lookup at t = {t} precedes the buffer start {start}")]
    Underflow { t: f64, start: f64 },
    #[error("sample at t = {t} is earlier than the latest sample {last}")]
    NonMonotone { t: f64, last: f64 },
    #[error("sample has {found} components, buffer holds {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("empty history buffer")]
    Empty,
}

/// Outcome of a lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Interpolated,
    /// Query beyond the latest sample; the latest value was returned.
    Clamped,
}

#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dim: usize,
    times: Vec<f64>,
    data: Vec<f64>,
}

impl HistoryBuffer {
    pub fn new(dim: usize) -> Self {
        HistoryBuffer {
            dim,
            times: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, samples: usize) -> Self {
        HistoryBuffer {
            dim,
            times: Vec::with_capacity(samples),
            data: Vec::with_capacity(samples * dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn end(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Append a sample. A sample at the latest time replaces it.
    pub fn push(&mut self, t: f64, value: &[f64]) -> Result<(), HistoryError> {
        if value.len() != self.dim {
            return Err(HistoryError::DimMismatch {
                expected: self.dim,
                found: value.len(),
            });
        }
        match self.times.last() {
            Some(&last) if t == last => {
                let i = self.times.len() - 1;
                self.data[i * self.dim..].copy_from_slice(value);
                return Ok(());
            }
            Some(&last) if t < last => return Err(HistoryError::NonMonotone { t, last }),
            _ => {}
        }
        self.times.push(t);
        self.data.extend_from_slice(value);
        Ok(())
    }

    /// Linear interpolation at `t`, written into `out`.
    pub fn sample(&self, t: f64, out: &mut [f64]) -> Result<Lookup, HistoryError> {
        let (&first, &last) = match (self.times.first(), self.times.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(HistoryError::Empty),
        };
        if t < first {
            return Err(HistoryError::Underflow { t, start: first });
        }
        if t >= last {
            out.copy_from_slice(self.value(self.times.len() - 1));
            return Ok(if t > last { Lookup::Clamped } else { Lookup::Interpolated });
        }
        let hi = self.times.partition_point(|&s| s <= t);
        let lo = hi - 1;
        let (t0, t1) = (self.times[lo], self.times[hi]);
        let w = (t - t0) / (t1 - t0);
        let (v0, v1) = (self.value(lo), self.value(hi));
        for ((o, a), b) in out.iter_mut().zip(v0).zip(v1) {
            *o = a + w * (b - a);
        }
        Ok(Lookup::Interpolated)
    }

    /// Largest squared Euclidean norm over `[lo, hi]`: the stored samples in
    /// the window plus the interpolated value at `lo`.
    pub fn sup_norm_sq(&self, lo: f64, hi: f64) -> Result<f64, HistoryError> {
        let mut edge = vec![0.0; self.dim];
        self.sample(lo, &mut edge)?;
        let mut best = edge.iter().map(|x| x * x).sum::<f64>();
        let start = self.times.partition_point(|&s| s < lo);
        for i in start..self.times.len() {
            if self.times[i] > hi {
                break;
            }
            best = best.max(self.value(i).iter().map(|x| x * x).sum());
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp() -> HistoryBuffer {
        let mut h = HistoryBuffer::new(2);
        for i in 0..=10 {
            let t = i as f64 * 0.1;
            h.push(t, &[t, -2.0 * t]).unwrap();
        }
        h
    }

    #[test]
    fn interpolates_linear_data_exactly() {
        let h = ramp();
        let mut out = [0.0; 2];
        assert_eq!(h.sample(0.537, &mut out), Ok(Lookup::Interpolated));
        assert!((out[0] - 0.537).abs() < 1e-15);
        assert!((out[1] + 1.074).abs() < 1e-15);
        h.sample(0.0, &mut out).unwrap();
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn clamps_past_the_end() {
        let h = ramp();
        let mut out = [0.0; 2];
        assert_eq!(h.sample(1.0, &mut out), Ok(Lookup::Interpolated));
        assert_eq!(h.sample(1.3, &mut out), Ok(Lookup::Clamped));
        assert!((out[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn underflow_is_an_error() {
        let h = ramp();
        let mut out = [0.0; 2];
        assert!(matches!(
            h.sample(-1e-9, &mut out),
            Err(HistoryError::Underflow { .. })
        ));
        let empty = HistoryBuffer::new(1);
        assert_eq!(empty.sample(0.0, &mut [0.0]), Err(HistoryError::Empty));
    }

    #[test]
    fn push_rules() {
        let mut h = HistoryBuffer::new(1);
        h.push(0.0, &[1.0]).unwrap();
        h.push(0.0, &[2.0]).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.value(0), &[2.0]);
        assert!(matches!(h.push(-0.5, &[0.0]), Err(HistoryError::NonMonotone { .. })));
        assert!(matches!(h.push(1.0, &[0.0, 1.0]), Err(HistoryError::DimMismatch { .. })));
    }

    #[test]
    fn sup_norm_window() {
        let mut h = HistoryBuffer::new(1);
        for (t, v) in [(0.0, 1.0), (1.0, 3.0), (2.0, -2.0), (3.0, 0.5)] {
            h.push(t, &[v]).unwrap();
        }
        // window [1.5, 3]: interpolated 0.5 at 1.5, then samples -2 and 0.5
        assert_eq!(h.sup_norm_sq(1.5, 3.0).unwrap(), 4.0);
        assert_eq!(h.sup_norm_sq(0.0, 3.0).unwrap(), 9.0);
        assert_eq!(h.sup_norm_sq(0.25, 0.5).unwrap(), 2.25);
    }

    proptest! {
        #[test]
        fn interpolant_stays_within_neighbours(values in prop::collection::vec(-10.0f64..10.0, 2..40), q in 0.0f64..1.0) {
            let mut h = HistoryBuffer::new(1);
            for (i, v) in values.iter().enumerate() {
                h.push(i as f64, &[*v]).unwrap();
            }
            let t = q * (values.len() - 1) as f64;
            let mut out = [0.0];
            h.sample(t, &mut out).unwrap();
            let i = (t.floor() as usize).min(values.len() - 2);
            let (lo, hi) = (values[i].min(values[i + 1]), values[i].max(values[i + 1]));
            prop_assert!(out[0] >= lo - 1e-12 && out[0] <= hi + 1e-12);
        }
    }
}
