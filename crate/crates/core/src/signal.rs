use crate::error::{Error, Result};

/// A uniformly sampled, real-valued waveform.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    /// Hz.
    pub sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        let s = Signal { samples, sample_rate };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Data("signal is empty".into()));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Data(format!("invalid sample rate {}", self.sample_rate)));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    /// Circular shift by `shift` samples (positive delays the signal).
    pub fn rotated(&self, shift: isize) -> Signal {
        let n = self.samples.len() as isize;
        let samples = (0..n).map(|i| self.samples[(i - shift).rem_euclid(n) as usize]).collect();
        Signal { samples, sample_rate: self.sample_rate }
    }

    pub fn reversed(&self) -> Signal {
        let mut samples = self.samples.clone();
        samples.reverse();
        Signal { samples, sample_rate: self.sample_rate }
    }
}

/// Index into a length-`len` sequence for position `p` of its symmetric
/// (reflect, edge not repeated) extension to `n_pad` samples. The original
/// occupies positions `0..len`; the padding is split between the right end
/// and the wrapped-around left end.
pub fn reflect_index(p: usize, len: usize, n_pad: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let extra = n_pad - len;
    let s = if p < len + extra.div_ceil(2) { p as isize } else { p as isize - n_pad as isize };
    let period = 2 * (len as isize - 1);
    let m = s.rem_euclid(period);
    if m >= len as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_layout() {
        let idx: Vec<usize> = (0..8).map(|p| reflect_index(p, 4, 8)).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 2, 1, 2, 1]);
        let idx: Vec<usize> = (0..16).map(|p| reflect_index(p, 3, 16)).collect();
        assert!(idx.iter().all(|&i| i < 3));
        assert_eq!(&idx[..5], &[0, 1, 2, 1, 0]);
        assert_eq!(reflect_index(5, 6, 6), 5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Signal::new(vec![], 1.0).is_err());
        assert!(Signal::new(vec![0.0, f64::NAN], 1.0).is_err());
        assert!(Signal::new(vec![0.0], 0.0).is_err());
    }
}
