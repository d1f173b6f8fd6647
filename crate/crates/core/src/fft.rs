//! Row-column 2-D FFT over row-major `H × W` grids.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_forward: Arc<dyn Fft<f64>>,
    row_inverse: Arc<dyn Fft<f64>>,
    col_forward: Arc<dyn Fft<f64>>,
    col_inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_forward: planner.plan_fft_forward(width),
            row_inverse: planner.plan_fft_inverse(width),
            col_forward: planner.plan_fft_forward(height),
            col_inverse: planner.plan_fft_inverse(height),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.row_forward, &self.col_forward);
    }

    /// Normalized inverse transform (divides by `H·W`).
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.row_inverse, &self.col_inverse);
        let scale = 1.0 / self.len() as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    /// Inverse transform of a spectrum known to be conjugate-symmetric.
    /// Returns the real part and the largest discarded imaginary magnitude.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> (Vec<f64>, f64) {
        self.inverse(&mut spectrum);
        let residue = spectrum.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        (spectrum.into_iter().map(|v| v.re).collect(), residue)
    }

    /// Index of the frequency `−u` for the flattened frequency `u`.
    pub fn mirror(&self, index: usize) -> usize {
        let (r, c) = (index / self.width, index % self.width);
        let mr = (self.height - r) % self.height;
        let mc = (self.width - c) % self.width;
        mr * self.width + mc
    }

    fn transform(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.len());
        rows.process(buf);
        let mut column = vec![Complex64::new(0.0, 0.0); self.height];
        for c in 0..self.width {
            for r in 0..self.height {
                column[r] = buf[r * self.width + c];
            }
            cols.process(&mut column);
            for r in 0..self.height {
                buf[r * self.width + c] = column[r];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_dc_term() {
        let fft = Fft2::new(3, 5);
        let data: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).sin()).collect();
        let spec = fft.forward_real(&data);
        let dc: f64 = data.iter().sum();
        assert!((spec[0].re - dc).abs() < 1e-12);
        let (back, residue) = fft.inverse_real(spec);
        assert!(residue < 1e-12);
        for (a, b) in back.iter().zip(&data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn real_input_spectrum_is_conjugate_symmetric() {
        let fft = Fft2::new(4, 6);
        let data: Vec<f64> = (0..24).map(|i| ((i * 7) % 5) as f64).collect();
        let spec = fft.forward_real(&data);
        for u in 0..24 {
            let m = fft.mirror(u);
            assert!((spec[u] - spec[m].conj()).norm() < 1e-12);
        }
    }
}
