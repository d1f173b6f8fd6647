//! Multi-channel correlation filter trained by weighted ridge regression in
//! the Fourier domain.
//!
//! The per-sample loss is `‖y_k − Σ_l f^l ⋆ x_k^l‖²` with `⋆` circular
//! convolution. By Parseval the weighted objective decouples over discrete
//! frequencies `u`, and each frequency contributes a `d × d` Hermitian system
//!
//! ```text
//! (Σ_k α_k conj(x̂_k(u)) x̂_k(u)ᵀ + λ I) f̂(u) = Σ_k α_k conj(x̂_k(u)) ŷ_k(u)
//! ```
//!
//! Only one frequency of each conjugate pair `(u, −u)` is solved; the other is
//! its conjugate, which keeps the filter exactly real.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::{FeatureMap, LabelMap, Learner};
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::weights::SimplexWeights;

/// One frame's training example: a feature map and its desired confidence map.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub features: FeatureMap,
    pub label: LabelMap,
    pub frame_index: usize,
}

impl TrainingSample {
    pub fn new(features: FeatureMap, label: LabelMap, frame_index: usize) -> Result<Self> {
        if (features.height(), features.width()) != (label.height(), label.width()) {
            return Err(Error::mismatch(
                format!("label {}x{}", features.height(), features.width()),
                format!("{}x{}", label.height(), label.width()),
            ));
        }
        Ok(Self {
            features,
            label,
            frame_index,
        })
    }
}

/// A training sample with its channel and label spectra precomputed.
#[derive(Debug, Clone)]
pub struct SpectralSample {
    frame_index: usize,
    height: usize,
    width: usize,
    features: Vec<Vec<Complex64>>,
    label: Vec<Complex64>,
}

impl SpectralSample {
    pub fn new(fft: &Fft2, sample: &TrainingSample) -> Result<Self> {
        let (h, w, d) = sample.features.shape();
        check_grid(fft, h, w)?;
        Ok(Self {
            frame_index: sample.frame_index,
            height: h,
            width: w,
            features: (0..d)
                .map(|l| fft.forward_real(sample.features.channel(l)))
                .collect(),
            label: fft.forward_real(sample.label.as_slice()),
        })
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn channels(&self) -> usize {
        self.features.len()
    }

    pub(crate) fn feature_spectra(&self) -> &[Vec<Complex64>] {
        &self.features
    }

    pub(crate) fn label_spectrum(&self) -> &[Complex64] {
        &self.label
    }
}

/// Filter coefficients `f^l` (spatial domain) with the regularization that
/// produced them.
#[derive(Debug, Clone)]
pub struct CorrelationFilter {
    coeffs: FeatureMap,
    regularization_weight: f64,
    spatial_penalty: Option<LabelMap>,
    spectrum: Vec<Vec<Complex64>>,
}

impl CorrelationFilter {
    pub fn from_coeffs(
        coeffs: FeatureMap,
        regularization_weight: f64,
        spatial_penalty: Option<LabelMap>,
    ) -> Result<Self> {
        if !(regularization_weight >= 0.0 && regularization_weight.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularization weight must be nonnegative, got {regularization_weight}"
            )));
        }
        if let Some(w) = &spatial_penalty {
            if (w.height(), w.width()) != (coeffs.height(), coeffs.width()) {
                return Err(Error::mismatch(
                    format!("penalty {}x{}", coeffs.height(), coeffs.width()),
                    format!("{}x{}", w.height(), w.width()),
                ));
            }
            if w.as_slice().iter().any(|&v| v <= 0.0) {
                return Err(Error::InvalidParameter("spatial penalty must be positive".into()));
            }
        }
        let fft = Fft2::new(coeffs.height(), coeffs.width());
        let spectrum = (0..coeffs.channels())
            .map(|l| fft.forward_real(coeffs.channel(l)))
            .collect();
        Ok(Self {
            coeffs,
            regularization_weight,
            spatial_penalty,
            spectrum,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize, regularization_weight: f64) -> Self {
        let n = height * width;
        Self {
            coeffs: FeatureMap::zeros(height, width, channels),
            regularization_weight,
            spatial_penalty: None,
            spectrum: vec![vec![Complex64::new(0.0, 0.0); n]; channels],
        }
    }

    pub fn coeffs(&self) -> &FeatureMap {
        &self.coeffs
    }

    pub fn regularization_weight(&self) -> f64 {
        self.regularization_weight
    }

    pub fn spatial_penalty(&self) -> Option<&LabelMap> {
        self.spatial_penalty.as_ref()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.coeffs.shape()
    }

    /// `λ Σ_l ‖f^l‖²`, or `λ Σ_l ‖w ⊙ f^l‖²` when a spatial penalty is set.
    pub fn penalty_value(&self) -> f64 {
        match &self.spatial_penalty {
            None => self.regularization_weight * self.coeffs.squared_norm(),
            Some(w) => self.regularization_weight * (0..self.coeffs.channels())
                .map(|l| {
                    self.coeffs
                        .channel(l)
                        .iter()
                        .zip(w.as_slice())
                        .map(|(f, w)| (w * f).powi(2))
                        .sum::<f64>()
                })
                .sum::<f64>(),
        }
    }

    pub(crate) fn spectrum(&self) -> &[Vec<Complex64>] {
        &self.spectrum
    }

    pub(crate) fn with_spectrum(
        fft: &Fft2,
        spectrum: Vec<Vec<Complex64>>,
        regularization_weight: f64,
        spatial_penalty: Option<LabelMap>,
    ) -> Result<Self> {
        let mut channels = Vec::with_capacity(spectrum.len());
        for s in &spectrum {
            let (real, residue) = fft.inverse_real(s.clone());
            let scale = real.iter().map(|v| v.abs()).fold(1.0, f64::max);
            debug_assert!(residue <= 1e-10 * scale, "imaginary residue {residue}");
            channels.push(real);
        }
        let coeffs = FeatureMap::from_channels(fft.height(), fft.width(), channels)?;
        Ok(Self {
            coeffs,
            regularization_weight,
            spatial_penalty,
            spectrum,
        })
    }
}

/// Wrapped Gaussian with peak 1 at `center`.
pub fn make_gaussian_label(
    height: usize,
    width: usize,
    center: (usize, usize),
    sigma: f64,
) -> Result<LabelMap> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("label sigma must be positive, got {sigma}")));
    }
    if center.0 >= height || center.1 >= width {
        return Err(Error::InvalidParameter(format!(
            "label center {center:?} outside {height}x{width} grid"
        )));
    }
    let wrapped = |i: usize, c: usize, n: usize| -> f64 {
        let d = i.abs_diff(c);
        d.min(n - d) as f64
    };
    let denom = 2.0 * sigma * sigma;
    let data = (0..height)
        .flat_map(|r| (0..width).map(move |c| (r, c)))
        .map(|(r, c)| {
            let dr = wrapped(r, center.0, height);
            let dc = wrapped(c, center.1, width);
            (-(dr * dr + dc * dc) / denom).exp()
        })
        .collect();
    LabelMap::new(height, width, data)
}

/// Exact weighted ridge solution over the given samples.
pub fn train_filter(
    samples: &[TrainingSample],
    alpha: &SimplexWeights,
    lambda: f64,
) -> Result<CorrelationFilter> {
    let first = samples.first().ok_or(Error::Empty("no training samples"))?;
    let fft = Fft2::new(first.features.height(), first.features.width());
    let spectral = samples
        .iter()
        .map(|s| SpectralSample::new(&fft, s))
        .collect::<Result<Vec<_>>>()?;
    solve_ridge(&fft, &spectral, alpha.as_slice(), lambda)
}

/// Confidence map `Σ_l f^l ⋆ x^l`.
pub fn filter_confidence(model: &CorrelationFilter, features: &FeatureMap) -> Result<LabelMap> {
    let fft = Fft2::new(features.height(), features.width());
    confidence_with(&fft, model, features)
}

/// Squared reconstruction error `‖y − Σ_l f^l ⋆ x^l‖²`, evaluated in the
/// Fourier domain.
pub fn filter_frame_loss(model: &CorrelationFilter, sample: &TrainingSample) -> Result<f64> {
    let fft = Fft2::new(sample.features.height(), sample.features.width());
    spectral_loss(&fft, model, &SpectralSample::new(&fft, sample)?)
}

pub(crate) fn confidence_with(
    fft: &Fft2,
    model: &CorrelationFilter,
    features: &FeatureMap,
) -> Result<LabelMap> {
    let (h, w, d) = features.shape();
    check_grid(fft, h, w)?;
    if model.shape() != (h, w, d) {
        return Err(Error::mismatch(format!("{:?}", model.shape()), format!("{:?}", (h, w, d))));
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); h * w];
    for (l, f_hat) in model.spectrum().iter().enumerate() {
        let x_hat = fft.forward_real(features.channel(l));
        for ((a, f), x) in acc.iter_mut().zip(f_hat).zip(&x_hat) {
            *a += f * x;
        }
    }
    let (real, _) = fft.inverse_real(acc);
    LabelMap::new(h, w, real)
}

pub(crate) fn spectral_loss(
    fft: &Fft2,
    model: &CorrelationFilter,
    sample: &SpectralSample,
) -> Result<f64> {
    let (h, w, d) = model.shape();
    if (sample.height, sample.width, sample.channels()) != (h, w, d) {
        return Err(Error::mismatch(
            format!("{:?}", (h, w, d)),
            format!("{:?}", (sample.height, sample.width, sample.channels())),
        ));
    }
    let n = fft.len();
    let mut total = 0.0;
    for u in 0..n {
        let mut residual = sample.label[u];
        for (f_hat, x_hat) in model.spectrum().iter().zip(&sample.features) {
            residual -= f_hat[u] * x_hat[u];
        }
        total += residual.norm_sqr();
    }
    Ok(total / n as f64)
}

pub(crate) fn solve_ridge(
    fft: &Fft2,
    frames: &[SpectralSample],
    alpha: &[f64],
    lambda: f64,
) -> Result<CorrelationFilter> {
    let first = frames.first().ok_or(Error::Empty("no training samples"))?;
    if alpha.len() != frames.len() {
        return Err(Error::mismatch(format!("{} weights", frames.len()), alpha.len()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let d = first.channels();
    for f in frames {
        check_grid(fft, f.height, f.width)?;
        if f.channels() != d {
            return Err(Error::mismatch(format!("{d} channels"), f.channels()));
        }
    }
    let active: Vec<(f64, &SpectralSample)> = alpha
        .iter()
        .copied()
        .zip(frames)
        .filter(|(a, _)| *a > 0.0)
        .collect();

    let n = fft.len();
    let solved: Vec<Option<Vec<Complex64>>> = (0..n)
        .into_par_iter()
        .map(|u| {
            if fft.mirror(u) < u {
                return Ok(None);
            }
            solve_frequency(&active, u, d, lambda).map(Some)
        })
        .collect::<Result<_>>()?;

    let zero = Complex64::new(0.0, 0.0);
    let mut spectrum = vec![vec![zero; n]; d];
    for (u, sol) in solved.iter().enumerate() {
        if let Some(f) = sol {
            let m = fft.mirror(u);
            for l in 0..d {
                spectrum[l][u] = f[l];
                spectrum[l][m] = f[l].conj();
            }
            if m == u {
                for channel in spectrum.iter_mut() {
                    channel[u].im = 0.0;
                }
            }
        }
    }
    CorrelationFilter::with_spectrum(fft, spectrum, lambda, None)
}

fn solve_frequency(
    active: &[(f64, &SpectralSample)],
    u: usize,
    d: usize,
    lambda: f64,
) -> Result<Vec<Complex64>> {
    let zero = Complex64::new(0.0, 0.0);
    let mut gram = vec![zero; d * d];
    let mut rhs = vec![zero; d];
    let mut x = vec![zero; d];
    for (a, s) in active {
        for l in 0..d {
            x[l] = s.features[l][u];
        }
        let y = s.label[u];
        for i in 0..d {
            let xi = x[i].conj() * *a;
            rhs[i] += xi * y;
            for j in 0..d {
                gram[i * d + j] += xi * x[j];
            }
        }
    }
    for i in 0..d {
        gram[i * d + i] += lambda;
    }
    solve_hermitian(&mut gram, &mut rhs, d).ok_or_else(|| {
        Error::Degenerate(format!("normal equations singular at frequency {u}"))
    })?;
    Ok(rhs)
}

/// Cholesky solve of a Hermitian positive definite system, in place.
/// Returns `None` when a pivot is not safely positive.
fn solve_hermitian(a: &mut [Complex64], b: &mut [Complex64], d: usize) -> Option<()> {
    let scale = (0..d).map(|i| a[i * d + i].re).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let tol = 1e-13 * scale;
    for j in 0..d {
        let mut pivot = a[j * d + j].re;
        for k in 0..j {
            pivot -= a[j * d + k].norm_sqr();
        }
        if !(pivot > tol) {
            return None;
        }
        let pivot = pivot.sqrt();
        a[j * d + j] = Complex64::new(pivot, 0.0);
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k].conj();
            }
            a[i * d + j] = v / pivot;
        }
    }
    for i in 0..d {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * d + k] * b[k];
        }
        b[i] = v / a[i * d + i].re;
    }
    for i in (0..d).rev() {
        let mut v = b[i];
        for k in i + 1..d {
            v -= a[k * d + i].conj() * b[k];
        }
        b[i] = v / a[i * d + i].re;
    }
    Some(())
}

fn check_grid(fft: &Fft2, h: usize, w: usize) -> Result<()> {
    if (fft.height(), fft.width()) != (h, w) {
        return Err(Error::mismatch(
            format!("{}x{} grid", fft.height(), fft.width()),
            format!("{h}x{w}"),
        ));
    }
    Ok(())
}

/// Exact ridge-regularized filter learner for use in the joint optimizer.
#[derive(Debug, Clone)]
pub struct FilterLearner {
    fft: Fft2,
    lambda: f64,
}

impl FilterLearner {
    pub fn new(height: usize, width: usize, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
        }
        Ok(Self {
            fft: Fft2::new(height, width),
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn spectral(&self, sample: &TrainingSample) -> Result<SpectralSample> {
        SpectralSample::new(&self.fft, sample)
    }

    pub fn confidence(&self, model: &CorrelationFilter, features: &FeatureMap) -> Result<LabelMap> {
        confidence_with(&self.fft, model, features)
    }
}

impl Learner for FilterLearner {
    type Frame = SpectralSample;
    type Model = CorrelationFilter;

    fn train(
        &self,
        frames: &[SpectralSample],
        alpha: &[f64],
        _warm: Option<&CorrelationFilter>,
    ) -> Result<CorrelationFilter> {
        solve_ridge(&self.fft, frames, alpha, self.lambda)
    }

    fn frame_loss(&self, model: &CorrelationFilter, frame: &SpectralSample) -> Result<f64> {
        spectral_loss(&self.fft, model, frame)
    }

    fn penalty(&self, model: &CorrelationFilter) -> f64 {
        model.penalty_value()
    }

    fn is_exact(&self) -> bool {
        true
    }
}
