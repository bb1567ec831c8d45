//! Real-signal DFT analysis and synthesis.
//!
//! Conventions: `X_m = Σ_n x_n e^{-2πj·mn/N}` for `m = 0..=N/2` (the
//! non-redundant half of a conjugate-symmetric spectrum) and the inverse
//! `x_n = (1/N) Σ_{m=0}^{N-1} X_m e^{+2πj·mn/N}` after conjugate-symmetric
//! expansion. Polar form uses the unnormalized magnitude `|X_m|` and phase
//! `atan2(Im, Re)` in `(-π, π]`.
//!
//! The fast path goes through `rustfft`; [`rdft_direct`] and [`idft_direct`]
//! are the O(N²) reference summations.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Number of stored bins for a length-`n` real signal.
pub fn num_bins(n_time: usize) -> usize {
    n_time / 2 + 1
}

/// Index of the Nyquist bin, present only for even lengths.
fn nyquist_bin(n_time: usize) -> Option<usize> {
    (n_time.is_multiple_of(2) && n_time > 0).then_some(n_time / 2)
}

/// Half spectrum of a real `[N × C]` signal, `[K × C]` with `K = N/2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    re: Array2<f64>,
    im: Array2<f64>,
    n_time: usize,
}

impl Spectrum {
    /// Fails if shapes disagree or the DC / Nyquist bins carry an imaginary part.
    pub fn new(re: Array2<f64>, im: Array2<f64>, n_time: usize) -> Result<Self> {
        let k = num_bins(n_time);
        if n_time == 0 || re.nrows() != k || re.dim() != im.dim() {
            return Err(Error::data(format!(
                "spectrum for N={n_time} needs [{k} × C] parts, got {:?} and {:?}",
                re.dim(),
                im.dim()
            )));
        }
        let real_bins = std::iter::once(0).chain(nyquist_bin(n_time));
        for m in real_bins {
            if im.row(m).iter().any(|v| *v != 0.0) {
                return Err(Error::data(format!("bin {m} must have zero imaginary part")));
            }
        }
        Ok(Spectrum { re, im, n_time })
    }

    pub fn re(&self) -> &Array2<f64> {
        &self.re
    }

    pub fn im(&self) -> &Array2<f64> {
        &self.im
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn n_channels(&self) -> usize {
        self.re.ncols()
    }

    pub fn bin(&self, m: usize, c: usize) -> Complex64 {
        Complex64::new(self.re[[m, c]], self.im[[m, c]])
    }

    /// All `N` bins of channel `c`, filling `m > N/2` by conjugate symmetry.
    pub fn full_channel(&self, c: usize) -> Vec<Complex64> {
        let n = self.n_time;
        (0..n).map(|m| if m <= n / 2 { self.bin(m, c) } else { self.bin(n - m, c).conj() }).collect()
    }
}

/// Magnitude / phase view of a [`Spectrum`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolarSpectrum {
    pub magnitude: Array2<f64>,
    pub phase: Array2<f64>,
    pub n_time: usize,
}

impl PolarSpectrum {
    /// Total number of regressed values (magnitude and phase).
    pub fn target_len(&self) -> usize {
        self.magnitude.len() + self.phase.len()
    }
}

/// Forward transform through the FFT.
pub fn rdft(x: ArrayView2<'_, f64>) -> Spectrum {
    let (n, c_len) = x.dim();
    assert!(n >= 1, "rdft needs at least one sample");
    let k = num_bins(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut re = Array2::zeros((k, c_len));
    let mut im = Array2::zeros((k, c_len));
    let mut buf = vec![Complex64::default(); n];
    for c in 0..c_len {
        for (b, v) in buf.iter_mut().zip(x.column(c)) {
            *b = Complex64::new(*v, 0.0);
        }
        fft.process(&mut buf);
        for m in 0..k {
            re[[m, c]] = buf[m].re;
            im[[m, c]] = buf[m].im;
        }
    }
    zero_real_bins(&mut im, n);
    Spectrum { re, im, n_time: n }
}

/// Forward transform by direct summation.
pub fn rdft_direct(x: ArrayView2<'_, f64>) -> Spectrum {
    let (n, c_len) = x.dim();
    assert!(n >= 1, "rdft needs at least one sample");
    let k = num_bins(n);
    let mut re = Array2::zeros((k, c_len));
    let mut im = Array2::zeros((k, c_len));
    for m in 0..k {
        for t in 0..n {
            // reduce mn mod N before the trig call to keep the angle small
            let angle = -2.0 * PI * ((m * t) % n) as f64 / n as f64;
            let (s, co) = angle.sin_cos();
            for c in 0..c_len {
                re[[m, c]] += x[[t, c]] * co;
                im[[m, c]] += x[[t, c]] * s;
            }
        }
    }
    zero_real_bins(&mut im, n);
    Spectrum { re, im, n_time: n }
}

fn zero_real_bins(im: &mut Array2<f64>, n_time: usize) {
    im.row_mut(0).fill(0.0);
    if let Some(m) = nyquist_bin(n_time) {
        im.row_mut(m).fill(0.0);
    }
}

pub fn to_polar(s: &Spectrum) -> PolarSpectrum {
    let mut magnitude = Array2::zeros(s.re.dim());
    let mut phase = Array2::zeros(s.re.dim());
    ndarray::Zip::from(&mut magnitude).and(&mut phase).and(&s.re).and(&s.im).for_each(|mag, ph, &re, &im| {
        *mag = re.hypot(im);
        *ph = if *mag == 0.0 { 0.0 } else { wrap_phase(im.atan2(re)) };
    });
    PolarSpectrum { magnitude, phase, n_time: s.n_time }
}

/// Maps `-π` onto `π` so phases lie in `(-π, π]`.
fn wrap_phase(p: f64) -> f64 {
    if p <= -PI {
        p + 2.0 * PI
    } else {
        p
    }
}

/// `X = mag·e^{j·phase}` with DC and Nyquist imaginary parts forced to zero.
pub fn from_polar(p: &PolarSpectrum) -> Result<Spectrum> {
    if p.magnitude.dim() != p.phase.dim() {
        return Err(Error::data(format!(
            "magnitude {:?} and phase {:?} shapes differ",
            p.magnitude.dim(),
            p.phase.dim()
        )));
    }
    if let Some(((m, c), v)) = p.magnitude.indexed_iter().find(|(_, v)| **v < 0.0) {
        return Err(Error::data(format!("negative magnitude {v} at bin {m}, channel {c}")));
    }
    let re = &p.magnitude * &p.phase.mapv(f64::cos);
    let mut im = &p.magnitude * &p.phase.mapv(f64::sin);
    if im.nrows() == num_bins(p.n_time) {
        zero_real_bins(&mut im, p.n_time);
    }
    Spectrum::new(re, im, p.n_time)
}

/// Inverse transform through the FFT; returns the real `[N × C]` signal.
pub fn idft(s: &Spectrum) -> Array2<f64> {
    let (x, residue) = idft_with_residue(s);
    debug_assert!(residue <= 1e-6, "imaginary residue {residue}");
    x
}

/// Like [`idft`], also reporting the largest discarded imaginary component.
pub fn idft_with_residue(s: &Spectrum) -> (Array2<f64>, f64) {
    let n = s.n_time;
    let c_len = s.n_channels();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut out = Array2::zeros((n, c_len));
    let mut residue: f64 = 0.0;
    let scale = 1.0 / n as f64;
    for c in 0..c_len {
        let mut buf = s.full_channel(c);
        ifft.process(&mut buf);
        for (t, v) in buf.iter().enumerate() {
            out[[t, c]] = v.re * scale;
            residue = residue.max((v.im * scale).abs());
        }
    }
    (out, residue)
}

/// Inverse transform by direct summation over the expanded spectrum.
pub fn idft_direct(s: &Spectrum) -> Array2<f64> {
    let n = s.n_time;
    let mut out = Array2::zeros((n, s.n_channels()));
    for c in 0..s.n_channels() {
        let full = s.full_channel(c);
        for t in 0..n {
            let mut acc = Complex64::default();
            for (m, xm) in full.iter().enumerate() {
                let angle = 2.0 * PI * ((m * t) % n) as f64 / n as f64;
                acc += xm * Complex64::from_polar(1.0, angle);
            }
            out[[t, c]] = acc.re / n as f64;
        }
    }
    out
}

/// Fourier-domain denoising reconstruction: compose magnitude and phase, then
/// invert.
pub fn denoise_reconstruct(p: &PolarSpectrum) -> Result<Array2<f64>> {
    Ok(idft(&from_polar(p)?))
}

/// Pre-planned inverse transform for a fixed length, with its adjoint.
///
/// `synthesize(re, im)` equals `idft` of the spectrum with DC and Nyquist
/// imaginary parts ignored; `adjoint(dx)` returns `(∂/∂re, ∂/∂im)` of
/// `⟨dx, synthesize(re, im)⟩`.
#[derive(Clone)]
pub struct SynthesisPlan {
    n_time: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SynthesisPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SynthesisPlan").field("n_time", &self.n_time).finish()
    }
}

impl SynthesisPlan {
    pub fn new(n_time: usize) -> Self {
        assert!(n_time >= 1, "synthesis needs at least one sample");
        let mut planner = FftPlanner::<f64>::new();
        SynthesisPlan { n_time, forward: planner.plan_fft_forward(n_time), inverse: planner.plan_fft_inverse(n_time) }
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    fn weight(&self, m: usize) -> f64 {
        if m == 0 || Some(m) == nyquist_bin(self.n_time) {
            1.0
        } else {
            2.0
        }
    }

    /// `[K × C]` half spectrum to a real `[N × C]` signal.
    pub fn synthesize(&self, re: ArrayView2<'_, f64>, im: ArrayView2<'_, f64>) -> Array2<f64> {
        let n = self.n_time;
        let k = num_bins(n);
        assert_eq!(re.nrows(), k, "bin count");
        let nyq = nyquist_bin(n);
        let mut out = Array2::zeros((n, re.ncols()));
        let mut buf = vec![Complex64::default(); n];
        for c in 0..re.ncols() {
            buf[0] = Complex64::new(re[[0, c]], 0.0);
            for m in 1..k {
                let v = if Some(m) == nyq {
                    Complex64::new(re[[m, c]], 0.0)
                } else {
                    Complex64::new(re[[m, c]], im[[m, c]])
                };
                buf[m] = v;
                if Some(m) != nyq {
                    buf[n - m] = v.conj();
                }
            }
            self.inverse.process(&mut buf);
            for (t, v) in buf.iter().enumerate() {
                out[[t, c]] = v.re / n as f64;
            }
        }
        out
    }

    /// Transpose of [`SynthesisPlan::synthesize`] applied to `dx`.
    pub fn adjoint(&self, dx: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let n = self.n_time;
        let k = num_bins(n);
        let nyq = nyquist_bin(n);
        let mut d_re = Array2::zeros((k, dx.ncols()));
        let mut d_im = Array2::zeros((k, dx.ncols()));
        let mut buf = vec![Complex64::default(); n];
        for c in 0..dx.ncols() {
            for (b, v) in buf.iter_mut().zip(dx.column(c)) {
                *b = Complex64::new(*v, 0.0);
            }
            self.forward.process(&mut buf);
            for m in 0..k {
                let w = self.weight(m) / n as f64;
                d_re[[m, c]] = w * buf[m].re;
                if m != 0 && Some(m) != nyq {
                    d_im[[m, c]] = w * buf[m].im;
                }
            }
        }
        (d_re, d_im)
    }
}

/// Real-valued synthesis matrices of the inverse transform.
///
/// For a half spectrum `(Re, Im)` of shape `[K × C]`,
/// `x = cos_part · Re + sin_part · Im` (both `[N × K]`). This is the linear
/// map used by training code, so its transpose gives the gradient.
#[derive(Debug, Clone)]
pub struct InverseBasis {
    pub cos_part: Array2<f64>,
    pub sin_part: Array2<f64>,
}

impl InverseBasis {
    pub fn new(n_time: usize) -> Self {
        let k = num_bins(n_time);
        let nyq = nyquist_bin(n_time);
        let n = n_time as f64;
        let weight = |m: usize| if m == 0 || Some(m) == nyq { 1.0 } else { 2.0 };
        let cos_part = Array2::from_shape_fn((n_time, k), |(t, m)| {
            let angle = 2.0 * PI * ((m * t) % n_time) as f64 / n;
            weight(m) * angle.cos() / n
        });
        let sin_part = Array2::from_shape_fn((n_time, k), |(t, m)| {
            if m == 0 || Some(m) == nyq {
                return 0.0;
            }
            let angle = 2.0 * PI * ((m * t) % n_time) as f64 / n;
            -weight(m) * angle.sin() / n
        });
        InverseBasis { cos_part, sin_part }
    }

    pub fn synthesize(&self, re: ArrayView2<'_, f64>, im: ArrayView2<'_, f64>) -> Array2<f64> {
        self.cos_part.dot(&re) + self.sin_part.dot(&im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn synthesis_plan_matches_basis_and_adjoint() {
        let mut r = crate::rng::seeded(11, 0);
        use rand::Rng;
        for n in [1usize, 2, 7, 16, 33] {
            let k = num_bins(n);
            let re = Array2::from_shape_fn((k, 3), |_| r.random_range(-1.0..1.0));
            let im = Array2::from_shape_fn((k, 3), |_| r.random_range(-1.0..1.0));
            let plan = SynthesisPlan::new(n);
            let basis = InverseBasis::new(n);
            let fast = plan.synthesize(re.view(), im.view());
            let slow = basis.synthesize(re.view(), im.view());
            assert!((&fast - &slow).iter().all(|v| v.abs() < 1e-12), "n={n}");
            let dx = Array2::from_shape_fn((n, 3), |_| r.random_range(-1.0..1.0));
            let (dr, di) = plan.adjoint(dx.view());
            assert!((&dr - &basis.cos_part.t().dot(&dx)).iter().all(|v| v.abs() < 1e-12));
            assert!((&di - &basis.sin_part.t().dot(&dx)).iter().all(|v| v.abs() < 1e-12));
        }
    }

    fn col(v: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let s = rdft(col(&[1.0, 1.0, 1.0, 1.0]).view());
        assert!(close(s.re[[0, 0]], 4.0));
        for m in 1..3 {
            assert!(close(s.re[[m, 0]], 0.0) && close(s.im[[m, 0]], 0.0));
        }
    }

    #[test]
    fn cosine_and_sine_examples() {
        // direct sums: [1,0,-1,0] -> X1 = 1 - (-1) = 2; [0,1,0,-1] -> X1 = -j - j = -2j
        let s = rdft(col(&[1.0, 0.0, -1.0, 0.0]).view());
        let expected = [(0.0, 0.0), (2.0, 0.0), (0.0, 0.0)];
        for (m, (re, im)) in expected.iter().enumerate() {
            assert!(close(s.re[[m, 0]], *re) && close(s.im[[m, 0]], *im), "bin {m}");
        }
        let s = rdft(col(&[0.0, 1.0, 0.0, -1.0]).view());
        let expected = [(0.0, 0.0), (0.0, -2.0), (0.0, 0.0)];
        for (m, (re, im)) in expected.iter().enumerate() {
            assert!(close(s.re[[m, 0]], *re) && close(s.im[[m, 0]], *im), "bin {m}");
        }
    }

    #[test]
    fn polar_examples() {
        let s = Spectrum::new(array![[0.0], [2.0], [0.0]], array![[0.0], [0.0], [0.0]], 4).unwrap();
        let p = to_polar(&s);
        assert_eq!((p.magnitude[[1, 0]], p.phase[[1, 0]]), (2.0, 0.0));
        assert_eq!((p.magnitude[[0, 0]], p.phase[[0, 0]]), (0.0, 0.0));

        let s = Spectrum::new(array![[0.0], [0.0], [0.0]], array![[0.0], [-2.0], [0.0]], 4).unwrap();
        let p = to_polar(&s);
        assert!(close(p.magnitude[[1, 0]], 2.0));
        assert!(close(p.phase[[1, 0]], -PI / 2.0));
    }

    #[test]
    fn negative_zero_phase_stays_in_range() {
        let s = Spectrum::new(array![[-1.0], [-3.0], [0.0]], array![[0.0], [-0.0], [0.0]], 4).unwrap();
        let p = to_polar(&s);
        assert!(p.phase.iter().all(|&v| v > -PI && v <= PI));
        assert!(close(p.phase[[1, 0]], PI));
    }

    #[test]
    fn from_polar_examples() {
        let p = PolarSpectrum {
            magnitude: array![[1.0], [2.0], [2.0]],
            phase: array![[PI], [-PI / 2.0], [0.0]],
            n_time: 4,
        };
        let s = from_polar(&p).unwrap();
        assert!(close(s.re[[0, 0]], -1.0));
        assert_eq!(s.im[[0, 0]], 0.0);
        assert!(close(s.re[[1, 0]], 0.0) && close(s.im[[1, 0]], -2.0));
        assert!(close(s.re[[2, 0]], 2.0));
    }

    #[test]
    fn from_polar_rejects_negative_magnitude() {
        let p = PolarSpectrum { magnitude: array![[1.0], [-0.5], [0.0]], phase: Array2::zeros((3, 1)), n_time: 4 };
        assert!(from_polar(&p).is_err());
    }

    #[test]
    fn spectrum_rejects_complex_dc() {
        assert!(Spectrum::new(array![[1.0], [0.0]], array![[0.5], [0.0]], 3).is_err());
        assert!(Spectrum::new(array![[1.0], [0.0]], array![[0.0], [0.5]], 3).is_ok());
        assert!(Spectrum::new(array![[1.0], [0.0], [0.0]], array![[0.0], [0.0], [0.5]], 4).is_err());
    }

    #[test]
    fn idft_examples() {
        let s = Spectrum::new(array![[4.0], [0.0], [0.0]], Array2::zeros((3, 1)), 4).unwrap();
        let x = idft(&s);
        assert!(x.iter().all(|&v| close(v, 1.0)));
        let s = Spectrum::new(array![[0.0], [2.0], [0.0]], Array2::zeros((3, 1)), 4).unwrap();
        let x = idft(&s);
        for (v, e) in x.iter().zip([1.0, 0.0, -1.0, 0.0]) {
            assert!(close(*v, e));
        }
    }

    fn random_signal(n: usize, c: usize, seed: u64) -> Array2<f64> {
        use rand::Rng;
        let mut rng = crate::rng::seeded(seed, 0);
        Array2::from_shape_fn((n, c), |_| rng.random_range(-3.0..3.0))
    }

    #[test]
    fn round_trip_50_by_16() {
        let x = random_signal(50, 16, 1);
        let (back, residue) = idft_with_residue(&rdft(x.view()));
        assert!(residue <= 1e-6);
        let err = (&back - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn denoise_round_trip_and_zero_magnitude() {
        let x = random_signal(37, 2, 2);
        let p = to_polar(&rdft(x.view()));
        let back = denoise_reconstruct(&p).unwrap();
        assert!((&back - &x).iter().all(|v| v.abs() < 1e-5));

        let zero = PolarSpectrum { magnitude: Array2::zeros(p.magnitude.dim()), phase: p.phase.clone(), n_time: 37 };
        assert!(denoise_reconstruct(&zero).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn phase_flip_changes_reconstruction() {
        let x = random_signal(32, 1, 5);
        let mut p = to_polar(&rdft(x.view()));
        p.phase[[3, 0]] += PI;
        let back = denoise_reconstruct(&p).unwrap();
        let gap: f64 = (&back - &x).iter().map(|v| v * v).sum::<f64>().sqrt();
        // flipping bin 3 negates its contribution: gap = 2·|X_3|·sqrt(2/N)
        let expected = 2.0 * p.magnitude[[3, 0]] * (2.0 / 32.0f64).sqrt();
        assert!((gap - expected).abs() < 1e-9, "{gap} vs {expected}");
        assert!(gap > 0.0);
    }

    #[test]
    fn fft_matches_direct_summation() {
        for n in [1, 2, 3, 4, 7, 50, 64, 101, 178] {
            let x = random_signal(n, 3, n as u64);
            let fast = rdft(x.view());
            let slow = rdft_direct(x.view());
            let scale = slow.re.iter().chain(slow.im.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, b) in fast.re.iter().chain(fast.im.iter()).zip(slow.re.iter().chain(slow.im.iter())) {
                assert!((a - b).abs() / scale < 1e-9, "n={n}");
            }
            let inv_fast = idft(&fast);
            let inv_slow = idft_direct(&slow);
            assert!((&inv_fast - &inv_slow).iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn inverse_basis_matches_idft() {
        for n in [5, 8, 52] {
            let x = random_signal(n, 2, 11);
            let s = rdft(x.view());
            let basis = InverseBasis::new(n);
            let y = basis.synthesize(s.re().view(), s.im().view());
            assert!((&y - &x).iter().all(|v| v.abs() < 1e-10), "n={n}");
        }
    }

    #[test]
    fn target_size_is_about_half() {
        for (n, c) in [(52, 16), (3000, 1), (178, 1), (7, 3)] {
            let p = to_polar(&rdft(Array2::<f64>::zeros((n, c)).view()));
            assert_eq!(p.target_len(), 2 * (n / 2 + 1) * c);
            assert!(p.target_len() <= n * c + 2 * c);
        }
    }

    proptest! {
        #[test]
        fn linearity(seed in any::<u64>(), n in 1usize..80, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let x = random_signal(n, 2, seed);
            let y = random_signal(n, 2, seed.wrapping_add(1));
            let lhs = rdft((&x * a + &y * b).view());
            let sx = rdft(x.view());
            let sy = rdft(y.view());
            let scale = 1.0 + lhs.re.iter().chain(lhs.im.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
            for m in 0..num_bins(n) {
                for c in 0..2 {
                    let rre = a * sx.re[[m, c]] + b * sy.re[[m, c]];
                    let rim = a * sx.im[[m, c]] + b * sy.im[[m, c]];
                    prop_assert!((lhs.re[[m, c]] - rre).abs() / scale < 1e-6);
                    prop_assert!((lhs.im[[m, c]] - rim).abs() / scale < 1e-6);
                }
            }
        }

        #[test]
        fn parseval(seed in any::<u64>(), n in 1usize..120) {
            let x = random_signal(n, 1, seed);
            let s = rdft(x.view());
            let energy: f64 = x.iter().map(|v| v * v).sum();
            let k = num_bins(n);
            let mut spec = 0.0;
            for m in 0..k {
                let p = s.bin(m, 0).norm_sqr();
                let interior = m != 0 && !(n % 2 == 0 && m == n / 2);
                spec += if interior { 2.0 * p } else { p };
            }
            spec /= n as f64;
            prop_assert!((energy - spec).abs() <= 1e-5 * energy.max(1e-12));
        }

        #[test]
        fn polar_round_trip(seed in any::<u64>(), n in 1usize..64) {
            let x = random_signal(n, 2, seed);
            let s = rdft(x.view());
            let back = from_polar(&to_polar(&s)).unwrap();
            for (a, b) in s.re.iter().chain(s.im.iter()).zip(back.re.iter().chain(back.im.iter())) {
                prop_assert!((a - b).abs() < 1e-6);
            }
            let p = to_polar(&s);
            prop_assert!(p.magnitude.iter().all(|&v| v >= 0.0));
            prop_assert!(p.phase.iter().all(|&v| v > -PI && v <= PI));
        }
    }
}
