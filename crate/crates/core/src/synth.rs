//! Synthetic full-duplex datasets with a known ground-truth channel.
//!
//! The transmit side is QPSK-modulated OFDM, oversampled by zero-padding
//! the spectrum before the inverse FFT. The channel applies an optional
//! transmitter IQ imbalance, a sparse widely linear memory polynomial
//! (odd orders only, the same shape the [`crate::poly`] canceller fits),
//! and circularly symmetric Gaussian noise at a configured level below the
//! clean channel output. Everything is deterministic per seed, with
//! independent RNG streams for symbol draws and noise so the two never
//! interleave.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexSignal;
use crate::util::{complex_pair, derive_seed};

/// One ground-truth channel term `h * x[n-lag]^q * conj(x[n-lag])^(p-q)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelTerm {
    pub p: usize,
    pub q: usize,
    pub lag: usize,
    #[serde(with = "complex_pair")]
    pub gain: Complex64,
}

/// Transmitter IQ imbalance as a widely linear gain pair:
/// `x_out = direct * x + conjugate * conj(x)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IqImbalance {
    #[serde(with = "complex_pair")]
    pub direct: Complex64,
    #[serde(with = "complex_pair")]
    pub conjugate: Complex64,
}

impl Default for IqImbalance {
    fn default() -> Self {
        Self {
            direct: Complex64::new(1.0, 0.0),
            conjugate: Complex64::new(0.0, 0.0),
        }
    }
}

fn default_carriers() -> usize {
    2048
}

fn default_oversampling() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default = "default_carriers")]
    pub n_carriers: usize,
    #[serde(default = "default_oversampling")]
    pub oversampling: usize,
    pub n_symbols: usize,
    /// Ground-truth channel terms; an empty list is a zero channel.
    #[serde(default)]
    pub pa_coefficients: Vec<ChannelTerm>,
    /// Noise level in dB relative to the clean channel output;
    /// `None` (or `-inf`) means noiseless.
    #[serde(default)]
    pub noise_power_db: Option<f64>,
    #[serde(default)]
    pub iq_imbalance: IqImbalance,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    /// The default ground truth: two lags, orders 1 and 3, noise 40 dB
    /// down. The distortion budget is dominated by conjugate (image)
    /// leakage at lag 0, as from a transmitter with poor image rejection,
    /// with milder odd-order compression terms on top — the regime the
    /// non-linear cancellers are built for.
    pub fn default_truth() -> Self {
        let g = |re, im| Complex64::new(re, im);
        Self {
            n_carriers: default_carriers(),
            oversampling: default_oversampling(),
            n_symbols: 10,
            pa_coefficients: vec![
                ChannelTerm { p: 1, q: 1, lag: 0, gain: g(1.0, 0.0) },
                ChannelTerm { p: 1, q: 1, lag: 1, gain: g(0.25, 0.10) },
                ChannelTerm { p: 1, q: 0, lag: 0, gain: g(0.06, -0.025) },
                ChannelTerm { p: 1, q: 0, lag: 1, gain: g(0.008, 0.003) },
                ChannelTerm { p: 3, q: 2, lag: 0, gain: g(0.012, 0.005) },
                ChannelTerm { p: 3, q: 1, lag: 0, gain: g(0.004, -0.0015) },
                ChannelTerm { p: 3, q: 0, lag: 0, gain: g(0.002, 0.001) },
                ChannelTerm { p: 3, q: 2, lag: 1, gain: g(0.001, 0.0) },
            ],
            noise_power_db: Some(-40.0),
            iq_imbalance: IqImbalance::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n_carriers.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "carrier count must be a power of two, got {}",
                self.n_carriers
            )));
        }
        if self.oversampling == 0 {
            return Err(Error::InvalidConfig("oversampling factor must be at least 1".into()));
        }
        if self.n_symbols == 0 {
            return Err(Error::InvalidConfig("at least one OFDM symbol required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for term in &self.pa_coefficients {
            if term.p % 2 == 0 || term.p == 0 {
                return Err(Error::InvalidConfig(format!(
                    "channel term order must be odd and positive, got p={}",
                    term.p
                )));
            }
            if term.q > term.p {
                return Err(Error::InvalidConfig(format!(
                    "channel term q={} exceeds p={}",
                    term.q, term.p
                )));
            }
            if !term.gain.re.is_finite() || !term.gain.im.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "channel term (p={}, q={}, lag={}) has a non-finite gain",
                    term.p, term.q, term.lag
                )));
            }
            if !seen.insert((term.p, term.q, term.lag)) {
                return Err(Error::InvalidConfig(format!(
                    "channel term (p={}, q={}, lag={}) given twice",
                    term.p, term.q, term.lag
                )));
            }
        }
        for g in [self.iq_imbalance.direct, self.iq_imbalance.conjugate] {
            if !g.re.is_finite() || !g.im.is_finite() {
                return Err(Error::InvalidConfig("IQ imbalance gains must be finite".into()));
            }
        }
        if let Some(db) = self.noise_power_db {
            if db.is_nan() || db == f64::INFINITY {
                return Err(Error::InvalidConfig(format!(
                    "noise power must be a real dB level or -inf, got {db}"
                )));
            }
        }
        Ok(())
    }
}

/// QPSK-OFDM transmit signal: `n_symbols` blocks of `n_carriers`
/// uniformly drawn QPSK symbols, mapped to the centered carriers of an
/// `n_carriers * oversampling`-point spectrum (zero-padded band edges),
/// inverse-FFT'd, concatenated, and normalized to exactly unit average
/// power over the whole signal.
pub fn generate_ofdm(config: &SynthConfig) -> Result<ComplexSignal> {
    config.validate()?;
    let n = config.n_carriers;
    let m = n * config.oversampling;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(m);

    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let mut samples = Vec::with_capacity(config.n_symbols * m);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); m];
    for _ in 0..config.n_symbols {
        spectrum.fill(Complex64::new(0.0, 0.0));
        for i in 0..n {
            let bits: u8 = rng.gen_range(0..4);
            let symbol = Complex64::new(
                if bits & 1 == 0 { amp } else { -amp },
                if bits & 2 == 0 { amp } else { -amp },
            );
            let f = i as isize - (n / 2) as isize;
            let bin = if f < 0 { (m as isize + f) as usize } else { f as usize };
            spectrum[bin] = symbol;
        }
        ifft.process(&mut spectrum);
        samples.extend_from_slice(&spectrum);
    }

    let power: f64 = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64;
    let scale = 1.0 / power.sqrt();
    for s in &mut samples {
        *s *= scale;
    }
    ComplexSignal::new(samples)
}

/// Ground-truth received signal: IQ imbalance, then the widely linear
/// memory polynomial, then noise. Lags reaching before the signal start
/// read zero.
pub fn apply_nonlinear_channel(x: &ComplexSignal, config: &SynthConfig) -> Result<ComplexSignal> {
    config.validate()?;
    let iq = config.iq_imbalance;
    let distorted: Vec<Complex64> = x
        .iter()
        .map(|&v| iq.direct * v + iq.conjugate * v.conj())
        .collect();

    let term_value = |v: Complex64, term: &ChannelTerm| -> Complex64 {
        let mut acc = term.gain;
        for _ in 0..term.q {
            acc *= v;
        }
        let vc = v.conj();
        for _ in 0..term.p - term.q {
            acc *= vc;
        }
        acc
    };
    let zero = Complex64::new(0.0, 0.0);
    let mut clean: Vec<Complex64> = (0..x.len())
        .map(|n| {
            config
                .pa_coefficients
                .iter()
                .map(|term| {
                    if term.lag > n {
                        zero
                    } else {
                        term_value(distorted[n - term.lag], term)
                    }
                })
                .fold(zero, |a, b| a + b)
        })
        .collect();

    if let Some(db) = config.noise_power_db {
        if db > f64::NEG_INFINITY {
            let clean_power: f64 =
                clean.iter().map(|s| s.norm_sqr()).sum::<f64>() / clean.len() as f64;
            let component_std = (clean_power * 10f64.powf(db / 10.0) / 2.0).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
            for s in &mut clean {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *s += Complex64::new(re * component_std, im * component_std);
            }
        }
    }
    ComplexSignal::new(clean)
}

/// Transmit and received signals for one config: [`generate_ofdm`]
/// followed by [`apply_nonlinear_channel`].
pub fn generate_dataset(config: &SynthConfig) -> Result<(ComplexSignal, ComplexSignal)> {
    let tx = generate_ofdm(config)?;
    let rx = apply_nonlinear_channel(&tx, config)?;
    Ok((tx, rx))
}
