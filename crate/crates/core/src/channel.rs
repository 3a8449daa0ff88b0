//! Uniform planar array physics: element counts on a shared aperture,
//! steering vectors, beamforming gain, SNR statistics and achievable rate.
//!
//! Each band has its own critically spaced UPA (`d = λ/2`) on a common
//! radiating surface. The user is reached over a single line-of-sight path
//! with free-space path gain `K / (r^η f²)`, and the received noise is
//! circular complex Gaussian with variance `σ² = N₀ W`. Given a beam gain
//! `G`, the SNR `γ = G / |n|²` has CDF `F(x) = exp(-G / (σ² x))`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::units::{friis_constant, wavelength};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApertureSpec {
    pub a_y_m: f64,
    pub a_z_m: f64,
}

impl Default for ApertureSpec {
    fn default() -> Self {
        Self {
            a_y_m: 0.0375,
            a_z_m: 0.0375,
        }
    }
}

impl ApertureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_y_m > 0.0) || !(self.a_z_m > 0.0) {
            return Err(Error::invalid("aperture", "dimensions must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConstants {
    /// Path-gain constant `K` (f in Hz, r in m).
    pub k: f64,
    pub eta: f64,
    pub tx_power_w: f64,
    /// Noise spectral density `N₀` in W/Hz.
    pub noise_density_w_per_hz: f64,
}

impl Default for PropagationConstants {
    fn default() -> Self {
        Self {
            k: friis_constant(),
            eta: 2.0,
            tx_power_w: 1.0,
            noise_density_w_per_hz: crate::units::dbm_per_hz_to_w_per_hz(-174.0),
        }
    }
}

impl PropagationConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) {
            return Err(Error::invalid("propagation.k", "must be positive"));
        }
        if !(self.eta >= 1.0) {
            return Err(Error::invalid("propagation.eta", "must be >= 1"));
        }
        if !(self.tx_power_w > 0.0) {
            return Err(Error::invalid("propagation.tx_power_w", "must be positive"));
        }
        if !(self.noise_density_w_per_hz > 0.0) {
            return Err(Error::invalid("propagation.noise_density", "must be positive"));
        }
        Ok(())
    }
}

/// One channel: carrier, bandwidth, and the UPA dedicated to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    /// 0-based channel index within the experiment's band list.
    pub index: usize,
    pub frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub n_y: usize,
    pub n_z: usize,
    pub d_y_m: f64,
    pub d_z_m: f64,
    pub noise_variance_w: f64,
}

impl BandConfig {
    /// Band with a critically spaced UPA filling `aperture`.
    pub fn on_aperture(
        index: usize,
        frequency_hz: f64,
        bandwidth_hz: f64,
        aperture: &ApertureSpec,
        noise_density_w_per_hz: f64,
    ) -> Result<Self> {
        if !(frequency_hz > 0.0) {
            return Err(Error::invalid("bands.frequency_hz", "must be positive"));
        }
        if !(bandwidth_hz > 0.0) {
            return Err(Error::invalid("bands.bandwidth_hz", "must be positive"));
        }
        aperture.validate()?;
        let (n_y, n_z) = elements_for_band(aperture, frequency_hz);
        let half = 0.5 * wavelength(frequency_hz);
        Ok(Self {
            index,
            frequency_hz,
            bandwidth_hz,
            n_y,
            n_z,
            d_y_m: half,
            d_z_m: half,
            noise_variance_w: noise_density_w_per_hz * bandwidth_hz,
        })
    }

    pub fn wavelength_m(&self) -> f64 {
        wavelength(self.frequency_hz)
    }

    pub fn num_elements(&self) -> usize {
        self.n_y * self.n_z
    }

    /// Normalized spatial angles `(ψ, ζ)` for a direction.
    pub fn spatial_angles(&self, theta: f64, phi: f64) -> (f64, f64) {
        let lambda = self.wavelength_m();
        let psi = self.d_y_m * phi.cos() * theta.sin() / lambda;
        let zeta = self.d_z_m * phi.sin() / lambda;
        (psi, zeta)
    }

    /// Carrier in GHz rounded to an integer, used for column labels.
    pub fn label_ghz(&self) -> u64 {
        (self.frequency_hz / 1e9).round() as u64
    }
}

/// True user direction and beam direction for one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub theta_hat: f64,
    pub phi_hat: f64,
}

impl LinkGeometry {
    pub fn aligned(r: f64, theta: f64, phi: f64) -> Self {
        Self {
            r,
            theta,
            phi,
            theta_hat: theta,
            phi_hat: phi,
        }
    }
}

/// Elements per axis for a critically spaced array: `floor(2A/λ) + 1`.
pub fn elements_for_band(aperture: &ApertureSpec, frequency_hz: f64) -> (usize, usize) {
    let lambda = wavelength(frequency_hz);
    let count = |a: f64| ((2.0 * a / lambda).floor() as usize + 1).max(1);
    (count(aperture.a_y_m), count(aperture.a_z_m))
}

/// UPA steering vector `a_y(θ, φ) ⊗ a_z(φ)`.
pub fn steering_vector(band: &BandConfig, theta: f64, phi: f64) -> Vec<Complex64> {
    let (psi, zeta) = band.spatial_angles(theta, phi);
    let a_y = (0..band.n_y).map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 * psi));
    let a_z: Vec<Complex64> = (0..band.n_z)
        .map(|n| Complex64::from_polar(1.0, -2.0 * PI * n as f64 * zeta))
        .collect();
    a_y.flat_map(|y| a_z.iter().map(move |z| y * z)).collect()
}

/// `|AF|²` from the explicit element sum with steering phase shifts toward
/// `(θ̂, φ̂)`, evaluated at the true direction `(θ, φ)`.
pub fn direct_array_response(band: &BandConfig, geom: &LinkGeometry) -> f64 {
    let k = 2.0 * PI / band.wavelength_m();
    let (dy, dz) = (band.d_y_m, band.d_z_m);
    let along_y = dy * geom.phi.cos() * geom.theta.sin();
    let along_z = dz * geom.phi.sin();
    let steer_y = dy * geom.phi_hat.cos() * geom.theta_hat.sin();
    let steer_z = dz * geom.phi_hat.sin();
    let mut af = Complex64::new(0.0, 0.0);
    for m in 0..band.n_y {
        for n in 0..band.n_z {
            let (mf, nf) = (m as f64, n as f64);
            let delta = -k * (mf * steer_y + nf * steer_z);
            let phase = mf * k * along_y + nf * k * along_z + delta;
            af += Complex64::from_polar(1.0, phase);
        }
    }
    af.norm_sqr()
}

/// Threshold below which the Dirichlet ratio is evaluated by its series.
const DIRICHLET_SERIES_BAND: f64 = 1e-7;

/// `sin(π N x) / sin(π x)`, continuous through the removable singularities
/// at integer `x` where it equals `±N`.
pub fn dirichlet_ratio(n: usize, x: f64) -> f64 {
    let nf = n as f64;
    let k = x.round();
    // Reduced to the nearest integer first so the denominator keeps full
    // relative precision near its zeros.
    let d = x - k;
    let odd = (k as i64 * (n as i64 - 1)).rem_euclid(2) == 1;
    let sign = if odd { -1.0 } else { 1.0 };
    if d.abs() < DIRICHLET_SERIES_BAND {
        sign * nf * (1.0 - PI * PI * (nf * nf - 1.0) * d * d / 6.0)
    } else {
        sign * (PI * nf * d).sin() / (PI * d).sin()
    }
}

/// Path-gain and transmit-power prefactor `K P_T / (r^η f² N_y N_z)`.
pub fn gain_prefactor(consts: &PropagationConstants, band: &BandConfig, r: f64) -> f64 {
    consts.k * consts.tx_power_w / (r.powf(consts.eta) * band.frequency_hz.powi(2) * band.num_elements() as f64)
}

/// Received-power gain `G` in closed form (Dirichlet-kernel product).
pub fn gain(consts: &PropagationConstants, band: &BandConfig, geom: &LinkGeometry) -> f64 {
    let (psi, zeta) = band.spatial_angles(geom.theta, geom.phi);
    let (psi_hat, zeta_hat) = band.spatial_angles(geom.theta_hat, geom.phi_hat);
    let dy = dirichlet_ratio(band.n_y, psi - psi_hat);
    let dz = dirichlet_ratio(band.n_z, zeta - zeta_hat);
    let af = dy * dz;
    gain_prefactor(consts, band, geom.r) * af * af
}

/// Draws `|n|²` for noise of variance `sigma_sq`.
pub fn noise_power_sample<R: Rng + ?Sized>(sigma_sq: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    sigma_sq * e
}

/// One SNR realization `G / |n|²`.
pub fn snr_sample<R: Rng + ?Sized>(g: f64, sigma_sq: f64, rng: &mut R) -> f64 {
    if g == 0.0 {
        return 0.0;
    }
    g / noise_power_sample(sigma_sq, rng)
}

/// Shannon rate `W log₂(1 + γ)` in bit/s.
pub fn rate(bandwidth_hz: f64, gamma: f64) -> f64 {
    bandwidth_hz * gamma.ln_1p() / std::f64::consts::LN_2
}

/// `E[log₂(1 + g / X)]` for `X ~ Exp(1)`, integrated over `u = ln X`.
pub fn expected_log2_snr_gain(g: f64) -> Result<f64> {
    if g == 0.0 {
        return Ok(0.0);
    }
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::invalid("gain", format!("{g} is not a finite non-negative value")));
    }
    // Below ln g - 45 the integrand is O(e^{-45}) relative; above ln 800
    // the exponential measure underflows.
    let lo = (-45.0f64).min(g.ln() - 45.0);
    let hi = 800f64.ln();
    let integrand = |u: f64| {
        let x = u.exp();
        (g / x).ln_1p() * (u - x).exp()
    };
    let nats = quadrature::integrate(integrand, lo, hi, 1e-10, 1e-300)?;
    Ok(nats / std::f64::consts::LN_2)
}

/// Rate averaged over the noise distribution for beam gain `g`.
pub fn expected_rate(band: &BandConfig, g: f64) -> Result<f64> {
    Ok(band.bandwidth_hz * expected_log2_snr_gain(g / band.noise_variance_w)?)
}

/// SNR CDF `exp(-G / (σ² x))` with `F(0) = 0` and `F(∞) = 1`.
pub fn snr_cdf(g: f64, sigma_sq: f64, x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if g == 0.0 {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    if x <= 0.0 {
        return 0.0;
    }
    (-g / (sigma_sq * x)).exp()
}

pub fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    for (i, t) in thresholds.iter().enumerate() {
        if !(*t > 0.0) || !t.is_finite() {
            return Err(Error::NonMonotoneThresholds { position: i });
        }
        if i > 0 && !(thresholds[i - 1] < *t) {
            return Err(Error::NonMonotoneThresholds { position: i });
        }
    }
    Ok(())
}

/// Probability of each SNR bin `[γ^{i-1}, γ^i)` with `γ⁰ = 0`, `γ^{M_z} = ∞`.
pub fn observation_probs(band: &BandConfig, g: f64, thresholds: &[f64]) -> Result<Vec<f64>> {
    validate_thresholds(thresholds)?;
    let sigma_sq = band.noise_variance_w;
    let mut out = Vec::with_capacity(thresholds.len() + 1);
    let mut prev = 0.0;
    for &t in thresholds.iter().chain(std::iter::once(&f64::INFINITY)) {
        let f = snr_cdf(g, sigma_sq, t);
        out.push(f - prev);
        prev = f;
    }
    Ok(out)
}

/// Index of the bin containing `gamma`.
pub fn snr_bin(thresholds: &[f64], gamma: f64) -> usize {
    thresholds.partition_point(|t| *t <= gamma)
}
