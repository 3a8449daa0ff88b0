//! Physical constants and unit conversions. Everything else in the crate works in SI.

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Free-space path-gain constant `(c / 4π)²` for frequencies in Hz and distances in m.
pub fn friis_constant() -> f64 {
    let k = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI);
    k * k
}

pub fn wavelength(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT / frequency_hz
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// dBm/Hz to W/Hz.
pub fn dbm_per_hz_to_w_per_hz(dbm_per_hz: f64) -> f64 {
    db_to_linear(dbm_per_hz) * 1e-3
}

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}
