use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::FWHM_PER_SIGMA;

/// Spectral transmission window, applied to amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralWindow {
    AllPass,
    /// Rectangular passband. Samples exactly on an edge get half amplitude.
    TopHat {
        center: f64,
        full_width: f64,
    },
    /// Gaussian intensity transmission with the given FWHM (rad/s); the
    /// amplitude factor is the square root of it.
    Gaussian {
        center: f64,
        fwhm: f64,
    },
}

impl SpectralWindow {
    pub fn top_hat(center: f64, full_width: f64) -> Result<Self> {
        if !(full_width > 0.0 && full_width.is_finite()) {
            return Err(Error::invalid("full_width", "must be positive"));
        }
        Ok(Self::TopHat { center, full_width })
    }

    pub fn gaussian(center: f64, fwhm: f64) -> Result<Self> {
        if !(fwhm > 0.0 && fwhm.is_finite()) {
            return Err(Error::invalid("fwhm", "must be positive"));
        }
        Ok(Self::Gaussian { center, fwhm })
    }

    pub fn amplitude(&self, omega: f64) -> f64 {
        match *self {
            SpectralWindow::AllPass => 1.0,
            SpectralWindow::TopHat { center, full_width } => {
                let d = (omega - center).abs();
                let half = 0.5 * full_width;
                // relative tolerance so grid nodes computed in floating point still hit the edge
                let tol = 1e-12 * full_width.max(center.abs());
                if (d - half).abs() <= tol {
                    0.5
                } else if d < half {
                    1.0
                } else {
                    0.0
                }
            }
            SpectralWindow::Gaussian { center, fwhm } => {
                let sigma = fwhm / FWHM_PER_SIGMA;
                let x = omega - center;
                (-x * x / (4.0 * sigma * sigma)).exp()
            }
        }
    }

    /// Inclusive support, `None` for unbounded windows.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            SpectralWindow::TopHat { center, full_width } => {
                Some((center - 0.5 * full_width, center + 0.5 * full_width))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_hat_edges_are_half() {
        let w = SpectralWindow::top_hat(10.0, 4.0).unwrap();
        assert_eq!(w.amplitude(10.0), 1.0);
        assert_eq!(w.amplitude(12.0), 0.5);
        assert_eq!(w.amplitude(8.0), 0.5);
        assert_eq!(w.amplitude(12.0001), 0.0);
    }

    #[test]
    fn gaussian_intensity_fwhm() {
        let w = SpectralWindow::gaussian(0.0, 2.0).unwrap();
        let t = w.amplitude(1.0).powi(2);
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_widths() {
        assert!(SpectralWindow::top_hat(0.0, 0.0).is_err());
        assert!(SpectralWindow::gaussian(0.0, -1.0).is_err());
    }
}
