//! Uniform angular-frequency grids with trapezoidal quadrature weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    center: f64,
    span: f64,
    points: usize,
}

impl FrequencyGrid {
    pub fn new(center: f64, span: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::invalid("points", format!("need at least 2, got {points}")));
        }
        if !(span.is_finite() && span > 0.0) {
            return Err(Error::invalid("span", format!("must be positive, got {span}")));
        }
        if !center.is_finite() {
            return Err(Error::invalid("center", "must be finite"));
        }
        Ok(Self { center, span, points })
    }

    /// Grid spanning `center ± half_width_sigmas * sigma`.
    pub fn around(center: f64, sigma: f64, half_width_sigmas: f64, points: usize) -> Result<Self> {
        Self::new(center, 2.0 * half_width_sigmas * sigma, points)
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.span / (self.points - 1) as f64
    }

    pub fn start(&self) -> f64 {
        self.center - 0.5 * self.span
    }

    pub fn end(&self) -> f64 {
        self.center + 0.5 * self.span
    }

    pub fn value(&self, i: usize) -> f64 {
        // symmetric construction keeps values mirrored about the center
        let half = (self.points - 1) as f64 / 2.0;
        self.center + (i as f64 - half) * self.step()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }

    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.points {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.weight(i)).collect()
    }

    /// Same extent, `2(n-1)+1` points: every old node is kept.
    pub fn refined(&self) -> Self {
        Self {
            points: 2 * (self.points - 1) + 1,
            ..self.clone()
        }
    }

    /// Index of the node nearest to `omega`, if it lies within the grid.
    pub fn nearest(&self, omega: f64) -> Option<usize> {
        let x = (omega - self.start()) / self.step();
        if x < -0.5 || x > (self.points - 1) as f64 + 0.5 {
            None
        } else {
            Some(x.round().clamp(0.0, (self.points - 1) as f64) as usize)
        }
    }

    /// Trapezoidal integral of samples taken on this grid.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        debug_assert_eq!(samples.len(), self.points);
        let inner: f64 = samples[1..self.points - 1].iter().sum();
        self.step() * (inner + 0.5 * (samples[0] + samples[self.points - 1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(FrequencyGrid::new(0.0, 1.0, 1).is_err());
        assert!(FrequencyGrid::new(0.0, 0.0, 5).is_err());
        assert!(FrequencyGrid::new(0.0, -1.0, 5).is_err());
        assert!(FrequencyGrid::new(f64::NAN, 1.0, 5).is_err());
    }

    #[test]
    fn odd_grid_samples_center() {
        let g = FrequencyGrid::new(3.0, 2.0, 513).unwrap();
        assert_eq!(g.value(256), 3.0);
        assert_eq!(g.nearest(3.0), Some(256));
        assert_eq!(g.nearest(10.0), None);
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let g = FrequencyGrid::new(1.0, 4.0, 9).unwrap();
        let f: Vec<f64> = g.values().iter().map(|x| 2.0 * x + 1.0).collect();
        // ∫_{-1}^{3} (2x+1) dx = 12
        assert!((g.integrate(&f) - 12.0).abs() < 1e-12);
        assert!((g.weights().iter().sum::<f64>() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_keeps_nodes() {
        let g = FrequencyGrid::new(0.0, 1.0, 5).unwrap();
        let r = g.refined();
        assert_eq!(r.len(), 9);
        for i in 0..5 {
            assert!((g.value(i) - r.value(2 * i)).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn uniform_and_symmetric(center in -1e3f64..1e3, span in 1e-3f64..1e3, points in 2usize..600) {
            let g = FrequencyGrid::new(center, span, points).unwrap();
            prop_assert!(g.step() > 0.0);
            let v = g.values();
            for w in v.windows(2) {
                prop_assert!(((w[1] - w[0]) - g.step()).abs() <= 1e-9 * span);
            }
            for i in 0..points {
                let mirror = v[points - 1 - i];
                prop_assert!(((v[i] - center) + (mirror - center)).abs() <= 1e-9 * span);
            }
        }
    }
}
