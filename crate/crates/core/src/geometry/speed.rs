//! Sound-speed fields c(x) for the isothermal metric g = c⁻²·id.
//!
//! Models are analytic with symbolic first derivatives and Gauss curvature
//! κ = c²·Δ log c = c·Δc − |∇c|²; grids are caches for mask-based operators.

use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Grid};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SpeedModel {
    Constant { value: f64 },
    /// c = 1 + eps·exp(-r²/sigma²)
    RadialBump { eps: f64, sigma: f64 },
    /// c = exp(beta·r²)
    LogGaussian { beta: f64 },
}

impl Default for SpeedModel {
    fn default() -> Self {
        SpeedModel::Constant { value: 1.0 }
    }
}

#[derive(Clone, Copy, Debug)]
enum Kind<S> {
    Constant { value: S },
    RadialBump { eps: S, inv_s2: S },
    LogGaussian { beta: S },
}

#[derive(Clone, Debug)]
pub struct SpeedField<S: Scalar> {
    pub model: SpeedModel,
    kind: Kind<S>,
    pub c: Grid<S>,
    pub c_min: S,
    pub c_max: S,
}

impl<S: Scalar> SpeedField<S> {
    pub fn new(model: SpeedModel, domain: &Domain<S>) -> Result<Self> {
        let kind = match model {
            SpeedModel::Constant { value } => {
                if value <= 0.0 {
                    return Err(Error::Config(format!("speed must be positive, got {value}")));
                }
                Kind::Constant { value: S::of(value) }
            }
            SpeedModel::RadialBump { eps, sigma } => {
                if eps <= -1.0 {
                    return Err(Error::Config(format!("bump eps must exceed -1, got {eps}")));
                }
                if sigma <= 0.0 {
                    return Err(Error::Config(format!("bump sigma must be positive, got {sigma}")));
                }
                Kind::RadialBump { eps: S::of(eps), inv_s2: S::of(1.0 / (sigma * sigma)) }
            }
            SpeedModel::LogGaussian { beta } => Kind::LogGaussian { beta: S::of(beta) },
        };
        let mut field = SpeedField {
            model,
            kind,
            c: Grid { data: Vec::new() },
            c_min: S::one(),
            c_max: S::one(),
        };
        let mut c = domain.zeros_real();
        let mut lo = S::infinity();
        let mut hi = S::zero();
        for idx in 0..domain.len() {
            let (x, y) = domain.node_xy(idx);
            let v = field.eval(x, y).0;
            c[idx] = v;
            if domain.mask[idx] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        field.c = c;
        field.c_min = lo;
        field.c_max = hi;
        Ok(field)
    }

    /// (c, ∂_x c, ∂_y c) at an arbitrary point.
    #[inline]
    pub fn eval(&self, x: S, y: S) -> (S, S, S) {
        match self.kind {
            Kind::Constant { value } => (value, S::zero(), S::zero()),
            Kind::RadialBump { eps, inv_s2 } => {
                let r2 = x * x + y * y;
                let b = eps * (-r2 * inv_s2).exp();
                let f = -S::of(2.0) * inv_s2 * b;
                (S::one() + b, x * f, y * f)
            }
            Kind::LogGaussian { beta } => {
                let r2 = x * x + y * y;
                let c = (beta * r2).exp();
                let f = S::of(2.0) * beta * c;
                (c, x * f, y * f)
            }
        }
    }

    #[inline]
    pub fn value(&self, x: S, y: S) -> S {
        self.eval(x, y).0
    }

    /// Gauss curvature κ = c·Δc − |∇c|² in closed form.
    #[inline]
    pub fn kappa(&self, x: S, y: S) -> S {
        match self.kind {
            Kind::Constant { .. } => S::zero(),
            Kind::RadialBump { eps, inv_s2 } => {
                let r2 = x * x + y * y;
                let b = eps * (-r2 * inv_s2).exp();
                let c = S::one() + b;
                let lap = b * (S::of(4.0) * r2 * inv_s2 * inv_s2 - S::of(4.0) * inv_s2);
                let grad2 = S::of(4.0) * r2 * inv_s2 * inv_s2 * b * b;
                c * lap - grad2
            }
            Kind::LogGaussian { beta } => {
                let c = (beta * (x * x + y * y)).exp();
                S::of(4.0) * beta * c * c
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, Kind::Constant { .. })
    }
}

/// κ on the mask by centered differences of log c (one-sided at the edge).
///
/// The analytic [`SpeedField::kappa`] is the oracle; this grid route exists
/// so the two can be cross-checked at O(h²).
pub fn curvature<S: Scalar>(speed: &SpeedField<S>, domain: &Domain<S>) -> Grid<S> {
    let log_c = domain.fill_complex(|x, y| num_complex::Complex::new(speed.value(x, y).ln(), S::zero()));
    let lx = domain.dx(&log_c);
    let lxx = domain.dx(&lx);
    let ly = domain.dy(&log_c);
    let lyy = domain.dy(&ly);
    let mut out = domain.zeros_real();
    for &u in &domain.interior {
        let i = u as usize;
        let c = speed.c[i];
        out[i] = c * c * (lxx[i].re + lyy[i].re);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;

    fn domain(n: usize) -> Domain<f64> {
        Domain::new(DomainSpec { radius: 1.0, grid_n: n, boundary_n: 64, dir_n: 32 }).unwrap()
    }

    #[test]
    fn constant_speed_has_zero_curvature() {
        let d = domain(33);
        let s = SpeedField::new(SpeedModel::Constant { value: 1.0 }, &d).unwrap();
        let k = curvature(&s, &d);
        for &u in &d.interior {
            assert_eq!(k[u as usize], 0.0);
        }
        assert!((s.kappa(0.3, 0.2)).abs() < 1e-15);
    }

    #[test]
    fn log_gaussian_curvature_matches_closed_form() {
        // c = e^{-r²} has κ = -4 e^{-2r²}
        let d = domain(33);
        let s = SpeedField::new(SpeedModel::LogGaussian { beta: -1.0 }, &d).unwrap();
        for (x, y) in [(0.0, 0.0), (0.3, -0.2), (0.5, 0.5)] {
            let r2: f64 = x * x + y * y;
            let expect = -4.0 * (-2.0 * r2).exp();
            assert!((s.kappa(x, y) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_curvature_agrees_with_analytic_at_second_order() {
        // c = 1 + 0.1 exp(-r²/0.25), checked at the center node
        let model = SpeedModel::RadialBump { eps: 0.1, sigma: 0.5 };
        let mut errs = Vec::new();
        for n in [33, 65] {
            let d = domain(n);
            let s = SpeedField::new(model, &d).unwrap();
            let k = curvature(&s, &d);
            let mid = d.idx((n - 1) / 2, (n - 1) / 2);
            errs.push((k[mid] - s.kappa(0.0, 0.0)).abs());
        }
        // composed first-derivative stencils have a wide footprint, so the
        // O(h²) constant is sizable; check the rate and a loose level
        assert!(errs[1] < errs[0] / 3.0, "errs = {errs:?}");
        assert!(errs[1] < 2e-2, "errs = {errs:?}");
    }

    #[test]
    fn bump_gradient_matches_finite_difference() {
        let d = domain(17);
        let s = SpeedField::new(SpeedModel::RadialBump { eps: -0.3, sigma: 0.7 }, &d).unwrap();
        let (x, y) = (0.21, -0.37);
        let e = 1e-6;
        let (c, cx, cy) = s.eval(x, y);
        assert!(c > 0.0);
        let fx = (s.value(x + e, y) - s.value(x - e, y)) / (2.0 * e);
        let fy = (s.value(x, y + e) - s.value(x, y - e)) / (2.0 * e);
        assert!((cx - fx).abs() < 1e-8);
        assert!((cy - fy).abs() < 1e-8);
    }

    #[test]
    fn invalid_models_rejected() {
        let d = domain(17);
        assert!(SpeedField::new(SpeedModel::Constant { value: 0.0 }, &d).is_err());
        assert!(SpeedField::new(SpeedModel::RadialBump { eps: -1.0, sigma: 0.5 }, &d).is_err());
    }
}
