//! Optical coefficients: nonnegative attenuation a(x) and a scattering
//! kernel with finitely many angular harmonics,
//!   k(x, α) = Σ_{|n| ≤ m_k} k̃_n(x) e^{inα},  k̃_{-n} = conj(k̃_n),
//! acting by angular convolution: (S u)(x, θ) = ∫ k(x, θ−θ') u(x, θ') dθ',
//! i.e. diagonally on harmonics, (S u)_n = 2π k̃_n ũ_n.

use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Grid};
use crate::error::{Error, Result};
use crate::fiber::FiberField;
use crate::scalar::{Scalar, C};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// amp·exp(-((x-x0)² + (y-y0)²)/sigma²)
    Gaussian { amp: f64, sigma: f64, x0: f64, y0: f64 },
    /// amp·(1 - r²/radius²), clamped at zero outside
    Dome { amp: f64, radius: f64 },
    /// Σ coef·x^i·y^j given as (i, j, coef)
    Poly { terms: Vec<(u32, u32, f64)> },
}

impl Profile {
    pub fn eval<S: Scalar>(&self, x: S, y: S) -> S {
        match self {
            Profile::Constant { value } => S::of(*value),
            Profile::Gaussian { amp, sigma, x0, y0 } => {
                let dx = x - S::of(*x0);
                let dy = y - S::of(*y0);
                S::of(*amp) * (-(dx * dx + dy * dy) / S::of(sigma * sigma)).exp()
            }
            Profile::Dome { amp, radius } => {
                let r2 = (x * x + y * y) / S::of(radius * radius);
                S::of(*amp) * (S::one() - r2).max(S::zero())
            }
            Profile::Poly { terms } => {
                let mut acc = S::zero();
                for &(i, j, coef) in terms {
                    acc += S::of(coef) * x.powi(i as i32) * y.powi(j as i32);
                }
                acc
            }
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            Profile::Gaussian { sigma, .. } if *sigma <= 0.0 => {
                Err(Error::Config(format!("gaussian sigma must be positive, got {sigma}")))
            }
            Profile::Dome { radius, .. } if *radius <= 0.0 => {
                Err(Error::Config(format!("dome radius must be positive, got {radius}")))
            }
            _ => Ok(()),
        }
    }
}

/// One angular harmonic of the kernel: k̃_n gains (re + i·im)·profile(x).
/// Only n ≥ 0 is listed; negative harmonics follow by conjugation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelTerm {
    pub n: u32,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub profile: Profile,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct OpticsSpec {
    pub attenuation: Option<Profile>,
    #[serde(default)]
    pub kernel: Vec<KernelTerm>,
}

pub struct OpticalParams<S: Scalar> {
    pub spec: OpticsSpec,
    /// Attenuation at the nodes.
    pub a: Grid<S>,
    /// Kernel harmonics k̃_n for n = 0..=m_k.
    pub k_modes: Vec<Grid<C<S>>>,
    pub m_k: usize,
    /// Total collision weight k₀(x) = ∫ k(x, α) dα = 2π k̃₀(x).
    pub k_total: Grid<S>,
    /// Effective attenuation σ_a = a − k₀.
    pub sigma_a: Grid<S>,
    /// Subcriticality gap δ = min σ_a over the disk (may be ≤ 0).
    pub delta: S,
    pub a_sup: S,
    /// Q∞ = sup a + sup k₀, the operator bound of attenuation + scattering.
    pub q_infty: S,
}

impl<S: Scalar> OpticalParams<S> {
    pub fn new(domain: &Domain<S>, spec: OpticsSpec) -> Result<Self> {
        if let Some(p) = &spec.attenuation {
            p.validate()?;
        }
        let mut m_k = 0usize;
        for t in &spec.kernel {
            t.profile.validate()?;
            m_k = m_k.max(t.n as usize);
            if t.n == 0 && t.im != 0.0 {
                return Err(Error::Config(
                    "harmonic 0 of a real kernel cannot carry an imaginary part".into(),
                ));
            }
        }

        let a = match &spec.attenuation {
            Some(p) => {
                let mut g = domain.zeros_real();
                for &u in &domain.interior {
                    let i = u as usize;
                    let (x, y) = domain.node_xy(i);
                    g[i] = p.eval(x, y);
                }
                g
            }
            None => domain.zeros_real(),
        };
        let mut a_sup = S::zero();
        for &u in &domain.interior {
            let v = a[u as usize];
            if v < S::zero() {
                return Err(Error::AdmissibilityViolation(format!(
                    "attenuation is negative ({:.3e}) inside the domain",
                    v.to_f64()
                )));
            }
            a_sup = a_sup.max(v);
        }

        let mut k_modes: Vec<Grid<C<S>>> = (0..=m_k).map(|_| domain.zeros_complex()).collect();
        for t in &spec.kernel {
            let coef = C::new(S::of(t.re), S::of(t.im));
            let g = &mut k_modes[t.n as usize];
            for &u in &domain.interior {
                let i = u as usize;
                let (x, y) = domain.node_xy(i);
                g[i] = g[i] + coef * t.profile.eval(x, y);
            }
        }

        // pointwise positivity of the angular kernel, sampled densely
        // (a degree-m_k trigonometric polynomial is pinned by a few times
        // that many samples)
        let n_angles = 8 * m_k.max(1) + 16;
        let two_pi = S::of(2.0) * S::PI();
        let mut k_scale = S::zero();
        for g in &k_modes {
            for &u in &domain.interior {
                k_scale = k_scale.max(g[u as usize].norm());
            }
        }
        let tol = -S::of(1e-12) * k_scale.max(S::one());
        if !spec.kernel.is_empty() {
            for &u in &domain.interior {
                let i = u as usize;
                for q in 0..n_angles {
                    let alpha = two_pi * S::of(q as f64) / S::of(n_angles as f64);
                    let mut val = k_modes[0][i].re;
                    for (n, g) in k_modes.iter().enumerate().skip(1) {
                        let ph = crate::scalar::cis::<S>(alpha * S::of(n as f64));
                        val += S::of(2.0) * (g[i] * ph).re;
                    }
                    if val < tol {
                        let (x, y) = domain.node_xy(i);
                        return Err(Error::AdmissibilityViolation(format!(
                            "kernel dips to {:.3e} at ({:.3}, {:.3})",
                            val.to_f64(),
                            x.to_f64(),
                            y.to_f64()
                        )));
                    }
                }
            }
        }

        let mut k_total = domain.zeros_real();
        let mut sigma_a = domain.zeros_real();
        let mut k0_sup = S::zero();
        let mut delta = S::infinity();
        for &u in &domain.interior {
            let i = u as usize;
            let kt = two_pi * k_modes[0][i].re;
            k_total[i] = kt;
            sigma_a[i] = a[i] - kt;
            k0_sup = k0_sup.max(kt);
            delta = delta.min(sigma_a[i]);
        }
        let q_infty = a_sup + k0_sup;

        Ok(OpticalParams { spec, a, k_modes, m_k, k_total, sigma_a, delta, a_sup, q_infty })
    }

    /// A vacuum: a ≡ 0, no scattering.
    pub fn vacuum(domain: &Domain<S>) -> Self {
        Self::new(domain, OpticsSpec::default()).expect("vacuum parameters are admissible")
    }

    /// Attenuation at an arbitrary point (analytic profile).
    #[inline]
    pub fn attenuation_at(&self, x: S, y: S) -> S {
        match &self.spec.attenuation {
            Some(p) => p.eval(x, y),
            None => S::zero(),
        }
    }

    /// The iteration Q = a − S is strictly accretive only when σ_a stays
    /// positive; solvers that rely on contraction must call this first.
    pub fn require_subcritical(&self) -> Result<()> {
        if self.delta <= S::zero() {
            Err(Error::SubcriticalityViolation(format!(
                "min (a − k₀) = {:.4e} is not positive",
                self.delta.to_f64()
            )))
        } else {
            Ok(())
        }
    }

    /// True when every kernel harmonic is real, i.e. k(x, −α) = k(x, α);
    /// only then is S self-adjoint on L²(SM).
    pub fn is_even(&self) -> bool {
        self.spec.kernel.iter().all(|t| t.im == 0.0)
    }

    /// k̃_n as a grid (handles negative n by conjugation); None beyond m_k.
    pub fn kernel_mode(&self, domain: &Domain<S>, n: i32) -> Option<Grid<C<S>>> {
        if n.unsigned_abs() as usize > self.m_k {
            return None;
        }
        let g = &self.k_modes[n.unsigned_abs() as usize];
        if n >= 0 {
            Some(g.clone())
        } else {
            let mut out = domain.zeros_complex();
            for &u in &domain.interior {
                let i = u as usize;
                out[i] = g[i].conj();
            }
            Some(out)
        }
    }
}

/// Angular convolution with the kernel: (S u)_n = 2π k̃_n ũ_n, supported on
/// harmonics |n| ≤ m_k.
pub fn apply_s<S: Scalar>(
    domain: &Domain<S>,
    optics: &OpticalParams<S>,
    u: &FiberField<S>,
) -> FiberField<S> {
    let band = optics.m_k.min(u.n_max);
    let mut out = FiberField::zeros(domain, band);
    let two_pi = S::of(2.0) * S::PI();
    for n in -(band as i32)..=band as i32 {
        let src = u.mode(n).unwrap();
        let slot = out.slot(n).unwrap();
        let kn = &optics.k_modes[n.unsigned_abs() as usize];
        for &k in &domain.interior {
            let i = k as usize;
            let coeff = if n >= 0 { kn[i] } else { kn[i].conj() };
            out.modes[slot][i] = coeff * src[i] * two_pi;
        }
    }
    out
}

/// Pointwise a·u (multiplication operator on every harmonic).
pub fn apply_attenuation<S: Scalar>(
    domain: &Domain<S>,
    optics: &OpticalParams<S>,
    u: &FiberField<S>,
) -> FiberField<S> {
    let mut out = FiberField::zeros(domain, u.n_max);
    for (m, g) in u.modes.iter().enumerate() {
        for &k in &domain.interior {
            let i = k as usize;
            out.modes[m][i] = g[i] * optics.a[i];
        }
    }
    out
}
