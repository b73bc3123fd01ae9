//! Finite θ-harmonic fields u(x, θ) = Σ_{|n|≤N} ũ_n(x) e^{inθ} on the unit
//! sphere bundle, and the fiberwise split of the geodesic vector field.
//!
//! With ∂ = (∂_x − i∂_y)/2 and ∂̄ its conjugate, the generator splits as
//! X = η₊ + η₋ where η₊ raises the harmonic degree by one and η₋ lowers it:
//!   η₊ on mode n:  c ∂ũ_n + n (∂c) ũ_n   = c^{1−n} ∂(c^n ũ_n),
//!   η₋ on mode n:  c ∂̄ũ_n − n (∂̄c) ũ_n  = c^{1+n} ∂̄(c^{−n} ũ_n),
//! X⊥ = −i(η₊ − η₋), and V = ∂_θ acts as multiplication by i·n.
//!
//! [`apply_x`]/[`apply_x_perp`] use the expanded (product-rule) form with the
//! analytic speed gradient, while [`eta_plus`]/[`eta_minus`] use the compact
//! power form; the two differ by the discrete product-rule defect, which is
//! second order in the grid spacing and is what the operator consistency
//! tests measure.

use crate::domain::{Domain, Grid};
use crate::error::{Error, Result};
use crate::geometry::speed::SpeedField;
use crate::scalar::{c_zero, cis, Scalar, C};

#[derive(Clone, Debug)]
pub struct FiberField<S: Scalar> {
    /// Harmonics run n = -n_max ..= n_max; `modes[m]` holds n = m - n_max.
    pub n_max: usize,
    pub modes: Vec<Grid<C<S>>>,
}

impl<S: Scalar> FiberField<S> {
    pub fn zeros(domain: &Domain<S>, n_max: usize) -> Self {
        FiberField {
            n_max,
            modes: (0..2 * n_max + 1).map(|_| domain.zeros_complex()).collect(),
        }
    }

    #[inline]
    pub fn slot(&self, n: i32) -> Option<usize> {
        let m = n + self.n_max as i32;
        if m < 0 || m >= self.modes.len() as i32 {
            None
        } else {
            Some(m as usize)
        }
    }

    #[inline]
    pub fn mode(&self, n: i32) -> Option<&Grid<C<S>>> {
        self.slot(n).map(|m| &self.modes[m])
    }

    #[inline]
    pub fn mode_mut(&mut self, n: i32) -> Option<&mut Grid<C<S>>> {
        self.slot(n).map(move |m| &mut self.modes[m])
    }

    pub fn set_mode(&mut self, n: i32, g: Grid<C<S>>) {
        let m = self.slot(n).expect("harmonic out of range");
        self.modes[m] = g;
    }

    /// Builds a field of degree `n_max` by projecting `t_samples` equispaced
    /// angular samples of the closure. The sample count must resolve the
    /// requested band, i.e. exceed 2·n_max.
    pub fn from_fn(
        domain: &Domain<S>,
        n_max: usize,
        t_samples: usize,
        f: impl Fn(S, S, S) -> C<S>,
    ) -> Result<Self> {
        if t_samples <= 2 * n_max {
            return Err(Error::AliasError(format!(
                "{t_samples} angular samples cannot resolve harmonics up to {n_max}"
            )));
        }
        let mut out = Self::zeros(domain, n_max);
        let t_inv = S::one() / S::of(t_samples as f64);
        for t in 0..t_samples {
            let theta = S::of(2.0) * S::PI() * S::of(t as f64) * t_inv;
            for &u in &domain.interior {
                let i = u as usize;
                let (x, y) = domain.node_xy(i);
                let val = f(x, y, theta) * t_inv;
                // e^{-inθ} walked down from n = n_max
                let step = cis(-theta);
                let mut ph = cis(theta * S::of(out.n_max as f64));
                for m in 0..out.modes.len() {
                    // m = 0 is n = -n_max, phase e^{+i n_max θ}
                    out.modes[m][i] = out.modes[m][i] + val * ph;
                    ph = ph * step;
                }
            }
        }
        Ok(out)
    }

    /// Pointwise synthesis Σ ũ_n(x) e^{inθ} with bilinear spatial lookup.
    pub fn evaluate_at(&self, domain: &Domain<S>, x: S, y: S, theta: S) -> C<S> {
        let mut acc = c_zero::<S>();
        let step = cis(theta);
        let mut ph = cis(-theta * S::of(self.n_max as f64));
        for g in &self.modes {
            acc = acc + domain.interp(g, x, y) * ph;
            ph = ph * step;
        }
        acc
    }

    /// Per-harmonic squared norms 2π ∫ |ũ_n|² c⁻² dx (fiber Parseval blocks).
    pub fn mode_energies(&self, domain: &Domain<S>, speed: &SpeedField<S>) -> Vec<S> {
        self.modes
            .iter()
            .map(|g| {
                let mut acc = S::zero();
                for &u in &domain.interior {
                    let i = u as usize;
                    acc += domain.weight[i] * g[i].norm_sqr() / (speed.c[i] * speed.c[i]);
                }
                S::of(2.0) * S::PI() * acc
            })
            .collect()
    }

    /// L²(SM, dΣ³) norm via Parseval over the harmonics.
    pub fn l2_norm(&self, domain: &Domain<S>, speed: &SpeedField<S>) -> S {
        self.mode_energies(domain, speed).iter().fold(S::zero(), |a, &e| a + e).sqrt()
    }

    /// ⟨u, v⟩_{L²(SM)} = 2π Σ_n ∫ ũ_n conj(ṽ_n) c⁻² dx.
    pub fn inner_product(&self, other: &Self, domain: &Domain<S>, speed: &SpeedField<S>) -> C<S> {
        let mut acc = c_zero::<S>();
        let lo = -(self.n_max.min(other.n_max) as i32);
        for n in lo..=-lo {
            let (a, b) = (self.mode(n).unwrap(), other.mode(n).unwrap());
            for &k in &domain.interior {
                let i = k as usize;
                let w = domain.weight[i] / (speed.c[i] * speed.c[i]);
                acc = acc + a[i] * b[i].conj() * w;
            }
        }
        acc * S::of(2.0) * S::PI()
    }

    /// Largest |n| whose harmonic carries more than `rel_tol²` of the total
    /// squared norm.
    pub fn degree(&self, domain: &Domain<S>, speed: &SpeedField<S>, rel_tol: S) -> usize {
        let e = self.mode_energies(domain, speed);
        let total: S = e.iter().fold(S::zero(), |a, &v| a + v);
        if total <= S::zero() {
            return 0;
        }
        let cut = rel_tol * rel_tol * total;
        let mut deg = 0usize;
        for (m, &v) in e.iter().enumerate() {
            let n = (m as i32 - self.n_max as i32).unsigned_abs() as usize;
            if v > cut && n > deg {
                deg = n;
            }
        }
        deg
    }

    pub fn padded(&self, n_max: usize, domain: &Domain<S>) -> Self {
        let mut out = Self::zeros(domain, n_max.max(self.n_max));
        for (m, g) in self.modes.iter().enumerate() {
            let n = m as i32 - self.n_max as i32;
            let slot = out.slot(n).unwrap();
            out.modes[slot] = g.clone();
        }
        out
    }

    pub fn truncated(&self, n_max: usize, domain: &Domain<S>) -> Self {
        let mut out = Self::zeros(domain, n_max);
        for n in -(n_max as i32)..=n_max as i32 {
            if let (Some(src), Some(dst)) = (self.mode(n), out.slot(n)) {
                out.modes[dst] = src.clone();
            }
        }
        out
    }

    /// self + alpha·other, padded to the larger band.
    pub fn add_scaled(&self, other: &Self, alpha: S, domain: &Domain<S>) -> Self {
        let n_max = self.n_max.max(other.n_max);
        let mut out = self.padded(n_max, domain);
        for (m, g) in other.modes.iter().enumerate() {
            let n = m as i32 - other.n_max as i32;
            let slot = out.slot(n).unwrap();
            for &u in &domain.interior {
                let i = u as usize;
                out.modes[slot][i] = out.modes[slot][i] + g[i] * alpha;
            }
        }
        out
    }

    pub fn sub(&self, other: &Self, domain: &Domain<S>) -> Self {
        self.add_scaled(other, -S::one(), domain)
    }

    pub fn scaled(&self, alpha: S) -> Self {
        let mut out = self.clone();
        for g in &mut out.modes {
            for v in &mut g.data {
                *v = *v * alpha;
            }
        }
        out
    }

    /// Forces the conjugate symmetry ũ_{-n} = conj(ũ_n) of real fields.
    pub fn symmetrize_real(&mut self, domain: &Domain<S>) {
        let half = S::of(0.5);
        for n in 0..=self.n_max as i32 {
            let (mp, mm) = (self.slot(n).unwrap(), self.slot(-n).unwrap());
            for &u in &domain.interior {
                let i = u as usize;
                let avg = (self.modes[mp][i] + self.modes[mm][i].conj()) * half;
                self.modes[mp][i] = avg;
                self.modes[mm][i] = avg.conj();
            }
        }
    }
}

/// V = ∂_θ: multiplies harmonic n by i·n.
pub fn apply_v<S: Scalar>(domain: &Domain<S>, u: &FiberField<S>) -> FiberField<S> {
    let mut out = FiberField::zeros(domain, u.n_max);
    for (m, g) in u.modes.iter().enumerate() {
        let n = S::of((m as i32 - u.n_max as i32) as f64);
        let factor = C::new(S::zero(), n);
        for &k in &domain.interior {
            let i = k as usize;
            out.modes[m][i] = g[i] * factor;
        }
    }
    out
}

/// Raising block in compact form: mode n ↦ c^{1−n} ∂(c^n ũ_n) at degree n+1.
pub fn eta_plus_mode<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
    g: &Grid<C<S>>,
    n: i32,
) -> Grid<C<S>> {
    let mut tmp = domain.zeros_complex();
    for &k in &domain.interior {
        let i = k as usize;
        tmp[i] = g[i] * speed.c[i].powi(n);
    }
    let dh = domain.d_holo(&tmp);
    let mut out = domain.zeros_complex();
    for &k in &domain.interior {
        let i = k as usize;
        out[i] = dh[i] * speed.c[i].powi(1 - n);
    }
    out
}

/// Lowering block in compact form: mode n ↦ c^{1+n} ∂̄(c^{−n} ũ_n) at degree n−1.
pub fn eta_minus_mode<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
    g: &Grid<C<S>>,
    n: i32,
) -> Grid<C<S>> {
    let mut tmp = domain.zeros_complex();
    for &k in &domain.interior {
        let i = k as usize;
        tmp[i] = g[i] * speed.c[i].powi(-n);
    }
    let da = domain.d_anti(&tmp);
    let mut out = domain.zeros_complex();
    for &k in &domain.interior {
        let i = k as usize;
        out[i] = da[i] * speed.c[i].powi(1 + n);
    }
    out
}

/// Raising block in expanded form: c ∂ũ_n + n (∂c) ũ_n with the analytic
/// speed gradient.
pub fn eta_plus_mode_direct<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
    g: &Grid<C<S>>,
    n: i32,
) -> Grid<C<S>> {
    let dh = domain.d_holo(g);
    let nn = S::of(n as f64);
    let half = S::of(0.5);
    let mut out = domain.zeros_complex();
    for &k in &domain.interior {
        let i = k as usize;
        let (x, y) = domain.node_xy(i);
        let (c, cx, cy) = speed.eval(x, y);
        let dc = C::new(cx * half, -cy * half);
        out[i] = dh[i] * c + g[i] * dc * nn;
    }
    out
}

/// Lowering block in expanded form: c ∂̄ũ_n − n (∂̄c) ũ_n.
pub fn eta_minus_mode_direct<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
    g: &Grid<C<S>>,
    n: i32,
) -> Grid<C<S>> {
    let da = domain.d_anti(g);
    let nn = S::of(n as f64);
    let half = S::of(0.5);
    let mut out = domain.zeros_complex();
    for &k in &domain.interior {
        let i = k as usize;
        let (x, y) = domain.node_xy(i);
        let (c, cx, cy) = speed.eval(x, y);
        let dbc = C::new(cx * half, cy * half);
        out[i] = da[i] * c - g[i] * dbc * nn;
    }
    out
}

/// η₊ on the whole field (band grows by one).
pub fn eta_plus<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
    u: &FiberField<S>,
) -> FiberField<S> {
    let mut out = FiberField::zeros(domain, u.n_max + 1);
    for (m, g) in u.modes.iter().enumerate() {
        let n = m as i32 - u.n_max as i32;
        let slot = out.slot(n + 1).unwrap();
        out.modes[slot] = eta_plus_mode(domain, speed, g, n);
    }
    out
}

/// η₋ on the whole field (band grows by one).
pub fn eta_minus<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
    u: &FiberField<S>,
) -> FiberField<S> {
    let mut out = FiberField::zeros(domain, u.n_max + 1);
    for (m, g) in u.modes.iter().enumerate() {
        let n = m as i32 - u.n_max as i32;
        let slot = out.slot(n - 1).unwrap();
        out.modes[slot] = eta_minus_mode(domain, speed, g, n);
    }
    out
}

/// Geodesic generator X = c cosθ ∂_x + c sinθ ∂_y + (∂_x c sinθ − ∂_y c cosθ) ∂_θ
/// in harmonic form: (Xu)_n = η₊ũ_{n−1} + η₋ũ_{n+1} with the expanded blocks.
pub fn apply_x<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
    u: &FiberField<S>,
) -> FiberField<S> {
    let mut out = FiberField::zeros(domain, u.n_max + 1);
    for n in -(out.n_max as i32)..=out.n_max as i32 {
        let slot = out.slot(n).unwrap();
        let mut acc = domain.zeros_complex();
        if let Some(g) = u.mode(n - 1) {
            let up = eta_plus_mode_direct(domain, speed, g, n - 1);
            for &k in &domain.interior {
                let i = k as usize;
                acc[i] = acc[i] + up[i];
            }
        }
        if let Some(g) = u.mode(n + 1) {
            let dn = eta_minus_mode_direct(domain, speed, g, n + 1);
            for &k in &domain.interior {
                let i = k as usize;
                acc[i] = acc[i] + dn[i];
            }
        }
        out.modes[slot] = acc;
    }
    out
}

/// Perpendicular generator X⊥ = −i(η₊ − η₋) with the same expanded blocks,
/// so the bracket identities with V hold exactly in the discretization.
pub fn apply_x_perp<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
    u: &FiberField<S>,
) -> FiberField<S> {
    let mi = C::new(S::zero(), -S::one());
    let mut out = FiberField::zeros(domain, u.n_max + 1);
    for n in -(out.n_max as i32)..=out.n_max as i32 {
        let slot = out.slot(n).unwrap();
        let mut acc = domain.zeros_complex();
        if let Some(g) = u.mode(n - 1) {
            let up = eta_plus_mode_direct(domain, speed, g, n - 1);
            for &k in &domain.interior {
                let i = k as usize;
                acc[i] = acc[i] + up[i] * mi;
            }
        }
        if let Some(g) = u.mode(n + 1) {
            let dn = eta_minus_mode_direct(domain, speed, g, n + 1);
            for &k in &domain.interior {
                let i = k as usize;
                acc[i] = acc[i] - dn[i] * mi;
            }
        }
        out.modes[slot] = acc;
    }
    out
}
