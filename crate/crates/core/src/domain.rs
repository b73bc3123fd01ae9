//! Disk domain on a masked Cartesian grid.
//!
//! Nodes sit at `x_j = -R + j·h`, `h = 2R/(n-1)`, row-major `idx = i·n + j`
//! with `i` the y index. Quadrature weights are exact areas of the
//! node-centered cells clipped against the disk; slivers belonging to cells
//! of outside nodes are adopted by the nearest inside node so the weights
//! sum to `πR²` exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Scalar, C};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default = "default_boundary_n")]
    pub boundary_n: usize,
    #[serde(default = "default_grid_n")]
    pub dir_n: usize,
}

fn default_radius() -> f64 {
    1.0
}
fn default_grid_n() -> usize {
    128
}
fn default_boundary_n() -> usize {
    256
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec { radius: 1.0, grid_n: 128, boundary_n: 256, dir_n: 128 }
    }
}

/// Node-indexed storage over the full square grid (masked entries are zero).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    pub data: Vec<T>,
}

impl<T: Copy + Default> Grid<T> {
    pub fn zeros(len: usize) -> Self {
        Grid { data: vec![T::default(); len] }
    }
}

impl<T> std::ops::Index<usize> for Grid<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T> std::ops::IndexMut<usize> for Grid<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

pub struct Domain<S: Scalar> {
    pub spec: DomainSpec,
    pub n: usize,
    pub radius: S,
    pub h: S,
    /// Strict interior test per node.
    pub mask: Vec<bool>,
    /// Row-major list of interior node indices.
    pub interior: Vec<u32>,
    /// Exact disk-clipped cell area per node (zero off the mask; slivers adopted).
    pub weight: Vec<S>,
    /// Nearest interior node; identity on the mask, `u32::MAX` far outside.
    pub ext: Vec<u32>,
}

impl<S: Scalar> Domain<S> {
    pub fn new(spec: DomainSpec) -> Result<Self> {
        if spec.grid_n < 16 {
            return Err(Error::DomainTooCoarse(format!("grid_n = {} < 16", spec.grid_n)));
        }
        if spec.boundary_n % 2 != 0 || spec.dir_n % 2 != 0 || spec.boundary_n < 8 || spec.dir_n < 8 {
            return Err(Error::DomainTooCoarse(format!(
                "boundary_n = {}, dir_n = {} must be even and at least 8",
                spec.boundary_n, spec.dir_n
            )));
        }
        let n = spec.grid_n;
        let radius = S::of(spec.radius);
        let h = S::of(2.0) * radius / S::of((n - 1) as f64);
        let r2_strict = radius * radius * (S::one() - S::of(1e-12));

        let mut mask = vec![false; n * n];
        let mut interior = Vec::new();
        for i in 0..n {
            let y = Self::coord_static(radius, h, i);
            for j in 0..n {
                let x = Self::coord_static(radius, h, j);
                if x * x + y * y < r2_strict {
                    mask[i * n + j] = true;
                    interior.push((i * n + j) as u32);
                }
            }
        }

        // Nearest interior node for everything within a few cells of the mask.
        let mut ext = vec![u32::MAX; n * n];
        for idx in 0..n * n {
            if mask[idx] {
                ext[idx] = idx as u32;
                continue;
            }
            let i = idx / n;
            let j = idx % n;
            let mut best = u32::MAX;
            let mut best_d2 = i64::MAX;
            for di in -4i64..=4 {
                for dj in -4i64..=4 {
                    let ii = i as i64 + di;
                    let jj = j as i64 + dj;
                    if ii < 0 || jj < 0 || ii >= n as i64 || jj >= n as i64 {
                        continue;
                    }
                    let cand = (ii as usize) * n + jj as usize;
                    if mask[cand] {
                        let d2 = di * di + dj * dj;
                        if d2 < best_d2 {
                            best_d2 = d2;
                            best = cand as u32;
                        }
                    }
                }
            }
            ext[idx] = best;
        }

        let mut weight = vec![S::zero(); n * n];
        let half = h * S::of(0.5);
        for idx in 0..n * n {
            let i = idx / n;
            let j = idx % n;
            let x = Self::coord_static(radius, h, j);
            let y = Self::coord_static(radius, h, i);
            let a = disk_cell_area(x - half, x + half, y - half, y + half, radius);
            if a <= S::zero() {
                continue;
            }
            let target = if mask[idx] { idx as u32 } else { ext[idx] };
            if target != u32::MAX {
                weight[target as usize] += a;
            }
        }

        Ok(Domain { spec, n, radius, h, mask, interior, weight, ext })
    }

    fn coord_static(radius: S, h: S, k: usize) -> S {
        -radius + h * S::of(k as f64)
    }

    #[inline]
    pub fn coord(&self, k: usize) -> S {
        -self.radius + self.h * S::of(k as f64)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    #[inline]
    pub fn node_xy(&self, idx: usize) -> (S, S) {
        (self.coord(idx % self.n), self.coord(idx / self.n))
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn zeros_real(&self) -> Grid<S> {
        Grid { data: vec![S::zero(); self.len()] }
    }

    pub fn zeros_complex(&self) -> Grid<C<S>> {
        Grid { data: vec![C::new(S::zero(), S::zero()); self.len()] }
    }

    /// Fills a grid from a callback on node coordinates (full square, so the
    /// values extend smoothly past the mask for interpolation).
    pub fn fill_real(&self, f: impl Fn(S, S) -> S) -> Grid<S> {
        let mut g = self.zeros_real();
        for idx in 0..self.len() {
            let (x, y) = self.node_xy(idx);
            g[idx] = f(x, y);
        }
        g
    }

    pub fn fill_complex(&self, f: impl Fn(S, S) -> C<S>) -> Grid<C<S>> {
        let mut g = self.zeros_complex();
        for idx in 0..self.len() {
            let (x, y) = self.node_xy(idx);
            g[idx] = f(x, y);
        }
        g
    }

    /// Zeroes all off-mask entries in place.
    pub fn restrict_to_mask_complex(&self, g: &mut Grid<C<S>>) {
        for idx in 0..self.len() {
            if !self.mask[idx] {
                g[idx] = C::new(S::zero(), S::zero());
            }
        }
    }

    /// ∫_M f dx with the exact cell weights.
    pub fn integrate(&self, f: &Grid<S>) -> S {
        let mut acc = S::zero();
        for &idx in &self.interior {
            acc += self.weight[idx as usize] * f[idx as usize];
        }
        acc
    }

    /// ∫_M f dx for a complex grid.
    pub fn integrate_complex(&self, f: &Grid<C<S>>) -> C<S> {
        let mut acc = C::new(S::zero(), S::zero());
        for &idx in &self.interior {
            acc = acc + f[idx as usize] * self.weight[idx as usize];
        }
        acc
    }

    /// Weighted L² pairing Σ w·u·conj(v).
    pub fn inner(&self, u: &Grid<C<S>>, v: &Grid<C<S>>, extra: Option<&Grid<S>>) -> C<S> {
        let mut acc = C::new(S::zero(), S::zero());
        for &idx in &self.interior {
            let i = idx as usize;
            let w = match extra {
                Some(e) => self.weight[i] * e[i],
                None => self.weight[i],
            };
            acc = acc + u[i] * v[i].conj() * w;
        }
        acc
    }

    /// Bilinear interpolation with nearest-inside extension at off-mask corners.
    #[inline]
    pub fn interp(&self, g: &Grid<C<S>>, x: S, y: S) -> C<S> {
        let n = self.n;
        let fx = (x + self.radius) / self.h;
        let fy = (y + self.radius) / self.h;
        let max_cell = S::of((n - 2) as f64);
        let jx = fx.max(S::zero()).min(max_cell).floor();
        let jy = fy.max(S::zero()).min(max_cell).floor();
        let tx = fx - jx;
        let ty = fy - jy;
        let j = jx.to_f64() as usize;
        let i = jy.to_f64() as usize;
        let at = |ii: usize, jj: usize| -> C<S> {
            let idx = ii * n + jj;
            let e = self.ext[idx];
            if e == u32::MAX {
                C::new(S::zero(), S::zero())
            } else {
                g[e as usize]
            }
        };
        let one = S::one();
        let v00 = at(i, j);
        let v01 = at(i, j + 1);
        let v10 = at(i + 1, j);
        let v11 = at(i + 1, j + 1);
        (v00 * (one - tx) + v01 * tx) * (one - ty) + (v10 * (one - tx) + v11 * tx) * ty
    }

    #[inline]
    pub fn interp_real(&self, g: &Grid<S>, x: S, y: S) -> S {
        let n = self.n;
        let fx = (x + self.radius) / self.h;
        let fy = (y + self.radius) / self.h;
        let max_cell = S::of((n - 2) as f64);
        let jx = fx.max(S::zero()).min(max_cell).floor();
        let jy = fy.max(S::zero()).min(max_cell).floor();
        let tx = fx - jx;
        let ty = fy - jy;
        let j = jx.to_f64() as usize;
        let i = jy.to_f64() as usize;
        let at = |ii: usize, jj: usize| -> S {
            let idx = ii * n + jj;
            let e = self.ext[idx];
            if e == u32::MAX {
                S::zero()
            } else {
                g[e as usize]
            }
        };
        let one = S::one();
        let v00 = at(i, j);
        let v01 = at(i, j + 1);
        let v10 = at(i + 1, j);
        let v11 = at(i + 1, j + 1);
        (v00 * (one - tx) + v01 * tx) * (one - ty) + (v10 * (one - tx) + v11 * tx) * ty
    }

    /// First derivative along x: central where possible, second-order
    /// one-sided at the mask edge, first-order when only one neighbor exists.
    pub fn dx(&self, g: &Grid<C<S>>) -> Grid<C<S>> {
        self.derivative(g, 1)
    }

    /// First derivative along y.
    pub fn dy(&self, g: &Grid<C<S>>) -> Grid<C<S>> {
        self.derivative(g, self.n as isize)
    }

    fn derivative(&self, g: &Grid<C<S>>, stride: isize) -> Grid<C<S>> {
        let mut out = self.zeros_complex();
        let inv2h = S::one() / (S::of(2.0) * self.h);
        let invh = S::one() / self.h;
        let len = self.len() as isize;
        let ok = |idx: isize| -> bool { idx >= 0 && idx < len && self.mask[idx as usize] };
        for &u in &self.interior {
            let idx = u as isize;
            let p = ok(idx + stride);
            let m = ok(idx - stride);
            let v = if p && m {
                (g[(idx + stride) as usize] - g[(idx - stride) as usize]) * inv2h
            } else if p {
                if ok(idx + 2 * stride) {
                    (g[(idx + stride) as usize] * S::of(4.0)
                        - g[idx as usize] * S::of(3.0)
                        - g[(idx + 2 * stride) as usize])
                        * inv2h
                } else {
                    (g[(idx + stride) as usize] - g[idx as usize]) * invh
                }
            } else if m {
                if ok(idx - 2 * stride) {
                    (g[idx as usize] * S::of(3.0) - g[(idx - stride) as usize] * S::of(4.0)
                        + g[(idx - 2 * stride) as usize])
                        * inv2h
                } else {
                    (g[idx as usize] - g[(idx - stride) as usize]) * invh
                }
            } else {
                C::new(S::zero(), S::zero())
            };
            out[idx as usize] = v;
        }
        out
    }

    /// Coefficients of the `dx` stencil at one interior node: the emitted
    /// pairs `(node, w)` satisfy `dx(g)[idx] = Σ w·g[node]` exactly, so a
    /// sparse matrix assembled from them is the same operator as [`Self::dx`].
    pub fn dx_stencil(&self, idx: u32, out: &mut Vec<(u32, S)>) {
        self.derivative_stencil(idx, 1, out)
    }

    /// Coefficients of the `dy` stencil at one interior node.
    pub fn dy_stencil(&self, idx: u32, out: &mut Vec<(u32, S)>) {
        self.derivative_stencil(idx, self.n as isize, out)
    }

    fn derivative_stencil(&self, node: u32, stride: isize, out: &mut Vec<(u32, S)>) {
        out.clear();
        let inv2h = S::one() / (S::of(2.0) * self.h);
        let invh = S::one() / self.h;
        let len = self.len() as isize;
        let ok = |idx: isize| -> bool { idx >= 0 && idx < len && self.mask[idx as usize] };
        let idx = node as isize;
        let p = ok(idx + stride);
        let m = ok(idx - stride);
        if p && m {
            out.push(((idx + stride) as u32, inv2h));
            out.push(((idx - stride) as u32, -inv2h));
        } else if p {
            if ok(idx + 2 * stride) {
                out.push(((idx + stride) as u32, S::of(4.0) * inv2h));
                out.push((node, -S::of(3.0) * inv2h));
                out.push(((idx + 2 * stride) as u32, -inv2h));
            } else {
                out.push(((idx + stride) as u32, invh));
                out.push((node, -invh));
            }
        } else if m {
            if ok(idx - 2 * stride) {
                out.push((node, S::of(3.0) * inv2h));
                out.push(((idx - stride) as u32, -S::of(4.0) * inv2h));
                out.push(((idx - 2 * stride) as u32, inv2h));
            } else {
                out.push((node, invh));
                out.push(((idx - stride) as u32, -invh));
            }
        }
    }

    /// Wirtinger ∂ = (∂_x - i ∂_y)/2.
    pub fn d_holo(&self, g: &Grid<C<S>>) -> Grid<C<S>> {
        let gx = self.dx(g);
        let gy = self.dy(g);
        let mut out = self.zeros_complex();
        let half = S::of(0.5);
        for &u in &self.interior {
            let i = u as usize;
            out[i] = (gx[i] - gy[i] * C::new(S::zero(), S::one())) * half;
        }
        out
    }

    /// Wirtinger ∂̄ = (∂_x + i ∂_y)/2.
    pub fn d_anti(&self, g: &Grid<C<S>>) -> Grid<C<S>> {
        let gx = self.dx(g);
        let gy = self.dy(g);
        let mut out = self.zeros_complex();
        let half = S::of(0.5);
        for &u in &self.interior {
            let i = u as usize;
            out[i] = (gx[i] + gy[i] * C::new(S::zero(), S::one())) * half;
        }
        out
    }

    /// Boundary sample angle for arc index `i`.
    pub fn boundary_angle(&self, i: usize) -> S {
        S::of(2.0) * S::PI() * S::of(i as f64) / S::of(self.spec.boundary_n as f64)
    }

    pub fn boundary_point(&self, i: usize) -> (S, S) {
        let phi = self.boundary_angle(i);
        (self.radius * phi.cos(), self.radius * phi.sin())
    }
}

/// Exact area of `[x0,x1]×[y0,y1] ∩ {x²+y² ≤ R²}`.
pub fn disk_cell_area<S: Scalar>(x0: S, x1: S, y0: S, y1: S, r: S) -> S {
    let mut cuts: Vec<S> = vec![x0.max(-r), x1.min(r)];
    if cuts[0] >= cuts[1] {
        return S::zero();
    }
    for y in [y0, y1] {
        let y2 = y * y;
        if y2 < r * r {
            let xc = (r * r - y2).sqrt();
            for x in [-xc, xc] {
                if x > cuts[0] && x < cuts[1] {
                    cuts.push(x);
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // antiderivative of sqrt(R² - x²)
    let cap = |x: S| -> S {
        let xr = (x / r).max(-S::one()).min(S::one());
        (x * (r * r - x * x).max(S::zero()).sqrt() + r * r * xr.asin()) * S::of(0.5)
    };
    let mut area = S::zero();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= S::zero() {
            continue;
        }
        let xm = (a + b) * S::of(0.5);
        let ym = (r * r - xm * xm).max(S::zero()).sqrt();
        let top_is_cell = y1 <= ym;
        let bot_is_cell = y0 >= -ym;
        let mid_len = y1.min(ym) - y0.max(-ym);
        if mid_len <= S::zero() {
            continue;
        }
        let seg = match (top_is_cell, bot_is_cell) {
            (true, true) => (y1 - y0) * (b - a),
            (true, false) => y1 * (b - a) + (cap(b) - cap(a)),
            (false, true) => (cap(b) - cap(a)) - y0 * (b - a),
            (false, false) => (cap(b) - cap(a)) * S::of(2.0),
        };
        area += seg;
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_domain(n: usize) -> Domain<f64> {
        Domain::new(DomainSpec { radius: 1.0, grid_n: n, boundary_n: 64, dir_n: 32 }).unwrap()
    }

    #[test]
    fn weights_sum_to_disk_area() {
        for n in [17, 32, 128] {
            let d = unit_domain(n);
            let total: f64 = d.weight.iter().sum();
            assert!(
                (total - std::f64::consts::PI).abs() < 1e-12,
                "n = {n}: weight sum {total}"
            );
        }
    }

    #[test]
    fn cell_area_cases() {
        // fully inside
        let a = disk_cell_area::<f64>(-0.1, 0.1, -0.1, 0.1, 1.0);
        assert!((a - 0.04).abs() < 1e-15);
        // fully outside
        assert_eq!(disk_cell_area::<f64>(1.1, 1.3, 0.0, 0.2, 1.0), 0.0);
        // quarter disk
        let q = disk_cell_area::<f64>(0.0, 2.0, 0.0, 2.0, 1.0);
        assert!((q - std::f64::consts::PI / 4.0).abs() < 1e-14);
        // full disk
        let f = disk_cell_area::<f64>(-2.0, 2.0, -2.0, 2.0, 1.0);
        assert!((f - std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn quadrature_is_second_order_on_smooth_integrand() {
        // ∫ (1 - r²) dx over unit disk = π/2
        let exact = std::f64::consts::PI / 2.0;
        let mut errs = Vec::new();
        for n in [33, 65, 129] {
            let d = unit_domain(n);
            let g = d.fill_real(|x, y| 1.0 - x * x - y * y);
            errs.push((d.integrate(&g) - exact).abs());
        }
        // error ≈ h² (midpoint constant); check the level and the rate
        assert!(errs[2] < 3e-4, "errs = {errs:?}");
        assert!(errs[1] / errs[2] > 3.5, "errs = {errs:?}");
    }

    #[test]
    fn derivative_is_second_order_interior() {
        let d = unit_domain(65);
        let g = d.fill_complex(|x, y| C::new(x * x * y, x - y * y));
        let gx = d.dx(&g);
        // interior node away from boundary
        let idx = d.idx(32, 40);
        let (x, y) = d.node_xy(idx);
        assert!((gx[idx].re - 2.0 * x * y).abs() < 1e-12);
        assert!((gx[idx].im - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_stencils_match_the_operator() {
        // assembling through the coefficient lists must reproduce dx/dy
        // to rounding, including the one-sided rim cases
        let d = unit_domain(37);
        let hash = |x: f64, y: f64| (x * 127.1 + y * 311.7).sin() * 4375.85 % 1.0;
        let g = d.fill_complex(|x, y| C::new(hash(x, y), hash(y + 0.3, x)));
        let gx = d.dx(&g);
        let gy = d.dy(&g);
        let mut pairs = Vec::new();
        for &u in &d.interior {
            d.dx_stencil(u, &mut pairs);
            let vx: C<f64> = pairs.iter().map(|&(c, w)| g[c as usize] * w).sum();
            assert!((vx - gx[u as usize]).norm() < 1e-12);
            d.dy_stencil(u, &mut pairs);
            let vy: C<f64> = pairs.iter().map(|&(c, w)| g[c as usize] * w).sum();
            assert!((vy - gy[u as usize]).norm() < 1e-12);
        }
    }

    #[test]
    fn interp_reproduces_bilinear_and_extends() {
        let d = unit_domain(33);
        let g = d.fill_complex(|x, y| C::new(2.0 * x + y, 0.0));
        let v = d.interp(&g, 0.113, -0.207);
        assert!((v.re - (2.0 * 0.113 - 0.207)).abs() < 1e-12);
        // near the rim the extension keeps values bounded
        let v_edge = d.interp(&g, 0.999, 0.0);
        assert!(v_edge.re.abs() < 3.0);
    }

    #[test]
    fn spec_validation() {
        assert!(Domain::<f64>::new(DomainSpec { radius: 1.0, grid_n: 8, boundary_n: 64, dir_n: 32 }).is_err());
        assert!(Domain::<f64>::new(DomainSpec { radius: 1.0, grid_n: 32, boundary_n: 63, dir_n: 32 }).is_err());
    }
}
