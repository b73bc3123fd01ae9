//! Self-check suite: every guarantee the library advertises, measured at a
//! pinned tolerance with the numbers it saw. The `selftest` subcommand of the
//! executable prints the same table that the integration suite asserts, one
//! line per check, so a failed deployment names the property it broke.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{Domain, DomainSpec, Grid};
use crate::error::Result;
use crate::fiber::{
    apply_v, apply_x, apply_x_perp, eta_minus, eta_minus_mode, eta_plus, eta_plus_mode,
    FiberField,
};
use crate::geometry::{
    convexity_constant, curvature, santalo_fan_integral, trace, Direction, FlowOptions,
    PhasePoint, SpeedField, SpeedModel,
};
use crate::optics::{apply_attenuation, apply_s, KernelTerm, OpticalParams, OpticsSpec, Profile};
use crate::recon::{
    case1_finish, case2_finish, degree_descent_probe, gauge_generate, gauge_verify,
    iso2_elimination_identity, isotropic_case1, isotropic_case2, recover_representative,
    step2_triangular, synthetic_gauge_harness, GaugeRepresentative, Iso1Backend, Iso2Backend,
    LsqOptions, Step1Backend,
};
use crate::scalar::C;
use crate::transport::{
    forward_solve, measure, norm_bound_check, trace_counterexample, BoundaryFan, FanSide,
    TransportConfig,
};

type D = Domain<f64>;
type Sp = SpeedField<f64>;
type Cx = C<f64>;

/// Outcome of one self-check: the verdict plus the quantities it rests on.
#[derive(Clone, Debug)]
pub struct Check {
    pub index: usize,
    pub name: &'static str,
    pub pass: bool,
    /// Measured numbers backing the verdict (or the error that aborted it).
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "check {:02} {:<34} {}  [{:>7.1}s]  {}",
            self.index,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

fn run(
    index: usize,
    name: &'static str,
    body: impl FnOnce() -> Result<(bool, String)>,
) -> Check {
    let t0 = Instant::now();
    let (pass, detail) = match body() {
        Ok((pass, detail)) => (pass, detail),
        Err(e) => (false, format!("aborted: {e}")),
    };
    Check { index, name, pass, detail, seconds: t0.elapsed().as_secs_f64() }
}

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

fn flat_disk(grid_n: usize, boundary_n: usize, dir_n: usize) -> Result<(D, Sp)> {
    let d = Domain::new(DomainSpec { radius: 1.0, grid_n, boundary_n, dir_n })?;
    let s = SpeedField::new(SpeedModel::Constant { value: 1.0 }, &d)?;
    Ok((d, s))
}

fn bumpy_disk(grid_n: usize) -> Result<(D, Sp)> {
    let d = Domain::new(DomainSpec {
        radius: 1.0,
        grid_n,
        boundary_n: 2 * grid_n,
        dir_n: grid_n,
    })?;
    let s = SpeedField::new(SpeedModel::RadialBump { eps: 0.15, sigma: 0.55 }, &d)?;
    Ok((d, s))
}

fn const_optics(d: &D, a: f64, kernel: &[(u32, f64)]) -> Result<OpticalParams<f64>> {
    let spec = OpticsSpec {
        attenuation: Some(Profile::Constant { value: a }),
        kernel: kernel
            .iter()
            .map(|&(n, v)| KernelTerm { n, re: 1.0, im: 0.0, profile: Profile::Constant { value: v } })
            .collect(),
    };
    OpticalParams::new(d, spec)
}

/// (R² − r²)·(c₀ + c₁x + c₂y) — zero-trace scalar building block.
fn bubble(d: &D, c0: f64, c1: f64, c2: f64) -> Grid<Cx> {
    let r2 = d.radius * d.radius;
    d.fill_complex(|x, y| C::new((r2 - x * x - y * y) * (c0 + c1 * x + c2 * y), 0.0))
}

fn conj_grid(d: &D, g: &Grid<Cx>) -> Grid<Cx> {
    let mut out = d.zeros_complex();
    for (dst, src) in out.data.iter_mut().zip(g.data.iter()) {
        *dst = src.conj();
    }
    out
}

fn rel_grid(d: &D, s: &Sp, got: &Grid<Cx>, want: &Grid<Cx>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &u in &d.interior {
        let i = u as usize;
        let w = d.weight[i] / (s.c[i] * s.c[i]);
        num += w * (got[i] - want[i]).norm_sqr();
        den += w * want[i].norm_sqr();
    }
    (num / den.max(1e-300)).sqrt()
}

fn rel_field(d: &D, s: &Sp, got: &FiberField<f64>, want: &FiberField<f64>) -> f64 {
    let diff = got.add_scaled(want, -1.0, d);
    diff.l2_norm(d, s) / want.l2_norm(d, s).max(1e-300)
}

/// Metric-weighted mean of a scalar grid over the interior.
fn metric_mean(d: &D, s: &Sp, g: &Grid<Cx>) -> Cx {
    let mut num = C::new(0.0, 0.0);
    let mut den = 0.0;
    for &u in &d.interior {
        let i = u as usize;
        let w = d.weight[i] / (s.c[i] * s.c[i]);
        num += g[i] * w;
        den += w;
    }
    num / den
}

/// Relative distance after removing both means (for quantities only defined
/// up to an additive constant).
fn rel_grid_mod_constants(d: &D, s: &Sp, got: &Grid<Cx>, want: &Grid<Cx>) -> f64 {
    let (mg, mw) = (metric_mean(d, s, got), metric_mean(d, s, want));
    let mut a = d.zeros_complex();
    let mut b = d.zeros_complex();
    for &u in &d.interior {
        let i = u as usize;
        a[i] = got[i] - mg;
        b[i] = want[i] - mw;
    }
    rel_grid(d, s, &a, &b)
}

/// Random conjugate-symmetric field with quadratic-polynomial harmonics.
fn random_band_field(d: &D, rng: &mut ChaCha8Rng, band: usize) -> FiberField<f64> {
    let mut f = FiberField::zeros(d, band);
    for n in 0..=band as i32 {
        let mut co = [C::new(0.0, 0.0); 6];
        for c in &mut co {
            let re = rng.random_range(-1.0..1.0);
            let im = if n == 0 { 0.0 } else { rng.random_range(-1.0..1.0) };
            *c = C::new(re, im);
        }
        let g = d.fill_complex(|x, y| {
            co[0] + co[1] * x + co[2] * y + co[3] * (x * x) + co[4] * (x * y) + co[5] * (y * y)
        });
        if n > 0 {
            f.set_mode(-n, conj_grid(d, &g));
        }
        f.set_mode(n, g);
    }
    f
}

// ---------------------------------------------------------------------------
// the checks
// ---------------------------------------------------------------------------

/// Fan-beam quadrature of 1 over phase space reproduces 2π² on the flat unit
/// disk within 0.5%, in under 30 s single-threaded.
pub fn santalo_identity() -> Check {
    run(1, "Santaló fan identity", || {
        let d = Domain::new(DomainSpec { radius: 1.0, grid_n: 128, boundary_n: 256, dir_n: 128 })?;
        let s = SpeedField::new(SpeedModel::Constant { value: 1.0 }, &d)?;
        let t = Instant::now();
        let got = santalo_fan_integral(&d, &s, |_, _, _| 1.0)?;
        let secs = t.elapsed().as_secs_f64();
        let want = 2.0 * PI * PI;
        let rel = (got - want).abs() / want;
        Ok((
            rel <= 5e-3 && secs < 30.0,
            format!("integral {got:.4} vs 2π² = {want:.4}, rel {rel:.1e}, {secs:.1}s"),
        ))
    })
}

/// Traced exit times match the chord law τ = 2cosβ of the flat unit disk to
/// 1e−6 over 10³ random boundary entries.
pub fn exit_time_oracle() -> Check {
    run(2, "exit-time chord law", || {
        let (d, s) = flat_disk(64, 128, 64)?;
        let opts = FlowOptions::for_domain(&d, &s);
        let mut rng = ChaCha8Rng::seed_from_u64(0x0002);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let phi = rng.random_range(0.0..TAU);
            let mu: f64 = rng.random_range(0.02..1.0);
            let side: f64 = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
            let theta = phi + PI + side * mu.acos();
            let start = PhasePoint::new(phi.cos(), phi.sin(), theta);
            let info = trace(&d, &s, start, Direction::Forward, opts, |_, _, _, _| {})?;
            worst = worst.max((info.tau - 2.0 * mu).abs());
        }
        Ok((worst <= 1e-6, format!("max |τ − 2cosβ| = {worst:.1e} over 1000 entries")))
    })
}

/// The chord-over-cosine supremum sits at the disk diameter: 2 on the unit
/// disk within [1.98, 2.02], and 2R on a radius-R disk within 1%.
pub fn convexity_scaling() -> Check {
    run(3, "convexity constant scaling", || {
        let (d1, s1) = flat_disk(96, 192, 32)?;
        let c_unit = convexity_constant(&d1, &s1)?;
        let d2: D = Domain::new(DomainSpec { radius: 1.6, grid_n: 96, boundary_n: 192, dir_n: 32 })?;
        let s2 = SpeedField::new(SpeedModel::Constant { value: 1.0 }, &d2)?;
        let c_scaled = convexity_constant(&d2, &s2)?;
        let rel = (c_scaled - 3.2).abs() / 3.2;
        Ok((
            (1.98..=2.02).contains(&c_unit) && rel <= 0.01,
            format!("C₀(R=1) = {c_unit:.4}; C₀(R=1.6) = {c_scaled:.4}, rel to 3.2: {rel:.1e}"),
        ))
    })
}

/// With constant attenuation, no scattering, and a unit source, the solver
/// reproduces (1 − e^{−a₀τ})/a₀ to 1e−3 in relative L² over phase space.
pub fn forward_closed_form() -> Check {
    run(4, "constant-attenuation closed form", || {
        let (d, s) = flat_disk(96, 192, 96)?;
        let a0 = 0.6;
        let params = const_optics(&d, a0, &[])?;
        let mut f = FiberField::zeros(&d, 0);
        f.set_mode(0, d.fill_complex(|_, _| C::new(1.0, 0.0)));
        let cfg = TransportConfig { n_max: Some(40), ..TransportConfig::default() };
        let sol = forward_solve(&d, &f, &params, &s, &cfg)?;
        let u = &sol.u;
        let nt = 96usize;
        let (mut num, mut den) = (0.0, 0.0);
        for &k in &d.interior {
            let i = k as usize;
            let (x, y) = d.node_xy(i);
            let w = d.weight[i];
            for t in 0..nt {
                let th = TAU * (t as f64 + 0.5) / nt as f64;
                let (sin, cos) = th.sin_cos();
                let dot = x * cos + y * sin;
                let tau_b = dot + (1.0 - x * x - y * y + dot * dot).sqrt();
                let want = (1.0 - (-a0 * tau_b).exp()) / a0;
                // evaluate the harmonic sum by phase recurrence
                let z = C::new(cos, sin);
                let mut ph = C::new((u.n_max as f64 * th).cos(), -(u.n_max as f64 * th).sin());
                let mut got = C::new(0.0, 0.0);
                for g in u.modes.iter() {
                    got += g[i] * ph;
                    ph *= z;
                }
                num += w * (got - C::new(want, 0.0)).norm_sqr();
                den += w * want * want;
            }
        }
        let rel = (num / den).sqrt();
        Ok((rel <= 1e-3, format!("relative L² deviation {rel:.1e} at band {}", u.n_max)))
    })
}

/// Scattering source iteration contracts from the first step and reaches
/// 1e−10 within 200 sweeps, for an isotropic and a degree-2 kernel, both with
/// subcriticality gap ≥ 0.1.
pub fn contraction_rates() -> Check {
    run(5, "source-iteration contraction", || {
        let (d, s) = flat_disk(32, 64, 32)?;
        let mut f = FiberField::zeros(&d, 2);
        f.set_mode(0, d.fill_complex(|x, y| C::new(0.8 - 0.3 * x * x + 0.2 * y, 0.0)));
        let g1 = d.fill_complex(|x, y| C::new(0.4 * x + 0.1, 0.5 * y - 0.2));
        f.set_mode(-1, conj_grid(&d, &g1));
        f.set_mode(1, g1);
        let g2 = d.fill_complex(|x, y| C::new(0.3 * y + 0.2, 0.25 * x));
        f.set_mode(-2, conj_grid(&d, &g2));
        f.set_mode(2, g2);
        let cfg = TransportConfig { iter_tol: 1e-10, max_iter: 200, ..TransportConfig::default() };
        let mut ok = true;
        let mut detail = String::new();
        for (label, kernel) in
            [("isotropic", vec![(0u32, 0.0557)]), ("degree 2", vec![(0u32, 0.05), (2u32, 0.012)])]
        {
            let params = const_optics(&d, 0.45, &kernel)?;
            let sol = forward_solve(&d, &f, &params, &s, &cfg)?;
            let worst_ratio =
                sol.residuals.windows(2).map(|w| w[1] / w[0]).fold(0.0f64, f64::max);
            let last = *sol.residuals.last().unwrap();
            ok &= params.delta >= 0.0999 && worst_ratio < 1.0 && sol.iterations <= 200
                && last < 1e-10;
            detail += &format!(
                "{label}: δ = {:.3}, {} sweeps, worst ratio {worst_ratio:.3}, final {last:.1e};  ",
                params.delta, sol.iterations
            );
        }
        Ok((ok, detail.trim_end().to_string()))
    })
}

/// Re⟨(a − S)u, u⟩ ≥ δ‖u‖² up to rounding, over random admissible kernels and
/// random band-limited fields.
pub fn accretivity_gap() -> Check {
    run(6, "absorption accretivity", || {
        let (d, s) = bumpy_disk(32)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x0006);
        let mut worst = f64::INFINITY;
        for trial in 0..100 {
            let a0 = rng.random_range(0.25..0.9);
            let m = trial % 4;
            let k0 = rng.random_range(0.002..a0 * 0.8 / TAU);
            let mut kernel = vec![KernelTerm {
                n: 0,
                re: 1.0,
                im: 0.0,
                profile: Profile::Constant { value: k0 },
            }];
            for n in 1..=m {
                let ph: f64 = rng.random_range(0.0..TAU);
                kernel.push(KernelTerm {
                    n: n as u32,
                    re: ph.cos(),
                    im: ph.sin(),
                    profile: Profile::Constant { value: k0 * rng.random_range(0.05..0.15) },
                });
            }
            let params = OpticalParams::new(
                &d,
                OpticsSpec { attenuation: Some(Profile::Constant { value: a0 }), kernel },
            )?;
            let u = random_band_field(&d, &mut rng, 3);
            let qu = apply_attenuation(&d, &params, &u)
                .add_scaled(&apply_s(&d, &params, &u), -1.0, &d);
            let gap = qu.inner_product(&u, &d, &s).re;
            let n2 = u.l2_norm(&d, &s).powi(2);
            worst = worst.min((gap - params.delta * n2) / n2);
        }
        Ok((
            worst >= -1e-10,
            format!("min (Re⟨Qu,u⟩ − δ‖u‖²)/‖u‖² = {worst:.2e} over 100 pairs"),
        ))
    })
}

/// Measured boundary data never exceeds √C₀(Q∞/δ + 1)·‖f‖ beyond quadrature
/// slack, over 50 random sources.
pub fn measurement_norm_bound() -> Check {
    run(7, "measurement norm bound", || {
        let (d, s) = bumpy_disk(32)?;
        let params = const_optics(&d, 0.5, &[(0, 0.02), (1, 0.006)])?;
        let fan = BoundaryFan::new(&d, &s, FanSide::Outgoing, 64, 32, 2e-2)?;
        let cfg = TransportConfig { iter_tol: 1e-8, ..TransportConfig::default() };
        let report = norm_bound_check(&d, &params, &s, &fan, 50, 0x0007, &cfg)?;
        Ok((
            report.passes(1e-3),
            format!(
                "max ‖Mf‖/‖f‖ = {:.4} vs √C₀(Q∞/δ + 1) = {:.4} over {} sources",
                report.max_ratio,
                report.bound,
                report.ratios.len()
            ),
        ))
    })
}

/// Sources generated from zero-boundary potentials leave no trace in the
/// data: relative boundary leak ≤ 1e−3 for 20 random potentials of degree ≤ 2
/// under random kernels of degree ≤ 3.
pub fn gauge_null_space() -> Check {
    run(8, "gauge-source invisibility", || {
        let (d, s) = bumpy_disk(96)?;
        let fan = BoundaryFan::new(&d, &s, FanSide::Outgoing, 128, 64, 2e-2)?;
        let cfg =
            TransportConfig { n_max: Some(7), iter_tol: 1e-8, ..TransportConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0x0008);
        let r2 = d.radius * d.radius;
        let mut worst = 0.0f64;
        for trial in 0..20 {
            let a0 = rng.random_range(0.35..0.7);
            let mk = trial % 4;
            let k0 = rng.random_range(0.005..0.02);
            let mut kernel = vec![KernelTerm {
                n: 0,
                re: 1.0,
                im: 0.0,
                profile: Profile::Constant { value: k0 },
            }];
            for n in 1..=mk {
                let ph: f64 = rng.random_range(0.0..TAU);
                kernel.push(KernelTerm {
                    n: n as u32,
                    re: ph.cos(),
                    im: ph.sin(),
                    profile: Profile::Constant { value: k0 * rng.random_range(0.05..0.15) },
                });
            }
            let params = OpticalParams::new(
                &d,
                OpticsSpec { attenuation: Some(Profile::Constant { value: a0 }), kernel },
            )?;
            let mut p = FiberField::zeros(&d, 2);
            for n in 0..=2i32 {
                let mut co = [C::new(0.0, 0.0); 3];
                for (j, c) in co.iter_mut().enumerate() {
                    let scale = if j == 0 { 1.0 } else { 0.5 };
                    let re = rng.random_range(-1.0..1.0) * scale;
                    let im =
                        if n == 0 { 0.0 } else { rng.random_range(-1.0..1.0) * scale };
                    *c = C::new(re, im);
                }
                let g = d.fill_complex(|x, y| {
                    (co[0] + co[1] * x + co[2] * y) * (r2 - x * x - y * y)
                });
                if n > 0 {
                    p.set_mode(-n, conj_grid(&d, &g));
                }
                p.set_mode(n, g);
            }
            let f = gauge_generate(&d, &p, &params, &s);
            worst = worst.max(gauge_verify(&d, &f, &params, &s, &fan, &cfg)?);
        }
        Ok((worst <= 1e-3, format!("max relative boundary leak {worst:.2e} over 20 potentials")))
    })
}

/// One synthetic scalar roundtrip (function + stream potential) at the given
/// grid; returns oracle errors for (f₀, f⊥ mod constants) and, if requested,
/// the fitted-first-stage errors on the same data.
fn scalar_roundtrip(
    grid_n: usize,
    arc_n: usize,
    dir_n: usize,
    lsq: Option<LsqOptions<f64>>,
) -> Result<((f64, f64), Option<(f64, f64)>)> {
    let (d, s) = bumpy_disk(grid_n)?;
    let fan = BoundaryFan::new(&d, &s, FanSide::Outgoing, arc_n, dir_n, 2e-2)?;
    let cfg = TransportConfig::default();
    let params = const_optics(&d, 0.4, &[])?;
    let p = FiberField::zeros(&d, 0);
    let mut h = GaugeRepresentative::zeros(&d, 1);
    h.h0 = d.fill_complex(|x, y| C::new(0.7 - 0.25 * x - 0.3 * y * y, 0.0));
    h.h_perp = bubble(&d, 0.45, -0.2, 0.3);
    let fix = synthetic_gauge_harness(&d, &p, &h, &params, &s, &fan, &cfg)?;

    let finish = |rep: &GaugeRepresentative<f64>| -> Result<(f64, f64)> {
        let state = step2_triangular(&d, rep, &params, &s, 1, &cfg)?;
        let rec = case1_finish(&d, &state, rep, &params, &s)?;
        let e0 = rel_grid(&d, &s, &rec.f0, &h.h0);
        let ep = rel_grid_mod_constants(&d, &s, &rec.f_perp, &h.h_perp);
        Ok((e0, ep))
    };

    let (oracle_rep, _) =
        recover_representative(&d, &fix.data, &params, &s, 1, Step1Backend::Oracle(&fix.truth))?;
    let oracle = finish(&oracle_rep)?;
    let fitted = match lsq {
        None => None,
        Some(opts) => {
            let (rep, _) =
                recover_representative(&d, &fix.data, &params, &s, 1, Step1Backend::Lsq(opts))?;
            Some(finish(&rep)?)
        }
    };
    Ok((oracle, fitted))
}

/// One synthetic vector-field roundtrip at the given grid; returns the oracle
/// error for f₁ and, if requested, the fitted-first-stage error.
fn vector_roundtrip(
    grid_n: usize,
    arc_n: usize,
    dir_n: usize,
    lsq: Option<LsqOptions<f64>>,
) -> Result<(f64, Option<f64>)> {
    let (d, s) = bumpy_disk(grid_n)?;
    let fan = BoundaryFan::new(&d, &s, FanSide::Outgoing, arc_n, dir_n, 2e-2)?;
    let cfg = TransportConfig::default();
    let params = const_optics(&d, 0.4, &[])?;

    let q = bubble(&d, 0.5, 0.0, 0.0);
    let mut pf = FiberField::zeros(&d, 0);
    pf.set_mode(0, q.clone());
    let mut h = GaugeRepresentative::zeros(&d, 1);
    for &u in &d.interior {
        let i = u as usize;
        h.h0[i] = -q[i] * params.a[i];
    }
    h.h_perp = bubble(&d, 0.3, 0.4, 0.0);
    let (w0, w1) = (C::new(0.2, 0.0), C::new(0.3, -0.1));
    let om_up = d.fill_complex(|x, y| (w0 + w1 * C::new(x, y)) * s.value(x, y));
    h.h_k[0].set_mode(-1, conj_grid(&d, &om_up));
    h.h_k[0].set_mode(1, om_up);
    let fix = synthetic_gauge_harness(&d, &pf, &h, &params, &s, &fan, &cfg)?;

    let finish = |rep: &GaugeRepresentative<f64>| -> Result<f64> {
        let state = step2_triangular(&d, rep, &params, &s, 1, &cfg)?;
        let rec = case2_finish(&d, &state, rep, &params, &s)?;
        Ok(rel_field(&d, &s, &rec.f1, &fix.f))
    };

    let oracle = finish(&fix.truth)?;
    let fitted = match lsq {
        None => None,
        Some(opts) => {
            let (rep, _) =
                recover_representative(&d, &fix.data, &params, &s, 1, Step1Backend::Lsq(opts))?;
            Some(finish(&rep)?)
        }
    };
    Ok((oracle, fitted))
}

/// Synthetic-gauge roundtrips on the curved disk: with the oracle first
/// stage, both source classes are recovered within 2% at grid 128 and the
/// errors at least halve at grid 256; the fitted first stage stays within 5%.
pub fn synthetic_roundtrips() -> Check {
    run(9, "synthetic-gauge roundtrips", || {
        let opts = LsqOptions { poly_degree: 3, holo_degree: 2, ..LsqOptions::default() };

        let ((s0, sp), scalar_fit) = scalar_roundtrip(128, 128, 64, Some(opts))?;
        let ((s0_fine, sp_fine), _) = scalar_roundtrip(256, 32, 16, None)?;
        let (v1, vector_fit) = vector_roundtrip(128, 128, 64, Some(opts))?;
        let (v1_fine, _) = vector_roundtrip(256, 32, 16, None)?;
        let (s0l, spl) = scalar_fit.unwrap();
        let v1l = vector_fit.unwrap();

        let coarse_ok = s0 <= 0.02 && sp <= 0.02 && v1 <= 0.02;
        let halved = s0_fine <= 0.6 * s0 && sp_fine <= 0.6 * sp && v1_fine <= 0.6 * v1;
        let fit_ok = s0l <= 0.05 && spl <= 0.05 && v1l <= 0.05;
        Ok((
            coarse_ok && halved && fit_ok,
            format!(
                "oracle at 128: f₀ {s0:.4}, f⊥ {sp:.4}, f₁ {v1:.4}; at 256: {s0_fine:.4}, \
                 {sp_fine:.4}, {v1_fine:.4}; fitted: {s0l:.4}, {spl:.4}, {v1l:.4}"
            ),
        ))
    })
}

/// Assembles X q + X⊥ s + ω (degree-one field) through the compact blocks,
/// with ω the speed-weighted affine harmonic pair.
fn vector_field(d: &D, s: &Sp, q: &Grid<Cx>, st: &Grid<Cx>, w0: Cx, w1: Cx) -> FiberField<f64> {
    let mut rep = GaugeRepresentative::zeros(d, 0);
    rep.h_perp = st.clone();
    let mut f = rep.synthesize(d, s);
    let up = eta_plus_mode(d, s, q, 0);
    let dn = eta_minus_mode(d, s, q, 0);
    let (sp, sm) = (f.slot(1).unwrap(), f.slot(-1).unwrap());
    for &u in &d.interior {
        let i = u as usize;
        let (x, y) = d.node_xy(i);
        let om = (w0 + w1 * C::new(x, y)) * s.value(x, y);
        f.modes[sp][i] += up[i] + om;
        f.modes[sm][i] += dn[i] + om.conj();
    }
    f
}

/// Isotropic-kernel specializations recover both source classes within 5%
/// from fitted data, and the symbolic elimination certificate holds: the
/// corrected combination cancels, the naive one does not.
pub fn isotropic_roundtrips() -> Check {
    run(10, "isotropic specializations", || {
        let (d, s) = flat_disk(64, 128, 64)?;
        let fan = BoundaryFan::new(&d, &s, FanSide::Outgoing, 96, 48, 2e-2)?;
        let cfg = TransportConfig::default();
        let params = const_optics(&d, 0.45, &[(0, 0.025)])?;

        let f0 = d.fill_complex(|x, y| C::new(0.8 - 0.3 * x * x + 0.2 * y, 0.0));
        let fperp = d.fill_complex(|x, y| C::new(0.4 * (x * x - y * y) + 0.3 * x, 0.0));
        let mut rep = GaugeRepresentative::zeros(&d, 0);
        rep.h0 = f0.clone();
        rep.h_perp = fperp.clone();
        let f = rep.synthesize(&d, &s);
        let data = measure(&d, &f, &params, &s, &fan, &cfg)?;
        let opts1 = LsqOptions { poly_degree: 4, ..LsqOptions::default() };
        let (l0, lp) = isotropic_case1(&d, &data, &params, &s, Iso1Backend::Lsq(opts1), &cfg)?;
        let e0 = rel_grid(&d, &s, &l0, &f0);
        let ep = rel_grid(&d, &s, &lp, &fperp);

        let f0t = bubble(&d, 0.6, 0.0, 0.0);
        let fp2 = bubble(&d, 0.3, 0.0, -0.5);
        let f2 = vector_field(&d, &s, &f0t, &fp2, C::new(0.25, 0.0), C::new(0.35, 0.1));
        let data2 = measure(&d, &f2, &params, &s, &fan, &cfg)?;
        let opts2 = LsqOptions { poly_degree: 3, holo_degree: 2, ..LsqOptions::default() };
        let rec2 = isotropic_case2(&d, &data2, &params, &s, Iso2Backend::Lsq(opts2), &cfg)?;
        let e2 = rel_field(&d, &s, &rec2, &f2);

        let (corrected, naive) = iso2_elimination_identity();
        Ok((
            e0 <= 0.05 && ep <= 0.05 && e2 <= 0.05 && corrected && !naive,
            format!(
                "fitted errors: f₀ {e0:.4}, f⊥ {ep:.4}, f₁ {e2:.4}; \
                 elimination certificate (corrected, naive) = ({corrected}, {naive})"
            ),
        ))
    })
}

/// Glancing-band integrals behave per the exponent arithmetic: at η = −1.25
/// the trace column blows up (≥ 10× over the margin ladder) while the
/// W-column stays within 5%; at η = −0.5 both settle.
pub fn glancing_trace_table() -> Check {
    run(11, "glancing trace blow-up", || {
        let (d, s) = flat_disk(48, 96, 32)?;
        let diverging = trace_counterexample(&d, &s, -1.25, 5)?;
        let growth = diverging.rows[4].trace_integral / diverging.rows[0].trace_integral;
        let w_var = (diverging.rows[4].w_integral - diverging.rows[0].w_integral).abs()
            / diverging.rows[0].w_integral;
        let settled = trace_counterexample(&d, &s, -0.5, 5)?;
        let t_var = (settled.rows[4].trace_integral - settled.rows[3].trace_integral).abs()
            / settled.rows[3].trace_integral;
        let s_var = (settled.rows[4].w_integral - settled.rows[3].w_integral).abs()
            / settled.rows[3].w_integral;
        Ok((
            growth >= 10.0 && w_var <= 5e-2 && t_var <= 1e-3 && s_var <= 1e-3,
            format!(
                "η = −1.25: trace ×{growth:.1}, W varies {w_var:.1e}; \
                 η = −0.5: last-step drifts {t_var:.1e} / {s_var:.1e}"
            ),
        ))
    })
}

/// L²-norm of a field restricted to the inner disk r ≤ frac·R (keeps the
/// one-sided rim stencils out of convergence-order measurements).
fn inner_norm(d: &D, s: &Sp, f: &FiberField<f64>, frac: f64) -> f64 {
    let cap = frac * frac * d.radius * d.radius;
    let mut acc = 0.0;
    for g in f.modes.iter() {
        for &u in &d.interior {
            let i = u as usize;
            let (x, y) = d.node_xy(i);
            if x * x + y * y <= cap {
                acc += d.weight[i] * g[i].norm_sqr() / (s.c[i] * s.c[i]);
            }
        }
    }
    acc.sqrt()
}

/// Fixed band-2 conjugate-symmetric smooth field for operator checks.
fn test_band_field(d: &D) -> FiberField<f64> {
    let mut u = FiberField::zeros(d, 2);
    u.set_mode(0, d.fill_complex(|x, y| C::new(0.7 - 0.3 * x * x + 0.2 * y, 0.0)));
    let g1 = d.fill_complex(|x, y| C::new(0.4 * x + 0.1 * y * y, 0.5 * y - 0.2 * x));
    u.set_mode(-1, conj_grid(d, &g1));
    u.set_mode(1, g1);
    let g2 = d.fill_complex(|x, y| C::new(0.3 * y + 0.2 * x * y, 0.25 * x - 0.1));
    u.set_mode(-2, conj_grid(d, &g2));
    u.set_mode(2, g2);
    u
}

/// Structure equations of the generator pair and the mode-zero factorization:
/// [X,V] = X⊥ holds exactly in the mode algebra, X agrees with η₊ + η₋, the
/// curvature bracket [X,X⊥] = −KV converges at first order or better, and
/// 4η₋η₊ matches the metric Laplacian on harmonic zero at second order.
pub fn operator_identities() -> Check {
    run(12, "structure and factorization identities", || {
        let mut split = Vec::new();
        let mut bracket = Vec::new();
        let mut lap = Vec::new();
        let mut exact = 0.0f64;
        for n in [48usize, 96] {
            let (d, s) = bumpy_disk(n)?;
            let u = test_band_field(&d);

            let xv = apply_x(&d, &s, &apply_v(&d, &u));
            let vx = apply_v(&d, &apply_x(&d, &s, &u));
            let xp = apply_x_perp(&d, &s, &u);
            let r = xv.add_scaled(&vx, -1.0, &d).add_scaled(&xp, -1.0, &d);
            exact = exact.max(inner_norm(&d, &s, &r, 0.7) / inner_norm(&d, &s, &xp, 0.7));

            let x_direct = apply_x(&d, &s, &u);
            let x_blocks = eta_plus(&d, &s, &u).add_scaled(&eta_minus(&d, &s, &u), 1.0, &d);
            let ds = x_direct.add_scaled(&x_blocks, -1.0, &d);
            split.push(inner_norm(&d, &s, &ds, 0.7) / inner_norm(&d, &s, &x_direct, 0.7));

            let b = apply_x(&d, &s, &apply_x_perp(&d, &s, &u))
                .add_scaled(&apply_x_perp(&d, &s, &apply_x(&d, &s, &u)), -1.0, &d);
            let kg = curvature(&s, &d);
            let mut kv = apply_v(&d, &u);
            for g in kv.modes.iter_mut() {
                for &w in &d.interior {
                    let i = w as usize;
                    g[i] *= kg[i];
                }
            }
            let res = b.add_scaled(&kv, 1.0, &d);
            bracket.push(inner_norm(&d, &s, &res, 0.7) / inner_norm(&d, &s, &kv, 0.7));

            let g = d.fill_complex(|x, y| {
                C::new(x * x * x * x - 2.0 * y * y * y * y + x * y, 0.0)
            });
            let comp = eta_minus_mode(&d, &s, &eta_plus_mode(&d, &s, &g, 0), 1);
            let (mut worst, mut scale) = (0.0f64, 0.0f64);
            for &w in &d.interior {
                let i = w as usize;
                let (x, y) = d.node_xy(i);
                if x * x + y * y <= 0.49 {
                    let c = s.c[i];
                    let want = c * c * (12.0 * x * x - 24.0 * y * y);
                    worst = worst.max((4.0 * comp[i].re - want).abs());
                    scale = scale.max(want.abs());
                }
            }
            lap.push(worst / scale);
        }
        let ok = exact <= 1e-10
            && split[1] <= (0.5 * split[0]).max(1e-12)
            && bracket[1] <= (0.65 * bracket[0]).max(1e-12)
            && lap[1] <= 0.4 * lap[0];
        Ok((
            ok,
            format!(
                "[X,V]−X⊥ ≤ {exact:.1e}; X vs η₊+η₋: {:.1e} → {:.1e}; \
                 [X,X⊥]+KV: {:.1e} → {:.1e}; 4η₋η₊ vs Δ_g: {:.1e} → {:.1e}",
                split[0], split[1], bracket[0], bracket[1], lap[0], lap[1]
            ),
        ))
    })
}

/// The staged iterates of a pure-gauge source never gain numerical degree and
/// settle one below the gauge degree.
pub fn degree_descent() -> Check {
    run(13, "gauge degree descent", || {
        let (d, s) = bumpy_disk(128)?;
        let params = const_optics(&d, 0.5, &[(0, 0.03), (1, 0.008), (3, 0.005)])?;
        let cfg = TransportConfig::default();
        let report = degree_descent_probe(&d, &params, &s, 2, 4, 1e-3, 11, &cfg)?;
        let tails: Vec<String> = report.tails.iter().map(|t| format!("{t:.1e}")).collect();
        Ok((
            report.monotone && report.terminal == Some(1),
            format!(
                "degrees {:?} (target terminal 1), monotone {}, tails [{}]",
                report.degrees,
                report.monotone,
                tails.join(", ")
            ),
        ))
    })
}

/// Runs every check in order, handing each to `sink` as it completes.
pub fn run_all(mut sink: impl FnMut(&Check)) -> Vec<Check> {
    let runners: [fn() -> Check; 13] = [
        santalo_identity,
        exit_time_oracle,
        convexity_scaling,
        forward_closed_form,
        contraction_rates,
        accretivity_gap,
        measurement_norm_bound,
        gauge_null_space,
        synthetic_roundtrips,
        isotropic_roundtrips,
        glancing_trace_table,
        operator_identities,
        degree_descent,
    ];
    runners
        .iter()
        .map(|r| {
            let c = r();
            sink(&c);
            c
        })
        .collect()
}

pub fn all() -> Vec<Check> {
    run_all(|_| {})
}
