//! Global diagnostics of the ray geometry: the Santaló change of variables,
//! the convexity constant sup τ/μ over outgoing boundary states, and a
//! Jacobi-field sweep that detects conjugate points (loss of simplicity).

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::geometry::flow::{trace, Direction, FlowOptions, PhasePoint};
use crate::geometry::speed::SpeedField;
use crate::scalar::Scalar;

/// ∫_{SM} 1 dΣ³ = 2π ∫_M c⁻² dx, the phase-space volume of the unit sphere
/// bundle (dΣ³ = c⁻² dx dθ in the angular chart).
pub fn phase_volume<S: Scalar>(domain: &Domain<S>, speed: &SpeedField<S>) -> S {
    let mut total = S::zero();
    for i in 0..domain.n {
        for j in 0..domain.n {
            let k = domain.idx(i, j);
            let w = domain.weight[k];
            if w > S::zero() {
                let (x, y) = domain.node_xy(k);
                let (c, _, _) = speed.eval(x, y);
                total += w / (c * c);
            }
        }
    }
    S::of(2.0) * S::PI() * total
}

/// Fan-side Santaló integral: Σ over outgoing boundary states of
/// μ · w_bdry · w_dir · ∫_{-τ(x,-v)}^0 f(φ_t(x,v)) dt, which equals
/// ∫_{SM} f dΣ³ for integrable f (here f is a function of (x, y, θ)).
///
/// Direction weights are renormalized per boundary point so that the
/// discrete Σ μ Δθ over the outgoing half-fan reproduces the exact value 2;
/// this removes most of the glancing-band quadrature error.
pub fn santalo_fan_integral<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
    f: impl Fn(S, S, S) -> S,
) -> Result<S> {
    let nb = domain.spec.boundary_n;
    let nd = domain.spec.dir_n;
    let opts = FlowOptions::for_domain(domain, speed);
    let d_theta = S::of(2.0) * S::PI() / S::of(nd as f64);
    let margin = S::of(1e-3);
    let mut total = S::zero();
    for i in 0..nb {
        let phi = domain.boundary_angle(i);
        let (bx, by) = domain.boundary_point(i);
        let (c_b, _, _) = speed.eval(bx, by);
        // g-arclength weight of the boundary cell
        let w_b = S::of(2.0) * S::PI() * domain.radius / (S::of(nb as f64) * c_b);
        // collect the outgoing half-fan and its discrete μ-measure
        let mut mu_sum = S::zero();
        let mut kept: Vec<(S, S)> = Vec::new();
        for j in 0..nd {
            let beta = -S::PI() + (S::of(j as f64) + S::of(0.5)) * d_theta;
            let mu = beta.cos();
            if mu > margin {
                mu_sum += mu * d_theta;
                kept.push((phi + beta, mu));
            }
        }
        if kept.is_empty() {
            continue;
        }
        let rho = S::of(2.0) / mu_sum;
        for (theta, mu) in kept {
            // backward walk to the incoming boundary point, trapezoid of f
            let mut integral = S::zero();
            let mut prev: Option<(S, S)> = None;
            trace(
                domain,
                speed,
                PhasePoint::new(bx, by, theta),
                Direction::Backward,
                opts,
                |s, x, y, th| {
                    let val = f(x, y, th);
                    if let Some((sp, vp)) = prev {
                        integral += (s - sp) * (val + vp) * S::of(0.5);
                    }
                    prev = Some((s, val));
                },
            )?;
            total += w_b * d_theta * rho * mu * integral;
        }
    }
    Ok(total)
}

fn sup_tau_over_mu<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
    margin: S,
) -> Result<S> {
    let nb = domain.spec.boundary_n;
    let opts = FlowOptions::for_domain(domain, speed);
    // geometric μ ladder from the margin up to 1, both signs of the
    // tangential offset, so refinement genuinely adds glancing entries
    let ratio = S::of(1.25);
    let mut mus = Vec::new();
    let mut mu = margin;
    while mu < S::one() {
        mus.push(mu);
        mu *= ratio;
    }
    mus.push(S::one() - S::of(1e-9));
    let mut sup = S::zero();
    for i in 0..nb {
        let phi = domain.boundary_angle(i);
        let (bx, by) = domain.boundary_point(i);
        for &m in &mus {
            let beta = m.min(S::one()).acos();
            for sgn in [S::one(), -S::one()] {
                let theta = phi + sgn * beta;
                let info = trace(
                    domain,
                    speed,
                    PhasePoint::new(bx, by, theta),
                    Direction::Backward,
                    opts,
                    |_, _, _, _| {},
                )?;
                let r = info.tau / m;
                if r > sup {
                    sup = r;
                }
            }
        }
    }
    Ok(sup)
}

/// C₀ = sup over outgoing boundary states of τ(x,-v)/μ(x,v), estimated on a
/// glancing-graded fan. The estimate is recomputed at a 4× finer glancing
/// margin; if the supremum keeps growing under refinement the geometry is
/// reported as unbounded (grazing rays dwell too long).
pub fn convexity_constant<S: Scalar>(domain: &Domain<S>, speed: &SpeedField<S>) -> Result<S> {
    let coarse = sup_tau_over_mu(domain, speed, S::of(1e-2))?;
    let fine = sup_tau_over_mu(domain, speed, S::of(2.5e-3))?;
    if (fine - coarse).abs() > S::of(0.1) * fine.abs() + S::of(1e-9) {
        return Err(Error::Unbounded(format!(
            "sup tau/mu unstable under margin refinement: {:.6} -> {:.6}",
            coarse.to_f64(),
            fine.to_f64()
        )));
    }
    Ok(fine)
}

#[derive(Clone, Copy, Debug)]
pub struct ConjugatePoint<S> {
    pub start: PhasePoint<S>,
    pub t: S,
}

#[derive(Clone, Debug)]
pub struct SimplicityReport<S> {
    pub simple: bool,
    pub conjugate: Option<ConjugatePoint<S>>,
    pub max_exit_time: S,
}

struct JacobiOutcome<S> {
    conjugate_t: Option<S>,
    tau: S,
    #[allow(dead_code)] // inspected by tests
    j_end: S,
}

/// Integrates the ray together with the Jacobi field J'' + κ(φ_t) J = 0,
/// J(0) = 0, J'(0) = 1, and reports the first zero of J after departure.
fn jacobi_along<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
    start: PhasePoint<S>,
    opts: FlowOptions<S>,
) -> Result<JacobiOutcome<S>> {
    let r2 = domain.radius * domain.radius;
    let deriv = |x: S, y: S, th: S, j: S, jp: S| -> [S; 5] {
        let (c, cx, cy) = speed.eval(x, y);
        let kap = speed.kappa(x, y);
        let (sin, cos) = th.sin_cos();
        [c * cos, c * sin, cx * sin - cy * cos, jp, -kap * j]
    };
    let step = |st: [S; 5], dt: S| -> [S; 5] {
        let half = S::of(0.5);
        let k1 = deriv(st[0], st[1], st[2], st[3], st[4]);
        let at = |k: &[S; 5], f: S| {
            [
                st[0] + k[0] * dt * f,
                st[1] + k[1] * dt * f,
                st[2] + k[2] * dt * f,
                st[3] + k[3] * dt * f,
                st[4] + k[4] * dt * f,
            ]
        };
        let s2 = at(&k1, half);
        let k2 = deriv(s2[0], s2[1], s2[2], s2[3], s2[4]);
        let s3 = at(&k2, half);
        let k3 = deriv(s3[0], s3[1], s3[2], s3[3], s3[4]);
        let s4 = at(&k3, S::one());
        let k4 = deriv(s4[0], s4[1], s4[2], s4[3], s4[4]);
        let sixth = S::one() / S::of(6.0);
        let two = S::of(2.0);
        let mut out = st;
        for q in 0..5 {
            out[q] = st[q] + dt * sixth * (k1[q] + two * k2[q] + two * k3[q] + k4[q]);
        }
        out
    };
    let mut st = [start.x, start.y, start.theta, S::zero(), S::one()];
    let mut s = S::zero();
    loop {
        let nxt = step(st, opts.step);
        let s_nxt = s + opts.step;
        // J starts at zero with unit slope; a sign change after the first
        // step is a conjugate point.
        if s > S::zero() && st[3] > S::zero() && nxt[3] <= S::zero() {
            let frac = st[3] / (st[3] - nxt[3]);
            return Ok(JacobiOutcome {
                conjugate_t: Some(s + frac * opts.step),
                tau: s_nxt,
                j_end: nxt[3],
            });
        }
        if nxt[0] * nxt[0] + nxt[1] * nxt[1] >= r2 {
            let flo = st[0] * st[0] + st[1] * st[1] - r2;
            let fhi = nxt[0] * nxt[0] + nxt[1] * nxt[1] - r2;
            let frac = if fhi > flo { -flo / (fhi - flo) } else { S::one() };
            let exit = step(st, opts.step * frac);
            return Ok(JacobiOutcome {
                conjugate_t: None,
                tau: s + opts.step * frac,
                j_end: exit[3],
            });
        }
        st = nxt;
        s = s_nxt;
        if s > opts.t_cap {
            return Err(Error::NonTrapping(format!(
                "probe ray from ({:.4}, {:.4}, {:.4}) still inside after t = {:.3}",
                start.x.to_f64(),
                start.y.to_f64(),
                start.theta.to_f64(),
                s.to_f64()
            )));
        }
    }
}

/// Sweeps inward rays from the boundary and checks that no Jacobi field
/// vanishes before exit. Any zero means two nearby rays refocus, so the
/// exponential map fails to be injective and ray-wise inversion formulas
/// degrade; the first offending ray is reported.
pub fn simplicity_check<S: Scalar>(
    domain: &Domain<S>,
    speed: &SpeedField<S>,
) -> Result<SimplicityReport<S>> {
    let opts = FlowOptions::for_domain(domain, speed);
    let nb = 48usize;
    let nd = 24usize;
    let mut max_tau = S::zero();
    for i in 0..nb {
        let phi = S::of(2.0) * S::PI() * (S::of(i as f64) + S::of(0.5)) / S::of(nb as f64);
        let (bx, by) = (domain.radius * phi.cos(), domain.radius * phi.sin());
        for j in 0..nd {
            // inward directions, avoiding the grazing edge of the fan
            let beta = (S::of(j as f64) + S::of(0.5)) / S::of(nd as f64) * S::PI()
                - S::PI() * S::of(0.5);
            if beta.cos() < S::of(5e-2) {
                continue;
            }
            let theta = phi + S::PI() + beta;
            let start = PhasePoint::new(bx, by, theta);
            let out = jacobi_along(domain, speed, start, opts)?;
            if out.tau > max_tau {
                max_tau = out.tau;
            }
            if let Some(t) = out.conjugate_t {
                return Ok(SimplicityReport {
                    simple: false,
                    conjugate: Some(ConjugatePoint { start, t }),
                    max_exit_time: max_tau,
                });
            }
        }
    }
    Ok(SimplicityReport { simple: true, conjugate: None, max_exit_time: max_tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::geometry::speed::SpeedModel;

    fn setup(n: usize, nb: usize, nd: usize, model: SpeedModel) -> (Domain<f64>, SpeedField<f64>) {
        let d = Domain::new(DomainSpec { radius: 1.0, grid_n: n, boundary_n: nb, dir_n: nd })
            .unwrap();
        let s = SpeedField::new(model, &d).unwrap();
        (d, s)
    }

    #[test]
    fn phase_volume_of_flat_disk_is_two_pi_squared() {
        let (d, s) = setup(129, 64, 32, SpeedModel::Constant { value: 1.0 });
        let v = phase_volume(&d, &s);
        let exact = 2.0 * std::f64::consts::PI.powi(2);
        assert!((v - exact).abs() < 1e-10 * exact, "v = {v}, exact = {exact}");
    }

    #[test]
    fn fan_integral_matches_phase_volume_flat() {
        let (d, s) = setup(65, 128, 64, SpeedModel::Constant { value: 1.0 });
        let fan = santalo_fan_integral(&d, &s, |_, _, _| 1.0).unwrap();
        let exact = 2.0 * std::f64::consts::PI.powi(2);
        assert!(
            (fan - exact).abs() < 5e-3 * exact,
            "fan = {fan}, exact = {exact}, rel = {}",
            (fan - exact).abs() / exact
        );
    }

    #[test]
    fn fan_integral_matches_phase_volume_variable_speed() {
        let (d, s) = setup(65, 128, 64, SpeedModel::RadialBump { eps: 0.25, sigma: 0.6 });
        let fan = santalo_fan_integral(&d, &s, |_, _, _| 1.0).unwrap();
        let vol = phase_volume(&d, &s);
        assert!(
            (fan - vol).abs() < 1e-2 * vol,
            "fan = {fan}, vol = {vol}, rel = {}",
            (fan - vol).abs() / vol
        );
    }

    #[test]
    fn convexity_constant_of_flat_disk_is_diameter() {
        let (d, s) = setup(65, 64, 32, SpeedModel::Constant { value: 1.0 });
        let c0 = convexity_constant(&d, &s).unwrap();
        assert!((c0 - 2.0).abs() < 1e-6, "c0 = {c0}");
    }

    #[test]
    fn jacobi_field_is_linear_on_flat_disk() {
        let (d, s) = setup(65, 64, 32, SpeedModel::Constant { value: 1.0 });
        let opts = FlowOptions::for_domain(&d, &s);
        let out =
            jacobi_along(&d, &s, PhasePoint::new(-1.0 + 1e-12, 0.0, 0.0), opts).unwrap();
        assert!(out.conjugate_t.is_none());
        // J(t) = t when the curvature vanishes
        assert!((out.j_end - out.tau).abs() < 1e-6, "J = {}, tau = {}", out.j_end, out.tau);
    }

    #[test]
    fn mild_bump_stays_simple() {
        let (d, s) = setup(65, 64, 32, SpeedModel::RadialBump { eps: 0.2, sigma: 0.6 });
        let rep = simplicity_check(&d, &s).unwrap();
        assert!(rep.simple);
        assert!(rep.max_exit_time < 4.0);
    }

    #[test]
    fn deep_slow_bump_focuses() {
        // strong positive curvature near the center refocuses diametral rays
        let (d, s) = setup(65, 64, 32, SpeedModel::RadialBump { eps: -0.8, sigma: 0.6 });
        let rep = simplicity_check(&d, &s).unwrap();
        assert!(!rep.simple, "expected a conjugate point");
        let cp = rep.conjugate.unwrap();
        assert!(cp.t > 0.1);
    }
}
