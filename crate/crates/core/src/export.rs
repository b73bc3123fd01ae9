//! File artifacts: CSV tables, raw float blocks with sidecars, and
//! grayscale bitmaps.
//!
//! Numbers are printed with Rust's shortest round-trip decimal formatting,
//! so identical inputs produce byte-identical files; readers recover the
//! exact binary values.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::domain::{Domain, Grid};
use crate::error::Result;
use crate::fiber::FiberField;
use crate::geometry::GeodesicPath;
use crate::scalar::{Scalar, C};
use crate::transport::BoundaryFan;

fn num<S: Scalar>(x: S) -> String {
    format!("{}", x.to_f64())
}

/// One CSV per fiber mode, named `{stem}_mode{n}.csv`, rows
/// `i,j,x,y,re,im` over the interior nodes. Returns the written paths.
pub fn write_field_csv<S: Scalar>(
    dir: &Path,
    stem: &str,
    domain: &Domain<S>,
    field: &FiberField<S>,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let band = field.n_max as i32;
    for n in -band..=band {
        let g = field.mode(n).expect("band covers its own modes");
        let path = dir.join(format!("{stem}_mode{n}.csv"));
        write_grid_csv(&path, domain, g)?;
        written.push(path);
    }
    Ok(written)
}

/// Rows `i,j,x,y,re,im` over the interior nodes, row-major.
pub fn write_grid_csv<S: Scalar>(path: &Path, domain: &Domain<S>, g: &Grid<C<S>>) -> Result<()> {
    let mut out = String::from("i,j,x,y,re,im\n");
    for &u in &domain.interior {
        let idx = u as usize;
        let (i, j) = (idx / domain.n, idx % domain.n);
        let (x, y) = domain.node_xy(idx);
        out.push_str(&format!(
            "{i},{j},{},{},{},{}\n",
            num(x),
            num(y),
            num(g[idx].re),
            num(g[idx].im)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Fan entries in storage (arc-major) order: `s,theta_in,mu,tau,re,im`.
pub fn write_fan_csv<S: Scalar>(path: &Path, fan: &BoundaryFan<S>) -> Result<()> {
    let mut out = String::from("s,theta_in,mu,tau,re,im\n");
    for e in &fan.entries {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            num(e.s),
            num(e.theta_in),
            num(e.mu),
            num(e.tau),
            num(e.value.re),
            num(e.value.im)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Geodesic rows `t,x,y,theta`.
pub fn write_path_csv<S: Scalar>(path: &Path, gp: &GeodesicPath<S>) -> Result<()> {
    let mut out = String::from("t,x,y,theta\n");
    for (t, p) in gp.t.iter().zip(&gp.points) {
        out.push_str(&format!("{},{},{},{}\n", num(*t), num(p.x), num(p.y), num(p.theta)));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Raw export of a fiber field: `{stem}.f64` holds every mode as a full
/// n×n row-major block of interleaved (re, im) little-endian doubles,
/// lowest mode first, masked-out nodes zero; `{stem}.json` is the sidecar
/// describing the layout.
pub fn write_field_raw<S: Scalar>(
    dir: &Path,
    stem: &str,
    domain: &Domain<S>,
    field: &FiberField<S>,
) -> Result<(PathBuf, PathBuf)> {
    let band = field.n_max as i32;
    let n = domain.n;
    let blob_path = dir.join(format!("{stem}.f64"));
    let mut blob = Vec::with_capacity((2 * band as usize + 1) * n * n * 16);
    for m in -band..=band {
        let g = field.mode(m).expect("band covers its own modes");
        for idx in 0..n * n {
            let v = if domain.mask[idx] { g[idx] } else { C::new(S::zero(), S::zero()) };
            blob.extend_from_slice(&v.re.to_f64().to_le_bytes());
            blob.extend_from_slice(&v.im.to_f64().to_le_bytes());
        }
    }
    let mut f = fs::File::create(&blob_path)?;
    f.write_all(&blob)?;

    let sidecar_path = dir.join(format!("{stem}.json"));
    let sidecar = serde_json::json!({
        "grid_n": n,
        "radius": domain.radius.to_f64(),
        "modes": (-band..=band).collect::<Vec<i32>>(),
        "layout": "per mode: row-major grid of little-endian float64 (re, im) pairs",
        "bytes_per_mode": n * n * 16,
    });
    fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar).expect("plain object"))?;
    Ok((blob_path, sidecar_path))
}

/// Binary 8-bit PGM of a complex grid: magnitude scaled to the full ramp,
/// or the argument wrapped onto it. Off-mask pixels are black.
pub enum RenderKind {
    Magnitude,
    Argument,
}

pub fn render_pgm<S: Scalar>(
    path: &Path,
    domain: &Domain<S>,
    g: &Grid<C<S>>,
    kind: RenderKind,
) -> Result<()> {
    let n = domain.n;
    let mut shades = vec![0u8; n * n];
    match kind {
        RenderKind::Magnitude => {
            let mut top = 0.0f64;
            for &u in &domain.interior {
                top = top.max(g[u as usize].norm().to_f64());
            }
            let scale = if top > 0.0 { 255.0 / top } else { 0.0 };
            for &u in &domain.interior {
                let idx = u as usize;
                shades[idx] = (g[idx].norm().to_f64() * scale).round() as u8;
            }
        }
        RenderKind::Argument => {
            let two_pi = std::f64::consts::TAU;
            for &u in &domain.interior {
                let idx = u as usize;
                let arg = g[idx].arg().to_f64().rem_euclid(two_pi) / two_pi;
                shades[idx] = (arg * 255.0).round() as u8;
            }
        }
    }
    // image rows run top-down; grid rows run bottom-up in y
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    for i in (0..n).rev() {
        out.extend_from_slice(&shades[i * n..(i + 1) * n]);
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::geometry::{flow, Direction, FlowOptions, PhasePoint, SpeedField, SpeedModel};
    use crate::transport::FanSide;

    fn setup() -> (Domain<f64>, SpeedField<f64>) {
        let spec = DomainSpec { radius: 1.0, grid_n: 24, boundary_n: 48, dir_n: 24 };
        let domain = Domain::new(spec).unwrap();
        let speed = SpeedField::new(SpeedModel::Constant { value: 1.0 }, &domain).unwrap();
        (domain, speed)
    }

    #[test]
    fn exports_are_deterministic_and_reread_exactly() {
        let (d, s) = setup();
        let dir = std::env::temp_dir().join("radtomo_export_test");
        fs::create_dir_all(&dir).unwrap();

        let mut f = FiberField::zeros(&d, 1);
        f.set_mode(0, d.fill_complex(|x, y| C::new(x * 0.3 + 0.7, y)));
        f.set_mode(1, d.fill_complex(|x, y| C::new(y, x - 0.1)));
        f.set_mode(-1, d.fill_complex(|x, y| C::new(y, 0.1 - x)));

        let paths = write_field_csv(&dir, "u", &d, &f).unwrap();
        assert_eq!(paths.len(), 3);
        let first = fs::read(&paths[1]).unwrap();
        write_field_csv(&dir, "u", &d, &f).unwrap();
        assert_eq!(fs::read(&paths[1]).unwrap(), first, "second write differs");

        // shortest round-trip decimals: parse a row back and compare exactly
        let text = String::from_utf8(first).unwrap();
        let row = text.lines().nth(1).unwrap();
        let cols: Vec<&str> = row.split(',').collect();
        let idx = cols[0].parse::<usize>().unwrap() * d.n + cols[1].parse::<usize>().unwrap();
        assert_eq!(cols[4].parse::<f64>().unwrap(), f.mode(0).unwrap()[idx].re);

        let (blob, sidecar) = write_field_raw(&dir, "u", &d, &f).unwrap();
        let bytes = fs::read(&blob).unwrap();
        assert_eq!(bytes.len(), 3 * d.n * d.n * 16);
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&sidecar).unwrap()).unwrap();
        assert_eq!(meta["modes"], serde_json::json!([-1, 0, 1]));
        // mode 0 block, node value round-trips bit-exactly
        let off = (d.n * d.n + idx) * 16;
        let re = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        assert_eq!(re, f.mode(0).unwrap()[idx].re);

        let fan = crate::transport::BoundaryFan::new(&d, &s, FanSide::Outgoing, 16, 8, 5e-2)
            .unwrap();
        let fan_path = dir.join("fan.csv");
        write_fan_csv(&fan_path, &fan).unwrap();
        let lines = fs::read_to_string(&fan_path).unwrap();
        assert_eq!(lines.lines().count(), fan.entries.len() + 1);
        assert!(lines.starts_with("s,theta_in,mu,tau,re,im\n"));

        let gp = flow(
            &d,
            &s,
            PhasePoint { x: -0.9, y: 0.0, theta: 0.3 },
            Direction::Forward,
            FlowOptions::for_domain(&d, &s),
            None,
        )
        .unwrap();
        let gp_path = dir.join("path.csv");
        write_path_csv(&gp_path, &gp).unwrap();
        assert!(fs::read_to_string(&gp_path).unwrap().starts_with("t,x,y,theta\n"));

        let pgm_path = dir.join("u.pgm");
        render_pgm(&pgm_path, &d, f.mode(0).unwrap(), RenderKind::Magnitude).unwrap();
        let img = fs::read(&pgm_path).unwrap();
        let header = format!("P5\n{} {}\n255\n", d.n, d.n);
        assert!(img.starts_with(header.as_bytes()));
        assert_eq!(img.len(), header.len() + d.n * d.n);
    }
}
