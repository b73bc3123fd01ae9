//! One JSON document describes an experiment end to end: the disk, the speed
//! family, the optical coefficients, discretization sizes, the source, the
//! fitting knobs, and the seed. Every run echoes the effective configuration
//! back into its manifest so results stay reproducible from the artifact
//! alone.

use serde::{Deserialize, Serialize};

use crate::domain::{Domain, DomainSpec};
use crate::error::{Error, Result};
use crate::fiber::FiberField;
use crate::geometry::{SpeedField, SpeedModel};
use crate::optics::{OpticsSpec, Profile};
use crate::recon::LsqOptions;
use crate::scalar::{Scalar, C};
use crate::transport::TransportConfig;

/// Boundary-fan discretization.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FanSettings {
    /// Arc-length panels along the circle.
    pub arc_n: usize,
    /// Direction samples per panel.
    pub dir_n: usize,
    /// Glancing cut: directions with |sin| below this against the tangent
    /// are dropped from quadratures.
    pub margin: f64,
}

impl Default for FanSettings {
    fn default() -> Self {
        FanSettings { arc_n: 256, dir_n: 128, margin: 1e-2 }
    }
}

/// Transport-solver knobs in plain numbers; [`TransportConfig`] is the
/// scalar-generic runtime form.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TransportSettings {
    #[serde(default)]
    pub n_max: Option<usize>,
    pub tail_tol: f64,
    pub iter_tol: f64,
    pub max_iter: usize,
    pub stall_window: usize,
}

impl Default for TransportSettings {
    fn default() -> Self {
        TransportSettings {
            n_max: None,
            tail_tol: 5e-2,
            iter_tol: 1e-10,
            max_iter: 500,
            stall_window: 5,
        }
    }
}

impl TransportSettings {
    pub fn to_config<S: Scalar>(self) -> TransportConfig<S> {
        TransportConfig {
            n_max: self.n_max,
            tail_tol: S::of(self.tail_tol),
            iter_tol: S::of(self.iter_tol),
            max_iter: self.max_iter,
            stall_window: self.stall_window,
        }
    }
}

/// Least-squares knobs for the data-fitting reconstruction backend.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LsqSettings {
    pub poly_degree: usize,
    pub holo_degree: usize,
    pub lambda_rel: f64,
    pub cond_cap: f64,
}

impl Default for LsqSettings {
    fn default() -> Self {
        LsqSettings { poly_degree: 4, holo_degree: 6, lambda_rel: 1e-6, cond_cap: 1e12 }
    }
}

impl LsqSettings {
    pub fn to_options<S: Scalar>(self) -> LsqOptions<S> {
        LsqOptions {
            poly_degree: self.poly_degree,
            holo_degree: self.holo_degree,
            lambda_rel: S::of(self.lambda_rel),
            cond_cap: S::of(self.cond_cap),
        }
    }
}

/// One fiber harmonic of the source: mode `n` gets `re + i·im` evaluated on
/// the nodes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SourceTerm {
    pub n: i32,
    pub re: Profile,
    #[serde(default)]
    pub im: Option<Profile>,
}

/// Source description as a list of fiber harmonics. With `mirror` set, each
/// term with n > 0 also populates mode −n with the complex conjugate so the
/// synthesized field is real.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct SourceSpec {
    #[serde(default)]
    pub terms: Vec<SourceTerm>,
    #[serde(default)]
    pub mirror: bool,
}

impl SourceSpec {
    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.n.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn build<S: Scalar>(&self, domain: &Domain<S>) -> Result<FiberField<S>> {
        for t in &self.terms {
            t.re.validate()?;
            if let Some(p) = &t.im {
                p.validate()?;
            }
        }
        let mut f = FiberField::zeros(domain, self.degree());
        for t in &self.terms {
            let slot = f.slot(t.n).expect("degree covers every listed mode");
            for &u in &domain.interior {
                let i = u as usize;
                let (x, y) = domain.node_xy(i);
                let re = t.re.eval(x, y);
                let im = t.im.as_ref().map_or(S::zero(), |p| p.eval(x, y));
                f.modes[slot][i] = f.modes[slot][i] + C::new(re, im);
            }
            if self.mirror && t.n > 0 {
                let conj = f.slot(-t.n).unwrap();
                for &u in &domain.interior {
                    let i = u as usize;
                    let (x, y) = domain.node_xy(i);
                    let re = t.re.eval(x, y);
                    let im = t.im.as_ref().map_or(S::zero(), |p| p.eval(x, y));
                    f.modes[conj][i] = f.modes[conj][i] + C::new(re, -im);
                }
            }
        }
        Ok(f)
    }
}

/// The whole experiment in one document. Every field has a default, so `{}`
/// is a valid configuration (unit disk, unit speed, vacuum, zero source).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: DomainSpec,
    #[serde(default)]
    pub speed: SpeedModel,
    #[serde(default)]
    pub optics: OpticsSpec,
    #[serde(default)]
    pub fan: FanSettings,
    #[serde(default)]
    pub transport: TransportSettings,
    #[serde(default)]
    pub source: SourceSpec,
    /// Degree of the gauge class the reconstruction assumes.
    #[serde(default = "one")]
    pub gauge_degree: usize,
    #[serde(default)]
    pub lsq: LsqSettings,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty document is a valid configuration")
    }
}

impl RunConfig {
    /// Parse, reporting the schema path of the offending field on failure.
    pub fn from_str(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            Error::Config(format!("configuration does not parse at `{}`: {}", e.path(), e.inner()))
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    /// The full effective configuration (defaults resolved), for manifests.
    pub fn effective_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn build_domain(&self) -> Result<Domain<f64>> {
        Domain::new(self.domain)
    }

    pub fn build_speed(&self, domain: &Domain<f64>) -> Result<SpeedField<f64>> {
        SpeedField::new(self.speed, domain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_resolves_to_defaults() {
        let cfg = RunConfig::from_str("{}").unwrap();
        assert_eq!(cfg.domain.grid_n, 128);
        assert_eq!(cfg.fan.arc_n, 256);
        assert_eq!(cfg.gauge_degree, 1);
        assert!(cfg.source.terms.is_empty());
        // the echo re-parses to the same document
        let echo = RunConfig::from_str(&cfg.effective_json()).unwrap();
        assert_eq!(echo.effective_json(), cfg.effective_json());
    }

    #[test]
    fn malformed_documents_report_the_parser_message() {
        let err = RunConfig::from_str("{\"domain\": {\"grid_n\": \"big\"}}").unwrap_err();
        match err {
            Error::Config(msg) => {
                assert!(msg.contains("domain.grid_n"), "message lacks the schema path: {msg}")
            }
            other => panic!("wrong error kind: {other:?}"),
        }
    }

    #[test]
    fn source_terms_build_a_mirrored_field() {
        let cfg = RunConfig::from_str(
            r#"{
                "domain": {"grid_n": 24},
                "source": {
                    "mirror": true,
                    "terms": [
                        {"n": 0, "re": {"shape": "constant", "value": 1.0}},
                        {"n": 1,
                         "re": {"shape": "poly", "terms": [[1, 0, 0.5]]},
                         "im": {"shape": "constant", "value": 0.25}}
                    ]
                }
            }"#,
        )
        .unwrap();
        let domain = cfg.build_domain().unwrap();
        let f: FiberField<f64> = cfg.source.build(&domain).unwrap();
        assert_eq!(f.n_max, 1);
        let i = domain.interior[domain.interior.len() / 2] as usize;
        let up = f.mode(1).unwrap()[i];
        let dn = f.mode(-1).unwrap()[i];
        assert!((up - dn.conj()).norm() < 1e-15);
        assert!((f.mode(0).unwrap()[i].re - 1.0).abs() < 1e-15);
    }
}
