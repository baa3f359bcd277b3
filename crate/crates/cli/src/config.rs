//! Experiment configuration: a TOML file with every table closed to unknown
//! keys, merged with command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use caustica_core::canrel::{variable_names, WeakNormalPieces};
use caustica_core::pipeline::WeakNormalSpec;
use caustica_core::raytrace::{FanSpec, SoundspeedModel};
use caustica_core::smallmath::Poly;
use serde::{Deserialize, Serialize};

/// A configuration problem; exits with status 2.
#[derive(Debug)]
pub struct SchemaError(pub String);

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for SchemaError {}

fn schema(key: &str, msg: impl fmt::Display) -> anyhow::Error {
    SchemaError(format!("{key}: {msg}")).into()
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    /// Worker threads; results do not depend on it, so it is not hashed.
    #[serde(skip_serializing)]
    pub jobs: Option<usize>,
    #[serde(skip_serializing)]
    pub out_dir: Option<String>,
    pub soundspeed: Option<SoundspeedSpec>,
    pub trace: Option<TraceSection>,
    pub caustics: Option<CausticsSection>,
    pub marine: Option<MarineSection>,
    pub model_verify: Option<ModelVerifySection>,
    pub compose_verify: Option<ComposeVerifySection>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SoundspeedSpec {
    /// `constant`, `linear-gradient` or `gaussian-lens`.
    pub kind: String,
    pub c: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub base: Option<f64>,
    pub depth: Option<f64>,
    pub center: Option<[f64; 3]>,
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FanSection {
    pub axis: [f64; 3],
    pub max_angle: f64,
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    pub source: Option<[f64; 3]>,
    pub duration: Option<f64>,
    pub directions: Option<Vec<[f64; 3]>>,
    pub fan: Option<FanSection>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CausticsSection {
    pub source: Option<[f64; 3]>,
    pub x1: Option<Vec<f64>>,
    pub x2: Option<Vec<f64>>,
    /// `[lo, hi, count]`.
    pub p3: Option<(f64, f64, usize)>,
    pub depth: Option<[f64; 2]>,
    pub fold_tol: Option<f64>,
    pub fan: Option<FanSection>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MarineSection {
    pub tau: Option<[f64; 2]>,
    pub oracle_tol: Option<f64>,
    pub min_samples: Option<usize>,
    pub off_samples: Option<usize>,
    pub conservation_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelVerifySection {
    pub n: Option<usize>,
    pub variant: Option<String>,
    pub samples: Option<usize>,
    pub cloud_size: Option<usize>,
    pub min_fcc_samples: Option<usize>,
    pub locus_resolution: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeVerifySection {
    pub fold_tol: Option<f64>,
    pub composed_legs: Option<usize>,
    pub member: Option<Vec<MemberSection>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MemberSection {
    pub name: String,
    pub n: usize,
    pub s1: Option<PolySpec>,
    pub s5: Option<PolySpec>,
    pub s6: Option<PolySpec>,
    pub s7: Option<PolySpec>,
}

/// Coefficients over named monomials such as `"x1*t1"`, with the declared
/// degree of homogeneity in `θ''`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PolySpec {
    pub degree: i32,
    pub terms: BTreeMap<String, f64>,
}

pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
    let Some(path) = path else { return Ok(Config::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| SchemaError(e.to_string()).into())
}

fn positive(key: &str, v: f64) -> anyhow::Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(schema(key, format!("must be positive, got {v}")))
    }
}

impl SoundspeedSpec {
    pub fn model(&self) -> anyhow::Result<SoundspeedModel> {
        let allowed: &[&str] = match self.kind.as_str() {
            "constant" => &["c"],
            "linear-gradient" => &["a", "b"],
            "gaussian-lens" => &["base", "depth", "center", "width"],
            other => {
                return Err(schema(
                    "soundspeed.kind",
                    format!("unknown kind '{other}' (constant, linear-gradient, gaussian-lens)"),
                ))
            }
        };
        let given = [
            ("c", self.c.is_some()),
            ("a", self.a.is_some()),
            ("b", self.b.is_some()),
            ("base", self.base.is_some()),
            ("depth", self.depth.is_some()),
            ("center", self.center.is_some()),
            ("width", self.width.is_some()),
        ];
        for (key, set) in given {
            if set && !allowed.contains(&key) {
                return Err(schema(&format!("soundspeed.{key}"), format!("not a parameter of {}", self.kind)));
            }
        }
        Ok(match self.kind.as_str() {
            "constant" => SoundspeedModel::Constant { c: positive("soundspeed.c", self.c.unwrap_or(1.0))? },
            "linear-gradient" => SoundspeedModel::LinearGradient {
                a: positive("soundspeed.a", self.a.unwrap_or(1.0))?,
                b: self.b.unwrap_or(0.5),
            },
            _ => {
                let base = positive("soundspeed.base", self.base.unwrap_or(1.0))?;
                let depth = self.depth.unwrap_or(0.3);
                if !(0.0..base).contains(&depth) {
                    return Err(schema("soundspeed.depth", format!("must lie in [0, base), got {depth}")));
                }
                SoundspeedModel::GaussianLens {
                    base,
                    depth,
                    center: self.center.unwrap_or([0.0, 0.0, 2.0]),
                    width: positive("soundspeed.width", self.width.unwrap_or(1.0))?,
                }
            }
        })
    }
}

impl Config {
    /// The configured model, or the standard lens centered at `(0, 0, 2)`.
    pub fn model(&self) -> anyhow::Result<SoundspeedModel> {
        match &self.soundspeed {
            Some(s) => s.model(),
            None => Ok(SoundspeedModel::standard_lens([0.0, 0.0, 2.0])),
        }
    }
}

impl FanSection {
    pub fn spec(&self, key: &str, default_t_max: f64) -> anyhow::Result<FanSpec> {
        if self.axis.iter().all(|v| *v == 0.0) {
            return Err(schema(&format!("{key}.axis"), "must be nonzero"));
        }
        if !(self.max_angle >= 0.0 && self.max_angle < std::f64::consts::FRAC_PI_2) {
            return Err(schema(&format!("{key}.max_angle"), "must lie in [0, π/2)"));
        }
        Ok(FanSpec {
            axis: self.axis,
            max_angle: self.max_angle,
            n_polar: self.n_polar,
            n_azimuth: self.n_azimuth.max(1),
            t_max: positive(&format!("{key}.t_max"), self.t_max.unwrap_or(default_t_max))?,
        })
    }
}

impl PolySpec {
    fn poly(&self, key: &str, n: usize) -> anyhow::Result<Poly> {
        let names = variable_names(n);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let theta: Vec<usize> = (n + 1..2 * n - 1).collect();
        let mut p = Poly::zero(names.len());
        for (mono, &c) in &self.terms {
            let e = Poly::parse_monomial(mono, &refs).map_err(|e| schema(&format!("{key}.terms.\"{mono}\""), e))?;
            let term = Poly::monomial(e, c);
            if term.homogeneity_degree(&theta) != Some(self.degree) {
                return Err(schema(
                    &format!("{key}.terms.\"{mono}\""),
                    format!("not of declared degree {} in ({})", self.degree, refs[n + 1..].join(", ")),
                ));
            }
            p = p.add(&term);
        }
        Ok(p)
    }
}

impl MemberSection {
    pub fn spec(&self, index: usize) -> anyhow::Result<WeakNormalSpec> {
        let key = format!("compose_verify.member[{index}]");
        if self.n < 3 {
            return Err(schema(&format!("{key}.n"), "must be at least 3"));
        }
        let model = WeakNormalPieces::model(self.n);
        let piece = |name: &str, spec: &Option<PolySpec>, default: Poly| -> anyhow::Result<Poly> {
            match spec {
                Some(s) => {
                    if s.degree != 1 {
                        return Err(schema(&format!("{key}.{name}.degree"), "pieces are homogeneous of degree 1"));
                    }
                    s.poly(&format!("{key}.{name}"), self.n)
                }
                None => Ok(default),
            }
        };
        let nv = 2 * self.n - 1;
        Ok(WeakNormalSpec {
            name: self.name.clone(),
            n: self.n,
            pieces: WeakNormalPieces {
                s1: piece("s1", &self.s1, model.s1.clone())?,
                s5: piece("s5", &self.s5, Poly::zero(nv))?,
                s6: piece("s6", &self.s6, Poly::zero(nv))?,
                s7: piece("s7", &self.s7, Poly::zero(nv))?,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let e = toml::from_str::<Config>("seed = 1\n[model_verify]\nsamples = 5\nbogus = 2\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = toml::from_str::<Config>("sede = 1\n").unwrap_err();
        assert!(e.to_string().contains("sede"), "{e}");
    }

    #[test]
    fn soundspeed_keys_must_match_kind() {
        let c: Config = toml::from_str("[soundspeed]\nkind = \"constant\"\nwidth = 2.0\n").unwrap();
        let e = c.model().unwrap_err();
        assert!(e.to_string().contains("soundspeed.width"), "{e}");
        let c: Config = toml::from_str("[soundspeed]\nkind = \"gaussian-lens\"\ncenter = [0.0, 0.0, 3.0]\n").unwrap();
        assert!(matches!(c.model().unwrap(), SoundspeedModel::GaussianLens { center, .. } if center[2] == 3.0));
    }

    #[test]
    fn member_pieces_parse_and_check_degree() {
        let text = r#"
            [[compose_verify.member]]
            name = "m"
            n = 3
            s5 = { degree = 1, terms = { "x1*t1" = 0.05 } }
        "#;
        let c: Config = toml::from_str(text).unwrap();
        let m = &c.compose_verify.unwrap().member.unwrap()[0];
        let spec = m.spec(0).unwrap();
        assert!((spec.perturbation_size() - 0.05).abs() < 1e-15);
        let bad = r#"
            [[compose_verify.member]]
            name = "m"
            n = 3
            s6 = { degree = 1, terms = { "x1*x2" = 0.05 } }
        "#;
        let c: Config = toml::from_str(bad).unwrap();
        let e = c.compose_verify.unwrap().member.unwrap()[0].spec(0).unwrap_err();
        assert!(e.to_string().contains("compose_verify.member[0].s6.terms"), "{e}");
    }
}
