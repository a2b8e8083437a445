//! Run configuration: a TOML document overlaid by command-line flags, resolved
//! against per-system and per-rate defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mudich_core::growth::BUILTIN_RATES;
use mudich_core::{builtin_rate, builtin_system, Domain, GrowthRate, LinearSystem, Params};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;

/// One source of settings. Every field is optional so layers can be stacked.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub system: Option<String>,
    #[serde(default, deserialize_with = "params_table")]
    pub params: BTreeMap<String, String>,
    pub table: Option<PathBuf>,
    pub cubic: Option<bool>,
    pub rate: Option<String>,
    pub rate_table: Option<PathBuf>,
    pub domain: Option<String>,
    pub tmin: Option<f64>,
    pub tmax: Option<f64>,
    pub tol: Option<f64>,
    pub dense: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub spectrum: SpectrumLayer,
    #[serde(default)]
    pub lyapunov: LyapunovLayer,
    #[serde(default)]
    pub reduce: ReduceLayer,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumLayer {
    pub tol_gamma: Option<f64>,
    pub tol_slope: Option<f64>,
    pub margin: Option<f64>,
    pub uniform: Option<bool>,
    pub scan_step: Option<f64>,
    pub envelope: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovLayer {
    pub s: Option<f64>,
    pub vectors: Option<Vec<Vec<f64>>>,
    pub tail_fraction: Option<f64>,
    pub window_fraction: Option<f64>,
    pub bounds: Option<bool>,
    pub bounds_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceLayer {
    pub samples: Option<usize>,
    pub window: Option<(f64, f64)>,
    pub pairs: Option<usize>,
    pub conjugacy_tol: Option<f64>,
}

/// Accepts `key = number | string | [numbers]`; lists become `;`-joined strings.
fn params_table<'de, D: serde::Deserializer<'de>>(d: D) -> Result<BTreeMap<String, String>, D::Error> {
    use serde::de::Error;
    let raw = BTreeMap::<String, toml::Value>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            let text = match &v {
                toml::Value::String(s) => s.clone(),
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                toml::Value::Array(items) => items
                    .iter()
                    .map(|x| match x {
                        toml::Value::Integer(i) => Ok(i.to_string()),
                        toml::Value::Float(f) => Ok(f.to_string()),
                        _ => Err(D::Error::custom(format!("params.{k}: list entries must be numbers"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .join(";"),
                _ => return Err(D::Error::custom(format!("params.{k}: unsupported value"))),
            };
            Ok((k, text))
        })
        .collect()
}

impl Layer {
    pub fn from_file(path: &Path) -> CliResult<Layer> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// `self` with every setting present in `top` replaced.
    pub fn overlay(mut self, top: Layer) -> Layer {
        macro_rules! take {
            ($($f:ident).+) => { if top.$($f).+.is_some() { self.$($f).+ = top.$($f).+; } };
        }
        take!(system);
        take!(table);
        take!(cubic);
        take!(rate);
        take!(rate_table);
        take!(domain);
        take!(tmin);
        take!(tmax);
        take!(tol);
        take!(dense);
        take!(seed);
        take!(out);
        take!(spectrum.tol_gamma);
        take!(spectrum.tol_slope);
        take!(spectrum.margin);
        take!(spectrum.uniform);
        take!(spectrum.scan_step);
        take!(spectrum.envelope);
        take!(lyapunov.s);
        take!(lyapunov.vectors);
        take!(lyapunov.tail_fraction);
        take!(lyapunov.window_fraction);
        take!(lyapunov.bounds);
        take!(lyapunov.bounds_tol);
        take!(reduce.samples);
        take!(reduce.window);
        take!(reduce.pairs);
        take!(reduce.conjugacy_tol);
        self.params.extend(top.params);
        self
    }
}

/// Fully resolved settings; embedded verbatim in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub system: String,
    pub params: BTreeMap<String, String>,
    pub table: Option<PathBuf>,
    pub cubic: bool,
    pub rate: String,
    pub rate_table: Option<PathBuf>,
    pub domain: String,
    pub tmin: f64,
    pub tmax: f64,
    pub tol: f64,
    /// Extra log-μ-uniform grid nodes.
    pub dense: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub spectrum: SpectrumSettings,
    pub lyapunov: LyapunovSettings,
    pub reduce: ReduceSettings,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSettings {
    pub tol_gamma: f64,
    pub tol_slope: f64,
    pub margin: f64,
    pub uniform: bool,
    pub scan_step: f64,
    pub envelope: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovSettings {
    pub s: f64,
    /// Empty means the standard basis.
    pub vectors: Vec<Vec<f64>>,
    pub tail_fraction: f64,
    pub window_fraction: f64,
    pub bounds: bool,
    pub bounds_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReduceSettings {
    pub samples: usize,
    pub window: Option<(f64, f64)>,
    pub pairs: usize,
    pub conjugacy_tol: f64,
}

/// The system and rate a config names, loaded and checked against each other.
pub struct Setup {
    pub config: RunConfig,
    pub system: LinearSystem,
    pub rate: GrowthRate,
}

fn default_rate(system: &str, params: &BTreeMap<String, String>) -> &'static str {
    match system {
        "example1" => match params.get("rate").map(String::as_str) {
            Some("exponential") => "exponential",
            Some("polynomial-half") => "polynomial-half",
            Some("sqrt-exp-half") => "sqrt-exp-half",
            _ => "polynomial-full",
        },
        "example2" => "polynomial-full",
        "triangular-halfline" => "sqrt-exp-half",
        _ => "exponential",
    }
}

/// Horizon giving a `log μ` span of roughly 7 to 70, enough for the envelope fits.
fn default_horizon(rate: &str, domain: Domain) -> (f64, f64) {
    let hi = match rate {
        "polynomial-full" | "polynomial-half" => 2000.0,
        "sqrt-exp-half" => 5000.0,
        _ => 30.0,
    };
    match domain {
        Domain::FullLine => (-hi, hi),
        Domain::HalfLine => (0.0, hi),
    }
}

fn bad(name: &str, reason: impl Into<String>) -> CliError {
    CliError::Usage(format!("{name}: {}", reason.into()))
}

fn in_range(name: &str, x: f64, lo: f64, hi: f64) -> CliResult<f64> {
    if x >= lo && x <= hi {
        Ok(x)
    } else {
        Err(bad(name, format!("{x} outside [{lo}, {hi}]")))
    }
}

impl Setup {
    pub fn resolve(layer: Layer) -> CliResult<Setup> {
        let system_name = layer.system.clone().ok_or_else(|| bad("system", "required (see list-systems)"))?;
        let mut params = layer.params.clone();
        let rate_name = layer.rate.clone().unwrap_or_else(|| default_rate(&system_name, &params).to_string());
        if !BUILTIN_RATES.contains(&rate_name.as_str()) {
            return Err(bad("rate", format!("unknown rate `{rate_name}`; known: {}", BUILTIN_RATES.join(", "))));
        }
        let domain = match &layer.domain {
            Some(d) => Some(Domain::parse(d).ok_or_else(|| bad("domain", format!("`{d}` is not full-line or half-line")))?),
            None => None,
        };

        let rate = if rate_name == "custom" {
            let path = layer.rate_table.as_ref().ok_or_else(|| bad("rate", "custom needs rate_table (CSV t,log_mu)"))?;
            io::load_rate_table(path, domain)?
        } else {
            let mut rp = Params::default();
            if rate_name == "exponential" {
                if let Some(d) = domain {
                    rp.insert("domain", d.as_str());
                }
            }
            builtin_rate(&rate_name, &rp).map_err(CliError::Config)?
        };
        let domain = domain.unwrap_or(rate.domain());
        if rate.domain() != domain {
            return Err(bad("domain", format!("rate {rate_name} lives on the {}", rate.domain())));
        }

        let cubic = layer.cubic.unwrap_or(false);
        let system = if system_name == "table" {
            let path = layer.table.as_ref().ok_or_else(|| bad("system", "table needs a table path"))?;
            io::load_table_system(path, domain, cubic)?
        } else {
            let takes_domain = matches!(system_name.as_str(), "constant" | "rotation2d" | "zero" | "example1");
            if takes_domain && !params.contains_key("domain") {
                params.insert("domain".into(), domain.as_str().into());
            }
            if system_name == "example1" && !params.contains_key("rate") && rate_name != "custom" {
                params.insert("rate".into(), rate_name.clone());
            }
            let mut p = Params::default();
            for (k, v) in &params {
                p.insert(k, v);
            }
            builtin_system(&system_name, &p).map_err(CliError::Config)?
        };
        if system.domain() != domain {
            return Err(CliError::Config(mudich_core::Error::DomainMismatch { system: system.domain(), rate: domain }));
        }

        let (dlo, dhi) = match &rate_name[..] {
            "custom" => {
                let k = rate_table_extent(&layer, domain);
                (k.0, k.1)
            }
            name => default_horizon(name, domain),
        };
        let tmin = layer.tmin.unwrap_or(dlo);
        let tmax = layer.tmax.unwrap_or(dhi);
        if !(tmin < tmax && tmin.is_finite() && tmax.is_finite()) {
            return Err(bad("horizon", format!("need finite tmin < tmax, got [{tmin}, {tmax}]")));
        }
        if !domain.contains(tmin) {
            return Err(bad("tmin", format!("{tmin} lies outside the {domain} domain")));
        }
        let tol = in_range("tol", layer.tol.unwrap_or(1e-9), 1e-12, 1e-3)?;

        let n = system.dimension();
        let sp = &layer.spectrum;
        let ly = &layer.lyapunov;
        let rd = &layer.reduce;
        let vectors = ly.vectors.clone().unwrap_or_default();
        if let Some(v) = vectors.iter().find(|v| v.len() != n) {
            return Err(bad("lyapunov.vectors", format!("{v:?} does not have {n} entries")));
        }
        let s = ly.s.unwrap_or(if domain.contains(0.0) && tmin <= 0.0 { 0.0 } else { tmin });
        if !(s >= tmin && s < tmax) {
            return Err(bad("lyapunov.s", format!("{s} outside [{tmin}, {tmax})")));
        }
        if let Some((a, b)) = rd.window {
            if !(a < b && a >= tmin && b <= tmax) {
                return Err(bad("reduce.window", format!("[{a}, {b}] is not inside [{tmin}, {tmax}]")));
            }
        }
        let samples = rd.samples.unwrap_or(2001);
        if samples < 5 {
            return Err(bad("reduce.samples", "need at least 5"));
        }

        let config = RunConfig {
            system: system_name,
            params,
            table: layer.table.clone(),
            cubic,
            rate: rate_name,
            rate_table: layer.rate_table.clone(),
            domain: domain.as_str().into(),
            tmin,
            tmax,
            tol,
            dense: layer.dense.unwrap_or(400),
            seed: layer.seed.unwrap_or(0),
            out: layer.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            spectrum: SpectrumSettings {
                tol_gamma: sp.tol_gamma.unwrap_or(1e-2),
                tol_slope: sp.tol_slope.unwrap_or(0.02),
                margin: sp.margin.unwrap_or(0.02),
                uniform: sp.uniform.unwrap_or(false),
                scan_step: sp.scan_step.unwrap_or(0.25),
                envelope: sp.envelope.unwrap_or(false),
            },
            lyapunov: LyapunovSettings {
                s,
                vectors,
                tail_fraction: in_range("lyapunov.tail_fraction", ly.tail_fraction.unwrap_or(0.5), 0.05, 0.95)?,
                window_fraction: in_range("lyapunov.window_fraction", ly.window_fraction.unwrap_or(0.1), 0.01, 1.0)?,
                bounds: ly.bounds.unwrap_or(false),
                bounds_tol: in_range("lyapunov.bounds_tol", ly.bounds_tol.unwrap_or(0.1), 0.0, 10.0)?,
            },
            reduce: ReduceSettings {
                samples,
                window: rd.window,
                pairs: rd.pairs.unwrap_or(200).max(1),
                conjugacy_tol: in_range("reduce.conjugacy_tol", rd.conjugacy_tol.unwrap_or(1e-3), 0.0, 1.0)?,
            },
        };
        config.spectrum_config().validate().map_err(CliError::Config)?;
        Ok(Setup { config, system, rate })
    }
}

fn rate_table_extent(layer: &Layer, domain: Domain) -> (f64, f64) {
    layer
        .rate_table
        .as_ref()
        .and_then(|p| io::table_extent(p).ok())
        .unwrap_or_else(|| default_horizon("exponential", domain))
}

impl RunConfig {
    pub fn spectrum_config(&self) -> mudich_core::SpectrumConfig {
        let mut c = mudich_core::SpectrumConfig {
            tol_gamma: self.spectrum.tol_gamma,
            tol_slope: self.spectrum.tol_slope,
            scan_step: self.spectrum.scan_step,
            ..Default::default()
        };
        c.dichotomy.margin = self.spectrum.margin;
        c.dichotomy.uniform = self.spectrum.uniform;
        c
    }

    pub fn lyapunov_config(&self, keep_trace: bool) -> mudich_core::LyapunovConfig {
        mudich_core::LyapunovConfig {
            tail_fraction: self.lyapunov.tail_fraction,
            window_fraction: self.lyapunov.window_fraction,
            keep_trace,
        }
    }

    pub fn reduce_config(&self) -> mudich_core::ReduceConfig {
        mudich_core::ReduceConfig { samples: self.reduce.samples, t_range: self.reduce.window, ..Default::default() }
    }

    pub fn conjugacy_config(&self) -> mudich_core::ConjugacyConfig {
        mudich_core::ConjugacyConfig { pairs: self.reduce.pairs, seed: self.seed, tol: self.reduce.conjugacy_tol }
    }
}
