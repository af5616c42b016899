//! Run configuration: converter parameters in physical or design form,
//! read from TOML or JSON with `key=value` overrides.
//!
//! Physical form keys: `Lr, Cr, Co, Ro, N, Vin, fs`.
//! Design form keys: `F, Qe, fr, N, Ro, Vin` and optionally `Co`
//! (default 100 nF). A configuration containing any of `Lr, Cr, fs` is in
//! physical form; mixing in `F, Qe` or `fr` is an error. Optional keys
//! `format` (`csv` or `json`) and `output` (path) apply to every subcommand.
//! All values are SI base units.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ConverterParams, DesignSpec};

pub const PHYSICAL_KEYS: [&str; 7] = ["Lr", "Cr", "Co", "Ro", "N", "Vin", "fs"];
pub const DESIGN_KEYS: [&str; 6] = ["F", "Qe", "fr", "N", "Ro", "Vin"];
const PHYSICAL_ONLY: [&str; 3] = ["Lr", "Cr", "fs"];
const DESIGN_ONLY: [&str; 3] = ["F", "Qe", "fr"];
const OPTION_KEYS: [&str; 2] = ["format", "output"];

/// Output capacitance assumed when the design form omits `Co`.
pub const DEFAULT_CO: f64 = 100e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Parse(format!(
                "unknown output format `{other}` (expected csv or json)"
            ))),
        }
    }
}

/// How the converter was specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum ParamForm {
    Physical,
    Design(DesignSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ConverterParams,
    pub form: ParamForm,
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
}

/// Raw configuration value before validation.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Number(f64),
    Text(String),
}

/// Source syntax of a configuration document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Syntax {
    Toml,
    Json,
}

impl Syntax {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Syntax::Json,
            _ => Syntax::Toml,
        }
    }
}

fn from_toml(text: &str) -> Result<BTreeMap<String, RawValue>> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    table
        .into_iter()
        .map(|(k, v)| {
            let raw = match v {
                toml::Value::Float(f) => RawValue::Number(f),
                toml::Value::Integer(i) => RawValue::Number(i as f64),
                toml::Value::String(s) => RawValue::Text(s),
                _ => return Err(Error::NotANumber { key: k }),
            };
            Ok((k, raw))
        })
        .collect()
}

fn from_json(text: &str) -> Result<BTreeMap<String, RawValue>> {
    let map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    map.into_iter()
        .map(|(k, v)| {
            let raw = match v {
                serde_json::Value::Number(n) => {
                    RawValue::Number(n.as_f64().ok_or(Error::NotANumber { key: k.clone() })?)
                }
                serde_json::Value::String(s) => RawValue::Text(s),
                serde_json::Value::Null if k == "output" => {
                    return Ok((k, RawValue::Text(String::new())))
                }
                _ => return Err(Error::NotANumber { key: k }),
            };
            Ok((k, raw))
        })
        .collect()
}

/// Parses a configuration document into raw key/value pairs.
pub fn parse_document(text: &str, syntax: Syntax) -> Result<BTreeMap<String, RawValue>> {
    match syntax {
        Syntax::Toml => from_toml(text),
        Syntax::Json => from_json(text),
    }
}

/// Splits a `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, RawValue)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{s}` is not of the form key=value")))?;
    let (k, v) = (k.trim().to_string(), v.trim());
    let raw = if OPTION_KEYS.contains(&k.as_str()) {
        RawValue::Text(v.to_string())
    } else {
        RawValue::Number(
            v.parse()
                .map_err(|_| Error::NotANumber { key: k.clone() })?,
        )
    };
    Ok((k, raw))
}

/// Validates raw values (file first, then overrides, later entries win).
pub fn build_config(values: BTreeMap<String, RawValue>) -> Result<RunConfig> {
    let mut numbers = BTreeMap::new();
    let mut format = OutputFormat::default();
    let mut output = None;
    for (k, v) in values {
        match (k.as_str(), v) {
            ("format", RawValue::Text(s)) => format = s.parse()?,
            ("output", RawValue::Text(s)) => output = (!s.is_empty()).then(|| PathBuf::from(s)),
            (key, _) if OPTION_KEYS.contains(&key) => {
                return Err(Error::Parse(format!("`{key}` must be a string")))
            }
            (key, RawValue::Number(x))
                if PHYSICAL_KEYS.contains(&key) || DESIGN_KEYS.contains(&key) =>
            {
                numbers.insert(k, x);
            }
            (key, RawValue::Text(_))
                if PHYSICAL_KEYS.contains(&key) || DESIGN_KEYS.contains(&key) =>
            {
                return Err(Error::NotANumber { key: k });
            }
            _ => return Err(Error::UnknownKey(k)),
        }
    }

    let physical = PHYSICAL_ONLY.iter().any(|k| numbers.contains_key(*k));
    let design = DESIGN_ONLY.iter().any(|k| numbers.contains_key(*k));
    if physical && design {
        return Err(Error::ConflictingForms);
    }
    let required: &[&str] = if design { &DESIGN_KEYS } else { &PHYSICAL_KEYS };
    let missing: Vec<String> = required
        .iter()
        .filter(|k| !numbers.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing));
    }
    let get = |k: &str| numbers[k];

    let (params, form) = if design {
        let spec = DesignSpec {
            f_ratio: get("F"),
            qe: get("Qe"),
            fr: get("fr"),
            n: get("N"),
            ro: get("Ro"),
            co: numbers.get("Co").copied().unwrap_or(DEFAULT_CO),
            vin: get("Vin"),
        };
        (
            ConverterParams::from_design(&spec)?,
            ParamForm::Design(spec),
        )
    } else {
        let p = ConverterParams::new(
            get("Lr"),
            get("Cr"),
            get("Co"),
            get("Ro"),
            get("N"),
            get("Vin"),
            get("fs"),
        )?;
        (p, ParamForm::Physical)
    };
    Ok(RunConfig {
        params,
        form,
        format,
        output,
    })
}

/// Reads an optional configuration file and applies `key=value` overrides.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut values = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.to_path_buf(),
                source,
            })?;
            parse_document(&text, Syntax::from_path(p))?
        }
        None => BTreeMap::new(),
    };
    for o in overrides {
        let (k, v) = parse_override(o)?;
        values.insert(k, v);
    }
    build_config(values)
}

impl RunConfig {
    /// The configuration as a flat JSON document accepted by
    /// [`parse_document`].
    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        let mut put = |k: &str, v: f64| {
            map.insert(k.to_string(), serde_json::json!(v));
        };
        match &self.form {
            ParamForm::Physical => {
                let p = &self.params;
                for (k, v) in PHYSICAL_KEYS.iter().zip([
                    p.lr(),
                    p.cr(),
                    p.co(),
                    p.ro(),
                    p.n(),
                    p.vin(),
                    p.fs(),
                ]) {
                    put(k, v);
                }
            }
            ParamForm::Design(s) => {
                for (k, v) in ["F", "Qe", "fr", "N", "Ro", "Co", "Vin"]
                    .iter()
                    .zip([s.f_ratio, s.qe, s.fr, s.n, s.ro, s.co, s.vin])
                {
                    put(k, v);
                }
            }
        }
        map.insert(
            "format".into(),
            serde_json::json!(match self.format {
                OutputFormat::Csv => "csv",
                OutputFormat::Json => "json",
            }),
        );
        if let Some(o) = &self.output {
            map.insert("output".into(), serde_json::json!(o.to_string_lossy()));
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("flat map serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOMINAL: &str = r#"
Lr = 1.6e-4
Cr = 1.6e-8
Co = 1.0e-7
Ro = 10000
N = 16
Vin = 700
fs = 101000
"#;

    #[test]
    fn physical_form_from_toml() {
        let cfg = build_config(parse_document(NOMINAL, Syntax::Toml).unwrap()).unwrap();
        assert_eq!(cfg.form, ParamForm::Physical);
        assert_eq!(cfg.params.ro(), 10e3);
        assert_eq!(cfg.format, OutputFormat::Csv);
    }

    #[test]
    fn empty_config_lists_required_keys() {
        match build_config(BTreeMap::new()) {
            Err(Error::MissingKeys(keys)) => {
                assert_eq!(keys, PHYSICAL_KEYS.map(String::from).to_vec())
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let mut v = parse_document(NOMINAL, Syntax::Toml).unwrap();
        v.insert("Lm".into(), RawValue::Number(1.0));
        assert!(matches!(build_config(v), Err(Error::UnknownKey(k)) if k == "Lm"));
    }

    #[test]
    fn mixed_forms_rejected() {
        let mut v = parse_document(NOMINAL, Syntax::Toml).unwrap();
        v.insert("Qe".into(), RawValue::Number(1.0));
        assert!(matches!(build_config(v), Err(Error::ConflictingForms)));
    }

    #[test]
    fn design_form_matches_experimental_design() {
        let text = r#"{"F": 1.01, "Qe": 3.2, "fr": 98000, "N": 16, "Ro": 10000, "Vin": 8.4}"#;
        let cfg = build_config(parse_document(text, Syntax::Json).unwrap()).unwrap();
        assert!((cfg.params.lr() - 164.8e-6).abs() / 164.8e-6 < 5e-3);
        assert!((cfg.params.cr() - 16e-9).abs() / 16e-9 < 5e-3);
        assert_eq!(cfg.params.co(), DEFAULT_CO);
    }

    #[test]
    fn overrides_win() {
        let mut v = parse_document(NOMINAL, Syntax::Toml).unwrap();
        for o in ["Vin=350", "format=json"] {
            let (k, r) = parse_override(o).unwrap();
            v.insert(k, r);
        }
        let cfg = build_config(v).unwrap();
        assert_eq!(cfg.params.vin(), 350.0);
        assert_eq!(cfg.format, OutputFormat::Json);
        assert!(parse_override("Vin").is_err());
        assert!(matches!(
            parse_override("Vin=abc"),
            Err(Error::NotANumber { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = build_config(parse_document(NOMINAL, Syntax::Toml).unwrap()).unwrap();
        cfg.output = Some(PathBuf::from("out/run.csv"));
        let back = build_config(parse_document(&cfg.to_json(), Syntax::Json).unwrap()).unwrap();
        assert_eq!(back, cfg);

        let text = r#"{"F": 1.2, "Qe": 2.0, "fr": 100000, "N": 16, "Ro": 10000, "Vin": 700, "format": "json"}"#;
        let cfg = build_config(parse_document(text, Syntax::Json).unwrap()).unwrap();
        let back = build_config(parse_document(&cfg.to_json(), Syntax::Json).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
