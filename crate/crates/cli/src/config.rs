//! Flat INI-style scenario configs: `[section]` headers, `key = value`
//! lines, `#`/`;` comments. Numbers are parsed as plain decimal, no locale.

use std::collections::BTreeMap;
use std::path::Path;

use curvlab::entropy::EntropyModel;
use curvlab::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut current = String::from("");
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Parse(format!("line {}: unclosed section", lineno + 1)))?;
                current = name.trim().to_string();
                ini.sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse(format!("line {}: expected `key = value`", lineno + 1)));
            };
            ini.sections
                .entry(current.clone())
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ini)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(|v| v.as_str())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key)
            .ok_or_else(|| Error::Parse(format!("missing `{key}` in section [{section}]")))
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.get(section, key)
            .map(|v| {
                if v == "inf" {
                    Ok(f64::INFINITY)
                } else {
                    v.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("[{section}] {key} = {v}: not a number")))
                }
            })
            .transpose()
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        Ok(self.get_f64(section, key)?.unwrap_or(default))
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        self.get(section, key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("[{section}] {key} = {v}: not an integer")))
            })
            .transpose()
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        Ok(self.get_usize(section, key)?.unwrap_or(default))
    }
}

/// Parse the `[entropy]` record (family, N, eps, M).
pub fn entropy_from(ini: &Ini) -> Result<EntropyModel> {
    let family = ini.get("entropy", "family").unwrap_or("linear");
    match family {
        "linear" => Ok(EntropyModel::linear()),
        "power" => {
            let n = ini
                .get_f64("entropy", "n")?
                .ok_or_else(|| Error::Parse("[entropy] power family needs n".into()))?;
            EntropyModel::power(n)
        }
        "regularized-power" => {
            let n = ini
                .get_f64("entropy", "n")?
                .ok_or_else(|| Error::Parse("[entropy] regularized-power needs n".into()))?;
            let eps = ini.f64_or("entropy", "eps", 0.01)?;
            let cap = ini.f64_or("entropy", "m", 10.0)?;
            EntropyModel::regularized_power(n, eps, cap)
        }
        other => Err(Error::Parse(format!("[entropy] unknown family `{other}`"))),
    }
}

/// Serialize a model back to the config record shape.
pub fn entropy_record(model: &EntropyModel) -> String {
    let (family, n, eps, cap, a) = model.describe();
    let mut out = format!("family = {family}\n");
    if let Some(n) = n {
        out.push_str(&format!("n = {n}\n"));
    }
    if let Some(eps) = eps {
        out.push_str(&format!("eps = {eps}\n"));
    }
    if let Some(cap) = cap {
        out.push_str(&format!("m = {cap}\n"));
    }
    if let Some(a) = a {
        out.push_str(&format!("a = {a}\n"));
    }
    out
}
