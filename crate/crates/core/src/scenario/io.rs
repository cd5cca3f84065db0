use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::error::{Error, Result};

pub const SCENARIO_FORMAT: &str = "atesim-scenario";
pub const SCENARIO_VERSION: u32 = 1;

/// On-disk layout. Floats go through serde_json's shortest round-trip
/// formatting, so reading a file back yields the identical `f64` values.
#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    format: String,
    version: u32,
    confounder_names: Vec<String>,
    true_ate: f64,
    source_rows: usize,
    strata: Vec<StratumRecord>,
    provenance: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct StratumRecord {
    z: Vec<u8>,
    p_z: f64,
    p_x: f64,
    p_y_x0: f64,
    p_y_x1: f64,
}

pub fn write_scenario(s: &Scenario, path: &Path) -> Result<()> {
    let text = to_string(s)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
        other => other,
    })
}

pub(crate) fn to_string(s: &Scenario) -> Result<String> {
    let file = ScenarioFile {
        format: SCENARIO_FORMAT.into(),
        version: SCENARIO_VERSION,
        confounder_names: s.confounder_names.clone(),
        true_ate: s.true_ate(),
        source_rows: s.source_rows,
        strata: (0..s.k())
            .map(|k| StratumRecord {
                z: s.strata[k].clone(),
                p_z: s.p_z[k],
                p_x: s.p_x_given_z[k],
                p_y_x0: s.p_y_given_xz[k][0],
                p_y_x1: s.p_y_given_xz[k][1],
            })
            .collect(),
        provenance: s.provenance.clone(),
    };
    let mut text =
        serde_json::to_string_pretty(&file).map_err(|e| Error::parse("scenario", e))?;
    text.push('\n');
    Ok(text)
}

pub(crate) fn from_str(text: &str) -> Result<Scenario> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| Error::parse("scenario", e))?;
    if file.format != SCENARIO_FORMAT {
        return Err(Error::parse(
            "scenario",
            format!("format `{}`, expected `{SCENARIO_FORMAT}`", file.format),
        ));
    }
    if file.version != SCENARIO_VERSION {
        return Err(Error::parse(
            "scenario",
            format!("unsupported version {}", file.version),
        ));
    }
    let s = Scenario {
        confounder_names: file.confounder_names,
        strata: file.strata.iter().map(|r| r.z.clone()).collect(),
        p_z: file.strata.iter().map(|r| r.p_z).collect(),
        p_x_given_z: file.strata.iter().map(|r| r.p_x).collect(),
        p_y_given_xz: file.strata.iter().map(|r| [r.p_y_x0, r.p_y_x1]).collect(),
        provenance: file.provenance,
        source_rows: file.source_rows,
    };
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let s = Scenario {
            confounder_names: vec!["a".into(), "b".into()],
            strata: vec![vec![0, 1], vec![1, 0]],
            p_z: vec![1.0 / 3.0, 2.0 / 3.0],
            p_x_given_z: vec![0.1 + 0.2, 1.0 / 7.0],
            p_y_given_xz: vec![[0.0, 1.0], [std::f64::consts::FRAC_1_SQRT_2, 1e-17]],
            provenance: vec!["hand made".into()],
            source_rows: 12,
        };
        let text = to_string(&s).unwrap();
        let back = from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.true_ate().to_bits(), s.true_ate().to_bits());
    }

    #[test]
    fn rejects_other_versions() {
        let s = Scenario {
            confounder_names: vec!["a".into()],
            strata: vec![vec![0]],
            p_z: vec![1.0],
            p_x_given_z: vec![0.5],
            p_y_given_xz: vec![[0.5, 0.5]],
            provenance: vec![],
            source_rows: 0,
        };
        let text = to_string(&s).unwrap().replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(from_str(&text), Err(Error::Parse { .. })));
    }
}
