use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Inclusive linear grid; `points = 0` is an empty sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    Single(f64),
    Values(Vec<f64>),
    Range(LinearRange),
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Sweep::Single(x) => vec![*x],
            Sweep::Values(v) => v.clone(),
            Sweep::Range(LinearRange { start, stop, points }) => match points {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|k| start + (stop - start) * k as f64 / (n - 1) as f64).collect(),
            },
        }
    }
}

impl FromStr for Sweep {
    type Err = String;

    /// `start:stop:points`, a comma list, or a single number.
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("bad number {x:?}: {e}"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [a, b, n] => Ok(Sweep::Range(LinearRange {
                start: num(a)?,
                stop: num(b)?,
                points: n.trim().parse().map_err(|e| format!("bad point count {n:?}: {e}"))?,
            })),
            [one] if one.trim().is_empty() => Ok(Sweep::Values(Vec::new())),
            [one] if one.contains(',') => Ok(Sweep::Values(one.split(',').map(num).collect::<Result<_, _>>()?)),
            [one] => Ok(Sweep::Single(num(one)?)),
            _ => Err(format!("expected start:stop:points or a comma list, got {s:?}")),
        }
    }
}

/// `name=spec` as given to `--sweep`.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedSweep {
    pub name: String,
    pub sweep: Sweep,
}

impl FromStr for NamedSweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, spec) = s.split_once('=').ok_or_else(|| format!("expected name=spec, got {s:?}"))?;
        Ok(Self { name: name.trim().to_string(), sweep: spec.parse()? })
    }
}

/// Integer that also accepts float notation such as `1e6`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|e| format!("bad count {s:?}: {e}"))?;
    if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(format!("{s:?} is not a non-negative integer"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_is_inclusive() {
        let v: Sweep = "0:1.6:33".parse().unwrap();
        let x = v.values();
        assert_eq!(x.len(), 33);
        assert_eq!(x[0], 0.0);
        assert!((x[32] - 1.6).abs() < 1e-15);
        assert!((x[1] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn empty_forms() {
        assert!("0:1:0".parse::<Sweep>().unwrap().values().is_empty());
        assert!("".parse::<Sweep>().unwrap().values().is_empty());
        assert!(serde_json::from_str::<Sweep>("[]").unwrap().values().is_empty());
    }

    #[test]
    fn json_forms() {
        assert_eq!(serde_json::from_str::<Sweep>("0.5").unwrap().values(), vec![0.5]);
        assert_eq!(serde_json::from_str::<Sweep>("[1, 2]").unwrap().values(), vec![1.0, 2.0]);
        let r: Sweep = serde_json::from_str(r#"{"start": 0, "stop": 1, "points": 3}"#).unwrap();
        assert_eq!(r.values(), vec![0.0, 0.5, 1.0]);
        assert!(serde_json::from_str::<Sweep>(r#"{"start": 0, "stop": 1, "points": 3, "step": 1}"#).is_err());
    }

    #[test]
    fn named_and_counts() {
        let s: NamedSweep = "r=0:1:5".parse().unwrap();
        assert_eq!(s.name, "r");
        assert_eq!(s.sweep.values().len(), 5);
        assert!("r".parse::<NamedSweep>().is_err());
        assert_eq!(parse_count("1e6").unwrap(), 1_000_000);
        assert_eq!(parse_count("42").unwrap(), 42);
        assert!(parse_count("1.5").is_err());
    }
}
