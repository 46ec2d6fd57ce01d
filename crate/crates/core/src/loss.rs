//! Component loss tables and the arm efficiencies they imply.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Signal,
    Herald,
    /// Shared by both photons.
    Both,
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "signal" => Ok(Arm::Signal),
            "herald" => Ok(Arm::Herald),
            "both" => Ok(Arm::Both),
            other => Err(Error::invalid("arm", format!("unknown arm `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEntry {
    pub name: String,
    pub db: f64,
    pub arm: Arm,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    entries: Vec<LossEntry>,
}

/// Which end of the measured detector loss range to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorCase {
    /// 0.81 dB.
    #[default]
    Best,
    /// 1.08 dB.
    Worst,
}

impl DetectorCase {
    pub fn loss_db(self) -> f64 {
        match self {
            DetectorCase::Best => 0.81,
            DetectorCase::Worst => 1.08,
        }
    }
}

impl LossTable {
    pub fn new(entries: Vec<LossEntry>) -> Result<Self> {
        for e in &entries {
            if !(e.db >= 0.0 && e.db.is_finite()) {
                return Err(Error::invalid(
                    "db",
                    format!("loss of `{}` must be non-negative", e.name),
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[LossEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn concat(&self, other: &LossTable) -> LossTable {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        LossTable { entries }
    }

    /// The laboratory component table.
    pub fn laboratory(detectors: DetectorCase) -> Self {
        let e = |name: &str, db: f64, arm| LossEntry {
            name: name.to_string(),
            db,
            arm,
        };
        let d = detectors.loss_db();
        Self {
            entries: vec![
                e("SNSPD (signal)", d, Arm::Signal),
                e("SNSPD (herald)", d, Arm::Herald),
                e("Fibre coupling: herald", 3.0, Arm::Herald),
                e("Fibre coupling: signal", 1.5, Arm::Signal),
                e("Delay line insertion", 0.18, Arm::Signal),
                e("Phase modulator insertion", 2.2, Arm::Signal),
                e("FBG insertion (TOF)", 4.6, Arm::Herald),
                e("Signal filter insertion", 0.46, Arm::Signal),
                e("KTP chip", 0.82, Arm::Both),
                e("Signal filter bandwidth clipping", 3.0, Arm::Signal),
            ],
        }
    }

    /// CSV rows of `name, dB, arm`. A header row is skipped if its dB field
    /// is not numeric.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(input);
        let mut entries = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 1;
            let record = record.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if record.len() != 3 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 3 fields, found {}", record.len()),
                });
            }
            let db = match record[1].parse::<f64>() {
                Ok(v) => v,
                Err(_) if idx == 0 => continue,
                Err(e) => {
                    return Err(Error::Parse {
                        line,
                        message: e.to_string(),
                    })
                }
            };
            let arm = record[2].parse().map_err(|e: Error| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            entries.push(LossEntry {
                name: record[0].to_string(),
                db,
                arm,
            });
        }
        Self::new(entries)
    }

    pub fn total_db(&self, arm: Arm) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.arm == arm || (arm != Arm::Both && e.arm == Arm::Both))
            .map(|e| e.db)
            .sum()
    }
}

/// `10^(−Σ dB / 10)` over the entries on `arm`, shared entries included.
/// For [`Arm::Both`] only the shared entries count.
pub fn arm_efficiency(table: &LossTable, arm: Arm) -> f64 {
    10f64.powf(-table.total_db(arm) / 10.0)
}

/// A measured efficiency, either a value or an interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Measured {
    Value(f64),
    Interval(f64, f64),
}

impl Measured {
    fn distance(&self, x: f64) -> f64 {
        match *self {
            Measured::Value(v) => x - v,
            Measured::Interval(lo, hi) => {
                if x < lo {
                    x - lo
                } else if x > hi {
                    x - hi
                } else {
                    0.0
                }
            }
        }
    }

    fn reference(&self) -> f64 {
        match *self {
            Measured::Value(v) => v,
            Measured::Interval(lo, hi) => 0.5 * (lo + hi),
        }
    }
}

/// Klyshko measurements from the laboratory.
pub const KLYSHKO_SIGNAL: Measured = Measured::Value(0.14);
pub const KLYSHKO_HERALD: Measured = Measured::Interval(0.11, 0.15);
pub const DEFAULT_TOLERANCE: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmDiscrepancy {
    pub arm: Arm,
    pub table: f64,
    pub measured: Measured,
    /// Table minus measurement; zero inside an interval.
    pub absolute: f64,
    pub relative: f64,
    pub within_tolerance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconcileReport {
    pub tolerance: f64,
    pub arms: Vec<ArmDiscrepancy>,
}

impl ReconcileReport {
    pub fn all_within(&self) -> bool {
        self.arms.iter().all(|a| a.within_tolerance)
    }

    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = format!("tolerance={}\n", self.tolerance);
        for a in &self.arms {
            let p = match a.arm {
                Arm::Signal => "signal",
                Arm::Herald => "herald",
                Arm::Both => "both",
            };
            let measured = match a.measured {
                Measured::Value(v) => format!("{v}"),
                Measured::Interval(lo, hi) => format!("[{lo},{hi}]"),
            };
            out.push_str(&format!(
                "{p}.table={:.4}\n{p}.measured={measured}\n{p}.absolute={:.4}\n{p}.relative={:.4}\n{p}.within={}\n",
                a.table, a.absolute, a.relative, a.within_tolerance
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Compares table-derived efficiencies against Klyshko measurements.
pub fn reconcile(table: &LossTable, signal: Measured, herald: Measured, tolerance: f64) -> ReconcileReport {
    let arms = [(Arm::Signal, signal), (Arm::Herald, herald)]
        .into_iter()
        .map(|(arm, measured)| {
            let t = arm_efficiency(table, arm);
            let absolute = measured.distance(t);
            ArmDiscrepancy {
                arm,
                table: t,
                measured,
                absolute,
                relative: absolute / measured.reference(),
                within_tolerance: absolute.abs() <= tolerance,
            }
        })
        .collect();
    ReconcileReport { tolerance, arms }
}
