//! Per-tick CSV trace.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Run outcome; `running` marks rows before termination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Running,
    Success,
    Collision,
    Timeout,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    /// Status of the most recent planning cycle (`solved` / `failed`).
    pub solver_status: String,
    /// Planar clearance from the robot center to the nearest obstacle.
    pub min_distance: f64,
    pub static_risks: usize,
    pub dynamic_risks: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    pub fn outcome(&self) -> Outcome {
        self.rows.last().map_or(Outcome::Running, |r| r.outcome)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        if rows.is_empty() {
            return Err(Error::Trace("no rows".into()));
        }
        if rows.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(Error::Trace("time column must increase".into()));
        }
        Ok(Self { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, outcome: Outcome) -> TraceRow {
        TraceRow {
            time: t,
            x: 0.1 * t,
            y: -1.0 / 3.0,
            theta: std::f64::consts::PI,
            v: 1.2,
            omega: -0.0,
            solver_status: "solved".into(),
            min_distance: 1e3,
            static_risks: 3,
            dynamic_risks: 0,
            outcome,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let trace = SimTrace {
            rows: vec![row(0.0, Outcome::Running), row(0.01, Outcome::Success)],
        };
        let text = trace.to_csv_string();
        assert!(
            text.starts_with("time,x,y,theta,v,omega,solver_status,min_distance,static_risks,dynamic_risks,outcome\n")
        );
        let back = SimTrace::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, trace);
        assert_eq!(back.to_csv_string(), text);
        assert_eq!(back.outcome(), Outcome::Success);
    }

    #[test]
    fn malformed_traces_rejected() {
        assert!(SimTrace::read_csv("time,x\n0.0,1.0\n".as_bytes()).is_err());
        let header = "time,x,y,theta,v,omega,solver_status,min_distance,static_risks,dynamic_risks,outcome\n";
        assert!(SimTrace::read_csv(header.as_bytes()).is_err());
        let bad = format!("{header}0.0,0,0,0,0,0,solved,1,0,0,exploded\n");
        assert!(SimTrace::read_csv(bad.as_bytes()).is_err());
        let back = format!("{header}0.1,0,0,0,0,0,solved,1,0,0,running\n0.0,0,0,0,0,0,solved,1,0,0,running\n");
        assert!(SimTrace::read_csv(back.as_bytes()).is_err());
    }
}
