use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One inner optimization: an RLM step on a single direction, or a full
/// ULM restart (`direction == None`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based RLM cycle, or 1-based restart for ULM.
    pub iteration: usize,
    pub direction: Option<usize>,
    /// Objective calls spent in this step.
    pub n_calls: usize,
    /// Calls since the start of the estimation, this step included.
    pub n_calls_cum: usize,
    /// Best objective value known after this step.
    pub best_value: f64,
    pub tau2: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimationTrace {
    pub steps: Vec<StepRecord>,
    /// Best objective value after each call, across the whole estimation.
    pub best_by_call: Vec<f64>,
}

impl EstimationTrace {
    pub fn total_calls(&self) -> usize {
        self.best_by_call.len()
    }

    pub fn final_value(&self) -> Option<f64> {
        self.steps.last().map(|s| s.best_value)
    }

    /// `τ²` at the end of each RLM cycle.
    pub fn tau2_by_iteration(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        let mut current = None;
        for s in &self.steps {
            if current != Some(s.iteration) {
                out.push(s.tau2);
                current = Some(s.iteration);
            } else if let Some(last) = out.last_mut() {
                *last = s.tau2;
            }
        }
        out
    }

    pub(crate) fn push_calls(&mut self, best_by_call: &[f64]) {
        let prior = self.best_by_call.last().copied().unwrap_or(f64::INFINITY);
        self.best_by_call.extend(best_by_call.iter().map(|&v| v.min(prior)));
    }

    pub const CSV_HEADER: [&'static str; 6] = ["run_id", "iteration", "direction", "n_calls_cum", "best_value", "tau2"];

    /// Writes `run_id,iteration,direction,n_calls_cum,best_value,tau2`
    /// rows; directions are 1-based, empty for joint steps.
    pub fn write_csv_rows<W: Write>(&self, run_id: &str, writer: &mut csv::Writer<W>) -> Result<()> {
        for s in &self.steps {
            let direction = s.direction.map(|l| (l + 1).to_string()).unwrap_or_default();
            writer.write_record([
                run_id.to_string(),
                s.iteration.to_string(),
                direction,
                s.n_calls_cum.to_string(),
                s.best_value.to_string(),
                s.tau2.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, run_id: &str, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::CSV_HEADER)?;
        self.write_csv_rows(run_id, &mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(iteration: usize, direction: Option<usize>, cum: usize, best: f64, tau2: f64) -> StepRecord {
        StepRecord {
            iteration,
            direction,
            n_calls: 1,
            n_calls_cum: cum,
            best_value: best,
            tau2,
            converged: true,
        }
    }

    #[test]
    fn tau2_per_cycle_and_csv() {
        let t = EstimationTrace {
            steps: vec![
                step(1, Some(0), 5, 3.0, 0.9),
                step(1, Some(1), 9, 2.0, 0.5),
                step(2, Some(0), 12, 1.5, 0.2),
                step(2, Some(1), 14, 1.25, 0.1),
            ],
            best_by_call: vec![3.0; 14],
        };
        assert_eq!(t.tau2_by_iteration(), vec![0.5, 0.1]);
        assert_eq!(t.final_value(), Some(1.25));
        let mut buf = Vec::new();
        t.write_csv("r0", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "run_id,iteration,direction,n_calls_cum,best_value,tau2");
        assert_eq!(lines[1], "r0,1,1,5,3,0.9");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn call_history_stays_monotone() {
        let mut t = EstimationTrace::default();
        t.push_calls(&[5.0, 4.0]);
        t.push_calls(&[6.0, 3.0]);
        assert_eq!(t.best_by_call, vec![5.0, 4.0, 4.0, 3.0]);
    }
}
