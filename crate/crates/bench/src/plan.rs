use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use limes_core::workloads::Workload;
use serde::Serialize;

pub const DEFAULT_ITERATIONS: u32 = 1000;
pub const DEFAULT_WARMUP: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Compile from bytes, then instantiate.
    ColdJit,
    /// Load a serialized artifact, then instantiate.
    ColdCached,
    /// Invoke a ready instance.
    Execution,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::ColdJit, Mode::ColdCached, Mode::Execution];

    pub fn name(self) -> &'static str {
        match self {
            Mode::ColdJit => "cold-jit",
            Mode::ColdCached => "cold-cached",
            Mode::Execution => "execution",
        }
    }

    pub fn is_cold_start(self) -> bool {
        !matches!(self, Mode::Execution)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown mode {0:?} (expected cold-jit, cold-cached or execution)")]
pub struct UnknownMode(String);

impl FromStr for Mode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMode(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BenchmarkPlan {
    pub workload: Workload,
    pub iterations: u32,
    pub mode: Mode,
    /// Discarded iterations run before sampling starts.
    pub warmup_iterations: u32,
    pub output_dir: PathBuf,
}

impl BenchmarkPlan {
    pub fn new(workload: Workload, mode: Mode) -> Self {
        BenchmarkPlan {
            workload,
            iterations: DEFAULT_ITERATIONS,
            mode,
            warmup_iterations: DEFAULT_WARMUP,
            output_dir: PathBuf::from("bench-results"),
        }
    }

    pub fn iterations(mut self, n: u32) -> Self {
        self.iterations = n;
        self
    }

    pub fn warmup(mut self, n: u32) -> Self {
        self.warmup_iterations = n;
        self
    }

    pub fn output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = dir.into();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.iterations == 0 {
            return Err("iterations must be at least 1".into());
        }
        if !Workload::BENCH.contains(&self.workload) {
            return Err(format!("{} is not a benchmark workload", self.workload));
        }
        Ok(())
    }

    /// Every benchmark workload in every mode.
    pub fn full_matrix(iterations: u32, warmup: u32, output_dir: impl Into<PathBuf>) -> Vec<Self> {
        let dir = output_dir.into();
        Workload::BENCH
            .into_iter()
            .flat_map(|w| Mode::ALL.map(|m| (w, m)))
            .map(|(w, m)| {
                BenchmarkPlan::new(w, m)
                    .iterations(iterations)
                    .warmup(warmup)
                    .output_dir(dir.clone())
            })
            .collect()
    }
}

impl fmt::Display for BenchmarkPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.workload, self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("warm".parse::<Mode>().is_err());
    }

    #[test]
    fn defaults() {
        let p = BenchmarkPlan::new(Workload::Noop, Mode::ColdJit);
        assert_eq!((p.iterations, p.warmup_iterations), (1000, 10));
        assert!(p.validate().is_ok());
        assert!(p.clone().iterations(0).validate().is_err());
        assert!(BenchmarkPlan::new(Workload::Spin, Mode::Execution).validate().is_err());
    }

    #[test]
    fn matrix_covers_every_pair() {
        let plans = BenchmarkPlan::full_matrix(5, 0, "out");
        assert_eq!(plans.len(), 15);
        assert!(plans.iter().all(|p| p.iterations == 5 && p.validate().is_ok()));
    }
}
