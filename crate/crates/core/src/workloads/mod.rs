//! The bundled evaluation functions: where their built components live, how
//! their inputs are encoded, and host-side reference implementations.

pub mod oracle;

use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const WORKLOADS_DIR_ENV: &str = "LIMES_WORKLOADS_DIR";
/// Image fixture, relative to the workloads directory.
pub const IMAGE_FIXTURE: &str = "fixtures/input.png";
/// Name under which the fixture is placed in a sandbox.
pub const IMAGE_INPUT_NAME: &str = "input.png";
pub const IMAGE_OUTPUT_NAME: &str = "output.png";
/// Written by the mandelbrot I/O variant.
pub const MANDELBROT_OUTPUT_NAME: &str = "mandelbrot.pgm";
/// Test-only component importing an interface no host provides.
pub const BOGUS_IMPORT_FILE: &str = "bogus-import.wasm";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Workload {
    Noop,
    Mandelbrot,
    MandelbrotIo,
    Image,
    ImageIo,
    /// Never returns; exercises deadline interruption.
    Spin,
}

impl Workload {
    /// The benchmark matrix, in reporting order.
    pub const BENCH: [Workload; 5] = [
        Workload::Noop,
        Workload::Mandelbrot,
        Workload::MandelbrotIo,
        Workload::Image,
        Workload::ImageIo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Workload::Noop => "noop",
            Workload::Mandelbrot => "mandelbrot",
            Workload::MandelbrotIo => "mandelbrot-io",
            Workload::Image => "image",
            Workload::ImageIo => "image-io",
            Workload::Spin => "spin",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.wasm", self.name())
    }

    pub fn writes_output(self) -> bool {
        matches!(self, Workload::MandelbrotIo | Workload::ImageIo)
    }

    pub fn needs_image_fixture(self) -> bool {
        matches!(self, Workload::Image | Workload::ImageIo)
    }

    /// Payload used by the benchmark harness.
    pub fn default_input(self) -> Vec<u8> {
        match self {
            Workload::Noop | Workload::Spin => b"hello".to_vec(),
            Workload::Mandelbrot | Workload::MandelbrotIo => MandelbrotParams::default().to_payload(),
            Workload::Image => ImageJob::standard(false).to_payload(),
            Workload::ImageIo => ImageJob::standard(true).to_payload(),
        }
    }

    pub fn load(self, dir: &Path) -> std::io::Result<Vec<u8>> {
        std::fs::read(dir.join(self.file_name()))
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown workload {0:?}")]
pub struct UnknownWorkload(String);

impl FromStr for Workload {
    type Err = UnknownWorkload;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Workload::Spin]
            .into_iter()
            .chain(Workload::BENCH)
            .find(|w| w.name() == s)
            .ok_or_else(|| UnknownWorkload(s.to_string()))
    }
}

/// `$LIMES_WORKLOADS_DIR`, else `./workloads` when present, else the
/// `workloads/` directory of this source tree.
pub fn workloads_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(WORKLOADS_DIR_ENV) {
        return PathBuf::from(dir);
    }
    let local = PathBuf::from("workloads");
    if local.join(Workload::Noop.file_name()).is_file() {
        return local;
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../workloads")
}

/// Copies the files `workload` reads into a sandbox directory.
pub fn seed_sandbox(workload: Workload, workloads: &Path, sandbox: &Path) -> std::io::Result<()> {
    if workload.needs_image_fixture() {
        std::fs::copy(workloads.join(IMAGE_FIXTURE), sandbox.join(IMAGE_INPUT_NAME))?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Default for Viewport {
    fn default() -> Self {
        Viewport {
            re_min: -2.5,
            re_max: 1.0,
            im_min: -1.0,
            im_max: 1.0,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PayloadError {
    #[error("{0}")]
    Invalid(String),
}

/// Input of the mandelbrot workloads, sent as JSON.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MandelbrotParams {
    pub width: u32,
    pub height: u32,
    pub max_iter: u32,
    pub viewport: Viewport,
}

impl Default for MandelbrotParams {
    fn default() -> Self {
        MandelbrotParams {
            width: 800,
            height: 600,
            max_iter: 1000,
            viewport: Viewport::default(),
        }
    }
}

impl MandelbrotParams {
    pub fn with_size(width: u32, height: u32) -> Self {
        MandelbrotParams {
            width,
            height,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PayloadError> {
        let invalid = |m: &str| Err(PayloadError::Invalid(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return invalid("width and height must be positive");
        }
        // Counts travel as u16.
        if self.max_iter == 0 || self.max_iter > u16::MAX as u32 {
            return invalid("max_iter must be in 1..=65535");
        }
        let v = self.viewport;
        if !(v.re_min < v.re_max && v.im_min < v.im_max) {
            return invalid("viewport bounds must be strictly increasing");
        }
        Ok(())
    }

    pub fn to_payload(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("params serialize")
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, PayloadError> {
        let p: MandelbrotParams =
            serde_json::from_slice(bytes).map_err(|e| PayloadError::Invalid(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

/// Splits the guest's output into row-major little-endian `u16` counts.
pub fn decode_grid(bytes: &[u8]) -> Vec<u16> {
    bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Filter {
    Grayscale,
    Invert,
    Blur3x3,
}

impl Filter {
    pub const ALL: [Filter; 3] = [Filter::Grayscale, Filter::Invert, Filter::Blur3x3];
}

/// Input of the image workloads, sent as JSON.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageJob {
    pub input_path: String,
    pub filters: Vec<Filter>,
    pub write_output: bool,
    pub output_path: String,
}

impl ImageJob {
    /// The fixture through every filter.
    pub fn standard(write_output: bool) -> Self {
        ImageJob {
            input_path: IMAGE_INPUT_NAME.to_string(),
            filters: Filter::ALL.to_vec(),
            write_output,
            output_path: IMAGE_OUTPUT_NAME.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), PayloadError> {
        if self.filters.is_empty() {
            return Err(PayloadError::Invalid("filters must not be empty".into()));
        }
        for p in [&self.input_path, &self.output_path] {
            if p.is_empty() || Path::new(p).components().any(|c| c == Component::ParentDir) {
                return Err(PayloadError::Invalid(format!("path {p:?} escapes the sandbox")));
            }
        }
        Ok(())
    }

    pub fn to_payload(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("job serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_names_round_trip() {
        for w in Workload::BENCH.into_iter().chain([Workload::Spin]) {
            assert_eq!(w.name().parse::<Workload>().unwrap(), w);
        }
        assert!("firecracker".parse::<Workload>().is_err());
    }

    #[test]
    fn mandelbrot_params_round_trip() {
        let p = MandelbrotParams::default();
        assert_eq!(MandelbrotParams::from_payload(&p.to_payload()).unwrap(), p);
        let json = String::from_utf8(p.to_payload()).unwrap();
        assert!(json.contains("\"re_min\":-2.5"), "{json}");
    }

    #[test]
    fn mandelbrot_params_validation() {
        let mut p = MandelbrotParams::default();
        p.viewport.re_min = 2.0;
        assert!(p.validate().is_err());
        assert!(MandelbrotParams::with_size(0, 4).validate().is_err());
        let p = MandelbrotParams {
            max_iter: 70_000,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn image_job_rejects_escapes() {
        let mut job = ImageJob::standard(false);
        assert!(job.validate().is_ok());
        job.input_path = "../etc/passwd".into();
        assert!(job.validate().is_err());
        let mut job = ImageJob::standard(false);
        job.filters.clear();
        assert!(job.validate().is_err());
        let json = String::from_utf8(ImageJob::standard(true).to_payload()).unwrap();
        assert!(json.contains("\"filters\":[\"grayscale\",\"invert\",\"blur3x3\"]"), "{json}");
    }

    #[test]
    fn grid_decoding_is_little_endian() {
        assert_eq!(decode_grid(&[1, 0, 0, 1]), vec![1, 256]);
    }
}
