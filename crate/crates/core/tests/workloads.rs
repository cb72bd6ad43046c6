mod common;

use std::collections::HashMap;
use std::io::Cursor;
use std::sync::{Mutex, OnceLock};

use common::{executor, sandbox, wasm};
use limes_core::workloads::oracle::{self, Rgb};
use limes_core::workloads::{
    decode_grid, Filter, ImageJob, MandelbrotParams, Viewport, Workload, IMAGE_INPUT_NAME, MANDELBROT_OUTPUT_NAME,
};
use limes_core::{ComponentHandle, EpochConfig, ExecError, SandboxPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(w: Workload, dir: &std::path::Path, writable: bool, input: &[u8]) -> Result<Vec<u8>, ExecError> {
    let exec = executor();
    let handle = compiled(w);
    let policy = if writable {
        SandboxPolicy::read_write(dir)
    } else {
        SandboxPolicy::read_only(dir)
    };
    let mut inst = exec.instantiate(&handle, &policy, EpochConfig::default())?;
    inst.invoke(input).map(|(out, _)| out)
}

/// Compiling the image component dominates these tests; do it once.
fn compiled(w: Workload) -> ComponentHandle {
    static CACHE: OnceLock<Mutex<HashMap<Workload, ComponentHandle>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(h) = cache.lock().unwrap().get(&w) {
        return h.clone();
    }
    let h = executor().compile_component(&wasm(w)).unwrap();
    cache.lock().unwrap().insert(w, h.clone());
    h
}

fn png(img: &Rgb) -> Vec<u8> {
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.data.clone()).unwrap();
    let mut out = Vec::new();
    buf.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png).unwrap();
    out
}

fn unpng(bytes: &[u8]) -> Rgb {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .unwrap()
        .to_rgb8();
    Rgb::new(img.width() as usize, img.height() as usize, img.into_raw())
}

#[test]
fn oracle_fixed_points() {
    // Escape counts worked out by hand: c = 1 leaves |z| <= 2 for two steps.
    assert_eq!(oracle::escape_count(1.0, 0.0, 100), 3);
    assert_eq!(oracle::escape_count(0.0, 0.0, 100), 100);
    assert_eq!(oracle::escape_count(-1.0, 0.0, 100), 100);
    assert_eq!(oracle::escape_count(2.0, 2.0, 100), 1);
    assert_eq!(oracle::luma(255, 255, 255), 255);
    assert_eq!(oracle::luma(0, 0, 0), 0);
    assert_eq!(oracle::luma(100, 150, 200), 141);
}

#[test]
fn mandelbrot_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    for p in [
        MandelbrotParams {
            max_iter: 200,
            ..MandelbrotParams::with_size(16, 16)
        },
        MandelbrotParams {
            width: 23,
            height: 9,
            max_iter: 500,
            viewport: Viewport {
                re_min: -0.75,
                re_max: -0.7,
                im_min: 0.1,
                im_max: 0.15,
            },
        },
    ] {
        let out = run(Workload::Mandelbrot, dir.path(), false, &p.to_payload()).unwrap();
        assert_eq!(out.len(), (p.width * p.height * 2) as usize);
        assert_eq!(decode_grid(&out), oracle::mandelbrot_grid(&p));
    }
}

#[test]
fn mandelbrot_4x3_frozen() {
    let p = MandelbrotParams {
        max_iter: 50,
        ..MandelbrotParams::with_size(4, 3)
    };
    let dir = tempfile::tempdir().unwrap();
    let out = decode_grid(&run(Workload::Mandelbrot, dir.path(), false, &p.to_payload()).unwrap());
    assert_eq!(out, FROZEN_4X3);
    assert_eq!(oracle::mandelbrot_grid(&p), FROZEN_4X3);
}

// Computed independently of both implementations.
const FROZEN_4X3: [u16; 12] = [1, 3, 14, 3, 1, 50, 50, 4, 1, 3, 14, 3];

#[test]
fn mandelbrot_defaults_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(Workload::Mandelbrot, dir.path(), false, b"").unwrap();
    assert_eq!(out.len(), 800 * 600 * 2);
    for bad in [&br#"{"max_iter":0}"#[..], br#"{"max_iter":70000}"#, br#"{"viewport":{"re_min":1,"re_max":0,"im_min":0,"im_max":1}}"#, b"{"] {
        let err = run(Workload::Mandelbrot, dir.path(), false, bad).unwrap_err();
        assert_eq!(err.code(), "GuestError", "{}", String::from_utf8_lossy(bad));
    }
}

#[test]
fn mandelbrot_io_writes_the_same_grid() {
    let dir = tempfile::tempdir().unwrap();
    let p = MandelbrotParams {
        max_iter: 300,
        ..MandelbrotParams::with_size(20, 10)
    };
    let plain = run(Workload::Mandelbrot, dir.path(), false, &p.to_payload()).unwrap();
    assert!(!dir.path().join(MANDELBROT_OUTPUT_NAME).exists());
    let io = run(Workload::MandelbrotIo, dir.path(), true, &p.to_payload()).unwrap();
    assert_eq!(plain, io);

    let pgm = std::fs::read(dir.path().join(MANDELBROT_OUTPUT_NAME)).unwrap();
    let header = b"P5\n20 10\n300\n";
    assert_eq!(&pgm[..header.len()], header);
    let body: Vec<u16> = pgm[header.len()..]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    assert_eq!(body, decode_grid(&plain));
}

#[test]
fn filters_match_oracle_on_random_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11AE5);
    for _ in 0..20 {
        let (w, h) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let data: Vec<u8> = (0..w * h * 3).map(|_| rng.gen()).collect();
        let img = Rgb::new(w, h, data);
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(IMAGE_INPUT_NAME), png(&img)).unwrap();
        for filter in Filter::ALL {
            let job = ImageJob {
                filters: vec![filter],
                ..ImageJob::standard(false)
            };
            let out = run(Workload::Image, dir.path(), false, &job.to_payload()).unwrap();
            assert_eq!(unpng(&out), oracle::apply(&[filter], &img), "{filter:?} on {w}x{h}");
        }
    }
}

#[test]
fn standard_job_matches_oracle() {
    let dir = sandbox(Workload::Image);
    let input = unpng(&std::fs::read(dir.path().join(IMAGE_INPUT_NAME)).unwrap());
    let out = run(Workload::Image, dir.path(), false, &ImageJob::standard(false).to_payload()).unwrap();
    assert_eq!(unpng(&out), oracle::apply(&Filter::ALL, &input));
}

#[test]
fn image_io_output_matches_return_value() {
    let dir = sandbox(Workload::ImageIo);
    let out = run(Workload::ImageIo, dir.path(), true, &ImageJob::standard(true).to_payload()).unwrap();
    let plain = run(Workload::Image, dir.path(), false, &ImageJob::standard(false).to_payload()).unwrap();
    assert_eq!(unpng(&out), unpng(&plain));
    assert_eq!(std::fs::read(dir.path().join("output.png")).unwrap(), out);
}

#[test]
fn image_rejects_bad_jobs() {
    let dir = sandbox(Workload::Image);
    let cases = [
        r#"{"input_path":"input.png","filters":[]}"#,
        r#"{"input_path":"../input.png","filters":["invert"]}"#,
        r#"{"input_path":"missing.png","filters":["invert"]}"#,
        r#"{"input_path":"input.png","filters":["sepia"]}"#,
        r#"{"input_path":"input.png","filters":["invert"],"write_output":true}"#,
    ];
    for job in cases {
        let err = run(Workload::Image, dir.path(), true, job.as_bytes()).unwrap_err();
        assert_eq!(err.code(), "GuestError", "{job}");
    }
}
