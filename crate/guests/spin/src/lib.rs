//! Never returns. Only useful for exercising deadline interruption.

use std::hint::black_box;

wit_bindgen::generate!({ world: "function", path: "../wit" });

struct Spin;

impl Guest for Spin {
    fn run(input: Vec<u8>) -> Result<Vec<u8>, String> {
        let mut acc = input.len() as u64;
        loop {
            acc = black_box(acc.wrapping_mul(6364136223846793005).wrapping_add(1));
        }
    }
}

export!(Spin);
