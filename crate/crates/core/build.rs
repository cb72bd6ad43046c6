fn main() {
    // Recorded in the engine fingerprint.
    println!(
        "cargo:rustc-env=LIMES_TARGET_TRIPLE={}",
        std::env::var("TARGET").unwrap()
    );
}
