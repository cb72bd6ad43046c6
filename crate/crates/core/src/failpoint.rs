//! Process-abort injection points for crash-consistency testing.
//!
//! Setting `LIMES_FAILPOINT=<name>` makes the matching [`hit`] call abort the
//! process on the spot, the same way a `kill -9` would.

pub const ENV: &str = "LIMES_FAILPOINT";

pub fn hit(name: &str) {
    if let Some(target) = std::env::var_os(ENV) {
        if target == name {
            log::error!("failpoint {name} triggered, aborting");
            std::process::abort();
        }
    }
}
