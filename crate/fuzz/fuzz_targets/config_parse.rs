#![no_main]

use libfuzzer_sys::fuzz_target;
use tractor_mpc_cli::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = parse_config(text) else { return };
    // conversion may reject values but must not panic
    let _ = cfg.sim_config().validate();
    let _ = cfg.noise_config().validate();
    let _ = cfg.trajectory();
});
