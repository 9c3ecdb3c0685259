#![no_main]

use libfuzzer_sys::fuzz_target;
use tractor_mpc_cli::steps_csv::{read_steps, write_rows};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_steps(data) else { return };
    // anything accepted must survive a write and re-read unchanged
    let mut first = Vec::new();
    write_rows(&mut first, &rows).expect("write");
    let again = read_steps(first.as_slice()).expect("re-read of written rows");
    assert_eq!(again.len(), rows.len());
    let mut second = Vec::new();
    write_rows(&mut second, &again).expect("write");
    assert_eq!(first, second);
});
