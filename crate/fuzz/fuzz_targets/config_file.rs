//! Config files must never panic the loader. File references resolve
//! against a directory that cannot exist, so any referenced path fails
//! with a clean I/O error instead of touching real files.

#![no_main]

use std::path::Path;

use flowguard::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = Config::from_text("fuzz", text, Path::new("/nonexistent/fuzz"));
});
