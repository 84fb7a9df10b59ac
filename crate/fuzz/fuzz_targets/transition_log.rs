#![no_main]

use abworld::worldmodel::persist::{parse_transition_line, read_transitions, write_transitions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for line in text.lines() {
            let _ = parse_transition_line(line);
        }
    }
    if let Ok(log) = read_transitions(data) {
        let mut out = Vec::new();
        write_transitions(&mut out, &log).expect("writes to memory");
        assert_eq!(
            read_transitions(out.as_slice()).expect("written log reads back"),
            log
        );
    }
});
