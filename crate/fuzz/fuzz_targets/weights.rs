#![no_main]

use abworld::worldmodel::persist::decode_weights;
use abworld::worldmodel::{GenerativeModel, ParametricModel};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_weights(data);
    if let Ok((model, header)) = ParametricModel::from_bytes(data) {
        let bytes = model.to_bytes(header.vocab.as_ref());
        assert!(ParametricModel::from_bytes(&bytes).is_ok());
    }
    let _ = GenerativeModel::from_bytes(data);
});
