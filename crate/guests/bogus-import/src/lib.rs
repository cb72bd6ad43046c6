//! Imports `limes:function/missing`, which no host links.

wit_bindgen::generate!({ world: "bogus-import", path: "../wit" });

struct Bogus;

impl Guest for Bogus {
    fn run(_input: Vec<u8>) -> Result<Vec<u8>, String> {
        Ok(limes::function::missing::ping().to_le_bytes().to_vec())
    }
}

export!(Bogus);
