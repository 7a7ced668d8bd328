//! Writes a model file, reads it back and shows how damaged files are
//! reported.
//!
//! cargo run --example model_file

use earcough::nn::{self, ModelParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = nn::default_spec(16000)?;
    let params = ModelParams::init(&spec, 42);
    let bytes = nn::model_to_bytes(&spec, &params)?;
    println!("{} layers, {} parameters, {} bytes", spec.layers.len(), spec.num_params(), bytes.len());
    println!("header: {:02x?}", &bytes[..16]);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ecn");
    nn::save_model(&spec, &params, &path)?;
    let (spec2, params2) = nn::load_model(&path)?;
    println!("round trip equal: {}", spec2 == spec && params2 == params);

    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x10;
    let damaged: [(&str, &[u8]); 4] = [
        ("wrong magic", &[&b"XXXX"[..], &bytes[4..]].concat()),
        ("cut short", &bytes[..bytes.len() / 3]),
        ("one bit flipped", &flipped),
        ("empty", &[]),
    ];
    for (name, b) in damaged {
        match nn::model_from_bytes(b) {
            Ok(_) => println!("{name:<16} accepted"),
            Err(e) => println!("{name:<16} {e}"),
        }
    }
    Ok(())
}
