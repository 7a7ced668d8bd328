//! Compute and storage cost of the reference model at every supported rate,
//! with a per-layer breakdown at 8 kHz.
//!
//! cargo run --example resource_table

use earcough::evalkit;
use earcough::nn;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows = evalkit::resource_table(&earcough::SUPPORTED_RATES)?;
    print!("{}", evalkit::resource_csv(&rows));

    let p = nn::profile(&nn::default_spec(8000)?);
    println!("\n8 kHz layers:");
    println!("{:<14} {:>8} {:>8} {:>8} {:>12}", "kind", "channels", "length", "params", "macs");
    for l in &p.layers {
        println!("{:<14} {:>8} {:>8} {:>8} {:>12}", format!("{:?}", l.kind), l.out_channels, l.out_len, l.params, l.macs);
    }
    println!(
        "\nparams {} ({} B), input {} B, peak activations {} B, total {} B",
        p.params, p.param_bytes, p.input_bytes, p.peak_activation_bytes, p.space_bytes
    );
    Ok(())
}
