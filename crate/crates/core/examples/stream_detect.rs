//! Feeds a synthetic recording to the incremental detector one window at a
//! time and prints events as NDJSON the moment they close.
//!
//! cargo run --release --example stream_detect -- model.ecn
//!
//! `model.ecn` can come from the `train_eval` example or `earcough train`.

use earcough::dsp;
use earcough::nn;
use earcough::stream::{self, StreamDetector};
use earcough::synth::{self, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: stream_detect <model.ecn>");
        std::process::exit(2);
    };
    let (spec, params) = nn::load_model(&path)?;
    let (rec, truth) = synth::cough_track(&SynthConfig::default(), 30.0, 5, 3);
    let rec = dsp::decimate(&rec, spec.sample_rate_hz)?;

    let mut det = StreamDetector::new(&spec, &params, 0.5, 0);
    let mut out = std::io::stdout().lock();
    for w in dsp::slice_windows(&rec) {
        if let Some(e) = det.step(&w)? {
            stream::write_ndjson(&[e], &mut out)?;
        }
    }
    if let Some(e) = det.flush() {
        stream::write_ndjson(&[e], &mut out)?;
    }
    eprintln!("detector memory: {} bytes", det.memory_footprint());
    eprintln!("annotated coughs:");
    for a in truth {
        eprintln!("  {:.2} - {:.2} s", a.start_s, a.end_s);
    }
    Ok(())
}
