//! Trains a teacher, plain students and distilled students on a
//! planted-topic corpus and prints median NPMI per variant.
//!
//! `cargo run --release -p wkd --example synthetic -- [runs] [corpus_seed] [alpha] [temperature]`

use wkd::distill::KdConfig;
use wkd::experiment::seed_group;
use wkd::synth::SynthConfig;
use wkd::training::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize| args.get(i).filter(|s| s.as_str() != "-");
    let runs: usize = arg(0).map_or(Ok(5), |s| s.parse())?;
    let seed: u64 = arg(1).map_or(Ok(0), |s| s.parse())?;
    let alpha: f64 = arg(2).map_or(Ok(0.5), |s| s.parse())?;
    let temperature: f64 = arg(3).map_or(Ok(2.0), |s| s.parse())?;

    let synth = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let teacher_cfg = TrainConfig::default();
    let student_cfg = TrainConfig {
        seed: 1000,
        ..TrainConfig::default()
    };
    let kd = KdConfig {
        alpha,
        temperature,
        ..KdConfig::default()
    };
    for v in seed_group(&synth, runs, &teacher_cfg, &student_cfg, &kd)? {
        let shown: Vec<String> = v.npmi.iter().map(|x| format!("{x:.4}")).collect();
        println!("{:<6} median npmi {:.4}  runs [{}]", v.tag, v.median, shown.join(", "));
    }
    Ok(())
}
