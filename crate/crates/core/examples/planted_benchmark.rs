//! Runs every generator on the planted-pattern dataset and prints the
//! summary table.
//!
//! `cargo run --release --example planted_benchmark -- [instances] [jobs] [seed]`

use cfx_core::evaluation::{run_benchmark, summary_table, BenchmarkConfig, BenchmarkDataset};
use cfx_core::generator::{GeneratorSpec, GENERATOR_IDS};
use cfx_core::synthetic::PlantedPattern;

fn main() -> cfx_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let instances = args.next().and_then(|a| a.parse().ok()).unwrap_or(25);
    let jobs = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let train = PlantedPattern::default().generate()?;
    let test = PlantedPattern {
        seed: 1,
        ..PlantedPattern::default()
    }
    .generate()?;
    let config = BenchmarkConfig {
        datasets: vec![BenchmarkDataset {
            name: "planted".into(),
            train,
            test,
        }],
        generators: GENERATOR_IDS
            .iter()
            .map(|id| {
                let mut spec: GeneratorSpec = id.parse()?;
                if spec.id() == "discord" {
                    // Windows must be wide enough to contain the planted bump.
                    spec.set("m", "16")?;
                }
                Ok(spec)
            })
            .collect::<cfx_core::Result<_>>()?,
        instances,
        jobs,
        seed,
        ..BenchmarkConfig::default()
    };
    let start = std::time::Instant::now();
    let report = run_benchmark(&config)?;
    print!("{}", summary_table(&report));
    println!("accuracy: {:?}", report.metadata.classifier_accuracy);
    println!("elapsed: {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
