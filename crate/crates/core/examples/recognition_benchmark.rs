//! Trains K-net and N-net on a synthetic feature world and prints the
//! 1-vs-20 table. Usage: recognition_benchmark [seed] [cases]

use graspkit::evaluation::{run_1v20_benchmark, BenchmarkTable, RandomPipeline, SingleModelPipeline, TwoStagePipeline};
use graspkit::recognition::synthetic::{benchmark_train_config, SyntheticWorld, WorldParams, BENCHMARK_LAMBDA};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cases: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(200);
    let world = SyntheticWorld::generate(WorldParams::default(), seed).features;
    let config = world.train_pipelines(benchmark_train_config(seed), BENCHMARK_LAMBDA).expect("training");
    let cases = world.benchmark_cases(cases, 10, seed ^ 0x5eed).expect("cases");
    let rows = vec![
        run_1v20_benchmark(&cases, &mut SingleModelPipeline { name: "N-net".into(), model: &config.nnet, catalog: &world.catalog }).unwrap(),
        run_1v20_benchmark(&cases, &mut SingleModelPipeline { name: "K-net".into(), model: &config.knet, catalog: &world.catalog }).unwrap(),
        run_1v20_benchmark(&cases, &mut TwoStagePipeline { config: &config, catalog: &world.catalog }).unwrap(),
        run_1v20_benchmark(&cases, &mut RandomPipeline::new(seed)).unwrap(),
    ];
    println!("k = {:.4}", config.k_threshold);
    print!("{}", BenchmarkTable(&rows));
}
