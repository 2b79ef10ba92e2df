//! Runs the toy adaptation comparison for one seed and prints a summary.
//!
//! cargo run --release -p sduda-core --example toy_benchmark -- 0

use std::time::Instant;

use sduda::dataset::{generate_domain, Domain, GenerateConfig};
use sduda::distill::LossSpace;
use sduda::pipeline::{evaluate, run_from_step1, run_step1, PipelineConfig, TrainData};

fn main() -> sduda::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(0);
    let src = generate_domain(&GenerateConfig::benchmark(Domain::Source, 1000 + seed))?;
    let mut tcfg = GenerateConfig::benchmark(Domain::Target, 2000 + seed);
    if let Some(b) = args.get(3) {
        let b: Vec<f64> = b.split(',').map(|s| s.parse().unwrap()).collect();
        tcfg.domain.scale_bias = [b[0], b[1], b[2]];
    }
    let tgt = generate_domain(&tcfg)?;
    let data = TrainData {
        source: src.train,
        target: tgt.train,
        target_test: tgt.test,
    };
    let mut cfg = PipelineConfig::benchmark();
    cfg.seed = seed;
    if let Some(e) = args.get(1) {
        cfg.schedule.step1_epochs = e.parse().unwrap();
    }
    if let Some(e) = args.get(2) {
        cfg.schedule.epochs_per_round = e.parse().unwrap();
    }

    let t = Instant::now();
    let mut ce = cfg.clone();
    ce.toggles.sd_step1 = false;
    let base = run_step1(&ce, &data)?;
    let base_acc = evaluate(&base.dual.student, &data.target_test, cfg.eval_batch)?;
    println!("ce       pseudo {:.3} test {:.3} ({:?})", base.init_pseudo_accuracy, base_acc, t.elapsed());

    let t = Instant::now();
    let mut kd = cfg.clone();
    kd.distill.loss_space = LossSpace::Output;
    let kd1 = run_step1(&kd, &data)?;
    println!("ce+kd    pseudo {:.3} ({:?})", kd1.init_pseudo_accuracy, t.elapsed());

    let t = Instant::now();
    let sd = run_step1(&cfg, &data)?;
    let sd_acc = evaluate(&sd.dual.student, &data.target_test, cfg.eval_batch)?;
    println!("ce+sd    pseudo {:.3} test {:.3} ({:?})", sd.init_pseudo_accuracy, sd_acc, t.elapsed());

    let t = Instant::now();
    let full = run_from_step1(&cfg, &data, &sd)?;
    for r in &full.rounds {
        println!(
            "  round {} theta {:.2} pseudo {:.3} -> {:.3} deg {:?}",
            r.round, r.theta, r.pseudo_acc_before, r.pseudo_acc_after, r.mean_degree
        );
    }
    println!("full     test {:.3} ({:?})", full.target_test_accuracy, t.elapsed());

    let t = Instant::now();
    let mut naive = cfg.clone();
    naive.toggles.sd_step2 = false;
    naive.toggles.refinement = false;
    let st = run_from_step1(&naive, &data, &sd)?;
    println!("naive-st test {:.3} ({:?})", st.target_test_accuracy, t.elapsed());
    Ok(())
}
