use gritnet_core::experiment::*;
use std::time::Instant;

fn main() {
    let mut config = ExperimentConfig::default();
    let t0 = Instant::now();
    let result = run(&config).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    for seed_rep in &result.report.per_seed {
        println!("seed {}: source rate {:.3} (diff {:.3}), target rate {:.3} (diff {:.3})", seed_rep.seed,
            seed_rep.source_graduation_rate, seed_rep.source_difficulty, seed_rep.target_graduation_rate, seed_rep.target_difficulty);
    }
    for curve in &result.curves {
        let pts: Vec<String> = curve.points.iter().map(|p| format!("w{}:{:.1}±{:.1}", p.week, p.mean_auc, p.std_auc)).collect();
        println!("{:20} {}", curve.system, pts.join("  "));
    }
    println!("ARR per week: {:?}", result.arr.per_week.iter().map(|(w, a)| format!("w{w}:{}", a.map(|v| format!("{v:.2}")).unwrap_or("-".into()))).collect::<Vec<_>>());
    println!("ARR mean: {:?}", result.arr.mean);
    let mut degen = 0; let mut total = 0;
    for s in &result.report.per_seed { for w in &s.weeks { for f in &w.folds { for t in &f.thetas { total += 1; if t.degenerate { degen += 1; } } } } }
    println!("thetas: {degen}/{total} degenerate");
    println!("ELAPSED {elapsed:.1}s");
}
