// Scratch harness for calibrating training-dynamics defaults.

use virl_core::sim::{
    run_experiment_with_observer, ExperimentConfig, IterationRow, RewardMode,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: Vec<u64> = if args.len() > 1 {
        args[1].split(',').map(|s| s.parse().unwrap()).collect()
    } else {
        vec![0]
    };
    let iters: usize = if args.len() > 2 { args[2].parse().unwrap() } else { 300 };
    let lr: f64 = if args.len() > 3 { args[3].parse().unwrap() } else { -1.0 };
    let stop_init: f64 = if args.len() > 4 { args[4].parse().unwrap() } else { f64::NAN };

    for &seed in &seeds {
        for mode in [RewardMode::OutcomeOnly, RewardMode::NaiveStepwise, RewardMode::Virl] {
            let mut cfg = ExperimentConfig::default();
            cfg.seed = seed;
            cfg.reward_mode = mode;
            cfg.iterations = iters;
            if lr > 0.0 {
                cfg.lr = lr;
            }
            if stop_init.is_finite() {
                cfg.init.stop_logit = stop_init;
            }
            let start = std::time::Instant::now();
            let mut snapshots: Vec<(usize, f64, f64, f64)> = Vec::new();
            let log = run_experiment_with_observer(&cfg, |d| {
                if (d.iteration + 1) % 50 == 0 || d.iteration == 0 || d.iteration == 9 {
                    let max_anchor = d
                        .params
                        .anchor_logits
                        .iter()
                        .cloned()
                        .fold(f64::NEG_INFINITY, f64::max);
                    let mean_anchor = d.params.anchor_logits.iter().sum::<f64>()
                        / d.params.anchor_logits.len() as f64;
                    snapshots.push((d.iteration, d.params.stop_logit, max_anchor, mean_anchor));
                }
            })
            .unwrap();
            let elapsed = start.elapsed().as_secs_f64();
            let tail = 25.min(log.rows.len());
            let last = &log.rows[log.rows.len() - tail..];
            let avg = |f: fn(&IterationRow) -> f64| last.iter().map(f).sum::<f64>() / tail as f64;
            println!(
                "seed {seed} {mode:>14}: acc={:.3} count={:.3} rat_acc={:.3} wrong_w={:.3} reward={:.3}  ({elapsed:.1}s)",
                avg(|r| r.answer_acc),
                avg(|r| r.rationale_count),
                avg(|r| r.rationale_acc),
                avg(|r| r.wrong_with_rationale),
                avg(|r| r.mean_reward),
            );
            for (it, stop, max_a, mean_a) in &snapshots {
                let row = &log.rows[*it];
                println!(
                    "    it {:>3}: stop={:+.2} max_anchor={:+.2} mean_anchor={:+.2} | acc={:.3} count={:.3} rat_acc={:.3}",
                    it, stop, max_a, mean_a, row.answer_acc, row.rationale_count, row.rationale_acc
                );
            }
        }
    }
}
