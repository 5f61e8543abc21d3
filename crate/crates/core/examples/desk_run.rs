//! Synthetic cohort, both training steps and test-set scoring at desk scale.

use std::time::Instant;

use deephhf::cohort::Split;
use deephhf::eval::auroc;
use deephhf::synthetic::{build_cohort, CohortSpec};
use deephhf::training::{encoder_score, score_recording, train_step1, train_step2, Aggregation, RunConfig};
use deephhf::explain::{circadian_density, grad_attention_rollout, RolloutConfig};
use deephhf::sampling::{STEP2_SEGMENT, WINDOW_LEN};
use deephhf::Model;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t0 = Instant::now();
    let env = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let spec = CohortSpec {
        bursts_per_day: env("BURSTS", 6.0),
        burst_minutes: env("MINUTES", 30.0),
        ..CohortSpec::default()
    };
    let cohort = build_cohort(&spec)?;
    println!("cohort built in {:.1?}", t0.elapsed());
    let mut cfg = RunConfig::desk();
    cfg.step1.lr = env("LR1", cfg.step1.lr);
    cfg.step1.max_epochs = Some(env("EP1", 6.0) as usize);
    cfg.step2.lr = env("LR2", cfg.step2.lr);
    cfg.step2.max_epochs = Some(env("EP2", 12.0) as usize);
    let (train, val, test) = (cohort.split(Split::Train), cohort.split(Split::Validation), cohort.split(Split::Test));

    let t = Instant::now();
    let model = Model::new(cfg.model.clone(), cfg.step1.seed)?;
    let s1 = train_step1(model, &train, &val, &cohort.recordings, &cfg.step1)?;
    for m in &s1.log {
        println!("step1 {m:?}");
    }
    println!("step1 took {:.1?}", t.elapsed());

    let t = Instant::now();
    let s2 = train_step2::<f32, _>(&s1.checkpoint("encoder"), &train, &val, &cohort.recordings, &cfg.step2)?;
    for m in &s2.log {
        println!("step2 {m:?}");
    }
    println!("step2 took {:.1?}", t.elapsed());
    if let Ok(dir) = std::env::var("SAVE") {
        std::fs::create_dir_all(&dir)?;
        s1.checkpoint("encoder").save(&std::path::Path::new(&dir).join("encoder.ckpt"))?;
        s2.checkpoint("model").save(&std::path::Path::new(&dir).join("model.ckpt"))?;
    }

    let labels: Vec<bool> = test.iter().map(|l| l.label.is_hf()).collect();
    let mut full = Vec::new();
    let mut enc = Vec::new();
    for l in &test {
        let rec = &cohort.recordings[&l.exam_id];
        full.push(score_recording(&s2.model, rec)?);
        enc.push(encoder_score(&s1.model, rec, Aggregation::MeanLogit)?);
    }
    println!("test auroc full {:.3} encoder {:.3}", auroc(&full, &labels)?, auroc(&enc, &labels)?);
    println!("total {:.1?}", t0.elapsed());

    let t = Instant::now();
    let mut profiles = Vec::new();
    for (l, &z) in test.iter().zip(&full) {
        let rec = &cohort.recordings[&l.exam_id];
        let p = grad_attention_rollout(&s2.model, rec, &RolloutConfig::default())?;
        if l.label.is_hf() {
            let truth = &cohort.truths[&l.exam_id];
            let in_burst: f64 = p
                .mass
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    let a = i * STEP2_SEGMENT;
                    truth.bursts.iter().any(|&(s, e)| a < e && a + WINDOW_LEN > s)
                })
                .map(|(_, m)| m)
                .sum();
            let top = p.mass.iter().copied().fold(0.0, f64::max);
            println!("{} score {:.3} burst mass {:.3} max {:.4}", l.exam_id, z, in_burst, top);
        }
        profiles.push(p);
    }
    let d = circadian_density(&profiles, 30);
    println!("interval95 {:?} interval99 {:?}", d.interval95, d.interval99);
    println!("explain took {:.1?}", t.elapsed());
    Ok(())
}
