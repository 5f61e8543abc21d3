//! Acceptance suite: one PASS/FAIL line per criterion, then a single verdict.
//!
//! Everything runs inside one test so the timed criteria are not competing
//! with each other for the CPU.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use deephhf::cohort::{ExamLabel, Label, Split};
use deephhf::eval::{auroc, incidence_and_nns, kaplan_meier, logrank, risk_groups, SurvivalRow};
use deephhf::explain::{
    circadian_density, cluster_beats, grad_attention_rollout, AttentionProfile, BeatMatrix, BeatSource, ClusterConfig,
    RolloutConfig, BEAT_LEN,
};
use deephhf::model::gradcheck::{check_gradients, Probe};
use deephhf::model::{is_encoder_param, weighted_bce, ModelConfig};
use deephhf::sampling::{plan_step1, plan_step2, STEP2_SEGMENT};
use deephhf::synthetic::{build_cohort, CohortSpec, SyntheticCohort};
use deephhf::training::{
    encoder_score, score_recording, train_step1, train_step2, Aggregation, EpochMetrics, RunConfig,
};
use deephhf::{Model, Model64};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(t: Duration, limit: Duration, detail: String) -> Outcome {
    check(t < limit, format!("{detail}; {t:.2?} (limit {limit:?})"))
}

// 1 ------------------------------------------------------------------------

fn nns_reproduction() -> Outcome {
    let t = Instant::now();
    // (person-years, events) pooled to 41.5, 85.0 and 124.0 per 1000 person-years.
    let cases = [(vec![(1000.0, 40), (1000.0, 43)], 41.5, 61), (vec![(1000.0, 85)], 85.0, 30), (vec![(500.0, 62)], 124.0, 21)];
    let mut got = Vec::new();
    let mut ok = true;
    for (rows, rate, want) in cases {
        let r = incidence_and_nns(&rows, 0.60).map_err(|e| e.to_string())?;
        ok &= (r.per_1000_py - rate).abs() < 1e-12 && r.nns == Some(want);
        got.push(format!("{:.1}->{:?}", r.per_1000_py, r.nns));
    }
    let detail = format!("{} (want 61, 30, 21)", got.join(", "));
    if !ok {
        return Err(detail);
    }
    within(t.elapsed(), Duration::from_secs(1), detail)
}

// 2 ------------------------------------------------------------------------

fn window_counts() -> Outcome {
    let t = Instant::now();
    for seed in 0..1000u64 {
        let id = format!("ex{seed}");
        let p1 = plan_step1(&id, seed);
        if p1.offsets.len() != 480 {
            return Err(format!("seed {seed}: step-1 plan has {} offsets", p1.offsets.len()));
        }
        let p2 = plan_step2(&id, seed);
        if p2.offsets.len() != 720 {
            return Err(format!("seed {seed}: step-2 plan has {} offsets", p2.offsets.len()));
        }
        if let Some(w) = p2.offsets.windows(2).find(|w| w[1] - w[0] != 15360) {
            return Err(format!("seed {seed}: step-2 stride {}", w[1] - w[0]));
        }
    }
    within(t.elapsed(), Duration::from_secs(10), "1000 seeds: 480 step-1 offsets, 720 step-2 offsets at stride 15360".into())
}

// 3 ------------------------------------------------------------------------

fn gradient_exactness() -> Outcome {
    let t = Instant::now();
    let model = Model64::new(ModelConfig::default(), 3).map_err(|e| e.to_string())?;
    let probe = Probe::new(&model, 2, 12, 4);
    let checks = check_gradients(&model, &probe, 50, 50, 1e-4, 5);
    let enc = checks.iter().filter(|c| is_encoder_param(&c.name)).count();
    let head = checks.len() - enc;
    let worst = checks.iter().max_by(|a, b| a.rel_err(1e-8).total_cmp(&b.rel_err(1e-8))).expect("checks");
    let max_err = worst.rel_err(1e-8);
    let detail = format!(
        "{enc} encoder + {head} head parameters, max relative error {max_err:.2e} at {}[{}]",
        worst.name, worst.index
    );
    if enc < 50 || head < 50 || max_err >= 1e-4 {
        return Err(detail);
    }
    within(t.elapsed(), Duration::from_secs(120), detail)
}

// 4 ------------------------------------------------------------------------

fn pair_count_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn auroc_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut with_ties = 0;
    for trial in 0..200 {
        let n = rng.random_range(2..=50);
        let levels = rng.random_range(2..=12);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.37).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        with_ties += usize::from(sorted.len() < n);
        let a = auroc(&scores, &labels).map_err(|e| e.to_string())?;
        let b = pair_count_auroc(&scores, &labels);
        if a != b {
            return Err(format!("cohort {trial}: rank {a} vs pair count {b}"));
        }
    }
    within(
        t.elapsed(),
        Duration::from_secs(10),
        format!("200 cohorts ({with_ties} with ties) agree exactly"),
    )
}

// 5 ------------------------------------------------------------------------

fn row(time: f64, event: bool) -> SurvivalRow {
    SurvivalRow { time, event }
}

fn survival_oracles() -> Outcome {
    // Product limit by hand: 6 at risk, event at 1 -> 5/6; censor at 2;
    // 4 at risk, 2 events at 3 -> 5/6 * 2/4; censor at 4; 1 at risk, event at 5 -> 0.
    let km = kaplan_meier(&[row(1.0, true), row(2.0, false), row(3.0, true), row(3.0, true), row(4.0, false), row(5.0, true)]);
    let at = |t: f64| km.iter().find(|s| s.time == t).map(|s| s.survival);
    let want = [(1.0, 5.0 / 6.0), (3.0, 5.0 / 12.0), (5.0, 0.0)];
    let km_ok = want.iter().all(|&(t, s)| at(t).is_some_and(|v| (v - s).abs() < 1e-9));

    // Hand computation: O_A = 2, E_A = 1/2 + 3/5 + 1/2 + 2/3, V = 433/450, so
    // chi2 = (4/15)^2 / V = 32/433; p = erfc(sqrt(chi2 / 2)) at 128-bit precision.
    let a = [row(6.0, true), row(10.0, true), row(12.0, false)];
    let b = [row(4.0, true), row(8.0, true), row(14.0, false)];
    let lr = logrank(&a, &b);
    let lr_ok = (lr.chi2 - 32.0 / 433.0).abs() < 1e-6 && (lr.p - 0.785_736_537_959_912_9).abs() < 1e-6;
    let same = logrank(&a, &a);
    let same_ok = same.p == 1.0;
    check(
        km_ok && lr_ok && same_ok,
        format!(
            "KM {:?}; logrank chi2 {:.9} p {:.9} (want {:.9}, 0.785736538); identical groups p = {}",
            km.iter().map(|s| s.survival).collect::<Vec<_>>(),
            lr.chi2,
            lr.p,
            32.0 / 433.0,
            same.p
        ),
    )
}

// 6, 7, 12 -----------------------------------------------------------------

struct DeskRun {
    cohort: SyntheticCohort,
    model: Model,
    step1_log: Vec<EpochMetrics>,
    step2_log: Vec<EpochMetrics>,
    full: Vec<f64>,
    encoder: Vec<f64>,
    labels: Vec<bool>,
    train_time: Duration,
}

fn desk_run() -> Result<DeskRun, String> {
    let cohort = build_cohort(&CohortSpec::default()).map_err(|e| e.to_string())?;
    let cfg = RunConfig::desk();
    let (train, val, test) = (cohort.split(Split::Train), cohort.split(Split::Validation), cohort.split(Split::Test));
    let t = Instant::now();
    let model = Model::new(cfg.model.clone(), cfg.step1.seed).map_err(|e| e.to_string())?;
    let s1 = train_step1(model, &train, &val, &cohort.recordings, &cfg.step1).map_err(|e| e.to_string())?;
    let s2 = train_step2::<f32, _>(&s1.checkpoint("encoder"), &train, &val, &cohort.recordings, &cfg.step2)
        .map_err(|e| e.to_string())?;
    let train_time = t.elapsed();
    let mut full = Vec::new();
    let mut encoder = Vec::new();
    for l in &test {
        let rec = &cohort.recordings[&l.exam_id];
        full.push(score_recording(&s2.model, rec).map_err(|e| e.to_string())?);
        encoder.push(encoder_score(&s1.model, rec, Aggregation::MeanLogit).map_err(|e| e.to_string())?);
    }
    let labels = test.iter().map(|l| l.label.is_hf()).collect();
    Ok(DeskRun {
        model: s2.model,
        step1_log: s1.log,
        step2_log: s2.log,
        full,
        encoder,
        labels,
        train_time,
        cohort,
    })
}

fn synthetic_end_to_end(run: &DeskRun) -> Outcome {
    let spec = &run.cohort.spec;
    let full = auroc(&run.full, &run.labels).map_err(|e| e.to_string())?;
    let enc = auroc(&run.encoder, &run.labels).map_err(|e| e.to_string())?;
    let detail = format!(
        "{}/{}/{} recordings; test AUROC full {full:.3}, encoder mean-logit {enc:.3}; {} + {} epochs",
        spec.n_train,
        spec.n_val,
        spec.n_test,
        run.step1_log.len(),
        run.step2_log.len()
    );
    if full < 0.90 || full < enc {
        return Err(detail);
    }
    within(run.train_time, Duration::from_secs(15 * 60), detail)
}

fn explain_localization(run: &DeskRun) -> Outcome {
    let test = run.cohort.split(Split::Test);
    let mut fracs = Vec::new();
    let mut profiles: Vec<AttentionProfile> = Vec::new();
    for (l, &p) in test.iter().zip(&run.full) {
        if !(l.label.is_hf() && p >= 0.5) {
            continue;
        }
        let rec = &run.cohort.recordings[&l.exam_id];
        let truth = &run.cohort.truths[&l.exam_id];
        let prof = grad_attention_rollout(&run.model, rec, &RolloutConfig::default()).map_err(|e| e.to_string())?;
        let in_burst: f64 = prof
            .mass
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let a = i * STEP2_SEGMENT;
                truth.bursts.iter().any(|&(s, e)| a < e && a + STEP2_SEGMENT > s)
            })
            .map(|(_, m)| m)
            .sum();
        fracs.push(in_burst);
        profiles.push(prof);
    }
    if fracs.is_empty() {
        return Err("no true positives on the test split".into());
    }
    let mean = fracs.iter().sum::<f64>() / fracs.len() as f64;
    let min = fracs.iter().copied().fold(f64::INFINITY, f64::min);
    let density = circadian_density(&profiles, 30);
    let iv = density.interval95;
    let day = iv.is_some_and(|iv| iv.within(7 * 60, 20 * 60));
    let iv_text = iv.map_or("none".to_string(), |iv| {
        format!("{:02}:{:02}-{:02}:{:02}", iv.start_min / 60 % 24, iv.start_min % 60, iv.end_min / 60 % 24, iv.end_min % 60)
    });
    check(
        mean >= 0.80 && day,
        format!(
            "{} true positives: mean burst mass {mean:.3} (min {min:.3}, need 0.80); 95% interval {iv_text} (need within 07:00-20:00)",
            fracs.len()
        ),
    )
}

fn reproducibility(a: &DeskRun) -> Outcome {
    let b = desk_run()?;
    let logs = a.step1_log == b.step1_log && a.step2_log == b.step2_log;
    let scores = a.full == b.full && a.encoder == b.encoder;
    check(
        logs && scores,
        format!(
            "second run: metric logs {}, test scores {} ({} exams)",
            if logs { "identical" } else { "differ" },
            if scores { "identical" } else { "differ" },
            a.full.len()
        ),
    )
}

// 8 ------------------------------------------------------------------------

fn beat_set(groups: &[(usize, fn(f64) -> f64)], seed: u64) -> (BeatMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 25.0).expect("sigma");
    let mut m = BeatMatrix::default();
    let mut truth = Vec::new();
    for (g, &(n, shape)) in groups.iter().enumerate() {
        for i in 0..n {
            let gain = rng.random_range(0.9..1.1);
            let shift = rng.random_range(-1.5..1.5);
            m.data
                .extend((0..BEAT_LEN).map(|k| gain * shape(k as f64 - 50.0 - shift) + noise.sample(&mut rng)));
            m.sources.push(BeatSource {
                exam_id: format!("g{g}"),
                position: i,
                r_sample: 50,
            });
            truth.push(g);
        }
    }
    (m, truth)
}

fn gauss(x: f64, mu: f64, sd: f64) -> f64 {
    (-0.5 * ((x - mu) / sd).powi(2)).exp()
}

fn narrow(x: f64) -> f64 {
    1000.0 * gauss(x, 0.0, 2.5) + 150.0 * gauss(x, 30.0, 6.0)
}

fn wide(x: f64) -> f64 {
    -900.0 * gauss(x, 0.0, 9.0) + 250.0 * gauss(x, 25.0, 8.0)
}

fn notched(x: f64) -> f64 {
    600.0 * gauss(x, -12.0, 3.0) + 600.0 * gauss(x, 12.0, 3.0) - 300.0 * gauss(x, -35.0, 5.0)
}

fn purity(assign: &[Option<usize>], truth: &[usize]) -> f64 {
    let mut counts: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (a, &t) in assign.iter().zip(truth) {
        if let Some(c) = a {
            *counts.entry(*c).or_default().entry(t).or_default() += 1;
        }
    }
    let majority: usize = counts.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    majority as f64 / truth.len() as f64
}

fn beat_clustering() -> Outcome {
    let cfg = ClusterConfig::default();
    let (two, truth) = beat_set(&[(100, narrow), (100, wide)], 8);
    let r = cluster_beats(&two, &cfg).map_err(|e| e.to_string())?;
    let p = purity(&r.assignments, &truth);

    let (three, truth3) = beat_set(&[(100, narrow), (100, wide), (20, notched)], 9);
    let r3 = cluster_beats(&three, &cfg).map_err(|e| e.to_string())?;
    let small_dropped = r3.clusters.iter().all(|c| c.size >= cfg.min_cluster)
        && r3.clusters.iter().map(|c| c.size).sum::<usize>() == r3.assignments.iter().flatten().count();
    let unassigned_small = truth3
        .iter()
        .zip(&r3.assignments)
        .filter(|(&t, a)| t == 2 && a.is_none())
        .count();
    check(
        r.k == 2 && p >= 0.95 && small_dropped,
        format!(
            "100+100 beats: k = {}, purity {:.3}; 100+100+20 beats: k = {}, retained sizes {:?}, {} of 20 minority beats unassigned",
            r.k,
            p,
            r3.k,
            r3.clusters.iter().map(|c| c.size).collect::<Vec<_>>(),
            unassigned_small
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn risk_group_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = (1.0f64, 1.0f64);
    for trial in 0..100 {
        let n = rng.random_range(20..300);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = if trial % 2 == 0 {
            (0..n).map(|_| rng.random::<f64>()).collect()
        } else {
            (0..n).map(|_| rng.random_range(0..15) as f64 / 15.0).collect()
        };
        let g = risk_groups(&scores, &labels).map_err(|e| e.to_string())?;
        let neg: Vec<f64> = scores.iter().zip(&labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
        let spec = |t: f64| neg.iter().filter(|&&s| s < t).count() as f64 / neg.len() as f64;
        let (s70, s90) = (spec(g.t70), spec(g.t90));
        worst = (worst.0.min(s70), worst.1.min(s90));
        if s70 < 0.70 || s90 < 0.90 {
            return Err(format!("cohort {trial}: specificity {s70:.3} at t70, {s90:.3} at t90"));
        }
        for f in [|x: f64| (3.0 * x).exp() + 2.0, |x: f64| x.powi(3) - 7.0, |x: f64| 1.0 / (1.0 + (-10.0 * x).exp())] {
            let mapped: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
            let h = risk_groups(&mapped, &labels).map_err(|e| e.to_string())?;
            if h.groups != g.groups {
                return Err(format!("cohort {trial}: groups change under a monotone transform"));
            }
        }
    }
    Ok(format!(
        "100 cohorts: lowest specificity {:.3} at t70, {:.3} at t90; groups unchanged under 3 monotone transforms",
        worst.0, worst.1
    ))
}

// 10 -----------------------------------------------------------------------

fn in_test_window(d: NaiveDate) -> bool {
    d.year() == 2018 && d.month() <= 4
}

fn split_hygiene() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let first = NaiveDate::from_ymd_opt(2010, 1, 1).expect("date");
    let labels: Vec<ExamLabel> = (0..1000)
        .map(|i| {
            let exam_date = first + chrono::Duration::days(rng.random_range(0..13 * 365));
            let hf = rng.random_bool(0.2);
            ExamLabel {
                exam_id: format!("ex{i:04}"),
                patient_id: format!("pt{:03}", rng.random_range(0..400)),
                exam_date,
                label: if hf { Label::Hf } else { Label::NonHf },
                endpoint_date: None,
                days_to_endpoint: None,
                split: None,
            }
        })
        .collect();
    let out = deephhf::cohort::split_cohort(&labels, 0.05, 3).map_err(|e| e.to_string())?;
    let mut by_split: BTreeMap<Split, BTreeSet<&str>> = BTreeMap::new();
    for l in &out {
        by_split.entry(l.split.ok_or("unassigned exam")?).or_default().insert(&l.patient_id);
    }
    let splits: Vec<Split> = by_split.keys().copied().collect();
    for (i, a) in splits.iter().enumerate() {
        for b in &splits[i + 1..] {
            let shared = by_split[a].intersection(&by_split[b]).count();
            if shared > 0 {
                return Err(format!("{shared} patients shared by {a:?} and {b:?}"));
            }
        }
    }
    let window_patients: BTreeSet<&str> =
        out.iter().filter(|l| in_test_window(l.exam_date)).map(|l| l.patient_id.as_str()).collect();
    let misplaced = out
        .iter()
        .filter(|l| window_patients.contains(l.patient_id.as_str()) && l.split != Some(Split::Test))
        .count();
    let patients: BTreeSet<&str> = out.iter().map(|l| l.patient_id.as_str()).collect();
    let count = |s| out.iter().filter(|l| l.split == Some(s)).count();
    check(
        misplaced == 0 && count(Split::Test) > 0 && count(Split::Validation) > 0,
        format!(
            "{} exams, {} patients: train {} / validation {} / test {} exams, no shared patients, {misplaced} test-window exams or relatives outside test",
            out.len(),
            patients.len(),
            count(Split::Train),
            count(Split::Validation),
            count(Split::Test)
        ),
    )
}

// 11 -----------------------------------------------------------------------

fn bce_stability() -> Outcome {
    // ln(1 + e^-40) and 40 + ln(1 + e^-40) evaluated with 128-bit mantissas.
    const SMALL: f64 = 4.248_354_255_291_588_986e-18;
    const LARGE: f64 = 40.000_000_000_000_000_004_248_35;
    let cases = [(40.0, 1.0, 1.0, SMALL), (40.0, 1.0, 3.0, 3.0 * SMALL), (-40.0, 1.0, 1.0, LARGE), (40.0, 0.0, 1.0, LARGE), (-40.0, 0.0, 1.0, SMALL)];
    let mut worst = 0.0f64;
    for (z, y, w, want) in cases {
        let got = weighted_bce(&[z], &[y], w).0;
        if !got.is_finite() {
            return Err(format!("z = {z}, y = {y}: non-finite loss"));
        }
        worst = worst.max((got - want).abs() / want);
    }
    let small = weighted_bce(&[40.0f64], &[1.0], 7.0).0;
    check(
        worst < 1e-12 && small < 1e-15,
        format!("5 cases at |z| = 40, worst relative error {worst:.1e}"),
    )
}

#[test]
fn acceptance() {
    let mut results: Vec<(u8, &str, Outcome, Duration)> = Vec::new();
    let mut run = |id: u8, name: &'static str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let r = f();
        let dt = t.elapsed();
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {id:>2} {tag} {name}: {detail} [{dt:.1?}]");
        results.push((id, name, r, dt));
    };
    run(1, "NNS reproduction", &nns_reproduction);
    run(2, "window-count contract", &window_counts);
    run(3, "gradient exactness", &gradient_exactness);
    run(4, "AUROC oracle equivalence", &auroc_oracle);
    run(5, "survival oracles", &survival_oracles);

    let desk = desk_run();
    match &desk {
        Ok(d) => {
            run(6, "synthetic end-to-end", &|| synthetic_end_to_end(d));
            run(7, "explainability localization", &|| explain_localization(d));
        }
        Err(e) => {
            run(6, "synthetic end-to-end", &|| Err(format!("pipeline failed: {e}")));
            run(7, "explainability localization", &|| Err("no trained model".into()));
        }
    }
    run(8, "beat clustering", &beat_clustering);
    run(9, "risk-group contract", &risk_group_contract);
    run(10, "split hygiene", &split_hygiene);
    run(11, "BCE stability", &bce_stability);
    match &desk {
        Ok(d) => run(12, "reproducibility", &|| reproducibility(d)),
        Err(_) => run(12, "reproducibility", &|| Err("first run failed".into())),
    }

    let failed: Vec<String> = results
        .iter()
        .filter(|r| r.2.is_err())
        .map(|r| format!("{} ({})", r.0, r.1))
        .collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
