use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;

use deephhf::clinical::{assemble_pcphf_inputs, measure_qrs, pcphf_score, CoefficientTable};
use deephhf::cohort::{label_exams_detailed, read_labels, split_cohort, write_labels, Emr, Exam, ExamLabel, Split};
use deephhf::eval::{
    bootstrap_auroc, compare_models, error_groups, events_by, incidence_and_nns, kaplan_meier, logrank, odds_ratio,
    pr_curve, read_scores, risk_groups, roc_curve, write_scores, RiskGroup, ScoreRow, ScoredCohort, SurvivalRow,
};
use deephhf::explain::{
    circadian_density, cluster_beats, extract_beats, grad_attention_rollout, high_attention_positions, write_profile,
    BeatMatrix, ClusterConfig, DiscardOrder, ExplainError, RolloutConfig,
};
use deephhf::signal::list_recordings;
use deephhf::synthetic::{build_cohort, CohortSpec};
use deephhf::training::{
    encoder_score, par_map, score_recording, train_step1, train_step2, write_metrics, Aggregation, DirSource,
    RecordingSource, RunConfig, TrainConfig,
};
use deephhf::Model;

use crate::manifest::Manifest;
use crate::{
    Cli, Command, EvaluateArgs, ExplainArgs, PcphfArgs, Profile, ReportArgs, ScoreArgs, SplitSel, SynthArgs, TrainArgs,
};

pub fn run(cli: Cli, argv: &[String]) -> Result<()> {
    let threads = cli.threads.max(1);
    match cli.command {
        Command::Synth(a) => synth(a, argv),
        Command::Label(a) => label(&a.recordings, &a.emr, &a.out, argv),
        Command::Split(a) => split(&a.labels, a.val_frac, a.seed, &a.out, argv),
        Command::TrainEncoder(a) => train_encoder(a, threads, argv),
        Command::TrainHead(a) => train_head(a.train, &a.encoder, threads, argv),
        Command::Score(a) => score(a, threads, argv),
        Command::Explain(a) => explain(a, threads, argv),
        Command::Pcphf(a) => pcphf(a, threads, argv),
        Command::Evaluate(a) => evaluate(a, argv),
        Command::Report(a) => report(a, argv),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

fn select(labels: &[ExamLabel], sel: SplitSel) -> Vec<&ExamLabel> {
    let want = match sel {
        SplitSel::Train => Some(Split::Train),
        SplitSel::Validation => Some(Split::Validation),
        SplitSel::Test => Some(Split::Test),
        SplitSel::All => None,
    };
    labels
        .iter()
        .filter(|l| want.is_none() || l.split == want)
        .collect()
}

fn load_labels(path: &Path) -> Result<Vec<ExamLabel>> {
    read_labels(path).with_context(|| format!("reading labels {}", path.display()))
}

fn synth(a: SynthArgs, argv: &[String]) -> Result<()> {
    let mut spec = CohortSpec {
        seed: a.seed,
        ..CohortSpec::default()
    };
    if let Some(n) = a.n {
        if n < 3 {
            bail!("--n must be at least 3");
        }
        spec.n_test = ((n as f64 * 2.0 / 7.0).round() as usize).max(1);
        spec.n_val = ((n as f64 / 7.0).round() as usize).max(1);
        spec.n_train = n - spec.n_test - spec.n_val;
    }
    spec.n_train = a.n_train.unwrap_or(spec.n_train);
    spec.n_val = a.n_val.unwrap_or(spec.n_val);
    spec.n_test = a.n_test.unwrap_or(spec.n_test);
    spec.pos_frac = a.pos_frac.unwrap_or(spec.pos_frac);
    spec.bursts_per_day = a.bursts_per_day.unwrap_or(spec.bursts_per_day);
    spec.burst_minutes = a.burst_minutes.unwrap_or(spec.burst_minutes);
    spec.af_episode_prob = a.af_prob.unwrap_or(spec.af_episode_prob);
    spec.noise_rms = a.noise_uv.unwrap_or(spec.noise_rms);
    let cohort = build_cohort(&spec)?;
    ensure_dir(&a.out)?;
    cohort.write(&a.out)?;
    let spec_json = serde_json::to_value(&spec)?;
    write_json(&a.out.join("cohort.json"), &spec_json)?;
    Manifest::new("synth", argv)
        .config(spec_json.to_string())
        .seed("cohort", spec.seed)
        .note("recordings", cohort.recordings.len())
        .write(&a.out)?;
    eprintln!("wrote {} recordings to {}", cohort.recordings.len(), a.out.display());
    Ok(())
}

fn label(recordings: &Path, emr_dir: &Path, out: &Path, argv: &[String]) -> Result<()> {
    let headers = list_recordings(recordings)?;
    let exams: Vec<Exam> = headers
        .iter()
        .map(|h| Exam::new(&h.exam_id, &h.patient_id, h.start_time.date()))
        .collect();
    let emr = Emr::load_dir(emr_dir)?;
    let endpoints = emr
        .timelines
        .iter()
        .filter_map(|(p, t)| deephhf::cohort::extract_endpoint(t).map(|d| (p.clone(), d)))
        .collect();
    let (labels, excluded) = label_exams_detailed(&exams, &endpoints);
    write_labels(out, &labels)?;
    let n_hf = labels.iter().filter(|l| l.label.is_hf()).count();
    Manifest::new("label", argv)
        .note("exams", exams.len())
        .note("hf", n_hf)
        .note(
            "excluded",
            excluded.iter().map(|(id, why)| format!("{id}: {why:?}")).collect::<Vec<_>>(),
        )
        .write(out)?;
    eprintln!(
        "{} exams labeled ({} HF), {} excluded",
        labels.len(),
        n_hf,
        excluded.len()
    );
    Ok(())
}

fn split(labels_path: &Path, val_frac: f64, seed: u64, out: &Path, argv: &[String]) -> Result<()> {
    let labels = load_labels(labels_path)?;
    let split = split_cohort(&labels, val_frac, seed)?;
    write_labels(out, &split)?;
    let count = |s| split.iter().filter(|l| l.split == Some(s)).count();
    Manifest::new("split", argv)
        .config(format!("val_frac = {val_frac}"))
        .seed("split", seed)
        .note("train", count(Split::Train))
        .note("validation", count(Split::Validation))
        .note("test", count(Split::Test))
        .write(out)?;
    eprintln!(
        "train {} / validation {} / test {}",
        count(Split::Train),
        count(Split::Validation),
        count(Split::Test)
    );
    Ok(())
}

/// Profile, then config file, then flags.
fn resolve_config(a: &TrainArgs, step: u8, threads: usize) -> Result<RunConfig> {
    let base = match a.profile {
        Profile::Desk => RunConfig::desk(),
        Profile::Full => RunConfig::default(),
    };
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p, base)?,
        None => base,
    };
    let t: &mut TrainConfig = if step == 1 { &mut cfg.step1 } else { &mut cfg.step2 };
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.patience {
        t.patience = v;
    }
    if let Some(v) = a.max_epochs {
        t.max_epochs = Some(v);
    }
    if let Some(v) = &a.aggregation {
        t.aggregation = Aggregation::parse(v).with_context(|| format!("unknown aggregation {v:?}"))?;
    }
    t.threads = threads;
    cfg.validate()?;
    Ok(cfg)
}

fn train_common(
    a: &TrainArgs,
    step: u8,
    threads: usize,
) -> Result<(RunConfig, Vec<ExamLabel>, DirSource)> {
    let cfg = resolve_config(a, step, threads)?;
    ensure_dir(&a.out)?;
    fs::write(a.out.join("config.txt"), cfg.to_text())?;
    let labels = load_labels(&a.labels)?;
    Ok((cfg, labels, DirSource::new(&a.recordings)))
}

fn train_encoder(a: TrainArgs, threads: usize, argv: &[String]) -> Result<()> {
    let (cfg, labels, source) = train_common(&a, 1, threads)?;
    let train = select(&labels, SplitSel::Train);
    let val = select(&labels, SplitSel::Validation);
    let model = Model::new(cfg.model.clone(), cfg.step1.seed)?;
    let outcome = train_step1(model, &train, &val, &source, &cfg.step1)?;
    let ck = a.out.join("encoder.ckpt");
    outcome.checkpoint("encoder").save(&ck)?;
    write_metrics(&a.out.join("metrics.csv"), &outcome.log)?;
    Manifest::new("train-encoder", argv)
        .config(cfg.to_text())
        .seed("step1", cfg.step1.seed)
        .note("best_epoch", outcome.best_epoch)
        .note("best_val_auroc", outcome.best_auroc)
        .write(&a.out)?;
    eprintln!(
        "encoder: best epoch {} (validation AUROC {:.3}) -> {}",
        outcome.best_epoch,
        outcome.best_auroc,
        ck.display()
    );
    Ok(())
}

fn train_head(a: TrainArgs, encoder: &Path, threads: usize, argv: &[String]) -> Result<()> {
    let (cfg, labels, source) = train_common(&a, 2, threads)?;
    let train = select(&labels, SplitSel::Train);
    let val = select(&labels, SplitSel::Validation);
    let enc = deephhf::nn::CheckpointData::load(encoder)?;
    let outcome = train_step2::<f32, _>(&enc, &train, &val, &source, &cfg.step2)?;
    let ck = a.out.join("model.ckpt");
    outcome.checkpoint("full").save(&ck)?;
    write_metrics(&a.out.join("metrics.csv"), &outcome.log)?;
    Manifest::new("train-head", argv)
        .config(cfg.to_text())
        .seed("step2", cfg.step2.seed)
        .note("encoder", encoder.display().to_string())
        .note("best_epoch", outcome.best_epoch)
        .note("best_val_auroc", outcome.best_auroc)
        .write(&a.out)?;
    eprintln!(
        "model: best epoch {} (validation AUROC {:.3}) -> {}",
        outcome.best_epoch,
        outcome.best_auroc,
        ck.display()
    );
    Ok(())
}

fn score(a: ScoreArgs, threads: usize, argv: &[String]) -> Result<()> {
    let labels = load_labels(&a.labels)?;
    let sel = select(&labels, a.split);
    let (model, _) = Model::load(&a.model)?;
    let agg = Aggregation::parse(&a.aggregation).with_context(|| format!("unknown aggregation {:?}", a.aggregation))?;
    let source = DirSource::new(&a.recordings);
    let rows = par_map(&sel, threads, |l| -> Result<ScoreRow> {
        let rec = source.recording(&l.exam_id)?;
        let score = if a.encoder_only {
            encoder_score(&model, &rec, agg)?
        } else {
            score_recording(&model, &rec)?
        };
        Ok(ScoreRow {
            exam_id: l.exam_id.clone(),
            score,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_scores(&a.out, &rows)?;
    Manifest::new("score", argv)
        .note("model", a.model.display().to_string())
        .note("encoder_only", a.encoder_only)
        .note("aggregation", agg.name())
        .note("exams", rows.len())
        .write(&a.out)?;
    eprintln!("scored {} exams -> {}", rows.len(), a.out.display());
    Ok(())
}

fn explain(a: ExplainArgs, threads: usize, argv: &[String]) -> Result<()> {
    let labels = load_labels(&a.labels)?;
    let sel = select(&labels, a.split);
    let (model, _) = Model::load(&a.model)?;
    let cfg = RolloutConfig {
        discard_ratio: a.discard_ratio,
        order: if a.discard_after_identity {
            DiscardOrder::AfterIdentity
        } else {
            DiscardOrder::BeforeIdentity
        },
        keep_self: a.keep_self,
    };
    let source = DirSource::new(&a.recordings);
    ensure_dir(&a.out.join("profiles"))?;
    let profiles = par_map(&sel, threads, |l| -> Result<_> {
        let rec = source.recording(&l.exam_id)?;
        let p = grad_attention_rollout(&model, &rec, &cfg)?;
        write_profile(&a.out.join("profiles").join(format!("{}.csv", l.exam_id)), &p)?;
        let beats = if l.label.is_hf() {
            match extract_beats(&rec, &high_attention_positions(&p, cfg.discard_ratio)) {
                Ok(b) => Some(b),
                Err(ExplainError::NoBeatsFound) => None,
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };
        Ok((p, beats))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let density = circadian_density(&profiles.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>(), a.bin_minutes);
    density.write_csv(&a.out.join("density.csv"))?;
    let mut beats = BeatMatrix::default();
    for (_, b) in profiles.into_iter() {
        if let Some(b) = b {
            beats.append(b);
        }
    }
    beats.write(&a.out.join("beats.bin"), &a.out.join("beats.txt"))?;
    let cluster_cfg = ClusterConfig {
        seed: a.seed,
        ..ClusterConfig::default()
    };
    let clusters = match cluster_beats(&beats, &cluster_cfg) {
        Ok(r) => {
            r.write_json(&a.out.join("clusters.json"))?;
            json!({ "k": r.k, "retained": r.clusters.len() })
        }
        Err(e @ (ExplainError::TooFewBeats { .. } | ExplainError::DegenerateClusters)) => {
            eprintln!("clustering skipped: {e}");
            json!({ "skipped": e.to_string() })
        }
        Err(e) => return Err(e.into()),
    };
    Manifest::new("explain", argv)
        .config(serde_json::to_string(&cfg)?)
        .seed("clusters", a.seed)
        .note("profiles", sel.len())
        .note("beats", beats.rows())
        .note("interval95", serde_json::to_value(density.interval95)?)
        .note("interval99", serde_json::to_value(density.interval99)?)
        .note("clusters", clusters)
        .write(&a.out)?;
    eprintln!("{} profiles, {} beats -> {}", sel.len(), beats.rows(), a.out.display());
    Ok(())
}

fn pcphf(a: PcphfArgs, threads: usize, argv: &[String]) -> Result<()> {
    let table = match &a.coefficients {
        Some(p) => CoefficientTable::load(p)?,
        None => {
            eprintln!("warning: using the bundled PLACEHOLDER coefficient table");
            CoefficientTable::placeholder()
        }
    };
    let labels = load_labels(&a.labels)?;
    let sel = select(&labels, a.split);
    let emr = Emr::load_dir(&a.emr)?;
    let source = DirSource::new(&a.recordings);
    let cells = par_map(&sel, threads, |l| -> Result<String> {
        let rec = source.recording(&l.exam_id)?;
        let qrs = measure_qrs(&rec).ok();
        let inputs = assemble_pcphf_inputs(
            emr.timeline(&l.patient_id),
            emr.demographics.get(&l.patient_id),
            l.exam_date,
            qrs,
        );
        Ok(match inputs {
            Ok(x) => pcphf_score(&x, &table)?.to_string(),
            Err(deephhf::clinical::ClinicalError::MissingVariable(f)) => format!("MISSING:{}", f.join(";")),
            Err(e) => return Err(e.into()),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut text = String::from("exam_id,pcphf_risk\n");
    for (l, c) in sel.iter().zip(&cells) {
        text.push_str(&format!("{},{}\n", l.exam_id, c));
    }
    fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
    let missing = cells.iter().filter(|c| c.starts_with("MISSING")).count();
    Manifest::new("pcphf", argv)
        .note("coefficients_sha256", table.sha256.clone())
        .note("exams", cells.len())
        .note("missing", missing)
        .write(&a.out)?;
    eprintln!("{} exams, {} with missing inputs -> {}", cells.len(), missing, a.out.display());
    Ok(())
}

/// Scores from a score file or a PCP-HF file; rows without a numeric score
/// are left out.
fn read_any_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    if let Ok(rows) = read_scores(path) {
        return Ok(rows);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .skip(1)
        .filter_map(|l| {
            let (id, v) = l.split_once(',')?;
            Some(ScoreRow {
                exam_id: id.to_string(),
                score: v.trim().parse().ok()?,
            })
        })
        .collect())
}

fn scored(labels: &[ExamLabel], sel: SplitSel, rows: &[ScoreRow]) -> Result<ScoredCohort> {
    let ids: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.exam_id.as_str()).collect();
    let chosen: Vec<&ExamLabel> = select(labels, sel)
        .into_iter()
        .filter(|l| ids.contains(l.exam_id.as_str()))
        .collect();
    if chosen.is_empty() {
        bail!("no scored exams in the selected split");
    }
    Ok(ScoredCohort::join(&chosen, rows)?)
}

fn evaluate(a: EvaluateArgs, argv: &[String]) -> Result<()> {
    let labels = load_labels(&a.labels)?;
    let rows = read_any_scores(&a.scores)?;
    let c = scored(&labels, a.split, &rows)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.scores.parent().map(Path::to_path_buf).unwrap_or_default());
    ensure_dir(&out)?;
    let (s, y) = (c.scores(), c.labels());
    let n_pos = y.iter().filter(|&&v| v).count();
    let n_neg = y.len() - n_pos;

    let auroc = deephhf::eval::auroc(&s, &y)?;
    let roc = roc_curve(&s, &y)?;
    let mut w = csv::Writer::from_path(out.join("roc.csv"))?;
    roc.iter().try_for_each(|p| w.serialize(p))?;
    w.flush()?;
    let pr = pr_curve(&s, &y)?;
    let mut w = csv::Writer::from_path(out.join("pr.csv"))?;
    w.write_record(["threshold", "recall", "precision"])?;
    for (t, r, p) in &pr.points {
        w.write_record([t.to_string(), r.to_string(), p.to_string()])?;
    }
    w.flush()?;
    let boot = bootstrap_auroc(&s, &y, a.bootstrap, n_pos, n_neg, a.seed)?;
    let mut w = csv::Writer::from_path(out.join("bootstrap.csv"))?;
    w.write_record(["iteration", "auroc"])?;
    for (i, v) in boot.distribution.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;

    let groups = risk_groups(&s, &y)?;
    let count = |g: RiskGroup| groups.groups.iter().filter(|&&x| x == g).count();
    let errors = error_groups(&s, &y, &c.days_to_endpoint(), groups.t70)?;
    let mut report = json!({
        "n": y.len(),
        "n_pos": n_pos,
        "n_neg": n_neg,
        "auroc": auroc,
        "auroc_bootstrap": { "mean": boot.mean, "ci_low": boot.ci_low, "ci_high": boot.ci_high, "iterations": a.bootstrap },
        "auprc": pr.auprc,
        "t70": groups.t70,
        "t90": groups.t90,
        "groups": { "low": count(RiskGroup::Low), "moderate": count(RiskGroup::Moderate), "high": count(RiskGroup::High) },
        "error_groups": { "tp": errors.tp, "fp": errors.fp, "tn": errors.tn, "fn": errors.fn_, "bins": errors.bins },
    });
    if let Some(b) = &a.baseline {
        let brows = read_any_scores(b)?;
        let bc = scored(&labels, a.split, &brows)?;
        let (bs, by) = (bc.scores(), bc.labels());
        let bn_pos = by.iter().filter(|&&v| v).count();
        let bboot = bootstrap_auroc(&bs, &by, a.bootstrap, bn_pos, by.len() - bn_pos, a.seed)?;
        let (t, p) = compare_models(&boot.distribution, &bboot.distribution);
        report["baseline"] = json!({
            "file": b.display().to_string(),
            "n": by.len(),
            "auroc": deephhf::eval::auroc(&bs, &by)?,
            "auroc_bootstrap": { "mean": bboot.mean, "ci_low": bboot.ci_low, "ci_high": bboot.ci_high },
            "t": t,
            "p": p,
        });
    }
    write_json(&out.join("report.json"), &report)?;
    Manifest::new("evaluate", argv).seed("bootstrap", a.seed).write(&out)?;
    eprintln!(
        "AUROC {:.3} (95% CI {:.3}-{:.3}), AUPRC {:.3} -> {}",
        auroc,
        boot.ci_low,
        boot.ci_high,
        pr.auprc,
        out.display()
    );
    Ok(())
}

fn report(a: ReportArgs, argv: &[String]) -> Result<()> {
    let labels = load_labels(&a.labels)?;
    let rows = read_any_scores(&a.scores)?;
    let c = scored(&labels, a.split, &rows)?;
    let emr = Emr::load_dir(&a.emr)?;
    let censor = a
        .censor_date
        .or_else(|| emr.latest_event_date())
        .context("no censor date given and the EMR is empty")?;
    ensure_dir(&a.out)?;
    let (s, y) = (c.scores(), c.labels());
    let groups = risk_groups(&s, &y)?;

    let mut by_group: BTreeMap<&str, Vec<SurvivalRow>> = BTreeMap::new();
    for (r, g) in c.rows.iter().zip(&groups.groups) {
        let name = match g {
            RiskGroup::Low => "low",
            RiskGroup::Moderate => "moderate",
            RiskGroup::High => "high",
        };
        by_group
            .entry(name)
            .or_default()
            .push(SurvivalRow::from_dates(r.exam_date, r.endpoint_date, censor));
    }
    let mut per_group = serde_json::Map::new();
    for (name, rows) in &by_group {
        let km = kaplan_meier(rows);
        let mut w = csv::Writer::from_path(a.out.join(format!("km_{name}.csv")))?;
        km.iter().try_for_each(|s| w.serialize(s))?;
        w.flush()?;
        let py: Vec<(f64, usize)> = rows.iter().map(|r| (r.time / 365.25, usize::from(r.event))).collect();
        let rate = incidence_and_nns(&py, a.irr).ok();
        per_group.insert(
            name.to_string(),
            json!({
                "n": rows.len(),
                "events": rows.iter().filter(|r| r.event).count(),
                "incidence_per_1000_py": rate.map(|r| r.per_1000_py),
                "nns": rate.and_then(|r| r.nns),
            }),
        );
    }
    let empty = Vec::new();
    let low = by_group.get("low").unwrap_or(&empty);
    let mut comparisons = serde_json::Map::new();
    for other in ["moderate", "high"] {
        let Some(g) = by_group.get(other) else { continue };
        if low.is_empty() {
            continue;
        }
        let lr = logrank(g, low);
        let (ge, gn) = events_by(g, a.horizon_days);
        let (le, ln) = events_by(low, a.horizon_days);
        let or = odds_ratio(ge, gn, le, ln);
        comparisons.insert(
            format!("{other}_vs_low"),
            json!({ "logrank_chi2": lr.chi2, "logrank_p": lr.p, "odds_ratio": or.or, "or_zero_cell_corrected": or.corrected }),
        );
    }
    let report = json!({
        "censor_date": censor.to_string(),
        "horizon_days": a.horizon_days,
        "irr": a.irr,
        "t70": groups.t70,
        "t90": groups.t90,
        "groups": per_group,
        "comparisons": comparisons,
    });
    write_json(&a.out.join("report.json"), &report)?;
    Manifest::new("report", argv)
        .config(format!("horizon_days = {}\nirr = {}", a.horizon_days, a.irr))
        .write(&a.out)?;
    eprintln!("survival report -> {}", a.out.display());
    Ok(())
}
