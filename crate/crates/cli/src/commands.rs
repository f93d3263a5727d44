//! One function per subcommand.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::json;
use startcast::dates::parse_date;
use startcast::evaluate::{metrics, roc, write_results_csv, write_roc_csv, ResultRow};
use startcast::explain::explain_report;
use startcast::features::{feature_matrix, FeatureTable};
use startcast::ingest::{filter_companies, load_export, round_interval_stats, EntityStore};
use startcast::learners::tune::{tune, write_trials_csv, SearchSpace};
use startcast::model::ModelFile;
use startcast::portfolio::{backtest_model, write_curve_csv, write_portfolio_csv, Stage, StageMap};
use startcast::resample::{apply_imputation, column_medians, smote, ImbalanceStrategy};
use startcast::study::{windows_study, write_study_csv};
use startcast::synth::{emit_export, generate, write_ground_truth, SynthConfig};
use startcast::windows::{
    build_samples, label_distribution, read_samples_csv, split_indices, window_schedule, write_distribution_csv,
    write_samples_csv, StudyProtocol, TimeWindow, N_WINDOWS,
};

use crate::config::{Overrides, Resolved, RunConfig};
use crate::error::{CliError, CliResult};
use crate::{Cli, Command, Mode, ModelArgs};

pub fn run(cli: &Cli) -> CliResult<()> {
    let file = RunConfig::load(cli.run_config.as_deref())?;
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let base = |m: Option<&ModelArgs>, threshold: Option<f64>| {
        Resolved::merge(
            &file,
            &Overrides {
                seed: cli.seed,
                model: m.and_then(|m| m.model.as_deref()),
                strategy: m.and_then(|m| m.strategy.as_deref()),
                threshold,
                params: m.map_or(&[], |m| m.params.as_slice()),
            },
        )
    };
    match &cli.command {
        Command::Synth(a) => synth(a, &base(None, None)?),
        Command::Ingest(a) => ingest(a, &base(None, None)?),
        Command::Windows(a) => windows(a, &base(None, None)?),
        Command::Features(a) => features(a, &base(None, None)?),
        Command::Train(a) => train(a, &base(Some(&a.model), None)?),
        Command::Eval(a) => eval(a, &base(None, a.threshold)?),
        Command::WindowsStudy(a) => study(a, &base(Some(&a.model), a.threshold)?),
        Command::Explain(a) => explain(a, &base(None, None)?),
        Command::Portfolio(a) => portfolio(a, &base(None, None)?),
        Command::Tune(a) => tune_cmd(a, &base(Some(&a.model), None)?),
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}

fn parent_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Output file next to `path` with `suffix` replacing its extension.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    parent_of(path).join(format!("{stem}{suffix}"))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Records the subcommand, its arguments and the merged settings in
/// `<name>.resolved_config.json` inside `dir`.
fn snapshot(dir: &Path, name: &str, args: &impl Serialize, resolved: &Resolved, extra: serde_json::Value) -> CliResult<()> {
    ensure_dir(dir)?;
    write_json(
        &dir.join(format!("{name}.resolved_config.json")),
        &json!({ "command": name, "args": args, "resolved": resolved, "extra": extra }),
    )
}

fn load_filtered(dir: &Path) -> CliResult<EntityStore> {
    let (raw, report) = load_export(dir)?;
    if report.warnings() > 0 {
        log::warn!("{} malformed rows skipped while loading {}", report.warnings(), dir.display());
    }
    Ok(filter_companies(&raw).0)
}

fn parse_asof(s: &str) -> CliResult<NaiveDate> {
    parse_date(s).map_err(|e| CliError::usage(e.to_string()))
}

fn synth(a: &crate::SynthArgs, r: &Resolved) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::data(format!("cannot read {}: {e}", p.display())))?;
            SynthConfig::from_toml(&text).map_err(|e| CliError::usage(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    if a.config.is_none() || r.seed_explicit {
        cfg.seed = r.seed;
    }
    let (store, truth) = generate(&cfg)?;
    emit_export(&store, &a.out)?;
    write_ground_truth(&truth, &a.out.join("ground_truth.csv"))?;
    snapshot(&a.out, "synth", a, r, serde_json::to_value(&cfg).map_err(|e| CliError::Internal(e.to_string()))?)?;
    println!("{} companies, {} rounds written to {}", store.companies().len(), store.rounds().len(), a.out.display());
    Ok(())
}

fn ingest(a: &crate::IngestArgs, r: &Resolved) -> CliResult<()> {
    let (raw, load) = load_export(&a.data)?;
    let (store, filter) = filter_companies(&raw);
    let stats = round_interval_stats(&store);
    let dir = parent_of(&a.report);
    ensure_dir(&dir)?;
    write_json(
        &a.report,
        &json!({
            "load": load,
            "filter": filter,
            "companies": store.companies().len(),
            "rounds": store.rounds().len(),
            "exits": store.exits().len(),
            "news": store.news().len(),
            "founders": store.founders().len(),
            "investors": store.investors().len(),
            "intervals": stats,
        }),
    )?;
    let intervals = a.intervals.clone().unwrap_or_else(|| dir.join("interval_stats.csv"));
    write_text(&intervals, &stats.to_csv())?;
    snapshot(&dir, "ingest", a, r, json!({}))?;
    println!(
        "{} of {} companies kept; {} rounds",
        filter.companies_after,
        filter.companies_before,
        store.rounds().len()
    );
    Ok(())
}

fn check_ratio(ratio: f64) -> CliResult<()> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("ratio {ratio} must lie strictly between 0 and 1")))
    }
}

fn windows(a: &crate::WindowsArgs, r: &Resolved) -> CliResult<()> {
    check_ratio(a.ratio)?;
    let store = load_filtered(&a.data)?;
    let samples = build_samples(&store);
    let dir = parent_of(&a.out);
    ensure_dir(&dir)?;
    write_samples_csv(&samples, &a.out)?;
    let table = label_distribution(&samples, a.ratio, r.seed)?;
    write_distribution_csv(&table, &a.table.clone().unwrap_or_else(|| dir.join("label_distribution.csv")))?;
    snapshot(&dir, "windows", a, r, json!({}))?;
    let pos = samples.iter().filter(|s| s.label == 1).count();
    println!("{} samples, {pos} successes", samples.len());
    Ok(())
}

fn features(a: &crate::FeaturesArgs, r: &Resolved) -> CliResult<()> {
    check_ratio(a.ratio)?;
    let store = load_filtered(&a.data)?;
    let samples = read_samples_csv(&store, &a.samples)?;
    let table = FeatureTable::from_samples(&samples, feature_matrix(&store, &samples, &r.features));
    let dir = parent_of(&a.out);
    ensure_dir(&dir)?;
    table.write_csv(&a.out)?;
    if let Some(split) = &a.split_out {
        ensure_dir(split)?;
        let (train, test) = match a.test_from {
            Some(w) => {
                let (tr, te): (Vec<usize>, Vec<usize>) =
                    (0..table.keys.len()).partition(|&i| table.keys[i].window.index < w);
                (tr, te)
            }
            None => split_indices(table.keys.len(), a.ratio, r.seed)?,
        };
        if train.is_empty() || test.is_empty() {
            return Err(CliError::data("split leaves the train or test set empty"));
        }
        table.subset(&train).write_csv(&split.join("train.csv"))?;
        table.subset(&test).write_csv(&split.join("test.csv"))?;
    }
    snapshot(&dir, "features", a, r, json!({}))?;
    println!("{} rows x {} factors", table.data.len(), table.data.n_features());
    Ok(())
}

fn train(a: &crate::TrainArgs, r: &Resolved) -> CliResult<()> {
    let spec = r.spec()?;
    let table = FeatureTable::read_csv(&a.train)?;
    let file = ModelFile::fit(&spec, &table.data, &r.plan(), table.label_horizon())?;
    let dir = parent_of(&a.out);
    ensure_dir(&dir)?;
    file.save(&a.out)?;
    let probs = file.predict_dataset(&table.data)?;
    let fit = metrics(&probs, table.data.labels(), r.threshold)?;
    write_json(
        &sibling(&a.out, ".log.json"),
        &json!({
            "family": file.family,
            "strategy": file.strategy,
            "rows": table.data.len(),
            "positives": table.data.positives(),
            "label_horizon": file.label_horizon,
            "training_metrics": fit,
        }),
    )?;
    snapshot(&dir, "train", a, r, serde_json::to_value(&spec).map_err(|e| CliError::Internal(e.to_string()))?)?;
    println!("{} ({}) trained on {} rows; training F1 {:.4}", file.family, file.strategy, table.data.len(), fit.f1);
    Ok(())
}

fn eval(a: &crate::EvalArgs, r: &Resolved) -> CliResult<()> {
    let table = FeatureTable::read_csv(&a.test)?;
    ensure_dir(&a.out)?;
    let mut rows = Vec::new();
    for path in &a.models {
        let file = ModelFile::load(path)?;
        if file.feature_names != table.data.feature_names() {
            return Err(CliError::data(format!("{} was trained on different feature columns", path.display())));
        }
        let probs = file.predict_dataset(&table.data)?;
        let curve = roc(&probs, table.data.labels())?;
        let stem = path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
        write_roc_csv(&curve, &a.out.join(format!("roc-{stem}.csv")))?;
        rows.push(ResultRow {
            model: file.family.to_string(),
            strategy: file.strategy.clone(),
            metrics: metrics(&probs, table.data.labels(), r.threshold)?,
            auc: Some(curve.auc),
        });
    }
    write_json(&a.out.join("metrics.json"), &rows)?;
    write_results_csv(&rows, &a.out.join("comparison.csv"))?;
    snapshot(&a.out, "eval", a, r, json!({}))?;
    for row in &rows {
        println!(
            "{} {}: precision {:.4} recall {:.4} F1 {:.4} AUC {:.4}",
            row.model,
            row.strategy,
            row.metrics.precision,
            row.metrics.recall,
            row.metrics.f1,
            row.auc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn study(a: &crate::StudyArgs, r: &Resolved) -> CliResult<()> {
    let spec = r.spec()?;
    let table = FeatureTable::read_csv(&a.features)?;
    let protocol = match a.mode {
        Mode::InSample => StudyProtocol::InSample,
        Mode::OutOfSample => StudyProtocol::OutOfSample,
    };
    let rows = windows_study(&table, &spec, &r.plan(), protocol, r.threshold, r.seed)?;
    let dir = parent_of(&a.out);
    ensure_dir(&dir)?;
    write_study_csv(&rows, &a.out)?;
    snapshot(&dir, "windows-study", a, r, json!({}))?;
    let wins = rows.iter().filter(|row| row.multiple_wins()).count();
    println!("multiple windows at least as good in {wins} of {} windows", rows.len());
    Ok(())
}

fn explain(a: &crate::ExplainArgs, r: &Resolved) -> CliResult<()> {
    let as_of = parse_asof(&a.asof)?;
    let store = load_filtered(&a.data)?;
    let model = ModelFile::load(&a.model)?;
    let report = explain_report(&store, &a.company, as_of, &model, &r.features)?;
    let text = report.to_text();
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        write_text(&dir.join(format!("explain-{}.csv", a.company)), &report.to_csv())?;
        write_text(&dir.join(format!("explain-{}.txt", a.company)), &text)?;
        write_text(&dir.join(format!("explain-{}.json", a.company)), &(report.summary_json()? + "\n"))?;
        snapshot(dir, "explain", a, r, json!({}))?;
    }
    print!("{text}");
    Ok(())
}

/// The scheduled window starting at `as_of`, or an 18-month window
/// starting there.
fn window_at(as_of: NaiveDate) -> TimeWindow {
    window_schedule()
        .into_iter()
        .find(|w| w.start == as_of)
        .unwrap_or_else(|| TimeWindow::starting_at(N_WINDOWS, as_of))
}

fn portfolio(a: &crate::PortfolioArgs, r: &Resolved) -> CliResult<()> {
    if a.k == 0 {
        return Err(CliError::usage("--k must be at least 1"));
    }
    let stage = a
        .stage
        .as_deref()
        .map(str::parse::<Stage>)
        .transpose()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let oos = window_at(parse_asof(&a.asof)?);
    let store = load_filtered(&a.data)?;
    let model = ModelFile::load(&a.model)?;
    let ks: Vec<usize> = if a.ks.is_empty() {
        (1..=a.k / 10).map(|i| i * 10).chain(std::iter::once(a.k)).collect::<std::collections::BTreeSet<_>>().into_iter().collect()
    } else {
        a.ks.clone()
    };
    let bt = backtest_model(&store, &model, &oos, a.k, &ks, &StageMap::default(), &r.features)?;
    let (rows, curve, pool, successes) = match stage {
        Some(s) => {
            let st = &bt.stages[&s];
            (&st.rows, &st.curve, st.pool, st.successes)
        }
        None => (&bt.rows, &bt.curve, bt.pool, bt.successes),
    };
    ensure_dir(&a.out)?;
    write_portfolio_csv(rows, &a.out.join("portfolio.csv"))?;
    write_curve_csv(curve, &a.out.join("curve.csv"))?;
    snapshot(&a.out, "portfolio", a, r, json!({ "window": oos }))?;
    let hits = rows.iter().filter(|row| row.label == 1).count();
    println!(
        "top {} of {pool}: {hits} successes (pool has {successes}, {:.2}%)",
        rows.len(),
        100.0 * successes as f64 / pool.max(1) as f64
    );
    Ok(())
}

fn tune_cmd(a: &crate::TuneArgs, r: &Resolved) -> CliResult<()> {
    if a.budget == 0 {
        return Err(CliError::usage("--budget must be at least 1"));
    }
    check_ratio(a.valid)?;
    let mut spec = r.spec()?;
    let table = FeatureTable::read_csv(&a.train)?;
    let (fit_idx, valid_idx) = split_indices(table.data.len(), 1.0 - a.valid, r.seed)?;
    let mut fit = table.data.subset(&fit_idx);
    let mut valid = table.data.subset(&valid_idx);
    match r.strategy {
        ImbalanceStrategy::None => {}
        ImbalanceStrategy::WeightAdjust => spec.set_class_weighting(true)?,
        ImbalanceStrategy::Smote => {
            let medians = column_medians(&fit)?;
            fit = smote(&apply_imputation(&fit, &medians)?, &r.plan())?;
            valid = apply_imputation(&valid, &medians)?;
        }
    }
    let space = SearchSpace::default_for(spec.family());
    let (best, result) = tune(&spec, &space, a.budget, r.seed, &fit, &valid, &[])?;
    ensure_dir(&a.out)?;
    write_json(
        &a.out.join("best_params.json"),
        &json!({ "score": result.best.score, "point": result.best.point, "spec": best }),
    )?;
    write_trials_csv(&result, &a.out.join("trials.csv"))?;
    snapshot(&a.out, "tune", a, r, json!({ "space": space }))?;
    println!("best validation F1 {:.4} after {} trials", result.best.score, result.trials.len());
    Ok(())
}
