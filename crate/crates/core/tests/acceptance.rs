//! Acceptance suite. The criteria run one after another inside a single
//! test so their timings are not inflated by sibling tests; each prints
//! one PASS/FAIL line and the test fails if any gated criterion fails.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

use startcast::evaluate::{auc, metrics, spearman};
use startcast::explain::{shapley_bruteforce, tree_shap};
use startcast::features::{feature_matrix, FeatureConfig, FeatureEngine, FeatureTable, FeatureVector};
use startcast::ingest::{
    filter_companies, load_export, round_interval_stats, Company, EntityStore, ExitEvent, ExitKind,
    FundingRound, NewsItem, RoundType, StoreParts,
};
use startcast::learners::{
    expected_random_metrics, logreg_objective, mlp_objective, random_baseline, soft_tree_objective, SoftTreeShape,
};
use startcast::model::{Family, Model, ModelFile, ModelSpec};
use startcast::portfolio::{backtest_model, write_curve_csv, write_portfolio_csv, StageMap};
use startcast::resample::{apply_imputation, column_medians, smote, ImbalancePlan, ImbalanceStrategy};
use startcast::study::windows_study;
use startcast::synth::{emit_export, generate, GroundTruth, SynthConfig};
use startcast::trees::{
    best_split, build_histograms, train_cart, train_forest, train_gbdt, BoostParams, CartParams, ForestParams,
    Growth, MaxFeatures, SplitParams,
};
use startcast::windows::{
    build_samples, build_samples_for, label, label_distribution, window_schedule, write_samples_csv, SampleEvent,
    StudyProtocol, TimeWindow,
};
use startcast::Dataset;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Desk-scale synthetic data split by window: training windows 0..=10,
/// held-out windows 11 and 12.
struct Desk {
    store: EntityStore,
    truth: GroundTruth,
    samples: Vec<SampleEvent>,
    train: FeatureTable,
    test: FeatureTable,
    test_latent: Vec<f64>,
}

fn desk(cfg: &SynthConfig) -> Desk {
    let (store, truth) = generate(cfg).expect("generate");
    let samples = build_samples(&store);
    let table = FeatureTable::from_samples(&samples, feature_matrix(&store, &samples, &FeatureConfig::default()));
    let tr: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].window.index <= 10).collect();
    let te: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].window.index >= 11).collect();
    let lookup = truth.lookup();
    let test_latent = te
        .iter()
        .map(|&i| lookup[&(samples[i].company_id.clone(), samples[i].window.index)])
        .collect();
    Desk {
        train: table.subset(&tr),
        test: table.subset(&te),
        store,
        truth,
        samples,
        test_latent,
    }
}

fn desk_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_companies: 50_000,
        n_investors: 5_000,
        n_founders: 100_000,
        seed,
        ..SynthConfig::default()
    }
}

fn plan(strategy: ImbalanceStrategy) -> ImbalancePlan {
    ImbalancePlan {
        strategy,
        k_neighbors: 5,
        seed: 17,
    }
}

// 1 ------------------------------------------------------------------

fn random_baseline_identity() -> Verdict {
    let (p, r, f) = expected_random_metrics(0.2372);
    let analytic = (p - 0.2372).abs() <= 1e-4 && (r - 0.5).abs() <= 1e-4 && (f - 0.3218).abs() <= 1e-4;
    let mut labels: Vec<u8> = (0..100_000).map(|i| u8::from(i < 23_720)).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let rb = random_baseline(&labels, 2024).expect("baseline");
    let e = &rb.empirical;
    let empirical = (e.precision - p).abs() <= 0.01 && (e.recall - r).abs() <= 0.01 && (e.f1 - f).abs() <= 0.01;
    verdict(
        analytic && empirical,
        format!(
            "analytic P={p:.4} R={r:.4} F1={f:.4}; Monte Carlo P={:.4} R={:.4} F1={:.4}",
            e.precision, e.recall, e.f1
        ),
    )
}

// 2 ------------------------------------------------------------------

fn between(s: &[f64], a: &[f64], b: &[f64]) -> bool {
    s.iter()
        .zip(a.iter().zip(b))
        .all(|(&v, (&x, &y))| x.min(y) <= v && v <= x.max(y))
}

fn smote_balance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let names: Vec<String> = (0..19).map(|j| format!("f{j}")).collect();
    let mut data = Dataset::with_capacity(names, 100_000);
    for _ in 0..100_000 {
        let y = u8::from(rng.random_bool(0.24));
        let row: Vec<f64> = (0..19)
            .map(|j| {
                let v: f64 = rng.random::<f64>() * 10.0 + f64::from(y) * 2.0;
                if j % 3 == 0 {
                    v.floor()
                } else {
                    v
                }
            })
            .collect();
        data.push_row(&row, y, 1.0).unwrap();
    }
    let t = Instant::now();
    let out = smote(&data, &plan(ImbalanceStrategy::Smote)).expect("smote");
    let elapsed = t.elapsed();
    let pos = out.positives();
    let neg = out.len() - pos;
    let preserved = (0..data.len()).all(|i| out.row(i) == data.row(i) && out.labels()[i] == data.labels()[i]);
    let minority: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == 1).collect();
    let mut unexplained = 0usize;
    for (s_idx, i) in (data.len()..out.len()).enumerate() {
        let s = out.row(i);
        // try the row the generator cycles through first, then everything
        let hint = minority[s_idx % minority.len()];
        let found = minority.iter().any(|&b| between(s, data.row(hint), data.row(b)))
            || minority
                .iter()
                .any(|&a| minority.iter().any(|&b| between(s, data.row(a), data.row(b))));
        if !found {
            unexplained += 1;
        }
    }
    let pass = pos == neg && preserved && unexplained == 0 && elapsed < Duration::from_secs(30);
    verdict(
        pass,
        format!(
            "{pos} positive / {neg} negative, {} synthetic rows, {unexplained} outside any minority segment, smote took {:.1}s",
            out.len() - data.len(),
            elapsed.as_secs_f64()
        ),
    )
}

// 3 ------------------------------------------------------------------

struct ExactSplit {
    feature: usize,
    threshold: f64,
    default_left: bool,
    gain: f64,
}

fn newton_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr))
}

/// Every distinct-value threshold of every feature, missing rows sent
/// left then right; first strictly best candidate wins.
fn exhaustive_split(rows: &[Vec<f64>], g: &[f64], h: &[f64], lambda: f64, mcw: f64) -> Option<ExactSplit> {
    let mut best: Option<ExactSplit> = None;
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).filter(|v| !v.is_nan()).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for &t in vals.iter().skip(1) {
            for default_left in [true, false] {
                let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
                for (i, r) in rows.iter().enumerate() {
                    let left = if r[f].is_nan() { default_left } else { r[f] < t };
                    if left {
                        gl += g[i];
                        hl += h[i];
                    } else {
                        gr += g[i];
                        hr += h[i];
                    }
                }
                if hl < mcw || hr < mcw {
                    continue;
                }
                let gain = newton_gain(gl, hl, gr, hr, lambda);
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(ExactSplit {
                        feature: f,
                        threshold: t,
                        default_left,
                        gain,
                    });
                }
            }
        }
    }
    best
}

fn split_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let fixtures = 1_000;
    let mut mismatches = 0usize;
    let mut splits_found = 0usize;
    for _ in 0..fixtures {
        let n = rng.random_range(2..=200);
        let m = rng.random_range(1..=5);
        let pools: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let k = rng.random_range(1..=12);
                (0..k).map(|_| rng.random_range(-50.0..50.0)).collect()
            })
            .collect();
        let missing_rate = [0.0, 0.1, 0.4][rng.random_range(0..3)];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                pools
                    .iter()
                    .map(|p| {
                        if rng.random_bool(missing_rate) {
                            f64::NAN
                        } else {
                            p[rng.random_range(0..p.len())]
                        }
                    })
                    .collect()
            })
            .collect();
        // dyadic statistics keep every partial sum exact
        let g: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-16i32..=16)) / 16.0).collect();
        let h: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(1i32..=16)) / 16.0).collect();
        let lambda = [0.0, 1.0][rng.random_range(0..2)];
        let mcw = [0.0, 0.5, 2.0][rng.random_range(0..3)];
        let data = Dataset::from_rows(&rows, &vec![0; n]).unwrap();
        let binned = build_histograms(&data, 255).unwrap();
        let idx: Vec<u32> = (0..n as u32).collect();
        let params = SplitParams {
            lambda,
            gamma: 0.0,
            min_child_weight: mcw,
        };
        let got = best_split(&binned, &idx, &g, &h, &params);
        let want = exhaustive_split(&rows, &g, &h, lambda, mcw);
        let same = match (&got, &want) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                a.feature == b.feature
                    && a.threshold == b.threshold
                    && a.default_left == b.default_left
                    && (a.gain - b.gain).abs() <= 1e-9 * b.gain.abs().max(1.0)
            }
            _ => false,
        };
        splits_found += usize::from(want.is_some());
        mismatches += usize::from(!same);
    }
    verdict(
        mismatches == 0,
        format!("{fixtures} fixtures ({splits_found} with a split), {mismatches} mismatches"),
    )
}

// 4 ------------------------------------------------------------------

fn random_tree_model(rng: &mut ChaCha8Rng) -> (Model, usize) {
    let n = rng.random_range(40..=200);
    let m = rng.random_range(2..=6);
    let mut data = Dataset::new((0..m).map(|j| format!("x{j}")).collect());
    for _ in 0..n {
        let row: Vec<f64> = (0..m)
            .map(|_| {
                if rng.random_bool(0.15) {
                    f64::NAN
                } else {
                    f64::from(rng.random_range(0..8))
                }
            })
            .collect();
        let signal = row.iter().take(2).map(|v| if v.is_nan() { 3.0 } else { *v }).sum::<f64>();
        let y = u8::from(signal + rng.random_range(-4.0..4.0) > 7.0);
        data.push_row(&row, y, rng.random_range(0.5..2.0)).unwrap();
    }
    let depth = rng.random_range(1..=3);
    let model = match rng.random_range(0..4) {
        0 | 1 => Model::Gbdt(
            train_gbdt(
                &data,
                &BoostParams {
                    n_estimators: rng.random_range(1..=6),
                    max_depth: Some(depth),
                    max_leaves: None,
                    growth: if rng.random_bool(0.5) { Growth::LevelWise } else { Growth::LeafWise },
                    learning_rate: 0.3,
                    lambda_l2: 1.0,
                    min_child_weight: 0.5,
                    ..Default::default()
                },
            )
            .unwrap(),
        ),
        2 => Model::Forest(
            train_forest(
                &data,
                &ForestParams {
                    n_estimators: rng.random_range(1..=4),
                    max_depth: Some(depth),
                    max_features: MaxFeatures::All,
                    seed: rng.random(),
                    ..Default::default()
                },
            )
            .unwrap(),
        ),
        _ => Model::Cart(
            train_cart(
                &data,
                &CartParams {
                    max_depth: Some(depth),
                    ..Default::default()
                },
            )
            .unwrap(),
        ),
    };
    (model, m)
}

fn shapley_oracle(desk_model: &ModelFile, desk_test: &FeatureTable) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let ensembles = 100;
    for _ in 0..ensembles {
        let (model, m) = random_tree_model(&mut rng);
        for _ in 0..3 {
            let x: Vec<f64> = (0..m)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        f64::NAN
                    } else {
                        f64::from(rng.random_range(0..8))
                    }
                })
                .collect();
            let fast = tree_shap(&model, &x).unwrap();
            let slow = shapley_bruteforce(&model, &x).unwrap();
            worst = worst.max((fast.base_value - slow.base_value).abs());
            for (a, b) in fast.phi.iter().zip(&slow.phi) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let ensemble = desk_model.model.as_ensemble().expect("boosted desk model");
    let mut worst_gap: f64 = 0.0;
    for i in 0..100 {
        let x = desk_test.data.row(i * (desk_test.data.len() / 100));
        let a = tree_shap(&desk_model.model, x).unwrap();
        let f = ensemble.margin(x);
        worst_gap = worst_gap.max((a.base_value + a.phi.iter().sum::<f64>() - f).abs());
    }
    verdict(
        worst <= 1e-6 && worst_gap < 1e-6,
        format!(
            "{ensembles} ensembles: max |tree_shap - brute force| = {worst:.2e}; desk model ({} trees) max local-accuracy gap = {worst_gap:.2e}",
            ensemble.trees.len()
        ),
    )
}

// 5 ------------------------------------------------------------------

type Objective<'a> = dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a;

/// Largest relative error between analytic and central-difference
/// derivatives over `k` random coordinates.
fn worst_relative_error(f: &Objective, theta: &[f64], k: usize, rng: &mut ChaCha8Rng) -> f64 {
    let (_, grad) = f(theta);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..k {
        let i = rng.random_range(0..theta.len());
        let mut p = theta.to_vec();
        p[i] += h;
        let up = f(&p).0;
        p[i] = theta[i] - h;
        let down = f(&p).0;
        let numeric = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    worst
}

fn gradient_checks() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = 6;
    let n = 64;
    let mut data = Dataset::new((0..m).map(|j| format!("x{j}")).collect());
    for _ in 0..n {
        let row: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = u8::from(row[0] - row[1] + rng.random_range(-1.0..1.0) > 0.0);
        data.push_row(&row, y, 1.0).unwrap();
    }
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let rows: Vec<usize> = (0..n).collect();
    let coords = 25;
    let normal = |rng: &mut ChaCha8Rng, k: usize, s: f64| -> Vec<f64> { (0..k).map(|_| rng.random_range(-s..s)).collect() };

    let theta = normal(&mut rng, m + 1, 1.0);
    let lr = worst_relative_error(&|t| logreg_objective(t, &data, &weights, 1e-3), &theta, coords, &mut rng);

    let sizes = [m, 8, 5, 1];
    let n_params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let theta = normal(&mut rng, n_params, 0.8);
    let mlp = worst_relative_error(&|t| mlp_objective(&sizes, t, &data, &weights, &rows), &theta, coords, &mut rng);

    let shape = SoftTreeShape { depth: 3, n_inputs: m };
    let theta = normal(&mut rng, shape.n_params(), 0.8);
    let st = worst_relative_error(
        &|t| soft_tree_objective(&shape, 1.5, 0.1, t, &data, &weights, &rows),
        &theta,
        coords,
        &mut rng,
    );
    verdict(
        lr < 1e-4 && mlp < 1e-4 && st < 1e-4,
        format!("{coords} coordinates each; worst relative error logreg {lr:.1e}, mlp {mlp:.1e}, soft tree {st:.1e}"),
    )
}

// 6 ------------------------------------------------------------------

fn imbalance_direction(d: &Desk, gbdt_none: &ModelFile) -> Verdict {
    let test = &d.test.data;
    let pos_rate = d.train.data.positives() as f64 / d.train.data.len() as f64;
    let mut out = BTreeMap::new();
    for family in [Family::GbdtLgbm, Family::LogReg] {
        for strategy in [ImbalanceStrategy::None, ImbalanceStrategy::WeightAdjust, ImbalanceStrategy::Smote] {
            let m = if family == Family::GbdtLgbm && strategy == ImbalanceStrategy::None {
                metrics(&gbdt_none.predict_dataset(test).unwrap(), test.labels(), 0.5).unwrap()
            } else {
                let f = ModelFile::fit(&ModelSpec::preset(family), &d.train.data, &plan(strategy), None).unwrap();
                metrics(&f.predict_dataset(test).unwrap(), test.labels(), 0.5).unwrap()
            };
            out.insert((family, strategy.label()), m);
        }
    }
    let r = |f: Family, s: &str| out[&(f, s)].recall;
    let f1 = |f: Family, s: &str| out[&(f, s)].f1;
    let mut pass = true;
    let mut parts = Vec::new();
    for family in [Family::GbdtLgbm, Family::LogReg] {
        let base = r(family, "baseline");
        pass &= r(family, "smote") > base && r(family, "weight") > base;
        parts.push(format!(
            "{family} recall {:.3}/{:.3}/{:.3}",
            base,
            r(family, "smote"),
            r(family, "weight")
        ));
    }
    pass &= f1(Family::GbdtLgbm, "weight") > f1(Family::GbdtLgbm, "baseline");
    verdict(
        pass,
        format!(
            "train positive rate {pos_rate:.3}; {} (baseline/smote/weight); gbdt F1 weight {:.4} vs baseline {:.4}",
            parts.join(", "),
            f1(Family::GbdtLgbm, "weight"),
            f1(Family::GbdtLgbm, "baseline")
        ),
    )
}

// 7 ------------------------------------------------------------------

fn sparsity_payoff() -> Verdict {
    let cfg = SynthConfig {
        informative_missingness: true,
        ..desk_config(42)
    };
    let d = desk(&cfg);
    let spec = ModelSpec::preset(Family::GbdtLgbm);
    let none = plan(ImbalanceStrategy::None);
    let sparse = ModelFile::fit(&spec, &d.train.data, &none, None).unwrap();
    let a_sparse = auc(&sparse.predict_dataset(&d.test.data).unwrap(), d.test.data.labels()).unwrap();
    let medians = column_medians(&d.train.data).unwrap();
    let dense_train = apply_imputation(&d.train.data, &medians).unwrap();
    let dense_test = apply_imputation(&d.test.data, &medians).unwrap();
    let dense = ModelFile::fit(&spec, &dense_train, &none, None).unwrap();
    let a_dense = auc(&dense.predict_dataset(&dense_test).unwrap(), dense_test.labels()).unwrap();
    verdict(
        a_sparse - a_dense >= 0.01,
        format!(
            "test AUC with missing values {a_sparse:.4}, median-imputed {a_dense:.4}, gain {:.4}",
            a_sparse - a_dense
        ),
    )
}

// 8 ------------------------------------------------------------------

fn ground_truth_ranking(d: &Desk, model: &ModelFile) -> Verdict {
    let scores = model.predict_dataset(&d.test.data).unwrap();
    let rho = spearman(&scores, &d.test_latent).unwrap();
    let oos = window_schedule()[12];
    let bt = backtest_model(
        &d.store,
        model,
        &oos,
        100,
        &[10, 50, 100],
        &StageMap::default(),
        &FeatureConfig::default(),
    )
    .unwrap();
    let hits = bt.rows.iter().filter(|r| r.label == 1).count() as u64;
    let base = bt.successes as f64 / bt.pool as f64;
    let binom = Binomial::new(base, 100).unwrap();
    let p_value = if hits == 0 { 1.0 } else { binom.sf(hits - 1) };
    verdict(
        rho >= 0.6 && hits as f64 > 100.0 * base && p_value < 0.01,
        format!(
            "Spearman vs latent {rho:.4} on {} held-out rows; top-100 successes {hits} vs expected {:.1} (pool {}), one-sided p = {p_value:.2e}",
            scores.len(),
            100.0 * base,
            bt.pool
        ),
    )
}

// 9 ------------------------------------------------------------------

fn windows_study_shape() -> Verdict {
    let cfg = SynthConfig {
        n_companies: 50_000,
        n_investors: 5_000,
        n_founders: 100_000,
        seed: 5,
        ..SynthConfig::default()
    }
    .with_rate_cycle(0.02);
    let (store, _) = generate(&cfg).unwrap();
    let samples = build_samples(&store);
    let table = FeatureTable::from_samples(&samples, feature_matrix(&store, &samples, &FeatureConfig::default()));
    let spec = ModelSpec::preset(Family::GbdtXgb);
    let weight = plan(ImbalanceStrategy::WeightAdjust);
    let mut pass = true;
    let mut parts = Vec::new();
    for protocol in [StudyProtocol::InSample, StudyProtocol::OutOfSample] {
        let rows = windows_study(&table, &spec, &weight, protocol, 0.5, 7).unwrap();
        let wins = rows.iter().filter(|r| r.multiple_wins()).count();
        let share = wins as f64 / rows.len() as f64;
        let first_same = rows[0].f1_single == rows[0].f1_multiple && rows[0].n_train_single == rows[0].n_train_multiple;
        pass &= share >= 0.7 && first_same;
        parts.push(format!(
            "{protocol:?}: multiple >= single in {wins}/{} windows, first window identical: {first_same}",
            rows.len()
        ));
    }
    verdict(pass, parts.join("; "))
}

// 10 -----------------------------------------------------------------

fn fast_spec(family: Family) -> ModelSpec {
    let mut spec = ModelSpec::preset(family);
    let settings: &[(&str, f64)] = match family {
        Family::GbdtLgbm | Family::GbdtXgb => &[("n_estimators", 40.0)],
        Family::Forest => &[("n_estimators", 20.0), ("max_depth", 12.0)],
        Family::LogReg => &[("epochs", 100.0)],
        Family::Mlp => &[("epochs", 3.0)],
        Family::SoftTree => &[("epochs", 3.0), ("depth", 4.0)],
        Family::Knn | Family::Cart => &[],
    };
    for (k, v) in settings {
        spec.set(k, *v).unwrap();
    }
    spec
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if path.is_dir() {
            for (k, v) in read_tree(&path) {
                out.insert(format!("{name}/{k}"), v);
            }
        } else {
            out.insert(name, std::fs::read(&path).unwrap());
        }
    }
    out
}

/// Runs generate → export → load → samples → features → every model →
/// portfolio into `dir`; returns the number of prediction mismatches after
/// reloading each model file.
fn pipeline(dir: &Path) -> usize {
    let cfg = SynthConfig {
        n_companies: 3_000,
        n_investors: 300,
        n_founders: 6_000,
        seed: 77,
        ..SynthConfig::default()
    };
    let (generated, _) = generate(&cfg).unwrap();
    let export = dir.join("export");
    emit_export(&generated, &export).unwrap();
    let (loaded, _) = load_export(&export).unwrap();
    let (store, _) = filter_companies(&loaded);
    let samples = build_samples(&store);
    write_samples_csv(&samples, &dir.join("samples.csv")).unwrap();
    let table = FeatureTable::from_samples(&samples, feature_matrix(&store, &samples, &FeatureConfig::default()));
    table.write_csv(&dir.join("features.csv")).unwrap();
    let tr: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].window.index <= 10).collect();
    let te: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].window.index >= 11).collect();
    let train = table.subset(&tr);
    let test = table.subset(&te);
    let mut mismatches = 0;
    let mut portfolio_model = None;
    for family in Family::ALL {
        let strategies: &[ImbalanceStrategy] = match family {
            Family::GbdtLgbm => &[ImbalanceStrategy::None, ImbalanceStrategy::Smote],
            Family::Knn => &[ImbalanceStrategy::None],
            _ => &[ImbalanceStrategy::None, ImbalanceStrategy::WeightAdjust],
        };
        for &s in strategies {
            let file = ModelFile::fit(&fast_spec(family), &train.data, &plan(s), train.label_horizon()).unwrap();
            let path = dir.join(format!("model-{family}-{}.json", s.label()));
            file.save(&path).unwrap();
            let before = file.predict_dataset(&test.data).unwrap();
            let after = ModelFile::load(&path).unwrap().predict_dataset(&test.data).unwrap();
            mismatches += before.iter().zip(&after).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
            if family == Family::GbdtLgbm && s == ImbalanceStrategy::None {
                portfolio_model = Some(file);
            }
        }
    }
    let oos = window_schedule()[12];
    let bt = backtest_model(
        &store,
        portfolio_model.as_ref().unwrap(),
        &oos,
        50,
        &[10, 20, 50],
        &StageMap::default(),
        &FeatureConfig::default(),
    )
    .unwrap();
    write_portfolio_csv(&bt.rows, &dir.join("portfolio.csv")).unwrap();
    write_curve_csv(&bt.curve, &dir.join("curve.csv")).unwrap();
    mismatches
}

fn determinism() -> Verdict {
    let mut outputs = Vec::new();
    let mut mismatches = 0;
    for threads in [1, 1, 4] {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        mismatches += pool.install(|| pipeline(dir.path()));
        outputs.push(read_tree(dir.path()));
    }
    let files = outputs[0].len();
    let same_runs = outputs[0] == outputs[1];
    let same_threads = outputs[0] == outputs[2];
    verdict(
        same_runs && same_threads && mismatches == 0 && files > 20,
        format!(
            "{files} artifacts; identical across runs: {same_runs}, across 1 vs 4 threads: {same_threads}; reload prediction mismatches: {mismatches}"
        ),
    )
}

// 11 -----------------------------------------------------------------

/// Adds one event dated `date` (never earlier) to a copy of `parts`.
fn inject(parts: &StoreParts, date: NaiveDate, rng: &mut ChaCha8Rng) -> StoreParts {
    let mut p = parts.clone();
    let n = p.companies.len();
    let c = rng.random_range(0..n);
    match rng.random_range(0..6) {
        0 => {
            let k = rng.random_range(0..=2);
            let investors = (0..k).map(|_| rng.random_range(0..p.investors.len())).collect::<Vec<_>>();
            let mut investors = investors;
            investors.sort_unstable();
            investors.dedup();
            p.rounds.push(FundingRound {
                id: format!("injected-round-{}", p.rounds.len()),
                company: c,
                round_type: [RoundType::Seed, RoundType::A, RoundType::B, RoundType::Debt][rng.random_range(0..4)].clone(),
                announced: date,
                raised_usd: Some(rng.random_range(1e5..1e8)),
                investors,
            });
        }
        1 => p.exits.push(ExitEvent {
            company: c,
            kind: if rng.random_bool(0.5) { ExitKind::Ipo } else { ExitKind::Acquisition },
            date,
        }),
        2 => {
            let co = &mut p.companies[c];
            if co.closed.is_none_or(|d| d > date) {
                co.closed = Some(date);
            }
        }
        3 => p.news.push(NewsItem { company: c, date }),
        4 => {
            // a new company in an existing company's area and industries,
            // started by one of its founders, funded straight away
            let template = p.companies[c].clone();
            let idx = p.companies.len();
            p.companies.push(Company {
                id: format!("injected-company-{idx}"),
                name: "Injected".into(),
                founded: Some(date),
                closed: None,
                ..template
            });
            if let Some(f) = p.founders.iter_mut().find(|f| f.foundings.contains(&c)) {
                f.foundings.push(idx);
            }
            p.rounds.push(FundingRound {
                id: format!("injected-round-{}", p.rounds.len()),
                company: idx,
                round_type: RoundType::Seed,
                announced: date,
                raised_usd: Some(1e6),
                investors: vec![rng.random_range(0..p.investors.len())],
            });
        }
        _ => {
            // an existing investor backs another company
            let inv = rng.random_range(0..p.investors.len());
            p.rounds.push(FundingRound {
                id: format!("injected-round-{}", p.rounds.len()),
                company: c,
                round_type: RoundType::C,
                announced: date,
                raised_usd: None,
                investors: vec![inv],
            });
        }
    }
    p
}

fn window_features(store: &EntityStore, w: &TimeWindow) -> (Vec<SampleEvent>, Vec<FeatureVector>) {
    let samples = build_samples_for(store, std::slice::from_ref(w));
    let engine = FeatureEngine::new(store, FeatureConfig::default());
    let snap = engine.snapshot(w.start);
    let feats = samples.iter().map(|s| engine.features(s.company, &snap)).collect();
    (samples, feats)
}

fn same_cells(a: &FeatureVector, b: &FeatureVector) -> bool {
    a.0.iter()
        .zip(&b.0)
        .all(|(x, y)| x.map(f64::to_bits) == y.map(f64::to_bits))
}

fn temporal_hygiene() -> Verdict {
    let cfg = SynthConfig {
        n_companies: 2_000,
        n_investors: 200,
        n_founders: 4_000,
        seed: 11,
        ..SynthConfig::default()
    };
    let (store, _) = generate(&cfg).unwrap();
    let windows = window_schedule();
    let baseline: Vec<_> = windows.iter().map(|w| window_features(&store, w)).collect();
    let all_samples = build_samples(&store);

    let train_windows: Vec<TimeWindow> = windows[..=10].to_vec();
    let train_samples = build_samples_for(&store, &train_windows);
    let train = FeatureTable::from_samples(&train_samples, feature_matrix(&store, &train_samples, &FeatureConfig::default()));
    let model = ModelFile::fit(
        &fast_spec(Family::GbdtLgbm),
        &train.data,
        &plan(ImbalanceStrategy::None),
        train.label_horizon(),
    )
    .unwrap();
    let oos = windows[12];
    let oos_scores = |s: &EntityStore| -> Vec<u64> {
        let samples = build_samples_for(s, std::slice::from_ref(&oos));
        let data = feature_matrix(s, &samples, &FeatureConfig::default());
        model.predict_dataset(&data).unwrap().iter().map(|v| v.to_bits()).collect()
    };
    let base_scores = oos_scores(&store);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let trials = 1_000;
    let (mut violations, mut feature_checks, mut label_checks, mut score_checks) = (0, 0, 0, 0);
    for _ in 0..trials {
        let w = rng.random_range(0..windows.len());
        let date = windows[w].start + chrono::Duration::days(rng.random_range(0..=600));
        let perturbed = EntityStore::from_parts(inject(store.parts(), date, &mut rng));
        // features at every t_s on or before the event
        let (s0, f0) = &baseline[w];
        let (s1, f1) = window_features(&perturbed, &windows[w]);
        feature_checks += 1;
        let same_pool = s0.len() == s1.len() && s0.iter().zip(&s1).all(|(a, b)| a.company_id == b.company_id);
        if !same_pool || !f0.iter().zip(&f1).all(|(a, b)| same_cells(a, b)) {
            violations += 1;
            continue;
        }
        // labels of every window closed before the event
        for s in all_samples.iter().filter(|s| s.window.end < date) {
            label_checks += 1;
            if label(&perturbed, s.company, &s.window) != s.label {
                violations += 1;
            }
        }
        if date >= oos.start {
            score_checks += 1;
            if oos_scores(&perturbed) != base_scores {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!(
            "{trials} injections: {feature_checks} feature-window checks, {label_checks} label checks, {score_checks} out-of-sample score checks, {violations} violations"
        ),
    )
}

// 12 -----------------------------------------------------------------

fn conditional_reproduction() -> Verdict {
    let cfg = SynthConfig {
        n_companies: 2_000,
        n_investors: 200,
        n_founders: 4_000,
        seed: 13,
        ..SynthConfig::default()
    };
    let (store, _) = generate(&cfg).unwrap();
    let samples = build_samples(&store);
    let rows = label_distribution(&samples, 0.9, 1).unwrap();
    let schedule = window_schedule();
    let labels: Vec<&str> = rows[13..].iter().map(|r| r.t_s.as_str()).collect();
    let table2 = rows.len() == 17
        && schedule
            .iter()
            .zip(&rows)
            .all(|(w, r)| r.t_s == startcast::dates::format_date(w.start) && r.t_f == startcast::dates::format_date(w.end))
        && labels == ["Total", "Train", "Train (SMOTE)", "Test"];
    let stats = round_interval_stats(&store);
    let header = stats.to_csv().lines().next().unwrap_or_default().split(',').count();
    let table1 = header == 6 && !stats.rows.is_empty();
    let mut detail = format!(
        "synthetic structure: label table {} rows ({}), interval table {} columns ({})",
        rows.len(),
        if table2 { "ok" } else { "wrong" },
        header,
        if table1 { "ok" } else { "wrong" }
    );
    match std::env::var("STARTCAST_EXPORT_DIR") {
        Ok(dir) => match load_export(&dir) {
            Ok((raw, _)) => {
                let (real, _) = filter_companies(&raw);
                let real_samples = build_samples(&real);
                let pos = real_samples.iter().filter(|s| s.label == 1).count();
                detail.push_str(&format!(
                    "; export {dir}: {} samples / {pos} successes / {:.2}% (published 398489 / 94509 / 23.72%)",
                    real_samples.len(),
                    100.0 * pos as f64 / real_samples.len().max(1) as f64
                ));
            }
            Err(e) => detail.push_str(&format!("; export {dir} failed to load: {e}")),
        },
        Err(_) => detail.push_str("; no export supplied (set STARTCAST_EXPORT_DIR), totals not reported"),
    }
    verdict(table1 && table2, detail)
}

// --------------------------------------------------------------------

/// Writes past the test harness's output capture so the verdict lines
/// show up in a plain `cargo test` run.
fn report(line: String) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn run(results: &mut Vec<bool>, id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Verdict) {
    let t = Instant::now();
    let v = f();
    let elapsed = t.elapsed();
    let in_time = elapsed <= limit;
    let pass = v.pass && in_time;
    report(format!(
        "{} criterion {id:>2} {name}: {} [{:.1}s of {}s]",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    ));
    results.push(pass);
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    let secs = Duration::from_secs;
    run(&mut results, 1, "random baseline identity", secs(5), random_baseline_identity);
    run(&mut results, 2, "smote balance", secs(60), smote_balance);
    run(&mut results, 3, "split-finding oracle", secs(60), split_oracle);

    let t = Instant::now();
    let d = desk(&desk_config(42));
    let horizon = d.train.label_horizon();
    let gbdt = ModelFile::fit(
        &ModelSpec::preset(Family::GbdtLgbm),
        &d.train.data,
        &plan(ImbalanceStrategy::None),
        horizon,
    )
    .unwrap();
    let shared = t.elapsed();
    report(format!(
        "     shared desk data: {} samples, {} positive, {} latent rows, baseline model in {:.1}s (counted in criteria 6 and 8)",
        d.samples.len(),
        d.samples.iter().filter(|s| s.label == 1).count(),
        d.truth.rows.len(),
        shared.as_secs_f64()
    ));

    run(&mut results, 4, "shapley oracle", secs(60), || shapley_oracle(&gbdt, &d.test));
    run(&mut results, 5, "gradient checks", secs(60), gradient_checks);
    run(&mut results, 6, "imbalance direction", secs(600) - shared, || imbalance_direction(&d, &gbdt));
    run(&mut results, 7, "sparsity payoff", secs(600), sparsity_payoff);
    run(&mut results, 8, "ground-truth ranking", secs(600) - shared, || ground_truth_ranking(&d, &gbdt));
    drop(d);
    run(&mut results, 9, "windows study shape", secs(900), windows_study_shape);
    run(&mut results, 10, "determinism and round trip", secs(300), determinism);
    run(&mut results, 11, "temporal hygiene", secs(300), temporal_hygiene);
    run(&mut results, 12, "conditional reproduction (structure gated, totals reported)", secs(300), conditional_reproduction);

    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, p)| !**p)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
