use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use modl_core::bench::checkpoint::Checkpoint;
use modl_core::bench::config::FlatConfig;
use modl_core::bench::generate::{
    low_rank_ratings, read_columns_csv, sparse_dict, write_columns_csv, write_matrix_csv, write_ratings_csv,
    RatingsParams, SparseDictParams,
};
use modl_core::bench::trajectory::{convergence_time, load_trajectory, save_trajectory, Score};
use modl_core::completion::{
    complete, cross_validate_lambda, ingest_ratings, CompletionConfig, CompletionOutput, CvConfig, Predictor,
    RatingFormat, RatingsDataset, SplitConfig,
};
use modl_core::{test_objective, ColumnSource, DenseColumns, Learner, LearnerConfig, Metrics, TrajectoryRecord};
use ndarray::Array2;

use crate::settings::{self, usage, NumericError};

/// Options shared by every command that writes a run directory.
pub struct RunOptions {
    pub overwrite: bool,
    pub jobs: usize,
}

/// Runs `f` over `items` on up to `jobs` threads, keeping input order.
fn run_pool<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new(items.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no poisoned runs")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned runs")
        .into_iter()
        .map(|r| r.expect("every item ran"))
        .collect()
}

/// First error in input order, after every run had its chance to finish.
fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn report_text(entries: &[(&str, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn check_finite(records: &[TrajectoryRecord]) -> Result<()> {
    if let Some(r) = records.iter().find(|r| !r.surrogate.is_finite()) {
        return Err(NumericError(format!("surrogate became {} at iteration {}", r.surrogate, r.t)).into());
    }
    Ok(())
}

pub fn generate(cfg: FlatConfig, opts: &RunOptions) -> Result<()> {
    let kind: String = cfg.require("kind")?;
    let out = settings::path(&cfg, "out_dir")?;
    let run_id: String = cfg.get_or("run_id", kind.clone())?;
    let mut summary = Vec::new();
    let write: Box<dyn FnOnce(&Path) -> Result<()>> = match kind.as_str() {
        "sparse-dict" => {
            let d = SparseDictParams::default();
            let snr: String = cfg.get_or("snr", opt(d.snr))?;
            let params = SparseDictParams {
                p: cfg.get_or("p", d.p)?,
                n: cfg.get_or("n", d.n)?,
                n_test: cfg.get_or("n_test", d.n_test)?,
                k: cfg.get_or("k", d.k)?,
                atom_density: cfg.get_or("atom_density", d.atom_density)?,
                code_density: cfg.get_or("code_density", d.code_density)?,
                snr: match snr.as_str() {
                    "none" | "inf" => None,
                    v => Some(v.parse().map_err(|_| usage(format!("snr = {v}: not a number")))?),
                },
                seed: cfg.get_or("seed", d.seed)?,
            };
            cfg.reject_unused()?;
            let data = sparse_dict(&params)?;
            summary.push(("noise_std", data.noise_std.to_string()));
            summary.push(("train_columns", params.n.to_string()));
            summary.push(("test_columns", params.n_test.to_string()));
            Box::new(move |dir: &Path| {
                write_columns_csv(&dir.join("train.csv"), &data.train)?;
                write_columns_csv(&dir.join("test.csv"), &data.test)?;
                write_matrix_csv(&dir.join("dictionary.csv"), data.dictionary.view())?;
                write_matrix_csv(&dir.join("codes.csv"), data.codes.view())?;
                Ok(())
            })
        }
        "low-rank-ratings" => {
            let d = RatingsParams::default();
            let params = RatingsParams {
                n_users: cfg.get_or("n_users", d.n_users)?,
                n_items: cfg.get_or("n_items", d.n_items)?,
                rank: cfg.get_or("rank", d.rank)?,
                density: cfg.get_or("density", d.density)?,
                noise: cfg.get_or("noise", d.noise)?,
                mu: cfg.get_or("mu", d.mu)?,
                bias_std: cfg.get_or("bias_std", d.bias_std)?,
                seed: cfg.get_or("seed", d.seed)?,
            };
            cfg.reject_unused()?;
            let data = low_rank_ratings(&params)?;
            summary.push(("ratings", data.triples.len().to_string()));
            Box::new(move |dir: &Path| {
                write_ratings_csv(&dir.join("ratings.csv"), &data.triples)?;
                write_matrix_csv(&dir.join("user_factors.csv"), data.user_factors.view())?;
                write_matrix_csv(&dir.join("item_factors.csv"), data.item_factors.view())?;
                let column = |v: &[f64]| Array2::from_shape_vec((v.len(), 1), v.to_vec()).expect("column shape");
                write_matrix_csv(&dir.join("user_biases.csv"), column(&data.b_user).view())?;
                write_matrix_csv(&dir.join("item_biases.csv"), column(&data.b_item).view())?;
                Ok(())
            })
        }
        other => {
            return Err(usage(format!(
                "unknown dataset kind `{other}` (expected sparse-dict or low-rank-ratings)"
            )))
        }
    };
    let dir = settings::prepare_run_dir(&out, &run_id, opts.overwrite)?;
    write_text(&dir.join("config.cfg"), &cfg.render())?;
    write(&dir)?;
    let text = report_text(&summary);
    write_text(&dir.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

struct FitVariant {
    suffix: String,
    config: LearnerConfig,
}

/// Variants for the cartesian product of the sweep lists.
fn fit_variants(base: &LearnerConfig, rs: Option<Vec<usize>>, betas: Option<Vec<f64>>) -> Result<Vec<FitVariant>> {
    let mut out = vec![FitVariant {
        suffix: String::new(),
        config: base.clone(),
    }];
    if let Some(rs) = rs {
        out = out
            .into_iter()
            .flat_map(|v| {
                rs.iter().map(move |&r| {
                    let mut config = v.config.clone();
                    config.reduction = r;
                    FitVariant {
                        suffix: format!("{}_r{r}", v.suffix),
                        config,
                    }
                })
            })
            .collect();
    }
    if let Some(betas) = betas {
        out = out
            .into_iter()
            .flat_map(|v| {
                betas.iter().map(move |&b| {
                    let mut config = v.config.clone();
                    config.beta = b;
                    FitVariant {
                        suffix: format!("{}_beta{b}", v.suffix),
                        config,
                    }
                })
            })
            .collect();
    }
    for v in &out {
        v.config.validate()?;
    }
    Ok(out)
}

fn sweep_keys<T: std::str::FromStr>(cfg: &FlatConfig, key: &str, what: &str) -> Result<Option<Vec<T>>> {
    cfg.get::<String>(key)?.map(|s| settings::parse_list(&s, what)).transpose()
}

fn trajectory_summary(records: &[TrajectoryRecord], tolerance: f64) -> Vec<(&'static str, String)> {
    let score = Score::preferred(records);
    let last = records.last();
    vec![
        ("records", records.len().to_string()),
        ("final_t", last.map_or(0, |r| r.t).to_string()),
        ("final_epochs", opt(last.map(|r| r.epochs))),
        ("cpu_time_s", opt(last.map(|r| r.cpu_time_s))),
        ("final_surrogate", opt(last.map(|r| r.surrogate))),
        ("final_test_objective", opt(last.and_then(|r| r.test_objective))),
        ("final_rmse", opt(last.and_then(|r| r.rmse))),
        ("l1_l2_ratio", opt(last.map(|r| r.l1_l2_ratio))),
        ("convergence_score", score_name(score).to_string()),
        ("convergence_time_s", opt(convergence_time(records, score, tolerance))),
    ]
}

fn score_name(s: Score) -> &'static str {
    match s {
        Score::Rmse => "rmse",
        Score::TestObjective => "test_objective",
        Score::Surrogate => "surrogate",
    }
}

fn parse_score(s: &str) -> Result<Score> {
    match s {
        "rmse" => Ok(Score::Rmse),
        "test_objective" | "test-objective" => Ok(Score::TestObjective),
        "surrogate" => Ok(Score::Surrogate),
        other => Err(usage(format!("unknown score `{other}`"))),
    }
}

pub fn fit(mut cfg: FlatConfig, opts: &RunOptions) -> Result<()> {
    let out = settings::path(&cfg, "out_dir")?;
    let run_id: String = cfg.get_or("run_id", "fit".to_string())?;
    let train_path = settings::path(&cfg, "train")?;
    let test_path = cfg.get::<String>("test")?.map(PathBuf::from);
    let resume = cfg.get::<String>("resume")?.map(PathBuf::from);
    let tolerance: f64 = cfg.get_or("tolerance", 1e-3)?;
    let rs = sweep_keys::<usize>(&cfg, "sweep_r", "reduction factor")?;
    let betas = sweep_keys::<f64>(&cfg, "sweep_beta", "beta")?;
    let (base, checkpoint) = match &resume {
        Some(path) => {
            if rs.is_some() || betas.is_some() {
                return Err(usage("sweeps cannot resume from a checkpoint"));
            }
            let mut ckpt = Checkpoint::load(path)?;
            let max_epochs: Option<f64> = cfg.get("max_epochs")?;
            if let Some(e) = max_epochs {
                ckpt.header.config.max_epochs = e;
            }
            if cfg.contains("k") {
                let given = cfg.learner_config()?;
                let mut expected = ckpt.header.config.clone();
                expected.max_epochs = given.max_epochs;
                if given != expected {
                    return Err(usage(format!(
                        "learner settings conflict with checkpoint {}",
                        path.display()
                    )));
                }
            }
            (ckpt.header.config.clone(), Some(ckpt))
        }
        None => (cfg.learner_config()?, None),
    };
    cfg.reject_unused()?;
    let variants = fit_variants(&base, rs, betas)?;

    let train = read_columns_csv(&train_path)?;
    let test = test_path.as_deref().map(read_columns_csv).transpose()?;
    if let Some(t) = &test {
        if t.n_rows() != train.n_rows() {
            return Err(modl_core::ModlError::Dimension(format!(
                "test columns have {} rows, training columns {}",
                t.n_rows(),
                train.n_rows()
            ))
            .into());
        }
    }

    settings::set_all(&mut cfg, &settings::learner_entries(&base));
    cfg.set("tolerance", tolerance);
    let dir = settings::prepare_run_dir(&out, &run_id, opts.overwrite)?;
    write_text(&dir.join("config.cfg"), &cfg.render())?;

    let checkpoint = Mutex::new(checkpoint);
    let results = run_pool(opts.jobs, &variants, |v| {
        let ckpt = checkpoint.lock().expect("no poisoned runs").take();
        fit_one(v, ckpt, &train, test.as_ref(), &dir, tolerance)
    });
    let reports = first_error(results)?;
    let mut stdout = String::new();
    for (v, report) in variants.iter().zip(reports) {
        if !v.suffix.is_empty() {
            writeln!(stdout, "[{}]", v.suffix.trim_start_matches('_'))?;
        }
        stdout.push_str(&report);
    }
    print!("{stdout}");
    Ok(())
}

fn fit_one(
    v: &FitVariant,
    ckpt: Option<Checkpoint>,
    train: &DenseColumns,
    test: Option<&DenseColumns>,
    dir: &Path,
    tolerance: f64,
) -> Result<String> {
    let mut learner = match ckpt {
        Some(c) => Learner::resume(c, train)?,
        None => Learner::new(v.config.clone(), train)?,
    };
    let penalty = v.config.penalty;
    let solver = v.config.solver;
    let status = learner.run(|l| {
        let objective = test
            .map(|t| test_objective(l.dictionary(), t, &penalty, &solver))
            .transpose()?;
        Ok(Metrics {
            test_objective: objective,
            rmse: None,
        })
    });
    let file = |stem: &str, ext: &str| dir.join(format!("{stem}{}.{ext}", v.suffix));
    // the trajectory is kept even when the run fails part way
    save_trajectory(&file("trajectory", "csv"), learner.trajectory())?;
    status?;
    check_finite(learner.trajectory())?;
    learner.checkpoint().save(file("checkpoint", "modl"))?;
    write_matrix_csv(&file("dictionary", "csv"), learner.dictionary().to_matrix().view())?;
    let mut entries = vec![
        ("iterations", learner.t().to_string()),
        ("converged", learner.converged().to_string()),
        ("skipped_samples", learner.skipped_samples().to_string()),
    ];
    entries.extend(trajectory_summary(learner.trajectory(), tolerance));
    let text = report_text(&entries);
    write_text(&file("report", "txt"), &text)?;
    Ok(text)
}

fn completion_config(cfg: &FlatConfig) -> Result<CompletionConfig> {
    let d = CompletionConfig::default();
    let mut c = CompletionConfig {
        k: cfg.get_or("k", d.k)?,
        penalty: modl_core::Penalty::new(
            cfg.get_or("penalty", d.penalty.kind)?,
            cfg.get_or("lambda", d.penalty.lambda)?,
        )?,
        norm: cfg.get_or("norm", d.norm)?,
        mode: d.mode,
        beta: cfg.get_or("beta", d.beta)?,
        batch_size: cfg.get("batch_size")?,
        max_epochs: cfg.get_or("max_epochs", d.max_epochs)?,
        epsilon: cfg.get_or("epsilon", d.epsilon)?,
        eval_interval: cfg.get("eval_interval")?,
        seed: cfg.get_or("seed", d.seed)?,
        eps_b: cfg.get_or("eps_b", d.eps_b)?,
        bias_iters: cfg.get_or("bias_iters", d.bias_iters)?,
        clip: cfg.get_or("clip", d.clip)?,
        solver: modl_core::CodeSolver {
            tol: cfg.get_or("solver_tol", d.solver.tol)?,
            max_cycles: cfg.get_or("solver_max_cycles", d.solver.max_cycles)?,
        },
    };
    c.mode = cfg.get_or("mode", modl_core::ProjectionMode::default_for(c.norm))?;
    c.learner_config(1).validate()?;
    if c.eps_b < 0.0 {
        return Err(usage(format!("eps_b must be nonnegative, got {}", c.eps_b)));
    }
    Ok(c)
}

fn completion_entries(c: &CompletionConfig) -> Vec<(&'static str, String)> {
    let mut out = vec![
        ("k", c.k.to_string()),
        ("penalty", c.penalty.kind.to_string()),
        ("lambda", c.penalty.lambda.to_string()),
        ("norm", c.norm.to_string()),
        ("mode", c.mode.to_string()),
        ("beta", c.beta.to_string()),
        ("max_epochs", c.max_epochs.to_string()),
        ("epsilon", c.epsilon.to_string()),
        ("seed", c.seed.to_string()),
        ("eps_b", c.eps_b.to_string()),
        ("bias_iters", c.bias_iters.to_string()),
        ("clip", c.clip.to_string()),
        ("solver_tol", c.solver.tol.to_string()),
        ("solver_max_cycles", c.solver.max_cycles.to_string()),
    ];
    if let Some(b) = c.batch_size {
        out.push(("batch_size", b.to_string()));
    }
    if let Some(q) = c.eval_interval {
        out.push(("eval_interval", q.to_string()));
    }
    out
}

fn cv_config(cfg: &FlatConfig) -> Result<CvConfig> {
    let d = CvConfig::default();
    Ok(CvConfig {
        grid_size: cfg.get_or("cv_grid_size", d.grid_size)?,
        lambda_min: cfg.get_or("cv_lambda_min", d.lambda_min)?,
        lambda_max: cfg.get_or("cv_lambda_max", d.lambda_max)?,
        splits: cfg.get_or("cv_splits", d.splits)?,
        holdout: cfg.get_or("cv_holdout", d.holdout)?,
        max_epochs: cfg.get("cv_max_epochs")?,
    })
}

fn cv_entries(c: &CvConfig) -> Vec<(&'static str, String)> {
    let mut out = vec![
        ("cv_grid_size", c.grid_size.to_string()),
        ("cv_lambda_min", c.lambda_min.to_string()),
        ("cv_lambda_max", c.lambda_max.to_string()),
        ("cv_splits", c.splits.to_string()),
        ("cv_holdout", c.holdout.to_string()),
    ];
    if let Some(e) = c.max_epochs {
        out.push(("cv_max_epochs", e.to_string()));
    }
    out
}

pub fn complete_cmd(mut cfg: FlatConfig, opts: &RunOptions) -> Result<()> {
    let out = settings::path(&cfg, "out_dir")?;
    let run_id: String = cfg.get_or("run_id", "complete".to_string())?;
    let ratings_path = settings::path(&cfg, "ratings")?;
    let format: Option<RatingFormat> = cfg
        .get::<String>("format")?
        .map(|f| f.parse().map_err(|e: String| usage(e)))
        .transpose()?;
    let tolerance: f64 = cfg.get_or("tolerance", 1e-3)?;
    let base = completion_config(&cfg)?;
    let split = SplitConfig {
        test_fraction: cfg.get_or("test_fraction", SplitConfig::default().test_fraction)?,
        seed: cfg.get_or("split_seed", base.seed)?,
    };
    if !(split.test_fraction > 0.0 && split.test_fraction < 1.0) {
        return Err(usage(format!("test_fraction must lie in (0, 1), got {}", split.test_fraction)));
    }
    let use_cv: bool = cfg.get_or("cv", false)?;
    let cv = cv_config(&cfg)?;
    let betas = sweep_keys::<f64>(&cfg, "sweep_beta", "beta")?;
    cfg.reject_unused()?;
    let variants: Vec<(String, CompletionConfig)> = match betas {
        None => vec![(String::new(), base.clone())],
        Some(bs) => bs
            .into_iter()
            .map(|b| (format!("_beta{b}"), CompletionConfig { beta: b, ..base.clone() }))
            .collect(),
    };
    for (_, c) in &variants {
        c.learner_config(1).validate()?;
    }

    let dataset = ingest_ratings(&ratings_path, format, &split)?;

    settings::set_all(&mut cfg, &completion_entries(&base));
    if use_cv {
        settings::set_all(&mut cfg, &cv_entries(&cv));
    }
    cfg.set("cv", use_cv);
    cfg.set("test_fraction", split.test_fraction);
    cfg.set("split_seed", split.seed);
    cfg.set("tolerance", tolerance);
    let dir = settings::prepare_run_dir(&out, &run_id, opts.overwrite)?;
    write_text(&dir.join("config.cfg"), &cfg.render())?;

    let results = run_pool(opts.jobs, &variants, |(suffix, c)| {
        complete_one(suffix, c, use_cv.then_some(&cv), &dataset, &dir, tolerance)
    });
    let reports = first_error(results)?;
    let mut stdout = String::new();
    for ((suffix, _), report) in variants.iter().zip(reports) {
        if !suffix.is_empty() {
            writeln!(stdout, "[{}]", suffix.trim_start_matches('_'))?;
        }
        stdout.push_str(&report);
    }
    print!("{stdout}");
    Ok(())
}

fn complete_one(
    suffix: &str,
    config: &CompletionConfig,
    cv: Option<&CvConfig>,
    dataset: &RatingsDataset,
    dir: &Path,
    tolerance: f64,
) -> Result<String> {
    let file = |stem: &str, ext: &str| dir.join(format!("{stem}{suffix}.{ext}"));
    let mut config = config.clone();
    if let Some(cv) = cv {
        let report = cross_validate_lambda(dataset, &config, cv)?;
        let mut text = String::from("lambda,rmse\n");
        for (l, s) in report.grid.iter().zip(&report.scores) {
            writeln!(text, "{l},{s}")?;
        }
        write_text(&file("cv", "csv"), &text)?;
        config.penalty.lambda = report.chosen;
    }
    let out = complete(dataset, &config)?;
    save_trajectory(&file("trajectory", "csv"), &out.trajectory)?;
    check_finite(&out.trajectory)?;
    out.checkpoint.save(file("checkpoint", "modl"))?;
    write_predictions(&file("predictions", "csv"), dataset, &out, &config)?;
    let mut entries = vec![
        ("rmse", opt(out.report.rmse)),
        ("scored", out.report.scored.to_string()),
        ("uncovered", out.report.uncovered.to_string()),
        ("cold_start_users", out.report.cold_start_users.to_string()),
        ("lambda", config.penalty.lambda.to_string()),
        ("beta", config.beta.to_string()),
        ("iterations", out.iterations.to_string()),
        ("train_ratings", dataset.train_count().to_string()),
        ("test_ratings", dataset.test_count().to_string()),
    ];
    let traj = trajectory_summary(&out.trajectory, tolerance);
    entries.extend(traj.into_iter().filter(|(k, _)| *k != "final_rmse"));
    let text = report_text(&entries);
    write_text(&file("report", "txt"), &text)?;
    Ok(text)
}

fn write_predictions(path: &Path, dataset: &RatingsDataset, out: &CompletionOutput, config: &CompletionConfig) -> Result<()> {
    let clip = config.clip.then_some((dataset.min_rating, dataset.max_rating));
    let predictor = Predictor::new(&out.biases, &out.dictionary, Some(&out.codes), clip);
    let id = |ids: &[String], i: usize| ids.get(i).cloned().unwrap_or_else(|| i.to_string());
    let mut text = String::from("user,item,rating,prediction\n");
    for u in 0..dataset.n {
        if dataset.train[u].is_empty() {
            continue;
        }
        for &(i, r) in &dataset.test[u] {
            if let Some(pred) = predictor.predict(u, i) {
                writeln!(text, "{},{},{r},{pred}", id(&dataset.user_ids, u), id(&dataset.item_ids, i))?;
            }
        }
    }
    write_text(path, &text)
}

pub fn eval_trajectory(files: &[PathBuf], score: Option<&str>, tolerance: f64) -> Result<()> {
    if !(tolerance >= 0.0) {
        return Err(usage(format!("tolerance must be nonnegative, got {tolerance}")));
    }
    let score = score.map(parse_score).transpose()?;
    let mut text = String::new();
    for path in files {
        let records = load_trajectory(path)?;
        let s = score.unwrap_or_else(|| Score::preferred(&records));
        let last = records.last();
        let entries = vec![
            ("file", path.display().to_string()),
            ("records", records.len().to_string()),
            ("score", score_name(s).to_string()),
            ("final", opt(last.and_then(|r| s.of(r)))),
            ("final_cpu_time_s", opt(last.map(|r| r.cpu_time_s))),
            ("convergence_time_s", opt(convergence_time(&records, s, tolerance))),
        ];
        text.push_str(&report_text(&entries));
    }
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use modl_core::{Norm, Penalty};

    #[test]
    fn pool_keeps_order() {
        let items: Vec<u64> = (0..17).collect();
        for jobs in [1, 3, 40] {
            assert_eq!(run_pool(jobs, &items, |x| x * x), items.iter().map(|x| x * x).collect::<Vec<_>>());
        }
        assert!(run_pool(2, &Vec::<u8>::new(), |x| *x).is_empty());
    }

    #[test]
    fn sweep_product() {
        let base = LearnerConfig::new(3, Penalty::lasso(0.1), Norm::L2);
        let v = fit_variants(&base, Some(vec![1, 4]), Some(vec![0.9, 1.0])).unwrap();
        let names: Vec<&str> = v.iter().map(|v| v.suffix.as_str()).collect();
        assert_eq!(names, ["_r1_beta0.9", "_r1_beta1", "_r4_beta0.9", "_r4_beta1"]);
        assert_eq!(v[2].config.reduction, 4);
        assert_eq!(v[3].config.beta, 1.0);
        assert!(fit_variants(&base, Some(vec![0]), None).is_err());
        assert_eq!(fit_variants(&base, None, None).unwrap()[0].suffix, "");
    }

    #[test]
    fn completion_entries_round_trip() {
        let mut cfg = FlatConfig::new();
        cfg.set("k", 4);
        cfg.set("lambda", 0.3);
        cfg.set("batch_size", 7);
        let c = completion_config(&cfg).unwrap();
        let mut again = FlatConfig::new();
        settings::set_all(&mut again, &completion_entries(&c));
        assert_eq!(completion_config(&again).unwrap(), c);
        again.reject_unused().unwrap();
    }
}
