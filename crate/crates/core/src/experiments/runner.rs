//! Runs every seed of an experiment, aggregates per condition and writes
//! CSV, JSON and SVG outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::plot::{self, Bar, Series};
use super::protocol;
use super::registry;
use super::ExperimentError;
use crate::game::GameSpec;
use crate::harness::RunRecord;
use crate::metrics::{self, stats};

/// Seed-level aggregate of one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub game: String,
    pub n: usize,
    pub mean: f64,
    /// Student-t half-width over per-seed means; NaN for a single seed.
    pub ci95: f64,
    pub normalized: f64,
    pub cac_w: Option<f64>,
    pub cac_v: Option<f64>,
    pub masked_states: Option<f64>,
    pub seen_states: Option<f64>,
    pub decision_mask_rate: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub config: ExperimentConfig,
    pub records: Vec<RunRecord>,
    pub summaries: Vec<ConditionSummary>,
    /// Experiment-level statistics (correlations, ratios, fits).
    pub extras: BTreeMap<String, f64>,
}

impl Report {
    pub fn summary(&self, condition: &str) -> Option<&ConditionSummary> {
        self.summaries.iter().find(|s| s.condition == condition)
    }

    pub fn mean(&self, condition: &str) -> f64 {
        self.summary(condition).map_or(f64::NAN, |s| s.mean)
    }

    /// Records of one condition in seed order.
    pub fn records_of<'a>(&'a self, condition: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records.iter().filter(move |r| r.condition == condition)
    }
}

/// Run all seeds of `cfg` in memory.
pub fn collect(cfg: &ExperimentConfig) -> Result<Report, ExperimentError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    let per_seed: Vec<Result<Vec<RunRecord>, ExperimentError>> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                log::info!("{}: seed {seed} started", cfg.id);
                let out = registry::run_seed(cfg, seed);
                log::info!("{}: seed {seed} finished", cfg.id);
                out
            })
            .collect()
    });
    let mut records = Vec::new();
    for r in per_seed {
        records.extend(r?);
    }
    Ok(analyze(cfg.clone(), records))
}

/// Aggregate records that already exist.
pub fn analyze(config: ExperimentConfig, records: Vec<RunRecord>) -> Report {
    let summaries = summarize(&records);
    let extras = experiment_extras(&config, &records);
    Report { config, records, summaries, extras }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<_>>>()?;
    (!v.is_empty()).then(|| stats::mean(&v))
}

pub fn summarize(records: &[RunRecord]) -> Vec<ConditionSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.condition.as_str()) {
            order.push(&r.condition);
        }
    }
    order
        .into_iter()
        .map(|condition| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.condition == condition).collect();
            let means: Vec<f64> = rs.iter().map(|r| r.eval_mean).collect();
            let mean = stats::mean(&means);
            let ci95 = metrics::mean_ci95(&means).map_or(f64::NAN, |c| c.ci95);
            let game = rs[0].game.clone();
            let normalized = GameSpec::by_name(&game).map_or(f64::NAN, |s| metrics::normalize(mean, s.reward_bounds));
            ConditionSummary {
                condition: condition.to_string(),
                game,
                n: rs.len(),
                mean,
                ci95,
                normalized,
                cac_w: mean_of(rs.iter().map(|r| r.cac_w)),
                cac_v: mean_of(rs.iter().map(|r| r.cac_v)),
                masked_states: mean_of(rs.iter().map(|r| r.diagnostics.as_ref().map(|d| d.masked_states as f64))),
                seen_states: mean_of(rs.iter().map(|r| r.diagnostics.as_ref().map(|d| d.seen_states as f64))),
                decision_mask_rate: mean_of(rs.iter().map(|r| r.diagnostics.as_ref().map(|d| d.decision_mask_rate))),
            }
        })
        .collect()
}

/// Pearson r of CAC against reward over condition means; `filter` picks
/// the conditions.
pub fn cac_correlation(summaries: &[ConditionSummary], filter: impl Fn(&str) -> bool) -> (f64, f64, usize) {
    let rows: Vec<&ConditionSummary> =
        summaries.iter().filter(|s| filter(&s.condition) && s.cac_w.is_some() && s.cac_v.is_some()).collect();
    let reward: Vec<f64> = rows.iter().map(|s| s.mean).collect();
    let w: Vec<f64> = rows.iter().map(|s| s.cac_w.expect("filtered")).collect();
    let v: Vec<f64> = rows.iter().map(|s| s.cac_v.expect("filtered")).collect();
    let r_w = metrics::pearson(&w, &reward).unwrap_or(f64::NAN);
    let r_v = metrics::pearson(&v, &reward).unwrap_or(f64::NAN);
    (r_w, r_v, rows.len())
}

/// Per-game ratio of adversarial to random reward, one value per seed.
pub fn scaling_ratios(records: &[RunRecord]) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for adv in records.iter().filter(|r| r.condition.ends_with("/adversarial")) {
        let prefix = adv.condition.trim_end_matches("/adversarial");
        let random = records.iter().find(|r| r.seed == adv.seed && r.condition == format!("{prefix}/random"));
        if let Some(random) = random {
            out.entry(prefix.to_string()).or_default().push(adv.eval_mean / random.eval_mean);
        }
    }
    out
}

fn experiment_extras(cfg: &ExperimentConfig, records: &[RunRecord]) -> BTreeMap<String, f64> {
    let mut extras = BTreeMap::new();
    let summaries = summarize(records);
    match cfg.id.as_str() {
        "budget-sweep" | "cac-correlation" => {
            let (r_w, r_v, n) = cac_correlation(&summaries, |_| true);
            extras.insert("pearson_cac_w".into(), r_w);
            extras.insert("pearson_cac_v".into(), r_v);
            extras.insert("pearson_p_cac_w".into(), stats::pearson_p_value(r_w, n));
            extras.insert("pearson_p_cac_v".into(), stats::pearson_p_value(r_v, n));
            extras.insert("conditions".into(), n as f64);
            let (adv_w, adv_v, _) = cac_correlation(&summaries, |c| c.starts_with("adversarial"));
            extras.insert("pearson_cac_w_adversarial".into(), adv_w);
            extras.insert("pearson_cac_v_adversarial".into(), adv_v);
            let per_run: Vec<&RunRecord> = records.iter().filter(|r| r.cac_w.is_some()).collect();
            let reward: Vec<f64> = per_run.iter().map(|r| r.eval_mean).collect();
            let w: Vec<f64> = per_run.iter().map(|r| r.cac_w.expect("filtered")).collect();
            extras.insert("pearson_cac_w_per_run".into(), metrics::pearson(&w, &reward).unwrap_or(f64::NAN));
        }
        "dqn-scale" | "neural-nfsp-leduc5" => {
            let ratios = scaling_ratios(records);
            let mut sizes = Vec::new();
            let mut means = Vec::new();
            for (game, rs) in &ratios {
                let m = stats::mean(rs);
                extras.insert(format!("ratio/{game}"), m);
                if let Ok(spec) = GameSpec::by_name(game) {
                    if let Some(n) = protocol::state_count(&spec) {
                        extras.insert(format!("states/{game}"), n as f64);
                        sizes.push(n as f64);
                        means.push(m);
                    }
                }
            }
            if let Ok(fit) = metrics::log_linear_fit(&sizes, &means) {
                extras.insert("fit_slope".into(), fit.slope);
                extras.insert("fit_r2".into(), fit.r2);
            }
        }
        _ => {}
    }
    extras
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        String::new()
    }
}

/// The results table: one row per (condition, seed), then one summary row
/// per condition with `seed = mean`.
pub fn results_csv(report: &Report) -> String {
    let mut out = String::from("condition,seed,raw_mean,ci95,normalized,cac_w,cac_v,masked_states,seen_states,decision_mask_rate\n");
    for r in &report.records {
        let bounds = GameSpec::by_name(&r.game).map(|s| s.reward_bounds);
        let norm = bounds.map_or(f64::NAN, |b| metrics::normalize(r.eval_mean, b));
        let ci = if r.eval_episodes > 1 { 1.96 * r.eval_std / (r.eval_episodes as f64).sqrt() } else { f64::NAN };
        let d = r.diagnostics.as_ref();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.condition,
            r.seed,
            fmt_f(r.eval_mean),
            fmt_f(ci),
            fmt_f(norm),
            fmt_opt(r.cac_w),
            fmt_opt(r.cac_v),
            d.map_or(String::new(), |d| d.masked_states.to_string()),
            d.map_or(String::new(), |d| d.seen_states.to_string()),
            fmt_opt(d.map(|d| d.decision_mask_rate)),
        );
    }
    for s in &report.summaries {
        let _ = writeln!(
            out,
            "{},mean,{},{},{},{},{},{},{},{}",
            s.condition,
            fmt_f(s.mean),
            fmt_f(s.ci95),
            fmt_f(s.normalized),
            fmt_opt(s.cac_w),
            fmt_opt(s.cac_v),
            fmt_opt(s.masked_states),
            fmt_opt(s.seen_states),
            fmt_opt(s.decision_mask_rate),
        );
    }
    out
}

fn file_stem(condition: &str) -> String {
    condition.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Run `cfg` and write everything under `<out_root>/<id>/`.
pub fn run_experiment(cfg: &ExperimentConfig, out_root: &Path) -> Result<Report, ExperimentError> {
    let dir = out_root.join(&cfg.id);
    fs::create_dir_all(dir.join("runs"))?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let report = collect(cfg)?;
    write_outputs(&report, &dir)?;
    Ok(report)
}

pub fn write_outputs(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let id = &report.config.id;
    fs::create_dir_all(dir.join("runs"))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<(), ExperimentError> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put(&format!("{id}.csv"), results_csv(report))?;
    let mut extras = format!("# config_hash {}\nkey,value\n", report.config.hash());
    for (k, v) in &report.extras {
        let _ = writeln!(extras, "{k},{}", fmt_f(*v));
    }
    put("summary.csv", extras)?;
    if matches!(id.as_str(), "budget-sweep" | "cac-correlation") {
        put("correlation.csv", correlation_csv(report))?;
    }
    // The index prefix keeps a sorted directory listing in record order.
    for (i, r) in report.records.iter().enumerate() {
        let name = format!("runs/{i:04}-{}-{}.json", file_stem(&r.condition), r.seed);
        put(&name, serde_json::to_string_pretty(r)?)?;
    }
    for (name, svg) in plots(report) {
        put(&name, svg)?;
    }
    Ok(written)
}

fn correlation_csv(report: &Report) -> String {
    let mut out = String::from("condition,k,reward,ci95,cac_w,cac_v\n");
    for s in &report.summaries {
        let k = report.records_of(&s.condition).next().and_then(|r| r.extra.get("k").copied());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.condition,
            fmt_opt(k),
            fmt_f(s.mean),
            fmt_f(s.ci95),
            fmt_opt(s.cac_w),
            fmt_opt(s.cac_v)
        );
    }
    out
}

fn ci_or_zero(xs: &[f64]) -> f64 {
    metrics::mean_ci95(xs).map_or(0.0, |c| c.ci95)
}

/// Every plot an experiment produces, as (file name, SVG).
pub fn plots(report: &Report) -> Vec<(String, String)> {
    let id = &report.config.id;
    let bars: Vec<Bar> = report
        .summaries
        .iter()
        .map(|s| Bar { label: s.condition.clone(), mean: s.mean, ci: if s.ci95.is_finite() { s.ci95 } else { 0.0 } })
        .collect();
    let mut out = vec![(format!("{id}.svg"), plot::bar_chart(id, "evaluation reward (player 0)", &bars))];

    if matches!(id.as_str(), "budget-sweep" | "cac-correlation") {
        let series = ["adversarial", "random"]
            .iter()
            .map(|label| {
                let points = report
                    .summaries
                    .iter()
                    .filter(|s| s.condition.starts_with(&format!("{label}-k")))
                    .filter_map(|s| {
                        let k = report.records_of(&s.condition).next()?.extra.get("k").copied()?;
                        Some((k, s.mean, if s.ci95.is_finite() { s.ci95 } else { 0.0 }))
                    })
                    .collect();
                Series { name: label.to_string(), points }
            })
            .collect::<Vec<_>>();
        out.push(("reward-vs-budget.svg".into(), plot::line_chart("reward vs budget", "k", "reward", &series)));
    }

    if matches!(id.as_str(), "dqn-scale" | "neural-nfsp-leduc5") {
        let points = scaling_ratios(&report.records)
            .into_iter()
            .filter_map(|(game, rs)| {
                let n = protocol::state_count(&GameSpec::by_name(&game).ok()?)?;
                Some(((n as f64).log10(), stats::mean(&rs), ci_or_zero(&rs)))
            })
            .collect();
        let series = [Series { name: "adversarial / random".into(), points }];
        out.push(("scaling.svg".into(), plot::line_chart("damage ratio vs size", "log10 player-0 states", "ratio", &series)));
    }

    if id == "learning-curves" || id == "neural-nfsp-leduc5" {
        let series: Vec<Series> = report
            .summaries
            .iter()
            .filter(|s| !s.condition.ends_with("/none"))
            .map(|s| {
                let runs: Vec<&RunRecord> = report.records_of(&s.condition).collect();
                let len = runs.iter().map(|r| r.windows.len()).min().unwrap_or(0);
                let points = (0..len)
                    .map(|i| {
                        let xs: Vec<f64> = runs.iter().map(|r| r.windows[i]).collect();
                        (i as f64, stats::mean(&xs), ci_or_zero(&xs))
                    })
                    .collect();
                Series { name: s.condition.clone(), points }
            })
            .collect();
        out.push(("learning-curves.svg".into(), plot::line_chart("training reward", "window", "mean reward", &series)));
    }
    out
}

/// Regenerate plots from a finished output directory.
pub fn plot_dir(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let config = ExperimentConfig::from_toml(&fs::read_to_string(dir.join("config.toml"))?)?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.join("runs"))
        .map_err(|_| ExperimentError::MissingInputs(dir.display().to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(ExperimentError::MissingInputs(dir.display().to_string()));
    }
    let mut records = Vec::new();
    for p in paths {
        records.push(serde_json::from_str::<RunRecord>(&fs::read_to_string(p)?)?);
    }
    let report = analyze(config, records);
    let mut written = Vec::new();
    for (name, svg) in plots(&report) {
        let path = dir.join(name);
        fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::MaskDiagnostics;

    fn record(condition: &str, seed: u64, mean: f64) -> RunRecord {
        RunRecord {
            experiment: "kuhn-tabular".into(),
            condition: condition.into(),
            seed,
            game: "kuhn".into(),
            eval_mean: mean,
            diagnostics: Some(MaskDiagnostics { masked_states: 2, seen_states: 6, decision_mask_rate: 0.5 }),
            ..RunRecord::default()
        }
    }

    #[test]
    fn summaries_keep_first_seen_order_and_normalize() {
        let records = vec![record("b", 1, -1.0), record("a", 1, 0.0), record("b", 2, -0.5), record("a", 2, 0.2)];
        let s = summarize(&records);
        assert_eq!(s[0].condition, "b");
        assert_eq!(s[0].n, 2);
        assert!((s[0].mean + 0.75).abs() < 1e-12);
        // Kuhn bounds (-2, 2): (-0.75 + 2) / 4.
        assert!((s[0].normalized - 0.3125).abs() < 1e-12);
        assert_eq!(s[1].masked_states, Some(2.0));
    }

    #[test]
    fn csv_has_schema_header_and_summary_rows() {
        let cfg = registry::default_config("kuhn-tabular").unwrap();
        let report = analyze(cfg, vec![record("a", 1, 0.1), record("a", 2, 0.3)]);
        let csv = results_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "condition,seed,raw_mean,ci95,normalized,cac_w,cac_v,masked_states,seen_states,decision_mask_rate");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("a,mean,0.200000,"));
    }

    #[test]
    fn scaling_ratio_pairs_by_seed() {
        let records = vec![
            record("leduc/random", 1, -1.0),
            record("leduc/adversarial", 1, -2.5),
            record("leduc/random", 2, -0.5),
            record("leduc/adversarial", 2, -2.0),
        ];
        let r = scaling_ratios(&records);
        assert_eq!(r["leduc"], vec![2.5, 4.0]);
    }

    #[test]
    fn plot_dir_reproduces_plots_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = registry::default_config("kuhn-tabular").unwrap();
        cfg.seeds = vec![1, 2];
        let report = analyze(cfg.clone(), vec![record("none", 1, 0.1), record("adversarial", 1, -1.0), record("none", 2, 0.3), record("adversarial", 2, -0.8)]);
        fs::write(dir.path().join("config.toml"), cfg.to_toml()).unwrap();
        write_outputs(&report, dir.path()).unwrap();
        let before = fs::read(dir.path().join("kuhn-tabular.svg")).unwrap();
        plot_dir(dir.path()).unwrap();
        assert_eq!(fs::read(dir.path().join("kuhn-tabular.svg")).unwrap(), before);
    }

    #[test]
    fn plot_dir_without_runs_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = registry::default_config("kuhn-tabular").unwrap();
        fs::write(dir.path().join("config.toml"), cfg.to_toml()).unwrap();
        assert!(matches!(plot_dir(dir.path()), Err(ExperimentError::MissingInputs(_))));
    }
}
