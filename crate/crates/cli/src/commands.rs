use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use countlab::evaluation::{aggregate, one_way_anova, AnovaResult};
use countlab::gesture::build_gesture_table;
use countlab::training::{run_experiment, Execution, RunReport, StageResult};
use countlab::{ArmModel, GestureTable};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{
    mean_sd_cell, parse_series, run_metadata, series_tsv, write_atomic, ResultRow, ResultsFile,
    RESULTS_FILE,
};

pub fn cmd_build_gestures(cfg: &ExperimentConfig, out: &Path) -> CliResult<GestureTable> {
    let arm = ArmModel::new(cfg.arm.clone())?;
    let table = build_gesture_table(&arm)?;
    write_atomic(out, &table.to_json()?)?;
    Ok(table)
}

fn load_table(cfg: &ExperimentConfig) -> CliResult<GestureTable> {
    if cfg.needs_gesture_table()? {
        if !cfg.gesture_table.exists() {
            return Err(CliError::usage(format!(
                "gesture table {} not found; create it with `countlab build-gestures` first",
                cfg.gesture_table.display()
            )));
        }
        Ok(GestureTable::load(&cfg.gesture_table)?)
    } else {
        // gestures are never read; any valid table will do
        Ok(build_gesture_table(&ArmModel::new(cfg.arm.clone())?)?)
    }
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: RunReport,
    pub wall_seconds: f64,
}

fn write_traces(
    dir: &Path,
    rep: usize,
    stage: &str,
    s: &StageResult,
    parts: &[&str],
) -> CliResult<()> {
    for &part in parts {
        let values = match part {
            "counting" => &s.trace.counting,
            "gesture" => &s.trace.gesture,
            _ => &s.trace.total,
        };
        let path = dir.join(format!("rep{rep:02}-{stage}-{part}.tsv"));
        write_atomic(&path, &series_tsv(part, values))?;
    }
    Ok(())
}

fn write_checkpoint(dir: &Path, rep: usize, stage: &str, s: &StageResult) -> CliResult<()> {
    let path = dir.join(format!("rep{rep:02}-{stage}.json"));
    write_atomic(&path, &s.network.to_json()?)
}

/// Train every repetition, then write the whole run directory at once.
/// Nothing under `<output_dir>/<label>` changes unless all repetitions
/// finished.
pub fn cmd_run(cfg: &ExperimentConfig, execution: Execution) -> CliResult<RunOutcome> {
    let spec = cfg.train_spec()?;
    let table = load_table(cfg)?;
    let label = cfg.label();
    let start = Instant::now();
    let out = run_experiment(&spec, &table, execution)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let dir = cfg.output_dir.join(&label);
    let staging = cfg.output_dir.join(format!(".{label}.partial"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| CliError::io(&staging, e))?;
    }
    let results = ResultsFile {
        metadata: run_metadata(&label, cfg.study, &spec, cfg.desk_scale),
        rows: out.report.rows.iter().map(ResultRow::from).collect(),
    };
    write_atomic(&staging.join(RESULTS_FILE), &results.to_tsv())?;
    write_atomic(
        &staging.join("summary.tsv"),
        &summary_tsv(&label, &out.report),
    )?;
    write_atomic(
        &staging.join("report.json"),
        &serde_json::to_string_pretty(&out.report).map_err(countlab::Error::from)?,
    )?;
    write_atomic(&staging.join("config.toml"), &cfg.to_toml())?;

    let traces = staging.join("traces");
    let checkpoints = staging.join("checkpoints");
    let mut main_parts = Vec::new();
    if spec.condition.number_output {
        main_parts.push("counting");
    }
    if spec.condition.gesture_output {
        main_parts.push("gesture");
    }
    main_parts.push("total");
    for rep in &out.repetitions {
        let i = rep.row.index;
        write_traces(&traces, i, "main", &rep.main, &main_parts)?;
        if let Some(s) = &rep.pretrained.recitation {
            write_traces(&traces, i, "stage1a", s, &["total"])?;
        }
        if let Some(s) = &rep.pretrained.pointing {
            write_traces(&traces, i, "stage1b", s, &["total"])?;
        }
        if cfg.checkpoints {
            write_checkpoint(&checkpoints, i, "main", &rep.main)?;
            if let Some(s) = &rep.pretrained.recitation {
                write_checkpoint(&checkpoints, i, "stage1a", s)?;
            }
            if let Some(s) = &rep.pretrained.pointing {
                write_checkpoint(&checkpoints, i, "stage1b", s)?;
            }
        }
    }
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    fs::rename(&staging, &dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(RunOutcome {
        dir,
        report: out.report,
        wall_seconds,
    })
}

const SUMMARY_COLUMNS: &str =
    "label\trepetitions\tcounting\tgesture\tcounting_mean\tcounting_sd\tgesture_mean\tgesture_sd";

fn summary_tsv(label: &str, report: &RunReport) -> String {
    let num = |s: Option<&countlab::Summary>, sd: bool| {
        s.map_or_else(
            || "NA".to_string(),
            |s| format!("{}", if sd { s.sd } else { s.mean }),
        )
    };
    format!(
        "{SUMMARY_COLUMNS}\n{label}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        report.rows.len(),
        mean_sd_cell(report.counting.as_ref()),
        mean_sd_cell(report.gesture.as_ref()),
        num(report.counting.as_ref(), false),
        num(report.counting.as_ref(), true),
        num(report.gesture.as_ref(), false),
        num(report.gesture.as_ref(), true),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Counting,
    Gesture,
    Stage1bGesture,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Counting => "counting",
            Metric::Gesture => "gesture",
            Metric::Stage1bGesture => "stage1b_gesture",
        }
    }

    fn value(&self, r: &ResultRow) -> Option<f64> {
        match self {
            Metric::Counting => r.counting,
            Metric::Gesture => r.gesture,
            Metric::Stage1bGesture => r.stage1b_gesture,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub result: AnovaResult,
}

/// One-way ANOVA for every pair of result sets, plus an omnibus test over
/// all of them when there are more than two. Written as TSV to `out`.
pub fn cmd_compare(inputs: &[PathBuf], metric: Metric, out: &Path) -> CliResult<Vec<Comparison>> {
    if inputs.len() < 2 {
        return Err(CliError::usage("compare needs at least two result sets"));
    }
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for path in inputs {
        let file = ResultsFile::load(path)?;
        let values: Option<Vec<f64>> = file.rows.iter().map(|r| metric.value(r)).collect();
        let values = values.filter(|v| !v.is_empty()).ok_or_else(|| {
            countlab::Error::InvalidArgument(format!(
                "{} has no {} values; compared runs must share the metric",
                path.display(),
                metric.name()
            ))
        })?;
        groups.push((file.label().to_string(), values));
    }
    let mut comparisons = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let result = one_way_anova(&[&groups[i].1, &groups[j].1])?;
            comparisons.push(Comparison {
                a: groups[i].0.clone(),
                b: groups[j].0.clone(),
                result,
            });
        }
    }
    if groups.len() > 2 {
        let all: Vec<&[f64]> = groups.iter().map(|(_, v)| v.as_slice()).collect();
        comparisons.push(Comparison {
            a: "all".into(),
            b: format!("{} groups", groups.len()),
            result: one_way_anova(&all)?,
        });
    }
    let mut s = format!("# countlab-compare v1\n# metric\t{}\n", metric.name());
    s.push_str("group_a\tgroup_b\tF\tdf_between\tdf_within\tp\n");
    for c in &comparisons {
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            c.a, c.b, c.result.f, c.result.df_between, c.result.df_within, c.result.p
        )
        .unwrap();
    }
    write_atomic(out, &s)?;
    Ok(comparisons)
}

pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub table: PathBuf,
    pub curves: Vec<PathBuf>,
    pub rows: usize,
}

/// Consolidate every run directory under `root` into `root/report/`:
/// `table.tsv` with one row per run, and per run the counting loss of the
/// main stage averaged over repetitions.
pub fn cmd_report(root: &Path) -> CliResult<ReportOutput> {
    let entries = fs::read_dir(root).map_err(|e| CliError::io(root, e))?;
    let mut runs: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(root, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().to_string();
        if path.is_dir()
            && name != REPORT_DIR
            && !name.starts_with('.')
            && path.join(RESULTS_FILE).exists()
        {
            runs.insert(name, path);
        }
    }
    if runs.is_empty() {
        return Err(CliError::usage(format!(
            "no completed runs under {}; produce some with `countlab run`",
            root.display()
        )));
    }
    let report_dir = root.join(REPORT_DIR);
    let mut table = String::from(
        "label\tstudy\tcondition\tconvention\tjordan_loop\tpretraining\tdesk_scale\trepetitions\tcounting\tgesture\n",
    );
    let mut curves = Vec::new();
    for (name, path) in &runs {
        let file = ResultsFile::load(path)?;
        let cell = |f: fn(&ResultRow) -> Option<f64>| -> CliResult<String> {
            let v: Vec<f64> = file.rows.iter().filter_map(f).collect();
            Ok(match v.len() {
                0 => "-".into(),
                1 => format!("{:.1}", 100.0 * v[0]),
                _ => mean_sd_cell(Some(&aggregate(&v)?)),
            })
        };
        let meta = |k: &str| file.get(k).unwrap_or("NA").to_string();
        writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            file.label(),
            meta("study"),
            meta("condition"),
            meta("convention"),
            meta("jordan_loop"),
            meta("pretraining"),
            meta("desk_scale"),
            file.rows.len(),
            cell(|r| r.counting)?,
            cell(|r| r.gesture)?,
        )
        .unwrap();

        let mut sum: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for r in &file.rows {
            let trace = path
                .join("traces")
                .join(format!("rep{:02}-main-counting.tsv", r.repetition));
            if !trace.exists() {
                continue;
            }
            let text = fs::read_to_string(&trace).map_err(|e| CliError::io(&trace, e))?;
            let values = parse_series(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", trace.display())))?;
            if sum.is_empty() {
                sum = vec![0.0; values.len()];
            }
            if values.len() != sum.len() {
                return Err(CliError::usage(format!(
                    "{}: trace length differs from the other repetitions",
                    trace.display()
                )));
            }
            sum.iter_mut().zip(&values).for_each(|(s, v)| *s += v);
            n += 1;
        }
        if n > 0 {
            let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
            let out = report_dir
                .join("curves")
                .join(format!("{name}-counting.tsv"));
            write_atomic(&out, &series_tsv("counting", &mean))?;
            curves.push(out);
        }
    }
    let table_path = report_dir.join("table.tsv");
    write_atomic(&table_path, &table)?;
    Ok(ReportOutput {
        table: table_path,
        curves,
        rows: runs.len(),
    })
}
