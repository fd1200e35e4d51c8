//! Plain-text result formats.
//!
//! `results.tsv` starts with a `# countlab-results v1` line, then `# key\tvalue`
//! metadata lines, then a header row and one row per repetition. Missing
//! metrics are written as `NA`. Accuracies are fractions in `[0, 1]`.
//!
//! Loss traces are two-column series: `sub_epoch\t<component>_loss`, with
//! sub-epochs counted from 1.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use countlab::training::{RepetitionRow, TrainSpec};

use crate::error::{CliError, CliResult};

pub const RESULTS_FILE: &str = "results.tsv";
pub const RESULTS_MAGIC: &str = "# countlab-results v1";
const NA: &str = "NA";

const COLUMNS: [&str; 6] = [
    "repetition",
    "seed",
    "counting",
    "gesture",
    "stage1b_gesture",
    "stage1a_recites",
];

/// Write through a sibling temporary file so readers never see half a file.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub repetition: usize,
    pub seed: u64,
    pub counting: Option<f64>,
    pub gesture: Option<f64>,
    pub stage1b_gesture: Option<f64>,
    pub stage1a_recites: Option<bool>,
}

impl From<&RepetitionRow> for ResultRow {
    fn from(r: &RepetitionRow) -> Self {
        ResultRow {
            repetition: r.index,
            seed: r.seed,
            counting: r.counting,
            gesture: r.gesture,
            stage1b_gesture: r.stage1b_gesture,
            stage1a_recites: r.stage1a_recites,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsFile {
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<ResultRow>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

/// Metadata describing how a run was produced, in a fixed order.
pub fn run_metadata(
    label: &str,
    study: u8,
    spec: &TrainSpec,
    desk_scale: f64,
) -> Vec<(String, String)> {
    let mut m: Vec<(&str, String)> = vec![
        ("label", label.to_string()),
        ("study", study.to_string()),
        (
            "condition",
            opt(spec.condition.study1_id().filter(|_| study == 1)),
        ),
        ("visual_input", spec.condition.visual_input.to_string()),
        ("gesture_input", spec.condition.gesture_input.to_string()),
        ("number_output", spec.condition.number_output.to_string()),
        ("gesture_output", spec.condition.gesture_output.to_string()),
        ("jordan_loop", spec.condition.jordan_loop.to_string()),
        ("convention", spec.convention().to_string()),
        ("pretraining", spec.pretraining.to_string()),
        ("feedback_mode", spec.feedback_mode.to_string()),
        ("base_seed", spec.base_seed.to_string()),
        ("repetitions", spec.repetitions.to_string()),
        ("test_sets", spec.test_sets.to_string()),
        ("sub_epochs", spec.sub_epochs.to_string()),
        ("learning_rate", spec.learning_rate.to_string()),
        ("hidden_size", spec.hidden_size.to_string()),
    ];
    for (name, used, s) in [
        ("stage1a", spec.pretraining.uses_recitation(), &spec.stage1a),
        ("stage1b", spec.pretraining.uses_pointing(), &spec.stage1b),
    ] {
        if used {
            m.push((
                name,
                format!(
                    "epochs={} learning_rate={} hidden_size={}",
                    s.epochs, s.learning_rate, s.hidden_size
                ),
            ));
        }
    }
    m.push(("desk_scale", desk_scale.to_string()));
    m.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

impl ResultsFile {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn label(&self) -> &str {
        self.get("label").unwrap_or("?")
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{RESULTS_MAGIC}").unwrap();
        for (k, v) in &self.metadata {
            writeln!(s, "# {k}\t{v}").unwrap();
        }
        writeln!(s, "{}", COLUMNS.join("\t")).unwrap();
        for r in &self.rows {
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.repetition,
                r.seed,
                opt(r.counting),
                opt(r.gesture),
                opt(r.stage1b_gesture),
                opt(r.stage1a_recites)
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<ResultsFile, String> {
        let mut lines = text.lines();
        if lines.next() != Some(RESULTS_MAGIC) {
            return Err(format!(
                "not a results file (expected first line {RESULTS_MAGIC:?})"
            ));
        }
        let mut metadata = Vec::new();
        let mut header_seen = false;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            if let Some(meta) = line.strip_prefix("# ") {
                let (k, v) = meta
                    .split_once('\t')
                    .ok_or_else(|| format!("line {lineno}: malformed metadata"))?;
                metadata.push((k.to_string(), v.to_string()));
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !header_seen {
                if fields != COLUMNS {
                    return Err(format!("line {lineno}: unexpected header {line:?}"));
                }
                header_seen = true;
                continue;
            }
            if fields.len() != COLUMNS.len() {
                return Err(format!("line {lineno}: expected {} fields", COLUMNS.len()));
            }
            let bad = |what: &str| format!("line {lineno}: bad {what}");
            let num = |f: &str, what: &str| -> Result<Option<f64>, String> {
                if f == NA {
                    Ok(None)
                } else {
                    f.parse().map(Some).map_err(|_| bad(what))
                }
            };
            rows.push(ResultRow {
                repetition: fields[0].parse().map_err(|_| bad("repetition"))?,
                seed: fields[1].parse().map_err(|_| bad("seed"))?,
                counting: num(fields[2], "counting")?,
                gesture: num(fields[3], "gesture")?,
                stage1b_gesture: num(fields[4], "stage1b_gesture")?,
                stage1a_recites: match fields[5] {
                    NA => None,
                    f => Some(f.parse().map_err(|_| bad("stage1a_recites"))?),
                },
            });
        }
        if !header_seen {
            return Err("missing header row".into());
        }
        Ok(ResultsFile { metadata, rows })
    }

    /// Load a results file, or the `results.tsv` inside a run directory.
    pub fn load(path: &Path) -> CliResult<ResultsFile> {
        let file = if path.is_dir() {
            path.join(RESULTS_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
        Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", file.display())))
    }
}

pub fn series_tsv(component: &str, values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 24);
    writeln!(s, "sub_epoch\t{component}_loss").unwrap();
    for (i, v) in values.iter().enumerate() {
        writeln!(s, "{}\t{v}", i + 1).unwrap();
    }
    s
}

pub fn parse_series(text: &str) -> Result<Vec<f64>, String> {
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(i, l)| {
            l.split_once('\t')
                .and_then(|(_, v)| v.parse().ok())
                .ok_or_else(|| format!("line {}: malformed series entry", i + 2))
        })
        .collect()
}

/// `90.3 (4.9)` style cell from fractions; `-` when absent.
pub fn mean_sd_cell(summary: Option<&countlab::Summary>) -> String {
    match summary {
        Some(s) => format!("{:.1} ({:.1})", 100.0 * s.mean, 100.0 * s.sd),
        None => "-".to_string(),
    }
}
