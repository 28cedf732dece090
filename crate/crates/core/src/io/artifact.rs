use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::{push_joined, push_matrix, read_to_string, write_atomic, Cursor};
use crate::attack::PatchArtifact;
use crate::error::{GuapError, Result};
use crate::eval::{EvalReport, SweepTable};
use crate::featgen::FeatureStats;
use crate::gcn::{GcnParams, TrainConfig};

pub const ARTIFACT_HEADER: &str = "guap-artifact v1";
pub const MODEL_HEADER: &str = "guap-model v1";
pub const REPORT_HEADER: &str = "guap-report v1";

fn check_header(cursor: &mut Cursor, expected: &str) -> Result<()> {
    let line = cursor.next_line()?;
    if line == expected {
        return Ok(());
    }
    let kind = expected.split(' ').next().unwrap_or(expected);
    match line.split_once(' ') {
        Some((k, version)) if k == kind => Err(GuapError::UnsupportedFormat(format!(
            "{kind} version `{version}`, this build reads {expected}"
        ))),
        _ => Err(GuapError::UnsupportedFormat(format!(
            "expected `{expected}` header, found `{line}`"
        ))),
    }
}

fn row_matrix(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("single row")
}

fn artifact_text(a: &PatchArtifact) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{ARTIFACT_HEADER}");
    let _ = writeln!(out, "n {}", a.n);
    let _ = writeln!(out, "m {}", a.m);
    let _ = writeln!(out, "seed {}", a.seed);
    let _ = writeln!(out, "best_epoch {}", a.best_epoch);
    let _ = writeln!(out, "best_asr {}", a.best_asr);
    let _ = writeln!(out, "degenerate_skips {}", a.degenerate_skips);
    for (key, values) in [
        ("asr_trace", a.asr_trace.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
        ("igp_per_epoch", a.igp_per_epoch.iter().map(|x| x.to_string()).collect()),
        ("targets_per_epoch", a.targets_per_epoch.iter().map(|x| x.to_string()).collect()),
    ] {
        out.push_str(key);
        out.push(' ');
        push_joined(&mut out, values.iter());
        out.push('\n');
    }
    let _ = writeln!(out, "stats_binary {}", a.stats.binary);
    let _ = writeln!(out, "hyper {}", serde_json::to_string(&a.hyper)?);
    push_matrix(&mut out, "features", &a.features);
    push_matrix(&mut out, "border", &a.border);
    push_matrix(&mut out, "patch_block", &a.patch_block);
    push_matrix(&mut out, "stats_mean", &row_matrix(&a.stats.mean));
    push_matrix(&mut out, "stats_variance", &row_matrix(&a.stats.variance));
    let _ = writeln!(out, "meta.seconds {}", a.seconds);
    out.push_str("end\n");
    Ok(out)
}

/// Writes the artifact as a self-describing text document. Every float is
/// written in its shortest round-trip form, so loading gives back identical bits.
pub fn save_patch(artifact: &PatchArtifact, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &artifact_text(artifact)?)
}

pub fn load_patch(path: impl AsRef<Path>) -> Result<PatchArtifact> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut c = Cursor::new(path, &text);
    check_header(&mut c, ARTIFACT_HEADER)?;
    let n = c.parsed("n")?;
    let m = c.parsed("m")?;
    let seed = c.parsed("seed")?;
    let best_epoch = c.parsed("best_epoch")?;
    let best_asr = c.parsed("best_asr")?;
    let degenerate_skips = c.parsed("degenerate_skips")?;
    let asr_trace = c.list("asr_trace")?;
    let igp_per_epoch = c.list("igp_per_epoch")?;
    let targets_per_epoch = c.list("targets_per_epoch")?;
    let binary = c.parsed("stats_binary")?;
    let hyper_json = c.field("hyper")?;
    let hyper = serde_json::from_str(hyper_json).map_err(|e| c.error(format!("bad hyper: {e}")))?;
    let features = c.matrix("features")?;
    let border = c.matrix("border")?;
    let patch_block = c.matrix("patch_block")?;
    let mean = c.matrix("stats_mean")?;
    let variance = c.matrix("stats_variance")?;
    let seconds = c.parsed("meta.seconds")?;
    c.expect_end()?;
    if border.dim() != (n, m) || patch_block.dim() != (m, m) || features.nrows() != m {
        return Err(c.error(format!(
            "block shapes {:?} / {:?} / {:?} disagree with n = {n}, m = {m}",
            border.dim(),
            patch_block.dim(),
            features.dim()
        )));
    }
    if mean.ncols() != features.ncols() || variance.ncols() != features.ncols() {
        return Err(c.error("feature statistics do not match the feature dimension"));
    }
    Ok(PatchArtifact {
        n,
        m,
        features,
        border,
        patch_block,
        stats: FeatureStats {
            mean: mean.into_raw_vec_and_offset().0,
            variance: variance.into_raw_vec_and_offset().0,
            binary,
        },
        hyper,
        seed,
        asr_trace,
        best_epoch,
        best_asr,
        igp_per_epoch,
        targets_per_epoch,
        degenerate_skips,
        seconds,
    })
}

/// Trained victim weights plus how they were obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub params: GcnParams,
    pub dataset: String,
    pub train: TrainConfig,
    pub acc_test: f64,
}

impl SavedModel {
    pub fn new(params: GcnParams, dataset: impl Into<String>, train: TrainConfig, acc_test: f64) -> Self {
        Self {
            params,
            dataset: dataset.into(),
            train,
            acc_test,
        }
    }
}

pub fn save_model(model: &SavedModel, path: impl AsRef<Path>) -> Result<()> {
    let params = &model.params;
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_HEADER}");
    let _ = writeln!(out, "dataset {}", model.dataset);
    let _ = writeln!(out, "train {}", serde_json::to_string(&model.train)?);
    let _ = writeln!(out, "acc_test {}", model.acc_test);
    push_matrix(&mut out, "w0", &params.w0);
    push_matrix(&mut out, "w1", &params.w1);
    out.push_str("end\n");
    write_atomic(path.as_ref(), &out)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut c = Cursor::new(path, &text);
    check_header(&mut c, MODEL_HEADER)?;
    let dataset = c.field("dataset")?.to_string();
    let train_json = c.field("train")?;
    let train = serde_json::from_str(train_json).map_err(|e| c.error(format!("bad train config: {e}")))?;
    let acc_test = c.parsed("acc_test")?;
    let w0 = c.matrix("w0")?;
    let w1 = c.matrix("w1")?;
    c.expect_end()?;
    let params = GcnParams::new(w0, w1).map_err(|e| c.error(e.to_string()))?;
    Ok(SavedModel::new(params, dataset, train, acc_test))
}

/// Header line followed by the report as indented JSON.
pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let body = serde_json::to_string_pretty(report)?;
    write_atomic(path.as_ref(), &format!("{REPORT_HEADER}\n{body}\n"))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut c = Cursor::new(path, &text);
    check_header(&mut c, REPORT_HEADER)?;
    let body = text.split_once('\n').map_or("", |(_, b)| b);
    serde_json::from_str(body).map_err(|e| GuapError::Parse {
        path: path.to_path_buf(),
        line: e.line() + 1,
        message: e.to_string(),
    })
}

pub fn write_sweep_csv(table: &SweepTable, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &table.to_csv())
}
