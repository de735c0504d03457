use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cosmargin::dataio::{
    load_idx, load_pairs, load_templates, sample_pairs, synth_blobs, templates_by_class, Dataset, Pair,
    PairList, TemplateSet,
};
use cosmargin::evalkit::{
    cmc, extract_features, pair_scores, pca, template_pair_scores, video_pair_scores, EvalReport, FeatureTable,
};
use cosmargin::gradcheck::{run_suite, triplet_reduction_mismatches, GradCheckOptions, SuiteReport};
use cosmargin::losses::{LossConfig, LossVariant};
use cosmargin::netopt::{train, Checkpoint, SgdConfig, TrainLogEntry, TrainOptions, TrainOutcome};
use cosmargin::numcore::Matrix;

use crate::config::{DataKind, Protocol, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

fn required(path: &Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
    path.clone()
        .ok_or_else(|| CliError::Validation(format!("missing required key `{key}`")))
}

/// The training or evaluation split named by the configuration.
pub fn load_split(cfg: &RunConfig, split: Split) -> Result<Dataset, CliError> {
    let d = &cfg.data;
    match d.kind {
        DataKind::Blobs => {
            let all = synth_blobs(
                d.blobs_classes,
                d.blobs_dim,
                d.blobs_train_per_class + d.blobs_test_per_class,
                d.blobs_spread,
                d.blobs_seed,
            )?;
            let (train, test) = all.split_per_class(d.blobs_train_per_class);
            Ok(if split == Split::Train { train } else { test })
        }
        DataKind::Idx => {
            let (images, labels, limit, prefix) = match split {
                Split::Train => (&d.train_images, &d.train_labels, d.train_limit, "data.train"),
                Split::Test => (&d.test_images, &d.test_labels, d.test_limit, "data.test"),
            };
            let images = required(images, &format!("{prefix}_images"))?;
            let labels = required(labels, &format!("{prefix}_labels"))?;
            let ds = load_idx(&images, &labels)?;
            if limit > 0 && limit < ds.len() {
                let keep: Vec<usize> = (0..limit).collect();
                Ok(ds.subset(&keep))
            } else {
                Ok(ds)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub outcome: TrainOutcome,
    /// Softmax model the run was fine-tuned from, when it was trained here.
    pub baseline: Option<Checkpoint>,
}

fn check_input_dim(cfg: &RunConfig, ds: &Dataset) -> Result<(), CliError> {
    if ds.dim() != cfg.net.input_dim {
        return Err(CliError::Validation(format!(
            "net.input_dim = {} but the data has {} features per sample",
            cfg.net.input_dim,
            ds.dim()
        )));
    }
    Ok(())
}

/// Trains per `cfg`. Variants that fine-tune start from `train.init_checkpoint`
/// or, without one, from a softmax model trained first on the same schedule.
pub fn train_run(cfg: &RunConfig) -> Result<TrainArtifacts, CliError> {
    let ds = load_split(cfg, Split::Train)?;
    check_input_dim(cfg, &ds)?;
    let init = cfg
        .train
        .init_checkpoint
        .as_ref()
        .map(Checkpoint::load)
        .transpose()?;
    let opts = |warm_start| TrainOptions {
        seed: cfg.seed,
        augment: cfg.data.augment,
        warm_start,
    };

    if cfg.loss.variant.fine_tunes() && cfg.train.warm_start {
        let (start, baseline) = match init {
            Some(ck) => (ck, None),
            None => {
                let softmax = LossConfig {
                    variant: LossVariant::Softmax,
                    ..cfg.loss.clone()
                };
                let base = train(&ds, &cfg.net, &softmax, &cfg.sgd, &opts(None))?;
                let ck = base.checkpoint();
                (ck.clone(), Some(ck))
            }
        };
        let sgd = SgdConfig {
            base_lr: cfg.train.finetune_lr,
            lr_drops: Vec::new(),
            max_iter: cfg.train.finetune_iters,
            ..cfg.sgd.clone()
        };
        let outcome = train(&ds, &cfg.net, &cfg.loss, &sgd, &opts(Some(start)))?;
        return Ok(TrainArtifacts { outcome, baseline });
    }
    let outcome = train(&ds, &cfg.net, &cfg.loss, &cfg.sgd, &opts(init))?;
    Ok(TrainArtifacts {
        outcome,
        baseline: None,
    })
}

pub fn log_csv(log: &[TrainLogEntry]) -> String {
    let classes = log.first().and_then(|e| e.margins.as_ref()).map_or(0, Vec::len);
    let mut out = String::from("iteration,lr,loss,violation_count,hard_count");
    for j in 0..classes {
        let _ = write!(out, ",margin_{j}");
    }
    out.push('\n');
    for e in log {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            e.iteration, e.lr, e.loss, e.violation_count, e.hard_count
        );
        for m in e.margins.iter().flatten() {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
    }
    out
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("{}: {e}", dir.display())))
}

/// Writes `checkpoint.bin`, `train_log.csv` and `effective.cfg` (plus
/// `baseline_checkpoint.bin` when a softmax model was trained first).
pub fn cmd_train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainArtifacts, CliError> {
    let run = train_run(cfg)?;
    ensure_dir(out_dir)?;
    write(&out_dir.join("checkpoint.bin"), run.outcome.checkpoint().encode())?;
    write(&out_dir.join("train_log.csv"), log_csv(&run.outcome.log))?;
    write(&out_dir.join("effective.cfg"), cfg.dump())?;
    if let Some(base) = &run.baseline {
        write(&out_dir.join("baseline_checkpoint.bin"), base.encode())?;
    }
    Ok(run)
}

fn load_checkpoint(path: &Path, ds: &Dataset) -> Result<Checkpoint, CliError> {
    let ck = Checkpoint::load(path)?;
    if ck.net.spec.input_dim != ds.dim() {
        return Err(CliError::Validation(format!(
            "checkpoint expects {} inputs, data has {}",
            ck.net.spec.input_dim,
            ds.dim()
        )));
    }
    Ok(ck)
}

fn template_list(cfg: &RunConfig, ds: &Dataset) -> Result<TemplateSet, CliError> {
    Ok(match &cfg.eval.templates {
        Some(p) => load_templates(p, Some(ds.len()))?,
        None => templates_by_class(&ds.labels, cfg.eval.template_size)?,
    })
}

/// Listed template pairs, or balanced random pairs over the templates.
fn template_pairs(cfg: &RunConfig, set: &TemplateSet) -> Result<PairList, CliError> {
    let pairs = match &cfg.eval.pairs {
        Some(p) => load_pairs(p, None)?,
        None => {
            let ids: Vec<u32> = set.templates.keys().copied().collect();
            let mut dense = std::collections::BTreeMap::new();
            let subjects: Vec<usize> = set
                .templates
                .values()
                .map(|t| {
                    let next = dense.len();
                    *dense.entry(t.subject).or_insert(next)
                })
                .collect();
            let by_position = sample_pairs(&subjects, cfg.eval.pair_count, cfg.seed)?;
            PairList {
                entries: by_position
                    .entries
                    .iter()
                    .map(|p| Pair {
                        a: ids[p.a] as usize,
                        b: ids[p.b] as usize,
                        same: p.same,
                    })
                    .collect(),
            }
        }
    };
    pairs.check_templates(set)?;
    Ok(pairs)
}

/// Embeds the evaluation split and applies PCA (a pure rotation about the
/// mean unless `eval.pca_dim` asks for fewer dimensions).
pub fn eval_features(cfg: &RunConfig, ck: &Checkpoint, ds: &Dataset) -> Result<Matrix, CliError> {
    let features = extract_features(&ck.net, ds, cfg.eval.flip_merge)?;
    let dim = features.cols();
    let out_dim = match cfg.eval.pca_dim {
        0 => dim,
        k if k <= dim => k,
        k => {
            return Err(CliError::Validation(format!(
                "eval.pca_dim = {k} exceeds the feature dimension {dim}"
            )))
        }
    };
    Ok(pca(&features, out_dim)?.0)
}

pub fn evaluate(cfg: &RunConfig, ck: &Checkpoint, ds: &Dataset) -> Result<EvalReport, CliError> {
    let features = eval_features(cfg, ck, ds)?;
    let e = &cfg.eval;
    let name = e.protocol.name();
    let report = match e.protocol {
        Protocol::Verify => {
            let pairs = match &e.pairs {
                Some(p) => load_pairs(p, Some(ds.len()))?,
                None => sample_pairs(&ds.labels, e.pair_count, cfg.seed)?,
            };
            let scores = pair_scores(&features, &pairs)?;
            EvalReport::verification(name, &scores, &pairs.labels(), e.folds, &e.far_levels)?
        }
        Protocol::Video | Protocol::Template => {
            let set = template_list(cfg, ds)?;
            let pairs = template_pairs(cfg, &set)?;
            let scores = if e.protocol == Protocol::Video {
                video_pair_scores(&features, &set, &pairs, e.frame_pairs)?
            } else {
                template_pair_scores(&features, &set, &pairs, e.beta)?
            };
            EvalReport::verification(name, &scores, &pairs.labels(), e.folds, &e.far_levels)?
        }
        Protocol::Identify => {
            let mut seen = vec![0usize; ds.class_count];
            let (mut probes, mut gallery) = (Vec::new(), Vec::new());
            for (i, &y) in ds.labels.iter().enumerate() {
                if seen[y] < e.probes_per_class {
                    probes.push(i);
                } else {
                    gallery.push(i);
                }
                seen[y] += 1;
            }
            let ids = |idx: &[usize]| idx.iter().map(|&i| ds.labels[i] as u32).collect::<Vec<_>>();
            let probe_ids = ids(&probes);
            let rates = cmc(
                &features.select_rows(&gallery),
                &ids(&gallery),
                &features.select_rows(&probes),
                &probe_ids,
                e.max_rank,
            )?;
            EvalReport {
                protocol: name.to_string(),
                probe_count: probes.len(),
                cmc: rates,
                ..EvalReport::default()
            }
        }
    };
    Ok(report)
}

/// Writes `report.txt` plus `roc.csv` / `cmc.csv` for the sections present.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, out_dir: &Path) -> Result<EvalReport, CliError> {
    let ds = load_split(cfg, Split::Test)?;
    let ck = load_checkpoint(checkpoint, &ds)?;
    let report = evaluate(cfg, &ck, &ds)?;
    ensure_dir(out_dir)?;
    write(&out_dir.join("report.txt"), report.to_text())?;
    if !report.roc.is_empty() {
        write(&out_dir.join("roc.csv"), report.roc_csv())?;
    }
    if !report.cmc.is_empty() {
        write(&out_dir.join("cmc.csv"), report.cmc_csv())?;
    }
    Ok(report)
}

/// Writes the raw embeddings of `split` (CSV, or binary for a `.bin` path).
pub fn cmd_export_features(cfg: &RunConfig, checkpoint: &Path, split: Split, out: &Path) -> Result<FeatureTable, CliError> {
    let ds = load_split(cfg, split)?;
    let ck = load_checkpoint(checkpoint, &ds)?;
    let features = extract_features(&ck.net, &ds, cfg.eval.flip_merge)?;
    let table = FeatureTable::new(features, ds.labels.clone())?;
    table.save(out)?;
    Ok(table)
}

/// Turns the margin columns of a training log into `iteration,class,margin`
/// rows.
pub fn margins_trace(log_csv: &str) -> Result<String, CliError> {
    let bad = |msg: String| CliError::Validation(format!("training log: {msg}"));
    let mut lines = log_csv.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').collect();
    if header.first() != Some(&"iteration") {
        return Err(bad("first column must be `iteration`".into()));
    }
    let margin_cols: Vec<(usize, &str)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("margin_").map(|c| (i, c)))
        .collect();
    if margin_cols.is_empty() {
        return Err(bad("no margin_<class> columns; margins are logged by adaptive-margin variants only".into()));
    }
    let mut out = String::from("iteration,class,margin\n");
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(bad(format!("line {} has {} fields, header has {}", n + 2, fields.len(), header.len())));
        }
        for &(col, class) in &margin_cols {
            let _ = writeln!(out, "{},{class},{}", fields[0], fields[col]);
        }
    }
    Ok(out)
}

pub fn cmd_margins_trace(log: &Path, out: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(log).map_err(|e| CliError::Validation(format!("{}: {e}", log.display())))?;
    write(out, margins_trace(&text)?)
}

#[derive(Debug, Clone)]
pub struct GradcheckOutcome {
    pub suites: Vec<SuiteReport>,
    /// Instances where DLMC with one neighbour differed from the triplet form.
    pub reduction_mismatches: Option<usize>,
}

impl GradcheckOutcome {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed) && self.reduction_mismatches.unwrap_or(0) == 0
    }

    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .suites
            .iter()
            .map(|s| {
                format!(
                    "{:<10} trials={} redrawn={} max_rel_err={:.3e} tol={:.0e} {}",
                    s.variant.name(),
                    s.trials,
                    s.redrawn,
                    s.max_rel_err,
                    s.tolerance,
                    if s.passed() { "PASS" } else { "FAIL" }
                )
            })
            .collect();
        if let Some(m) = self.reduction_mismatches {
            out.push(format!(
                "DLMC K=1 vs triplet: {m} mismatching instances {}",
                if m == 0 { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Finite-difference suite for each variant; DLMC also checks the
/// one-neighbour reduction bit for bit.
pub fn cmd_gradcheck(variants: &[LossVariant], seed: u64, trials: usize, corrupt: bool) -> Result<GradcheckOutcome, CliError> {
    let opts = GradCheckOptions {
        corrupt_gradient: corrupt,
        ..GradCheckOptions::default()
    };
    let suites = variants
        .iter()
        .map(|&v| run_suite(v, seed, trials, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let reduction_mismatches = variants
        .contains(&LossVariant::Dlmc)
        .then(|| triplet_reduction_mismatches(seed, trials, &opts))
        .transpose()?;
    Ok(GradcheckOutcome {
        suites,
        reduction_mismatches,
    })
}
