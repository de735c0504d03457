//! Flat `section.key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, later assignments win.
//! Unknown keys are rejected. Choosing `loss.variant` resets every other
//! `loss.*` key to that variant's tuned default unless it is set explicitly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cosmargin::losses::{LossConfig, LossVariant};
use cosmargin::netopt::{Activation, NetworkSpec, SgdConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Idx,
    Blobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Verify,
    Identify,
    Video,
    Template,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Verify => "verify",
            Protocol::Identify => "identify",
            Protocol::Video => "video",
            Protocol::Template => "template",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub kind: DataKind,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Keep only the first this many samples of each IDX split (0 = all).
    pub train_limit: usize,
    pub test_limit: usize,
    pub blobs_classes: usize,
    pub blobs_dim: usize,
    pub blobs_train_per_class: usize,
    pub blobs_test_per_class: usize,
    pub blobs_spread: f64,
    pub blobs_seed: u64,
    pub augment: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub init_checkpoint: Option<PathBuf>,
    /// Fine-tuned variants start from a softmax model, trained first when no
    /// checkpoint is given.
    pub warm_start: bool,
    pub finetune_lr: f64,
    pub finetune_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub protocol: Protocol,
    pub pairs: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub pair_count: usize,
    pub flip_merge: bool,
    /// 0 keeps the full feature dimension.
    pub pca_dim: usize,
    pub folds: usize,
    pub far_levels: Vec<f64>,
    pub max_rank: usize,
    pub beta: f64,
    pub frame_pairs: usize,
    pub template_size: usize,
    pub probes_per_class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub net: NetworkSpec,
    pub loss: LossConfig,
    pub sgd: SgdConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

const KEYS: &[&str] = &[
    "seed",
    "data.kind",
    "data.train_images",
    "data.train_labels",
    "data.test_images",
    "data.test_labels",
    "data.train_limit",
    "data.test_limit",
    "data.blobs_classes",
    "data.blobs_dim",
    "data.blobs_train_per_class",
    "data.blobs_test_per_class",
    "data.blobs_spread",
    "data.blobs_seed",
    "data.augment",
    "net.input_dim",
    "net.hidden_dims",
    "net.feature_dim",
    "net.activation",
    "net.init_seed",
    "loss.variant",
    "loss.lambda",
    "loss.alpha",
    "loss.alpha0",
    "loss.p",
    "loss.scale_init",
    "loss.scale_learnable",
    "sgd.base_lr",
    "sgd.lr_drops",
    "sgd.momentum",
    "sgd.weight_decay",
    "sgd.max_iter",
    "sgd.batch_size",
    "train.init_checkpoint",
    "train.warm_start",
    "train.finetune_lr",
    "train.finetune_iters",
    "eval.protocol",
    "eval.pairs",
    "eval.templates",
    "eval.pair_count",
    "eval.flip_merge",
    "eval.pca_dim",
    "eval.folds",
    "eval.far_levels",
    "eval.max_rank",
    "eval.beta",
    "eval.frame_pairs",
    "eval.template_size",
    "eval.probes_per_class",
];

/// Raw assignments in the order they take effect.
#[derive(Debug, Clone, Default)]
pub struct Assignments {
    values: BTreeMap<String, String>,
}

impl Assignments {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut out = Assignments::default();
        for (i, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("config line {}: expected `key = value`", i + 1))
            })?;
            out.set(key.trim(), value.trim())
                .map_err(|e| CliError::Validation(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Assignments::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !KEYS.contains(&key) {
            return Err(CliError::Validation(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("--set expects key=value, got `{assignment}`")))?;
        self.set(key.trim(), value.trim())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

fn invalid(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{key} = {value:?}: {why}"))
}

struct Reader<'a> {
    raw: &'a Assignments,
}

impl Reader<'_> {
    fn parse<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| invalid(key, v, e)),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw.get(key).filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw.get(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e| invalid(key, v, e)))
                .collect(),
        }
    }
}

fn parse_drops(key: &str, value: &str) -> Result<Vec<(usize, f64)>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (at, div) = item
                .split_once(':')
                .ok_or_else(|| invalid(key, value, "entries look like iteration:divisor"))?;
            let at = at.trim().parse().map_err(|e| invalid(key, value, e))?;
            let div = div.trim().parse().map_err(|e| invalid(key, value, e))?;
            Ok((at, div))
        })
        .collect()
}

impl RunConfig {
    pub fn from_assignments(raw: &Assignments) -> Result<Self, CliError> {
        let r = Reader { raw };
        let seed = r.parse("seed", 0u64)?;

        let kind = match r.raw.get("data.kind").unwrap_or("idx") {
            "idx" => DataKind::Idx,
            "blobs" => DataKind::Blobs,
            other => return Err(invalid("data.kind", other, "expected idx or blobs")),
        };
        let data = DataConfig {
            kind,
            train_images: r.path("data.train_images"),
            train_labels: r.path("data.train_labels"),
            test_images: r.path("data.test_images"),
            test_labels: r.path("data.test_labels"),
            train_limit: r.parse("data.train_limit", 0)?,
            test_limit: r.parse("data.test_limit", 0)?,
            blobs_classes: r.parse("data.blobs_classes", 10)?,
            blobs_dim: r.parse("data.blobs_dim", 16)?,
            blobs_train_per_class: r.parse("data.blobs_train_per_class", 200)?,
            blobs_test_per_class: r.parse("data.blobs_test_per_class", 60)?,
            blobs_spread: r.parse("data.blobs_spread", 0.35)?,
            blobs_seed: r.parse("data.blobs_seed", 1)?,
            augment: r.parse("data.augment", true)?,
        };

        let default_input = match kind {
            DataKind::Blobs => data.blobs_dim,
            DataKind::Idx => 784,
        };
        let net = NetworkSpec {
            input_dim: r.parse("net.input_dim", default_input)?,
            hidden_dims: r.list("net.hidden_dims", vec![64])?,
            feature_dim: r.parse("net.feature_dim", 16)?,
            activation: r.parse("net.activation", Activation::Prelu)?,
            init_seed: r.parse("net.init_seed", seed)?,
        };
        net.validate().map_err(|e| CliError::Validation(format!("net.*: {e}")))?;

        let variant: LossVariant = r.parse("loss.variant", LossVariant::Softmax)?;
        let base = LossConfig::defaults_for(variant);
        let loss = LossConfig {
            variant,
            lambda: r.parse("loss.lambda", base.lambda)?,
            alpha: r.parse("loss.alpha", base.alpha)?,
            alpha0: r.parse("loss.alpha0", base.alpha0)?,
            p: r.parse("loss.p", base.p)?,
            scale_init: r.parse("loss.scale_init", base.scale_init)?,
            scale_learnable: r.parse("loss.scale_learnable", base.scale_learnable)?,
        };
        loss.validate().map_err(|e| CliError::Validation(format!("loss.*: {e}")))?;

        // drops follow a shortened run unless listed explicitly
        let max_iter = r.parse("sgd.max_iter", SgdConfig::default().max_iter)?;
        let sgd_base = SgdConfig::scratch_scaled(max_iter);
        let lr_drops = match r.raw.get("sgd.lr_drops") {
            None => sgd_base.lr_drops.clone(),
            Some(v) => parse_drops("sgd.lr_drops", v)?,
        };
        let sgd = SgdConfig {
            base_lr: r.parse("sgd.base_lr", sgd_base.base_lr)?,
            lr_drops,
            momentum: r.parse("sgd.momentum", sgd_base.momentum)?,
            weight_decay: r.parse("sgd.weight_decay", sgd_base.weight_decay)?,
            max_iter,
            batch_size: r.parse("sgd.batch_size", sgd_base.batch_size)?,
        };
        sgd.validate().map_err(|e| CliError::Validation(format!("sgd.*: {e}")))?;

        let fine = SgdConfig::fine_tune();
        let train = TrainConfig {
            init_checkpoint: r.path("train.init_checkpoint"),
            warm_start: r.parse("train.warm_start", true)?,
            finetune_lr: r.parse("train.finetune_lr", fine.base_lr)?,
            finetune_iters: r.parse("train.finetune_iters", fine.max_iter)?,
        };
        if !(train.finetune_lr > 0.0 && train.finetune_lr.is_finite()) {
            return Err(invalid("train.finetune_lr", &train.finetune_lr.to_string(), "must be positive"));
        }

        let protocol = match r.raw.get("eval.protocol").unwrap_or("verify") {
            "verify" => Protocol::Verify,
            "identify" => Protocol::Identify,
            "video" => Protocol::Video,
            "template" => Protocol::Template,
            other => {
                return Err(invalid(
                    "eval.protocol",
                    other,
                    "expected verify, identify, video or template",
                ))
            }
        };
        let eval = EvalConfig {
            protocol,
            pairs: r.path("eval.pairs"),
            templates: r.path("eval.templates"),
            pair_count: r.parse("eval.pair_count", 600)?,
            flip_merge: r.parse("eval.flip_merge", false)?,
            pca_dim: r.parse("eval.pca_dim", 0)?,
            folds: r.parse("eval.folds", 10)?,
            far_levels: r.list("eval.far_levels", vec![0.01, 0.001])?,
            max_rank: r.parse("eval.max_rank", 10)?,
            beta: r.parse("eval.beta", cosmargin::evalkit::DEFAULT_BETA)?,
            frame_pairs: r.parse("eval.frame_pairs", cosmargin::evalkit::DEFAULT_FRAME_PAIRS)?,
            template_size: r.parse("eval.template_size", 5)?,
            probes_per_class: r.parse("eval.probes_per_class", 1)?,
        };
        let positive = [
            ("eval.folds", eval.folds >= 2),
            ("eval.max_rank", eval.max_rank >= 1),
            ("eval.frame_pairs", eval.frame_pairs >= 1),
            ("eval.template_size", eval.template_size >= 1),
            ("eval.probes_per_class", eval.probes_per_class >= 1),
            ("eval.beta", eval.beta >= 0.0 && eval.beta.is_finite()),
            ("eval.far_levels", eval.far_levels.iter().all(|f| (0.0..=1.0).contains(f))),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, ok)| !ok) {
            return Err(CliError::Validation(format!("{key} is out of range")));
        }

        Ok(RunConfig {
            seed,
            data,
            net,
            loss,
            sgd,
            train,
            eval,
        })
    }

    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self, CliError> {
        let mut raw = match path {
            Some(p) => Assignments::load(p)?,
            None => Assignments::default(),
        };
        for o in overrides {
            raw.apply_override(o)?;
        }
        if let Some(s) = seed {
            raw.set("seed", &s.to_string())?;
        }
        RunConfig::from_assignments(&raw)
    }

    /// Every key with its effective value; parsing this reproduces `self`.
    pub fn dump(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let join = |v: Vec<String>| v.join(",");
        let d = &self.data;
        let e = &self.eval;
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("data.kind", match d.kind { DataKind::Idx => "idx", DataKind::Blobs => "blobs" }.into()),
            ("data.train_images", path(&d.train_images)),
            ("data.train_labels", path(&d.train_labels)),
            ("data.test_images", path(&d.test_images)),
            ("data.test_labels", path(&d.test_labels)),
            ("data.train_limit", d.train_limit.to_string()),
            ("data.test_limit", d.test_limit.to_string()),
            ("data.blobs_classes", d.blobs_classes.to_string()),
            ("data.blobs_dim", d.blobs_dim.to_string()),
            ("data.blobs_train_per_class", d.blobs_train_per_class.to_string()),
            ("data.blobs_test_per_class", d.blobs_test_per_class.to_string()),
            ("data.blobs_spread", d.blobs_spread.to_string()),
            ("data.blobs_seed", d.blobs_seed.to_string()),
            ("data.augment", d.augment.to_string()),
            ("net.input_dim", self.net.input_dim.to_string()),
            ("net.hidden_dims", join(self.net.hidden_dims.iter().map(|h| h.to_string()).collect())),
            ("net.feature_dim", self.net.feature_dim.to_string()),
            ("net.activation", self.net.activation.to_string()),
            ("net.init_seed", self.net.init_seed.to_string()),
            ("loss.variant", self.loss.variant.to_string()),
            ("loss.lambda", self.loss.lambda.to_string()),
            ("loss.alpha", self.loss.alpha.to_string()),
            ("loss.alpha0", self.loss.alpha0.to_string()),
            ("loss.p", self.loss.p.to_string()),
            ("loss.scale_init", self.loss.scale_init.to_string()),
            ("loss.scale_learnable", self.loss.scale_learnable.to_string()),
            ("sgd.base_lr", self.sgd.base_lr.to_string()),
            ("sgd.lr_drops", join(self.sgd.lr_drops.iter().map(|(a, d)| format!("{a}:{d}")).collect())),
            ("sgd.momentum", self.sgd.momentum.to_string()),
            ("sgd.weight_decay", self.sgd.weight_decay.to_string()),
            ("sgd.max_iter", self.sgd.max_iter.to_string()),
            ("sgd.batch_size", self.sgd.batch_size.to_string()),
            ("train.init_checkpoint", path(&self.train.init_checkpoint)),
            ("train.warm_start", self.train.warm_start.to_string()),
            ("train.finetune_lr", self.train.finetune_lr.to_string()),
            ("train.finetune_iters", self.train.finetune_iters.to_string()),
            ("eval.protocol", e.protocol.name().into()),
            ("eval.pairs", path(&e.pairs)),
            ("eval.templates", path(&e.templates)),
            ("eval.pair_count", e.pair_count.to_string()),
            ("eval.flip_merge", e.flip_merge.to_string()),
            ("eval.pca_dim", e.pca_dim.to_string()),
            ("eval.folds", e.folds.to_string()),
            ("eval.far_levels", join(e.far_levels.iter().map(|f| f.to_string()).collect())),
            ("eval.max_rank", e.max_rank.to_string()),
            ("eval.beta", e.beta.to_string()),
            ("eval.frame_pairs", e.frame_pairs.to_string()),
            ("eval.template_size", e.template_size.to_string()),
            ("eval.probes_per_class", e.probes_per_class.to_string()),
        ];
        debug_assert_eq!(entries.len(), KEYS.len());
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, overrides: &[&str]) -> Result<RunConfig, CliError> {
        let mut raw = Assignments::parse(text)?;
        for o in overrides {
            raw.apply_override(o)?;
        }
        RunConfig::from_assignments(&raw)
    }

    #[test]
    fn variant_pulls_in_its_defaults() {
        let c = load("loss.variant = HLMC\n", &[]).unwrap();
        assert_eq!((c.loss.lambda, c.loss.alpha), (0.005, 0.5));
        let c = load("", &["loss.variant=DLMC"]).unwrap();
        assert_eq!((c.loss.lambda, c.loss.alpha), (0.03, 0.01));
        let c = load("loss.variant = MALMC\nloss.lambda = 0.2\n", &[]).unwrap();
        assert_eq!((c.loss.lambda, c.loss.alpha0, c.loss.p), (0.2, 0.2, 0.6));
    }

    #[test]
    fn drops_follow_max_iter() {
        assert_eq!(load("", &[]).unwrap().sgd.lr_drops, vec![(16000, 10.0), (24000, 10.0)]);
        assert_eq!(load("sgd.max_iter = 2000\n", &[]).unwrap().sgd.lr_drops, vec![(1143, 10.0), (1714, 10.0)]);
        let c = load("sgd.max_iter = 2000\nsgd.lr_drops = 500:2\n", &[]).unwrap();
        assert_eq!(c.sgd.lr_drops, vec![(500, 2.0)]);
        assert!(load("sgd.lr_drops =\n", &[]).unwrap().sgd.lr_drops.is_empty());
    }

    #[test]
    fn overrides_win() {
        let c = load("loss.variant = LMC # tuned\nloss.lambda = 0.7\n", &["loss.lambda=0.1", "loss.alpha=0.5"]).unwrap();
        assert_eq!(c.loss.variant, LossVariant::Lmc);
        assert_eq!((c.loss.lambda, c.loss.alpha), (0.1, 0.5));
    }

    #[test]
    fn unknown_and_invalid_keys_are_named() {
        let e = load("loss.lamda = 0.1\n", &[]).unwrap_err().to_string();
        assert!(e.contains("loss.lamda"), "{e}");
        let e = load("sgd.momentum = fast\n", &[]).unwrap_err().to_string();
        assert!(e.contains("sgd.momentum"), "{e}");
        let e = load("sgd.lr_drops = 10:10,5:10\n", &[]).unwrap_err().to_string();
        assert!(e.contains("sgd"), "{e}");
        assert!(load("eval.protocol = lfw\n", &[]).is_err());
        assert!(load("no equals sign\n", &[]).is_err());
    }

    #[test]
    fn dump_round_trips() {
        let c = load(
            "data.kind = blobs\nnet.hidden_dims = 8,4\nsgd.lr_drops = 100:10,200:5\neval.far_levels = 0.1\ntrain.init_checkpoint = base.bin\n",
            &["loss.variant=NLMC_MALMC", "seed=7"],
        )
        .unwrap();
        let again = load(&c.dump(), &[]).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.dump(), c.dump());
        assert_eq!(c.net.input_dim, 16);
        assert_eq!(c.net.init_seed, 7);
    }

    #[test]
    fn scratch_schedule_is_the_default() {
        let c = load("", &[]).unwrap();
        assert_eq!(c.sgd, SgdConfig::default());
        assert_eq!((c.train.finetune_lr, c.train.finetune_iters), (0.001, 4000));
    }
}
