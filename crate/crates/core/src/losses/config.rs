use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossVariant {
    Softmax,
    Lmc,
    Hlmc,
    Malmc,
    Nlmc,
    NlmcMalmc,
    Dlmc,
}

impl LossVariant {
    pub const ALL: [LossVariant; 7] = [
        LossVariant::Softmax,
        LossVariant::Lmc,
        LossVariant::Hlmc,
        LossVariant::Malmc,
        LossVariant::Nlmc,
        LossVariant::NlmcMalmc,
        LossVariant::Dlmc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Softmax => "Softmax",
            LossVariant::Lmc => "LMC",
            LossVariant::Hlmc => "HLMC",
            LossVariant::Malmc => "MALMC",
            LossVariant::Nlmc => "NLMC",
            LossVariant::NlmcMalmc => "NLMC_MALMC",
            LossVariant::Dlmc => "DLMC",
        }
    }

    /// Uses the scaled, normalized softmax in place of the plain one.
    pub fn is_normalized(self) -> bool {
        matches!(
            self,
            LossVariant::Nlmc | LossVariant::NlmcMalmc | LossVariant::Dlmc
        )
    }

    /// Maintains per-class adaptive margins.
    pub fn is_adaptive(self) -> bool {
        matches!(self, LossVariant::Malmc | LossVariant::NlmcMalmc)
    }

    /// Variants that are fine-tuned from a softmax model rather than trained
    /// from scratch.
    pub fn fine_tunes(self) -> bool {
        self.is_normalized()
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('+', "_");
        LossVariant::ALL
            .into_iter()
            .find(|v| v.name().to_ascii_uppercase() == norm)
            .ok_or_else(|| {
                Error::contract(format!(
                    "unknown loss variant {s:?} (expected one of Softmax, LMC, HLMC, MALMC, NLMC, NLMC_MALMC, DLMC)"
                ))
            })
    }
}

/// Variant selector plus every loss hyper-parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Weight of the metric term.
    pub lambda: f64,
    /// Fixed cosine margin.
    pub alpha: f64,
    /// Floor and initial value of the adaptive margins.
    pub alpha0: f64,
    /// Fraction of intra-class (adaptive margins) or inter-class (DLMC)
    /// similarities kept.
    pub p: f64,
    pub scale_init: f64,
    pub scale_learnable: bool,
}

impl LossConfig {
    /// Tuned hyper-parameters for each variant.
    pub fn defaults_for(variant: LossVariant) -> Self {
        let base = LossConfig {
            variant,
            lambda: 0.0,
            alpha: 0.5,
            alpha0: 0.2,
            p: 0.6,
            scale_init: 4.0,
            scale_learnable: true,
        };
        match variant {
            LossVariant::Softmax => base,
            LossVariant::Lmc => LossConfig {
                lambda: 0.1,
                ..base
            },
            LossVariant::Hlmc => LossConfig {
                lambda: 0.005,
                ..base
            },
            LossVariant::Malmc => LossConfig {
                lambda: 0.1,
                ..base
            },
            LossVariant::Nlmc | LossVariant::NlmcMalmc => LossConfig {
                lambda: 0.001,
                ..base
            },
            LossVariant::Dlmc => LossConfig {
                lambda: 0.03,
                alpha: 0.01,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::contract(what.to_string()))
            }
        };
        check(
            self.lambda.is_finite() && self.lambda >= 0.0,
            &format!("lambda must be >= 0, got {}", self.lambda),
        )?;
        check(
            (0.0..=1.0).contains(&self.alpha),
            &format!("alpha must lie in [0, 1], got {}", self.alpha),
        )?;
        check(
            (0.0..=1.0).contains(&self.alpha0),
            &format!("alpha0 must lie in [0, 1], got {}", self.alpha0),
        )?;
        check(
            self.p > 0.0 && self.p <= 1.0,
            &format!("p must lie in (0, 1], got {}", self.p),
        )?;
        check(
            self.scale_init.is_finite() && self.scale_init > 0.0,
            &format!("scale_init must be positive, got {}", self.scale_init),
        )
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig::defaults_for(LossVariant::Softmax)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_variants() {
        assert_eq!("lmc".parse::<LossVariant>().unwrap(), LossVariant::Lmc);
        assert_eq!(
            "NLMC+MALMC".parse::<LossVariant>().unwrap(),
            LossVariant::NlmcMalmc
        );
        for v in LossVariant::ALL {
            assert_eq!(v.name().parse::<LossVariant>().unwrap(), v);
        }
        assert!("arcface".parse::<LossVariant>().is_err());
    }

    #[test]
    fn tuned_defaults() {
        let lmc = LossConfig::defaults_for(LossVariant::Lmc);
        assert_eq!((lmc.lambda, lmc.alpha), (0.1, 0.5));
        let hlmc = LossConfig::defaults_for(LossVariant::Hlmc);
        assert_eq!((hlmc.lambda, hlmc.alpha), (0.005, 0.5));
        let malmc = LossConfig::defaults_for(LossVariant::Malmc);
        assert_eq!((malmc.lambda, malmc.alpha0, malmc.p), (0.1, 0.2, 0.6));
        assert_eq!(LossConfig::defaults_for(LossVariant::Nlmc).lambda, 0.001);
        let dlmc = LossConfig::defaults_for(LossVariant::Dlmc);
        assert_eq!((dlmc.lambda, dlmc.alpha), (0.03, 0.01));
        for v in LossVariant::ALL {
            LossConfig::defaults_for(v).validate().unwrap();
        }
    }

    #[test]
    fn rejects_out_of_range() {
        let ok = LossConfig::default();
        assert!(LossConfig { lambda: -0.1, ..ok.clone() }.validate().is_err());
        assert!(LossConfig { alpha: 1.5, ..ok.clone() }.validate().is_err());
        assert!(LossConfig { alpha0: -0.5, ..ok.clone() }.validate().is_err());
        assert!(LossConfig { p: 0.0, ..ok.clone() }.validate().is_err());
        assert!(LossConfig { scale_init: 0.0, ..ok }.validate().is_err());
    }
}
