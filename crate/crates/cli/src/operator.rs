//! Operator names on the command line and their construction.

use std::path::Path;
use std::str::FromStr;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use meshmotion::ext::{ClassicOperator, ElasticStiffnessConfig, ExtensionOperator, PLaplaceConfig, Stepper};
use meshmotion::hybrid::{HybridStepper, Strategy, StrategyConfig};
use meshmotion::icnn::read_icnn;
use meshmotion::nncorr::{compute_mask, MaskConfig, NnCorrOperator};
use meshmotion::{BoundaryData, Mesh, Network, VectorField};

use crate::UsageError;

/// `harmonic`, `biharmonic`, `plaplace:<p>`, `elastic`,
/// `hybrid[:nonlinear|incremental|auto]` or `nncorr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    Harmonic,
    Biharmonic,
    PLaplace(f64),
    Elastic,
    Hybrid(Strategy),
    NnCorr,
}

impl FromStr for OpKind {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let op = match (head, arg) {
            ("harmonic", None) => OpKind::Harmonic,
            ("biharmonic", None) => OpKind::Biharmonic,
            ("elastic", None) => OpKind::Elastic,
            ("nncorr", None) => OpKind::NnCorr,
            ("plaplace", Some(p)) => match p.parse::<f64>() {
                Ok(p) if p >= 2.0 => OpKind::PLaplace(p),
                _ => return Err(UsageError(format!("p-Laplace needs p >= 2, got {p:?}"))),
            },
            ("hybrid", None | Some("auto")) => OpKind::Hybrid(Strategy::Auto),
            ("hybrid", Some("nonlinear")) => OpKind::Hybrid(Strategy::Nonlinear),
            ("hybrid", Some("incremental")) => OpKind::Hybrid(Strategy::Incremental),
            _ => {
                return Err(UsageError(format!(
                    "unknown operator {s:?}; expected harmonic, biharmonic, plaplace:<p>, elastic, \
                     hybrid[:nonlinear|incremental|auto] or nncorr"
                )))
            }
        };
        Ok(op)
    }
}

impl OpKind {
    pub fn needs_params(self) -> bool {
        matches!(self, OpKind::Hybrid(_) | OpKind::NnCorr)
    }
}

/// Trained corrected-harmonic model: the network and the mask it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnCorrModel {
    pub mask: MaskConfig,
    pub network: Network,
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<D> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Operator-specific settings file: `PLaplaceConfig` (its `p` is replaced by
/// the one in the operator name), `ElasticStiffnessConfig` or
/// `StrategyConfig` (its strategy likewise).
fn settings<D: serde::de::DeserializeOwned + Default>(config: Option<&Path>) -> anyhow::Result<D> {
    config.map(read_json).transpose().map(Option::unwrap_or_default)
}

/// A stepper for `op` on `mesh`; operators with setup cost (factorizations,
/// masks) do it here.
pub fn build_stepper(
    op: OpKind,
    mesh: &Mesh,
    params: Option<&Path>,
    config: Option<&Path>,
) -> anyhow::Result<(Box<dyn Stepper<f64>>, serde_json::Value)> {
    if op.needs_params() && params.is_none() {
        return Err(UsageError(format!("operator {op:?} needs --params")).into());
    }
    let classic = |c: ClassicOperator| -> Box<dyn Stepper<f64>> {
        Box::new(move |m: &Mesh, g: &BoundaryData| -> meshmotion::Result<VectorField> { c.extend(m, g) })
    };
    Ok(match op {
        OpKind::Harmonic => (classic(ClassicOperator::Harmonic), serde_json::Value::Null),
        OpKind::Biharmonic => (classic(ClassicOperator::Biharmonic), serde_json::Value::Null),
        OpKind::PLaplace(p) => {
            let mut c: PLaplaceConfig = settings(config)?;
            c.p = p;
            (classic(ClassicOperator::PLaplace(c)), serde_json::to_value(c)?)
        }
        OpKind::Elastic => {
            let c: ElasticStiffnessConfig = settings(config)?;
            let echo = serde_json::to_value(&c)?;
            (classic(ClassicOperator::Elastic(c)), echo)
        }
        OpKind::Hybrid(strategy) => {
            let mut c: StrategyConfig = settings(config)?;
            c.strategy = strategy;
            c.validate()?;
            let net = read_icnn::<f64>(params.unwrap())?;
            net.validate()?;
            let echo = serde_json::to_value(&c)?;
            (Box::new(HybridStepper::new(net, c)), echo)
        }
        OpKind::NnCorr => {
            let model: NnCorrModel = read_json(params.unwrap())?;
            let mask = compute_mask(mesh, &model.mask)?;
            let op = NnCorrOperator::new(mesh, model.network, mask)?;
            let echo = serde_json::to_value(&model.mask)?;
            (
                Box::new(move |m: &Mesh, g: &BoundaryData| -> meshmotion::Result<VectorField> { op.extend(m, g) }),
                echo,
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_names() {
        assert_eq!("harmonic".parse::<OpKind>().unwrap(), OpKind::Harmonic);
        assert_eq!("plaplace:4".parse::<OpKind>().unwrap(), OpKind::PLaplace(4.0));
        assert_eq!("hybrid".parse::<OpKind>().unwrap(), OpKind::Hybrid(Strategy::Auto));
        assert_eq!("hybrid:incremental".parse::<OpKind>().unwrap(), OpKind::Hybrid(Strategy::Incremental));
        for bad in ["laplace", "plaplace", "plaplace:1", "hybrid:fast", "harmonic:2", ""] {
            assert!(bad.parse::<OpKind>().is_err(), "{bad}");
        }
    }
}
