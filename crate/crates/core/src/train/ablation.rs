use serde::{Deserialize, Serialize};

use super::cv::{run_cv, CvRun, TrainConfig};
use crate::datagen::Dataset;
use crate::error::Result;
use crate::fusion::ModelKind;
use crate::model::{ArchConfig, ModelConfig};
use crate::tabattention::AttentionSwitches;

/// Rows of the component ablation, in table order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Baseline,
    Tam,
    CbamTab,
    TamTab,
    Full,
}

impl AblationVariant {
    pub const ALL: [Self; 5] = [Self::Baseline, Self::Tam, Self::CbamTab, Self::TamTab, Self::Full];

    pub fn label(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Tam => "+TAM",
            Self::CbamTab => "+CBAM+Tab",
            Self::TamTab => "+TAM+Tab",
            Self::Full => "TabAttention",
        }
    }

    pub fn switches(self) -> AttentionSwitches {
        let (use_cam, use_sam, use_tam, use_tab) = match self {
            Self::Baseline => (false, false, false, false),
            Self::Tam => (false, false, true, false),
            Self::CbamTab => (true, true, false, true),
            Self::TamTab => (false, false, true, true),
            Self::Full => (true, true, true, true),
        };
        AttentionSwitches {
            use_cam,
            use_sam,
            use_tam,
            use_tab,
        }
    }

    pub fn model_config(self, arch: &ArchConfig) -> ModelConfig {
        let kind = match self {
            Self::Baseline => ModelKind::ImageOnly,
            _ => ModelKind::Tabattention,
        };
        ModelConfig::new(kind, arch.clone().with_switches(self.switches()))
    }
}

/// Cross-validates each variant under the same folds, seeds and training config.
pub fn run_ablation(
    ds: &Dataset,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    variants: &[AblationVariant],
    jobs: usize,
) -> Result<Vec<CvRun>> {
    variants
        .iter()
        .map(|v| run_cv(ds, v.label(), &v.model_config(arch), cfg, jobs))
        .collect()
}
