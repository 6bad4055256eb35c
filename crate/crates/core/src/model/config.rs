use serde::{Deserialize, Serialize};

use super::filters::GaborConfig;
use crate::error::{Error, Result};

/// Feature-aware filter applied after self-attention in a branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Gabor,
    Otsu,
}

/// Filter per IUCM branch. The default assigns Gabor to the union-of-annotations
/// and low-confidence branches and Otsu to the high-confidence branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterAssignment {
    pub uni: FilterKind,
    pub lc: FilterKind,
    pub hc: FilterKind,
}

impl Default for FilterAssignment {
    fn default() -> Self {
        Self {
            uni: FilterKind::Gabor,
            lc: FilterKind::Gabor,
            hc: FilterKind::Otsu,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchToggles {
    /// Intersection-union constraining module; off feeds `R` to a plain head.
    pub use_iucm: bool,
    /// Uncertainty-aware branches; off leaves the backbone with one head.
    pub use_uam: bool,
}

impl Default for BranchToggles {
    fn default() -> Self {
        Self {
            use_iucm: true,
            use_uam: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Number of 2× down-sampling steps in the backbone.
    pub depth: usize,
    /// Channels at the first encoder level; doubled per level.
    pub base_channels: usize,
    /// Channels of the backbone feature map `R` and of every branch.
    pub feature_channels: usize,
    pub input_size: usize,
    pub in_channels: usize,
    /// Query/key width of the self-attention blocks.
    pub attention_channels: usize,
    /// Additive attention gates on the backbone's skip connections.
    pub attention_gates: bool,
    pub gabor: GaborConfig,
    pub otsu_bins: usize,
    pub filters: FilterAssignment,
    pub branch_toggles: BranchToggles,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            depth: 5,
            base_channels: 32,
            feature_channels: 32,
            input_size: 64,
            in_channels: 3,
            attention_channels: 8,
            attention_gates: true,
            gabor: GaborConfig::default(),
            otsu_bins: 256,
            filters: FilterAssignment::default(),
            branch_toggles: BranchToggles::default(),
        }
    }
}

impl NetConfig {
    /// Small network for desk-scale runs and gradient checks.
    pub fn reduced(input_size: usize, depth: usize, base_channels: usize) -> Self {
        Self {
            depth,
            base_channels,
            input_size,
            ..Self::default()
        }
    }

    /// Plain backbone with a single head.
    pub fn backbone_only(mut self) -> Self {
        self.branch_toggles = BranchToggles {
            use_iucm: false,
            use_uam: false,
        };
        self
    }

    pub fn level_channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.depth == 0 {
            return err("net.depth must be >= 1".into());
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(1 << self.depth) {
            return err(format!(
                "net.input_size {} must be divisible by 2^depth = {}",
                self.input_size,
                1usize << self.depth
            ));
        }
        if self.base_channels == 0 || self.feature_channels == 0 || self.in_channels == 0 {
            return err("net channel counts must be positive".into());
        }
        if self.attention_channels == 0 {
            return err("net.attention_channels must be >= 1".into());
        }
        if self.otsu_bins < 2 {
            return err(format!("net.otsu_bins must be >= 2, got {}", self.otsu_bins));
        }
        if self.branch_toggles.use_iucm && !self.branch_toggles.use_uam {
            return err("net.branch_toggles.use_iucm requires use_uam".into());
        }
        self.gabor
            .validate()
            .map_err(|e| Error::Config(format!("net.{e}")))?;
        Ok(())
    }
}
