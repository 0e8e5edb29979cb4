use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the three attention stages run, and whether they see tabular data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionSwitches {
    pub use_cam: bool,
    pub use_sam: bool,
    pub use_tam: bool,
    pub use_tab: bool,
}

impl AttentionSwitches {
    pub const FULL: Self = Self {
        use_cam: true,
        use_sam: true,
        use_tam: true,
        use_tab: true,
    };
    pub const NONE: Self = Self {
        use_cam: false,
        use_sam: false,
        use_tam: false,
        use_tab: false,
    };

    pub fn any_stage(&self) -> bool {
        self.use_cam || self.use_sam || self.use_tam
    }
}

/// Hyperparameters of one attention block at its insertion point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabAttentionConfig {
    /// Feature channels C.
    pub channels: usize,
    /// Frames T.
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Tabular feature count D.
    pub tab_dim: usize,
    /// Channel-MLP reduction ratio z.
    pub reduction: usize,
    pub heads: usize,
    /// Per-head query/key/value width d.
    pub head_dim: usize,
    /// Odd side length of the spatial-attention convolution.
    pub sam_kernel: usize,
    pub switches: AttentionSwitches,
}

impl TabAttentionConfig {
    pub fn new(channels: usize, frames: usize, height: usize, width: usize, tab_dim: usize) -> Self {
        Self {
            channels,
            frames,
            height,
            width,
            tab_dim,
            reduction: 16,
            heads: 2,
            head_dim: 4,
            sam_kernel: 7,
            switches: AttentionSwitches::FULL,
        }
    }

    pub fn with_switches(mut self, switches: AttentionSwitches) -> Self {
        self.switches = switches;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("channels", self.channels),
            ("frames", self.frames),
            ("height", self.height),
            ("width", self.width),
            ("reduction", self.reduction),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
        ];
        for (name, v) in extents {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.switches.use_tab && self.tab_dim == 0 {
            return Err(Error::InvalidConfig("use_tab requires tab_dim >= 1".into()));
        }
        if self.sam_kernel.is_multiple_of(2) {
            return Err(Error::InvalidGeometry(format!(
                "spatial attention kernel {} must be odd",
                self.sam_kernel
            )));
        }
        Ok(())
    }
}
