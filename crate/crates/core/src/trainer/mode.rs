use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::ViewMode;
use crate::error::{Error, Result};

/// Training regime; decides the objective and how views are cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Contrastive, four half-image slices per side.
    Pbcnet,
    /// Contrastive, left/right halves only.
    PbcnetHoriz,
    /// Contrastive, top/bottom halves only.
    PbcnetVert,
    /// Contrastive, one random resized crop per side.
    CropContrastive,
    /// Supervised triplet baseline on whole images.
    Triplet,
}

impl TrainMode {
    pub const ALL: [TrainMode; 5] = [
        TrainMode::Pbcnet,
        TrainMode::PbcnetHoriz,
        TrainMode::PbcnetVert,
        TrainMode::CropContrastive,
        TrainMode::Triplet,
    ];

    pub fn view_mode(self) -> ViewMode {
        match self {
            TrainMode::Pbcnet => ViewMode::FourSlices,
            TrainMode::PbcnetHoriz => ViewMode::Horiz,
            TrainMode::PbcnetVert => ViewMode::Vert,
            TrainMode::CropContrastive | TrainMode::Triplet => ViewMode::Crop,
        }
    }

    pub fn is_contrastive(self) -> bool {
        self != TrainMode::Triplet
    }

    /// Short name used on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            TrainMode::Pbcnet => "pbcnet",
            TrainMode::PbcnetHoriz => "pbcnet-horiz",
            TrainMode::PbcnetVert => "pbcnet-vert",
            TrainMode::CropContrastive => "crop",
            TrainMode::Triplet => "triplet",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            TrainMode::Pbcnet => 0,
            TrainMode::PbcnetHoriz => 1,
            TrainMode::PbcnetVert => 2,
            TrainMode::CropContrastive => 3,
            TrainMode::Triplet => 4,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    /// Whether an encoder trained in this mode may embed with `view_mode`.
    /// Slice-trained encoders accept any half-slice set; whole-image
    /// encoders accept only whole-image views.
    pub fn accepts(self, view_mode: ViewMode) -> bool {
        self.view_mode().is_sliced() == view_mode.is_sliced()
    }

    pub fn check_compatible(self, view_mode: ViewMode) -> Result<()> {
        if self.accepts(view_mode) {
            Ok(())
        } else {
            Err(Error::Compatibility(format!(
                "checkpoint trained in mode `{}` cannot embed with view mode {view_mode:?}",
                self.cli_name()
            )))
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    /// Accepts both the command-line names and the config-file names.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pbcnet" => TrainMode::Pbcnet,
            "pbcnet-horiz" | "pbcnet_horiz" => TrainMode::PbcnetHoriz,
            "pbcnet-vert" | "pbcnet_vert" => TrainMode::PbcnetVert,
            "crop" | "crop_contrastive" | "crop-contrastive" => TrainMode::CropContrastive,
            "triplet" => TrainMode::Triplet,
            other => return Err(Error::Argument(format!("unknown mode `{other}`"))),
        })
    }
}
