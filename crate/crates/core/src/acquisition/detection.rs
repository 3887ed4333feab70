//! Image-level acquisition for dense detectors.
//!
//! Each (cell, class) of a detector's output map is an independent binary
//! classifier with object probability `q`; the ensemble at that location is
//! the set of member distributions `[q_e, 1 - q_e]`. The image score is the
//! maximum per-location acquisition value over all cells and classes.

use crate::acquisition::{score_ensemble, AcquisitionFunction, EnsemblePrediction};
use crate::error::{Error, Result};

/// A single `height × width` map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}×{width} map",
                values.len()
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Object-center probability maps for every ensemble member and class.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionHeatmapSet {
    members: usize,
    classes: usize,
    height: usize,
    width: usize,
    // [member][class][cell]
    data: Vec<f64>,
}

impl DetectionHeatmapSet {
    /// `maps[e][c]` is member `e`'s map for class `c`.
    pub fn new(maps: Vec<Vec<Heatmap>>) -> Result<Self> {
        let members = maps.len();
        if members == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let classes = maps[0].len();
        let first = maps[0]
            .first()
            .ok_or_else(|| Error::ShapeMismatch("member has no class maps".into()))?;
        let (height, width) = (first.height, first.width);
        if height == 0 || width == 0 {
            return Err(Error::ShapeMismatch("empty map".into()));
        }
        let mut data = Vec::with_capacity(members * classes * height * width);
        for (e, member) in maps.iter().enumerate() {
            if member.len() != classes {
                return Err(Error::ShapeMismatch(format!(
                    "member {e} has {} class maps, expected {classes}",
                    member.len()
                )));
            }
            for (c, map) in member.iter().enumerate() {
                if map.height != height || map.width != width || map.values.len() != height * width
                {
                    return Err(Error::ShapeMismatch(format!(
                        "member {e} class {c} map is {}×{}, expected {height}×{width}",
                        map.height, map.width
                    )));
                }
                if let Some(q) = map.values.iter().find(|q| !(0.0..=1.0).contains(*q)) {
                    return Err(Error::InvalidDistribution(format!("cell probability {q}")));
                }
                data.extend_from_slice(&map.values);
            }
        }
        Ok(Self { members, classes, height, width, data })
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn cell(&self, member: usize, class: usize, idx: usize) -> f64 {
        let cells = self.height * self.width;
        self.data[(member * self.classes + class) * cells + idx]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionScore {
    pub score: f64,
    /// Location of the maximum as (class, row, col); first occurrence wins.
    pub argmax: (usize, usize, usize),
    /// Per-class maps of acquisition values.
    pub class_heatmaps: Vec<Heatmap>,
}

pub fn detection_image_score(
    maps: &DetectionHeatmapSet,
    function: AcquisitionFunction,
) -> Result<DetectionScore> {
    match function {
        AcquisitionFunction::Entropy
        | AcquisitionFunction::MutualInformation
        | AcquisitionFunction::VariationRatios => {}
        other => return Err(Error::UnsupportedFunction(other.as_str())),
    }
    let cells = maps.height * maps.width;
    let mut class_heatmaps = Vec::with_capacity(maps.classes);
    let mut best = (f64::NEG_INFINITY, (0, 0, 0));
    let mut binary = vec![0.0; 2 * maps.members];
    for class in 0..maps.classes {
        let mut values = Vec::with_capacity(cells);
        for idx in 0..cells {
            for e in 0..maps.members {
                let q = maps.cell(e, class, idx);
                binary[2 * e] = q;
                binary[2 * e + 1] = 1.0 - q;
            }
            let ens = EnsemblePrediction::from_flat(binary.clone(), maps.members, 2)?;
            let v = score_ensemble(&ens, function, None)?;
            if v > best.0 {
                best = (v, (class, idx / maps.width, idx % maps.width));
            }
            values.push(v);
        }
        class_heatmaps.push(Heatmap { height: maps.height, width: maps.width, values });
    }
    Ok(DetectionScore { score: best.0, argmax: best.1, class_heatmaps })
}
