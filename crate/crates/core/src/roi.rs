//! Osteophyte site localization and subchondral bands.
//!
//! Site boxes come from a three-tier cascade: mask landmarks when the
//! compartment was measured, a mirrored estimate from the other compartment
//! when only one was measured, and fixed normalized crops otherwise.

use serde::{Deserialize, Serialize};

use crate::dataio::LabelMask;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::jsn::{extract_contours, Compartment, CompartmentMeasurement, JsnMeasurement, TRIM_FRAC};

pub const PATCH_SIZE: usize = 140;
/// Vertical distance from the joint-space edge to a site box centre.
pub const SITE_OFFSET: f64 = 35.0;
pub const SUBCHONDRAL_DEPTH: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    MedialFemur,
    LateralFemur,
    MedialTibia,
    LateralTibia,
}

impl Site {
    /// Manifest grade order: mf, lf, mt, lt.
    pub const ALL: [Site; 4] = [
        Site::MedialFemur,
        Site::LateralFemur,
        Site::MedialTibia,
        Site::LateralTibia,
    ];

    pub fn compartment(self) -> Compartment {
        match self {
            Site::MedialFemur | Site::MedialTibia => Compartment::Medial,
            Site::LateralFemur | Site::LateralTibia => Compartment::Lateral,
        }
    }

    pub fn is_femur(self) -> bool {
        matches!(self, Site::MedialFemur | Site::LateralFemur)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Site::MedialFemur => "medial_femur",
            Site::LateralFemur => "lateral_femur",
            Site::MedialTibia => "medial_tibia",
            Site::LateralTibia => "lateral_tibia",
        }
    }

    /// Fixed normalized centre used by the last cascade tier.
    fn fixed_centre(self) -> (f64, f64) {
        match self {
            Site::MedialFemur => (0.30, 0.40),
            Site::LateralFemur => (0.70, 0.40),
            Site::MedialTibia => (0.30, 0.60),
            Site::LateralTibia => (0.70, 0.60),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    MaskLandmark,
    Heuristic,
    Fixed,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::MaskLandmark => "mask_landmark",
            Tier::Heuristic => "heuristic",
            Tier::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiBox {
    pub site: Site,
    pub center: (f64, f64),
    pub size: usize,
    pub tier: Tier,
}

impl RoiBox {
    /// Top-left corner of the box in pixel coordinates (may be negative).
    pub fn origin(&self) -> (i64, i64) {
        let half = (self.size / 2) as i64;
        (
            self.center.0.round() as i64 - half,
            self.center.1.round() as i64 - half,
        )
    }
}

fn landmark_boxes(m: &CompartmentMeasurement) -> (RoiBox, RoiBox) {
    let stations = &m.profile.stations;
    // outermost station: medial-most on the left, lateral-most on the right
    let (compartment, s) = match m.profile.compartment {
        Compartment::Medial => (Compartment::Medial, stations[0]),
        Compartment::Lateral => (Compartment::Lateral, stations[stations.len() - 1]),
    };
    let (femur, tibia) = match compartment {
        Compartment::Medial => (Site::MedialFemur, Site::MedialTibia),
        Compartment::Lateral => (Site::LateralFemur, Site::LateralTibia),
    };
    (
        RoiBox {
            site: femur,
            center: (s.x, s.f_y - SITE_OFFSET),
            size: PATCH_SIZE,
            tier: Tier::MaskLandmark,
        },
        RoiBox {
            site: tibia,
            center: (s.x, s.t_y + SITE_OFFSET),
            size: PATCH_SIZE,
            tier: Tier::MaskLandmark,
        },
    )
}

fn mirrored_boxes(present: &CompartmentMeasurement, boxes: (RoiBox, RoiBox)) -> (RoiBox, RoiBox) {
    let mid = (present.contours.x_min + present.contours.x_max) as f64 / 2.0;
    let swap = |b: RoiBox| RoiBox {
        site: match b.site {
            Site::MedialFemur => Site::LateralFemur,
            Site::LateralFemur => Site::MedialFemur,
            Site::MedialTibia => Site::LateralTibia,
            Site::LateralTibia => Site::MedialTibia,
        },
        center: (2.0 * mid - b.center.0, b.center.1),
        size: b.size,
        tier: Tier::Heuristic,
    };
    (swap(boxes.0), swap(boxes.1))
}

/// Site boxes from an existing joint-space measurement of a `width` x
/// `height` image. Always returns four boxes in [`Site::ALL`] order.
pub fn locate_sites_from(measurement: &JsnMeasurement, width: usize, height: usize) -> [RoiBox; 4] {
    let fixed = |site: Site| {
        let (fx, fy) = site.fixed_centre();
        RoiBox {
            site,
            center: (fx * width as f64, fy * height as f64),
            size: PATCH_SIZE,
            tier: Tier::Fixed,
        }
    };
    let mut out = Site::ALL.map(fixed);
    let mut put = |b: RoiBox| {
        let i = Site::ALL.iter().position(|&s| s == b.site).unwrap();
        out[i] = b;
    };
    match (&measurement.medial, &measurement.lateral) {
        (Some(med), Some(lat)) => {
            let (a, b) = landmark_boxes(med);
            put(a);
            put(b);
            let (a, b) = landmark_boxes(lat);
            put(a);
            put(b);
        }
        (Some(present), None) | (None, Some(present)) => {
            let boxes = landmark_boxes(present);
            put(boxes.0);
            put(boxes.1);
            let (a, b) = mirrored_boxes(present, boxes);
            put(a);
            put(b);
        }
        (None, None) => {}
    }
    out
}

pub fn locate_sites(mask: Option<&LabelMask>, img: &Grid) -> [RoiBox; 4] {
    let measurement = mask.map(JsnMeasurement::measure).unwrap_or_default();
    locate_sites_from(&measurement, img.width(), img.height())
}

/// Exact `size` x `size` crop with edge replication outside the image.
pub fn extract_patch(img: &Grid, roi: &RoiBox) -> Grid {
    let (x0, y0) = roi.origin();
    Grid::from_fn(roi.size, roi.size, |x, y| {
        img.get_clamped(x0 + x as i64, y0 + y as i64)
    })
}

/// Bone band below the tibial edge of one compartment, over the trimmed span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubchondralBand {
    pub compartment: Compartment,
    pub columns: Vec<usize>,
    /// Tibial boundary row per column; band rows are `top+1 ..= top+depth`.
    pub top_profile: Vec<usize>,
    pub depth: usize,
    pub image_height: usize,
}

impl SubchondralBand {
    /// Row range of the band in column `i`, clipped to the image.
    pub fn rows(&self, i: usize) -> std::ops::Range<usize> {
        let start = (self.top_profile[i] + 1).min(self.image_height);
        let end = (self.top_profile[i] + self.depth + 1).min(self.image_height);
        start..end
    }

    /// Every band pixel, column by column.
    pub fn pixels(&self, img: &Grid) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, &x) in self.columns.iter().enumerate() {
            for y in self.rows(i) {
                out.push(img.get(x, y));
            }
        }
        out
    }

    /// Straightened texture field: column `i` of the band becomes column `i`
    /// of the field, rows counted down from the tibial edge. The field depth
    /// is the shallowest column's depth so every entry is a real pixel.
    pub fn field(&self, img: &Grid) -> Grid {
        let depth = (0..self.columns.len()).map(|i| self.rows(i).len()).min().unwrap_or(0);
        Grid::from_fn(self.columns.len(), depth, |c, r| {
            img.get(self.columns[c], self.rows(c).start + r)
        })
    }
}

pub fn subchondral_band(mask: &LabelMask, compartment: Compartment, depth: usize) -> Result<SubchondralBand> {
    if depth == 0 {
        return Err(Error::InvalidConfig("subchondral depth must be positive".into()));
    }
    let contours = extract_contours(mask, compartment)?;
    let (lo, hi) = contours.trimmed_span(TRIM_FRAC);
    let first = lo.ceil() as usize;
    let last = (hi.floor() as usize).min(contours.x_max);
    let columns: Vec<usize> = (first..=last).collect();
    let top_profile = columns
        .iter()
        .map(|&x| contours.tibial[x - contours.x_min].round() as usize)
        .collect();
    Ok(SubchondralBand {
        compartment,
        columns,
        top_profile,
        depth,
        image_height: mask.height(),
    })
}
