//! Per-image extraction: load, measure, locate, describe, and record an audit
//! trail of every intermediate quantity.

use serde::{Deserialize, Serialize};

use crate::dataio::{load_mask, load_radiograph, DatasetManifest, LabelMask, ManifestRow, Radiograph, Side, Split};
use crate::error::Result;
use crate::features::{concat, osteophyte_subvector, StructuredVector, FEATURE_NAMES};
use crate::grid::Grid;
use crate::jsn::{Compartment, JsnFeatures, JsnMeasurement, Kl0Reference, Quality};
use crate::preprocess::{preprocess_for, PreprocessConfig, Stage};
use crate::roi::{extract_patch, locate_sites_from, subchondral_band, RoiBox, SubchondralBand, SUBCHONDRAL_DEPTH};
use crate::texture::{sclerosis_from_bands, TextureAudit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub preprocess: PreprocessConfig,
    pub subchondral_depth: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            preprocess: PreprocessConfig::default(),
            subchondral_depth: SUBCHONDRAL_DEPTH,
        }
    }
}

/// A radiograph and mask in the canonical frame, with its joint-space
/// measurement (the only quantity needed to fit the KL-0 reference).
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub row: ManifestRow,
    pub image: Radiograph,
    pub mask: Option<LabelMask>,
    pub measurement: JsnMeasurement,
}

pub fn load_image(manifest: &DatasetManifest, row: &ManifestRow) -> Result<LoadedImage> {
    let image = load_radiograph(manifest.resolve(&row.image_path), row.side)?;
    let mask = match &row.mask_path {
        Some(p) => {
            let m = load_mask(manifest.resolve(p), row.side)?;
            m.check_matches(&image)?;
            Some(m)
        }
        None => None,
    };
    let measurement = mask.as_ref().map(JsnMeasurement::measure).unwrap_or_default();
    Ok(LoadedImage {
        row: row.clone(),
        image,
        mask,
        measurement,
    })
}

/// KL-0 reference from the training-split KL-0 images.
pub fn fit_kl0_reference<'a>(images: impl IntoIterator<Item = &'a LoadedImage>) -> Result<Kl0Reference> {
    Kl0Reference::fit(
        images
            .into_iter()
            .filter(|i| i.row.split == Split::Train && i.row.kl_grade == 0)
            .map(|i| &i.measurement),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAudit {
    pub id: String,
    pub split: Split,
    pub kl_grade: u8,
    pub side: Side,
    pub width: usize,
    pub height: usize,
    pub mask_present: bool,
    pub jsn_quality: Quality,
    pub sclerosis_quality: Quality,
    pub osteophyte_annotated: bool,
    pub measurement: JsnMeasurement,
    pub reference: Kl0Reference,
    pub rois: Vec<RoiBox>,
    pub bands: Vec<SubchondralBand>,
    pub texture: TextureAudit,
    pub features: Vec<NamedValue>,
    pub warnings: Vec<String>,
}

impl ImageAudit {
    pub fn band(&self, c: Compartment) -> Option<&SubchondralBand> {
        self.bands.iter().find(|b| b.compartment == c)
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    /// Raw feature row; slots that could not be measured are NaN.
    pub vector: StructuredVector,
    pub audit: ImageAudit,
}

pub fn extract(img: &LoadedImage, reference: &Kl0Reference, opts: &ExtractOptions) -> Result<Extraction> {
    let row = &img.row;
    let mut warnings = Vec::new();
    let (w, h) = (img.image.width(), img.image.height());

    let jsn = JsnFeatures::from_measurement(&img.measurement, reference)?;
    let rois = locate_sites_from(&img.measurement, w, h).to_vec();

    let osp = match row.osteophyte_grades {
        Some(g) => Some(osteophyte_subvector(g)?),
        None => {
            warnings.push("osteophyte grades missing; family imputed".to_string());
            None
        }
    };

    let bands: Vec<SubchondralBand> = match &img.mask {
        Some(mask) => Compartment::BOTH
            .into_iter()
            .filter_map(|c| subchondral_band(mask, c, opts.subchondral_depth).ok())
            .collect(),
        None => Vec::new(),
    };
    let scl_img = preprocess_for(Stage::Sclerosis, &img.image.pixels, &opts.preprocess)?;
    let find = |c: Compartment| bands.iter().find(|b| b.compartment == c);
    let (scl, texture) = sclerosis_from_bands(&scl_img, [find(Compartment::Medial), find(Compartment::Lateral)]);

    if img.mask.is_none() {
        warnings.push("no mask; joint-space and sclerosis features imputed".to_string());
    } else if jsn.quality != Quality::Measured {
        warnings.push(format!("joint-space quality {:?}", jsn.quality));
    }

    let values = concat(Some(&jsn), osp.as_ref(), Some(&scl));
    let features = FEATURE_NAMES
        .iter()
        .zip(&values)
        .map(|(n, v)| NamedValue {
            name: n.to_string(),
            value: v.is_finite().then_some(*v),
        })
        .collect();
    for msg in &warnings {
        log::warn!("{}: {msg}", row.id);
    }
    Ok(Extraction {
        vector: StructuredVector {
            id: row.id.clone(),
            split: row.split,
            kl_grade: row.kl_grade,
            values,
        },
        audit: ImageAudit {
            id: row.id.clone(),
            split: row.split,
            kl_grade: row.kl_grade,
            side: row.side,
            width: w,
            height: h,
            mask_present: img.mask.is_some(),
            jsn_quality: jsn.quality,
            sclerosis_quality: scl.quality,
            osteophyte_annotated: osp.is_some(),
            measurement: img.measurement.clone(),
            reference: reference.clone(),
            rois,
            bands,
            texture,
            features,
            warnings,
        },
    })
}

/// The four 140x140 osteophyte patches, cropped from the full image after
/// full-image preprocessing (patches themselves are not reprocessed).
pub fn osteophyte_patches(img: &LoadedImage, rois: &[RoiBox], opts: &ExtractOptions) -> Result<Vec<Grid>> {
    let full = preprocess_for(Stage::OsteophyteFullimage, &img.image.pixels, &opts.preprocess)?;
    rois.iter()
        .map(|r| preprocess_for(Stage::OsteophyteRoi, &extract_patch(&full, r), &opts.preprocess))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::load_manifest;
    use crate::phantom::{write_phantom_dataset, PhantomOptions};

    fn loaded(n: usize, missing_every: usize) -> (tempfile::TempDir, Vec<LoadedImage>) {
        let dir = tempfile::tempdir().unwrap();
        let opts = PhantomOptions {
            n,
            seed: 3,
            missing_mask_every: missing_every,
        };
        let path = write_phantom_dataset(dir.path(), &opts).unwrap();
        let m = load_manifest(&path).unwrap();
        let imgs = m.rows.iter().map(|r| load_image(&m, r).unwrap()).collect();
        (dir, imgs)
    }

    #[test]
    fn extracts_full_rows_for_masked_images() {
        let (_dir, imgs) = loaded(20, 0);
        let reference = fit_kl0_reference(&imgs).unwrap();
        for img in &imgs {
            let e = extract(img, &reference, &ExtractOptions::default()).unwrap();
            assert_eq!(e.vector.values.len(), 50);
            assert_eq!(e.vector.missing_count(), 0, "{}", img.row.id);
            assert_eq!(e.audit.jsn_quality, Quality::Measured);
            assert_eq!(e.audit.bands.len(), 2);
        }
    }

    #[test]
    fn missing_mask_is_flagged_and_imputable() {
        let (_dir, imgs) = loaded(20, 4);
        let reference = fit_kl0_reference(&imgs).unwrap();
        let no_mask = imgs.iter().find(|i| i.mask.is_none()).unwrap();
        let e = extract(no_mask, &reference, &ExtractOptions::default()).unwrap();
        assert_eq!(e.audit.jsn_quality, Quality::ImputedBoth);
        assert!(e.vector.family(crate::features::Family::Jsn).iter().all(|v| v.is_nan()));
        assert!(e.audit.rois.iter().all(|r| r.tier == crate::roi::Tier::Fixed));
        assert!(!e.audit.warnings.is_empty());
    }

    #[test]
    fn patches_have_fixed_size() {
        let (_dir, imgs) = loaded(3, 0);
        let reference = Kl0Reference::from_values(&[10.0], &[10.0], 1).unwrap();
        let e = extract(&imgs[0], &reference, &ExtractOptions::default()).unwrap();
        let patches = osteophyte_patches(&imgs[0], &e.audit.rois, &ExtractOptions::default()).unwrap();
        assert_eq!(patches.len(), 4);
        assert!(patches.iter().all(|p| p.width() == 140 && p.height() == 140));
    }
}
