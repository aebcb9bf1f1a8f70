//! `ftn export-masks`: binary PGM per (task, seed) and an RGB PPM overlay
//! per seed.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use clap::Args;
use ftn::backbone::Mask;
use ftn::config::Experiment;
use ftn::configurer::Variant;
use ftn::FtnError;
use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageDecoder, ImageEncoder};

use crate::report::load_records;

/// Task `t` is drawn in `PALETTE[t % PALETTE.len()]`.
pub const PALETTE: [[u8; 3]; 6] = [[255, 0, 0], [0, 255, 0], [0, 0, 255], [255, 160, 0], [160, 0, 255], [0, 200, 200]];

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    pub run_dir: PathBuf,
    #[arg(long)]
    pub experiment: Experiment,
    /// Only this variant (default: all found).
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Output directory (default: <run_dir>/masks).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn image_err(e: image::ImageError) -> FtnError {
    FtnError::Data(format!("image codec: {e}"))
}

/// Binary P5 image, 255 for active neurons, row-major over the grid.
pub fn mask_pgm(mask: &Mask) -> ftn::Result<Vec<u8>> {
    let pixels: Vec<u8> = mask.gates.iter().map(|&g| if g { 255 } else { 0 }).collect();
    let mut buf = Vec::new();
    let side = mask.side as u32;
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&pixels, side, side, ExtendedColorType::L8)
        .map_err(image_err)?;
    Ok(buf)
}

/// Gate vector back from a P5 image written by [`mask_pgm`].
pub fn parse_pgm(bytes: &[u8]) -> ftn::Result<(usize, Vec<bool>)> {
    let decoder = PnmDecoder::new(Cursor::new(bytes)).map_err(image_err)?;
    let (w, h) = decoder.dimensions();
    if w != h {
        return Err(FtnError::Data(format!("mask image is {w}x{h}, not square")));
    }
    let mut pixels = vec![0u8; decoder.total_bytes() as usize];
    decoder.read_image(&mut pixels).map_err(image_err)?;
    Ok((w as usize, pixels.iter().map(|&p| p >= 128).collect()))
}

/// Additive blend of every task's palette colour, saturating at 255.
pub fn overlay_pixels(masks: &[Mask]) -> Vec<u8> {
    if masks.len() > PALETTE.len() {
        log::warn!("{} tasks but {} palette colours; colours repeat", masks.len(), PALETTE.len());
    }
    let n = masks.first().map_or(0, Mask::len);
    let mut rgb = vec![0u8; 3 * n];
    for (t, m) in masks.iter().enumerate() {
        let colour = PALETTE[t % PALETTE.len()];
        for (i, _) in m.gates.iter().enumerate().filter(|(_, &g)| g) {
            for c in 0..3 {
                rgb[3 * i + c] = rgb[3 * i + c].saturating_add(colour[c]);
            }
        }
    }
    rgb
}

pub fn overlay_ppm(masks: &[Mask]) -> ftn::Result<Vec<u8>> {
    let side = masks.first().map_or(0, |m| m.side) as u32;
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(&overlay_pixels(masks), side, side, ExtendedColorType::Rgb8)
        .map_err(image_err)?;
    Ok(buf)
}

/// Writes `<out>/<variant>/seed-<s>/task-<t>.pgm` and `overlay.ppm`.
pub fn cmd_export_masks(args: &ExportArgs) -> anyhow::Result<Vec<PathBuf>> {
    let out = args.out.clone().unwrap_or_else(|| args.run_dir.join("masks"));
    let mut written = Vec::new();
    let records = load_records(&args.run_dir)?;
    for r in records
        .iter()
        .filter(|r| r.config.experiment == args.experiment && args.variant.is_none_or(|v| v == r.config.variant))
    {
        let dir = out.join(r.config.variant.name()).join(format!("seed-{}", r.seed));
        std::fs::create_dir_all(&dir)?;
        for (t, m) in r.stored_masks.iter().enumerate() {
            written.push(write(&dir.join(format!("task-{t}.pgm")), &mask_pgm(m)?)?);
        }
        written.push(write(&dir.join("overlay.ppm"), &overlay_ppm(&r.stored_masks)?)?);
    }
    if written.is_empty() {
        return Err(FtnError::Data(format!(
            "no stored masks for {} under {}",
            args.experiment,
            args.run_dir.display()
        ))
        .into());
    }
    println!("wrote {} images under {}", written.len(), out.display());
    Ok(written)
}

fn write(path: &Path, bytes: &[u8]) -> ftn::Result<PathBuf> {
    std::fs::write(path, bytes)?;
    Ok(path.to_path_buf())
}
