//! Minimal PNG figures: line plots and qualitative frame grids.

use std::path::Path;
use std::sync::Arc;

use image::{Rgb, RgbImage};

use crate::data::FrameTensor;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::Tensor;

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })
}

fn draw_line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Polylines of each `(x, y)` series on shared axes, with a frame around the plot area.
pub fn line_plot(series: &[Vec<(f64, f64)>], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let margin = 10.0;
    let (w, h) = (width as f64 - 2.0 * margin, height as f64 - 2.0 * margin);
    let pts = series.iter().flatten().filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let axis = Rgb([0, 0, 0]);
    let corners = [(margin, margin), (margin + w, margin), (margin + w, margin + h), (margin, margin + h)];
    for i in 0..4 {
        draw_line(&mut img, corners[i], corners[(i + 1) % 4], axis);
    }
    if !x0.is_finite() {
        return img;
    }
    let sx = if x1 > x0 { w / (x1 - x0) } else { 0.0 };
    let sy = if y1 > y0 { h / (y1 - y0) } else { 0.0 };
    let map = |(x, y): (f64, f64)| (margin + (x - x0) * sx, margin + h - (y - y0) * sy);
    for (i, s) in series.iter().enumerate() {
        let color = Rgb(PALETTE[i % PALETTE.len()]);
        for pair in s.windows(2) {
            if pair.iter().all(|p| p.0.is_finite() && p.1.is_finite()) {
                draw_line(&mut img, map(pair[0]), map(pair[1]), color);
            }
        }
    }
    img
}

fn blit(img: &mut RgbImage, x0: u32, y0: u32, cell: &[[u8; 3]], w: usize) {
    for (i, px) in cell.iter().enumerate() {
        img.put_pixel(x0 + (i % w) as u32, y0 + (i / w) as u32, Rgb(*px));
    }
}

fn to_cell(t: &Tensor) -> Vec<[u8; 3]> {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let d = t.data();
    (0..h * w)
        .map(|i| {
            let c = |ch: usize| (((d[ch * h * w + i] + 1.0) / 2.0).clamp(0.0, 1.0) * 255.0).round() as u8;
            [c(0), c(1), c(2)]
        })
        .collect()
}

/// Rows of input / reconstruction / prediction / error cells for the listed frames.
///
/// Each row `t` (a frame index with enough history) shows the target frame,
/// its reconstruction from the previous frame's shortcuts, the frame decoded
/// from the predicted latent and the absolute prediction error in red.
pub fn frame_grid(model: &Model, frames: &[Arc<FrameTensor>], rows: &[usize]) -> Result<RgbImage> {
    let cfg = model.config();
    let (h, w) = cfg.input_size;
    let pad = 2u32;
    let mut img = RgbImage::from_pixel(
        4 * (w as u32 + pad) + pad,
        rows.len() as u32 * (h as u32 + pad) + pad,
        Rgb([255, 255, 255]),
    );
    for (r, &t) in rows.iter().enumerate() {
        if t < cfg.frame_offset() || t >= frames.len() {
            return Err(Error::Invalid(format!("frame {t} has no prediction")));
        }
        let last = t - cfg.t_offset;
        let inputs: Vec<_> = (last + 1 - cfg.k..=last).map(|i| model.encode(&frames[i])).collect::<Result<_>>()?;
        let codes: Vec<_> = inputs.iter().map(|(z, _)| z).collect();
        let pred = model.decode(&model.predict_latent(&codes)?, &inputs[cfg.k - 1].1)?;
        let (z_t, _) = model.encode(&frames[t])?;
        let (_, prev_pyr) = model.encode(&frames[t - 1])?;
        let recon = model.decode(&z_t, &prev_pyr)?;
        let target = &frames[t].pixels;
        let err: Vec<f64> = (0..h * w)
            .map(|i| (0..3).map(|c| (pred.data()[c * h * w + i] - target.data()[c * h * w + i]).abs()).sum::<f64>() / 3.0)
            .collect();
        let emax = err.iter().cloned().fold(1e-12, f64::max);
        let err_cell: Vec<[u8; 3]> = err.iter().map(|e| [(e / emax * 255.0).round() as u8, 0, 0]).collect();
        let y = pad + r as u32 * (h as u32 + pad);
        for (c, cell) in [to_cell(target), to_cell(&recon), to_cell(&pred), err_cell].iter().enumerate() {
            blit(&mut img, pad + c as u32 * (w as u32 + pad), y, cell, w);
        }
    }
    Ok(img)
}
