//! Dataset layout on disk: `<root>/<split>/<video_id>/<frame_%06d>.<ext>` or
//! `<root>/<split>/<video_id>.y4m`, plus `video_id,frame_index,label` CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::FloatImage;
use crate::error::{Error, Result};

const IMAGE_EXTS: &[&str] = &["png", "jpg", "jpeg"];

/// Where one video's frames come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VideoSource {
    /// Individual image files, in playback order.
    ImageFiles(Vec<PathBuf>),
    /// An uncompressed YUV4MPEG2 stream.
    Y4m(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VideoEntry {
    pub id: String,
    pub source: VideoSource,
}

impl VideoEntry {
    /// Decodes every frame in order.
    pub fn load_frames(&self) -> Result<Vec<FloatImage>> {
        match &self.source {
            VideoSource::ImageFiles(paths) => paths
                .iter()
                .enumerate()
                .map(|(i, p)| load_image(p, i))
                .collect(),
            VideoSource::Y4m(path) => load_y4m(path),
        }
    }
}

pub fn load_image(path: &Path, index: usize) -> Result<FloatImage> {
    let img = image::open(path).map_err(|e| Error::Decode {
        index,
        reason: format!("{}: {e}", path.display()),
    })?;
    Ok(FloatImage::from_rgb8(&img.to_rgb8()))
}

pub fn save_png(img: &FloatImage, path: &Path) -> Result<()> {
    img.to_rgb8()
        .save(path)
        .map_err(|e| Error::Invalid(format!("writing {}: {e}", path.display())))
}

fn has_image_ext(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Lists the videos of one split, sorted by id.
pub fn list_videos(split_dir: &Path) -> Result<Vec<VideoEntry>> {
    let rd = fs::read_dir(split_dir).map_err(|e| Error::io(split_dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let path = entry.map_err(|e| Error::io(split_dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()).map(str::to_owned) else {
            continue;
        };
        if path.is_dir() {
            let mut frames: Vec<PathBuf> = fs::read_dir(&path)
                .map_err(|e| Error::io(&path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| has_image_ext(p))
                .collect();
            frames.sort();
            if !frames.is_empty() {
                out.push(VideoEntry {
                    id: name,
                    source: VideoSource::ImageFiles(frames),
                });
            }
        } else if path.extension().is_some_and(|e| e == "y4m") {
            out.push(VideoEntry {
                id: name.trim_end_matches(".y4m").to_string(),
                source: VideoSource::Y4m(path),
            });
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

fn load_y4m(path: &Path) -> Result<Vec<FloatImage>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Y4mFrames::new(BufReader::new(file))
        .map_err(|e| match e {
            Error::Decode { index, reason } => Error::Decode {
                index,
                reason: format!("{}: {reason}", path.display()),
            },
            other => other,
        })?
        .collect()
}

/// Frame-by-frame decoder for an 8-bit YUV4MPEG2 stream (file, pipe or stdin).
pub struct Y4mFrames<R: Read> {
    dec: y4m::Decoder<R>,
    geometry: Geometry,
    index: usize,
    done: bool,
}

#[derive(Clone, Copy)]
struct Geometry {
    width: usize,
    height: usize,
    /// Chroma subsampling; `(0, 0)` for monochrome.
    sub: (usize, usize),
}

impl<R: Read> Y4mFrames<R> {
    pub fn new(reader: R) -> Result<Self> {
        let dec = y4m::decode(reader).map_err(|e| Error::Decode {
            index: 0,
            reason: format!("{e:?}"),
        })?;
        if dec.get_bit_depth() != 8 {
            return Err(Error::Decode {
                index: 0,
                reason: "only 8-bit y4m streams are supported".into(),
            });
        }
        let geometry = Geometry {
            width: dec.get_width(),
            height: dec.get_height(),
            sub: match dec.get_colorspace() {
                y4m::Colorspace::C444 => (1, 1),
                y4m::Colorspace::C422 => (2, 1),
                y4m::Colorspace::Cmono => (0, 0),
                _ => (2, 2),
            },
        };
        Ok(Self { dec, geometry, index: 0, done: false })
    }
}

fn yuv_to_rgb(g: Geometry, frame: &y4m::Frame<'_>) -> FloatImage {
    let (w, h, (sx, sy)) = (g.width, g.height, g.sub);
    let (yp, up, vp) = (frame.get_y_plane(), frame.get_u_plane(), frame.get_v_plane());
    let cw = if sx == 0 { 0 } else { w.div_ceil(sx) };
    let mut img = FloatImage::new(h, w);
    let data = img.data_mut();
    for r in 0..h {
        for c in 0..w {
            let luma = yp[r * w + c] as f64;
            let (u, v) = if sx == 0 {
                (128.0, 128.0)
            } else {
                let ci = (r / sy) * cw + c / sx;
                (up[ci] as f64, vp[ci] as f64)
            };
            let rgb = [
                luma + 1.402 * (v - 128.0),
                luma - 0.344_136 * (u - 128.0) - 0.714_136 * (v - 128.0),
                luma + 1.772 * (u - 128.0),
            ];
            for (ch, val) in rgb.iter().enumerate() {
                data[(ch * h + r) * w + c] = (val / 255.0).clamp(0.0, 1.0);
            }
        }
    }
    img
}

impl<R: Read> Iterator for Y4mFrames<R> {
    type Item = Result<FloatImage>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let index = self.index;
        let img = match self.dec.read_frame() {
            Ok(f) => Ok(yuv_to_rgb(self.geometry, &f)),
            Err(y4m::Error::EOF) => {
                self.done = true;
                return None;
            }
            Err(e) => {
                self.done = true;
                Err(Error::Decode {
                    index,
                    reason: format!("{e:?}"),
                })
            }
        };
        self.index += 1;
        Some(img)
    }
}

/// Per-video frame labels (`1` = anomalous).
pub type LabelMap = BTreeMap<String, Vec<u8>>;

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: BTreeMap<String, BTreeMap<usize, u8>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("video_id")) {
            continue;
        }
        let bad = || Error::Invalid(format!("{}:{}: malformed label row {line:?}", path.display(), lineno + 1));
        let mut parts = line.split(',');
        let (Some(id), Some(idx), Some(label), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let idx: usize = idx.trim().parse().map_err(|_| bad())?;
        let label: u8 = label.trim().parse().map_err(|_| bad())?;
        if label > 1 {
            return Err(bad());
        }
        rows.entry(id.trim().to_string()).or_default().insert(idx, label);
    }
    Ok(rows
        .into_iter()
        .map(|(id, m)| {
            let len = m.keys().next_back().map_or(0, |k| k + 1);
            let mut v = vec![0u8; len];
            for (i, l) in m {
                v[i] = l;
            }
            (id, v)
        })
        .collect())
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut body = String::from("video_id,frame_index,label\n");
    for (id, ls) in labels {
        for (i, l) in ls.iter().enumerate() {
            body.push_str(&format!("{id},{i},{l}\n"));
        }
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes frames as `frame_%06d.png` under `dir`.
pub fn write_video_frames(dir: &Path, frames: &[FloatImage]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        save_png(f, &dir.join(format!("frame_{i:06}.png")))?;
    }
    Ok(())
}
