//! Grayscale image pairs for the completion task: binary PGM (P5) files or a
//! CSV fallback, optional box-filter downsampling, then a left/right split.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::DataError;

/// Per example: `x` holds the left-half pixels, `y` the right-half pixels,
/// both row-major in [0,1]. `width` is the full image width.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePairDataset {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub height: usize,
    pub width: usize,
}

impl ImagePairDataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_dataset(&self) -> super::Dataset {
        super::Dataset {
            x: self.x.clone(),
            y: self.y.clone(),
        }
    }

    /// Stitches a left half and a right half back into a full row-major
    /// image.
    pub fn reassemble(&self, left: &[f64], right: &[f64]) -> Vec<f64> {
        let half = self.width / 2;
        let mut img = vec![0.0; self.height * self.width];
        for r in 0..self.height {
            for c in 0..half {
                img[r * self.width + c] = left[r * half + c];
                img[r * self.width + half + c] = right[r * half + c];
            }
        }
        img
    }
}

/// Decodes a binary (P5) PGM. Returns (height, width, pixels in [0,1]).
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>), DataError> {
    let mut pos;

    fn skip_ws_and_comments(bytes: &[u8], pos: &mut usize) {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(bytes: &[u8], pos: &mut usize) -> Result<u64, DataError> {
        skip_ws_and_comments(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(DataError::Image("malformed PGM header".into()));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DataError::Image("malformed PGM header".into()))
    }

    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(DataError::Image("not a P5 PGM".into()));
    }
    pos = 2;
    let width = token(bytes, &mut pos)? as usize;
    let height = token(bytes, &mut pos)? as usize;
    let maxval = token(bytes, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(DataError::Image("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(DataError::Image(format!(
            "unsupported PGM maxval {maxval} (want 1..=255)"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(DataError::Image("missing raster separator".into()));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .ok_or_else(|| DataError::Image("image dimensions overflow".into()))?;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(DataError::Image(format!(
            "raster has {} bytes, expected {need}",
            raster.len()
        )));
    }
    let scale = 1.0 / maxval as f64;
    Ok((
        height,
        width,
        raster[..need].iter().map(|&b| b as f64 * scale).collect(),
    ))
}

/// Encodes pixels in [0,1] as a binary PGM with maxval 255.
pub fn encode_pgm(height: usize, width: usize, pixels: &[f64]) -> Vec<u8> {
    assert_eq!(pixels.len(), height * width, "pixel count mismatch");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

/// CSV fallback: first line `h,w`, then one image per line, row-major pixel
/// values on the 0..=255 scale (rescaled to [0,1]).
pub fn parse_image_csv(text: &str) -> Result<(usize, usize, Vec<Vec<f64>>), DataError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| DataError::Parse {
            line: 1,
            msg: "empty image CSV".into(),
        })?;
    let mut hw = header.split(',');
    let parse_dim = |tok: Option<&str>| -> Result<usize, DataError> {
        tok.and_then(|t| t.trim().parse::<usize>().ok())
            .filter(|&v| v > 0)
            .ok_or_else(|| DataError::Parse {
                line: 1,
                msg: "header must be 'h,w' with positive dims".into(),
            })
    };
    let h = parse_dim(hw.next())?;
    let w = parse_dim(hw.next())?;
    if hw.next().is_some() {
        return Err(DataError::Parse {
            line: 1,
            msg: "header must be exactly 'h,w'".into(),
        });
    }
    let mut images = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, DataError> = line
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| DataError::Parse {
                    line: lineno,
                    msg: format!("unparseable pixel '{}'", t.trim()),
                })
            })
            .collect();
        let vals = vals?;
        if vals.len() != h * w {
            return Err(DataError::Parse {
                line: lineno,
                msg: format!("expected {} pixels, found {}", h * w, vals.len()),
            });
        }
        if vals.iter().any(|&v| !(0.0..=255.0).contains(&v)) {
            return Err(DataError::Parse {
                line: lineno,
                msg: "pixel outside 0..=255".into(),
            });
        }
        images.push(vals.iter().map(|&v| v / 255.0).collect());
    }
    Ok((h, w, images))
}

/// Box-filter downsample; source dimensions must be integer multiples of the
/// target.
fn downsample(
    h: usize,
    w: usize,
    pixels: &[f64],
    th: usize,
    tw: usize,
) -> Result<Vec<f64>, DataError> {
    if th == 0 || tw == 0 || h % th != 0 || w % tw != 0 {
        return Err(DataError::InvalidArgument(format!(
            "cannot box-filter {h}x{w} to {th}x{tw}"
        )));
    }
    let (fh, fw) = (h / th, w / tw);
    let inv = 1.0 / (fh * fw) as f64;
    let mut out = vec![0.0; th * tw];
    for r in 0..th {
        for c in 0..tw {
            let mut acc = 0.0;
            for dr in 0..fh {
                for dc in 0..fw {
                    acc += pixels[(r * fh + dr) * w + (c * fw + dc)];
                }
            }
            out[r * tw + c] = acc * inv;
        }
    }
    Ok(out)
}

/// Loads images from a directory of `.pgm` files (sorted by name) or a
/// single CSV file, optionally box-downsampling to `target` (height, width),
/// and splits each image into left/right halves.
pub fn load_image_pairs(
    path: &Path,
    target: Option<(usize, usize)>,
) -> Result<ImagePairDataset, DataError> {
    let mut images: Vec<Vec<f64>> = Vec::new();
    let mut dims: Option<(usize, usize)> = None;

    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .map(|e| e.eq_ignore_ascii_case("pgm"))
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        for file in files {
            let bytes = fs::read(&file)?;
            let (h, w, px) = decode_pgm(&bytes)
                .map_err(|e| DataError::Image(format!("{}: {e}", file.display())))?;
            match dims {
                None => dims = Some((h, w)),
                Some(d) if d != (h, w) => {
                    return Err(DataError::Image(format!(
                        "inconsistent sizes: {}x{} vs {}x{}",
                        d.0, d.1, h, w
                    )))
                }
                _ => {}
            }
            images.push(px);
        }
    } else {
        let text = fs::read_to_string(path)?;
        let (h, w, imgs) = parse_image_csv(&text)?;
        dims = Some((h, w));
        images = imgs;
    }

    let (mut h, mut w) = dims.ok_or_else(|| DataError::Image("no images found".into()))?;
    if let Some((th, tw)) = target {
        if (th, tw) != (h, w) {
            for img in &mut images {
                *img = downsample(h, w, img, th, tw)?;
            }
            h = th;
            w = tw;
        }
    }
    if w % 2 != 0 {
        return Err(DataError::InvalidArgument(format!(
            "image width {w} must be even for a left/right split"
        )));
    }
    let half = w / 2;
    let n = images.len();
    let mut x = Array2::zeros((n, h * half));
    let mut y = Array2::zeros((n, h * half));
    for (i, img) in images.iter().enumerate() {
        for r in 0..h {
            for c in 0..half {
                x[(i, r * half + c)] = img[r * w + c];
                y[(i, r * half + c)] = img[r * w + half + c];
            }
        }
    }
    Ok(ImagePairDataset {
        x,
        y,
        height: h,
        width: w,
    })
}
