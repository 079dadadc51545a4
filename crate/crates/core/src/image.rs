//! Grayscale images and the ASCII portable graymap (P2) codec used for every
//! image artifact on disk.

use std::path::Path;

use crate::error::{Error, Result};

const PGM_MAXVAL: u32 = 255;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Value(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Value(format!("pixel value {p} outside [0,1]")));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Encodes as ASCII PGM with maxval 255; each pixel becomes round(v * 255).
    pub fn to_pgm(&self) -> String {
        encode_pgm(self.width, self.height, &self.pixels)
    }

    pub fn from_pgm(text: &str) -> Result<Self> {
        let (width, height, pixels) = decode_pgm(text)?;
        Self::new(width, height, pixels)
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&text)
    }
}

pub(crate) fn encode_pgm(width: usize, height: usize, values: &[f64]) -> String {
    let mut out = format!("P2\n{width} {height}\n{PGM_MAXVAL}\n");
    for row in values.chunks(width) {
        let line: Vec<String> = row
            .iter()
            .map(|v| ((v.clamp(0.0, 1.0) * PGM_MAXVAL as f64).round() as u32).to_string())
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn decode_pgm(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    // Tokens with their line numbers, comments stripped.
    let mut tokens = text.lines().enumerate().flat_map(|(i, line)| {
        let content = line.split('#').next().unwrap_or("");
        content.split_whitespace().map(move |t| (i + 1, t))
    });
    let mut next = |what: &str| {
        tokens.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("unexpected end of PGM data, expected {what}"),
        })
    };
    let number = |(line, tok): (usize, &str), what: &str| -> Result<u32> {
        tok.parse().map_err(|_| Error::Parse {
            line,
            message: format!("expected {what}, found `{tok}`"),
        })
    };

    let (line, magic) = next("magic number")?;
    if magic != "P2" {
        return Err(Error::Parse {
            line,
            message: format!("unsupported PGM magic `{magic}`, expected P2"),
        });
    }
    let width = number(next("width")?, "width")? as usize;
    let height = number(next("height")?, "height")? as usize;
    let maxval = number(next("maxval")?, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Value(format!("PGM maxval {maxval} out of range")));
    }
    let mut pixels = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let tok = next("pixel")?;
        let v = number(tok, "pixel")?;
        if v > maxval {
            return Err(Error::Parse {
                line: tok.0,
                message: format!("pixel {v} exceeds maxval {maxval}"),
            });
        }
        pixels.push(v as f64 / maxval as f64);
    }
    Ok((width, height, pixels))
}
