//! Rendering of drawings into the two learner modalities: a 256×256 PNG
//! bitmap and TikZ `\draw` text.

use std::fmt;
use std::str::FromStr;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::drawing::{ConceptName, Drawing, Point};
use crate::simplify::Epsilon;

pub const CANVAS_SIZE: u32 = 256;

const WHITE: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Bitmap,
    Coordinates,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Bitmap, Modality::Coordinates];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Bitmap => "bitmap",
            Modality::Coordinates => "coordinates",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bitmap" | "image" | "images" => Ok(Modality::Bitmap),
            "coordinates" | "tikz" | "text" => Ok(Modality::Coordinates),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Png(Vec<u8>),
    Tikz(String),
}

/// One drawing rendered in one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    pub drawing_id: String,
    pub concept: ConceptName,
    pub epsilon: Epsilon,
    pub modality: Modality,
    pub payload: Payload,
    pub segment_count: usize,
}

impl Stimulus {
    pub fn render(d: &Drawing, epsilon: Epsilon, modality: Modality, style: &RenderStyle) -> Self {
        let payload = match modality {
            Modality::Bitmap => Payload::Png(to_bitmap_with(d, style)),
            Modality::Coordinates => Payload::Tikz(to_tikz(d)),
        };
        Self {
            drawing_id: d.id.clone(),
            concept: d.concept.clone(),
            epsilon,
            modality,
            payload,
            segment_count: d.segment_count(),
        }
    }
}

/// One `\draw (x1, y1) -- (x2, y2) -- ...;` line per stroke.
pub fn to_tikz(d: &Drawing) -> String {
    d.strokes()
        .iter()
        .map(|s| {
            let pts: Vec<String> = s.points().iter().map(Point::to_string).collect();
            format!("\\draw {};", pts.join(" -- "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    pub stroke_width: u32,
    pub antialias: bool,
    /// Dataset convention: y grows downward. When false the image is flipped.
    pub y_down: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            stroke_width: 1,
            antialias: false,
            y_down: true,
        }
    }
}

struct Canvas {
    pixels: Vec<u8>,
}

impl Canvas {
    fn new() -> Self {
        Self {
            pixels: vec![WHITE; (CANVAS_SIZE * CANVAS_SIZE) as usize],
        }
    }

    /// Darkens a pixel by `coverage` in [0, 1]; never lightens.
    fn plot(&mut self, x: i32, y: i32, coverage: f64) {
        if x < 0 || y < 0 || x >= CANVAS_SIZE as i32 || y >= CANVAS_SIZE as i32 {
            return;
        }
        let idx = (y as u32 * CANVAS_SIZE + x as u32) as usize;
        let value = (f64::from(WHITE) * (1.0 - coverage.clamp(0.0, 1.0))).round() as u8;
        self.pixels[idx] = self.pixels[idx].min(value);
    }

    fn stamp(&mut self, x: i32, y: i32, width: u32) {
        let lo = -((width as i32 - 1) / 2);
        let hi = lo + width as i32 - 1;
        for dy in lo..=hi {
            for dx in lo..=hi {
                self.plot(x + dx, y + dy, 1.0);
            }
        }
    }

    fn line(&mut self, a: (i32, i32), b: (i32, i32), width: u32) {
        let (mut x, mut y) = a;
        let dx = (b.0 - a.0).abs();
        let dy = -(b.1 - a.1).abs();
        let sx = if a.0 < b.0 { 1 } else { -1 };
        let sy = if a.1 < b.1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.stamp(x, y, width);
            if (x, y) == b {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    /// Xiaolin Wu's anti-aliased line; endpoints are plotted solid.
    fn line_aa(&mut self, a: (i32, i32), b: (i32, i32)) {
        let (mut x0, mut y0) = (f64::from(a.0), f64::from(a.1));
        let (mut x1, mut y1) = (f64::from(b.0), f64::from(b.1));
        let steep = (y1 - y0).abs() > (x1 - x0).abs();
        if steep {
            std::mem::swap(&mut x0, &mut y0);
            std::mem::swap(&mut x1, &mut y1);
        }
        if x0 > x1 {
            std::mem::swap(&mut x0, &mut x1);
            std::mem::swap(&mut y0, &mut y1);
        }
        let gradient = if x1 == x0 { 0.0 } else { (y1 - y0) / (x1 - x0) };
        let mut y = y0;
        for x in (x0 as i32)..=(x1 as i32) {
            let base = y.floor();
            let frac = y - base;
            let (px, py) = (x, base as i32);
            if steep {
                self.plot(py, px, 1.0 - frac);
                self.plot(py + 1, px, frac);
            } else {
                self.plot(px, py, 1.0 - frac);
                self.plot(px, py + 1, frac);
            }
            y += gradient;
        }
        self.plot(a.0, a.1, 1.0);
        self.plot(b.0, b.1, 1.0);
    }

    fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, CANVAS_SIZE, CANVAS_SIZE);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_compression(png::Compression::Balanced);
            enc.set_filter(png::Filter::NoFilter);
            let mut writer = enc.write_header().expect("in-memory PNG header");
            writer
                .write_image_data(&self.pixels)
                .expect("in-memory PNG body");
        }
        out
    }
}

/// Renders with the default style: 1 px black lines on white, no
/// anti-aliasing, dataset coordinates mapped 1:1 onto the canvas.
pub fn to_bitmap(d: &Drawing) -> Vec<u8> {
    to_bitmap_with(d, &RenderStyle::default())
}

pub fn to_bitmap_with(d: &Drawing, style: &RenderStyle) -> Vec<u8> {
    render_pixels(d, style).encode_png()
}

/// Grayscale pixel buffer (row-major, 256×256) for a drawing.
pub fn rasterize(d: &Drawing, style: &RenderStyle) -> Vec<u8> {
    render_pixels(d, style).pixels
}

fn render_pixels(d: &Drawing, style: &RenderStyle) -> Canvas {
    let mut canvas = Canvas::new();
    let map = |p: &Point| {
        let y = if style.y_down {
            i32::from(p.y)
        } else {
            CANVAS_SIZE as i32 - 1 - i32::from(p.y)
        };
        (i32::from(p.x), y)
    };
    let width = style.stroke_width.max(1);
    for stroke in d.strokes() {
        for pair in stroke.points().windows(2) {
            let (a, b) = (map(&pair[0]), map(&pair[1]));
            if style.antialias && width == 1 {
                canvas.line_aa(a, b);
            } else {
                canvas.line(a, b, width);
            }
        }
    }
    canvas
}

/// Standard padded base64 of the image bytes.
pub fn encode_image_payload(img: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(img)
}

pub fn decode_image_payload(text: &str) -> Result<Vec<u8>, base64::DecodeError> {
    base64::engine::general_purpose::STANDARD.decode(text)
}
