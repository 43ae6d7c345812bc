//! Seeded pixel-space degradations for 8-bit RGB images.
//!
//! All operations are pure functions of their inputs and seed. Intermediate
//! values are kept in `f64`; each operation clamps to [0, 255] and rounds
//! half away from zero exactly once, at the end.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::block::plan_block;
use crate::error::{invalid, Error, Result};

/// Row-major RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!("image size {width}x{height} has a zero side")));
        }
        if pixels.len() != 3 * width * height {
            return Err(invalid(format!(
                "pixel buffer has {} bytes, expected {}",
                pixels.len(),
                3 * width * height
            )));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Image::new(width, height, rgb.repeat(width * height))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    fn from_f64(width: usize, height: usize, values: &[f64]) -> Image {
        let pixels = values.iter().map(|&v| quantize(v)).collect();
        Image { width, height, pixels }
    }

    /// Loads a PNG or PPM (or any format the `image` crate was built with).
    pub fn load(path: &Path) -> Result<Image> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Image::new(w as usize, h as usize, img.into_raw())
    }

    /// Saves as binary PPM when the extension is `ppm`, PNG otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let is_ppm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
        if is_ppm {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            write!(f, "P6\n{} {}\n255\n", self.width, self.height)?;
            f.write_all(&self.pixels)?;
            f.flush()?;
            Ok(())
        } else {
            image::save_buffer(
                path,
                &self.pixels,
                self.width as u32,
                self.height as u32,
                image::ExtendedColorType::Rgb8,
            )?;
            Ok(())
        }
    }
}

fn quantize(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

fn check_range(name: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if !(lo..=hi).contains(&value) {
        return Err(invalid(format!("{name} {value} outside [{lo}, {hi}]")));
    }
    Ok(())
}

pub const BLUR_SIGMA: (f64, f64) = (0.5, 3.0);
pub const NOISE_SIGMA: (f64, f64) = (0.01, 0.1);
pub const JPEG_QUALITY: (f64, f64) = (10.0, 90.0);
pub const OCCLUSION_FRACTION: (f64, f64) = (0.10, 0.40);
pub const PHOTOMETRIC_FACTOR: (f64, f64) = (0.5, 1.5);

/// Normalized 1-D Gaussian kernel with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur on interleaved RGB values, clamping coordinates.
fn blur_values(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;

    let mut horiz = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                let mut acc = 0.0;
                for (j, w) in kernel.iter().enumerate() {
                    let sx = clamp(x as i64 + j as i64 - r, width);
                    acc += w * values[3 * (y * width + sx) + c];
                }
                horiz[3 * (y * width + x) + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                let mut acc = 0.0;
                for (j, w) in kernel.iter().enumerate() {
                    let sy = clamp(y as i64 + j as i64 - r, height);
                    acc += w * horiz[3 * (sy * width + x) + c];
                }
                out[3 * (y * width + x) + c] = acc;
            }
        }
    }
    out
}

pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    check_range("blur sigma", sigma, BLUR_SIGMA.0, BLUR_SIGMA.1)?;
    let out = blur_values(&img.to_f64(), img.width, img.height, sigma);
    Ok(Image::from_f64(img.width, img.height, &out))
}

/// Additive per-channel noise with standard deviation `255 * sigma`.
pub fn gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    check_range("noise sigma", sigma, NOISE_SIGMA.0, NOISE_SIGMA.1)?;
    let normal = Normal::new(0.0, 255.0 * sigma).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = img
        .pixels
        .iter()
        .map(|&p| quantize(p as f64 + normal.sample(&mut rng)))
        .collect();
    Ok(Image { pixels, ..img.clone() })
}

/// Blacks out one block covering `round(fraction * W * H)` pixels.
///
/// The aspect ratio is drawn from [0.5, 2.0] and snapped to the closest exact
/// factorization of the area that fits; the position is uniform.
pub fn occlude(img: &Image, fraction: f64, seed: u64) -> Result<Image> {
    check_range("occlusion fraction", fraction, OCCLUSION_FRACTION.0, OCCLUSION_FRACTION.1)?;
    let area = (fraction * (img.width * img.height) as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aspect = rng.random_range(0.5..=2.0);
    let shape = plan_block(area, img.width, img.height, aspect)
        .ok_or_else(|| invalid(format!("cannot place an occluder of area {area}")))?;
    let x0 = rng.random_range(0..=img.width - shape.width);
    let y0 = rng.random_range(0..=img.height - shape.height());
    let mut out = img.clone();
    for (dx, dy) in shape.cells() {
        out.set_pixel(x0 + dx, y0 + dy, [0, 0, 0]);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhotometricKind {
    Sharpen,
    Contrast,
    Brightness,
    Saturation,
}

impl std::str::FromStr for PhotometricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sharpen" => PhotometricKind::Sharpen,
            "contrast" => PhotometricKind::Contrast,
            "brightness" => PhotometricKind::Brightness,
            "saturation" => PhotometricKind::Saturation,
            _ => return Err(invalid(format!("unknown photometric kind '{s}'"))),
        })
    }
}

pub fn photometric(img: &Image, kind: PhotometricKind, factor: f64) -> Result<Image> {
    check_range("photometric factor", factor, PHOTOMETRIC_FACTOR.0, PHOTOMETRIC_FACTOR.1)?;
    let src = img.to_f64();
    let out: Vec<f64> = match kind {
        PhotometricKind::Brightness => src.iter().map(|p| p * factor).collect(),
        PhotometricKind::Contrast => src.iter().map(|p| (p - 128.0) * factor + 128.0).collect(),
        PhotometricKind::Saturation => src
            .chunks_exact(3)
            .flat_map(|px| {
                let luma = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
                px.iter().map(move |p| luma + factor * (p - luma)).collect::<Vec<_>>()
            })
            .collect(),
        PhotometricKind::Sharpen => {
            let blurred = blur_values(&src, img.width, img.height, 1.0);
            src.iter().zip(&blurred).map(|(p, b)| p + (factor - 1.0) * (p - b)).collect()
        }
    };
    Ok(Image::from_f64(img.width, img.height, &out))
}

/// Baseline JPEG encode/decode at `quality` (rounded to an integer).
pub fn jpeg_roundtrip(img: &Image, quality: f64) -> Result<Image> {
    check_range("jpeg quality", quality, JPEG_QUALITY.0, JPEG_QUALITY.1)?;
    let mut buf = Vec::new();
    let encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut buf, quality.round() as u8);
    image::ImageEncoder::write_image(
        encoder,
        &img.pixels,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::Rgb8,
    )?;
    let decoded = image::load_from_memory_with_format(&buf, image::ImageFormat::Jpeg)?.to_rgb8();
    let (w, h) = decoded.dimensions();
    if (w as usize, h as usize) != (img.width, img.height) {
        return Err(Error::Image(format!("codec changed dimensions to {w}x{h}")));
    }
    Image::new(img.width, img.height, decoded.into_raw())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DegradeKind {
    GaussianBlur,
    GaussianNoise,
    Jpeg,
    Occlusion,
    Photometric(PhotometricKind),
}

impl std::str::FromStr for DegradeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "blur" | "gaussian_blur" => DegradeKind::GaussianBlur,
            "noise" | "gaussian_noise" => DegradeKind::GaussianNoise,
            "jpeg" => DegradeKind::Jpeg,
            "occlusion" | "occlude" => DegradeKind::Occlusion,
            other => DegradeKind::Photometric(other.parse()?),
        })
    }
}

impl DegradeKind {
    /// Legal parameter range for this kind.
    pub fn range(self) -> (f64, f64) {
        match self {
            DegradeKind::GaussianBlur => BLUR_SIGMA,
            DegradeKind::GaussianNoise => NOISE_SIGMA,
            DegradeKind::Jpeg => JPEG_QUALITY,
            DegradeKind::Occlusion => OCCLUSION_FRACTION,
            DegradeKind::Photometric(_) => PHOTOMETRIC_FACTOR,
        }
    }
}

/// One pixel-space degradation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradeSpec {
    pub kind: DegradeKind,
    pub parameter: f64,
    pub seed: u64,
}

impl DegradeSpec {
    pub fn new(kind: DegradeKind, parameter: f64, seed: u64) -> Result<Self> {
        let (lo, hi) = kind.range();
        check_range("degradation parameter", parameter, lo, hi)?;
        Ok(DegradeSpec { kind, parameter, seed })
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        match self.kind {
            DegradeKind::GaussianBlur => gaussian_blur(img, self.parameter),
            DegradeKind::GaussianNoise => gaussian_noise(img, self.parameter, self.seed),
            DegradeKind::Jpeg => jpeg_roundtrip(img, self.parameter),
            DegradeKind::Occlusion => occlude(img, self.parameter, self.seed),
            DegradeKind::Photometric(k) => photometric(img, k, self.parameter),
        }
    }
}

const SEVERITY_MIN: f64 = 0.05;
const SEVERITY_MAX: f64 = 0.30;

/// Maps a degradation's strength linearly onto [0.05, 0.30].
pub fn severity_of(spec: &DegradeSpec) -> Result<f64> {
    let (lo, hi) = spec.kind.range();
    check_range("degradation parameter", spec.parameter, lo, hi)?;
    let t = match spec.kind {
        DegradeKind::Jpeg => (hi - spec.parameter) / (hi - lo),
        DegradeKind::Photometric(_) => (spec.parameter - 1.0).abs() / 0.5,
        _ => (spec.parameter - lo) / (hi - lo),
    };
    Ok(SEVERITY_MIN + (SEVERITY_MAX - SEVERITY_MIN) * t)
}
