use std::path::Path;

use crate::error::{Error, Result};

/// Linear RGB image before tonemapping, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[f32; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image { width, height, pixels: vec![[0.0; 3]; width * height] }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[f32; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::invalid(format!("{} pixels for a {width}x{height} image", pixels.len())));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    /// Clamp to `[0, 1]` and quantize, no gamma.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.map(quantize)).collect()
    }

    /// Writes PNG or binary PPM depending on the extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let format = match extension(path).as_str() {
            "png" => image::ImageFormat::Png,
            "ppm" | "pnm" => image::ImageFormat::Pnm,
            other => return Err(Error::invalid(format!("unsupported image extension '{other}' (png or ppm)"))),
        };
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8()).expect("buffer size matches");
        if format == image::ImageFormat::Pnm {
            let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
            let encoder = image::codecs::pnm::PnmEncoder::new(&mut out).with_subtype(image::codecs::pnm::PnmSubtype::Pixmap(image::codecs::pnm::SampleEncoding::Binary));
            image::ImageEncoder::write_image(encoder, &buf, buf.width(), buf.height(), image::ExtendedColorType::Rgb8).map_err(image_error)?;
            return Ok(());
        }
        buf.save_with_format(path, format).map_err(image_error)
    }

    /// Reads an 8-bit PNG or PPM back into unit range.
    pub fn load(path: &Path) -> Result<Image> {
        let img = image::open(path).map_err(image_error)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let pixels = img.pixels().map(|p| p.0.map(|c| c as f32 / 255.0)).collect();
        Image::from_pixels(w, h, pixels)
    }

    /// Reads an image without quantization assumptions, for environment maps.
    pub fn load_linear(path: &Path) -> Result<Image> {
        let img = image::open(path).map_err(image_error)?.to_rgb32f();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Image::from_pixels(w, h, img.pixels().map(|p| p.0).collect())
    }
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn image_error(e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(e) => Error::Io(e),
        other => Error::Format(other.to_string()),
    }
}

fn quantize(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMetrics {
    pub rmse: f64,
    pub psnr: f64,
}

impl ImageMetrics {
    /// Compares the 8-bit tonemapped forms of two images, in unit range.
    pub fn between(a: &Image, b: &Image) -> Result<Self> {
        if (a.width, a.height) != (b.width, b.height) {
            return Err(Error::invalid(format!("image sizes differ: {}x{} vs {}x{}", a.width, a.height, b.width, b.height)));
        }
        let (qa, qb) = (a.to_rgb8(), b.to_rgb8());
        let sum: f64 = qa.iter().zip(&qb).map(|(&x, &y)| ((x as f64 - y as f64) / 255.0).powi(2)).sum();
        let rmse = if qa.is_empty() { 0.0 } else { (sum / qa.len() as f64).sqrt() };
        Ok(ImageMetrics { rmse, psnr: psnr(rmse) })
    }
}

pub fn psnr(rmse: f64) -> f64 {
    if rmse == 0.0 {
        PSNR_CAP
    } else {
        (20.0 * (1.0 / rmse).log10()).min(PSNR_CAP)
    }
}
