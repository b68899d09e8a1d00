//! RGB images in `[0, 1]`, binary PPM I/O and bilinear resampling.

use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Float, Tensor};

/// Interleaved RGB, row-major, values in `[0, 1]`.
#[derive(Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}x{})", self.width, self.height)
    }
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        let mut img = Image::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Rounds every channel to the nearest 8-bit level, the precision PPM
    /// files hold.
    pub fn quantized(mut self) -> Self {
        for v in &mut self.data {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
        self
    }

    pub fn luminance(&self) -> Vec<f32> {
        self.pixels()
            .map(|[r, g, b]| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    }

    /// `[H, W, 3]` tensor mapped to the model's `[-1, 1]` range.
    pub fn to_tensor<T: Float>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::from_f64(2.0 * v as f64 - 1.0)).collect();
        Tensor::new(vec![self.height, self.width, 3], data).expect("image tensor shape")
    }

    /// Inverse of [`Image::to_tensor`], clamping to `[0, 1]`.
    pub fn from_tensor<T: Float>(t: &Tensor<T>) -> Result<Self> {
        match *t.shape() {
            [h, w, 3] => Ok(Image {
                width: w,
                height: h,
                data: t
                    .data()
                    .iter()
                    .map(|&v| ((v.as_f64() + 1.0) * 0.5).clamp(0.0, 1.0) as f32)
                    .collect(),
            }),
            _ => Err(shape_err!("expected [H, W, 3] tensor, got {:?}", t.shape())),
        }
    }

    /// Bilinear resample with pixel-center alignment. Same size returns an
    /// exact copy.
    pub fn resize(&self, width: usize, height: usize) -> Image {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        let mut out = Image::new(width, height);
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f32;
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f32;
                let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
                let mut px = [0.0; 3];
                for ch in 0..3 {
                    let top = a[ch] * (1.0 - wx) + b[ch] * wx;
                    let bot = c[ch] * (1.0 - wx) + d[ch] * wx;
                    px[ch] = top * (1.0 - wy) + bot * wy;
                }
                out.set(x, y, px);
            }
        }
        out
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Image> {
        let bad = |m: &str| Error::Format(format!("ppm: {m}"));
        let mut pos = 0;
        let mut fields = Vec::new();
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?.to_string());
        }
        if fields[0] != "P6" {
            return Err(bad("not a binary P6 file"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad number"));
        let (w, h, maxv) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxv != 255 {
            return Err(bad("only 8-bit maxval 255 is supported"));
        }
        pos += 1;
        let body = bytes.get(pos..pos + w * h * 3).ok_or_else(|| bad("truncated pixel data"))?;
        Ok(Image {
            width: w,
            height: h,
            data: body.iter().map(|&b| b as f32 / 255.0).collect(),
        })
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        crate::tensor::write_atomic(path, &self.to_ppm())
    }

    pub fn read_ppm(path: &Path) -> Result<Image> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::from_ppm(&bytes)
    }
}

pub fn mse(a: &Image, b: &Image) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height), "mse size mismatch");
    a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        / a.data.len() as f64
}

/// Peak signal-to-noise ratio in dB for `[0, 1]` images.
pub fn psnr(a: &Image, b: &Image) -> f64 {
    let m = mse(a, b);
    if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / m).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| [x as f32 / w as f32, y as f32 / h as f32, 0.5]).quantized()
    }

    #[test]
    fn ppm_roundtrip_of_quantized_image() {
        let img = ramp(7, 5);
        let back = Image::from_ppm(&img.to_ppm()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn ppm_rejects_garbage() {
        assert!(Image::from_ppm(b"P3\n1 1\n255\n000").is_err());
        assert!(Image::from_ppm(b"P6\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn same_size_resize_is_exact() {
        let img = ramp(9, 4);
        assert_eq!(img.resize(9, 4), img);
    }

    #[test]
    fn resize_of_constant_is_constant() {
        let img = Image::filled(10, 6, [0.2, 0.4, 0.6]);
        let r = img.resize(3, 7);
        assert!(r.pixels().all(|p| (p[0] - 0.2).abs() < 1e-6 && (p[2] - 0.6).abs() < 1e-6));
    }

    #[test]
    fn tensor_roundtrip() {
        let img = ramp(4, 3);
        let back = Image::from_tensor(&img.to_tensor::<f64>()).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn psnr_of_identical_is_infinite() {
        let img = ramp(4, 4);
        assert!(psnr(&img, &img).is_infinite());
    }
}
