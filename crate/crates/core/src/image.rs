//! Grayscale rasters, image loading/saving and the handful of lattice
//! operations (circular shifts, exact rotations, Fourier decimation) the rest of
//! the crate relies on.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fourier::{dft2, idft2_real, signed_frequency, Spectrum};

/// A real-valued 2D grid, row-major, `width` columns by `height` rows.
///
/// Unlike [`Image`], values are unconstrained (they only need to be finite);
/// this is what filters, responses and intermediate signals live in.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("zero-sized raster".into()));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite sample {bad}")));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear interpolation at a continuous position; positions outside
    /// `[0, w-1] x [0, h-1]` read as zero.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        bilinear(&self.data, self.width, self.height, x, y)
    }

    /// Circular shift: the sample at `(x, y)` moves to `(x + dx, y + dy)` modulo
    /// the raster size.
    pub fn shifted(&self, dx: isize, dy: isize) -> Raster {
        let (w, h) = (self.width as isize, self.height as isize);
        Raster::from_fn(self.width, self.height, |x, y| {
            let sx = (x as isize - dx).rem_euclid(w) as usize;
            let sy = (y as isize - dy).rem_euclid(h) as usize;
            self.get(sx, sy)
        })
    }

    /// Exact quarter turn: `(x, y)` maps to `(h - 1 - y, x)`, so a direction at
    /// angle `phi` (array coordinates, y down) ends up at `phi + pi/2`.
    pub fn rotated90(&self) -> Raster {
        let (w, h) = (self.width, self.height);
        // new raster is h wide and w tall
        Raster::from_fn(h, w, |xn, yn| {
            let x = yn;
            let y = h - 1 - xn;
            self.get(x, y)
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Ideal low-pass decimation by 2 through spectrum cropping. Exact for
    /// signals band-limited to a quarter of the sampling rate.
    pub fn fourier_decimate2(&self) -> Result<Raster> {
        let (w, h) = self.dims();
        if w % 4 != 0 || h % 4 != 0 {
            return Err(Error::InvalidParameter(format!(
                "decimation needs dimensions divisible by 4, got {w}x{h}"
            )));
        }
        let spec = dft2(self);
        let (wd, hd) = (w / 2, h / 2);
        let mut out = vec![num_complex_zero(); wd * hd];
        // Small-lattice bin collects the big-lattice frequencies that alias onto
        // it inside the retained band; only the Nyquist bins get two.
        let aliases = |w_small: i64, n_small: usize| -> Vec<i64> {
            if n_small.is_multiple_of(2) && w_small == -(n_small as i64) / 2 {
                vec![w_small, -w_small]
            } else {
                vec![w_small]
            }
        };
        for yd in 0..hd {
            let ys: Vec<usize> = aliases(signed_frequency(yd, hd), hd)
                .into_iter()
                .map(|wy| wy.rem_euclid(h as i64) as usize)
                .collect();
            for xd in 0..wd {
                let xs: Vec<usize> = aliases(signed_frequency(xd, wd), wd)
                    .into_iter()
                    .map(|wx| wx.rem_euclid(w as i64) as usize)
                    .collect();
                let mut v = num_complex_zero();
                for &y in &ys {
                    for &x in &xs {
                        v += spec.data[y * w + x];
                    }
                }
                out[yd * wd + xd] = v * 0.25;
            }
        }
        let (data, _) = idft2_real(&Spectrum::new(wd, hd, out)?);
        Raster::new(wd, hd, data)
    }
}

fn num_complex_zero() -> rustfft::num_complex::Complex<f64> {
    rustfft::num_complex::Complex::new(0.0, 0.0)
}

pub(crate) fn bilinear(data: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return 0.0;
    }
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = data[y0 * w + x0] * (1.0 - fx) + data[y0 * w + x1] * fx;
    let bot = data[y1 * w + x0] * (1.0 - fx) + data[y1 * w + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Grayscale image with intensities normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    raster: Raster,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::from_raster(Raster::new(width, height, pixels)?)
    }

    pub fn from_raster(raster: Raster) -> Result<Self> {
        if let Some(bad) = raster.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Image { raster })
    }

    /// Clamps into `[0, 1]`; for resampled or synthetic signals that may
    /// overshoot by roundoff or ringing.
    pub fn from_raster_clamped(raster: Raster) -> Self {
        Image {
            raster: raster.map(|v| v.clamp(0.0, 1.0)),
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.raster.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.raster.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.raster.dims()
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.raster.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.raster.get(x, y)
    }

    pub fn as_raster(&self) -> &Raster {
        &self.raster
    }

    pub fn shifted(&self, dx: isize, dy: isize) -> Image {
        Image {
            raster: self.raster.shifted(dx, dy),
        }
    }

    pub fn rotated90(&self) -> Image {
        Image {
            raster: self.raster.rotated90(),
        }
    }

    /// Quantizes to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.raster
            .data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        )
    }
}

impl AsRef<Raster> for Image {
    fn as_ref(&self) -> &Raster {
        &self.raster
    }
}

impl AsRef<Raster> for Raster {
    fn as_ref(&self) -> &Raster {
        self
    }
}

/// Loads an 8-bit PGM (P2/P5), binary PPM (P6, as in the Oxford sequences)
/// or a grayscale/RGB PNG or JPEG.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        return parse_pgm(&bytes);
    }
    if bytes.starts_with(b"P6") {
        return parse_ppm(&bytes);
    }
    if bytes.starts_with(b"\x89PNG") {
        return decode(&bytes, image::ImageFormat::Png);
    }
    if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        return decode(&bytes, image::ImageFormat::Jpeg);
    }
    Err(Error::UnsupportedFormat(format!(
        "{} is not PGM (P2/P5), PPM (P6), PNG or JPEG",
        path.display()
    )))
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self) -> Result<usize> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Malformed("expected an unsigned integer".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Malformed("integer overflow in header".into()))
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(Error::UnsupportedFormat("missing PGM magic".into())),
    };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.next_uint()?;
    let height = cur.next_uint()?;
    let maxval = cur.next_uint()?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage("zero-sized image".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!(
            "only 8-bit PGM supported (maxval {maxval})"
        )));
    }
    let n = width * height;
    let scale = maxval as f64;
    let pixels: Vec<f64> = if binary {
        // exactly one whitespace byte separates header and raster
        let start = cur.pos + 1;
        let raster = bytes
            .get(start..start + n)
            .ok_or_else(|| Error::Malformed(format!("expected {n} raster bytes")))?;
        raster.iter().map(|&b| b as f64 / scale).collect()
    } else {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let v = cur
                .next_uint()
                .map_err(|_| Error::Malformed(format!("expected {n} ascii samples")))?;
            if v > maxval {
                return Err(Error::Malformed(format!("sample {v} exceeds maxval")));
            }
            out.push(v as f64 / scale);
        }
        out
    };
    Image::new(width, height, pixels)
}

/// Binary 8-bit PPM, converted to luma.
pub fn parse_ppm(bytes: &[u8]) -> Result<Image> {
    if bytes.get(..2) != Some(b"P6") {
        return Err(Error::UnsupportedFormat("missing PPM magic".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.next_uint()?;
    let height = cur.next_uint()?;
    let maxval = cur.next_uint()?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage("zero-sized image".into()));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "only 8-bit PPM supported (maxval {maxval})"
        )));
    }
    let n = width * height;
    let start = cur.pos + 1;
    let raster = bytes
        .get(start..start + 3 * n)
        .ok_or_else(|| Error::Malformed(format!("expected {} raster bytes", 3 * n)))?;
    let pixels = raster
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect();
    Image::new(width, height, pixels)
}

fn decode(bytes: &[u8], format: image::ImageFormat) -> Result<Image> {
    use image::DynamicImage;
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| Error::Malformed(format!("{format:?}: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::InvalidImage("zero-sized image".into()));
    }
    let pixels = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().iter().map(|&b| b as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_) => img
            .to_luma8()
            .into_raw()
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luma(p.0[0], p.0[1], p.0[2]))
            .collect(),
    };
    Image::new(w, h, pixels)
}

fn luma(r: u8, g: u8, b: u8) -> f64 {
    ((0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0).clamp(0.0, 1.0)
}

/// Writes a binary (P5) PGM.
pub fn save_pgm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    buf.extend_from_slice(&image.to_u8());
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Writes an 8-bit grayscale PNG.
pub fn save_png(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf =
        image::GrayImage::from_raw(image.width() as u32, image.height() as u32, image.to_u8())
            .expect("buffer size matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Codec(format!("{}: {e}", path.display())))
}

/// Saves by extension: `.png` as PNG, anything else as binary PGM.
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("png") => save_png(image, path),
        _ => save_pgm(image, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_bytes_divide_by_255() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let img = parse_pgm(&bytes).unwrap();
        let expect = [0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0];
        for (a, b) in img.pixels().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((img.pixels()[2] - 0.50196).abs() < 1e-5);
        assert!((img.pixels()[3] - 0.25098).abs() < 1e-5);
    }

    #[test]
    fn p2_with_comments() {
        let text = b"P2\n# a comment\n3 1\n# another\n255\n0 51 255\n";
        let img = parse_pgm(text).unwrap();
        assert_eq!(img.dims(), (3, 1));
        assert!((img.pixels()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn p6_uses_luma_weights() {
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 10, 20, 30]);
        let img = parse_ppm(&bytes).unwrap();
        assert!((img.pixels()[0] - 0.299).abs() < 1e-12);
        let want = (0.299 * 10.0 + 0.587 * 20.0 + 0.114 * 30.0) / 255.0;
        assert!((img.pixels()[1] - want).abs() < 1e-12);
        assert!(parse_ppm(b"P6\n2 1\n255\n\x01\x02").is_err());
    }

    #[test]
    fn all_zero_pgm() {
        let mut bytes = b"P5 4 4 255\n".to_vec();
        bytes.extend_from_slice(&[0; 16]);
        let img = parse_pgm(&bytes).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncated_and_bad_headers() {
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend_from_slice(&[1; 10]);
        assert!(matches!(parse_pgm(&bytes), Err(Error::Malformed(_))));
        assert!(matches!(
            parse_pgm(b"P5\n0 4\n255\n"),
            Err(Error::InvalidImage(_))
        ));
        assert!(matches!(
            parse_pgm(b"P5\n2 2\n65535\n"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            parse_pgm(b"P6\n"),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn image_rejects_out_of_range() {
        assert!(Image::new(1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Image::new(2, 1, vec![0.5]).is_err());
    }

    #[test]
    fn rotation_four_times_is_identity() {
        let r = Raster::from_fn(5, 3, |x, y| (x * 7 + y) as f64);
        let r4 = r.rotated90().rotated90().rotated90().rotated90();
        assert_eq!(r, r4);
        let r1 = r.rotated90();
        assert_eq!(r1.dims(), (3, 5));
        // (x, y) -> (h-1-y, x)
        assert_eq!(r1.get(3 - 1, 4), r.get(4, 0));
    }

    #[test]
    fn shift_moves_samples() {
        let r = Raster::from_fn(4, 4, |x, y| (x + 10 * y) as f64);
        let s = r.shifted(1, -1);
        assert_eq!(s.get(1, 0), r.get(0, 1));
        assert_eq!(s.get(0, 3), r.get(3, 0));
    }

    #[test]
    fn bilinear_reads_grid_and_midpoints() {
        let r = Raster::from_fn(3, 3, |x, y| (x + 3 * y) as f64);
        assert_eq!(r.bilinear(1.0, 1.0), 4.0);
        assert!((r.bilinear(0.5, 0.5) - 2.0).abs() < 1e-15);
        assert_eq!(r.bilinear(-0.1, 1.0), 0.0);
        assert_eq!(r.bilinear(2.0, 2.0), 8.0);
    }

    #[test]
    fn decimation_of_bandlimited_cosine_is_exact() {
        let n = 32;
        let r = Raster::from_fn(n, n, |x, _| {
            (2.0 * std::f64::consts::PI * 3.0 * x as f64 / n as f64).cos()
        });
        let d = r.fourier_decimate2().unwrap();
        assert_eq!(d.dims(), (16, 16));
        for y in 0..16 {
            for x in 0..16 {
                assert!((d.get(x, y) - r.get(2 * x, 2 * y)).abs() < 1e-12);
            }
        }
    }
}
