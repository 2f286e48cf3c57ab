//! RGB rasters, clipping, block-mean downscaling and the green chromatic
//! coordinate `G/(R+G+B)`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::randomfield::{FieldSample, StObservation};

/// 8-bit RGB image, row-major from the top-left pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbRaster {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
    /// Acquisition year (or any integer time index).
    pub timestamp: Option<i64>,
}

impl RgbRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!("raster dimensions must be positive, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} raster",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels, timestamp: None })
    }

    pub fn from_fn<F: FnMut(usize, usize) -> [u8; 3]>(width: usize, height: usize, mut f: F) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn with_timestamp(mut self, timestamp: i64) -> Self {
        self.timestamp = Some(timestamp);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    /// Per-channel mean over all pixels.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut s = [0u64; 3];
        for p in &self.pixels {
            for c in 0..3 {
                s[c] += p[c] as u64;
            }
        }
        let n = self.pixels.len() as f64;
        [s[0] as f64 / n, s[1] as f64 / n, s[2] as f64 / n]
    }
}

fn check_rect(width: usize, height: usize, x0: usize, y0: usize, w: usize, h: usize) -> Result<()> {
    if w == 0 || h == 0 || x0 + w > width || y0 + h > height {
        return Err(Error::OutOfBounds(format!(
            "rectangle {w}x{h} at ({x0}, {y0}) does not fit a {width}x{height} raster"
        )));
    }
    Ok(())
}

/// Exact sub-raster with top-left corner `(x0, y0)`.
pub fn clip(raster: &RgbRaster, x0: usize, y0: usize, width: usize, height: usize) -> Result<RgbRaster> {
    check_rect(raster.width, raster.height, x0, y0, width, height)?;
    let mut out = RgbRaster::from_fn(width, height, |x, y| raster.pixel(x0 + x, y0 + y))?;
    out.timestamp = raster.timestamp;
    Ok(out)
}

/// Mean of `window × window` blocks, rounded half up. Trailing partial
/// blocks are averaged over the pixels they contain, so the output is
/// `ceil(width/window) × ceil(height/window)`.
pub fn downscale_block_mean(raster: &RgbRaster, window: usize) -> Result<RgbRaster> {
    if window == 0 {
        return Err(Error::Domain("window must be at least 1".into()));
    }
    let ow = raster.width.div_ceil(window);
    let oh = raster.height.div_ceil(window);
    let mut out = RgbRaster::from_fn(ow, oh, |bx, by| {
        let (x0, y0) = (bx * window, by * window);
        let (x1, y1) = ((x0 + window).min(raster.width), (y0 + window).min(raster.height));
        let mut s = [0u64; 3];
        for y in y0..y1 {
            for x in x0..x1 {
                let p = raster.pixel(x, y);
                for c in 0..3 {
                    s[c] += p[c] as u64;
                }
            }
        }
        let n = ((x1 - x0) * (y1 - y0)) as u64;
        let mean = |v: u64| ((2 * v + n) / (2 * n)) as u8;
        [mean(s[0]), mean(s[1]), mean(s[2])]
    })?;
    out.timestamp = raster.timestamp;
    Ok(out)
}

/// Unrounded block means, row-major over the `ceil(width/window) ×
/// ceil(height/window)` output grid.
pub fn block_channel_means(raster: &RgbRaster, window: usize) -> Result<(usize, usize, Vec<[f64; 3]>)> {
    if window == 0 {
        return Err(Error::Domain("window must be at least 1".into()));
    }
    let ow = raster.width.div_ceil(window);
    let oh = raster.height.div_ceil(window);
    let mut out = Vec::with_capacity(ow * oh);
    for by in 0..oh {
        for bx in 0..ow {
            let (x0, y0) = (bx * window, by * window);
            let (x1, y1) = ((x0 + window).min(raster.width), (y0 + window).min(raster.height));
            let mut s = [0u64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = raster.pixel(x, y);
                    for c in 0..3 {
                        s[c] += p[c] as u64;
                    }
                }
            }
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            out.push([s[0] as f64 / n, s[1] as f64 / n, s[2] as f64 / n]);
        }
    }
    Ok((ow, oh, out))
}

/// Per-pixel green chromatic coordinate; `None` where `R+G+B = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GccRaster {
    width: usize,
    height: usize,
    values: Vec<Option<f64>>,
    pub timestamp: Option<i64>,
}

pub const GCC_HEADER: &str = "x,y,t,gcc";

impl GccRaster {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn clip(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        check_rect(self.width, self.height, x0, y0, width, height)?;
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(self.get(x0 + x, y0 + y));
            }
        }
        Ok(Self { width, height, values, timestamp: self.timestamp })
    }

    /// Block mean of the present values; a block with none stays missing.
    pub fn downscale_mean(&self, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Domain("window must be at least 1".into()));
        }
        let ow = self.width.div_ceil(window);
        let oh = self.height.div_ceil(window);
        let mut values = Vec::with_capacity(ow * oh);
        for by in 0..oh {
            for bx in 0..ow {
                let (mut s, mut n) = (0.0, 0usize);
                for y in by * window..((by + 1) * window).min(self.height) {
                    for x in bx * window..((bx + 1) * window).min(self.width) {
                        if let Some(v) = self.get(x, y) {
                            s += v;
                            n += 1;
                        }
                    }
                }
                values.push(if n > 0 { Some(s / n as f64) } else { None });
            }
        }
        Ok(Self { width: ow, height: oh, values, timestamp: self.timestamp })
    }

    /// Rows `x,y,t,gcc` at pixel centers; missing values are left empty.
    pub fn write_table<W: Write>(&self, t: f64, mut w: W) -> Result<()> {
        writeln!(w, "{GCC_HEADER}")?;
        for y in 0..self.height {
            for x in 0..self.width {
                let v = self.get(x, y).map(|v| v.to_string()).unwrap_or_default();
                writeln!(w, "{},{},{},{}", x as f64 + 0.5, y as f64 + 0.5, t, v)?;
            }
        }
        Ok(())
    }
}

pub fn gcc(raster: &RgbRaster) -> GccRaster {
    let values = raster
        .pixels
        .iter()
        .map(|&[r, g, b]| {
            let total = r as u32 + g as u32 + b as u32;
            (total > 0).then(|| g as f64 / total as f64)
        })
        .collect();
    GccRaster { width: raster.width, height: raster.height, values, timestamp: raster.timestamp }
}

/// Field built from a stack of G_cc rasters.
#[derive(Debug, Clone, PartialEq)]
pub struct GccField {
    pub sample: FieldSample,
    /// Missing pixels that were dropped.
    pub dropped: usize,
    pub width: usize,
    pub height: usize,
    /// Timestamp of each time index `1, 2, ...` in order.
    pub timestamps: Vec<i64>,
}

/// Stack rasters into a spatiotemporal field with coordinates at pixel
/// centers (unit spacing) and time `timestamp - min + 1`. Rasters without
/// timestamps are numbered `1, 2, ...` in order.
pub fn to_field(rasters: &[GccRaster]) -> Result<GccField> {
    let first = rasters.first().ok_or_else(|| Error::Domain("no rasters given".into()))?;
    if let Some(r) = rasters.iter().find(|r| r.width != first.width || r.height != first.height) {
        return Err(Error::DimensionMismatch(format!(
            "raster of {}x{} does not match {}x{}",
            r.width, r.height, first.width, first.height
        )));
    }
    let stamps: Vec<i64> = if rasters.iter().all(|r| r.timestamp.is_none()) {
        (1..=rasters.len() as i64).collect()
    } else {
        rasters
            .iter()
            .map(|r| r.timestamp.ok_or_else(|| Error::Domain("some rasters lack a timestamp".into())))
            .collect::<Result<_>>()?
    };
    let mut sorted = stamps.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Domain("raster timestamps must be distinct".into()));
    }
    let base = sorted[0];
    let mut order: Vec<usize> = (0..rasters.len()).collect();
    order.sort_by_key(|&i| stamps[i]);
    let mut obs = Vec::new();
    let mut dropped = 0;
    for &i in &order {
        let r = &rasters[i];
        let t = (stamps[i] - base + 1) as f64;
        for y in 0..r.height {
            for x in 0..r.width {
                match r.get(x, y) {
                    Some(v) => obs.push(StObservation { x: x as f64 + 0.5, y: y as f64 + 0.5, t, value: v }),
                    None => dropped += 1,
                }
            }
        }
    }
    Ok(GccField {
        sample: FieldSample::spatiotemporal(obs),
        dropped,
        width: first.width,
        height: first.height,
        timestamps: sorted,
    })
}

/// `(year, month, day)` from the first `YYYY?MM?DD` run in a file stem,
/// where `?` is `-` or `_`.
pub fn parse_date_stem(stem: &str) -> Option<(i64, u32, u32)> {
    let b = stem.as_bytes();
    if b.len() < 10 {
        return None;
    }
    let digits = |s: &[u8]| s.iter().all(u8::is_ascii_digit);
    let sep = |c: u8| c == b'-' || c == b'_';
    for i in 0..=b.len() - 10 {
        let w = &b[i..i + 10];
        let bounded = (i == 0 || !b[i - 1].is_ascii_digit()) && (i + 10 == b.len() || !b[i + 10].is_ascii_digit());
        if bounded && digits(&w[0..4]) && sep(w[4]) && digits(&w[5..7]) && sep(w[7]) && digits(&w[8..10]) {
            let year: i64 = stem[i..i + 4].parse().ok()?;
            let month: u32 = stem[i + 5..i + 7].parse().ok()?;
            let day: u32 = stem[i + 8..i + 10].parse().ok()?;
            if (1..=12).contains(&month) && (1..=31).contains(&day) {
                return Some((year, month, day));
            }
        }
    }
    None
}

fn ppm_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c as char);
    }
    if tok.is_empty() {
        Err(Error::Parse("truncated PPM header".into()))
    } else {
        Ok(tok)
    }
}

/// Read a binary (`P6`) portable pixmap. Samples with a maximum value other
/// than 255 are rescaled to 0–255 with rounding.
pub fn read_ppm<R: BufRead>(mut r: R) -> Result<RgbRaster> {
    if ppm_token(&mut r)? != "P6" {
        return Err(Error::Parse("not a binary PPM (P6) file".into()));
    }
    let num = |s: String| s.parse::<usize>().map_err(|e| Error::Parse(format!("PPM header: {e}")));
    let width = num(ppm_token(&mut r)?)?;
    let height = num(ppm_token(&mut r)?)?;
    let maxval = num(ppm_token(&mut r)?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("PPM maximum value {maxval} out of range")));
    }
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let mut data = vec![0u8; width * height * 3 * bytes_per];
    r.read_exact(&mut data).map_err(|_| Error::Parse("PPM pixel data is truncated".into()))?;
    let sample = |k: usize| -> u8 {
        let v = if bytes_per == 1 { data[k] as usize } else { (data[2 * k] as usize) << 8 | data[2 * k + 1] as usize };
        if maxval == 255 {
            v as u8
        } else {
            ((v.min(maxval) * 255 * 2 + maxval) / (2 * maxval)) as u8
        }
    };
    let pixels = (0..width * height).map(|i| [sample(3 * i), sample(3 * i + 1), sample(3 * i + 2)]).collect();
    RgbRaster::new(width, height, pixels)
}

pub fn write_ppm<W: Write>(raster: &RgbRaster, mut w: W) -> Result<()> {
    write!(w, "P6\n{} {}\n255\n", raster.width, raster.height)?;
    let bytes: Vec<u8> = raster.pixels.iter().flat_map(|p| p.iter().copied()).collect();
    w.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pattern(w: usize, h: usize) -> RgbRaster {
        RgbRaster::from_fn(w, h, |x, y| [(x * 7 + y) as u8, (x * y % 251) as u8, (3 * x + 11 * y) as u8]).unwrap()
    }

    #[test]
    fn gcc_examples() {
        let r = RgbRaster::new(3, 1, vec![[0, 255, 0], [100, 100, 100], [0, 0, 0]]).unwrap();
        let g = gcc(&r);
        assert_eq!(g.get(0, 0), Some(1.0));
        assert_eq!(g.get(1, 0), Some(1.0 / 3.0));
        assert_eq!(g.get(2, 0), None);
        assert_eq!(g.missing(), 1);
    }

    #[test]
    fn clip_cases() {
        let r = pattern(9, 7);
        assert_eq!(clip(&r, 0, 0, 9, 7).unwrap(), r);
        let one = clip(&r, 4, 5, 1, 1).unwrap();
        assert_eq!(one.pixel(0, 0), r.pixel(4, 5));
        assert!(clip(&r, 5, 0, 5, 1).is_err());
        assert!(clip(&r, 0, 0, 0, 1).is_err());
        let cam = RgbRaster::from_fn(2048, 1636, |_, _| [1, 2, 3]).unwrap();
        let c = clip(&cam, 100, 200, 570, 660).unwrap();
        assert_eq!((c.width(), c.height()), (570, 660));
        let d = downscale_block_mean(&c, 15).unwrap();
        assert_eq!((d.width(), d.height()), (38, 44));
    }

    #[test]
    fn block_mean_examples() {
        let r = pattern(9, 7);
        assert_eq!(downscale_block_mean(&r, 1).unwrap(), r);
        let u = RgbRaster::from_fn(10, 6, |_, _| [5, 6, 7]).unwrap();
        let d = downscale_block_mean(&u, 4).unwrap();
        assert_eq!((d.width(), d.height()), (3, 2));
        assert!(d.pixels().iter().all(|p| *p == [5, 6, 7]));
        let b = RgbRaster::new(2, 2, vec![[0, 0, 0], [0, 100, 0], [0, 100, 0], [0, 200, 0]]).unwrap();
        assert_eq!(downscale_block_mean(&b, 2).unwrap().pixel(0, 0), [0, 100, 0]);
        let half = RgbRaster::new(2, 1, vec![[0, 0, 0], [1, 2, 3]]).unwrap();
        assert_eq!(downscale_block_mean(&half, 2).unwrap().pixel(0, 0), [1, 1, 2]);
        assert!(downscale_block_mean(&r, 0).is_err());
    }

    #[test]
    fn partial_blocks_use_actual_pixels() {
        let r = RgbRaster::from_fn(3, 1, |x, _| if x == 2 { [90, 90, 90] } else { [0, 0, 0] }).unwrap();
        let d = downscale_block_mean(&r, 2).unwrap();
        assert_eq!(d.width(), 2);
        assert_eq!(d.pixel(1, 0), [90, 90, 90]);
    }

    #[test]
    fn field_from_rasters() {
        let g = gcc(&RgbRaster::new(2, 2, vec![[1, 2, 3]; 4]).unwrap());
        let f = to_field(&[g.clone()]).unwrap();
        assert_eq!(f.sample.len(), 4);
        assert!(f.sample.st_observations().unwrap().iter().all(|o| o.t == 1.0));
        let a = GccRaster { timestamp: Some(2010), ..gcc(&RgbRaster::new(2, 1, vec![[0, 0, 0], [1, 1, 1]]).unwrap()) };
        let b = GccRaster { timestamp: Some(2008), ..gcc(&RgbRaster::new(2, 1, vec![[1, 1, 1], [1, 1, 1]]).unwrap()) };
        let f = to_field(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(f.dropped, 1);
        assert_eq!(f.timestamps, vec![2008, 2010]);
        let ts: Vec<f64> = f.sample.st_observations().unwrap().iter().map(|o| o.t).collect();
        assert_eq!(ts, vec![1.0, 1.0, 3.0]);
        assert!(to_field(&[a.clone(), a.clone()]).is_err());
        assert!(to_field(&[g, a]).is_err());
        let many: Vec<GccRaster> = (0..15)
            .map(|k| GccRaster { timestamp: Some(2008 + k), ..gcc(&RgbRaster::from_fn(44, 58, |_, _| [1, 2, 3]).unwrap()) })
            .collect();
        assert_eq!(to_field(&many).unwrap().sample.len(), 38_280);
    }

    #[test]
    fn date_stems() {
        assert_eq!(parse_date_stem("harvard_2008_08_01_120139"), Some((2008, 8, 1)));
        assert_eq!(parse_date_stem("2019-07-15"), Some((2019, 7, 15)));
        assert_eq!(parse_date_stem("img_12019-07-15"), None);
        assert_eq!(parse_date_stem("2019-13-15"), None);
        assert_eq!(parse_date_stem("short"), None);
    }

    #[test]
    fn ppm_round_trip() {
        let r = pattern(5, 3);
        let mut buf = Vec::new();
        write_ppm(&r, &mut buf).unwrap();
        assert_eq!(read_ppm(&buf[..]).unwrap(), r);
        let commented = b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03";
        assert_eq!(read_ppm(&commented[..]).unwrap().pixel(0, 0), [1, 2, 3]);
        let scaled = b"P6 1 1 15 \x0f\x00\x07";
        assert_eq!(read_ppm(&scaled[..]).unwrap().pixel(0, 0), [255, 0, 119]);
        assert!(read_ppm(&b"P3\n1 1\n255\n1 2 3"[..]).is_err());
        assert!(read_ppm(&b"P6\n2 2\n255\n\x00"[..]).is_err());
    }

    proptest! {
        #[test]
        fn gcc_commutes_with_clip(w in 1usize..12, h in 1usize..12, seed in 0u64..1000, fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
            let r = RgbRaster::from_fn(w, h, |x, y| {
                let v = (seed as usize).wrapping_mul(31).wrapping_add(x * 17 + y * 101);
                [(v % 256) as u8, (v / 3 % 256) as u8, (v / 7 % 256) as u8]
            }).unwrap();
            let (x0, y0) = ((fx * w as f64) as usize % w, (fy * h as f64) as usize % h);
            let (cw, ch) = (w - x0, h - y0);
            prop_assert_eq!(gcc(&clip(&r, x0, y0, cw, ch).unwrap()), gcc(&r).clip(x0, y0, cw, ch).unwrap());
            prop_assert!(gcc(&r).values().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn divisible_block_mean_keeps_channel_means(bw in 1usize..5, bh in 1usize..5, k in 1usize..4, seed in 0u64..100) {
            // Constant blocks make the rounded block means exact.
            let r = RgbRaster::from_fn(bw * k, bh * k, |x, y| {
                let v = (seed as usize + (x / k) * 37 + (y / k) * 91) % 256;
                [v as u8, (255 - v) as u8, (v / 2) as u8]
            }).unwrap();
            prop_assert_eq!(downscale_block_mean(&r, k).unwrap().channel_means(), r.channel_means());
        }

        #[test]
        fn divisible_unrounded_block_means_keep_channel_means(bw in 1usize..6, bh in 1usize..6, k in 1usize..5, seed in 0u64..1000) {
            let r = RgbRaster::from_fn(bw * k, bh * k, |x, y| {
                let v = (seed as usize).wrapping_mul(7919).wrapping_add(x * 131 + y * 71) % 256;
                [v as u8, (v * 3 % 256) as u8, (v / 5) as u8]
            }).unwrap();
            let (_, _, m) = block_channel_means(&r, k).unwrap();
            let g = r.channel_means();
            for c in 0..3 {
                let mean = m.iter().map(|p| p[c]).sum::<f64>() / m.len() as f64;
                prop_assert!((mean - g[c]).abs() <= 1e-12 * g[c].max(1.0));
            }
            let d = downscale_block_mean(&r, k).unwrap().channel_means();
            for c in 0..3 {
                prop_assert!((d[c] - g[c]).abs() <= 0.5);
            }
        }
    }
}
