//! Binary PGM/PPM images and dataset manifests.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

fn parse_err<T>(offset: usize, reason: impl Into<String>) -> Result<T> {
    Err(Error::Parse { offset, reason: reason.into() })
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return parse_err(0, "expected magic P5 or P6"),
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // Whitespace and comments before each field; at least one separator.
        let start = pos;
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        if pos == start {
            return parse_err(pos, "expected whitespace");
        }
        let digits = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if pos == digits {
            return parse_err(pos, format!("expected {}", ["width", "height", "maxval"][i]));
        }
        *field = std::str::from_utf8(&bytes[digits..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::Parse { offset: digits, reason: "integer overflow".into() })?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return parse_err(pos, "expected a single whitespace byte after maxval");
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return parse_err(pos, "zero image dimension");
    }
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    Ok(Header { channels, width: width as usize, height: height as usize, data_start: pos + 1 })
}

/// Decodes a P5/P6 file into `[1, C, H, W]` with values `byte / 255`.
pub fn decode_pnm<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let h = parse_header(bytes)?;
    let (c, hw) = (h.channels, h.width * h.height);
    let need = c * hw;
    let payload = &bytes[h.data_start..];
    if payload.len() < need {
        return parse_err(bytes.len(), format!("truncated payload: {} of {need} bytes", payload.len()));
    }
    let mut data = vec![T::zero(); need];
    for (i, &b) in payload[..need].iter().enumerate() {
        // Interleaved RGB to planar.
        data[(i % c) * hw + i / c] = T::from_f64_lossy(b as f64 / 255.0);
    }
    Tensor::new(&[1, c, h.height, h.width], data)
}

/// Encodes `[C, H, W]` or `[1, C, H, W]` (C = 1 or 3) with round-half-to-even quantization.
pub fn encode_pnm<T: Scalar>(image: &Tensor<T>, clamp: bool) -> Result<Vec<u8>> {
    let (c, h, w) = match *image.shape() {
        [c, h, w] | [1, c, h, w] if c == 1 || c == 3 => (c, h, w),
        _ => return Err(Error::Config(format!("cannot encode shape {:?} as PGM/PPM", image.shape()))),
    };
    let hw = h * w;
    let mut out = format!("{}\n{w} {h}\n255\n", if c == 1 { "P5" } else { "P6" }).into_bytes();
    out.reserve(c * hw);
    let d = image.data();
    for i in 0..hw {
        for ch in 0..c {
            let index = ch * hw + i;
            let mut v = d[index].to_f64_lossy();
            if !(0.0..=1.0).contains(&v) {
                if !clamp || v.is_nan() {
                    return Err(Error::OutOfRange { index, value: v });
                }
                v = v.clamp(0.0, 1.0);
            }
            out.push((v * 255.0).round_ties_even() as u8);
        }
    }
    Ok(out)
}

pub fn read_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    decode_pnm(&fs::read(path)?)
}

pub fn write_image<T: Scalar>(image: &Tensor<T>, path: impl AsRef<Path>, clamp: bool) -> Result<()> {
    fs::write(path, encode_pnm(image, clamp)?)?;
    Ok(())
}

/// Converts between 1 and 3 channels (BT.601 luma / replication).
pub fn to_channels<T: Scalar>(image: &Tensor<T>, channels: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = image.dims4()?;
    if c == channels {
        return Ok(image.clone());
    }
    let hw = h * w;
    let d = image.data();
    match (c, channels) {
        (3, 1) => Ok(Tensor::from_fn(&[b, 1, h, w], |i| {
            let (n, p) = (i / hw, i % hw);
            let at = |ch: usize| d[(n * 3 + ch) * hw + p].to_f64_lossy();
            T::from_f64_lossy(0.299 * at(0) + 0.587 * at(1) + 0.114 * at(2))
        })),
        (1, 3) => Ok(Tensor::from_fn(&[b, 3, h, w], |i| d[(i / (3 * hw)) * hw + i % hw])),
        _ => Err(Error::Config(format!("cannot convert {c} channels to {channels}"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorMode {
    Rgb,
    Gray,
}

impl ColorMode {
    pub fn channels(self) -> usize {
        match self {
            ColorMode::Rgb => 3,
            ColorMode::Gray => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub clean: PathBuf,
    pub noisy: Option<PathBuf>,
}

/// One record per line: `clean[<TAB>noisy]`. Lines starting with `#` are
/// comments, except `#!color rgb|gray`, which sets the color mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub color: ColorMode,
    pub records: Vec<Record>,
}

impl DatasetManifest {
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let mut color = ColorMode::Rgb;
        let mut records = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            let bad = |reason: String| Error::Manifest { line: i + 1, reason };
            if let Some(d) = line.strip_prefix("#!color") {
                color = match d.trim() {
                    "rgb" => ColorMode::Rgb,
                    "gray" => ColorMode::Gray,
                    other => return Err(bad(format!("unknown color mode {other:?}"))),
                };
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let clean = cols.next().unwrap_or_default();
            let noisy = cols.next().filter(|s| !s.is_empty());
            if cols.next().is_some() {
                return Err(bad("more than two tab-separated columns".into()));
            }
            if clean.is_empty() {
                return Err(bad("empty clean path".into()));
            }
            records.push(Record { clean: root.join(clean), noisy: noisy.map(|p| root.join(p)) });
        }
        Ok(DatasetManifest { root, color, records })
    }

    /// Reads a manifest and checks that every referenced file exists. Relative
    /// paths resolve against `root`, or the manifest's own directory.
    pub fn load(path: impl AsRef<Path>, root: Option<&Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let root = match root {
            Some(r) => r.to_path_buf(),
            None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        let m = Self::parse(&text, root)?;
        let missing: Vec<PathBuf> = m
            .records
            .iter()
            .flat_map(|r| std::iter::once(&r.clean).chain(r.noisy.as_ref()))
            .filter(|p| !p.is_file())
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingFiles(missing));
        }
        Ok(m)
    }

    pub fn is_paired(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.noisy.is_some())
    }

    pub fn require_paired(&self) -> Result<()> {
        match self.records.iter().position(|r| r.noisy.is_none()) {
            Some(i) => Err(Error::Config(format!("paired mode needs a noisy path on every record; record {} has none", i + 1))),
            None => Ok(()),
        }
    }

    /// Manifest text with paths relative to `root` where possible.
    pub fn to_text(&self) -> String {
        let rel = |p: &Path| p.strip_prefix(&self.root).unwrap_or(p).display().to_string();
        let mut s = format!("#!color {}\n", if self.color == ColorMode::Gray { "gray" } else { "rgb" });
        for r in &self.records {
            s += &rel(&r.clean);
            if let Some(n) = &r.noisy {
                s.push('\t');
                s += &rel(n);
            }
            s.push('\n');
        }
        s
    }

    /// Clean images converted to the manifest's color mode, each `[1, C, H, W]`.
    pub fn load_clean<T: Scalar>(&self) -> Result<Vec<(PathBuf, Tensor<T>)>> {
        self.records.iter().map(|r| Ok((r.clean.clone(), to_channels(&read_image(&r.clean)?, self.color.channels())?))).collect()
    }

    pub fn load_pairs<T: Scalar>(&self) -> Result<Vec<(PathBuf, Tensor<T>, Tensor<T>)>> {
        self.require_paired()?;
        let c = self.color.channels();
        self.records
            .iter()
            .map(|r| {
                let noisy = r.noisy.as_ref().expect("checked by require_paired");
                Ok((r.clean.clone(), to_channels(&read_image(&r.clean)?, c)?, to_channels(&read_image(noisy)?, c)?))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_scaling() {
        let t: Tensor<f64> = decode_pnm(b"P5\n2 2\n255\n\x00\xff\x80\x40").unwrap();
        assert_eq!(t.shape(), &[1, 1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn canonical_round_trip_is_byte_exact() {
        let mut f = b"P6\n3 2\n255\n".to_vec();
        f.extend((0..18u8).map(|i| i.wrapping_mul(37)));
        let t: Tensor<f32> = decode_pnm(&f).unwrap();
        assert_eq!(encode_pnm(&t, false).unwrap(), f);
    }

    #[test]
    fn comments_and_errors() {
        let t: Tensor<f32> = decode_pnm(b"P5 # c\n# more\n1 1 255 \x07").unwrap();
        assert_eq!(t.data(), &[7.0 / 255.0]);
        assert!(matches!(decode_pnm::<f32>(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(Error::UnsupportedMaxval(65535))));
        assert!(matches!(decode_pnm::<f32>(b"P5\n2 2\n255\n\0"), Err(Error::Parse { offset: 12, .. })));
        assert!(matches!(decode_pnm::<f32>(b"P3\n"), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(decode_pnm::<f32>(b"P5\n2 x"), Err(Error::Parse { offset: 5, .. })));
    }

    #[test]
    fn quantization() {
        let half = encode_pnm(&Tensor::<f64>::full(&[1, 2, 2], 0.5), false).unwrap();
        assert!(half[half.len() - 4..].iter().all(|&b| b == 128));
        let zero = encode_pnm(&Tensor::<f64>::zeros(&[1, 2, 2]), false).unwrap();
        assert!(zero[zero.len() - 4..].iter().all(|&b| b == 0));
        let hot = Tensor::<f64>::full(&[1, 1, 1], 1.2);
        assert!(matches!(encode_pnm(&hot, false), Err(Error::OutOfRange { index: 0, .. })));
        assert_eq!(*encode_pnm(&hot, true).unwrap().last().unwrap(), 255);
    }

    #[test]
    fn manifest_parsing() {
        let m = DatasetManifest::parse("# set\n#!color gray\na.ppm\tb.ppm\n\nc.ppm\n", "/data").unwrap();
        assert_eq!(m.color, ColorMode::Gray);
        assert_eq!(m.records.len(), 2);
        assert_eq!(m.records[0].noisy.as_deref(), Some(Path::new("/data/b.ppm")));
        assert!(!m.is_paired());
        assert!(m.require_paired().is_err());
        let again = DatasetManifest::parse(&m.to_text(), "/data").unwrap();
        assert_eq!(again, m);
        assert!(matches!(DatasetManifest::parse("a\tb\tc\n", "."), Err(Error::Manifest { line: 1, .. })));
    }

    #[test]
    fn missing_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        fs::write(&path, "x.ppm\ny.ppm\n").unwrap();
        match DatasetManifest::load(&path, None) {
            Err(Error::MissingFiles(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn channel_conversion() {
        let g = Tensor::<f32>::from_fn(&[1, 1, 2, 2], |i| i as f32 / 4.0);
        let rgb = to_channels(&g, 3).unwrap();
        assert_eq!(&rgb.data()[4..8], g.data());
        let back = to_channels(&rgb, 1).unwrap();
        assert!(back.max_abs_diff(&g) < 1e-6);
    }
}
