use crate::error::{config_err, Result};
use crate::noise::{apply_noise, NoiseSpec};
use crate::numerics::{Scalar, Tensor};
use crate::random::SeededStream;

/// Training images, `[1, C, H, W]` each, with either a noise model or a
/// noisy counterpart per image.
#[derive(Clone, Debug)]
pub struct TrainData<T: Scalar> {
    images: Vec<(Tensor<T>, Option<Tensor<T>>)>,
    noise: Option<NoiseSpec>,
    channels: usize,
}

impl<T: Scalar> TrainData<T> {
    /// Images smaller than `patch` are dropped with a warning on stderr.
    pub fn synthetic(clean: Vec<Tensor<T>>, noise: NoiseSpec, patch: usize) -> Result<Self> {
        Self::build(clean.into_iter().map(|c| (c, None)).collect(), Some(noise), patch)
    }

    pub fn paired(pairs: Vec<(Tensor<T>, Tensor<T>)>, patch: usize) -> Result<Self> {
        for (i, (c, n)) in pairs.iter().enumerate() {
            if c.shape() != n.shape() {
                return config_err(format!("pair {i}: clean {:?} vs noisy {:?}", c.shape(), n.shape()));
            }
        }
        Self::build(pairs.into_iter().map(|(c, n)| (c, Some(n))).collect(), None, patch)
    }

    fn build(all: Vec<(Tensor<T>, Option<Tensor<T>>)>, noise: Option<NoiseSpec>, patch: usize) -> Result<Self> {
        let mut images = Vec::with_capacity(all.len());
        let mut channels = None;
        for (i, (c, n)) in all.into_iter().enumerate() {
            let [b, ch, h, w] = c.dims4()?;
            if b != 1 {
                return config_err(format!("image {i} has batch dimension {b}"));
            }
            if *channels.get_or_insert(ch) != ch {
                return config_err(format!("image {i} has {ch} channels, others have {}", channels.unwrap()));
            }
            if h < patch || w < patch {
                eprintln!("warning: skipping training image {i} ({h}x{w}) smaller than patch {patch}");
                continue;
            }
            images.push((c, n));
        }
        if images.is_empty() {
            return config_err(format!("no training image is at least {patch}x{patch}"));
        }
        Ok(TrainData { images, noise, channels: channels.unwrap_or(0) })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn noise(&self) -> Option<&NoiseSpec> {
        self.noise.as_ref()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Augment {
    pub rotate: bool,
    pub flip: bool,
}

impl Augment {
    pub const NONE: Augment = Augment { rotate: false, flip: false };
    pub const ALL: Augment = Augment { rotate: true, flip: true };

    /// Index into the dihedral group: rotation `d % 4`, then a flip if `d >= 4`.
    pub fn draw(self, rng: &mut SeededStream) -> usize {
        let rot = if self.rotate { rng.below(4) } else { 0 };
        let flip = if self.flip { rng.below(2) } else { 0 };
        rot + 4 * flip
    }
}

/// Crops `[1, C, H, W]` at `(top, left)` to `size x size`, then rotates
/// counter-clockwise by `d % 4` quarter turns and mirrors left-right if `d >= 4`.
pub fn crop_transform<T: Scalar>(image: &Tensor<T>, top: usize, left: usize, size: usize, d: usize) -> Result<Tensor<T>> {
    let [_, c, h, w] = image.dims4()?;
    if top + size > h || left + size > w {
        return config_err(format!("crop {size}x{size} at ({top},{left}) exceeds {h}x{w}"));
    }
    let src = image.data();
    let p = size;
    Ok(Tensor::from_fn(&[1, c, p, p], |i| {
        let (ch, r, col) = (i / (p * p), (i / p) % p, i % p);
        let col = if d >= 4 { p - 1 - col } else { col };
        // Inverse rotation: output (r, c) reads input (c, p-1-r) once per quarter turn.
        let (mut y, mut x) = (r, col);
        for _ in 0..d % 4 {
            (y, x) = (x, p - 1 - y);
        }
        src[(ch * h + top + y) * w + left + x]
    }))
}

/// Draws `batch` random patches. Synthetic noise is added after the clean
/// patch is augmented, using `noise_stream` for the realization.
pub fn sample_batch<T: Scalar>(
    data: &TrainData<T>,
    patch: usize,
    batch: usize,
    augment: Augment,
    rng: &mut SeededStream,
    noise_stream: u64,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut clean = Vec::with_capacity(batch);
    let mut noisy = Vec::with_capacity(batch);
    for _ in 0..batch {
        let (img, pair) = &data.images[rng.below(data.images.len())];
        let [_, _, h, w] = img.dims4()?;
        let top = rng.below(h - patch + 1);
        let left = rng.below(w - patch + 1);
        let d = augment.draw(rng);
        clean.push(crop_transform(img, top, left, patch, d)?);
        if let Some(n) = pair {
            noisy.push(crop_transform(n, top, left, patch, d)?);
        }
    }
    let clean = Tensor::stack_first(&clean)?;
    let noisy = match data.noise {
        Some(spec) => apply_noise(&clean, &spec, noise_stream)?,
        None => Tensor::stack_first(&noisy)?,
    };
    Ok((clean, noisy))
}

/// Procedural clean images: a smooth gradient background with rectangles,
/// disks and striped patches in random colors. Values lie in `[0, 1]`.
pub fn synthetic_images<T: Scalar>(count: usize, height: usize, width: usize, channels: usize, seed: u64) -> Vec<Tensor<T>> {
    (0..count)
        .map(|i| {
            let mut rng = SeededStream::new(seed, 0x1_0000 + i as u64);
            let mut u = || rng.uniform_open0();
            let (h, w) = (height as f64, width as f64);
            let color = |u: &mut dyn FnMut() -> f64| (0..channels).map(|_| u()).collect::<Vec<f64>>();
            let base = color(&mut u);
            let tilt = color(&mut u);
            let (gy, gx) = (u() - 0.5, u() - 0.5);
            let mut img: Vec<f64> = (0..channels * height * width)
                .map(|k| {
                    let (ch, y, x) = (k / (height * width), (k / width) % height, k % width);
                    0.5 * base[ch] + 0.5 * tilt[ch] * (0.5 + gy * y as f64 / h + gx * x as f64 / w)
                })
                .collect();
            let shapes = 4 + (u() * 5.0) as usize;
            for _ in 0..shapes {
                let kind = (u() * 3.0) as usize;
                let fill = color(&mut u);
                let (cy, cx) = (u() * h, u() * w);
                let (ry, rx) = ((0.05 + 0.25 * u()) * h, (0.05 + 0.25 * u()) * w);
                let period = 2.0 + 6.0 * u();
                let angle = u() * std::f64::consts::PI;
                let (sa, ca) = angle.sin_cos();
                for y in 0..height {
                    for x in 0..width {
                        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                        let inside = match kind {
                            0 => dy.abs() < ry && dx.abs() < rx,
                            1 => (dy / ry).powi(2) + (dx / rx).powi(2) < 1.0,
                            _ => dy.abs() < ry && dx.abs() < rx && ((dx * ca + dy * sa) / period).floor() as i64 % 2 == 0,
                        };
                        if inside {
                            for (ch, f) in fill.iter().enumerate() {
                                img[(ch * height + y) * width + x] = *f;
                            }
                        }
                    }
                }
            }
            Tensor::from_fn(&[1, channels, height, width], |k| T::from_f64_lossy(img[k].clamp(0.0, 1.0)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_fn(&[1, c, h, w], |i| i as f64)
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let img = ramp(2, 5, 5);
        let mut p = img.clone();
        for _ in 0..4 {
            p = crop_transform(&p, 0, 0, 5, 1).unwrap();
        }
        assert_eq!(p, img);
        let once = crop_transform(&img, 0, 0, 5, 1).unwrap();
        assert_ne!(once, img);
        // Counter-clockwise: the top-right input pixel ends up top-left.
        assert_eq!(once.data()[0], img.data()[4]);
    }

    #[test]
    fn eight_transforms_are_distinct() {
        let img = ramp(1, 4, 4);
        let all: Vec<_> = (0..8).map(|d| crop_transform(&img, 0, 0, 4, d).unwrap()).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(all[i], all[j], "{i} {j}");
            }
        }
    }

    #[test]
    fn crops_are_reproducible() {
        let data = TrainData::synthetic(vec![ramp(3, 20, 24)], NoiseSpec::awgn(0.1, 3), 8).unwrap();
        let draw = |seed| sample_batch(&data, 8, 4, Augment::NONE, &mut SeededStream::new(seed, 0), 0).unwrap();
        assert_eq!(draw(1).0, draw(1).0);
        assert_eq!(draw(1).1, draw(1).1);
        assert_ne!(draw(1).0, draw(2).0);
    }

    #[test]
    fn dihedral_frequencies_are_uniform() {
        let mut rng = SeededStream::new(4, 0);
        let n: f64 = 10_000.0;
        let mut counts = [0usize; 8];
        for _ in 0..n as usize {
            counts[Augment::ALL.draw(&mut rng)] += 1;
        }
        let p: f64 = 1.0 / 8.0;
        let se = (p * (1.0 - p) / n).sqrt();
        for c in counts {
            assert!((c as f64 / n - p).abs() < 3.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn small_images_skipped() {
        let data = TrainData::synthetic(vec![ramp(1, 4, 4), ramp(1, 16, 16)], NoiseSpec::awgn(0.1, 0), 8).unwrap();
        assert_eq!(data.len(), 1);
        assert!(TrainData::synthetic(vec![ramp(1, 4, 4)], NoiseSpec::awgn(0.1, 0), 8).is_err());
    }

    #[test]
    fn paired_patches_align() {
        let c = ramp(1, 12, 12);
        let n = c.map(|v| v + 1000.0);
        let data = TrainData::paired(vec![(c, n)], 6).unwrap();
        let (a, b) = sample_batch(&data, 6, 3, Augment::ALL, &mut SeededStream::new(0, 0), 0).unwrap();
        assert_eq!(b, a.map(|v| v + 1000.0));
    }

    #[test]
    fn synthetic_corpus_in_range_and_varied() {
        let imgs = synthetic_images::<f32>(3, 32, 32, 3, 7);
        assert!(imgs.iter().all(|t| t.data().iter().all(|v| (0.0..=1.0).contains(v))));
        assert_ne!(imgs[0], imgs[1]);
        assert_eq!(imgs[0], synthetic_images::<f32>(1, 32, 32, 3, 7)[0]);
    }
}
