//! Image datasets: CIFAR-10 binary ingestion and a procedural fallback.
//!
//! The CIFAR-10 binary layout is a sequence of 3073-byte records: one label
//! byte followed by 1024 red, 1024 green and 1024 blue bytes (row-major).
//! [`load_cifar10`] reads the extracted `cifar-10-batches-bin/` directory, or
//! verifies and unpacks `cifar-10-binary.tar.gz` first.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use md5::{Digest, Md5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::latent::ImageTensor;
use crate::{Error, Result};

pub const DATA_ROOT_ENV: &str = "DRJSCC_DATA_ROOT";
pub const CIFAR10_ARCHIVE: &str = "cifar-10-binary.tar.gz";
pub const CIFAR10_ARCHIVE_MD5: &str = "c32a1d4ab5d03f1284b67883e8d87530";
pub const CIFAR10_DIR: &str = "cifar-10-batches-bin";
const RECORD: usize = 1 + 3 * 32 * 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn files(self) -> Vec<String> {
        match self {
            Split::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
            Split::Test => vec!["test_batch.bin".into()],
        }
    }
}

/// A labelled image collection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    images: Vec<ImageTensor>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: Vec<ImageTensor>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[ImageTensor] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> Option<&ImageTensor> {
        self.images.get(i)
    }

    /// First `n` images (all of them if `n` exceeds the size).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    fn extend(&mut self, other: Dataset) {
        self.images.extend(other.images);
        self.labels.extend(other.labels);
    }
}

/// Parses CIFAR-10 binary records.
pub fn parse_cifar_records(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() % RECORD != 0 {
        return Err(Error::Dataset(format!(
            "{} bytes is not a whole number of {RECORD}-byte records",
            bytes.len()
        )));
    }
    let mut images = Vec::with_capacity(bytes.len() / RECORD);
    let mut labels = Vec::with_capacity(bytes.len() / RECORD);
    for rec in bytes.chunks_exact(RECORD) {
        labels.push(rec[0]);
        images.push(ImageTensor::from_u8(3, 32, 32, &rec[1..])?);
    }
    Dataset::new(images, labels)
}

pub fn read_cifar_batch(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar_records(&bytes)
}

/// Writes images in CIFAR-10 binary record format.
pub fn write_cifar_batch(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = Vec::with_capacity(data.len() * RECORD);
    for (img, label) in data.images.iter().zip(&data.labels) {
        if img.shape() != (3, 32, 32) {
            return Err(Error::Dataset(format!("CIFAR records are 3x32x32, got {:?}", img.shape())));
        }
        out.push(*label);
        out.extend(img.to_u8());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn md5_hex(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Md5::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Verifies the archive checksum and unpacks it under `root`.
pub fn unpack_cifar10_archive(archive: &Path, root: &Path) -> Result<PathBuf> {
    let sum = md5_hex(archive)?;
    if sum != CIFAR10_ARCHIVE_MD5 {
        return Err(Error::Dataset(format!(
            "{} has md5 {sum}, expected {CIFAR10_ARCHIVE_MD5}; the download is corrupt or not the binary CIFAR-10 archive",
            archive.display()
        )));
    }
    let f = fs::File::open(archive).map_err(|e| Error::io(archive, e))?;
    tar::Archive::new(flate2::read::GzDecoder::new(f))
        .unpack(root)
        .map_err(|e| Error::io(root, e))?;
    Ok(root.join(CIFAR10_DIR))
}

/// Dataset root from the environment, if set.
pub fn data_root_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)
}

/// Loads a CIFAR-10 split from `root`, unpacking the archive on first use.
pub fn load_cifar10(root: &Path, split: Split) -> Result<Dataset> {
    let dir = root.join(CIFAR10_DIR);
    if !dir.is_dir() {
        let archive = root.join(CIFAR10_ARCHIVE);
        if !archive.is_file() {
            return Err(Error::Dataset(format!(
                "no CIFAR-10 data under {}: place {CIFAR10_ARCHIVE} (md5 {CIFAR10_ARCHIVE_MD5}) or the extracted \
                 {CIFAR10_DIR}/ directory there, point {DATA_ROOT_ENV} at it, or select the synthetic source",
                root.display()
            )));
        }
        unpack_cifar10_archive(&archive, root)?;
    }
    let mut out = Dataset::default();
    for file in split.files() {
        out.extend(read_cifar_batch(&dir.join(file))?);
    }
    Ok(out)
}

/// Reads an 8-bit RGB image file.
pub fn load_png(path: &Path) -> Result<ImageTensor> {
    let img = image::open(path)
        .map_err(|e| Error::Dataset(format!("cannot read image {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut planes = vec![0u8; 3 * w * h];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            planes[c * w * h + y as usize * w + x as usize] = px[c];
        }
    }
    ImageTensor::from_u8(3, h, w, &planes)
}

/// Writes a 3-channel image as an 8-bit PNG.
pub fn save_png(image: &ImageTensor, path: &Path) -> Result<()> {
    let (c, h, w) = image.shape();
    if c != 3 {
        return Err(Error::Shape(format!("PNG export needs 3 channels, got {c}")));
    }
    let planes = image.to_u8();
    let img = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let at = |ch: usize| planes[ch * w * h + y as usize * w + x as usize];
        image::Rgb([at(0), at(1), at(2)])
    });
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Procedural 3×32×32 images: a two-colour gradient background, a few soft
/// shapes and a faint texture. Labels are the number of shapes.
pub fn synthetic(count: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let (img, label) = synthetic_image(&mut rng);
        images.push(img);
        labels.push(label);
    }
    Dataset { images, labels }
}

fn synthetic_image(rng: &mut ChaCha8Rng) -> (ImageTensor, u8) {
    const N: usize = 32;
    let color = |rng: &mut ChaCha8Rng| -> [f32; 3] { [rng.random(), rng.random(), rng.random()] };
    let (c0, c1) = (color(rng), color(rng));
    let angle: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut px = vec![[0f32; 3]; N * N];
    for y in 0..N {
        for x in 0..N {
            let t = ((x as f32 / 31.0 - 0.5) * dx + (y as f32 / 31.0 - 0.5) * dy + 0.5).clamp(0.0, 1.0);
            for ch in 0..3 {
                px[y * N + x][ch] = c0[ch] * (1.0 - t) + c1[ch] * t;
            }
        }
    }
    let shapes = rng.random_range(1..=4u8);
    for _ in 0..shapes {
        let c = color(rng);
        let (cx, cy) = (rng.random_range(0.0..32.0f32), rng.random_range(0.0..32.0f32));
        let (rx, ry) = (rng.random_range(3.0..11.0f32), rng.random_range(3.0..11.0f32));
        let square = rng.random_bool(0.5);
        for y in 0..N {
            for x in 0..N {
                let (u, v) = ((x as f32 - cx) / rx, (y as f32 - cy) / ry);
                let r = if square { u.abs().max(v.abs()) } else { (u * u + v * v).sqrt() };
                let alpha = ((1.0 - r) * 4.0).clamp(0.0, 1.0);
                for ch in 0..3 {
                    let p = &mut px[y * N + x][ch];
                    *p = *p * (1.0 - alpha) + c[ch] * alpha;
                }
            }
        }
    }
    let (fx, fy) = (rng.random_range(0.2..1.2f32), rng.random_range(0.2..1.2f32));
    let amp = rng.random_range(0.0..0.06f32);
    let mut pixels = vec![0f32; 3 * N * N];
    for y in 0..N {
        for x in 0..N {
            let tex = amp * ((x as f32 * fx).sin() * (y as f32 * fy).cos());
            for ch in 0..3 {
                let grain = rng.random_range(-0.02..0.02f32);
                pixels[ch * N * N + y * N + x] = (px[y * N + x][ch] + tex + grain).clamp(0.0, 1.0);
            }
        }
    }
    let img = ImageTensor::new(3, N, N, pixels).expect("pixels are clamped to [0, 1]");
    (img, shapes)
}
