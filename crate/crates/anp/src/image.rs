//! 2D image regression: IDX dataset ingestion, a seeded synthetic-shapes
//! generator, pixel <-> function-space conversion, coordinate grids, and
//! pixel-episode sampling.
//!
//! Coordinate convention: the first x component is the row, the second the
//! column, each rescaled to [-1, 1] endpoint-inclusive:
//! `x = (2 r / (H-1) - 1, 2 c / (W-1) - 1)`. Intensities map to
//! `y = I / 255 - 0.5`. Degenerate 1-wide axes map to -1.

use std::io::{Read as _, Write as _};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::model::Episode;
use crate::rng::Stream;
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

/// A stack of same-sized 8-bit grayscale images.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageDataset {
    pub height: usize,
    pub width: usize,
    /// count * height * width intensities, image-major, row-major within
    /// each image.
    pub pixels: Vec<u8>,
}

impl ImageDataset {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.height * self.width)
    }

    pub fn pixel(&self, image: usize, row: usize, col: usize) -> u8 {
        self.pixels[(image * self.height + row) * self.width + col]
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let size = self.height * self.width;
        &self.pixels[index * size..(index + 1) * size]
    }
}

/// Episode-sampling configuration for images:
/// n ~ U[3, 200], m ~ n + U[0, 200 - n].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelEpisodeSpec {
    pub n_min: usize,
    pub n_max: usize,
    pub max_points: usize,
}

impl Default for PixelEpisodeSpec {
    fn default() -> Self {
        PixelEpisodeSpec {
            n_min: 3,
            n_max: 200,
            max_points: 200,
        }
    }
}

/// Parse an IDX image file (big-endian magic 0x00000803, dims
/// [count, rows, cols], then raw intensities).
pub fn load_idx(path: impl AsRef<Path>) -> Result<ImageDataset> {
    let path = path.as_ref();
    let ctx = || format!("reading {}", path.display());
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(ctx(), e))?,
    );
    let truncated = |offset: u64| Error::IdxTruncated {
        path: path.to_path_buf(),
        offset,
    };
    let magic = file.read_u32::<BigEndian>().map_err(|_| truncated(0))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxMagic {
            path: path.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = file.read_u32::<BigEndian>().map_err(|_| truncated(4))? as usize;
    let height = file.read_u32::<BigEndian>().map_err(|_| truncated(8))? as usize;
    let width = file.read_u32::<BigEndian>().map_err(|_| truncated(12))? as usize;
    let expected = count * height * width;
    let mut pixels = vec![0u8; expected];
    let mut filled = 0;
    while filled < expected {
        let read = file
            .read(&mut pixels[filled..])
            .map_err(|e| Error::io(ctx(), e))?;
        if read == 0 {
            return Err(truncated(16 + filled as u64));
        }
        filled += read;
    }
    Ok(ImageDataset {
        height,
        width,
        pixels,
    })
}

/// Write a dataset in the same IDX format `load_idx` reads.
pub fn write_idx(path: impl AsRef<Path>, dataset: &ImageDataset) -> Result<()> {
    let path = path.as_ref();
    let ctx = || format!("writing {}", path.display());
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?,
    );
    let io = |e| Error::io(ctx(), e);
    file.write_u32::<BigEndian>(IDX_IMAGES_MAGIC).map_err(io)?;
    file.write_u32::<BigEndian>(dataset.count() as u32).map_err(io)?;
    file.write_u32::<BigEndian>(dataset.height as u32).map_err(io)?;
    file.write_u32::<BigEndian>(dataset.width as u32).map_err(io)?;
    file.write_all(&dataset.pixels).map_err(io)?;
    file.flush().map_err(io)
}

/// Seeded 8x8 grayscale dataset of axis-aligned rectangles and circles on
/// a dark background; a zero-download stand-in for a faces dataset.
pub fn synthetic_shapes(count: usize, seed: u64) -> ImageDataset {
    let (h, w) = (8usize, 8usize);
    let mut rng = Stream::new(seed);
    let mut pixels = Vec::with_capacity(count * h * w);
    for _ in 0..count {
        let background = rng.uniform_int(0, 60) as u8;
        let foreground = rng.uniform_int(140, 255) as u8;
        let mut img = vec![background; h * w];
        if rng.uniform(0.0, 1.0) < 0.5 {
            // rectangle
            let r0 = rng.uniform_int(0, h - 2);
            let r1 = rng.uniform_int(r0 + 1, h - 1);
            let c0 = rng.uniform_int(0, w - 2);
            let c1 = rng.uniform_int(c0 + 1, w - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    img[r * w + c] = foreground;
                }
            }
        } else {
            // circle
            let cr = rng.uniform(1.5, 6.5);
            let cc = rng.uniform(1.5, 6.5);
            let radius = rng.uniform(1.0, 3.0);
            for r in 0..h {
                for c in 0..w {
                    let dr = r as f64 - cr;
                    let dc = c as f64 - cc;
                    if dr * dr + dc * dc <= radius * radius {
                        img[r * w + c] = foreground;
                    }
                }
            }
        }
        pixels.extend_from_slice(&img);
    }
    ImageDataset {
        height: h,
        width: w,
        pixels,
    }
}

fn axis_coord(index: usize, size: usize) -> f64 {
    if size <= 1 {
        -1.0
    } else {
        2.0 * index as f64 / (size - 1) as f64 - 1.0
    }
}

/// Map a pixel intensity to function space.
pub fn intensity_to_y(intensity: u8) -> f64 {
    intensity as f64 / 255.0 - 0.5
}

/// Inverse of [`intensity_to_y`]; exact for values produced by it.
pub fn y_to_intensity(y: f64) -> u8 {
    ((y + 0.5) * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Convert the given pixels of one image to regression pairs.
/// `indices` are flat row-major pixel indices within the image.
pub fn image_to_regression(
    dataset: &ImageDataset,
    image: usize,
    indices: &[usize],
) -> Result<(Tensor, Tensor)> {
    let (h, w) = (dataset.height, dataset.width);
    for &p in indices {
        if p >= h * w {
            return Err(Error::Config(format!(
                "pixel index {p} out of range for a {h}x{w} image"
            )));
        }
    }
    let x = Tensor::from_fn(indices.len(), 2, |i, j| {
        let (r, c) = (indices[i] / w, indices[i] % w);
        if j == 0 {
            axis_coord(r, h)
        } else {
            axis_coord(c, w)
        }
    });
    let y = Tensor::from_fn(indices.len(), 1, |i, _| {
        intensity_to_y(dataset.pixels[image * h * w + indices[i]])
    });
    Ok((x, y))
}

/// Full grid of rescaled coordinates in row-major order; equals the
/// x-output of [`image_to_regression`] on the full index set.
pub fn make_grid(height: usize, width: usize) -> Tensor {
    assert!(height >= 1 && width >= 1, "make_grid: empty grid");
    Tensor::from_fn(height * width, 2, |i, j| {
        if j == 0 {
            axis_coord(i / width, height)
        } else {
            axis_coord(i % width, width)
        }
    })
}

/// Sample a training episode from a random image: m distinct pixels as
/// targets, the first n of the draw as contexts.
pub fn sample_pixel_episode(
    dataset: &ImageDataset,
    spec: &PixelEpisodeSpec,
    rng: &mut Stream,
) -> Result<Episode> {
    let pixels = dataset.height * dataset.width;
    if spec.max_points > pixels {
        return Err(Error::SpecExceedsPixels {
            requested: spec.max_points,
            available: pixels,
        });
    }
    let image = rng.uniform_int(0, dataset.count() - 1);
    let n = rng.uniform_int(spec.n_min, spec.n_max);
    let m = n + rng.uniform_int(0, spec.max_points - n);
    let indices = rng.sample_indices(pixels, m);
    let (x_t, y_t) = image_to_regression(dataset, image, &indices)?;
    let (x_c, y_c) = image_to_regression(dataset, image, &indices[..n])?;
    Ok(Episode {
        x_c,
        y_c,
        x_t,
        y_t,
        context_indices: (0..n).collect(),
    })
}

/// Contexts = all pixels in the top half (row < H/2), targets = the full
/// grid; the image-completion evaluation episode.
pub fn top_half_episode(dataset: &ImageDataset, image: usize) -> Result<Episode> {
    let (h, w) = (dataset.height, dataset.width);
    let top: Vec<usize> = (0..(h / 2) * w).collect();
    let all: Vec<usize> = (0..h * w).collect();
    let (x_c, y_c) = image_to_regression(dataset, image, &top)?;
    let (x_t, y_t) = image_to_regression(dataset, image, &all)?;
    Ok(Episode {
        x_c,
        y_c,
        x_t,
        y_t,
        context_indices: top,
    })
}
