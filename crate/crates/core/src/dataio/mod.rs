//! Dataset ingestion and serialization: IDX image files, the raw tensor
//! container, CSV, and synthetic generators with known ground-truth latents.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::prior::normal_quantile;
use crate::tensorcore::{Activation, DecoderParams, OutputActivation, Tensor};

/// An in-memory dataset: `n x p` samples, optional integer labels, optional
/// image shape (height, width, channels), and a provenance note.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Tensor,
    pub labels: Option<Vec<i64>>,
    pub image_shape: Option<(usize, usize, usize)>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        samples: Tensor,
        labels: Option<Vec<i64>>,
        image_shape: Option<(usize, usize, usize)>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(Error::Input("dataset needs at least one sample".into()));
        }
        if let Some(l) = &labels {
            if l.len() != samples.rows() {
                return Err(Error::shape(
                    "Dataset",
                    format!("{} labels", samples.rows()),
                    format!("{}", l.len()),
                ));
            }
        }
        if let Some((h, w, c)) = image_shape {
            if h * w * c != samples.cols() {
                return Err(Error::shape(
                    "Dataset",
                    format!("{} pixels for shape ({h},{w},{c})", h * w * c),
                    format!("{} columns", samples.cols()),
                ));
            }
            if samples.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Domain(
                    "image datasets must lie within [0,1]".into(),
                ));
            }
        }
        Ok(Dataset {
            samples,
            labels,
            image_shape,
            provenance: provenance.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.samples.rows()
    }

    pub fn p(&self) -> usize {
        self.samples.cols()
    }
}

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Length(format!("IDX file truncated while reading {what}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Parses big-endian IDX image files (magic 0x00000803), scaling pixel bytes
/// by 1/255 into [0, 1]. An optional label file (magic 0x00000801) must list
/// exactly as many labels as there are images.
pub fn read_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(images_path)?);
    let magic = read_be_u32(&mut r, "image magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "bad IDX image magic {:02x?}, expected {:02x?}",
            magic.to_be_bytes(),
            IDX_IMAGE_MAGIC.to_be_bytes()
        )));
    }
    let count = read_be_u32(&mut r, "image count")? as usize;
    let rows = read_be_u32(&mut r, "row count")? as usize;
    let cols = read_be_u32(&mut r, "column count")? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    r.read_exact(&mut pixels).map_err(|_| {
        Error::Length(format!(
            "IDX image file shorter than header claims ({count} x {rows} x {cols})"
        ))
    })?;
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::Length(
            "IDX image file longer than header claims".into(),
        ));
    }
    let data: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let samples = Tensor::matrix(count, rows * cols, data)?;

    let labels = match labels_path {
        None => None,
        Some(path) => {
            let mut lr = BufReader::new(File::open(path)?);
            let magic = read_be_u32(&mut lr, "label magic")?;
            if magic != IDX_LABEL_MAGIC {
                return Err(Error::Format(format!(
                    "bad IDX label magic {:02x?}, expected {:02x?}",
                    magic.to_be_bytes(),
                    IDX_LABEL_MAGIC.to_be_bytes()
                )));
            }
            let label_count = read_be_u32(&mut lr, "label count")? as usize;
            if label_count != count {
                return Err(Error::shape(
                    "read_idx",
                    format!("{count} labels"),
                    format!("{label_count}"),
                ));
            }
            let mut raw = vec![0u8; label_count];
            lr.read_exact(&mut raw)
                .map_err(|_| Error::Length("IDX label file truncated".into()))?;
            Some(raw.into_iter().map(|b| b as i64).collect())
        }
    };

    Dataset::new(
        samples,
        labels,
        Some((rows, cols, 1)),
        format!("idx:{}", images_path.display()),
    )
}

/// Box-average downsampling by an integer factor; height and width must be
/// divisible by the factor.
pub fn downsample(ds: &Dataset, factor: usize) -> Result<Dataset> {
    if factor == 0 {
        return Err(Error::Input("downsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(ds.clone());
    }
    let (h, w, c) = ds.image_shape.ok_or_else(|| {
        Error::Input("downsample requires an image-shaped dataset".into())
    })?;
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::Input(format!(
            "image sides ({h}, {w}) not divisible by factor {factor}"
        )));
    }
    let (nh, nw) = (h / factor, w / factor);
    let area = (factor * factor) as f64;
    let n = ds.n();
    let mut out = vec![0.0; n * nh * nw * c];
    for i in 0..n {
        let src = ds.samples.row(i);
        let dst = &mut out[i * nh * nw * c..(i + 1) * nh * nw * c];
        for r in 0..nh {
            for col in 0..nw {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for dr in 0..factor {
                        for dc in 0..factor {
                            acc += src[((r * factor + dr) * w + col * factor + dc) * c + ch];
                        }
                    }
                    dst[(r * nw + col) * c + ch] = acc / area;
                }
            }
        }
    }
    Dataset::new(
        Tensor::matrix(n, nh * nw * c, out)?,
        ds.labels.clone(),
        Some((nh, nw, c)),
        format!("{}|downsample:{factor}", ds.provenance),
    )
}

/// Ground-truth generator family for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// X = Z A + sigma * eps with a seeded d x p matrix A.
    Linear,
    /// X = fixed random two-layer tanh net of Z, plus noise.
    MlpFixedSeed,
}

/// Recipe for a synthetic dataset with known latents.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub latent_dim: usize,
    pub ambient_dim: usize,
    pub n: usize,
    pub kind: SyntheticKind,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.ambient_dim == 0 || self.n == 0 {
            return Err(Error::Config(
                "synthetic dimensions and count must be positive".into(),
            ));
        }
        if self.latent_dim > self.ambient_dim {
            return Err(Error::Config(format!(
                "synthetic latent dim {} exceeds ambient dim {}",
                self.latent_dim, self.ambient_dim
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.gen::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Builds a synthetic dataset from uniform latents through a known generator;
/// returns the dataset and the true latent matrix.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Tensor)> {
    spec.validate()?;
    let (d, p, n) = (spec.latent_dim, spec.ambient_dim, spec.n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let latents: Vec<f64> = (0..n * d).map(|_| open_unit(&mut rng)).collect();
    let z = Tensor::matrix(n, d, latents)?;

    let mut samples = vec![0.0; n * p];
    match spec.kind {
        SyntheticKind::Linear => {
            let mut gen_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6c696e65);
            let a: Vec<f64> = (0..d * p)
                .map(|_| normal_quantile(open_unit(&mut gen_rng)))
                .collect::<Result<_>>()?;
            for i in 0..n {
                let zi = z.row(i);
                let row = &mut samples[i * p..(i + 1) * p];
                for (j, slot) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += zi[k] * a[k * p + j];
                    }
                    *slot = acc;
                }
            }
        }
        SyntheticKind::MlpFixedSeed => {
            let hidden = (2 * d).max(16);
            let net = DecoderParams::seeded(
                &[d, hidden, p],
                Activation::Tanh,
                OutputActivation::Identity,
                spec.seed ^ 0x6d6c70,
            )?;
            for i in 0..n {
                let y = net.forward(z.row(i))?;
                samples[i * p..(i + 1) * p].copy_from_slice(&y);
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6e6f6973);
        for v in samples.iter_mut() {
            *v += spec.noise_sigma * normal_quantile(open_unit(&mut noise_rng))?;
        }
    }
    let ds = Dataset::new(
        Tensor::matrix(n, p, samples)?,
        None,
        None,
        format!("synthetic:{:?}", spec.kind),
    )?;
    Ok((ds, z))
}

const CONTAINER_MAGIC: [u8; 4] = *b"NSQT";
const CONTAINER_VERSION: u32 = 1;

/// Writes a tensor to the binary container: magic `NSQT`, version u32, rank
/// u32, dims u32[], then the f64 payload, all little-endian.
pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CONTAINER_MAGIC)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
    for &dim in tensor.shape() {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    for v in tensor.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a tensor from the binary container; bit-exact inverse of
/// [`write_tensor`].
pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Length("container truncated while reading magic".into()))?;
    if magic != CONTAINER_MAGIC {
        return Err(Error::Format(format!(
            "bad container magic {:02x?}, expected {:02x?}",
            magic, CONTAINER_MAGIC
        )));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)
        .map_err(|_| Error::Length("container truncated while reading version".into()))?;
    let version = u32::from_le_bytes(buf4);
    if version != CONTAINER_VERSION {
        return Err(Error::Format(format!(
            "unsupported container version {version}"
        )));
    }
    r.read_exact(&mut buf4)
        .map_err(|_| Error::Length("container truncated while reading rank".into()))?;
    let rank = u32::from_le_bytes(buf4) as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut buf4)
            .map_err(|_| Error::Length("container truncated while reading dims".into()))?;
        shape.push(u32::from_le_bytes(buf4) as usize);
    }
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    let mut buf8 = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf8)
            .map_err(|_| Error::Length("container payload shorter than header claims".into()))?;
        data.push(f64::from_le_bytes(buf8));
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::Length(
            "container payload longer than header claims".into(),
        ));
    }
    Tensor::new(shape, data)
}

/// Writes a rank-2 tensor as CSV with the given header row. Floats use the
/// shortest round-trip representation, so equal tensors yield equal bytes.
pub fn write_csv(path: &Path, tensor: &Tensor, header: &[String]) -> Result<()> {
    if header.len() != tensor.cols() {
        return Err(Error::shape(
            "write_csv",
            format!("{} header fields", tensor.cols()),
            format!("{}", header.len()),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for i in 0..tensor.rows() {
        let row: Vec<String> = tensor.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV dataset: a header row then numeric rows. A column named
/// `label` becomes the dataset labels; all other columns are features.
pub fn read_csv_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Format(format!("csv open: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("csv header: {e}")))?
        .clone();
    let label_col = headers.iter().position(|h| h == "label");
    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(format!("csv row: {e}")))?;
        for (idx, field) in record.iter().enumerate() {
            if Some(idx) == label_col {
                labels.push(
                    field
                        .trim()
                        .parse::<i64>()
                        .map_err(|e| Error::Format(format!("csv label: {e}")))?,
                );
            } else {
                features.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("csv value: {e}")))?,
                );
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Length("csv dataset has no rows".into()));
    }
    let cols = features.len() / rows;
    Dataset::new(
        Tensor::matrix(rows, cols, features)?,
        label_col.map(|_| labels),
        None,
        format!("csv:{}", path.display()),
    )
}
