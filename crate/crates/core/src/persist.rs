//! Versioned binary containers for trained models and embeddings.
//!
//! Every value is little-endian; the byte after the magic records that and
//! loaders reject anything else. Layouts are listed in `docs/FORMAT.md`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::alp::{AlpModel, Variant};
use crate::diffusion::{DiffusionEmbedding, DmConfig};
use crate::error::{Error, Result};
use crate::kernel::KernelMode;

pub const MODEL_MAGIC: [u8; 4] = *b"ALPM";
pub const EMBEDDING_MAGIC: [u8; 4] = *b"DMEM";
pub const LITTLE_ENDIAN_TAG: u8 = 0x01;
pub const FORMAT_VERSION: u16 = 1;

// Guards allocations when reading corrupt headers.
const MAX_ELEMENTS: u64 = 1 << 34;

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b)?;
        Ok(())
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u16(&mut self, v: u16) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn usize(&mut self, v: usize) -> Result<()> {
        self.u64(v as u64)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64s<'a>(&mut self, it: impl IntoIterator<Item = &'a f64>) -> Result<()> {
        for v in it {
            self.f64(*v)?;
        }
        Ok(())
    }
    fn header(&mut self, magic: [u8; 4]) -> Result<()> {
        self.bytes(&magic)?;
        self.u8(LITTLE_ENDIAN_TAG)?;
        self.u16(FORMAT_VERSION)
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn count(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > MAX_ELEMENTS {
            return Err(Error::Format(format!("implausible length {v}")));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        (0..len).map(|_| self.f64()).collect()
    }
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let len = rows
            .checked_mul(cols)
            .filter(|&l| (l as u64) <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Format("matrix too large".into()))?;
        let data = self.f64s(len)?;
        Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
    }
    fn header(&mut self, magic: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.array()?;
        if found != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&found),
                String::from_utf8_lossy(&magic)
            )));
        }
        let tag = self.u8()?;
        if tag != LITTLE_ENDIAN_TAG {
            return Err(Error::Format(format!("unsupported endianness tag {tag:#04x}")));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        Ok(())
    }
}

pub fn write_model<W: Write>(model: &AlpModel, w: W) -> Result<()> {
    let mut out = Out(w);
    out.header(MODEL_MAGIC)?;
    out.u8(model.variant().code())?;
    out.u8(model.kernel_mode().code())?;
    let (n, d) = model.train_points().dim();
    out.usize(n)?;
    out.usize(d)?;
    out.usize(model.n_outputs())?;
    out.f64(model.sigma0())?;
    out.f64(model.mu())?;
    out.usize(model.residuals().len())?;
    for &k in model.optimal_iter() {
        out.usize(k)?;
    }
    out.usize(model.error_curve().len())?;
    for curve in model.error_curve() {
        out.usize(curve.len())?;
        out.f64s(curve)?;
    }
    out.f64s(model.train_points().iter())?;
    for r in model.residuals() {
        out.f64s(r.iter())?;
    }
    out.0.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<AlpModel> {
    let mut inp = In(r);
    inp.header(MODEL_MAGIC)?;
    let variant = Variant::from_code(inp.u8()?).ok_or_else(|| Error::Format("unknown variant code".into()))?;
    let mode = KernelMode::from_code(inp.u8()?).ok_or_else(|| Error::Format("unknown kernel mode code".into()))?;
    let n = inp.count()?;
    let d = inp.count()?;
    let m = inp.count()?;
    let sigma0 = inp.f64()?;
    let mu = inp.f64()?;
    let levels = inp.count()?;
    let optimal_iter = (0..m).map(|_| inp.count()).collect::<Result<Vec<_>>>()?;
    let curves_n = inp.count()?;
    let mut curves = Vec::with_capacity(curves_n.min(m));
    for _ in 0..curves_n {
        let len = inp.count()?;
        curves.push(inp.f64s(len)?);
    }
    let train = inp.matrix(n, d)?;
    let residuals = (0..levels).map(|_| inp.matrix(n, m)).collect::<Result<Vec<_>>>()?;
    AlpModel::from_parts(train, sigma0, mu, mode, variant, residuals, curves, optimal_iter)
}

pub fn save_model(model: &AlpModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AlpModel> {
    read_model(BufReader::new(File::open(path)?))
}

pub fn write_embedding<W: Write>(emb: &DiffusionEmbedding, w: W) -> Result<()> {
    let mut out = Out(w);
    out.header(EMBEDDING_MAGIC)?;
    let (n, d) = emb.train_points().dim();
    out.usize(n)?;
    out.usize(d)?;
    out.usize(emb.dim())?;
    let cfg = emb.config();
    out.f64(emb.sigma())?;
    out.f64(cfg.sigma_percentile)?;
    out.f64(cfg.alpha)?;
    out.u32(cfg.t)?;
    out.f64(cfg.delta)?;
    out.f64s(emb.eigenvalues().iter())?;
    out.f64s(emb.eigenvectors().iter())?;
    out.f64s(emb.degrees().iter())?;
    out.f64s(emb.degrees_alpha().iter())?;
    out.f64s(emb.train_points().iter())?;
    out.0.flush()?;
    Ok(())
}

pub fn read_embedding<R: Read>(r: R) -> Result<DiffusionEmbedding> {
    let mut inp = In(r);
    inp.header(EMBEDDING_MAGIC)?;
    let n = inp.count()?;
    let d = inp.count()?;
    let dim = inp.count()?;
    let config = DmConfig {
        sigma: Some(inp.f64()?),
        sigma_percentile: inp.f64()?,
        alpha: inp.f64()?,
        t: inp.u32()?,
        delta: inp.f64()?,
    };
    config.validate()?;
    let eigenvalues = Array1::from(inp.f64s(n)?);
    let eigenvectors = inp.matrix(n, n)?;
    let degrees = Array1::from(inp.f64s(n)?);
    let degrees_alpha = Array1::from(inp.f64s(n)?);
    let train = inp.matrix(n, d)?;
    DiffusionEmbedding::from_parts(eigenvalues, eigenvectors, dim, degrees, degrees_alpha, config, train)
}

pub fn save_embedding(emb: &DiffusionEmbedding, path: impl AsRef<Path>) -> Result<()> {
    write_embedding(emb, BufWriter::new(File::create(path)?))
}

pub fn load_embedding(path: impl AsRef<Path>) -> Result<DiffusionEmbedding> {
    read_embedding(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alp::{alp_predict, alp_train, AlpConfig};
    use crate::diffusion::dm_fit;
    use ndarray::array;

    fn small_model() -> AlpModel {
        let x = Array2::from_shape_fn((25, 2), |(i, j)| (i as f64 * 0.37 + j as f64).sin() * 3.0);
        let f = Array2::from_shape_fn((25, 2), |(i, j)| (i as f64 * 0.2).cos() + j as f64);
        alp_train(x.view(), f.view(), &AlpConfig::default()).unwrap().0
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let model = small_model();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back, model);
        let q = array![[0.1, 0.2], [-1.0, 2.5]];
        let a = alp_predict(&model, q.view()).unwrap();
        let b = alp_predict(&back, q.view()).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_model(&small_model(), &mut buf).unwrap();
        assert_eq!(&buf[..4], b"ALPM");
        assert_eq!(buf[4], LITTLE_ENDIAN_TAG);
        assert_eq!(u16::from_le_bytes([buf[5], buf[6]]), FORMAT_VERSION);
        assert_eq!(u64::from_le_bytes(buf[9..17].try_into().unwrap()), 25);
    }

    #[test]
    fn rejects_unknown_version_and_magic() {
        let mut buf = Vec::new();
        write_model(&small_model(), &mut buf).unwrap();
        let mut bumped = buf.clone();
        bumped[5] = 2;
        assert!(matches!(
            read_model(bumped.as_slice()),
            Err(Error::UnsupportedVersion { found: 2, supported: 1 })
        ));
        let mut be = buf.clone();
        be[4] = 0x02;
        assert!(matches!(read_model(be.as_slice()), Err(Error::Format(_))));
        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert!(matches!(read_model(wrong.as_slice()), Err(Error::Format(_))));
        assert!(read_model(&buf[..buf.len() - 3]).is_err());
        assert!(read_embedding(buf.as_slice()).is_err());
    }

    #[test]
    fn embedding_round_trip() {
        let x = Array2::from_shape_fn((12, 3), |(i, j)| ((i * 3 + j) as f64 * 0.71).sin());
        let emb = dm_fit(x.view(), &DmConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_embedding(&emb, &mut buf).unwrap();
        let back = read_embedding(buf.as_slice()).unwrap();
        assert_eq!(back, emb);
    }
}
