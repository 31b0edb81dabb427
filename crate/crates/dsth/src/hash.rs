//! Out-of-sample extension: a ridge-regression projection from feature space
//! to code space, and sign encoding of arbitrary vectors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::matrix::Matrix;
use crate::optim::BinaryCodes;
use crate::scalar::{real, Real};

/// Linear hash functions: `F(v) = (sign(Hᵀv) + 1) / 2`.
#[derive(Debug, Clone)]
pub struct HashModel<T> {
    /// `d_x × L`.
    pub projection: Matrix<T>,
    pub code_length: usize,
    /// Ridge weight used at training.
    pub eta: T,
}

/// Default ridge weight.
pub const DEFAULT_ETA: f64 = 1e2;

/// Solves `H = (X·Xᵀ + ηI)⁻¹ · X · Zᵀ`, the minimizer of
/// `‖Z − Hᵀ·X‖²_F + η‖H‖²_F` over the training pair.
pub fn learn_projection<T: Real>(x: &Matrix<T>, z: &Matrix<T>, eta: T) -> Result<HashModel<T>> {
    if x.cols() != z.cols() {
        return Err(Error::Dimension(format!(
            "features cover {} samples, codes {}",
            x.cols(),
            z.cols()
        )));
    }
    if !(eta > T::zero()) {
        return Err(Error::Config("eta must be > 0".into()));
    }
    let mut gram = x.mul_transpose(x);
    for i in 0..gram.rows() {
        let v = gram.at(i, i) + eta;
        gram.set(i, i, v);
    }
    let rhs = x.mul_transpose(z); // X·Zᵀ
    let projection = solve_spd(&gram, &rhs)?;
    Ok(HashModel {
        projection,
        code_length: z.rows(),
        eta,
    })
}

impl<T: Real> HashModel<T> {
    /// Encodes one feature vector to `L` bits with the `sign(0) = +1`
    /// convention.
    pub fn encode(&self, v: &[T]) -> Result<Vec<u8>> {
        if v.len() != self.projection.rows() {
            return Err(Error::Dimension(format!(
                "vector has {} entries, projection expects {}",
                v.len(),
                self.projection.rows()
            )));
        }
        Ok((0..self.code_length)
            .map(|l| {
                let dot = crate::matrix::dot(self.projection.col(l), v);
                if dot >= T::zero() {
                    1
                } else {
                    0
                }
            })
            .collect())
    }

    /// Encodes every column of a feature matrix.
    pub fn encode_matrix(&self, m: &Matrix<T>) -> Result<BinaryCodes> {
        let mut signs = self.projection.transpose_mul(m); // Hᵀ·M, L×N
        for v in signs.data_mut() {
            *v = if *v >= T::zero() { T::one() } else { -T::one() };
        }
        Ok(BinaryCodes::from_signs(&signs))
    }

    /// Persists the projection as `DMAT` plus a JSON sidecar.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        crate::io::write_matrix(&self.projection, dir.join("projection.dmat"))?;
        let sidecar = HashSidecar {
            code_length: self.code_length,
            eta: self.eta.to_f64_lossy(),
        };
        fs::write(
            dir.join("hash_meta.json"),
            serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let projection: Matrix<T> = crate::io::read_matrix(dir.join("projection.dmat"))?;
        let sidecar: HashSidecar =
            serde_json::from_str(&fs::read_to_string(dir.join("hash_meta.json"))?)
                .map_err(|e| Error::Config(format!("hash sidecar: {e}")))?;
        if projection.cols() != sidecar.code_length {
            return Err(Error::Dimension(
                "projection width disagrees with sidecar code length".into(),
            ));
        }
        Ok(HashModel {
            projection,
            code_length: sidecar.code_length,
            eta: real::<T>(sidecar.eta),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HashSidecar {
    code_length: usize,
    eta: f64,
}
