//! Planted-factor generator used as ground truth for every diagnostic.
//!
//! Rows are `x = L f + ε` with `f ~ N(0, I_m)` and `ε ~ N(0, σ² I_p)`, so the
//! population covariance is `L Lᵀ + σ² I`. Attributes are then mapped through
//! the affine `60 + 10·x`, and the synthetic overall rating is
//! `65 + 6·(w·f + τ e)`.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ingest::{AttributeMatrix, Schema};
use crate::linalg::cholesky;
use crate::matrix::{dot, Matrix};
use crate::seed;

pub const ATTRIBUTE_OFFSET: f64 = 60.0;
pub const ATTRIBUTE_SCALE: f64 = 10.0;
pub const OVERALL_OFFSET: f64 = 65.0;
pub const OVERALL_SCALE: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub n: usize,
    /// `p × m` true loadings.
    pub loadings: Matrix,
    pub noise_sd: f64,
    /// How the `m` factors combine into the overall rating.
    pub target_weights: Vec<f64>,
    pub target_noise_sd: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PlantedData {
    pub matrix: AttributeMatrix,
    /// `n × m` factor values.
    pub factors: Matrix,
    /// Raw `L f + ε` before the affine rescale.
    pub latent: Matrix,
}

pub fn attribute_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("attr{:02}", j + 1)).collect()
}

/// Block sizes proportional to `m, m−1, …, 1`, largest-remainder rounded.
pub fn block_sizes(p: usize, m: usize) -> Vec<usize> {
    let total: usize = (1..=m).sum();
    let raw: Vec<f64> = (0..m).map(|j| p as f64 * (m - j) as f64 / total as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    let short = p - sizes.iter().sum::<usize>();
    for &j in order.iter().take(short) {
        sizes[j] += 1;
    }
    sizes
}

impl PlantedSpec {
    /// Every attribute loads `loading` on a single factor.
    pub fn one_factor(n: usize, p: usize, loading: f64, noise_sd: f64, seed: u64) -> Self {
        Self {
            n,
            loadings: Matrix::from_vec(p, 1, vec![loading; p]),
            noise_sd,
            target_weights: vec![1.0],
            target_noise_sd: 0.1,
            seed,
        }
    }

    /// `m` disjoint blocks of decreasing size, each attribute loading
    /// `loading` on its block's factor. Equal communalities keep the
    /// correlation-scale factor subspace equal to `span(L)`.
    pub fn blocks(n: usize, p: usize, m: usize, loading: f64, noise_sd: f64, seed: u64) -> Self {
        let sizes = block_sizes(p, m);
        let mut loadings = Matrix::zeros(p, m);
        let mut row = 0;
        for (f, &size) in sizes.iter().enumerate() {
            for _ in 0..size {
                loadings[(row, f)] = loading;
                row += 1;
            }
        }
        Self {
            n,
            loadings,
            noise_sd,
            target_weights: vec![1.0; m],
            target_noise_sd: 0.1,
            seed,
        }
    }

    pub fn with_target_weights(mut self, w: Vec<f64>) -> Self {
        self.target_weights = w;
        self
    }

    pub fn p(&self) -> usize {
        self.loadings.rows()
    }

    pub fn m(&self) -> usize {
        self.loadings.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, m) = (self.p(), self.m());
        if m == 0 || m >= p {
            return Err(Error::invalid(format!("need 0 < m < p, got m = {m}, p = {p}")));
        }
        if !(self.noise_sd > 0.0) {
            return Err(Error::invalid("noise_sd must be positive"));
        }
        if self.target_weights.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.target_weights.len(),
            });
        }
        if self.n <= p {
            return Err(Error::TooFewRows { n: self.n, p });
        }
        cholesky(&self.loadings.gram())
            .map_err(|_| Error::invalid("planted loadings are linearly dependent"))?;
        Ok(())
    }

    /// `L Lᵀ + σ² I` in latent (pre-rescale) units.
    pub fn population_covariance(&self) -> Matrix {
        let mut c = self.loadings.matmul(&self.loadings.transpose());
        for i in 0..self.p() {
            c[(i, i)] += self.noise_sd * self.noise_sd;
        }
        c
    }

    pub fn generate(&self) -> Result<PlantedData> {
        self.validate()?;
        let (n, p, m) = (self.n, self.p(), self.m());
        let mut rng = seed::rng(self.seed);
        let mut factors = Matrix::zeros(n, m);
        let mut latent = Matrix::zeros(n, p);
        let mut values = Matrix::zeros(n, p);
        let mut overall = Vec::with_capacity(n);
        for i in 0..n {
            for f in 0..m {
                factors[(i, f)] = rng.sample(StandardNormal);
            }
            let fi = factors.row(i).to_vec();
            for j in 0..p {
                let eps: f64 = rng.sample(StandardNormal);
                let x = dot(self.loadings.row(j), &fi) + self.noise_sd * eps;
                latent[(i, j)] = x;
                values[(i, j)] = ATTRIBUTE_OFFSET + ATTRIBUTE_SCALE * x;
            }
            let e: f64 = rng.sample(StandardNormal);
            let y = dot(&self.target_weights, &fi) + self.target_noise_sd * e;
            overall.push(OVERALL_OFFSET + OVERALL_SCALE * y);
        }
        let ids = (0..n).map(|i| format!("p{i:06}")).collect();
        let matrix = AttributeMatrix::new(values, attribute_names(p), ids, overall)?;
        Ok(PlantedData {
            matrix,
            factors,
            latent,
        })
    }
}

/// `n × p` standard Gaussian matrix.
pub fn gaussian_matrix(n: usize, p: usize, seed: u64) -> Matrix {
    let mut rng = seed::rng(seed);
    Matrix::from_vec(n, p, (0..n * p).map(|_| rng.sample(StandardNormal)).collect())
}

/// Data whose sample correlation equals `target` up to rounding: centred,
/// exactly orthonormalised Gaussian columns mixed by the Cholesky factor.
pub fn exactly_correlated(n: usize, target: &Matrix, seed: u64) -> Result<Matrix> {
    let p = target.rows();
    if n <= p + 1 {
        return Err(Error::TooFewRows { n, p });
    }
    let g = gaussian_matrix(n, p, seed);
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| g.column(j)).collect();
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    for j in 0..p {
        // two passes of modified Gram-Schmidt against the constant and earlier columns
        for _ in 0..2 {
            let c = dot(&cols[j], &ones);
            for (v, o) in cols[j].iter_mut().zip(&ones) {
                *v -= c * o;
            }
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let c = dot(&rest[0], &done[k]);
                for (v, q) in rest[0].iter_mut().zip(&done[k]) {
                    *v -= c * q;
                }
            }
        }
        let nrm = dot(&cols[j], &cols[j]).sqrt();
        for v in &mut cols[j] {
            *v /= nrm;
        }
    }
    let root_n = (n as f64).sqrt();
    let z = Matrix::from_fn(n, p, |i, j| cols[j][i] * root_n);
    let l = cholesky(target)?;
    Ok(z.matmul(&l.transpose()))
}

/// Schema matching [`write_csv`] output.
pub fn csv_schema(p: usize) -> Schema {
    Schema {
        id_column: "player_id".into(),
        season_column: Some("season".into()),
        rating_column: "overall_rating".into(),
        attributes: attribute_names(p),
    }
}

/// Writes the matrix in the ingest CSV format. Values use Rust's shortest
/// round-trip float formatting, so reloading reproduces them exactly.
pub fn write_csv(matrix: &AttributeMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["player_id".to_string(), "season".into(), "overall_rating".into()];
    header.extend(matrix.attribute_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..matrix.n() {
        let mut rec = vec![matrix.player_ids[i].clone(), "synthetic".into(), matrix.overall[i].to_string()];
        rec.extend(matrix.values.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
