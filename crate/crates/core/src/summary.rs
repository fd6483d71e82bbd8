//! Feature-moment summaries: the federated proxy for raw data.
//!
//! Clients compute raw (uncentered) first and second moments of their
//! embedded samples; the server sums them and performs global centering when
//! extracting covariance blocks. Keeping the uploaded moments uncentered is
//! what makes the aggregation exactly additive: centering needs the global
//! mean, which the summed first moments provide.

use crate::features::FeatureMaps;
use crate::{Error, Result};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::io::{Read, Write};

/// Raw-data moments of one continuous column, for bandwidth estimation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalarMoments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

/// One client's contribution: sample count, feature moment sums, scalar
/// moments, and the per-domain sample counts seen in its surrogate column.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMoments {
    pub n_k: usize,
    pub d_prime: usize,
    pub h: usize,
    /// Σ_t φ_a(x_t), one row per variable.
    pub s1: DMatrix<f64>,
    /// Σ_t φ_a(x_t) φ_b(x_t)ᵀ, indexed a·d′+b.
    pub s2: Vec<DMatrix<f64>>,
    /// Per continuous variable; `None` for the surrogate.
    pub scalars: Vec<Option<ScalarMoments>>,
    /// Surrogate value → number of samples carrying it.
    pub domain_counts: BTreeMap<usize, usize>,
}

impl LocalMoments {
    /// Sort key for deterministic aggregation order.
    fn client_key(&self) -> usize {
        self.domain_counts.keys().next().copied().unwrap_or(0)
    }
}

/// Aggregated moments plus total and per-domain sample counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSummary {
    pub n: usize,
    pub d_prime: usize,
    pub h: usize,
    pub m1: DMatrix<f64>,
    pub m2: Vec<DMatrix<f64>>,
    pub domain_counts: BTreeMap<usize, usize>,
}

/// Appends a constant surrogate column holding `domain` to observed data.
pub fn with_domain_column(observed: &DMatrix<f64>, domain: usize) -> DMatrix<f64> {
    let (n, d) = observed.shape();
    let mut full = DMatrix::zeros(n, d + 1);
    full.view_mut((0, 0), (n, d)).copy_from(observed);
    for t in 0..n {
        full[(t, d)] = domain as f64;
    }
    full
}

/// Computes one client's moments from its full sample matrix (surrogate
/// column last, holding 1-based domain indices).
pub fn compute_local_moments(data: &DMatrix<f64>, maps: &FeatureMaps) -> Result<LocalMoments> {
    let (n_k, d_prime) = data.shape();
    if n_k == 0 {
        return Err(Error::Input("client dataset is empty".into()));
    }
    if d_prime != maps.d_prime() {
        return Err(Error::ShapeMismatch(format!(
            "data has {d_prime} columns, feature maps cover {}",
            maps.d_prime()
        )));
    }
    let h = maps.h;
    for t in 0..n_k {
        for j in 0..d_prime {
            if !data[(t, j)].is_finite() {
                return Err(Error::Input(format!(
                    "non-finite entry at row {t}, column {j}"
                )));
            }
        }
    }

    let mut s1 = DMatrix::zeros(d_prime, h);
    let mut upper: Vec<DMatrix<f64>> = (0..d_prime * d_prime)
        .map(|_| DMatrix::zeros(h, h))
        .collect();
    let mut phi = vec![0.0; d_prime * h];
    let mut domain_counts: BTreeMap<usize, usize> = BTreeMap::new();

    for t in 0..n_k {
        for a in 0..d_prime {
            let v = data[(t, a)];
            maps.embed_into(a, v, &mut phi[a * h..(a + 1) * h])
                .map_err(|e| Error::Input(format!("row {t}, column {a}: {e}")))?;
        }
        *domain_counts
            .entry(data[(t, d_prime - 1)] as usize)
            .or_insert(0) += 1;
        for a in 0..d_prime {
            let pa = &phi[a * h..(a + 1) * h];
            for i in 0..h {
                s1[(a, i)] += pa[i];
            }
            for b in a..d_prime {
                let pb = &phi[b * h..(b + 1) * h];
                let block = &mut upper[a * d_prime + b];
                for i in 0..h {
                    let f = pa[i];
                    for j in 0..h {
                        block[(i, j)] += f * pb[j];
                    }
                }
            }
        }
    }
    // lower-triangle blocks are exact transposes of the upper ones
    for a in 0..d_prime {
        for b in 0..a {
            upper[a * d_prime + b] = upper[b * d_prime + a].transpose();
        }
    }

    let scalars = (0..d_prime)
        .map(|j| {
            if j + 1 == d_prime {
                None
            } else {
                let col = data.column(j);
                Some(ScalarMoments {
                    count: n_k as u64,
                    sum: col.iter().sum(),
                    sum_sq: col.iter().map(|v| v * v).sum(),
                })
            }
        })
        .collect();

    Ok(LocalMoments {
        n_k,
        d_prime,
        h,
        s1,
        s2: upper,
        scalars,
        domain_counts,
    })
}

/// Sums client moments in ascending client order.
pub fn aggregate(parts: &[LocalMoments]) -> Result<GlobalSummary> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Input("no client moments to aggregate".into()))?;
    let (d_prime, h) = (first.d_prime, first.h);
    for (idx, p) in parts.iter().enumerate() {
        if p.d_prime != d_prime || p.h != h {
            return Err(Error::ShapeMismatch(format!(
                "client part {idx} has shape (d'={}, h={}), expected (d'={d_prime}, h={h})",
                p.d_prime, p.h
            )));
        }
    }
    let mut order: Vec<&LocalMoments> = parts.iter().collect();
    order.sort_by_key(|p| p.client_key());
    if parts.len() > 1 {
        let mut seen = BTreeMap::new();
        for p in &order {
            for k in p.domain_counts.keys() {
                if seen.insert(*k, ()).is_some() {
                    return Err(Error::Input(format!(
                        "domain index {k} appears in more than one client part"
                    )));
                }
            }
        }
    }

    let mut n = 0usize;
    let mut m1 = DMatrix::zeros(d_prime, h);
    let mut m2: Vec<DMatrix<f64>> = (0..d_prime * d_prime)
        .map(|_| DMatrix::zeros(h, h))
        .collect();
    let mut domain_counts = BTreeMap::new();
    for p in order {
        n += p.n_k;
        m1 += &p.s1;
        for (acc, blk) in m2.iter_mut().zip(&p.s2) {
            *acc += blk;
        }
        for (&k, &c) in &p.domain_counts {
            *domain_counts.entry(k).or_insert(0) += c;
        }
    }
    Ok(GlobalSummary {
        n,
        d_prime,
        h,
        m1,
        m2,
        domain_counts,
    })
}

/// Combines per-client scalar moments into global bandwidths
/// `scale · std(variable)`, with unit fallback for constant columns.
pub fn global_bandwidths(parts: &[&[Option<ScalarMoments>]], scale: f64) -> Result<Vec<f64>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Input("no scalar moments".into()))?;
    let width = first.len();
    let mut out = Vec::with_capacity(width);
    for j in 0..width {
        let mut count = 0u64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut any = false;
        for p in parts {
            if p.len() != width {
                return Err(Error::ShapeMismatch(
                    "clients disagree on variable count".into(),
                ));
            }
            if let Some(m) = &p[j] {
                any = true;
                count += m.count;
                sum += m.sum;
                sum_sq += m.sum_sq;
            }
        }
        if !any || count == 0 {
            out.push(f64::NAN); // discrete slot, never used as a bandwidth
            continue;
        }
        let nf = count as f64;
        let var = (sum_sq - sum * sum / nf) / nf;
        let sd = if var > 0.0 { var.sqrt() } else { 0.0 };
        out.push(if sd > 0.0 { scale * sd } else { 1.0 });
    }
    Ok(out)
}

impl GlobalSummary {
    /// Globally centered covariance block for variable sets `a`, `b`:
    /// (1/n)(ΣM2[a,b] − (1/n)·ΣM1[a]·ΣM1[b]ᵀ), summing member blocks first.
    pub fn centered_cov(&self, a: &[usize], b: &[usize]) -> Result<DMatrix<f64>> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Input("covariance of an empty variable set".into()));
        }
        for &v in a.iter().chain(b) {
            if v >= self.d_prime {
                return Err(Error::Input(format!(
                    "variable index {v} out of range (d' = {})",
                    self.d_prime
                )));
            }
        }
        let h = self.h;
        let nf = self.n as f64;
        let mut m2 = DMatrix::zeros(h, h);
        for &i in a {
            for &j in b {
                m2 += &self.m2[i * self.d_prime + j];
            }
        }
        let mut m1a = nalgebra::DVector::zeros(h);
        let mut m1b = nalgebra::DVector::zeros(h);
        for &i in a {
            m1a += self.m1.row(i).transpose();
        }
        for &j in b {
            m1b += self.m1.row(j).transpose();
        }
        Ok((m2 - m1a * m1b.transpose() / nf) / nf)
    }

    /// Raw (uncentered) summed second-moment block for sets `a`, `b`.
    pub fn raw_block(&self, a: usize, b: usize) -> &DMatrix<f64> {
        &self.m2[a * self.d_prime + b]
    }

    pub fn surrogate(&self) -> usize {
        self.d_prime - 1
    }

    /// Domains in ascending order with their sample counts.
    pub fn domains(&self) -> Vec<(usize, usize)> {
        self.domain_counts.iter().map(|(&k, &c)| (k, c)).collect()
    }

    // --- serialization: JSON header + row-major little-endian f64 payload ---

    fn header_json(&self) -> serde_json::Value {
        serde_json::json!({
            "version": 1,
            "d_prime": self.d_prime,
            "h": self.h,
            "n": self.n,
            "domain_counts": self.domain_counts,
        })
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = serde_json::to_vec(&self.header_json())?;
        w.write_all(&(header.len() as u32).to_be_bytes())?;
        w.write_all(&header)?;
        w.write_all(&matrix_le_bytes(&self.m1))?;
        for blk in &self.m2 {
            w.write_all(&matrix_le_bytes(blk))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf).expect("vec write");
        buf
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_be_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let v: serde_json::Value = serde_json::from_slice(&header)?;
        let version = v["version"].as_u64().unwrap_or(0);
        if version != 1 {
            return Err(Error::Input(format!("unsupported summary version {version}")));
        }
        let d_prime = v["d_prime"].as_u64().ok_or_else(|| Error::Input("missing d_prime".into()))? as usize;
        let h = v["h"].as_u64().ok_or_else(|| Error::Input("missing h".into()))? as usize;
        let n = v["n"].as_u64().ok_or_else(|| Error::Input("missing n".into()))? as usize;
        let domain_counts: BTreeMap<usize, usize> =
            serde_json::from_value(v["domain_counts"].clone())?;
        let m1 = read_matrix_le(r, d_prime, h)?;
        let mut m2 = Vec::with_capacity(d_prime * d_prime);
        for _ in 0..d_prime * d_prime {
            m2.push(read_matrix_le(r, h, h)?);
        }
        Ok(GlobalSummary { n, d_prime, h, m1, m2, domain_counts })
    }

    /// Portable JSON-array form for debugging.
    pub fn to_debug_json(&self) -> serde_json::Value {
        serde_json::json!({
            "header": self.header_json(),
            "m1": matrix_rows(&self.m1),
            "m2": self.m2.iter().map(matrix_rows).collect::<Vec<_>>(),
        })
    }
}

pub fn matrix_le_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c * 8);
    for i in 0..r {
        for j in 0..c {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn matrix_from_le_bytes(bytes: &[u8], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if bytes.len() != rows * cols * 8 {
        return Err(Error::ShapeMismatch(format!(
            "tensor payload holds {} bytes, expected {}",
            bytes.len(),
            rows * cols * 8
        )));
    }
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let off = (i * cols + j) * 8;
            m[(i, j)] = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        }
    }
    Ok(m)
}

fn read_matrix_le<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut buf = vec![0u8; rows * cols * 8];
    r.read_exact(&mut buf)?;
    matrix_from_le_bytes(&buf, rows, cols)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
