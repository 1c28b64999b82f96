//! Laurent-polynomial Bloch Hamiltonians `H(β) = Σ_n T[n] β^n` with `β = e^{ik+μ}`.
//!
//! Convention: `T[+1]` multiplies `β` and, in real space, is the block at
//! `(j, j+1)`: it connects site `j` to its right neighbour. A ring under imaginary
//! flux `μ` carries `T[n] e^{nμ}` on its `n`-th cyclic off-diagonal.

use serde::{Deserialize, Serialize};

use crate::eigensolve::{eig_dense, CMatrix};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct LaurentBlochHamiltonian {
    bands: usize,
    p: usize,
    q: usize,
    /// `blocks[n + p]` holds `T[n]`.
    blocks: Vec<CMatrix>,
}

impl LaurentBlochHamiltonian {
    /// Builds from `(n, T[n])` terms; repeated powers are summed and the range is
    /// trimmed to the outermost nonzero blocks.
    pub fn new(bands: usize, terms: &[(i32, CMatrix)]) -> Result<Self> {
        if bands == 0 {
            return Err(Error::InvalidModel("at least one band is required".into()));
        }
        for (n, t) in terms {
            if t.nrows() != bands || t.ncols() != bands {
                return Err(Error::InvalidModel(format!("block T[{n}] is {}x{}, expected {bands}x{bands}", t.nrows(), t.ncols())));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite("hopping block"));
            }
        }
        let nonzero: Vec<i32> = terms.iter().filter(|(_, t)| t.max_abs() > 0.0).map(|(n, _)| *n).collect();
        let (lo, hi) = match (nonzero.iter().min(), nonzero.iter().max()) {
            (Some(&lo), Some(&hi)) => (lo.min(0), hi.max(0)),
            _ => return Err(Error::InvalidModel("all hopping blocks vanish".into())),
        };
        let mut blocks = vec![CMatrix::zeros(bands, bands); (hi - lo + 1) as usize];
        for (n, t) in terms {
            if *n >= lo && *n <= hi {
                let slot = &mut blocks[(n - lo) as usize];
                *slot = slot.add(t);
            }
        }
        // trim again in case summed terms cancel
        let first = blocks.iter().position(|b| b.max_abs() > 0.0);
        let last = blocks.iter().rposition(|b| b.max_abs() > 0.0);
        let (first, last) = match (first, last) {
            (Some(f), Some(l)) => (f as i32 + lo, l as i32 + lo),
            _ => return Err(Error::InvalidModel("all hopping blocks vanish".into())),
        };
        let (lo2, hi2) = (first.min(0), last.max(0));
        let blocks: Vec<CMatrix> = blocks.drain((lo2 - lo) as usize..=(hi2 - lo) as usize).collect();
        let p = (-lo2) as usize;
        let q = hi2 as usize;
        if p + q == 0 {
            return Err(Error::InvalidModel("Hamiltonian has no hopping (p + q = 0)".into()));
        }
        Ok(LaurentBlochHamiltonian { bands, p, q, blocks })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Largest power of `1/β`.
    pub fn left_range(&self) -> usize {
        self.p
    }

    /// Largest power of `β`.
    pub fn right_range(&self) -> usize {
        self.q
    }

    /// `T[n]`, or a zero block outside `[-p, q]`.
    pub fn coefficient(&self, n: i32) -> CMatrix {
        let idx = n + self.p as i32;
        if idx < 0 || idx as usize >= self.blocks.len() {
            CMatrix::zeros(self.bands, self.bands)
        } else {
            self.blocks[idx as usize].clone()
        }
    }

    /// Iterates over `(n, T[n])` for `n` in `[-p, q]`.
    pub fn terms(&self) -> impl Iterator<Item = (i32, &CMatrix)> {
        let p = self.p as i32;
        self.blocks.iter().enumerate().map(move |(i, b)| (i as i32 - p, b))
    }

    /// `Σ_n T[n] β^n`.
    pub fn evaluate(&self, beta: C64) -> Result<CMatrix> {
        if beta == C64::new(0.0, 0.0) {
            return Err(Error::Pole);
        }
        Ok(self.weighted_sum(beta, |_| C64::new(1.0, 0.0)))
    }

    /// `∂H/∂k = Σ_n i n T[n] β^n`.
    pub fn dk(&self, beta: C64) -> Result<CMatrix> {
        if beta == C64::new(0.0, 0.0) {
            return Err(Error::Pole);
        }
        Ok(self.weighted_sum(beta, |n| C64::new(0.0, n as f64)))
    }

    fn weighted_sum(&self, beta: C64, weight: impl Fn(i32) -> C64) -> CMatrix {
        let m = self.bands;
        let mut out = CMatrix::zeros(m, m);
        for (n, t) in self.terms() {
            let w = weight(n) * beta.powi(n);
            for i in 0..m {
                for j in 0..m {
                    out[(i, j)] += t[(i, j)] * w;
                }
            }
        }
        out
    }

    /// The same model with every block rescaled, `T[n] -> T[n] e^{nμ}`.
    pub fn gauged(&self, mu: f64) -> Self {
        let blocks = self.terms().map(|(n, t)| t.scale(C64::new((n as f64 * mu).exp(), 0.0))).collect();
        LaurentBlochHamiltonian { bands: self.bands, p: self.p, q: self.q, blocks }
    }
}

/// Hatano-Nelson chain, `H(β) = tL β + tR/β`.
pub fn build_hatano_nelson(t_l: f64, t_r: f64) -> Result<LaurentBlochHamiltonian> {
    if t_l == 0.0 && t_r == 0.0 {
        return Err(Error::InvalidModel("both hoppings are zero".into()));
    }
    let s = |x: f64| CMatrix::from_diag(&[C64::new(x, 0.0)]);
    LaurentBlochHamiltonian::new(1, &[(1, s(t_l)), (-1, s(t_r))])
}

/// Non-reciprocal SSH chain with next-nearest-neighbour hopping `t3`.
///
/// Off-diagonal entries: `H12 = t1 + γ/2 + t3 β + t2/β`, `H21 = t1 - γ/2 + t2 β + t3/β`.
pub fn build_nonreciprocal_ssh(t1: f64, t2: f64, t3: f64, gamma: f64) -> Result<LaurentBlochHamiltonian> {
    if ![t1, t2, t3, gamma].iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("SSH parameters"));
    }
    let off = |upper: f64, lower: f64| {
        CMatrix::from_rows(&[
            vec![C64::new(0.0, 0.0), C64::new(upper, 0.0)],
            vec![C64::new(lower, 0.0), C64::new(0.0, 0.0)],
        ])
        .expect("2x2 block")
    };
    LaurentBlochHamiltonian::new(
        2,
        &[(-1, off(t2, t3)), (0, off(t1 + gamma / 2.0, t1 - gamma / 2.0)), (1, off(t3, t2))],
    )
}

/// Eigenvalues of `H(e^{ik+μ})`.
pub fn bloch_eigenvalues(h: &LaurentBlochHamiltonian, k: f64, mu: f64) -> Result<Vec<C64>> {
    let a = h.evaluate(C64::from_polar(mu.exp(), k))?;
    small_eigenvalues(&a)
}

/// Closed forms for 1x1 and 2x2, dense QR otherwise.
pub(crate) fn small_eigenvalues(a: &CMatrix) -> Result<Vec<C64>> {
    match a.nrows() {
        1 => Ok(vec![a[(0, 0)]]),
        2 => {
            let half_tr = (a[(0, 0)] + a[(1, 1)]) * 0.5;
            let half_diff = (a[(0, 0)] - a[(1, 1)]) * 0.5;
            let disc = (half_diff * half_diff + a[(0, 1)] * a[(1, 0)]).sqrt();
            Ok(vec![half_tr + disc, half_tr - disc])
        }
        _ => eig_dense(a),
    }
}

/// Uniform endpoint-excluded grid `k_j = 2πj/N`.
pub fn momentum_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64).collect()
}

/// All `mN` ring eigenvalues via the Bloch decomposition at the `N` momenta.
pub fn ring_spectrum(h: &LaurentBlochHamiltonian, sites: usize, mu: f64) -> Result<Vec<C64>> {
    let mut out = Vec::with_capacity(sites * h.bands());
    for k in momentum_grid(sites) {
        out.extend(bloch_eigenvalues(h, k, mu)?);
    }
    Ok(out)
}

/// Same as [`ring_spectrum`] with each eigenvalue labelled by its momentum.
pub fn ring_spectrum_labelled(h: &LaurentBlochHamiltonian, sites: usize, mu: f64) -> Result<(Vec<C64>, Vec<f64>)> {
    let mut pts = Vec::with_capacity(sites * h.bands());
    let mut labels = Vec::with_capacity(sites * h.bands());
    for k in momentum_grid(sites) {
        for e in bloch_eigenvalues(h, k, mu)? {
            pts.push(e);
            labels.push(k);
        }
    }
    Ok((pts, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Debug, Clone)]
pub struct FiniteLattice {
    pub matrix: CMatrix,
    pub boundary: Boundary,
    /// Imaginary flux per site; zero for open chains.
    pub gauge: f64,
    pub sites: usize,
}

impl FiniteLattice {
    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        eig_dense(&self.matrix)
    }
}

fn check_sites(h: &LaurentBlochHamiltonian, sites: usize, boundary: Boundary) -> Result<()> {
    let range = match boundary {
        Boundary::Periodic => h.left_range() + h.right_range(),
        Boundary::Open => h.left_range().max(h.right_range()),
    };
    if sites <= range {
        return Err(Error::WrapAround { sites, range });
    }
    Ok(())
}

fn place_block(mat: &mut CMatrix, m: usize, row_cell: usize, col_cell: usize, block: &CMatrix, w: C64) {
    for a in 0..m {
        for b in 0..m {
            mat[(row_cell * m + a, col_cell * m + b)] += block[(a, b)] * w;
        }
    }
}

/// Block-circulant ring with `T[n] e^{nμ}` on the `n`-th cyclic off-diagonal.
pub fn ring_lattice(h: &LaurentBlochHamiltonian, sites: usize, mu: f64) -> Result<FiniteLattice> {
    check_sites(h, sites, Boundary::Periodic)?;
    let m = h.bands();
    let mut mat = CMatrix::zeros(m * sites, m * sites);
    for (n, t) in h.terms() {
        let w = C64::new((n as f64 * mu).exp(), 0.0);
        for j in 0..sites {
            let col = (j as i64 + n as i64).rem_euclid(sites as i64) as usize;
            place_block(&mut mat, m, j, col, t, w);
        }
    }
    Ok(FiniteLattice { matrix: mat, boundary: Boundary::Periodic, gauge: mu, sites })
}

/// Block-Toeplitz open chain; blocks reaching past either end are dropped. Needs
/// more sites than the longest hopping.
pub fn open_lattice(h: &LaurentBlochHamiltonian, sites: usize) -> Result<FiniteLattice> {
    check_sites(h, sites, Boundary::Open)?;
    let m = h.bands();
    let mut mat = CMatrix::zeros(m * sites, m * sites);
    for (n, t) in h.terms() {
        for j in 0..sites {
            let col = j as i64 + n as i64;
            if col >= 0 && (col as usize) < sites {
                place_block(&mut mat, m, j, col as usize, t, C64::new(1.0, 0.0));
            }
        }
    }
    Ok(FiniteLattice { matrix: mat, boundary: Boundary::Open, gauge: 0.0, sites })
}
