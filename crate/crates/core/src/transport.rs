//! Exact discrete optimal transport between equal-size complex point clouds.

use std::io::{Read, Write};

use crate::model::{ring_spectrum, LaurentBlochHamiltonian};
use crate::{Error, Result, C64};

/// A finite multiset of complex points, optionally labelled by quasimomentum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCloud {
    points: Vec<C64>,
    labels: Option<Vec<f64>>,
}

impl SpectrumCloud {
    pub fn new(points: Vec<C64>) -> Result<Self> {
        Self::with_labels(points, None)
    }

    pub fn with_labels(points: Vec<C64>, labels: Option<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("empty point cloud".into()));
        }
        if points.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("point cloud"));
        }
        if let Some(l) = &labels {
            if l.len() != points.len() {
                return Err(Error::SizeMismatch { left: points.len(), right: l.len() });
            }
        }
        Ok(SpectrumCloud { points, labels })
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::SizeMismatch { left: n, right: r.len() });
        }
        Ok(CostMatrix { n, data: rows.concat() })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        CostMatrix { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// A perfect matching `i -> assignment[i]` with its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub assignment: Vec<usize>,
    pub total_cost: f64,
    pub w2: f64,
}

/// `C_ij = |a_i - b_j|^2`.
pub fn squared_cost_matrix(a: &SpectrumCloud, b: &SpectrumCloud) -> Result<CostMatrix> {
    squared_cost_points(a.points(), b.points())
}

pub fn squared_cost_points(a: &[C64], b: &[C64]) -> Result<CostMatrix> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len() });
    }
    Ok(CostMatrix::from_fn(a.len(), |i, j| (a[i] - b[j]).norm_sqr()))
}

/// Exact minimum-cost perfect matching.
///
/// Shortest augmenting paths with row/column potentials give an optimum and dual
/// certificate; among all optima the lexicographically smallest assignment is then
/// selected on the graph of tight edges.
pub fn min_cost_matching(c: &CostMatrix) -> Result<TransportPlan> {
    let n = c.size();
    if n == 0 {
        return Err(Error::InvalidInput("empty cost matrix".into()));
    }
    if c.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }
    if c.data.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidInput("negative cost".into()));
    }
    let (mut col4row, u, v) = augmenting_paths(c);
    lexicographic_refine(c, &mut col4row, &u, &v);
    let total_cost: f64 = col4row.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum();
    Ok(TransportPlan { assignment: col4row, total_cost, w2: total_cost / n as f64 })
}

const NONE: usize = usize::MAX;

fn augmenting_paths(c: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = c.size();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut col4row = vec![NONE; n];
    let mut row4col = vec![NONE; n];
    let mut path = vec![NONE; n];
    let mut spc = vec![f64::INFINITY; n];
    let mut sr = vec![false; n];
    let mut sc = vec![false; n];
    let mut remaining: Vec<usize> = Vec::with_capacity(n);

    for cur_row in 0..n {
        spc.iter_mut().for_each(|x| *x = f64::INFINITY);
        sr.iter_mut().for_each(|x| *x = false);
        sc.iter_mut().for_each(|x| *x = false);
        remaining.clear();
        remaining.extend((0..n).rev());

        let mut min_val = 0.0;
        let mut i = cur_row;
        let sink;
        loop {
            sr[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = NONE;
            let row = c.row(i);
            for (pos, &j) in remaining.iter().enumerate() {
                let r = min_val + row[j] - u[i] - v[j];
                if r < spc[j] {
                    path[j] = i;
                    spc[j] = r;
                }
                if spc[j] < lowest || (spc[j] == lowest && row4col[j] == NONE) {
                    lowest = spc[j];
                    index = pos;
                }
            }
            min_val = lowest;
            let j = remaining[index];
            sc[j] = true;
            remaining.swap_remove(index);
            if row4col[j] == NONE {
                sink = j;
                break;
            }
            i = row4col[j];
        }

        u[cur_row] += min_val;
        for r in 0..n {
            if sr[r] && r != cur_row {
                u[r] += min_val - spc[col4row[r]];
            }
        }
        for j in 0..n {
            if sc[j] {
                v[j] -= min_val - spc[j];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }
    (col4row, u, v)
}

/// Rewrites an optimal assignment into the lexicographically smallest optimal one by
/// greedy choice with alternating-path repair inside the tight-edge graph.
fn lexicographic_refine(c: &CostMatrix, col4row: &mut [usize], u: &[f64], v: &[f64]) {
    let n = c.size();
    let scale = c.data.iter().fold(0.0f64, |m, &x| m.max(x)).max(f64::MIN_POSITIVE);
    let tol = 8.0 * f64::EPSILON * scale;
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| c.get(i, j) - u[i] - v[j] <= tol).collect())
        .collect();
    // the matched edges are tight by construction; keep them even if rounding says otherwise
    let tight: Vec<Vec<usize>> = tight
        .into_iter()
        .enumerate()
        .map(|(i, mut t)| {
            if !t.contains(&col4row[i]) {
                t.push(col4row[i]);
                t.sort_unstable();
            }
            t
        })
        .collect();
    let mut row4col = vec![NONE; n];
    for (i, &j) in col4row.iter().enumerate() {
        row4col[j] = i;
    }
    let mut fixed_col = vec![false; n];
    let mut seen = vec![false; n];
    let mut prev = vec![NONE; n];
    let mut queue: Vec<usize> = Vec::new();
    for i in 0..n {
        let current = col4row[i];
        for &j in &tight[i] {
            if j >= current {
                break;
            }
            if fixed_col[j] {
                continue;
            }
            // try to reroute the owner of j so that it ends up on `current`
            let owner = row4col[j];
            seen.iter_mut().for_each(|s| *s = false);
            queue.clear();
            queue.push(owner);
            let mut head = 0;
            let mut found = NONE;
            'bfs: while head < queue.len() {
                let r = queue[head];
                head += 1;
                for &cc in &tight[r] {
                    if fixed_col[cc] || cc == j || seen[cc] {
                        continue;
                    }
                    seen[cc] = true;
                    prev[cc] = r;
                    if cc == current {
                        found = cc;
                        break 'bfs;
                    }
                    let next = row4col[cc];
                    if next != i {
                        queue.push(next);
                    }
                }
            }
            if found != NONE {
                let mut cc = found;
                loop {
                    let r = prev[cc];
                    let old = col4row[r];
                    col4row[r] = cc;
                    row4col[cc] = r;
                    if r == owner {
                        break;
                    }
                    cc = old;
                }
                col4row[i] = j;
                row4col[j] = i;
                break;
            }
        }
        fixed_col[col4row[i]] = true;
    }
}

/// `W^2 = min-cost / N`.
pub fn wasserstein2(a: &SpectrumCloud, b: &SpectrumCloud) -> Result<f64> {
    wasserstein2_points(a.points(), b.points())
}

pub fn wasserstein2_points(a: &[C64], b: &[C64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::InvalidInput("empty point cloud".into()));
    }
    Ok(min_cost_matching(&squared_cost_points(a, b)?)?.w2)
}

/// Finite-difference Wasserstein metric of the ring spectrum,
/// `min-cost(spec(μ+Δμ/2), spec(μ-Δμ/2)) / (N Δμ²)` with `N` unit cells.
///
/// The cost is normalised per unit cell so that the estimate converges to the
/// band-summed thermodynamic metric; for one band it equals `W²/Δμ²`.
pub fn metric_fd(h: &LaurentBlochHamiltonian, mu: f64, dmu: f64, sites: usize) -> Result<f64> {
    if !(dmu > 0.0) {
        return Err(Error::Precondition("gauge step must be positive".into()));
    }
    if dmu >= 2.0 * std::f64::consts::PI / sites as f64 {
        return Err(Error::Precondition(format!(
            "gauge step {dmu} is not below the momentum spacing 2*pi/{sites}"
        )));
    }
    let plus = ring_spectrum(h, sites, mu + dmu / 2.0)?;
    let minus = ring_spectrum(h, sites, mu - dmu / 2.0)?;
    let plan = min_cost_matching(&squared_cost_points(&plus, &minus)?)?;
    Ok(plan.total_cost / (sites as f64 * dmu * dmu))
}

/// Formats a float with 17 significant digits; parses back to the identical value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads a cloud from CSV with columns `re,im[,k]`.
pub fn read_cloud_csv<R: Read>(reader: R) -> Result<SpectrumCloud> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let pos = |name: &str| headers.iter().position(|h| h == name);
    let (re, im) = match (pos("re"), pos("im")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Csv("missing re/im columns".into())),
    };
    let k = pos("k");
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let field = |idx: usize| -> Result<f64> {
            rec.get(idx)
                .ok_or_else(|| Error::Csv(format!("row {} is short", line + 2)))?
                .parse::<f64>()
                .map_err(|e| Error::Csv(format!("row {}: {e}", line + 2)))
        };
        points.push(C64::new(field(re)?, field(im)?));
        if let Some(k) = k {
            labels.push(field(k)?);
        }
    }
    SpectrumCloud::with_labels(points, k.map(|_| labels))
}

/// Writes a cloud as CSV with columns `re,im[,k]`.
pub fn write_cloud_csv<W: Write>(writer: W, cloud: &SpectrumCloud) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    match cloud.labels() {
        Some(labels) => {
            w.write_record(["re", "im", "k"]).map_err(csv_err)?;
            for (z, k) in cloud.points().iter().zip(labels) {
                w.write_record([fmt_f64(z.re), fmt_f64(z.im), fmt_f64(*k)]).map_err(csv_err)?;
            }
        }
        None => {
            w.write_record(["re", "im"]).map_err(csv_err)?;
            for z in cloud.points() {
                w.write_record([fmt_f64(z.re), fmt_f64(z.im)]).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
