//! Finite metric measure spaces with Dirichlet form, carré du champ,
//! Laplacian, heat flow, slopes and Hopf-Lax.
//!
//! A space is a set of `n` points with a positive reference measure `m`, a
//! finite metric `d` and symmetric nonnegative edge conductances `w`. The
//! conductances define the graph Dirichlet form
//! `E(f,g) = 1/2 Σ_{x,y} w(x,y)(f(y)-f(x))(g(y)-g(x))`;
//! the metric is an independent input used by Hopf-Lax, slopes and transport.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A generic function on the points of a space.
pub type Field = DVector<f64>;

/// Largest point count for which the heat flow uses a dense eigendecomposition.
pub const HEAT_DENSE_CAP: usize = 512;
/// Hard cap on the heat-flow point count; Crank-Nicolson is used between the
/// dense cap and this bound.
pub const HEAT_SIZE_CAP: usize = 2048;

/// Absolute slack granted to "exact" float comparisons (mass conservation,
/// comparison principles). Far below every solver tolerance in this crate.
pub const EXACT_TOL: f64 = 1e-12;

/// Tag carried by generated one-dimensional grids; quantile geodesics are
/// only defined on tagged grids.
#[derive(Debug, Clone, PartialEq)]
pub enum OneDim {
    /// Path graph with node coordinates in increasing order.
    Path { coords: Vec<f64> },
    /// Cycle graph; `coords` live on `[0, length)` in cyclic order.
    Circle { coords: Vec<f64>, length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeKind {
    /// max over y != x of |f(y)-f(x)| / d(x,y)
    Full,
    /// max over y != x of (f(x)-f(y))_+ / d(x,y)
    Descending,
}

/// Finite metric measure space.
#[derive(Debug, Clone)]
pub struct FiniteSpace {
    n: usize,
    m: DVector<f64>,
    d: DMatrix<f64>,
    w: DMatrix<f64>,
    connected: bool,
    /// True when some metric entries were filled by shortest path over
    /// edge lengths 1/sqrt(w) rather than given explicitly.
    metric_filled: bool,
    one_dim: Option<OneDim>,
}

impl FiniteSpace {
    /// Build a space from explicit data, validating every invariant.
    ///
    /// `d` must be a finite metric (symmetric, zero exactly on the diagonal,
    /// triangle inequality); `w` symmetric nonnegative with zero diagonal;
    /// `m` strictly positive.
    pub fn new(m: Vec<f64>, d: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let n = m.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty space".into()));
        }
        if d.nrows() != n || d.ncols() != n || w.nrows() != n || w.ncols() != n {
            return Err(Error::InvalidInput("d and w must be n x n".into()));
        }
        if m.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("measure m must be positive and finite".into()));
        }
        validate_symmetric_nonneg(&w, "w")?;
        validate_metric(&d)?;
        let connected = components_of(&w).iter().max().copied().unwrap_or(0) == 0;
        Ok(FiniteSpace {
            n,
            m: DVector::from_vec(m),
            d,
            w,
            connected,
            metric_filled: false,
            one_dim: None,
        })
    }

    /// Build a space from conductances only; the metric is filled by weighted
    /// shortest path over edges with length `1/sqrt(w)`. Pairs in different
    /// components get a constant fallback distance (largest finite distance
    /// or 1), which keeps the triangle inequality.
    pub fn from_conductances(m: Vec<f64>, w: DMatrix<f64>) -> Result<Self> {
        let d = metric_from_conductances(&w);
        let mut sp = Self::new(m, d, w)?;
        sp.metric_filled = true;
        Ok(sp)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn measure(&self) -> &DVector<f64> {
        &self.m
    }

    pub fn total_mass(&self) -> f64 {
        self.m.sum()
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn conductances(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn metric_was_filled(&self) -> bool {
        self.metric_filled
    }

    pub fn one_dim(&self) -> Option<&OneDim> {
        self.one_dim.as_ref()
    }

    pub(crate) fn set_one_dim(&mut self, tag: OneDim) {
        self.one_dim = Some(tag);
    }

    /// Component label per point of the conductance graph.
    pub fn components(&self) -> Vec<usize> {
        components_of(&self.w)
    }

    /// `<f, g>_m = Σ f(x) g(x) m(x)`.
    pub fn inner(&self, f: &Field, g: &Field) -> f64 {
        f.iter().zip(g.iter()).zip(self.m.iter()).map(|((a, b), mm)| a * b * mm).sum()
    }

    /// Integral `Σ f(x) m(x)`.
    pub fn integrate(&self, f: &Field) -> f64 {
        f.iter().zip(self.m.iter()).map(|(a, mm)| a * mm).sum()
    }

    /// L1(m) norm.
    pub fn norm_l1(&self, f: &Field) -> f64 {
        f.iter().zip(self.m.iter()).map(|(a, mm)| a.abs() * mm).sum()
    }

    /// Dirichlet form `E(f,g) = 1/2 Σ_{x,y} w(x,y)(f(y)-f(x))(g(y)-g(x))`.
    pub fn dirichlet(&self, f: &Field, g: &Field) -> f64 {
        let mut acc = 0.0;
        for x in 0..self.n {
            for y in 0..self.n {
                let wxy = self.w[(x, y)];
                if wxy > 0.0 {
                    acc += wxy * (f[y] - f[x]) * (g[y] - g[x]);
                }
            }
        }
        0.5 * acc
    }

    /// Carré du champ
    /// `Γ(f,g)(x) = 1/(2 m(x)) Σ_y w(x,y)(f(y)-f(x))(g(y)-g(x))`.
    ///
    /// Bilinear and symmetric, with `Σ Γ(f,g) m = E(f,g)`.
    pub fn gamma(&self, f: &Field, g: &Field) -> Field {
        let mut out = DVector::zeros(self.n);
        for x in 0..self.n {
            let mut acc = 0.0;
            for y in 0..self.n {
                let wxy = self.w[(x, y)];
                if wxy > 0.0 {
                    acc += wxy * (f[y] - f[x]) * (g[y] - g[x]);
                }
            }
            out[x] = acc / (2.0 * self.m[x]);
        }
        out
    }

    /// `(Δf)(x) = 1/m(x) Σ_y w(x,y)(f(y)-f(x))`, so `<-Δf, g>_m = E(f,g)`
    /// and `Σ (Δf) m = 0`.
    pub fn laplacian(&self, f: &Field) -> Field {
        let mut out = DVector::zeros(self.n);
        for x in 0..self.n {
            let mut acc = 0.0;
            for y in 0..self.n {
                let wxy = self.w[(x, y)];
                if wxy > 0.0 {
                    acc += wxy * (f[y] - f[x]);
                }
            }
            out[x] = acc / self.m[x];
        }
        out
    }

    /// Dense Laplacian matrix acting on fields (`laplacian` as a matrix).
    pub fn laplacian_matrix(&self) -> DMatrix<f64> {
        let mut lap = DMatrix::zeros(self.n, self.n);
        for x in 0..self.n {
            let mut deg = 0.0;
            for y in 0..self.n {
                let wxy = self.w[(x, y)];
                if wxy > 0.0 {
                    lap[(x, y)] = wxy / self.m[x];
                    deg += wxy;
                }
            }
            lap[(x, x)] = -deg / self.m[x];
        }
        lap
    }

    /// Heat semigroup `P_t f` solving `f' = Δf`.
    ///
    /// Dense spectral exponential for `n <= 512`; Crank-Nicolson with step
    /// `t/1024` up to the hard cap, error beyond. Preserves constants and
    /// total mass, contracts the L2(m) norm.
    pub fn heat_flow(&self, f: &Field, t: f64) -> Result<Field> {
        if !(t >= 0.0) {
            return Err(Error::InvalidInput(format!("heat_flow: t must be >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(f.clone());
        }
        if self.n <= HEAT_DENSE_CAP {
            Ok(self.heat_kernel(t)? * f)
        } else if self.n <= HEAT_SIZE_CAP {
            self.heat_crank_nicolson(f, t, 1024)
        } else {
            Err(Error::SizeOverflow(format!(
                "heat_flow supports at most {} points, got {}",
                HEAT_SIZE_CAP, self.n
            )))
        }
    }

    /// Dense `e^{tΔ}` via the symmetrization `M^{1/2} Δ M^{-1/2}`.
    pub fn heat_kernel(&self, t: f64) -> Result<DMatrix<f64>> {
        if self.n > HEAT_DENSE_CAP {
            return Err(Error::SizeOverflow(format!(
                "dense heat kernel capped at {} points, got {}",
                HEAT_DENSE_CAP, self.n
            )));
        }
        let sqrt_m: Vec<f64> = self.m.iter().map(|v| v.sqrt()).collect();
        // S = M^{1/2} (-Δ) M^{-1/2} is symmetric PSD.
        let mut s = DMatrix::zeros(self.n, self.n);
        for x in 0..self.n {
            let mut deg = 0.0;
            for y in 0..self.n {
                let wxy = self.w[(x, y)];
                if wxy > 0.0 {
                    s[(x, y)] = -wxy / (sqrt_m[x] * sqrt_m[y]);
                    deg += wxy;
                }
            }
            s[(x, x)] = deg / self.m[x];
        }
        let eig = s.symmetric_eigen();
        let mut exp_diag = DMatrix::zeros(self.n, self.n);
        for k in 0..self.n {
            exp_diag[(k, k)] = (-t * eig.eigenvalues[k]).exp();
        }
        let core = &eig.eigenvectors * exp_diag * eig.eigenvectors.transpose();
        // e^{tΔ} = M^{-1/2} core M^{1/2}
        let mut out = core;
        for x in 0..self.n {
            for y in 0..self.n {
                out[(x, y)] *= sqrt_m[y] / sqrt_m[x];
            }
        }
        Ok(out)
    }

    fn heat_crank_nicolson(&self, f: &Field, t: f64, steps: usize) -> Result<Field> {
        let h = t / steps as f64;
        let lap = self.laplacian_matrix();
        let id = DMatrix::identity(self.n, self.n);
        let lhs = &id - (&lap * (h / 2.0));
        let rhs = &id + (&lap * (h / 2.0));
        let lu = lhs.lu();
        let mut cur = f.clone();
        for _ in 0..steps {
            cur = lu
                .solve(&(&rhs * &cur))
                .ok_or_else(|| Error::Numerical("singular Crank-Nicolson step".into()))?;
        }
        Ok(cur)
    }

    /// Hopf-Lax evolution `Q_t f(x) = min_y [ f(y) + d(x,y)^2 / (2t) ]`.
    ///
    /// Satisfies `inf f <= Q_t f <= sup f` and is pointwise nonincreasing
    /// in `t`.
    pub fn hopf_lax(&self, f: &Field, t: f64) -> Result<Field> {
        if !(t > 0.0) {
            return Err(Error::InvalidInput(format!("hopf_lax: t must be > 0, got {t}")));
        }
        let mut out = DVector::zeros(self.n);
        for x in 0..self.n {
            let mut best = f64::INFINITY;
            for y in 0..self.n {
                let cand = f[y] + self.d[(x, y)] * self.d[(x, y)] / (2.0 * t);
                if cand < best {
                    best = cand;
                }
            }
            out[x] = best;
        }
        Ok(out)
    }

    /// Discrete slope surrogate (max over other points); used only inside
    /// Hopf-Lax diagnostics, since the limsup definition is vacuous on a
    /// finite space.
    pub fn slope(&self, f: &Field, kind: SlopeKind) -> Result<Field> {
        if self.n < 2 {
            return Err(Error::InvalidInput("slope needs at least 2 points".into()));
        }
        let mut out = DVector::zeros(self.n);
        for x in 0..self.n {
            let mut best: f64 = 0.0;
            for y in 0..self.n {
                if y == x {
                    continue;
                }
                let num = match kind {
                    SlopeKind::Full => (f[y] - f[x]).abs(),
                    SlopeKind::Descending => (f[x] - f[y]).max(0.0),
                };
                best = best.max(num / self.d[(x, y)]);
            }
            out[x] = best;
        }
        Ok(out)
    }
}

fn validate_symmetric_nonneg(w: &DMatrix<f64>, name: &str) -> Result<()> {
    let n = w.nrows();
    for x in 0..n {
        if w[(x, x)] != 0.0 {
            return Err(Error::InvalidInput(format!("{name} must have zero diagonal")));
        }
        for y in 0..n {
            let v = w[(x, y)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!("{name}[{x},{y}] = {v} invalid")));
            }
            if (v - w[(y, x)]).abs() > 0.0 {
                return Err(Error::InvalidInput(format!("{name} must be symmetric")));
            }
        }
    }
    Ok(())
}

fn validate_metric(d: &DMatrix<f64>) -> Result<()> {
    let n = d.nrows();
    validate_symmetric_nonneg(d, "d")?;
    for x in 0..n {
        for y in 0..n {
            if x != y && d[(x, y)] <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "d[{x},{y}] must be positive off the diagonal"
                )));
            }
        }
    }
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                if d[(x, y)] > d[(x, z)] + d[(z, y)] + 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "triangle inequality fails on ({x},{y},{z})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Connected-component labels of the positive-conductance graph.
pub(crate) fn components_of(w: &DMatrix<f64>) -> Vec<usize> {
    let n = w.nrows();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(x) = stack.pop() {
            for y in 0..n {
                if w[(x, y)] > 0.0 && label[y] == usize::MAX {
                    label[y] = next;
                    stack.push(y);
                }
            }
        }
        next += 1;
    }
    label
}

/// All-pairs shortest path over edge lengths `1/sqrt(w)`; disconnected pairs
/// get a constant fallback so the result is still a finite metric.
fn metric_from_conductances(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let mut d = DMatrix::from_element(n, n, f64::INFINITY);
    for x in 0..n {
        d[(x, x)] = 0.0;
        for y in 0..n {
            if w[(x, y)] > 0.0 {
                d[(x, y)] = 1.0 / w[(x, y)].sqrt();
            }
        }
    }
    // Floyd-Warshall; n is desk scale.
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[(i, k)] + d[(k, j)];
                if via < d[(i, j)] {
                    d[(i, j)] = via;
                }
            }
        }
    }
    let max_finite = d.iter().copied().filter(|v| v.is_finite()).fold(0.0_f64, f64::max);
    let fallback = max_finite.max(1.0);
    for v in d.iter_mut() {
        if !v.is_finite() {
            *v = fallback;
        }
    }
    d
}

/// Nonnegative function on a space together with its mass `Σ ρ(x) m(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    values: DVector<f64>,
    mass: f64,
}

impl DensityField {
    /// Validates nonnegativity; values above `-1e-9` are snapped to zero so
    /// that solver round-off does not poison downstream checks.
    pub fn new(space: &FiniteSpace, mut values: DVector<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::InvalidInput("density length mismatch".into()));
        }
        for v in values.iter_mut() {
            if !v.is_finite() {
                return Err(Error::InvalidInput("density has non-finite entry".into()));
            }
            if *v < 0.0 {
                if *v > -1e-9 {
                    *v = 0.0;
                } else {
                    return Err(Error::InvalidInput(format!("density has negative entry {v}")));
                }
            }
        }
        let mass = space.integrate(&values);
        Ok(DensityField { values, mass })
    }

    /// Uniform probability density.
    pub fn uniform(space: &FiniteSpace) -> Self {
        let total = space.total_mass();
        DensityField {
            values: DVector::from_element(space.len(), 1.0 / total),
            mass: 1.0,
        }
    }

    /// Rescale to unit mass.
    pub fn normalized(&self, space: &FiniteSpace) -> Result<Self> {
        if self.mass <= 0.0 {
            return Err(Error::InvalidInput("cannot normalize zero mass".into()));
        }
        DensityField::new(space, &self.values / self.mass)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_probability(&self) -> bool {
        (self.mass - 1.0).abs() <= 1e-12
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Deterministic space generators used by the CLI and the test suites.
pub mod gen {
    use super::*;

    /// Cycle graph on `n` points with unit total length: spacing `h = 1/n`,
    /// `m = 1`, nearest-neighbour conductances `w = 1/h^2` (so the Laplacian
    /// is the periodic second-difference operator) and arc-length metric.
    pub fn circle(n: usize) -> Result<FiniteSpace> {
        if n < 3 {
            return Err(Error::InvalidInput("circle needs n >= 3".into()));
        }
        let h = 1.0 / n as f64;
        let cond = 1.0 / (h * h);
        let mut w = DMatrix::zeros(n, n);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            let j = (i + 1) % n;
            w[(i, j)] = cond;
            w[(j, i)] = cond;
        }
        for i in 0..n {
            for j in 0..n {
                let k = (i as isize - j as isize).unsigned_abs();
                let k = k.min(n - k);
                d[(i, j)] = k as f64 * h;
            }
        }
        let mut sp = FiniteSpace::new(vec![1.0; n], d, w)?;
        sp.set_one_dim(OneDim::Circle {
            coords: (0..n).map(|i| i as f64 * h).collect(),
            length: 1.0,
        });
        Ok(sp)
    }

    /// Path graph on `n` points over `[0,1]`: spacing `h = 1/(n-1)`, `m = 1`,
    /// nearest-neighbour conductances `1/h^2`.
    pub fn path(n: usize) -> Result<FiniteSpace> {
        if n < 2 {
            return Err(Error::InvalidInput("path needs n >= 2".into()));
        }
        let h = 1.0 / (n - 1) as f64;
        let cond = 1.0 / (h * h);
        let mut w = DMatrix::zeros(n, n);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            w[(i, i + 1)] = cond;
            w[(i + 1, i)] = cond;
        }
        for i in 0..n {
            for j in 0..n {
                d[(i, j)] = (i as f64 - j as f64).abs() * h;
            }
        }
        let mut sp = FiniteSpace::new(vec![1.0; n], d, w)?;
        sp.set_one_dim(OneDim::Path {
            coords: (0..n).map(|i| i as f64 * h).collect(),
        });
        Ok(sp)
    }

    /// Complete graph with unit weights, unit measure and unit distances.
    pub fn complete(n: usize) -> Result<FiniteSpace> {
        if n < 2 {
            return Err(Error::InvalidInput("complete needs n >= 2".into()));
        }
        let mut w = DMatrix::zeros(n, n);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    w[(i, j)] = 1.0;
                    d[(i, j)] = 1.0;
                }
            }
        }
        FiniteSpace::new(vec![1.0; n], d, w)
    }

    /// The two-point space: `m = (1,1)`, `w(a,b) = 1`, `d(a,b) = 1`.
    pub fn two_point() -> FiniteSpace {
        complete(2).expect("two-point space")
    }

    /// Seeded Erdős–Rényi graph with uniform weights in `[0.5, 1.5]` and
    /// measures in `[0.5, 1.5]`; a Hamiltonian cycle is added when the draw
    /// is disconnected so the space is always connected. Metric by shortest
    /// path over `1/sqrt(w)`.
    pub fn erdos(n: usize, p: f64, seed: u64) -> Result<FiniteSpace> {
        if n < 2 {
            return Err(Error::InvalidInput("erdos needs n >= 2".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput("edge probability must be in [0,1]".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < p {
                    let weight = 0.5 + rng.gen::<f64>();
                    w[(i, j)] = weight;
                    w[(j, i)] = weight;
                }
            }
        }
        if components_of(&w).iter().any(|&c| c != 0) {
            for i in 0..n {
                let j = (i + 1) % n;
                if w[(i, j)] == 0.0 {
                    let weight = 0.5 + rng.gen::<f64>();
                    w[(i, j)] = weight;
                    w[(j, i)] = weight;
                }
            }
        }
        let m: Vec<f64> = (0..n).map(|_| 0.5 + rng.gen::<f64>()).collect();
        FiniteSpace::from_conductances(m, w)
    }
}

/// Text graph format: a node block `node i m_i [coord...]`, one line per
/// undirected edge `i j w_ij`, and an optional metric block `dist i j d_ij`.
/// Missing metric entries are filled by weighted shortest path over edges
/// with length `1/sqrt(w)` (flagged on the returned space).
pub mod io {
    use super::*;
    use std::path::Path;

    pub fn parse(text: &str) -> Result<FiniteSpace> {
        let mut nodes: Vec<(usize, f64)> = Vec::new();
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        let mut dists: Vec<(usize, usize, f64)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| Error::Parse(format!("line {}: {}", lineno + 1, what));
            match toks[0] {
                "node" => {
                    if toks.len() < 3 {
                        return Err(bad("node line needs `node i m_i`"));
                    }
                    let i: usize = toks[1].parse().map_err(|_| bad("bad node index"))?;
                    let mi: f64 = toks[2].parse().map_err(|_| bad("bad node measure"))?;
                    nodes.push((i, mi));
                }
                "dist" => {
                    if toks.len() != 4 {
                        return Err(bad("dist line needs `dist i j d_ij`"));
                    }
                    let i: usize = toks[1].parse().map_err(|_| bad("bad index"))?;
                    let j: usize = toks[2].parse().map_err(|_| bad("bad index"))?;
                    let v: f64 = toks[3].parse().map_err(|_| bad("bad distance"))?;
                    dists.push((i, j, v));
                }
                _ => {
                    if toks.len() != 3 {
                        return Err(bad("edge line needs `i j w_ij`"));
                    }
                    let i: usize = toks[0].parse().map_err(|_| bad("bad index"))?;
                    let j: usize = toks[1].parse().map_err(|_| bad("bad index"))?;
                    let v: f64 = toks[2].parse().map_err(|_| bad("bad weight"))?;
                    edges.push((i, j, v));
                }
            }
        }
        if nodes.is_empty() {
            return Err(Error::Parse("no node block".into()));
        }
        let n = nodes.iter().map(|&(i, _)| i + 1).max().unwrap();
        let mut m = vec![0.0; n];
        for (i, mi) in nodes {
            if i >= n {
                return Err(Error::Parse(format!("node index {i} out of range")));
            }
            m[i] = mi;
        }
        let mut w = DMatrix::zeros(n, n);
        for (i, j, v) in edges {
            if i >= n || j >= n {
                return Err(Error::Parse(format!("edge ({i},{j}) out of range")));
            }
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        if dists.is_empty() {
            return FiniteSpace::from_conductances(m, w);
        }
        // Start from shortest-path fill, then overwrite given entries.
        let mut d = super::metric_from_conductances(&w);
        let mut filled = false;
        let mut given = vec![false; n * n];
        for &(i, j, v) in &dists {
            if i >= n || j >= n {
                return Err(Error::Parse(format!("dist ({i},{j}) out of range")));
            }
            d[(i, j)] = v;
            d[(j, i)] = v;
            given[i * n + j] = true;
            given[j * n + i] = true;
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !given[i * n + j] {
                    filled = true;
                }
            }
        }
        let mut sp = FiniteSpace::new(m, d, w)?;
        sp.metric_filled = filled;
        Ok(sp)
    }

    pub fn load(path: &Path) -> Result<FiniteSpace> {
        parse(&std::fs::read_to_string(path)?)
    }

    pub fn format(space: &FiniteSpace) -> String {
        let n = space.len();
        let mut out = String::new();
        for i in 0..n {
            out.push_str(&format!("node {} {}\n", i, space.measure()[i]));
        }
        for i in 0..n {
            for j in i + 1..n {
                let w = space.conductances()[(i, j)];
                if w > 0.0 {
                    out.push_str(&format!("{} {} {}\n", i, j, w));
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                out.push_str(&format!("dist {} {} {}\n", i, j, space.metric()[(i, j)]));
            }
        }
        out
    }

    pub fn save(space: &FiniteSpace, path: &Path) -> Result<()> {
        std::fs::write(path, format(space))?;
        Ok(())
    }
}
