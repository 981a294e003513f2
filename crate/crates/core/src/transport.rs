//! Wasserstein distances, Kantorovich duality via Hopf-Lax, 1-D quantile
//! geodesics, velocity densities through weighted Poisson solves, weighted
//! action functionals, and the CD*/EVI/contraction checkers.
//!
//! `W₂` is computed exactly by a dense transportation simplex over couplings
//! with cost `d²`. Geodesics exist only on tagged 1-D grids (interval or
//! circle), where displacement interpolation of quantile atoms is available;
//! the ambient discrete space itself is not geodesic. Velocities follow the
//! dual route: the distributional time derivative `ℓ_s` is lifted to a
//! potential by a weighted Poisson solve and `v² = Γ(φ)` on the support.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::diffusion::evolve;
use crate::entropy::{green_weight, sigma_coeff, EntropyModel};
use crate::error::{Error, Result};
use crate::gamma2::WeightedOperator;
use crate::report::{CheckReport, Verdict, Witness};
use crate::space::{DensityField, Field, FiniteSpace, OneDim};

/// Dense-simplex size cap for the exact LP.
pub const LP_SIZE_CAP: usize = 256;

/// Default tolerance for trend checks: `10 (h + τ)` with `h` the spatial
/// resolution (smallest positive distance) and `τ` the time step.
pub fn default_tol(space: &FiniteSpace, tau: f64) -> f64 {
    let n = space.len();
    let mut h = f64::INFINITY;
    for x in 0..n {
        for y in 0..n {
            if x != y {
                h = h.min(space.metric()[(x, y)]);
            }
        }
    }
    if !h.is_finite() {
        h = 1.0;
    }
    10.0 * (h + tau)
}

/// Transport plan between two probability fields, with its quadratic cost
/// and the dual potentials certifying optimality.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub matrix: DMatrix<f64>,
    /// `Σ π(x,y) d(x,y)²`
    pub cost: f64,
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
}

impl Coupling {
    /// Largest marginal mismatch against the given measures.
    pub fn marginal_error(&self, space: &FiniteSpace, mu0: &DensityField, mu1: &DensityField) -> f64 {
        let n = space.len();
        let mut worst = 0.0f64;
        for x in 0..n {
            let row: f64 = (0..n).map(|y| self.matrix[(x, y)]).sum();
            worst = worst.max((row - mu0.values()[x] * space.measure()[x]).abs());
            let col: f64 = (0..n).map(|y| self.matrix[(y, x)]).sum();
            worst = worst.max((col - mu1.values()[x] * space.measure()[x]).abs());
        }
        worst
    }

    /// Worst complementary-slackness defect: negative reduced cost anywhere,
    /// or a nonzero reduced cost carried by positive flow.
    pub fn slackness_defect(&self, space: &FiniteSpace) -> f64 {
        let n = space.len();
        let mut worst = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                let d = space.metric()[(x, y)];
                let reduced = d * d - self.row_potential[x] - self.col_potential[y];
                worst = worst.max(-reduced);
                if self.matrix[(x, y)] > 1e-12 {
                    worst = worst.max(reduced.abs());
                }
            }
        }
        worst
    }
}

/// Exact `W₂` by the dense transportation simplex (Dantzig entering rule
/// with lexicographic tie-breaks, falling back to Bland's rule to rule out
/// cycling). Deterministic: identical inputs produce identical couplings.
pub fn w2_distance(
    space: &FiniteSpace,
    mu0: &DensityField,
    mu1: &DensityField,
) -> Result<(f64, Coupling)> {
    if !mu0.is_probability() || !mu1.is_probability() {
        return Err(Error::InvalidInput("w2_distance needs probability fields".into()));
    }
    let n = space.len();
    if n > LP_SIZE_CAP {
        return Err(Error::SizeOverflow(format!("w2_distance capped at {LP_SIZE_CAP} points")));
    }
    let supply: Vec<f64> = (0..n).map(|x| mu0.values()[x] * space.measure()[x]).collect();
    let demand: Vec<f64> = (0..n).map(|y| mu1.values()[y] * space.measure()[y]).collect();
    let cost = DMatrix::from_fn(n, n, |x, y| {
        let d = space.metric()[(x, y)];
        d * d
    });
    let (flow, u, v) = transportation_simplex(&supply, &demand, &cost)?;
    let total: f64 = (0..n)
        .map(|x| (0..n).map(|y| flow[(x, y)] * cost[(x, y)]).sum::<f64>())
        .sum();
    let coupling = Coupling {
        matrix: flow,
        cost: total,
        row_potential: u,
        col_potential: v,
    };
    Ok((total.max(0.0).sqrt(), coupling))
}

/// Transportation simplex on a dense bipartite problem. Returns the optimal
/// flow and dual potentials `(u, v)` with `u_i + v_j = c_ij` on the basis.
fn transportation_simplex(
    supply: &[f64],
    demand: &[f64],
    cost: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let m = supply.len();
    let n = demand.len();
    let cost_scale = 1.0 + cost.amax();
    let enter_tol = 1e-12 * cost_scale;

    // Northwest-corner initial basis: exactly m + n - 1 cells.
    let mut flow = DMatrix::zeros(m, n);
    let mut basic = vec![false; m * n];
    {
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let q = a[i].min(b[j]).max(0.0);
            flow[(i, j)] = q;
            basic[i * n + j] = true;
            a[i] -= q;
            b[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if a[i] <= b[j] && i < m - 1 {
                i += 1;
            } else if j < n - 1 {
                j += 1;
            } else {
                i += 1;
            }
        }
    }

    let max_pivots = 200 * (m * n).max(64);
    let bland_after = max_pivots / 2;
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    for pivot in 0..=max_pivots {
        compute_potentials(&basic, cost, &mut u, &mut v)?;

        // entering cell
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -enter_tol;
        'scan: for i in 0..m {
            for j in 0..n {
                if basic[i * n + j] {
                    continue;
                }
                let reduced = cost[(i, j)] - u[i] - v[j];
                if pivot >= bland_after {
                    // Bland: first eligible index
                    if reduced < -enter_tol {
                        entering = Some((i, j));
                        break 'scan;
                    }
                } else if reduced < best {
                    best = reduced;
                    entering = Some((i, j));
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok((flow, u, v));
        };
        if pivot == max_pivots {
            return Err(Error::Numerical("transportation simplex hit pivot cap".into()));
        }

        // cycle: tree path from row ei to col ej, alternating signs
        let path = basis_path(&basic, m, n, ei, ej)?;
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (idx, &(i, j)) in path.iter().enumerate() {
            if idx % 2 == 0 {
                // minus cells
                let f = flow[(i, j)];
                let cell = i * n + j;
                if f < theta - 1e-18 || (f <= theta + 1e-18 && cell < leaving) {
                    theta = f;
                    leaving = cell;
                }
            }
        }
        let theta = theta.max(0.0);
        flow[(ei, ej)] += theta;
        for (idx, &(i, j)) in path.iter().enumerate() {
            if idx % 2 == 0 {
                flow[(i, j)] -= theta;
            } else {
                flow[(i, j)] += theta;
            }
        }
        flow[(leaving / n, leaving % n)] = 0.0;
        basic[ei * n + ej] = true;
        basic[leaving] = false;
    }
    unreachable!()
}

/// Dual potentials on the spanning-tree basis (`u_0 = 0`).
fn compute_potentials(
    basic: &[bool],
    cost: &DMatrix<f64>,
    u: &mut [f64],
    v: &mut [f64],
) -> Result<()> {
    let m = u.len();
    let n = v.len();
    let mut u_set = vec![false; m];
    let mut v_set = vec![false; n];
    let mut stack: Vec<(bool, usize)> = vec![(true, 0)];
    u[0] = 0.0;
    u_set[0] = true;
    while let Some((is_row, idx)) = stack.pop() {
        if is_row {
            for j in 0..n {
                if basic[idx * n + j] && !v_set[j] {
                    v[j] = cost[(idx, j)] - u[idx];
                    v_set[j] = true;
                    stack.push((false, j));
                }
            }
        } else {
            for i in 0..m {
                if basic[i * n + idx] && !u_set[i] {
                    u[i] = cost[(i, idx)] - v[idx];
                    u_set[i] = true;
                    stack.push((true, i));
                }
            }
        }
    }
    if u_set.iter().any(|&s| !s) || v_set.iter().any(|&s| !s) {
        return Err(Error::Numerical("transportation basis is not a spanning tree".into()));
    }
    Ok(())
}

/// Unique tree path from row `ei` to col `ej` as a list of basic cells;
/// even positions are the minus cells of the pivot cycle.
fn basis_path(basic: &[bool], m: usize, n: usize, ei: usize, ej: usize) -> Result<Vec<(usize, usize)>> {
    // nodes: 0..m rows, m..m+n cols
    let total = m + n;
    let mut parent = vec![usize::MAX; total];
    let mut parent_cell = vec![(0usize, 0usize); total];
    let mut visited = vec![false; total];
    let start = ei;
    let goal = m + ej;
    visited[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == goal {
            break;
        }
        if node < m {
            for j in 0..n {
                let other = m + j;
                if basic[node * n + j] && !visited[other] {
                    visited[other] = true;
                    parent[other] = node;
                    parent_cell[other] = (node, j);
                    queue.push_back(other);
                }
            }
        } else {
            let j = node - m;
            for i in 0..m {
                if basic[i * n + j] && !visited[i] {
                    visited[i] = true;
                    parent[i] = node;
                    parent_cell[i] = (i, j);
                    queue.push_back(i);
                }
            }
        }
    }
    if !visited[goal] {
        return Err(Error::Numerical("entering cell not connected to basis tree".into()));
    }
    let mut path = Vec::new();
    let mut node = goal;
    while node != start {
        path.push(parent_cell[node]);
        node = parent[node];
    }
    // path currently runs col ej -> row ei; reverse so it starts at the row
    path.reverse();
    Ok(path)
}

/// Weak-duality witness `∫ Q₁φ dμ₁ - ∫ φ dμ₀ <= ½ W₂²`.
pub fn kantorovich_dual_bound(
    space: &FiniteSpace,
    mu0: &DensityField,
    mu1: &DensityField,
    phi: &Field,
) -> Result<f64> {
    if !mu0.is_probability() || !mu1.is_probability() {
        return Err(Error::InvalidInput("kantorovich_dual_bound needs probability fields".into()));
    }
    let q1 = space.hopf_lax(phi, 1.0)?;
    let mut acc = 0.0;
    for x in 0..space.len() {
        acc += (q1[x] * mu1.values()[x] - phi[x] * mu0.values()[x]) * space.measure()[x];
    }
    Ok(acc)
}

/// Time-gridded curve of probability densities with optional potentials and
/// squared velocities.
#[derive(Debug, Clone)]
pub struct MeasureCurve {
    space: Arc<FiniteSpace>,
    times: Vec<f64>,
    densities: Vec<DensityField>,
    potentials: Option<Vec<Field>>,
    velocity_sq: Option<Vec<Field>>,
    /// Largest mass-compatibility defect subtracted from the discrete time
    /// derivatives when velocities were filled.
    compat_defect: Option<f64>,
}

impl MeasureCurve {
    pub fn from_densities(
        space: Arc<FiniteSpace>,
        times: Vec<f64>,
        densities: Vec<DensityField>,
    ) -> Result<Self> {
        if times.len() != densities.len() || times.len() < 2 {
            return Err(Error::InvalidInput("curve needs aligned times and densities".into()));
        }
        for rho in &densities {
            if (rho.mass() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "curve density has mass {} (must be 1 ± 1e-10)",
                    rho.mass()
                )));
            }
        }
        Ok(MeasureCurve {
            space,
            times,
            densities,
            potentials: None,
            velocity_sq: None,
            compat_defect: None,
        })
    }

    pub fn space(&self) -> &Arc<FiniteSpace> {
        &self.space
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn densities(&self) -> &[DensityField] {
        &self.densities
    }

    pub fn density(&self, k: usize) -> &DensityField {
        &self.densities[k]
    }

    pub fn potentials(&self) -> Option<&[Field]> {
        self.potentials.as_deref()
    }

    pub fn velocity_sq(&self) -> Option<&[Field]> {
        self.velocity_sq.as_deref()
    }

    pub fn compat_defect(&self) -> Option<f64> {
        self.compat_defect
    }

    /// Curve with the time direction reversed (velocities are invariant
    /// under reversal and are kept).
    pub fn reversed(&self) -> Self {
        let flip = |v: &Option<Vec<Field>>| v.as_ref().map(|f| f.iter().rev().cloned().collect());
        let horizon = *self.times.last().unwrap() + self.times.first().unwrap();
        MeasureCurve {
            space: Arc::clone(&self.space),
            times: self.times.iter().rev().map(|t| horizon - t).collect(),
            densities: self.densities.iter().rev().cloned().collect(),
            potentials: flip(&self.potentials),
            velocity_sq: flip(&self.velocity_sq),
            compat_defect: self.compat_defect,
        }
    }

    /// CSV matrix export (rows = times).
    pub fn to_csv(&self) -> String {
        let n = self.space.len();
        let mut out = String::from("t");
        for x in 0..n {
            out.push_str(&format!(",x{x}"));
        }
        out.push('\n');
        for (t, rho) in self.times.iter().zip(&self.densities) {
            out.push_str(&format!("{t}"));
            for v in rho.values().iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parse the CSV matrix format produced by [`Self::to_csv`] (velocities
    /// are not stored in the format; refill with [`curve_velocity`]).
    pub fn from_csv(space: Arc<FiniteSpace>, text: &str) -> Result<Self> {
        let n = space.len();
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty curve CSV".into()))?;
        let cols = header.split(',').count();
        if cols != n + 1 {
            return Err(Error::Parse(format!(
                "curve CSV has {cols} columns, expected {} for this space",
                n + 1
            )));
        }
        let mut times = Vec::new();
        let mut densities = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let bad = |what: &str| Error::Parse(format!("curve CSV row {}: {}", lineno + 2, what));
            let t: f64 = fields
                .next()
                .ok_or_else(|| bad("missing time"))?
                .parse()
                .map_err(|_| bad("bad time"))?;
            let mut vals = DVector::zeros(n);
            for x in 0..n {
                vals[x] = fields
                    .next()
                    .ok_or_else(|| bad("missing value"))?
                    .parse()
                    .map_err(|_| bad("bad value"))?;
            }
            times.push(t);
            densities.push(DensityField::new(&space, vals)?);
        }
        MeasureCurve::from_densities(space, times, densities)
    }
}

/// One quantile atom: (mass, source position, target position).
type Atom = (f64, f64, f64);

/// Quantile atoms shared by two measures on a line: masses with source and
/// target coordinates.
fn quantile_atoms(
    masses0: &[f64],
    pos0: &[f64],
    masses1: &[f64],
    pos1: &[f64],
) -> Vec<Atom> {
    // cumulative sums rescaled to end exactly at 1, so the two quantile
    // grids share the same total despite rounding in the inputs
    let cum = |masses: &[f64]| -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = masses
            .iter()
            .map(|&v| {
                acc += v;
                acc
            })
            .collect();
        if acc > 0.0 {
            for v in out.iter_mut() {
                *v /= acc;
            }
        }
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
        out
    };
    let c0 = cum(masses0);
    let c1 = cum(masses1);
    let mut levels: Vec<f64> = c0.iter().chain(c1.iter()).copied().collect();
    levels.push(0.0);
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut atoms = Vec::new();
    let (mut i0, mut i1) = (0usize, 0usize);
    for w in levels.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mass = hi - lo;
        if mass <= 1e-15 {
            continue;
        }
        while i0 + 1 < c0.len() && c0[i0] <= lo + 1e-15 {
            i0 += 1;
        }
        while i1 + 1 < c1.len() && c1[i1] <= lo + 1e-15 {
            i1 += 1;
        }
        atoms.push((mass, pos0[i0], pos1[i1]));
    }
    atoms
}

/// Deposit a point mass onto the grid by linear splitting between the two
/// neighbouring cells.
fn deposit(masses: &mut [f64], coords: &[f64], circle_len: Option<f64>, pos: f64, mass: f64) {
    let n = coords.len();
    match circle_len {
        None => {
            if pos <= coords[0] {
                masses[0] += mass;
                return;
            }
            if pos >= coords[n - 1] {
                masses[n - 1] += mass;
                return;
            }
            let k = coords.partition_point(|&c| c <= pos).saturating_sub(1);
            let gap = coords[k + 1] - coords[k];
            let lam = ((pos - coords[k]) / gap).clamp(0.0, 1.0);
            masses[k] += mass * (1.0 - lam);
            masses[k + 1] += mass * lam;
        }
        Some(len) => {
            let p = pos.rem_euclid(len);
            let k = match coords.partition_point(|&c| c <= p + 1e-15) {
                0 => n - 1,
                idx => idx - 1,
            };
            let next = (k + 1) % n;
            let gap = if next == 0 {
                coords[0] + len - coords[k]
            } else {
                coords[next] - coords[k]
            };
            let lam = (((p - coords[k]).rem_euclid(len)) / gap).clamp(0.0, 1.0);
            masses[k] += mass * (1.0 - lam);
            masses[next] += mass * lam;
        }
    }
}

/// Displacement interpolation on a tagged 1-D grid by linear interpolation
/// of quantile atoms, re-binned to the grid; on circles the fundamental
/// domain (cut edge) is chosen to minimize the quantile-coupling cost.
pub fn geodesic_1d(
    space: &Arc<FiniteSpace>,
    rho0: &DensityField,
    rho1: &DensityField,
    intervals: usize,
) -> Result<MeasureCurve> {
    if intervals == 0 {
        return Err(Error::InvalidInput("geodesic needs at least one interval".into()));
    }
    if !rho0.is_probability() || !rho1.is_probability() {
        return Err(Error::InvalidInput("geodesic endpoints must be probability fields".into()));
    }
    let one_dim = space
        .one_dim()
        .ok_or_else(|| Error::InvalidInput("geodesic_1d needs a tagged 1-D grid space".into()))?;
    let n = space.len();
    let masses0: Vec<f64> = (0..n).map(|x| rho0.values()[x] * space.measure()[x]).collect();
    let masses1: Vec<f64> = (0..n).map(|x| rho1.values()[x] * space.measure()[x]).collect();

    let (atoms, coords, circle_len) = match one_dim {
        OneDim::Path { coords } => {
            (quantile_atoms(&masses0, coords, &masses1, coords), coords.clone(), None)
        }
        OneDim::Circle { coords, length } => {
            // try every cut between consecutive grid points
            let mut best: Option<(f64, Vec<Atom>)> = None;
            for cut in 0..n {
                // unrolled coordinates starting at grid index `cut`
                let unrolled: Vec<f64> = (0..n)
                    .map(|k| {
                        let idx = (cut + k) % n;
                        let mut c = coords[idx];
                        if idx < cut {
                            c += length;
                        }
                        c
                    })
                    .collect();
                let rot = |m: &[f64]| -> Vec<f64> { (0..n).map(|k| m[(cut + k) % n]).collect() };
                let atoms = quantile_atoms(&rot(&masses0), &unrolled, &rot(&masses1), &unrolled);
                let cost: f64 = atoms.iter().map(|&(m, a, b)| m * (b - a) * (b - a)).sum();
                if best.as_ref().map(|(c, _)| cost < *c).unwrap_or(true) {
                    best = Some((cost, atoms));
                }
            }
            (best.unwrap().1, coords.clone(), Some(*length))
        }
    };

    let mut times = Vec::with_capacity(intervals + 1);
    let mut densities = Vec::with_capacity(intervals + 1);
    for j in 0..=intervals {
        let s = j as f64 / intervals as f64;
        let mut masses = vec![0.0; n];
        for &(mass, a, b) in &atoms {
            deposit(&mut masses, &coords, circle_len, (1.0 - s) * a + s * b, mass);
        }
        let values = DVector::from_fn(n, |x, _| masses[x] / space.measure()[x]);
        densities.push(DensityField::new(space, values)?);
        times.push(s);
    }
    MeasureCurve::from_densities(Arc::clone(space), times, densities)
}

/// Fill potentials and squared velocities along a curve: centered-difference
/// time derivatives (one-sided at the endpoints) are made compatible by
/// subtracting the per-component mean defect, lifted to potentials by
/// weighted Poisson solves, and squared through `Γ`.
pub fn curve_velocity(curve: MeasureCurve) -> Result<MeasureCurve> {
    let space = Arc::clone(curve.space());
    let nt = curve.times().len();
    let n = space.len();
    let mut potentials = Vec::with_capacity(nt);
    let mut velocity_sq = Vec::with_capacity(nt);
    let mut worst_defect = 0.0f64;
    for k in 0..nt {
        let ell_raw: Field = if k == 0 {
            (curve.density(1).values() - curve.density(0).values())
                / (curve.times()[1] - curve.times()[0])
        } else if k == nt - 1 {
            (curve.density(nt - 1).values() - curve.density(nt - 2).values())
                / (curve.times()[nt - 1] - curve.times()[nt - 2])
        } else {
            (curve.density(k + 1).values() - curve.density(k - 1).values())
                / (curve.times()[k + 1] - curve.times()[k - 1])
        };
        let op = WeightedOperator::new(&space, curve.density(k));
        // enforce compatibility per support component
        let comp = op.components();
        let n_comp = comp.iter().max().map(|&c| c + 1).unwrap_or(0);
        let mut sums = vec![0.0; n_comp];
        let mut weights = vec![0.0; n_comp];
        for x in 0..n {
            sums[comp[x]] += ell_raw[x] * space.measure()[x];
            weights[comp[x]] += space.measure()[x];
        }
        let mut ell = ell_raw;
        for x in 0..n {
            let c = comp[x];
            worst_defect = worst_defect.max(sums[c].abs());
            ell[x] -= sums[c] / weights[c];
        }
        let phi = op.poisson(&space, &ell)?;
        velocity_sq.push(op.gamma_on_support(&space, &phi));
        potentials.push(phi);
    }
    Ok(MeasureCurve {
        potentials: Some(potentials),
        velocity_sq: Some(velocity_sq),
        compat_defect: Some(worst_defect),
        ..curve
    })
}

/// Time weight of a weighted action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionWeight {
    /// `1`
    Constant,
    /// `ω(s) = 1 - s`
    OneMinusS,
    /// `ω(s) = s`
    S,
    /// Green kernel `g(t, ·)`
    Green(f64),
}

impl ActionWeight {
    fn eval(&self, s: f64) -> Result<f64> {
        Ok(match *self {
            ActionWeight::Constant => 1.0,
            ActionWeight::OneMinusS => 1.0 - s,
            ActionWeight::S => s,
            ActionWeight::Green(t) => green_weight(t, s)?,
        })
    }
}

/// Weighted action `Σ_s Δs ω(s) Σ_x Q(ρ_s) v²_s ρ_s m` with trapezoid time
/// quadrature; the density-weight product is evaluated as `Q(ρ)ρ = P(ρ)`,
/// which is finite down to `ρ = 0` for every model.
pub fn weighted_action(
    curve: &MeasureCurve,
    model: &EntropyModel,
    weight: ActionWeight,
) -> Result<f64> {
    let v2 = curve.velocity_sq().ok_or_else(|| {
        Error::InvalidInput("weighted_action needs velocities; call curve_velocity".into())
    })?;
    let space = curve.space();
    let times = curve.times();
    let nt = times.len();
    let mut acc = 0.0;
    for k in 0..nt {
        let quad = if k == 0 {
            0.5 * (times[1] - times[0])
        } else if k == nt - 1 {
            0.5 * (times[nt - 1] - times[nt - 2])
        } else {
            0.5 * (times[k + 1] - times[k - 1])
        };
        let w = weight.eval(times[k])?;
        if w == 0.0 {
            continue;
        }
        let rho = curve.density(k).values();
        let mut slice = 0.0;
        for x in 0..space.len() {
            slice += model.p(rho[x]) * v2[k][x] * space.measure()[x];
        }
        acc += quad * w * slice;
    }
    Ok(acc)
}

/// Kinetic action `A₂ = ∫∫ v² dμ_s ds` (weight 1, `Q ≡ 1`).
pub fn kinetic_action(curve: &MeasureCurve) -> Result<f64> {
    weighted_action(curve, &EntropyModel::linear(), ActionWeight::Constant)
}

/// Entropy functional `U(μ) = Σ U(ρ(x)) m(x)`.
pub fn entropy_functional(space: &FiniteSpace, model: &EntropyModel, rho: &DensityField) -> f64 {
    rho.values()
        .iter()
        .zip(space.measure().iter())
        .map(|(&r, &mm)| model.u(r) * mm)
        .sum()
}

/// Green-weighted convexity of the `N`-entropy along a velocity-filled curve:
/// `U_N(μ_t) <= (1-t) U_N(μ_0) + t U_N(μ_1) - K A^{(t)}_{Q_N}` at every
/// interior grid time, with `A^{(t)}` the Green-weighted action.
pub fn cdstar_convexity_check(
    curve: &MeasureCurve,
    k: f64,
    n_dim: f64,
    tol: f64,
) -> Result<CheckReport> {
    let model = EntropyModel::power(n_dim)?;
    let space = curve.space();
    let u0 = entropy_functional(space, &model, curve.density(0));
    let u1 = entropy_functional(space, &model, &curve.densities()[curve.times().len() - 1]);
    let dust = 1e-12 * (1.0 + u0.abs() + u1.abs());
    let mut worst = f64::INFINITY;
    let mut worst_t = 0.0;
    let mut residuals = Vec::new();
    for (idx, &t) in curve.times().iter().enumerate() {
        if t <= 0.0 || t >= 1.0 {
            residuals.push(0.0);
            continue;
        }
        let action = weighted_action(curve, &model, ActionWeight::Green(t))?;
        let ut = entropy_functional(space, &model, curve.density(idx));
        let margin = (1.0 - t) * u0 + t * u1 - k * action - ut + tol;
        residuals.push(margin);
        if margin < worst {
            worst = margin;
            worst_t = t;
        }
    }
    let mut report = CheckReport::new("cdstar-convexity", Verdict::from_bool(worst >= -dust), worst)
        .with_witness(Witness::time(worst_t))
        .with_residuals(residuals)
        .with_note("tol", tol)
        .with_note("K", k)
        .with_note("N", n_dim);
    if let Some(defect) = curve.compat_defect() {
        report = report.with_note("compat_defect", defect);
    }
    Ok(report)
}

/// Pointwise σ-coefficient form of the reduced curvature-dimension bound
/// along an optimal coupling:
/// `U_N(μ_s) <= N - N Σ π(x,y) [σ^{(1-s)}_{K/N}(d) ρ₀(x)^{-1/N} +
/// σ^{(s)}_{K/N}(d) ρ₁(y)^{-1/N}]`.
#[allow(clippy::too_many_arguments)]
pub fn cdstar_sigma_check(
    space: &FiniteSpace,
    mu0: &DensityField,
    mu1: &DensityField,
    mid: &DensityField,
    s: f64,
    coupling: &Coupling,
    k: f64,
    n_dim: f64,
    tol: f64,
) -> Result<CheckReport> {
    let model = EntropyModel::power(n_dim)?;
    let us = entropy_functional(space, &model, mid);
    let mut bound = n_dim;
    let mut infinite = false;
    'outer: for x in 0..space.len() {
        for y in 0..space.len() {
            let pi = coupling.matrix[(x, y)];
            if pi <= 0.0 {
                continue;
            }
            let d = space.metric()[(x, y)];
            let s0 = sigma_coeff(k / n_dim, 1.0 - s, d)?;
            let s1 = sigma_coeff(k / n_dim, s, d)?;
            if s0.is_infinite() || s1.is_infinite() {
                infinite = true;
                break 'outer;
            }
            bound -= n_dim
                * pi
                * (s0.finite() * mu0.values()[x].powf(-1.0 / n_dim)
                    + s1.finite() * mu1.values()[y].powf(-1.0 / n_dim));
        }
    }
    let margin = if infinite { f64::INFINITY } else { bound - us + tol };
    Ok(CheckReport::new("cdstar-sigma", Verdict::from_bool(margin >= 0.0), margin)
        .with_note("entropy_mid", us)
        .with_note("sigma_bound", if infinite { f64::INFINITY } else { bound }))
}

/// Evolution variational inequality along the nonlinear flow on a 1-D grid:
/// `½ d⁺/dt W₂²(μ_t, ν) + U(μ_t) <= U(ν) - K A^{ωQ}(μ_t → ν) + tol`.
#[allow(clippy::too_many_arguments)]
pub fn evi_check(
    space: &Arc<FiniteSpace>,
    model: &EntropyModel,
    rho_bar: &DensityField,
    nu: &DensityField,
    k: f64,
    horizon: f64,
    steps: usize,
    tol: f64,
) -> Result<CheckReport> {
    if space.one_dim().is_none() {
        return Err(Error::InvalidInput("evi_check needs a tagged 1-D grid space".into()));
    }
    let traj = evolve(space, model, rho_bar, horizon, steps)?;
    let tau = traj.step_size();
    let u_nu = entropy_functional(space, model, nu);
    let probes: Vec<usize> = pick_probes(steps, 8);
    let mut worst = f64::INFINITY;
    let mut worst_t = 0.0;
    let mut worst_defect = 0.0f64;
    let mut residuals = Vec::with_capacity(probes.len());
    for &kidx in &probes {
        let mu_t = traj.state(kidx);
        let mu_next = traj.state(kidx + 1);
        let (w_now, _) = w2_distance(space, mu_t, nu)?;
        let (w_next, _) = w2_distance(space, mu_next, nu)?;
        let slope = 0.5 * (w_next * w_next - w_now * w_now) / tau;
        let u_mu = entropy_functional(space, model, mu_t);
        let geo = curve_velocity(geodesic_1d(space, mu_t, nu, 16)?)?;
        let action = weighted_action(&geo, model, ActionWeight::OneMinusS)?;
        let margin = u_nu - k * action - slope - u_mu + tol;
        residuals.push(margin);
        if margin < worst {
            worst = margin;
            worst_t = traj.times()[kidx];
        }
        worst_defect = worst_defect.max(geo.compat_defect().unwrap_or(0.0));
    }
    Ok(CheckReport::new("evi", Verdict::from_bool(worst >= 0.0), worst)
        .with_witness(Witness::time(worst_t))
        .with_residuals(residuals)
        .with_note("tol", tol)
        .with_note("tau", tau)
        .with_note("compat_defect", worst_defect))
}

/// `W₂` contraction along two evolutions:
/// `W₂(μ_t, ν_t) <= e^{-Λt} W₂(μ_0, ν_0) (1 + tol)` with `Λ = inf K Q`.
#[allow(clippy::too_many_arguments)]
pub fn contraction_check(
    space: &Arc<FiniteSpace>,
    model: &EntropyModel,
    rho_bar: &DensityField,
    sigma_bar: &DensityField,
    k: f64,
    horizon: f64,
    steps: usize,
    tol: f64,
) -> Result<CheckReport> {
    let lambda = model.lambda(k);
    let traj_mu = evolve(space, model, rho_bar, horizon, steps)?;
    let traj_nu = evolve(space, model, sigma_bar, horizon, steps)?;
    let (w0, _) = w2_distance(space, rho_bar, sigma_bar)?;
    let probes = pick_probes(steps, 12);
    let mut worst_ratio = 0.0f64;
    let mut worst_t = 0.0;
    let mut residuals = Vec::with_capacity(probes.len());
    for &kidx in &probes {
        let t = traj_mu.times()[kidx + 1];
        let (wt, _) = w2_distance(space, traj_mu.state(kidx + 1), traj_nu.state(kidx + 1))?;
        let bound = (-lambda * t).exp() * w0;
        let ratio = if bound > 0.0 {
            wt / bound
        } else if wt > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        residuals.push(ratio - 1.0);
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_t = t;
        }
    }
    let margin = tol - (worst_ratio - 1.0);
    Ok(CheckReport::new("w2-contraction", Verdict::from_bool(worst_ratio <= 1.0 + tol), margin)
        .with_witness(Witness::time(worst_t))
        .with_residuals(residuals)
        .with_note("lambda", lambda)
        .with_note("w2_initial", w0)
        .with_note("tol", tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotonicityVariant {
    /// Every slice evolved by the same time: `μ_{s,t} = S_t ρ_s`.
    Uniform,
    /// Slice `s` evolved by `s·t`: `μ_{s,t} = S_{st} ρ_s`, with endpoint
    /// entropy bookkeeping.
    Scaled,
}

/// Action monotonicity of a curve under the semigroup: for the uniform
/// variant `½A₂(t₁) + K ∫_{t₀}^{t₁} A_Q dt <= ½A₂(t₀)`; the scaled variant
/// adds the endpoint entropies
/// `½A₂(t) + t U(μ_{1,t}) + K ∫_0^t A_{sQ} dr <= ½A₂(0) + t U(μ_{0,0})`.
#[allow(clippy::too_many_arguments)]
pub fn curve_action_monotonicity_check(
    curve: &MeasureCurve,
    model: &EntropyModel,
    horizon: f64,
    evolution_samples: usize,
    k: f64,
    variant: MonotonicityVariant,
    tol: f64,
) -> Result<CheckReport> {
    if evolution_samples == 0 {
        return Err(Error::InvalidInput("needs at least one evolution sample".into()));
    }
    let space = curve.space();
    let slice_times = curve.times().to_vec();
    let base_steps = 32usize;

    let evolved_at = |t: f64| -> Result<MeasureCurve> {
        let mut states = Vec::with_capacity(slice_times.len());
        for (i, s) in slice_times.iter().enumerate() {
            let local_t = match variant {
                MonotonicityVariant::Uniform => t,
                MonotonicityVariant::Scaled => s * t,
            };
            if local_t <= 0.0 {
                states.push(curve.density(i).clone());
            } else {
                let traj = evolve(space, model, curve.density(i), local_t, base_steps)?;
                states.push(traj.final_state().clone());
            }
        }
        curve_velocity(MeasureCurve::from_densities(
            Arc::clone(space),
            slice_times.clone(),
            states,
        )?)
    };

    let weight = match variant {
        MonotonicityVariant::Uniform => ActionWeight::Constant,
        MonotonicityVariant::Scaled => ActionWeight::S,
    };
    let dt = horizon / evolution_samples as f64;
    let mut kinetic = Vec::with_capacity(evolution_samples + 1);
    let mut weighted = Vec::with_capacity(evolution_samples + 1);
    let mut end_entropy = Vec::with_capacity(evolution_samples + 1);
    for j in 0..=evolution_samples {
        let evolved = evolved_at(j as f64 * dt)?;
        kinetic.push(kinetic_action(&evolved)?);
        weighted.push(weighted_action(&evolved, model, weight)?);
        let last = evolved.densities().last().unwrap();
        end_entropy.push(entropy_functional(space, model, last));
    }

    let mut worst = f64::INFINITY;
    let mut worst_t = 0.0;
    let mut residuals = Vec::new();
    match variant {
        MonotonicityVariant::Uniform => {
            for j in 1..=evolution_samples {
                let integral = 0.5 * dt * (weighted[j - 1] + weighted[j]);
                let margin = 0.5 * kinetic[j - 1] - 0.5 * kinetic[j] - k * integral + tol;
                residuals.push(margin);
                if margin < worst {
                    worst = margin;
                    worst_t = j as f64 * dt;
                }
            }
        }
        MonotonicityVariant::Scaled => {
            let u00 = entropy_functional(space, model, curve.density(0));
            let mut integral = 0.0;
            for j in 1..=evolution_samples {
                integral += 0.5 * dt * (weighted[j - 1] + weighted[j]);
                let t = j as f64 * dt;
                let margin = 0.5 * kinetic[0] + t * u00
                    - (0.5 * kinetic[j] + t * end_entropy[j] + k * integral)
                    + tol;
                residuals.push(margin);
                if margin < worst {
                    worst = margin;
                    worst_t = t;
                }
            }
        }
    }
    Ok(CheckReport::new("action-monotonicity", Verdict::from_bool(worst >= 0.0), worst)
        .with_witness(Witness::time(worst_t))
        .with_residuals(residuals)
        .with_note("tol", tol)
        .with_note("K", k))
}

/// Evenly spaced step indices `0 <= k < steps`, at most `max_probes` of them.
fn pick_probes(steps: usize, max_probes: usize) -> Vec<usize> {
    if steps <= max_probes {
        (0..steps).collect()
    } else {
        (0..max_probes).map(|i| i * steps / max_probes).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::gen;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prob(space: &FiniteSpace, vals: &[f64]) -> DensityField {
        let raw = DensityField::new(space, DVector::from_row_slice(vals)).unwrap();
        raw.normalized(space).unwrap()
    }

    fn random_prob(space: &FiniteSpace, rng: &mut ChaCha8Rng) -> DensityField {
        let vals = DVector::from_fn(space.len(), |_, _| 0.05 + rng.gen::<f64>());
        DensityField::new(space, vals).unwrap().normalized(space).unwrap()
    }

    #[test]
    fn w2_identical_measures_is_zero() {
        let sp = gen::circle(8).unwrap();
        let mu = DensityField::uniform(&sp);
        let (w, coupling) = w2_distance(&sp, &mu, &mu).unwrap();
        assert!(w < 1e-9);
        for x in 0..8 {
            assert_abs_diff_eq!(
                coupling.matrix[(x, x)],
                mu.values()[x] * sp.measure()[x],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn w2_two_point_unit_transport() {
        let sp = gen::two_point();
        let mu0 = prob(&sp, &[1.0, 0.0]);
        let mu1 = prob(&sp, &[0.0, 1.0]);
        let (w, coupling) = w2_distance(&sp, &mu0, &mu1).unwrap();
        assert_abs_diff_eq!(w, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(coupling.matrix[(0, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn w2_three_point_line_split() {
        // masses 1/2 at the two ends to all at the middle: W₂² = 1
        let text =
            "node 0 1\nnode 1 1\nnode 2 1\n0 1 1.0\n1 2 1.0\ndist 0 1 1\ndist 1 2 1\ndist 0 2 2\n";
        let sp = crate::space::io::parse(text).unwrap();
        let mu0 = prob(&sp, &[0.5, 0.0, 0.5]);
        let mu1 = prob(&sp, &[0.0, 1.0, 0.0]);
        let (w, _) = w2_distance(&sp, &mu0, &mu1).unwrap();
        assert_abs_diff_eq!(w * w, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn w2_rejects_unnormalized() {
        let sp = gen::two_point();
        let bad = DensityField::new(&sp, DVector::from_row_slice(&[1.0, 1.0])).unwrap();
        let mu = DensityField::uniform(&sp);
        assert!(w2_distance(&sp, &bad, &mu).is_err());
    }

    #[test]
    fn w2_symmetry_triangle_and_certificates() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for seed in 0..6 {
            let n = 4 + (seed % 4) as usize;
            let sp = gen::erdos(n, 0.7, 300 + seed).unwrap();
            let a = random_prob(&sp, &mut rng);
            let b = random_prob(&sp, &mut rng);
            let c = random_prob(&sp, &mut rng);
            let (wab, cab) = w2_distance(&sp, &a, &b).unwrap();
            let (wba, _) = w2_distance(&sp, &b, &a).unwrap();
            let (wbc, _) = w2_distance(&sp, &b, &c).unwrap();
            let (wac, _) = w2_distance(&sp, &a, &c).unwrap();
            assert_abs_diff_eq!(wab, wba, epsilon = 1e-10);
            assert!(wac <= wab + wbc + 1e-10, "triangle violated");
            assert!(cab.marginal_error(&sp, &a, &b) < 1e-10);
            assert!(cab.slackness_defect(&sp) < 1e-9);
        }
    }

    #[test]
    fn dual_bound_never_exceeds_half_w2_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let sp = gen::erdos(6, 0.8, 15).unwrap();
        let a = random_prob(&sp, &mut rng);
        let b = random_prob(&sp, &mut rng);
        let (w, _) = w2_distance(&sp, &a, &b).unwrap();
        for _ in 0..50 {
            let phi = DVector::from_fn(6, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let bound = kantorovich_dual_bound(&sp, &a, &b, &phi).unwrap();
            assert!(bound <= 0.5 * w * w + 1e-10);
        }
        assert_abs_diff_eq!(
            kantorovich_dual_bound(&sp, &a, &b, &DVector::zeros(6)).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn dual_bound_scan_approaches_optimum_on_two_point() {
        let sp = gen::two_point();
        let mu0 = prob(&sp, &[1.0, 0.0]);
        let mu1 = prob(&sp, &[0.0, 1.0]);
        let (w, _) = w2_distance(&sp, &mu0, &mu1).unwrap();
        let mut best = f64::NEG_INFINITY;
        let mut c = -2.0;
        while c <= 2.0 {
            let phi = DVector::from_row_slice(&[0.0, -c]);
            best = best.max(kantorovich_dual_bound(&sp, &mu0, &mu1, &phi).unwrap());
            c += 0.01;
        }
        assert!(best <= 0.5 * w * w + 1e-10);
        assert!((best - 0.5 * w * w).abs() < 1e-6, "scan best {best}");
    }

    #[test]
    fn dual_bound_identical_measures_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sp = gen::circle(6).unwrap();
        let mu = random_prob(&sp, &mut rng);
        for _ in 0..20 {
            let phi = DVector::from_fn(6, |_, _| rng.gen::<f64>());
            assert!(kantorovich_dual_bound(&sp, &mu, &mu, &phi).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn geodesic_constant_curve() {
        let sp = Arc::new(gen::path(9).unwrap());
        let mu = DensityField::uniform(&sp);
        let curve = geodesic_1d(&sp, &mu, &mu, 4).unwrap();
        for rho in curve.densities() {
            assert!((rho.values() - mu.values()).amax() < 1e-12);
        }
    }

    #[test]
    fn geodesic_point_mass_translates() {
        let sp = Arc::new(gen::path(11).unwrap());
        let mut v0 = vec![0.0; 11];
        v0[0] = 1.0;
        let mut v1 = vec![0.0; 11];
        v1[10] = 1.0;
        let mu0 = prob(&sp, &v0);
        let mu1 = prob(&sp, &v1);
        let curve = geodesic_1d(&sp, &mu0, &mu1, 10).unwrap();
        // at s = j/10 the atom sits exactly at grid point j
        for (j, rho) in curve.densities().iter().enumerate() {
            let mass_at = rho.values()[j] * sp.measure()[j];
            assert_abs_diff_eq!(mass_at, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn geodesic_endpoints_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let sp = Arc::new(gen::circle(16).unwrap());
        let mu0 = random_prob(&sp, &mut rng);
        let mu1 = random_prob(&sp, &mut rng);
        let curve = geodesic_1d(&sp, &mu0, &mu1, 8).unwrap();
        assert!((curve.density(0).values() - mu0.values()).amax() < 1e-10);
        assert!((curve.density(8).values() - mu1.values()).amax() < 1e-10);
    }

    #[test]
    fn geodesic_is_approximately_constant_speed() {
        let sp = Arc::new(gen::circle(64).unwrap());
        let n = 64;
        let bump = |c: f64| -> DensityField {
            let vals = DVector::from_fn(n, |x, _| {
                let pos = x as f64 / n as f64;
                let d = (pos - c).abs().min(1.0 - (pos - c).abs());
                (-50.0 * d * d).exp()
            });
            DensityField::new(&sp, vals).unwrap().normalized(&sp).unwrap()
        };
        let mu0 = bump(0.2);
        let mu1 = bump(0.45);
        let curve = geodesic_1d(&sp, &mu0, &mu1, 8).unwrap();
        let (w01, _) = w2_distance(&sp, &mu0, &mu1).unwrap();
        let (w_half, _) = w2_distance(&sp, &mu0, curve.density(4)).unwrap();
        let h = 1.0 / 64.0;
        assert!(
            (w_half / w01 - 0.5).abs() <= 2.0 * h,
            "midpoint ratio {} not within 2h of 1/2",
            w_half / w01
        );
    }

    #[test]
    fn circle_geodesic_crosses_the_seam() {
        // mass near the top of the circle moving just past zero goes the
        // short way across the seam
        let sp = Arc::new(gen::circle(32).unwrap());
        let mut v0 = vec![0.0; 32];
        v0[30] = 1.0;
        let mut v1 = vec![0.0; 32];
        v1[2] = 1.0;
        let mu0 = prob(&sp, &v0);
        let mu1 = prob(&sp, &v1);
        let curve = geodesic_1d(&sp, &mu0, &mu1, 4).unwrap();
        let mid = curve.density(2);
        assert!(mid.values()[0] > 0.5, "geodesic went the long way");
    }

    #[test]
    fn velocity_of_constant_curve_vanishes() {
        let sp = Arc::new(gen::path(7).unwrap());
        let mu = DensityField::uniform(&sp);
        let curve = curve_velocity(geodesic_1d(&sp, &mu, &mu, 5).unwrap()).unwrap();
        for v2 in curve.velocity_sq().unwrap() {
            assert!(v2.amax() < 1e-18);
        }
    }

    #[test]
    fn velocity_dual_route_matches_pde_on_heat_curve() {
        // along a heat-flow curve, E*_ρ(ℓ) from time differences approaches
        // E*_ρ(Δρ) from the PDE right-hand side
        let sp = Arc::new(gen::circle(24).unwrap());
        let model = EntropyModel::linear();
        let vals = DVector::from_fn(24, |x, _| {
            1.0 + 0.4 * (2.0 * std::f64::consts::PI * x as f64 / 24.0).sin()
        });
        let rho0 = DensityField::new(&sp, vals).unwrap().normalized(&sp).unwrap();
        let steps = 64;
        let traj = evolve(&sp, &model, &rho0, 0.005, steps).unwrap();
        let curve = curve_velocity(
            MeasureCurve::from_densities(
                Arc::clone(&sp),
                traj.times().to_vec(),
                traj.states().to_vec(),
            )
            .unwrap(),
        )
        .unwrap();
        let k = steps / 2;
        let op = WeightedOperator::new(&sp, traj.state(k));
        let from_curve =
            op.energy(&curve.potentials().unwrap()[k], &curve.potentials().unwrap()[k]);
        let lap = sp.laplacian(traj.state(k).values());
        let from_pde = op.dual_energy(&sp, &lap).unwrap();
        assert!(
            (from_curve - from_pde).abs() <= 0.05 * from_pde.abs().max(1e-12),
            "dual energies differ: {from_curve} vs {from_pde}"
        );
    }

    #[test]
    fn translating_bump_action_matches_speed() {
        let sp = Arc::new(gen::circle(64).unwrap());
        let n = 64;
        let bump = |c: f64| -> DensityField {
            let vals = DVector::from_fn(n, |x, _| {
                let pos = x as f64 / n as f64;
                let d = (pos - c).abs().min(1.0 - (pos - c).abs());
                (-40.0 * d * d).exp()
            });
            DensityField::new(&sp, vals).unwrap().normalized(&sp).unwrap()
        };
        let shift = 0.25;
        let curve =
            curve_velocity(geodesic_1d(&sp, &bump(0.3), &bump(0.3 + shift), 16).unwrap()).unwrap();
        let action = kinetic_action(&curve).unwrap();
        let h = 1.0 / 64.0;
        assert!(
            (action - shift * shift).abs() <= 5.0 * h,
            "action {action} vs squared speed {}",
            shift * shift
        );
    }

    #[test]
    fn weighted_action_constant_weight_reproduces_w2() {
        let sp = Arc::new(gen::circle(64).unwrap());
        let n = 64;
        let vals0 = DVector::from_fn(n, |x, _| {
            1.0 + 0.5 * (2.0 * std::f64::consts::PI * x as f64 / n as f64).sin()
        });
        let vals1 = DVector::from_fn(n, |x, _| {
            1.0 + 0.5 * (2.0 * std::f64::consts::PI * x as f64 / n as f64).cos()
        });
        let mu0 = DensityField::new(&sp, vals0).unwrap().normalized(&sp).unwrap();
        let mu1 = DensityField::new(&sp, vals1).unwrap().normalized(&sp).unwrap();
        let curve = curve_velocity(geodesic_1d(&sp, &mu0, &mu1, 16).unwrap()).unwrap();
        let action = kinetic_action(&curve).unwrap();
        let (w, _) = w2_distance(&sp, &mu0, &mu1).unwrap();
        let h = 1.0 / n as f64;
        assert!(
            (action - w * w).abs() <= 10.0 * h * (1.0 + w * w),
            "kinetic action {action} vs W₂² {}",
            w * w
        );
    }

    #[test]
    fn green_weight_action_of_constant_integrand() {
        // green(t) weight with constant slice integrand c gives c·t(1-t)/2
        let sp = Arc::new(gen::circle(8).unwrap());
        let mu = DensityField::uniform(&sp);
        let mut curve = curve_velocity(geodesic_1d(&sp, &mu, &mu, 64).unwrap()).unwrap();
        // overwrite velocities with a constant integrand: v² = 1 everywhere
        let ones = vec![DVector::from_element(8, 1.0); curve.times().len()];
        curve.velocity_sq = Some(ones);
        let model = EntropyModel::linear();
        let t = 0.3;
        let action = weighted_action(&curve, &model, ActionWeight::Green(t)).unwrap();
        // Σ P(ρ)·1·m = Σ ρ m = 1 on every slice
        assert_abs_diff_eq!(action, t * (1.0 - t) / 2.0, epsilon = 1e-3);
    }

    #[test]
    fn time_reversal_action_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let sp = Arc::new(gen::circle(32).unwrap());
        let mu0 = random_prob(&sp, &mut rng);
        let mu1 = random_prob(&sp, &mut rng);
        let curve = curve_velocity(geodesic_1d(&sp, &mu0, &mu1, 10).unwrap()).unwrap();
        let model = EntropyModel::power(2.0).unwrap();
        let total = weighted_action(&curve, &model, ActionWeight::Constant).unwrap();
        let fwd = weighted_action(&curve, &model, ActionWeight::OneMinusS).unwrap();
        let rev = weighted_action(&curve.reversed(), &model, ActionWeight::OneMinusS).unwrap();
        assert_abs_diff_eq!(total, fwd + rev, epsilon = 1e-10);
    }

    #[test]
    fn cdstar_constant_curve_passes_with_zero_margin() {
        let sp = Arc::new(gen::circle(8).unwrap());
        let mu = DensityField::uniform(&sp);
        let curve = curve_velocity(geodesic_1d(&sp, &mu, &mu, 6).unwrap()).unwrap();
        let rep = cdstar_convexity_check(&curve, 1.0, 2.0, 0.0).unwrap();
        assert!(rep.passed());
        assert!(rep.margin.0.abs() < 1e-10);
    }

    #[test]
    fn cdstar_zero_curvature_is_entropy_convexity() {
        let sp = Arc::new(gen::circle(64).unwrap());
        let n = 64;
        let bump = |c: f64, w: f64| -> DensityField {
            let vals = DVector::from_fn(n, |x, _| {
                let pos = x as f64 / n as f64;
                let d = (pos - c).abs().min(1.0 - (pos - c).abs());
                0.05 + (-w * d * d).exp()
            });
            DensityField::new(&sp, vals).unwrap().normalized(&sp).unwrap()
        };
        let curve =
            curve_velocity(geodesic_1d(&sp, &bump(0.25, 30.0), &bump(0.6, 60.0), 12).unwrap())
                .unwrap();
        let tol = default_tol(&sp, 1.0 / 12.0);
        let rep = cdstar_convexity_check(&curve, 0.0, 2.0, tol).unwrap();
        assert!(rep.passed(), "margin {}", rep.margin.0);
    }

    #[test]
    fn cdstar_k_flip_shifts_margin_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sp = Arc::new(gen::circle(32).unwrap());
        let mu0 = random_prob(&sp, &mut rng);
        let mu1 = random_prob(&sp, &mut rng);
        let curve = curve_velocity(geodesic_1d(&sp, &mu0, &mu1, 8).unwrap()).unwrap();
        let k = 1.7;
        let plus = cdstar_convexity_check(&curve, k, 3.0, 0.0).unwrap();
        let minus = cdstar_convexity_check(&curve, -k, 3.0, 0.0).unwrap();
        let model = EntropyModel::power(3.0).unwrap();
        for (idx, &t) in curve.times().iter().enumerate() {
            if t <= 0.0 || t >= 1.0 {
                continue;
            }
            let action = weighted_action(&curve, &model, ActionWeight::Green(t)).unwrap();
            let diff = minus.residuals[idx].0 - plus.residuals[idx].0;
            assert_abs_diff_eq!(diff, 2.0 * k * action, epsilon = 1e-10);
        }
    }

    #[test]
    fn evi_stationary_uniform_passes() {
        let sp = Arc::new(gen::circle(16).unwrap());
        let model = EntropyModel::linear();
        let mu = DensityField::uniform(&sp);
        let rep = evi_check(&sp, &model, &mu, &mu, 0.0, 0.05, 8, 1e-9).unwrap();
        assert!(rep.passed(), "margin {}", rep.margin.0);
    }

    #[test]
    fn contraction_equal_inputs() {
        let sp = Arc::new(gen::circle(12).unwrap());
        let model = EntropyModel::linear();
        let mu = DensityField::uniform(&sp);
        let rep = contraction_check(&sp, &model, &mu, &mu, 0.0, 0.05, 8, 1e-9).unwrap();
        assert!(rep.passed());
    }

    #[test]
    fn action_monotonicity_constant_curve() {
        let sp = Arc::new(gen::circle(8).unwrap());
        let mu = DensityField::uniform(&sp);
        let curve = curve_velocity(geodesic_1d(&sp, &mu, &mu, 6).unwrap()).unwrap();
        let model = EntropyModel::linear();
        for variant in [MonotonicityVariant::Uniform, MonotonicityVariant::Scaled] {
            let rep =
                curve_action_monotonicity_check(&curve, &model, 0.02, 2, 0.0, variant, 1e-10)
                    .unwrap();
            assert!(rep.passed());
        }
    }

    #[test]
    fn default_tol_tracks_resolution() {
        let sp32 = gen::circle(32).unwrap();
        let sp64 = gen::circle(64).unwrap();
        assert!(default_tol(&sp64, 0.001) < default_tol(&sp32, 0.001));
    }

    #[test]
    fn constant_speed_defect_shrinks_under_refinement() {
        // max_t |W2(mu_0, mu_t) - t W2(mu_0, mu_1)| on the 1-D test family
        let defect = |n: usize| -> f64 {
            let sp = Arc::new(gen::circle(n).unwrap());
            let bump = |c: f64| -> DensityField {
                let vals = DVector::from_fn(n, |x, _| {
                    let pos = x as f64 / n as f64;
                    let d = (pos - c).abs().min(1.0 - (pos - c).abs());
                    (-50.0 * d * d).exp()
                });
                DensityField::new(&sp, vals).unwrap().normalized(&sp).unwrap()
            };
            let mu0 = bump(0.2);
            let mu1 = bump(0.45);
            let curve = geodesic_1d(&sp, &mu0, &mu1, 8).unwrap();
            let (w01, _) = w2_distance(&sp, &mu0, &mu1).unwrap();
            let mut worst = 0.0f64;
            for (idx, &t) in curve.times().iter().enumerate() {
                let (wt, _) = w2_distance(&sp, &mu0, curve.density(idx)).unwrap();
                worst = worst.max((wt - t * w01).abs());
            }
            worst
        };
        let d32 = defect(32);
        let d64 = defect(64);
        assert!(d64 < d32, "constant-speed defect should shrink: {d32} -> {d64}");
    }

    #[test]
    fn contraction_weaker_bound_for_negative_curvature() {
        let sp = Arc::new(gen::circle(24).unwrap());
        let model = EntropyModel::linear();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_prob(&sp, &mut rng);
        let b = random_prob(&sp, &mut rng);
        let tol = default_tol(&sp, 0.01 / 8.0);
        let flat = contraction_check(&sp, &model, &a, &b, 0.0, 0.01, 8, tol).unwrap();
        let weak = contraction_check(&sp, &model, &a, &b, -1.0, 0.01, 8, tol).unwrap();
        assert!(flat.passed());
        assert!(weak.passed());
        // negative curvature inflates the allowed bound: margin can only grow
        assert!(weak.margin.0 >= flat.margin.0 - 1e-12);
    }

    #[test]
    fn kinetic_action_decays_under_heat_flow_of_slices() {
        let sp = Arc::new(gen::circle(16).unwrap());
        let model = EntropyModel::linear();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mu0 = random_prob(&sp, &mut rng);
        let mu1 = random_prob(&sp, &mut rng);
        let curve = curve_velocity(geodesic_1d(&sp, &mu0, &mu1, 8).unwrap()).unwrap();
        let tol = default_tol(&sp, 1.0 / 8.0);
        let rep = curve_action_monotonicity_check(
            &curve,
            &model,
            0.01,
            3,
            0.0,
            MonotonicityVariant::Uniform,
            tol,
        )
        .unwrap();
        assert!(rep.passed(), "margin {}", rep.margin.0);
        let rep = curve_action_monotonicity_check(
            &curve,
            &model,
            0.01,
            3,
            0.0,
            MonotonicityVariant::Scaled,
            tol,
        )
        .unwrap();
        assert!(rep.passed(), "scaled margin {}", rep.margin.0);
    }

    #[test]
    fn cdstar_sigma_form_on_uniform_data() {
        let sp = Arc::new(gen::circle(8).unwrap());
        let mu = DensityField::uniform(&sp);
        let (_, coupling) = w2_distance(&sp, &mu, &mu).unwrap();
        // K = 0: σ coefficients reduce to (1-s, s) and the bound is the
        // entropy chord, which the constant curve meets with equality
        let rep =
            cdstar_sigma_check(&sp, &mu, &mu, &mu, 0.5, &coupling, 0.0, 2.0, 0.0).unwrap();
        assert!(rep.margin.0.abs() < 1e-10, "margin {}", rep.margin.0);
        // κδ² >= π² on a positive-flow cell flips to the +∞ branch and the
        // bound is vacuous
        let mut v0 = vec![0.0; 8];
        v0[0] = 1.0;
        let mut v1 = vec![0.0; 8];
        v1[4] = 1.0;
        let a = prob(&sp, &v0);
        let b = prob(&sp, &v1);
        let (_, cab) = w2_distance(&sp, &a, &b).unwrap();
        let rep = cdstar_sigma_check(&sp, &a, &b, &mu, 0.5, &cab, 1e6, 2.0, 0.0).unwrap();
        assert!(rep.passed());
        assert!(rep.margin.0.is_infinite());
    }

    #[test]
    fn curve_csv_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sp = Arc::new(gen::circle(12).unwrap());
        let mu0 = random_prob(&sp, &mut rng);
        let mu1 = random_prob(&sp, &mut rng);
        let curve = geodesic_1d(&sp, &mu0, &mu1, 5).unwrap();
        let back = MeasureCurve::from_csv(Arc::clone(&sp), &curve.to_csv()).unwrap();
        assert_eq!(back.times().len(), curve.times().len());
        for (a, b) in curve.densities().iter().zip(back.densities()) {
            assert!((a.values() - b.values()).amax() < 1e-15);
        }
        assert!(MeasureCurve::from_csv(Arc::clone(&sp), "t,x0\n0,1\n").is_err());
    }
}
