//! Search regions in normalized space: the full unit box, or an ellipsoid
//! intersected with it. Includes the minimum-volume enclosing ellipsoid and
//! uniform sampling from a region.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::OptError;

/// Smallest semi-axis of any ellipsoid, in normalized units.
pub const MIN_SEMI_AXIS: f64 = 1e-3;

/// Slack on the membership test to absorb rounding.
const MEMBERSHIP_SLACK: f64 = 1e-9;

/// `{z : (z - c)^T A (z - c) <= 1}` together with its cached decompositions.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    /// `A^{-1/2}`, mapping the unit ball onto the ellipsoid.
    inv_sqrt: DMatrix<f64>,
    /// Per-dimension extent of the ellipsoid clipped to the unit box.
    bounding_box: Vec<(f64, f64)>,
    log_det: f64,
}

impl Ellipsoid {
    /// Builds an ellipsoid from its center and shape matrix. The matrix is
    /// symmetrized and its eigenvalues clamped to `1 / MIN_SEMI_AXIS^2`.
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self, OptError> {
        let d = center.len();
        if shape.nrows() != d || shape.ncols() != d {
            return Err(OptError::InvalidRegion(format!(
                "shape matrix is {}x{}, need {d}x{d}",
                shape.nrows(),
                shape.ncols()
            )));
        }
        if center.iter().chain(shape.iter()).any(|v| !v.is_finite()) {
            return Err(OptError::InvalidRegion("non-finite ellipsoid".into()));
        }
        let sym = (&shape + shape.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(OptError::InvalidRegion(
                "shape matrix is not positive definite".into(),
            ));
        }
        let max_eig = 1.0 / (MIN_SEMI_AXIS * MIN_SEMI_AXIS);
        let lambda = eig.eigenvalues.map(|l| l.min(max_eig));
        let q = &eig.eigenvectors;
        let shape = q * DMatrix::from_diagonal(&lambda) * q.transpose();
        let inv_sqrt = q * DMatrix::from_diagonal(&lambda.map(|l| 1.0 / l.sqrt())) * q.transpose();
        let inv = q * DMatrix::from_diagonal(&lambda.map(|l| 1.0 / l)) * q.transpose();
        let bounding_box = (0..d)
            .map(|i| {
                let half = inv[(i, i)].sqrt();
                (
                    (center[i] - half).clamp(0.0, 1.0),
                    (center[i] + half).clamp(0.0, 1.0),
                )
            })
            .collect();
        let log_det = lambda.iter().map(|l| l.ln()).sum();
        Ok(Ellipsoid {
            center,
            shape,
            inv_sqrt,
            bounding_box,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn bounding_box(&self) -> &[(f64, f64)] {
        &self.bounding_box
    }

    /// `log det A`; volume is proportional to `exp(-log_det / 2)`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `(z - c)^T A (z - c)`.
    pub fn membership(&self, z: &[f64]) -> f64 {
        let d = self.dim();
        let diff: Vec<f64> = z
            .iter()
            .zip(self.center.iter())
            .map(|(a, b)| a - b)
            .collect();
        let mut total = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.shape[(i, j)] * diff[j];
            }
            total += diff[i] * row;
        }
        total
    }

    /// A point drawn uniformly from the ellipsoid (not clipped to the box).
    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = rng.gen::<f64>().powf(1.0 / d as f64);
        for v in &mut u {
            *v *= radius / norm;
        }
        (0..d)
            .map(|i| self.center[i] + (0..d).map(|j| self.inv_sqrt[(i, j)] * u[j]).sum::<f64>())
            .collect()
    }
}

/// Feasible set of one round.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// The whole initial box, `[0, 1]^dim`.
    FullBox { dim: usize },
    /// An ellipsoid intersected with the initial box.
    Ellipsoid(Ellipsoid),
}

fn in_unit_box(z: &[f64]) -> bool {
    z.iter().all(|v| (0.0..=1.0).contains(v))
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::FullBox { dim } => *dim,
            Region::Ellipsoid(e) => e.dim(),
        }
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && in_unit_box(z)
            && match self {
                Region::FullBox { .. } => true,
                Region::Ellipsoid(e) => e.membership(z) <= 1.0 + MEMBERSHIP_SLACK,
            }
    }

    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        match self {
            Region::FullBox { dim } => vec![(0.0, 1.0); *dim],
            Region::Ellipsoid(e) => e.bounding_box.clone(),
        }
    }

    /// Center for reporting; the box midpoint for the full box.
    pub fn center(&self) -> Vec<f64> {
        match self {
            Region::FullBox { dim } => vec![0.5; *dim],
            Region::Ellipsoid(e) => e.center.iter().copied().collect(),
        }
    }

    /// Shape matrix for reporting, row-major; all zeros for the full box.
    pub fn shape_row_major(&self) -> Vec<f64> {
        match self {
            Region::FullBox { dim } => vec![0.0; dim * dim],
            Region::Ellipsoid(e) => e.shape.transpose().iter().copied().collect(),
        }
    }

    /// Draws up to `count` points uniformly from the region.
    ///
    /// Ellipsoid draws are rejected against the box; if fewer than 1% of the
    /// first 1000 draws survive, sampling switches to the bounding box with
    /// membership rejection.
    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>, OptError> {
        const PROBE: usize = 1000;
        const DEGENERATE_LIMIT: usize = 100_000;
        let e = match self {
            Region::FullBox { dim } => {
                return Ok((0..count)
                    .map(|_| (0..*dim).map(|_| rng.gen::<f64>()).collect())
                    .collect());
            }
            Region::Ellipsoid(e) => e,
        };
        let mut out = Vec::with_capacity(count);
        let mut tries = 0usize;
        while out.len() < count && tries < PROBE {
            tries += 1;
            let z = e.sample(rng);
            if in_unit_box(&z) {
                out.push(z);
            }
        }
        let ellipsoid_rate = out.len() as f64 / tries as f64;
        let use_ellipsoid = ellipsoid_rate >= 0.01;
        let cap = DEGENERATE_LIMIT.max(count.saturating_mul(200));
        while out.len() < count && tries < cap {
            tries += 1;
            let z = if use_ellipsoid {
                e.sample(rng)
            } else {
                e.bounding_box
                    .iter()
                    .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                    .collect()
            };
            if self.contains(&z) {
                out.push(z);
            }
        }
        if out.is_empty() {
            return Err(OptError::DegenerateRegion { draws: tries });
        }
        Ok(out)
    }

    /// Gaussian perturbations of feasible `centers`, `count` in total, cycling
    /// through the centers and through `scales` (fractions of the bounding-box
    /// width). Infeasible draws are pulled back toward their center.
    pub fn sample_near<R: Rng>(
        &self,
        centers: &[Vec<f64>],
        count: usize,
        scales: &[f64],
        rng: &mut R,
    ) -> Vec<Vec<f64>> {
        let centers: Vec<&Vec<f64>> = centers.iter().filter(|c| self.contains(c)).collect();
        if centers.is_empty() || scales.is_empty() {
            return Vec::new();
        }
        let widths: Vec<f64> = self.bounding_box().iter().map(|(lo, hi)| hi - lo).collect();
        (0..count)
            .map(|i| {
                let center = centers[i % centers.len()];
                let scale = scales[(i / centers.len()) % scales.len()];
                let z: Vec<f64> = center
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| c + scale * w * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                self.project_from(center, &z)
            })
            .collect()
    }

    /// Moves `z` onto the region along the segment from the feasible point
    /// `anchor`, keeping it unchanged if already inside.
    pub fn project_from(&self, anchor: &[f64], z: &[f64]) -> Vec<f64> {
        if self.contains(z) {
            return z.to_vec();
        }
        let at =
            |t: f64| -> Vec<f64> { anchor.iter().zip(z).map(|(a, b)| a + t * (b - a)).collect() };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if self.contains(&at(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(lo)
    }
}

/// Khachiyan iterations with Todd-Yildirim away steps, in full-rank
/// coordinates. Returns `(c, A)` with every column of `p` satisfying
/// `(p - c)^T A (p - c) <= 1`.
fn khachiyan(p: &DMatrix<f64>, tol: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
    const MAX_ITERATIONS: usize = 100_000;
    let (d, n) = p.shape();
    let q = DMatrix::from_fn(d + 1, n, |i, j| if i < d { p[(i, j)] } else { 1.0 });
    let mut u = DVector::from_element(n, 1.0 / n as f64);
    let lifted = (d + 1) as f64;
    let target = lifted * (1.0 + tol);
    for _ in 0..MAX_ITERATIONS {
        let weighted = DMatrix::from_fn(d + 1, n, |a, j| u[j] * q[(a, j)]);
        let x = &weighted * q.transpose();
        let chol = x.cholesky()?;
        let solved = chol.solve(&q);
        let m: Vec<f64> = (0..n).map(|j| q.column(j).dot(&solved.column(j))).collect();
        let (up, m_up) = m
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if m_up <= target {
            break;
        }
        let away = m
            .iter()
            .copied()
            .enumerate()
            .filter(|&(j, _)| u[j] > 0.0)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match away {
            Some((down, m_down)) if lifted - m_down > m_up - lifted && m_down > 1.0 => {
                let step =
                    ((lifted - m_down) / (lifted * (m_down - 1.0))).min(u[down] / (1.0 - u[down]));
                u *= 1.0 + step;
                u[down] = (u[down] - step).max(0.0);
            }
            _ => {
                let step = (m_up - lifted) / (lifted * (m_up - 1.0));
                u *= 1.0 - step;
                u[up] += step;
            }
        }
    }
    let c = p * &u;
    let scatter = DMatrix::from_fn(d, d, |a, b| {
        (0..n).map(|j| u[j] * p[(a, j)] * p[(b, j)]).sum::<f64>() - c[a] * c[b]
    });
    let mut shape = scatter.try_inverse()? / d as f64;
    // rescale so the ellipsoid certainly contains every point
    let worst = (0..n)
        .map(|j| {
            let diff = p.column(j) - &c;
            diff.dot(&(&shape * &diff))
        })
        .fold(0.0, f64::max);
    if worst > 1.0 {
        shape /= worst;
    }
    Some((c, shape))
}

/// Minimum-volume ellipsoid enclosing `points` (Khachiyan's algorithm).
///
/// Point sets that do not span the space are handled in their affine hull;
/// the missing axes get semi-axis [`MIN_SEMI_AXIS`].
pub fn mvee(points: &[Vec<f64>], tol: f64) -> Result<Ellipsoid, OptError> {
    if points.len() < 2 {
        return Err(OptError::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(OptError::InvalidRegion(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) || d == 0 {
        return Err(OptError::InvalidRegion(
            "points have inconsistent dimensions".into(),
        ));
    }
    let n = points.len();
    let p = DMatrix::from_fn(d, n, |i, j| points[j][i]);
    let mean = p.column_mean();
    let centered = DMatrix::from_fn(d, n, |i, j| p[(i, j)] - mean[i]);
    let svd = centered.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let thin = 1.0 / (MIN_SEMI_AXIS * MIN_SEMI_AXIS);
    let spanning: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| {
            svd.singular_values[k] > 1e-9 * smax.max(1e-300) && svd.singular_values[k] > 1e-12
        })
        .collect();
    let r = spanning.len();

    if r == 0 {
        return Ellipsoid::new(mean, DMatrix::identity(d, d) * thin);
    }
    let basis = DMatrix::from_fn(d, r, |i, k| u[(i, spanning[k])]);
    let coords = basis.transpose() * &centered;
    let (c_r, a_r) = khachiyan(&coords, tol).ok_or_else(|| {
        OptError::InvalidRegion("enclosing ellipsoid iteration broke down".into())
    })?;
    let center = &mean + &basis * c_r;
    let mut shape = &basis * a_r * basis.transpose();
    if r < d {
        let complement = DMatrix::identity(d, d) - &basis * basis.transpose();
        shape += complement * thin;
    }
    Ellipsoid::new(center, shape)
}
