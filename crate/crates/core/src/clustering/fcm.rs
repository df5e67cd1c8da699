use ndarray::Array2;
use serde::Serialize;

use super::{seeded_rng, ClusterError, DistanceMode, FeatureSpace, WeightedPoints, RESEED_ATTEMPTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FcmConfig {
    /// Number of clusters.
    pub c: usize,
    /// Fuzziness index, strictly greater than 1.
    pub q: f64,
    /// Stop once no membership moves by this much in one iteration.
    pub epsilon: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub mode: DistanceMode,
}

impl Default for FcmConfig {
    fn default() -> Self {
        FcmConfig { c: 2, q: 2.0, epsilon: 1e-5, max_iter: 300, seed: 1, mode: DistanceMode::Weighted }
    }
}

impl FcmConfig {
    pub fn with_c(self, c: usize) -> Self {
        FcmConfig { c, ..self }
    }

    pub fn with_mode(self, mode: DistanceMode) -> Self {
        FcmConfig { mode, ..self }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |msg: String| Err(ClusterError::InvalidConfig(msg));
        if self.c == 0 {
            return bad("c must be at least 1".into());
        }
        if !(self.q > 1.0 && self.q.is_finite()) {
            return bad(format!("q must be finite and > 1 (got {})", self.q));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad(format!("epsilon must be > 0 (got {})", self.epsilon));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmState {
    /// m×c, rows sum to 1.
    pub memberships: Array2<f64>,
    /// c×n, in the run's feature space.
    pub centers: Array2<f64>,
    /// Objective after initialization and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub mode: DistanceMode,
}

impl FcmState {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }

    pub fn clusters(&self) -> usize {
        self.centers.nrows()
    }
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Center update that re-seeds collapsed clusters at the point farthest from
/// its nearest center.
fn centers_with_reseed(
    space: &FeatureSpace,
    memberships: &mut Array2<f64>,
    previous: &mut Array2<f64>,
    q: f64,
) -> Result<Array2<f64>, ClusterError> {
    let c = previous.nrows();
    let mut attempts = 0;
    loop {
        match space.centers(memberships, q) {
            Ok(v) => return Ok(v),
            Err(cluster) if attempts == RESEED_ATTEMPTS => {
                return Err(ClusterError::DegenerateCluster { k: c, cluster })
            }
            Err(cluster) => {
                attempts += 1;
                let far = space.farthest_point(previous);
                previous.row_mut(cluster).assign(&space.points.row(far));
                *memberships = space.memberships(previous, q);
            }
        }
    }
}

/// Alternates center and membership updates from seeded data-row centers.
pub fn run_fcm<P: WeightedPoints + ?Sized>(data: &P, cfg: &FcmConfig) -> Result<FcmState, ClusterError> {
    cfg.validate()?;
    let space = FeatureSpace::new(data, cfg.mode);
    let m = space.len();
    if m == 0 {
        return Err(ClusterError::NoData);
    }
    if cfg.c > m {
        return Err(ClusterError::TooManyClusters { c: cfg.c, m });
    }

    let mut rng = seeded_rng(cfg.seed);
    let mut centers = space.initial_centers(cfg.c, &mut rng);
    let mut memberships = space.memberships(&centers, cfg.q);
    let mut trace = vec![space.objective(&memberships, &centers, cfg.q)];
    let mut iterations_run = 0;
    let mut converged = false;

    while iterations_run < cfg.max_iter {
        centers = centers_with_reseed(&space, &mut memberships, &mut centers, cfg.q)?;
        let next = space.memberships(&centers, cfg.q);
        let delta = max_abs_diff(&next, &memberships);
        memberships = next;
        trace.push(space.objective(&memberships, &centers, cfg.q));
        iterations_run += 1;
        if delta < cfg.epsilon {
            converged = true;
            break;
        }
    }

    Ok(FcmState { memberships, centers, objective_trace: trace, iterations_run, converged, mode: cfg.mode })
}
