use rand::Rng;

use super::OtError;

/// Tolerance on `sum(weights) == 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

fn check_weights(weights: &[f64]) -> Result<(), OtError> {
    if weights.is_empty() {
        return Err(OtError::EmptySupport);
    }
    if let Some((i, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !w.is_finite() || **w < 0.0)
    {
        return Err(OtError::InvalidWeights(format!("weight {w} at index {i}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(OtError::InvalidWeights(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

fn normalize(weights: &mut [f64]) -> Result<(), OtError> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(OtError::InvalidWeights("negative or non-finite weight".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(OtError::InvalidWeights("weights have zero total mass".into()));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Probability weights over an indexed, discrete context set.
#[derive(Clone, Debug, PartialEq)]
pub struct Categorical {
    weights: Vec<f64>,
}

impl Categorical {
    pub fn new(weights: Vec<f64>) -> Result<Self, OtError> {
        check_weights(&weights)?;
        Ok(Self { weights })
    }

    /// Rescales nonnegative masses to sum to one.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self, OtError> {
        if weights.is_empty() {
            return Err(OtError::EmptySupport);
        }
        normalize(&mut weights)?;
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self, OtError> {
        if n == 0 {
            return Err(OtError::EmptySupport);
        }
        Ok(Self { weights: vec![1.0 / n as f64; n] })
    }

    pub fn dirac(n: usize, at: usize) -> Result<Self, OtError> {
        if at >= n {
            return Err(OtError::InvalidWeights(format!("dirac index {at} outside support of {n}")));
        }
        let mut weights = vec![0.0; n];
        weights[at] = 1.0;
        Ok(Self { weights })
    }

    /// Uniform over the listed indices of an `n`-point support.
    pub fn uniform_on(n: usize, indices: &[usize]) -> Result<Self, OtError> {
        if indices.is_empty() {
            return Err(OtError::EmptySupport);
        }
        let mut weights = vec![0.0; n];
        for &i in indices {
            if i >= n {
                return Err(OtError::InvalidWeights(format!("index {i} outside support of {n}")));
            }
            weights[i] += 1.0;
        }
        Self::normalized(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices carrying more than `floor` mass.
    pub fn support(&self, floor: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > floor).collect()
    }

    pub fn tv_distance(&self, other: &Categorical) -> f64 {
        0.5 * self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Pointwise mixture `(1 - alpha) * self + alpha * other`.
    pub fn mix(&self, other: &Categorical, alpha: f64) -> Result<Categorical, OtError> {
        if self.len() != other.len() {
            return Err(OtError::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
            .collect();
        Categorical::normalized(weights)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.weights, rng)
    }
}

/// A weighted point cloud in a continuous context space.
#[derive(Clone, Debug, PartialEq)]
pub struct Particles {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl Particles {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self, OtError> {
        if points.is_empty() {
            return Err(OtError::EmptySupport);
        }
        if points.len() != weights.len() {
            return Err(OtError::InvalidParticles(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(OtError::InvalidParticles("zero-dimensional points".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(OtError::DimensionMismatch { expected: dim, got: p.len() });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(OtError::InvalidParticles("non-finite coordinate".into()));
            }
        }
        check_weights(&weights)?;
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self, OtError> {
        let n = points.len();
        if n == 0 {
            return Err(OtError::EmptySupport);
        }
        Self::new(points, vec![1.0 / n as f64; n])
    }

    /// Like [`Particles::new`] but rescales the weights to sum to one.
    pub fn normalized(points: Vec<Vec<f64>>, mut weights: Vec<f64>) -> Result<Self, OtError> {
        normalize(&mut weights)?;
        Self::new(points, weights)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (p, w) in self.points.iter().zip(&self.weights) {
            for (acc, x) in m.iter_mut().zip(p) {
                *acc += w * x;
            }
        }
        m
    }

    /// Merges points closer than `tol` (max-norm), summing their weights.
    /// First occurrence order is preserved.
    pub fn consolidate(&self, tol: f64) -> Particles {
        let mut points: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (p, &w) in self.points.iter().zip(&self.weights) {
            let hit = points.iter().position(|q| {
                q.iter().zip(p).all(|(a, b)| (a - b).abs() <= tol)
            });
            match hit {
                Some(k) => weights[k] += w,
                None => {
                    points.push(p.clone());
                    weights.push(w);
                }
            }
        }
        Particles { points, weights }
    }

    /// Applies `f` to every point, keeping the weights.
    pub fn map_points<F>(&self, mut f: F) -> Result<Particles, OtError>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let points = self.points.iter().map(|p| f(p)).collect();
        Particles::new(points, self.weights.clone())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[f64] {
        &self.points[sample_index(&self.weights, rng)]
    }

    /// The `alpha`-weighted union `(1 - alpha) * self + alpha * other`.
    pub fn union_mix(&self, other: &Particles, alpha: f64) -> Result<Particles, OtError> {
        if self.dim() != other.dim() {
            return Err(OtError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let mut points = Vec::with_capacity(self.len() + other.len());
        let mut weights = Vec::with_capacity(self.len() + other.len());
        for (p, w) in self.points.iter().zip(&self.weights) {
            if (1.0 - alpha) * w > 0.0 {
                points.push(p.clone());
                weights.push((1.0 - alpha) * w);
            }
        }
        for (p, w) in other.points.iter().zip(&other.weights) {
            if alpha * w > 0.0 {
                points.push(p.clone());
                weights.push(alpha * w);
            }
        }
        Particles::normalized(points, weights)
    }
}

/// A task distribution in either representation.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskDistribution {
    Categorical(Categorical),
    Particles(Particles),
}

impl TaskDistribution {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskDistribution::Categorical(_) => "categorical",
            TaskDistribution::Particles(_) => "particles",
        }
    }

    pub fn as_categorical(&self) -> Option<&Categorical> {
        match self {
            TaskDistribution::Categorical(c) => Some(c),
            TaskDistribution::Particles(_) => None,
        }
    }

    pub fn as_particles(&self) -> Option<&Particles> {
        match self {
            TaskDistribution::Particles(p) => Some(p),
            TaskDistribution::Categorical(_) => None,
        }
    }
}

impl From<Categorical> for TaskDistribution {
    fn from(c: Categorical) -> Self {
        TaskDistribution::Categorical(c)
    }
}

impl From<Particles> for TaskDistribution {
    fn from(p: Particles) -> Self {
        TaskDistribution::Particles(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_weights() {
        assert!(Categorical::new(vec![0.5, 0.4]).is_err());
        assert!(Categorical::new(vec![1.5, -0.5]).is_err());
        assert!(Categorical::new(vec![]).is_err());
        assert!(Categorical::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn particles_reject_ragged_points() {
        let err = Particles::uniform(vec![vec![0.0, 1.0], vec![2.0]]).unwrap_err();
        assert_eq!(err, OtError::DimensionMismatch { expected: 2, got: 1 });
    }

    #[test]
    fn consolidate_merges_duplicates() {
        let p = Particles::new(
            vec![vec![0.0], vec![1.0], vec![0.0]],
            vec![0.25, 0.5, 0.25],
        )
        .unwrap();
        let c = p.consolidate(1e-12);
        assert_eq!(c.points(), &[vec![0.0], vec![1.0]]);
        assert_eq!(c.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn sampling_never_hits_zero_mass() {
        let c = Categorical::new(vec![0.0, 0.3, 0.0, 0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let i = c.sample(&mut rng);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn linear_mix_keeps_endpoint_support() {
        let a = Categorical::dirac(3, 0).unwrap();
        let b = Categorical::dirac(3, 2).unwrap();
        let m = a.mix(&b, 0.5).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.0, 0.5]);
    }
}
