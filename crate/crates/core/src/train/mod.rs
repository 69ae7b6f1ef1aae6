//! Training-side domain types: the verification region that grows towards a
//! target box, loss hyper-parameters, shaping weights for the control
//! objective, and the deduplicated counterexample store that couples the
//! learner to the verifier.

use std::collections::VecDeque;

use rand::Rng;

use crate::scalar::{s, Scalar};

mod guided;
mod loss;

pub use guided::{
    certify, guided_train, sample_start, train_on_dataset, EpisodeStats, GuidedConfig,
    GuidedOutcome, StartMode, VerificationReport,
};
pub use loss::{
    control_loss, control_loss_grads, loss_dec, loss_pos, lyapunov_loss, lyapunov_loss_grads,
    ControlBreakdown,
};

/// Axis-aligned box over which the Lyapunov conditions are enforced.
///
/// Training starts on a small box around the origin and multiplies the
/// bounds by `growth` each time the current box certifies, clamping to the
/// target box.  The origin must lie inside so scaling keeps it covered.
#[derive(Clone, Debug)]
pub struct Region<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub target_lower: Vec<T>,
    pub target_upper: Vec<T>,
    pub growth: T,
}

impl<T: Scalar> Region<T> {
    /// Builds a region and validates the box invariants.
    pub fn new(
        lower: Vec<T>,
        upper: Vec<T>,
        target_lower: Vec<T>,
        target_upper: Vec<T>,
        growth: T,
    ) -> Self {
        assert_eq!(lower.len(), upper.len(), "bound dimensions must agree");
        assert_eq!(lower.len(), target_lower.len(), "target dimensions must agree");
        assert_eq!(lower.len(), target_upper.len(), "target dimensions must agree");
        assert!(growth > T::one(), "growth factor must exceed one");
        for i in 0..lower.len() {
            assert!(lower[i] < upper[i], "lower bound must be below upper at {i}");
            assert!(lower[i] <= T::zero() && upper[i] >= T::zero(), "origin must be inside");
            assert!(
                target_lower[i] <= lower[i] && upper[i] <= target_upper[i],
                "current box must sit inside the target at {i}"
            );
        }
        Self { lower, upper, target_lower, target_upper, growth }
    }

    /// Symmetric cube `[-half, half]^dim` growing towards `[-target, target]^dim`.
    pub fn cube(dim: usize, half: T, target: T, growth: T) -> Self {
        assert!(half > T::zero() && target >= half, "need 0 < half <= target");
        Self::new(
            vec![-half; dim],
            vec![half; dim],
            vec![-target; dim],
            vec![target; dim],
            growth,
        )
    }

    /// Number of coordinates.
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Per-coordinate `(lower, upper)` pairs in the layout the encoder expects.
    pub fn bounds(&self) -> Vec<(T, T)> {
        self.lower.iter().zip(&self.upper).map(|(&l, &u)| (l, u)).collect()
    }

    /// Whether `x` lies inside the current box (boundary included).
    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&xi, (&l, &u))| l <= xi && xi <= u)
    }

    /// Uniform sample from the current box.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Vec<T> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| s::<T>(rng.gen_range(l.to_f64_lossy()..=u.to_f64_lossy())))
            .collect()
    }

    /// Whether the current box already equals the target box.
    pub fn at_target(&self) -> bool {
        self.lower == self.target_lower && self.upper == self.target_upper
    }

    /// Scales the box by the growth factor, clamping to the target.
    pub fn grow(&mut self) {
        for i in 0..self.dim() {
            self.lower[i] = (self.lower[i] * self.growth).max(self.target_lower[i]);
            self.upper[i] = (self.upper[i] * self.growth).min(self.target_upper[i]);
        }
    }

    /// Width of the current box relative to the target (1 once grown out).
    pub fn scale(&self) -> T {
        let mut ratio = T::zero();
        for i in 0..self.dim() {
            let cur = self.upper[i] - self.lower[i];
            let tgt = self.target_upper[i] - self.target_lower[i];
            ratio = ratio.max(cur / tgt);
        }
        ratio
    }
}

/// Weights and margins of the Lyapunov conditions.
#[derive(Clone, Copy, Debug)]
pub struct LyapunovHyper<T> {
    /// Positivity margin: require `V(x) >= eps1 * |x|_1`.
    pub eps1: T,
    /// Decrease margin: require `V(x+) <= (1 - eps2) * V(x)`.
    pub eps2: T,
    /// Hinge weight on the positivity violation.
    pub lambda_pos: T,
    /// Hinge weight on the decrease violation.
    pub lambda_dec: T,
}

impl<T: Scalar> Default for LyapunovHyper<T> {
    fn default() -> Self {
        Self {
            eps1: s(0.05),
            eps2: s(0.01),
            lambda_pos: T::one(),
            lambda_dec: T::one(),
        }
    }
}

/// Weights of the shaped control objective evaluated over a short rollout.
#[derive(Clone, Copy, Debug)]
pub struct ShapingWeights<T> {
    /// Minimum acceptable inter-vehicle distance in metres.
    pub threshold: T,
    /// Weight on the squared shortfall below `threshold`.
    pub safety: T,
    /// Weight on squared control effort.
    pub action: T,
    /// Weight on squared input changes between consecutive steps.
    pub slew: T,
    /// Weight on per-vehicle error-norm growth.
    pub stability: T,
    /// Rollout length in steps.
    pub horizon: usize,
}

impl<T: Scalar> Default for ShapingWeights<T> {
    fn default() -> Self {
        Self {
            threshold: s(0.25),
            safety: s(10.0),
            action: s(0.01),
            slew: s(0.1),
            stability: T::one(),
            horizon: 10,
        }
    }
}

impl<T: Scalar> ShapingWeights<T> {
    /// Defaults rescaled for the full-size simulation geometry.
    pub fn simulation_scale() -> Self {
        Self { threshold: s(2.0), ..Self::default() }
    }
}

/// Bounded FIFO store of states violating a Lyapunov condition.
///
/// A candidate within `radius` (max-norm) of a stored point is rejected so
/// the set does not fill up with near-duplicates from consecutive rollout
/// steps; once full, the oldest entry is evicted.
#[derive(Clone, Debug)]
pub struct CounterexampleSet<T> {
    points: VecDeque<(Vec<T>, T)>,
    capacity: usize,
    radius: T,
}

impl<T: Scalar> CounterexampleSet<T> {
    /// Empty set with the given capacity and dedup radius.
    pub fn new(capacity: usize, radius: T) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        assert!(radius >= T::zero(), "radius must be non-negative");
        Self { points: VecDeque::new(), capacity, radius }
    }

    /// Inserts a violating state; returns `false` if a near-duplicate exists.
    pub fn insert(&mut self, x: Vec<T>, violation: T) -> bool {
        let duplicate = self.points.iter().any(|(p, _)| {
            p.len() == x.len()
                && p.iter().zip(&x).all(|(&a, &b)| (a - b).abs() <= self.radius)
        });
        if duplicate {
            return false;
        }
        if self.points.len() == self.capacity {
            self.points.pop_front();
        }
        self.points.push_back((x, violation));
        true
    }

    /// Number of stored counterexamples.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Whether the set is empty.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Stored `(state, violation)` pairs, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &(Vec<T>, T)> {
        self.points.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn region_growth_clamps_to_target() {
        let mut r = Region::<f64>::cube(2, 0.05, 0.1, 1.5);
        assert!(!r.at_target());
        assert!((r.scale() - 0.5).abs() < 1e-12);
        r.grow();
        assert!((r.upper[0] - 0.075).abs() < 1e-12);
        r.grow();
        assert!(r.at_target(), "second growth should clamp at the target");
        assert_eq!(r.scale(), 1.0);
        r.grow();
        assert!(r.at_target(), "growth at the target is a fixed point");
    }

    #[test]
    fn region_contains_and_samples_its_box() {
        let r = Region::new(
            vec![-1.0, -0.5],
            vec![2.0, 0.5],
            vec![-2.0, -1.0],
            vec![4.0, 1.0],
            2.0,
        );
        assert!(r.contains(&[0.0, 0.0]));
        assert!(r.contains(&[2.0, -0.5]));
        assert!(!r.contains(&[2.1, 0.0]));
        assert!(!r.contains(&[0.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = r.sample_uniform(&mut rng);
            assert!(r.contains(&x));
        }
    }

    #[test]
    fn asymmetric_region_growth_keeps_origin() {
        let mut r = Region::<f64>::new(
            vec![-0.1, -0.2],
            vec![0.3, 0.1],
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
            3.0,
        );
        r.grow();
        assert!((r.lower[0] + 0.3).abs() < 1e-12);
        assert!((r.upper[0] - 0.9).abs() < 1e-12);
        assert!(r.contains(&[0.0, 0.0]));
    }

    #[test]
    #[should_panic(expected = "origin must be inside")]
    fn region_rejects_boxes_missing_the_origin() {
        let _ = Region::new(vec![0.5], vec![1.0], vec![0.0], vec![2.0], 1.5);
    }

    #[test]
    fn hyper_defaults_match_documented_values() {
        let h = LyapunovHyper::<f64>::default();
        assert_eq!((h.eps1, h.eps2, h.lambda_pos, h.lambda_dec), (0.05, 0.01, 1.0, 1.0));
        let w = ShapingWeights::<f64>::default();
        assert_eq!(w.threshold, 0.25);
        assert_eq!((w.safety, w.action, w.slew, w.stability), (10.0, 0.01, 0.1, 1.0));
        assert_eq!(w.horizon, 10);
        assert_eq!(ShapingWeights::<f64>::simulation_scale().threshold, 2.0);
    }

    #[test]
    fn counterexamples_deduplicate_within_radius() {
        let mut d = CounterexampleSet::new(8, 0.05);
        assert!(d.insert(vec![0.0, 0.0], 0.3));
        assert!(!d.insert(vec![0.04, -0.04], 0.2), "inside the dedup ball");
        assert!(d.insert(vec![0.06, 0.0], 0.1), "outside on one coordinate");
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn counterexamples_evict_oldest_when_full() {
        let mut d = CounterexampleSet::new(3, 0.0);
        for i in 0..5 {
            assert!(d.insert(vec![i as f64], 1.0));
        }
        assert_eq!(d.len(), 3);
        let kept: Vec<f64> = d.iter().map(|(p, _)| p[0]).collect();
        assert_eq!(kept, vec![2.0, 3.0, 4.0]);
    }
}
