use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{Grads, ToySeq2Seq};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameters compared.
    pub checked: usize,
    /// Sampled parameters whose gradient was too small to compare.
    pub skipped: usize,
}

/// Compares analytic gradients with central differences on up to
/// `per_tensor` random entries of every parameter tensor.
///
/// The difference quotient is Richardson-extrapolated from steps `eps` and
/// `eps / 2`, which keeps truncation error far below the tolerance while
/// `eps` stays large enough to avoid cancellation.
///
/// # Panics
/// Panics if `eps` is outside `[1e-6, 1e-3]`.
pub fn grad_check<F>(model: &ToySeq2Seq, loss: F, eps: f64, per_tensor: usize, seed: u64) -> GradCheck
where
    F: Fn(&ToySeq2Seq) -> (f64, Grads),
{
    assert!((1e-6..=1e-3).contains(&eps), "eps must lie in [1e-6, 1e-3]");
    let (_, analytic) = loss(model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut offset = 0;
    for t in &analytic.tensors {
        let n = t.data.len();
        for local in sample(&mut rng, n, per_tensor.min(n)) {
            let idx = offset + local;
            let a = t.data[local];
            let mut diff = |h: f64| {
                let orig = *probe.param_mut(idx);
                *probe.param_mut(idx) = orig + h;
                let up = loss(&probe).0;
                *probe.param_mut(idx) = orig - h;
                let down = loss(&probe).0;
                *probe.param_mut(idx) = orig;
                (up - down) / (2.0 * h)
            };
            let numeric = (4.0 * diff(eps / 2.0) - diff(eps)) / 3.0;
            let scale = a.abs().max(numeric.abs());
            if scale <= 1e-8 {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max((a - numeric).abs() / scale);
        }
        offset += n;
    }
    report
}
