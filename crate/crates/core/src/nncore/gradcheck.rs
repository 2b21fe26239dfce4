use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Grads, NnError, ParamId, ParamStore, Result, Tape, Var};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f32,
    /// Coordinates sampled per parameter tensor (all when the tensor is smaller).
    pub samples_per_param: usize,
    pub seed: u64,
    /// A coordinate is scored only if `|f(θ+ε) − f(θ−ε)|` spans at least this
    /// many units in the last place of the loss; smaller changes are
    /// dominated by rounding and the coordinate is counted as unresolved.
    /// Zero scores every coordinate.
    pub min_loss_ulps: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            samples_per_param: 12,
            seed: 0,
            min_loss_ulps: 1024.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Worst error per parameter tensor, in store order.
    pub per_param: Vec<(String, f64)>,
    pub checked: usize,
    /// Sampled coordinates below the resolution floor.
    pub unresolved: usize,
    /// Largest `|analytic − numeric|` among unresolved coordinates.
    pub max_unresolved_abs_error: f64,
    /// `(param, flat index, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` on a seeded sample
/// of coordinates. Half of each sample is drawn from coordinates where the
/// analytic gradient is nonzero, so sparse tables are still exercised.
pub fn grad_check<F>(store: &ParamStore, f: F, analytic: &Grads, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<f32>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_param: Vec::new(),
        checked: 0,
        unresolved: 0,
        max_unresolved_abs_error: 0.0,
        worst: None,
    };

    for id in store.ids() {
        let n = store.get(id).len();
        let coords: Vec<usize> = if n <= opts.samples_per_param {
            (0..n).collect()
        } else {
            let support = analytic.get(id).map(|g| g.support()).unwrap_or_default();
            let mut picked: Vec<usize> = support
                .choose_multiple(&mut rng, opts.samples_per_param / 2)
                .copied()
                .collect();
            let all: Vec<usize> = (0..n).collect();
            while picked.len() < opts.samples_per_param {
                let c = *all.choose(&mut rng).expect("non-empty");
                if !picked.contains(&c) {
                    picked.push(c);
                }
            }
            picked
        };
        let mut worst_here = 0.0f64;
        for c in coords {
            let (numeric, ulps) = central_difference(&f, &mut work, id, c, opts.eps)?;
            let a = analytic.get(id).map_or(0.0, |g| g.at(c)) as f64;
            if ulps < opts.min_loss_ulps {
                report.unresolved += 1;
                report.max_unresolved_abs_error = report.max_unresolved_abs_error.max((a - numeric).abs());
                continue;
            }
            let err = relative_error(a, numeric);
            report.checked += 1;
            worst_here = worst_here.max(err);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((store.name(id).to_string(), c, a, numeric));
            }
        }
        report.per_param.push((store.name(id).to_string(), worst_here));
    }
    Ok(report)
}

/// Difference quotient and the loss change measured in ulps of the loss.
fn central_difference<F>(f: &F, work: &mut ParamStore, id: ParamId, c: usize, eps: f32) -> Result<(f64, f64)>
where
    F: Fn(&ParamStore) -> Result<f32>,
{
    let orig = work.get(id).data()[c];
    let (plus, minus) = (orig + eps, orig - eps);
    work.get_mut(id).data_mut()[c] = plus;
    let fp = f(work);
    work.get_mut(id).data_mut()[c] = minus;
    let fm = f(work);
    work.get_mut(id).data_mut()[c] = orig;
    let (fp, fm) = (fp?, fm?);
    if !fp.is_finite() || !fm.is_finite() {
        return Err(NnError::NonFiniteValue("grad_check"));
    }
    let ulp = (fp.abs().max(fm.abs()).max(f32::MIN_POSITIVE) as f64) * f32::EPSILON as f64;
    let delta = fp as f64 - fm as f64;
    Ok((delta / (plus as f64 - minus as f64), delta.abs() / ulp))
}

/// [`grad_check`] for a loss recorded by `build` on a fresh tape.
pub fn grad_check_tape<B>(store: &ParamStore, build: B, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    B: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let loss = build(&mut tape)?;
    let grads = tape.backward(loss)?;
    let f = |s: &ParamStore| {
        let mut t = Tape::new(s);
        let l = build(&mut t)?;
        Ok(t.value(l).data()[0])
    };
    grad_check(store, f, &grads, opts)
}
