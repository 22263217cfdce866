//! Central-difference verification of analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::element::Element;
use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Coordinates to probe; every coordinate is checked when the model has
    /// fewer.
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            samples: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateError {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// True when any loss evaluation or gradient was NaN/inf.
    pub non_finite: bool,
    pub coordinates: Vec<CoordinateError>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&CoordinateError> {
        self.coordinates
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        !self.non_finite && self.max_rel_error < tolerance
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares tape gradients of `loss_fn` with central differences over a
/// seeded sample of parameter coordinates.
///
/// `loss_fn` must rebuild the whole computation on the tape it is given and
/// return a scalar; it is called once for the analytic pass and twice per
/// probed coordinate. Parameter values are restored bit-exactly afterwards.
pub fn grad_check<F, L>(
    store: &mut ParamStore<F>,
    mut loss_fn: L,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Element,
    L: FnMut(&mut Tape<F>, &mut ParamStore<F>) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    tape.backward(loss, store)?;
    let mut non_finite = !tape.value(loss).item().is_finite();

    let coords: Vec<(ParamId, usize)> = store
        .iter()
        .flat_map(|(id, p)| (0..p.value.numel()).map(move |i| (id, i)))
        .collect();
    let chosen: Vec<usize> = if coords.len() <= cfg.samples {
        (0..coords.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picked = rand::seq::index::sample(&mut rng, coords.len(), cfg.samples).into_vec();
        picked.sort_unstable();
        picked
    };

    let mut eval = |store: &mut ParamStore<F>| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, store)?;
        Ok(tape.value(loss).item().to_f64())
    };

    let eps = F::lit(cfg.eps);
    let mut out = Vec::with_capacity(chosen.len());
    let mut max_rel = 0.0f64;
    for ci in chosen {
        let (id, idx) = coords[ci];
        let analytic = store
            .grad(id)
            .map(|g| g.data()[idx].to_f64())
            .unwrap_or(0.0);
        let orig = store.value(id).data()[idx];
        store.value_mut(id).data_mut()[idx] = orig + eps;
        let plus = eval(store)?;
        store.value_mut(id).data_mut()[idx] = orig - eps;
        let minus = eval(store)?;
        store.value_mut(id).data_mut()[idx] = orig;
        let numeric = (plus - minus) / (2.0 * cfg.eps);
        let rel = if analytic.is_finite() && numeric.is_finite() {
            relative_error(analytic, numeric)
        } else {
            non_finite = true;
            f64::INFINITY
        };
        max_rel = max_rel.max(rel);
        out.push(CoordinateError {
            param: store.get(id).name.clone(),
            index: idx,
            analytic,
            numeric,
            rel_error: rel,
        });
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        checked: out.len(),
        non_finite,
        coordinates: out,
    })
}
