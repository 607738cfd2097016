//! Widely linear memory polynomial canceller.
//!
//! Models the received self-interference as
//!
//! `yhat[n] = sum_{p odd <= P} sum_{q=0}^{p} sum_{l=0}^{L-1}
//!            h[p,q,l] * x[n-l]^q * conj(x[n-l])^(p-q)`
//!
//! Only odd total orders appear: even-order products land out of band after
//! downconversion. Including every conjugate split `q` makes the model
//! widely linear, so IQ-imbalance images are covered too.
//!
//! The basis is kept in one canonical order everywhere — ascending lag,
//! then ascending order `p`, then ascending `q` — so coefficient vectors,
//! regressor columns, and serialized models line up without translation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::{check_range, fit_targets, LinearModel};
use crate::lsq::solve_least_squares;
use crate::signal::ComplexSignal;

/// One basis term: `x[n-lag]^q * conj(x[n-lag])^(p-q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TermKey {
    pub lag: usize,
    pub p: usize,
    pub q: usize,
}

/// Canonical term order for order `P` and memory `L`.
pub fn term_order(order: usize, memory_len: usize) -> Vec<TermKey> {
    let mut terms = Vec::with_capacity(coefficient_count(order, memory_len));
    for lag in 0..memory_len {
        for p in (1..=order).step_by(2) {
            for q in 0..=p {
                terms.push(TermKey { lag, p, q });
            }
        }
    }
    terms
}

/// Number of complex coefficients: `L * sum_{p odd <= P} (p + 1)`.
pub fn coefficient_count(order: usize, memory_len: usize) -> usize {
    let per_lag: usize = (1..=order).step_by(2).map(|p| p + 1).sum();
    memory_len * per_lag
}

fn check_shape(order: usize, memory_len: usize) -> Result<()> {
    if order == 0 || order % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "polynomial order must be odd and positive, got {order}"
        )));
    }
    if memory_len == 0 {
        return Err(Error::InvalidConfig("memory length must be at least 1".into()));
    }
    Ok(())
}

/// Fitted widely linear memory polynomial. Coefficients are stored densely
/// in canonical order; absent terms are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyModel {
    order: usize,
    memory_len: usize,
    coefficients: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct PolyModelRepr {
    order: usize,
    memory_len: usize,
    /// Keyed `"p,q,l"`; sorted keys make serialization deterministic.
    coefficients: BTreeMap<String, [f64; 2]>,
}

impl PolyModel {
    /// Builds a model from explicit `(p, q, lag) -> gain` terms; terms not
    /// listed are zero. Each key must satisfy `p` odd, `p <= order`,
    /// `q <= p`, `lag < memory_len`, and appear at most once.
    pub fn from_terms(
        order: usize,
        memory_len: usize,
        terms: &[(usize, usize, usize, Complex64)],
    ) -> Result<Self> {
        check_shape(order, memory_len)?;
        let canonical = term_order(order, memory_len);
        let mut coefficients = vec![Complex64::new(0.0, 0.0); canonical.len()];
        let index: BTreeMap<TermKey, usize> = canonical
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, i))
            .collect();
        let mut seen = std::collections::BTreeSet::new();
        for &(p, q, lag, gain) in terms {
            let key = TermKey { lag, p, q };
            let slot = index.get(&key).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "term (p={p}, q={q}, lag={lag}) is outside order {order}, memory {memory_len}"
                ))
            })?;
            if !seen.insert(key) {
                return Err(Error::InvalidConfig(format!(
                    "term (p={p}, q={q}, lag={lag}) given twice"
                )));
            }
            if !gain.re.is_finite() || !gain.im.is_finite() {
                return Err(Error::NonFinite { index: *slot });
            }
            coefficients[*slot] = gain;
        }
        Ok(Self {
            order,
            memory_len,
            coefficients,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn memory_len(&self) -> usize {
        self.memory_len
    }

    /// Coefficients in canonical order; `term_order(order, memory_len)`
    /// names each slot.
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficient(&self, p: usize, q: usize, lag: usize) -> Option<Complex64> {
        let pos = term_order(self.order, self.memory_len)
            .iter()
            .position(|k| k.p == p && k.q == q && k.lag == lag)?;
        Some(self.coefficients[pos])
    }

    /// Single-sample prediction in canonical order.
    pub fn predict_one(&self, tx: &ComplexSignal, n: usize) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut slot = 0;
        let mut vpow = vec![Complex64::new(1.0, 0.0); self.order + 1];
        let mut cpow = vec![Complex64::new(1.0, 0.0); self.order + 1];
        for lag in 0..self.memory_len {
            let v = tx.lagged(n, lag);
            let vc = v.conj();
            for k in 1..=self.order {
                vpow[k] = vpow[k - 1] * v;
                cpow[k] = cpow[k - 1] * vc;
            }
            for p in (1..=self.order).step_by(2) {
                for q in 0..=p {
                    acc += self.coefficients[slot] * (vpow[q] * cpow[p - q]);
                    slot += 1;
                }
            }
        }
        acc
    }

    /// Basis vector at sample `n`, canonical order. Shared by fitting and
    /// the instrumented cost path.
    pub fn basis_at(tx: &ComplexSignal, n: usize, order: usize, memory_len: usize) -> Vec<Complex64> {
        let mut basis = Vec::with_capacity(coefficient_count(order, memory_len));
        let mut vpow = vec![Complex64::new(1.0, 0.0); order + 1];
        let mut cpow = vec![Complex64::new(1.0, 0.0); order + 1];
        for lag in 0..memory_len {
            let v = tx.lagged(n, lag);
            let vc = v.conj();
            for k in 1..=order {
                vpow[k] = vpow[k - 1] * v;
                cpow[k] = cpow[k - 1] * vc;
            }
            for p in (1..=order).step_by(2) {
                for q in 0..=p {
                    basis.push(vpow[q] * cpow[p - q]);
                }
            }
        }
        basis
    }

    /// The linear canceller is the `p = 1, q = 1` slice of this model.
    pub fn embeds_linear(&self, linear: &LinearModel) -> bool {
        if linear.memory_len() > self.memory_len {
            return false;
        }
        term_order(self.order, self.memory_len)
            .iter()
            .zip(&self.coefficients)
            .all(|(k, &c)| {
                if k.p == 1 && k.q == 1 && k.lag < linear.memory_len() {
                    c == linear.taps()[k.lag]
                } else if k.p == 1 && k.q == 1 {
                    c == Complex64::new(0.0, 0.0)
                } else {
                    true
                }
            })
    }

    pub fn to_json(&self) -> String {
        let terms = term_order(self.order, self.memory_len);
        let coefficients = terms
            .iter()
            .zip(&self.coefficients)
            .map(|(k, c)| (format!("{},{},{}", k.p, k.q, k.lag), [c.re, c.im]))
            .collect();
        let repr = PolyModelRepr {
            order: self.order,
            memory_len: self.memory_len,
            coefficients,
        };
        serde_json::to_string_pretty(&repr).expect("plain struct serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: PolyModelRepr = serde_json::from_str(text)?;
        check_shape(repr.order, repr.memory_len)?;
        let mut terms = Vec::with_capacity(repr.coefficients.len());
        for (key, [re, im]) in &repr.coefficients {
            let parts: Vec<&str> = key.split(',').collect();
            let parse = |s: &str| -> Result<usize> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad coefficient key {key:?}")))
            };
            if parts.len() != 3 {
                return Err(Error::InvalidConfig(format!("bad coefficient key {key:?}")));
            }
            let (p, q, lag) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
            terms.push((p, q, lag, Complex64::new(*re, *im)));
        }
        PolyModel::from_terms(repr.order, repr.memory_len, &terms)
    }
}

/// Fits the full widely linear basis by least squares over `range`.
///
/// Requires `|range| >= 10 *` coefficient count. A collinear basis — for
/// example any constant-envelope input, which collapses `x^q conj(x)^(p-q)`
/// across orders — degrades to the minimum-norm solution with a warning
/// naming the dependent terms, rather than failing: the predictions are
/// unaffected by the tie-break.
pub fn fit_poly(
    tx: &ComplexSignal,
    rx: &ComplexSignal,
    range: std::ops::Range<usize>,
    order: usize,
    memory_len: usize,
) -> Result<PolyModel> {
    check_shape(order, memory_len)?;
    check_range(tx, rx, &range)?;
    let k = coefficient_count(order, memory_len);
    let need = 10 * k;
    if range.len() < need {
        return Err(Error::FitRangeTooSmall {
            have: range.len(),
            need,
        });
    }

    let targets = fit_targets(&range, memory_len);
    let rows = targets.len();
    let mut a = DMatrix::<Complex64>::zeros(rows, k);
    for (m, n) in targets.clone().enumerate() {
        let basis = PolyModel::basis_at(tx, n, order, memory_len);
        for (j, v) in basis.into_iter().enumerate() {
            a[(m, j)] = v;
        }
    }
    let b = DVector::<Complex64>::from_fn(rows, |m, _| rx[targets.start + m]);

    let out = solve_least_squares(&a, &b);
    if out.rank < k {
        let terms = term_order(order, memory_len);
        let named: Vec<String> = out
            .degenerate_columns
            .iter()
            .map(|&j| {
                let t = terms[j];
                format!("(p={}, q={}, lag={})", t.p, t.q, t.lag)
            })
            .collect();
        log::warn!(
            "polynomial basis is rank deficient ({} of {k} independent); \
             using the minimum-norm fit; dependent terms: {}",
            out.rank,
            named.join(", ")
        );
    }
    Ok(PolyModel {
        order,
        memory_len,
        coefficients: out.coefficients,
    })
}

/// Predicts over `range`; element `i` corresponds to sample
/// `range.start + i`, with the same lag boundary rules as
/// [`crate::linear::predict_linear`].
pub fn predict_poly(
    model: &PolyModel,
    tx: &ComplexSignal,
    range: std::ops::Range<usize>,
) -> Result<ComplexSignal> {
    if range.is_empty() {
        return Err(Error::EmptyRange);
    }
    if range.end > tx.len() {
        return Err(Error::RangeOutOfBounds {
            start: range.start,
            end: range.end,
            len: tx.len(),
        });
    }
    Ok(ComplexSignal::from_computed(
        range.map(|n| model.predict_one(tx, n)).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{fit_linear, predict_linear};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_signal(seed: u64, len: usize) -> ComplexSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexSignal::new(
            (0..len)
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    fn apply_poly(model: &PolyModel, tx: &ComplexSignal) -> ComplexSignal {
        ComplexSignal::new((0..tx.len()).map(|n| model.predict_one(tx, n)).collect()).unwrap()
    }

    #[test]
    fn canonical_order_and_count() {
        // L=2, P=3: per lag (p=1: q=0,1; p=3: q=0..3) -> 6 terms, 12 total
        assert_eq!(coefficient_count(3, 2), 12);
        assert_eq!(coefficient_count(7, 3), 60);
        assert_eq!(coefficient_count(1, 1), 2);
        let terms = term_order(3, 2);
        let expect = [
            (0, 1, 0),
            (0, 1, 1),
            (0, 3, 0),
            (0, 3, 1),
            (0, 3, 2),
            (0, 3, 3),
            (1, 1, 0),
            (1, 1, 1),
            (1, 3, 0),
            (1, 3, 1),
            (1, 3, 2),
            (1, 3, 3),
        ];
        for (k, &(lag, p, q)) in terms.iter().zip(expect.iter()) {
            assert_eq!((k.lag, k.p, k.q), (lag, p, q));
        }
    }

    #[test]
    fn single_term_evaluates_its_monomial() {
        // model with only (p=3, q=2, lag=0) -> x^2 conj(x)
        let model = PolyModel::from_terms(3, 1, &[(3, 2, 0, c(1.0, 0.0))]).unwrap();
        let x = c(0.5, -0.75);
        let tx = ComplexSignal::new(vec![x]).unwrap();
        let got = model.predict_one(&tx, 0);
        let want = x * x * x.conj();
        assert!((got - want).norm() < 1e-15, "{got} vs {want}");
    }

    #[test]
    fn conjugate_only_term() {
        // only (p=1, q=0, lag=0) -> conj(x)
        let model = PolyModel::from_terms(1, 1, &[(1, 0, 0, c(2.0, 0.0))]).unwrap();
        let x = c(0.3, 0.4);
        let tx = ComplexSignal::new(vec![x]).unwrap();
        assert_eq!(model.predict_one(&tx, 0), c(2.0, 0.0) * x.conj());
    }

    #[test]
    fn linear_slice_reproduces_linear_canceller_exactly() {
        let taps = vec![c(0.8, -0.3), c(0.2, 0.1)];
        let linear = LinearModel::new(taps.clone()).unwrap();
        let model =
            PolyModel::from_terms(3, 2, &[(1, 1, 0, taps[0]), (1, 1, 1, taps[1])]).unwrap();
        assert!(model.embeds_linear(&linear));
        let tx = random_signal(11, 200);
        let from_poly = predict_poly(&model, &tx, 0..200).unwrap();
        let from_linear = predict_linear(&linear, &tx, 0..200).unwrap();
        for n in 0..200 {
            assert!(
                from_poly[n].re == from_linear[n].re && from_poly[n].im == from_linear[n].im,
                "n={n}: {} vs {}",
                from_poly[n],
                from_linear[n]
            );
        }
    }

    #[test]
    fn recovers_known_channel_noiselessly() {
        let truth = PolyModel::from_terms(
            3,
            2,
            &[
                (1, 1, 0, c(1.0, 0.0)),
                (1, 0, 0, c(0.05, -0.02)),
                (1, 1, 1, c(0.25, 0.1)),
                (3, 2, 0, c(0.08, 0.03)),
                (3, 0, 1, c(0.004, -0.002)),
            ],
        )
        .unwrap();
        let tx = random_signal(12, 800);
        let rx = apply_poly(&truth, &tx);
        let fit = fit_poly(&tx, &rx, 0..800, 3, 2).unwrap();
        for (got, want) in fit.coefficients().iter().zip(truth.coefficients()) {
            assert!((got - want).norm() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn higher_order_never_fits_worse_on_training_data() {
        // rx has a genuine 5th-order component plus noise
        let tx = random_signal(13, 1500);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let truth = PolyModel::from_terms(
            5,
            1,
            &[
                (1, 1, 0, c(1.0, 0.0)),
                (3, 2, 0, c(0.2, -0.1)),
                (5, 3, 0, c(0.05, 0.02)),
            ],
        )
        .unwrap();
        let rx = ComplexSignal::new(
            (0..tx.len())
                .map(|n| {
                    truth.predict_one(&tx, n)
                        + c(rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01))
                })
                .collect(),
        )
        .unwrap();

        let train_energy = |model: &PolyModel| -> f64 {
            fit_targets(&(0..1500), 1)
                .map(|n| (rx[n] - model.predict_one(&tx, n)).norm_sqr())
                .sum()
        };
        let e1 = train_energy(&fit_poly(&tx, &rx, 0..1500, 1, 1).unwrap());
        let e3 = train_energy(&fit_poly(&tx, &rx, 0..1500, 3, 1).unwrap());
        let e5 = train_energy(&fit_poly(&tx, &rx, 0..1500, 5, 1).unwrap());
        let tol = 1e-9 * e1;
        assert!(e3 <= e1 + tol, "P=3 fits worse than P=1: {e3} vs {e1}");
        assert!(e5 <= e3 + tol, "P=5 fits worse than P=3: {e5} vs {e3}");
    }

    #[test]
    fn constant_envelope_collapses_to_minimum_norm_fit() {
        // Unit-modulus input: x^q conj(x)^(p-q) = x^(2q-p), so e.g. the
        // (1,1) and (3,2) columns coincide. The fit must still minimize the
        // residual, splitting weight across the duplicates.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let tx = ComplexSignal::new(
            (0..600)
                .map(|_| {
                    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                    c(phase.cos(), phase.sin())
                })
                .collect(),
        )
        .unwrap();
        let rx = ComplexSignal::new(tx.iter().map(|v| v * c(0.6, 0.2)).collect()).unwrap();
        let fit = fit_poly(&tx, &rx, 0..600, 3, 1).unwrap();
        let est = predict_poly(&fit, &tx, 0..600).unwrap();
        let resid: f64 = rx
            .iter()
            .zip(est.iter())
            .map(|(y, e)| (y - e).norm_sqr())
            .sum();
        assert!(resid < 1e-16, "residual {resid}");
        let c11 = fit.coefficient(1, 1, 0).unwrap();
        let c32 = fit.coefficient(3, 2, 0).unwrap();
        assert!(
            (c11 - c32).norm() < 1e-8,
            "duplicate columns should share weight: {c11} vs {c32}"
        );
    }

    #[test]
    fn fitting_beats_the_embedded_linear_canceller_on_nonlinear_data() {
        let truth = PolyModel::from_terms(
            3,
            2,
            &[
                (1, 1, 0, c(1.0, 0.0)),
                (1, 1, 1, c(0.2, 0.05)),
                (3, 2, 0, c(0.15, -0.08)),
            ],
        )
        .unwrap();
        let tx = random_signal(16, 1000);
        let rx = apply_poly(&truth, &tx);
        let lin = fit_linear(&tx, &rx, 0..1000, 2).unwrap();
        let pol = fit_poly(&tx, &rx, 0..1000, 3, 2).unwrap();
        let e_lin: f64 = fit_targets(&(0..1000), 2)
            .map(|n| (rx[n] - lin.predict_one(&tx, n)).norm_sqr())
            .sum();
        let e_pol: f64 = fit_targets(&(0..1000), 2)
            .map(|n| (rx[n] - pol.predict_one(&tx, n)).norm_sqr())
            .sum();
        assert!(
            e_pol < e_lin * 1e-6,
            "poly residual {e_pol} should crush linear residual {e_lin}"
        );
    }

    #[test]
    fn shape_validation() {
        assert!(matches!(
            PolyModel::from_terms(2, 1, &[]),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            PolyModel::from_terms(3, 0, &[]),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            PolyModel::from_terms(3, 1, &[(3, 4, 0, c(1.0, 0.0))]),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            PolyModel::from_terms(3, 1, &[(5, 2, 0, c(1.0, 0.0))]),
            Err(Error::InvalidConfig(_))
        ));
        let dup = [(1, 1, 0, c(1.0, 0.0)), (1, 1, 0, c(2.0, 0.0))];
        assert!(matches!(
            PolyModel::from_terms(3, 1, &dup),
            Err(Error::InvalidConfig(_))
        ));
        let tx = random_signal(17, 100);
        let rx = random_signal(18, 100);
        assert!(matches!(
            fit_poly(&tx, &rx, 0..100, 3, 2),
            Err(Error::FitRangeTooSmall { .. })
        ));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let model = PolyModel::from_terms(
            5,
            2,
            &[
                (1, 1, 0, c(1.0 / 3.0, -7.77e-13)),
                (3, 2, 1, c(0.1, 2.0f64.sqrt())),
                (5, 0, 0, c(-0.25, 1e-300)),
            ],
        )
        .unwrap();
        let text = model.to_json();
        let back = PolyModel::from_json(&text).unwrap();
        assert_eq!(model, back);
        // serialized keys are "p,q,l"
        assert!(text.contains("\"3,2,1\""));
    }
}
