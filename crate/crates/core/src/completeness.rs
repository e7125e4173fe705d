//! Completeness routing: decide whether the two traded assets span the
//! driving noise.
//!
//! The decision runs in two stages. First a pointwise rank test probes the
//! Jacobian determinant of the payoff pair on the terminal slice at
//! low-discrepancy points; if the determinant is non-degenerate away from a
//! negligible set, the market is complete by the rank route. When the
//! terminal determinant degenerates on a fat set (as it does whenever both
//! payoffs depend on the same coordinate), a weak pairing search looks for a
//! test function and a sub-box on which the bilinear form is provably
//! nonzero, which restores completeness through the evolution of the
//! determinant. If both routes fail the check is inconclusive; it never
//! claims incompleteness.

use serde::Serialize;

use crate::grid::DomainBox;
use crate::model::DiffusionModel;
use crate::pairing::{pairing_weak, test_function_library, PairingResult, TestFunction};
use crate::probes::probe_points;
use crate::{Error, Result};

/// Outcome of the routing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CompleteViaRank,
    CompleteViaPairing,
    Inconclusive,
}

/// Tunables for the routing; the defaults match the reported diagnostics.
#[derive(Clone, Debug)]
pub struct CompletenessOptions {
    pub n_probes: usize,
    /// Relative determinant cutoff: `|w| <= tol_rel * |grad f| |grad g|`
    /// counts as near-singular.
    pub tol_rel: f64,
    /// Largest acceptable near-singular fraction for the rank route.
    pub max_singular_fraction: f64,
    /// Absolute floor below which a pairing value is treated as zero.
    pub value_floor: f64,
    /// Required ratio between a pairing value and its quadrature error.
    pub error_factor: f64,
    /// Required ratio between a pairing value and the integrand scale;
    /// rejects values that are pure cancellation residue.
    pub rel_floor: f64,
}

impl Default for CompletenessOptions {
    fn default() -> Self {
        CompletenessOptions {
            n_probes: 2048,
            tol_rel: 1e-6,
            max_singular_fraction: 1e-3,
            value_floor: 1e-12,
            error_factor: 10.0,
            rel_floor: 1e-6,
        }
    }
}

/// Probe statistics of the terminal-slice rank test.
#[derive(Clone, Debug, Serialize)]
pub struct RankDiagnostics {
    pub n_probes: usize,
    pub near_singular: usize,
    pub fraction: f64,
    pub tol_rel: f64,
}

/// The certificate produced by the pairing route.
#[derive(Clone, Debug, Serialize)]
pub struct PairingWitness {
    pub test_function: String,
    pub region_lo: [f64; 2],
    pub region_hi: [f64; 2],
    pub value: f64,
    pub error_estimate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompletenessReport {
    pub model: String,
    pub verdict: Verdict,
    pub growth_ok: bool,
    pub rank: RankDiagnostics,
    pub pairing: Option<PairingWitness>,
    pub regions_tried: usize,
    pub functions_tried: usize,
    pub notes: Vec<String>,
}

impl CompletenessReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Search regions: the full box, a centered half-size box, and the four
/// quadrants.
pub fn sub_boxes(domain: &DomainBox) -> Vec<DomainBox> {
    vec![
        domain.clone(),
        domain.fraction([0.25, 0.75], [0.25, 0.75]),
        domain.fraction([0.0, 0.5], [0.0, 0.5]),
        domain.fraction([0.5, 1.0], [0.0, 0.5]),
        domain.fraction([0.0, 0.5], [0.5, 1.0]),
        domain.fraction([0.5, 1.0], [0.5, 1.0]),
    ]
}

fn growth_bound_ok(model: &DiffusionModel, domain: &DomainBox, n_probes: usize) -> bool {
    let n = model.envelope.n_growth;
    let kink = model.g.kink_x1();
    for x in probe_points(n_probes, domain) {
        if let Some(k) = kink {
            if (x[0] - k).abs() <= 1e-9 {
                continue;
            }
        }
        let g = model.g.grad(x);
        let mag = g[0].hypot(g[1]);
        let bound = (n * (1.0 + x[0].hypot(x[1]))).exp();
        if mag > bound {
            return false;
        }
    }
    true
}

/// Runs the two-stage routing over `domain` with the given options.
pub fn completeness_check(
    model: &DiffusionModel,
    domain: &DomainBox,
    opts: &CompletenessOptions,
) -> Result<CompletenessReport> {
    if opts.n_probes == 0 {
        return Err(Error::InvalidInput(
            "completeness check needs at least one probe point".to_string(),
        ));
    }
    if !model.f.caps().dx {
        return Err(Error::MissingDerivative(format!(
            "first x-derivative of `{}`",
            model.f.name()
        )));
    }

    let mut notes = Vec::new();
    let growth_ok = growth_bound_ok(model, domain, opts.n_probes);
    if !growth_ok {
        notes.push(
            "payoff gradient exceeds the registered growth envelope; no verdict is claimed"
                .to_string(),
        );
    }

    // Stage one: pointwise rank of the terminal determinant.
    let t = crate::model::HORIZON;
    let mut near_singular = 0usize;
    for x in probe_points(opts.n_probes, domain) {
        let fg = [model.f.dx(0, t, x), model.f.dx(1, t, x)];
        let gg = model.g.grad(x);
        let w = fg[0] * gg[1] - fg[1] * gg[0];
        let s = fg[0].hypot(fg[1]) * gg[0].hypot(gg[1]);
        if w.abs() <= opts.tol_rel * s {
            near_singular += 1;
        }
    }
    let rank = RankDiagnostics {
        n_probes: opts.n_probes,
        near_singular,
        fraction: near_singular as f64 / opts.n_probes as f64,
        tol_rel: opts.tol_rel,
    };

    if growth_ok && rank.fraction <= opts.max_singular_fraction {
        return Ok(CompletenessReport {
            model: model.name.clone(),
            verdict: Verdict::CompleteViaRank,
            growth_ok,
            rank,
            pairing: None,
            regions_tried: 0,
            functions_tried: 0,
            notes,
        });
    }

    // Stage two: search for a nonzero weak pairing.
    let mut regions_tried = 0usize;
    let mut functions_tried = 0usize;
    let mut witness: Option<PairingWitness> = None;

    if !model.g.weakly_differentiable() {
        notes.push(format!(
            "payoff `{}` has no locally integrable gradient, so the pairing \
             route is unavailable",
            model.g.name()
        ));
    } else {
        'search: for region in sub_boxes(domain) {
            regions_tried += 1;
            for phi in test_function_library(&region) {
                functions_tried += 1;
                let res: PairingResult = pairing_weak(model, &model.g, &phi, &region, t)?;
                if res.converged
                    && res.value.abs() > opts.value_floor
                    && res.value.abs() >= opts.rel_floor * res.scale
                    && res.value.abs() > opts.error_factor * res.error_estimate
                {
                    witness = Some(make_witness(&phi, &region, &res));
                    break 'search;
                }
            }
        }
    }

    let verdict = if !growth_ok {
        Verdict::Inconclusive
    } else if witness.is_some() {
        Verdict::CompleteViaPairing
    } else {
        notes.push(
            "terminal rank degenerates and no test function produced a \
             nonzero pairing; completeness is undecided"
                .to_string(),
        );
        Verdict::Inconclusive
    };

    Ok(CompletenessReport {
        model: model.name.clone(),
        verdict,
        growth_ok,
        rank,
        pairing: witness,
        regions_tried,
        functions_tried,
        notes,
    })
}

fn make_witness(
    phi: &TestFunction,
    region: &DomainBox,
    res: &PairingResult,
) -> PairingWitness {
    PairingWitness {
        test_function: phi.label(),
        region_lo: region.lo,
        region_hi: region.hi,
        value: res.value,
        error_estimate: res.error_estimate,
    }
}
