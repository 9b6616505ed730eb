//! Mixing coefficients and the closed-form bounds that consume them.
//!
//! Exact coefficients are available for finite Markov chains (single-time reduction of the
//! past/future sigma-algebras). The empirical estimator works on a restricted event family
//! and is only a lower-bound diagnostic. Everything else here is a pure calculator: the
//! transfer bound from environment mixing plus coupling, the main bound and its rate
//! recipes, product bounds under one-step mixing, the block bound, and the concentration
//! inequalities used to control products of contraction factors.

mod bounds;
mod concentration;
mod empirical;
mod exact;

use std::collections::BTreeMap;

use serde::Serialize;

pub use bounds::{
    alpha_at, block_product_bound, main_bound, product_bound_theta, rate_table, transfer_bound, BlockBound,
    BoundParams, BoundValue, BoundVariant, Decay, RateCase, RateRow, TailFit, TailSequence, ThetaKind,
    TransferValue,
};
pub use concentration::{
    dn_bound, merlevede_bound, pn_bound, products_pn_and_dn, rio_bound, sufexp, useful_bound, DnRoute, PnRoute,
    ProductsParams, ProductsValue, UsefulBound,
};
pub use empirical::{empirical_alpha, EventFamily};
pub use exact::{exact_alpha_finite, phi_finite, psi_finite, AlphaMode, AlphaResult, FiniteChain};

use crate::report::{Cell, Table};
use crate::stats::isotonic_nonincreasing;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CurveKind {
    Alpha,
    Phi,
    Psi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Provenance {
    ExactFinite,
    EmpiricalLowerDiagnostic,
    TheoreticalBound,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::ExactFinite => "exact-finite",
            Provenance::EmpiricalLowerDiagnostic => "empirical-lower-diagnostic",
            Provenance::TheoreticalBound => "theoretical-bound",
        }
    }
}

/// Lag-indexed mixing values. `raw` keeps the values as computed; `values` is the
/// non-increasing isotonic correction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingCurve {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    pub raw: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub kind: CurveKind,
    pub provenance: Provenance,
    pub meta: BTreeMap<String, String>,
}

impl MixingCurve {
    pub fn new(lags: Vec<usize>, raw: Vec<f64>, kind: CurveKind, provenance: Provenance) -> Self {
        let values = isotonic_nonincreasing(&raw);
        let values = if kind == CurveKind::Alpha {
            values.into_iter().map(|v| v.min(0.25)).collect()
        } else {
            values
        };
        MixingCurve {
            lags,
            values,
            raw,
            stderr: None,
            kind,
            provenance,
            meta: BTreeMap::new(),
        }
    }

    /// Columns: lag, value, raw, kind, provenance.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["lag", "value", "raw", "kind", "provenance"]);
        let kind = match self.kind {
            CurveKind::Alpha => "alpha",
            CurveKind::Phi => "phi",
            CurveKind::Psi => "psi",
        };
        for (k, lag) in self.lags.iter().enumerate() {
            t.push(vec![
                Cell::from(*lag),
                self.values[k].into(),
                self.raw[k].into(),
                kind.into(),
                self.provenance.label().into(),
            ]);
        }
        t
    }
}

/// Exact alpha curve of a finite chain over a lag grid.
pub fn exact_alpha_curve(chain: &FiniteChain, lags: &[usize], window: usize) -> crate::Result<MixingCurve> {
    let mut raw = Vec::with_capacity(lags.len());
    let mut exact = true;
    for &n in lags {
        let r = exact_alpha_finite(chain, n, window, AlphaMode::Auto)?;
        exact &= r.exact;
        raw.push(r.value);
    }
    let mut c = MixingCurve::new(lags.to_vec(), raw, CurveKind::Alpha, Provenance::ExactFinite);
    c.meta.insert("window".into(), window.to_string());
    c.meta.insert("exhaustive".into(), exact.to_string());
    Ok(c)
}
