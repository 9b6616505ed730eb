use crate::error::{ensure, Error, Result};
use crate::stats::quantile_sorted;

use super::{CurveKind, MixingCurve, Provenance};

/// Event family for the empirical diagnostic.
#[derive(Clone, Debug)]
pub struct EventFamily {
    pub quantiles: Vec<f64>,
    /// Events constrain at most this many coordinates at once.
    pub max_coords: usize,
    /// Block width: an event on a block requires the half-line condition at each of the
    /// `w` consecutive times.
    pub block: usize,
}

impl Default for EventFamily {
    fn default() -> Self {
        EventFamily {
            quantiles: vec![0.25, 0.5, 0.75],
            max_coords: 2,
            block: 1,
        }
    }
}

struct Bits {
    words: Vec<u64>,
    count: usize,
}

impl Bits {
    fn new(n: usize) -> Self {
        Bits {
            words: vec![0; n.div_ceil(64)],
            count: 0,
        }
    }
    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
        self.count += 1;
    }
    fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }
}

/// Count of `t in 0..len` with `a[t]` and `b[t + shift]` both set.
fn and_count_shifted(a: &Bits, b: &Bits, shift: usize, len: usize) -> usize {
    let ws = shift / 64;
    let bs = shift % 64;
    let full = len / 64;
    let mut c = 0usize;
    let fetch = |k: usize| -> u64 {
        let lo = b.words.get(k + ws).copied().unwrap_or(0);
        if bs == 0 {
            lo
        } else {
            let hi = b.words.get(k + ws + 1).copied().unwrap_or(0);
            (lo >> bs) | (hi << (64 - bs))
        }
    };
    for k in 0..full {
        c += (a.words[k] & fetch(k)).count_ones() as usize;
    }
    let rem = len % 64;
    if rem > 0 {
        let mask = (1u64 << rem) - 1;
        c += (a.words[full] & fetch(full) & mask).count_ones() as usize;
    }
    c
}

/// Restricted-family strong-mixing diagnostic. `rows` is the observed path
/// `(Z_0, ..., Z_{N-1})`, each row a vector. For each lag the value is the largest
/// `|P^(G_t and H_{t+n}) - P^(G) P^(H)|` over the event family; this is a lower-bound
/// diagnostic for the sup over all events, never an estimate of it.
pub fn empirical_alpha(rows: &[Vec<f64>], lags: &[usize], family: &EventFamily) -> Result<MixingCurve> {
    ensure(!rows.is_empty(), "path", "must be nonempty")?;
    ensure(family.block >= 1, "block", "must be >= 1")?;
    let dim = rows[0].len();
    ensure(rows.iter().all(|r| r.len() == dim), "path", "rows must share a dimension")?;
    let n_obs = rows.len();
    let w = family.block;
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    let starts = n_obs.saturating_sub(w - 1);
    let usable = starts.saturating_sub(max_lag);
    if usable < 30 {
        return Err(Error::config(
            "path",
            format!("only {usable} usable pairs at lag {max_lag}; need at least 30"),
        ));
    }

    // Per-coordinate thresholds.
    let thresholds: Vec<Vec<f64>> = (0..dim)
        .map(|c| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            v.sort_by(f64::total_cmp);
            family.quantiles.iter().map(|q| quantile_sorted(&v, *q)).collect()
        })
        .collect();

    // Enumerate events: each is a list of (coordinate, threshold).
    let mut events: Vec<Vec<(usize, f64)>> = Vec::new();
    let nq = family.quantiles.len();
    let max_c = family.max_coords.clamp(1, dim);
    let mut choose = vec![0usize; dim];
    loop {
        let active = choose.iter().filter(|c| **c > 0).count();
        if active >= 1 && active <= max_c {
            events.push(
                choose
                    .iter()
                    .enumerate()
                    .filter(|(_, k)| **k > 0)
                    .map(|(c, k)| (c, thresholds[c][k - 1]))
                    .collect(),
            );
        }
        let mut i = 0;
        while i < dim {
            choose[i] += 1;
            if choose[i] <= nq {
                break;
            }
            choose[i] = 0;
            i += 1;
        }
        if i == dim {
            break;
        }
    }

    let point_ok = |t: usize, ev: &[(usize, f64)]| ev.iter().all(|(c, q)| rows[t][*c] <= *q);
    let bits: Vec<Bits> = events
        .iter()
        .map(|ev| {
            let mut b = Bits::new(starts);
            for t in 0..starts {
                if (t..t + w).all(|s| point_ok(s, ev)) {
                    b.set(t);
                }
            }
            b
        })
        .collect();
    // Drop events that never or always occur; they carry no dependence information.
    let live: Vec<usize> = (0..bits.len())
        .filter(|i| bits[*i].count > 0 && bits[*i].count < starts)
        .collect();

    let mut values = Vec::with_capacity(lags.len());
    let mut sigmas = Vec::with_capacity(lags.len());
    for &lag in lags {
        let len = starts - lag;
        let nf = len as f64;
        let freq = |b: &Bits, off: usize| -> f64 {
            let mut c = 0usize;
            for t in off..off + len {
                if b.get(t) {
                    c += 1;
                }
            }
            c as f64 / nf
        };
        let pg: Vec<f64> = live.iter().map(|i| freq(&bits[*i], 0)).collect();
        let ph: Vec<f64> = live.iter().map(|i| freq(&bits[*i], lag)).collect();
        let mut best = 0.0f64;
        let mut best_sigma = 0.0f64;
        for (gi, g) in live.iter().enumerate() {
            for (hi, h) in live.iter().enumerate() {
                let joint = and_count_shifted(&bits[*g], &bits[*h], lag, len) as f64 / nf;
                let v = (joint - pg[gi] * ph[hi]).abs();
                let s = (pg[gi] * (1.0 - pg[gi]) * ph[hi] * (1.0 - ph[hi]) / nf).sqrt();
                if v > best {
                    best = v;
                    best_sigma = s;
                }
            }
        }
        values.push(best.min(0.25));
        sigmas.push(best_sigma);
    }
    let mut curve = MixingCurve::new(
        lags.to_vec(),
        values,
        CurveKind::Alpha,
        Provenance::EmpiricalLowerDiagnostic,
    );
    curve.stderr = Some(sigmas);
    curve.meta.insert("events".into(), live.len().to_string());
    curve.meta.insert("block".into(), w.to_string());
    curve.meta.insert(
        "note".into(),
        "lower-bound diagnostic over a restricted event family, not an estimator of the sup".into(),
    );
    Ok(curve)
}
