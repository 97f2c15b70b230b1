//! Uniformly sampled vector signals on `[0, (len−1)·step]` and the
//! truncated inner products and norms used to state passivity.
//!
//! Horizons `T` are snapped to the nearest grid point and integrals use
//! the trapezoidal rule on the grid.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    step: f64,
    dim: usize,
    /// Row-major: sample `k` occupies `data[k*dim..(k+1)*dim]`.
    data: Vec<f64>,
}

impl SampledSignal {
    pub fn new(step: f64, samples: Vec<Vec<f64>>) -> Result<Self> {
        let dim = samples.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(samples.len() * dim);
        for (k, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::invalid(format!("sample {k} has dimension {}, expected {dim}", s.len())));
            }
            data.extend_from_slice(s);
        }
        Self::from_flat(step, dim, data)
    }

    pub fn from_flat(step: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::invalid(format!("signal step must be > 0, got {step}")));
        }
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid("signal must be nonempty with a constant dimension"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("signal has non-finite samples"));
        }
        Ok(SampledSignal { step, dim, data })
    }

    /// Samples `f(t)` at `t = k·step`, `k = 0..len`.
    pub fn from_fn(step: f64, len: usize, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let samples = (0..len).map(|k| f(k as f64 * step)).collect();
        let sig = Self::new(step, samples)?;
        if sig.dim != dim {
            return Err(Error::invalid("sample function returned the wrong dimension"));
        }
        Ok(sig)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// Final grid time.
    pub fn span(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// One scalar channel as a plain vector.
    pub fn channel(&self, i: usize) -> Vec<f64> {
        self.samples().map(|s| s[i]).collect()
    }

    /// Index of the grid point nearest to `t`.
    pub fn snap(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("horizon must be >= 0, got {t}")));
        }
        let k = (t / self.step).round();
        if k > (self.len() - 1) as f64 {
            // allow T slightly past the end from rounding in the caller
            if t - self.span() > 0.5 * self.step {
                return Err(Error::invalid(format!("horizon {t} outside signal span {}", self.span())));
            }
            return Ok(self.len() - 1);
        }
        Ok(k as usize)
    }

    fn same_grid_len(&self, other: &SampledSignal) -> Result<()> {
        if self.step != other.step || self.len() != other.len() {
            return Err(Error::invalid("signals do not share a grid"));
        }
        Ok(())
    }

    fn same_grid(&self, other: &SampledSignal) -> Result<()> {
        if self.step != other.step || self.len() != other.len() || self.dim != other.dim {
            return Err(Error::invalid("signals do not share grid and dimension"));
        }
        Ok(())
    }
}

/// Samples at times past `t` become zero vectors; the grid is unchanged.
pub fn truncate(sig: &SampledSignal, t: f64) -> Result<SampledSignal> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("truncation time must be >= 0, got {t}")));
    }
    let keep = if t >= sig.span() { sig.len() } else { sig.snap(t)? + 1 };
    let mut out = sig.clone();
    out.data[keep * sig.dim..].iter_mut().for_each(|v| *v = 0.0);
    Ok(out)
}

/// Trapezoidal `∫₀ᵀ uᵀ(t) y(t) dt`.
pub fn inner_product_truncated(u: &SampledSignal, y: &SampledSignal, t: f64) -> Result<f64> {
    u.same_grid(y)?;
    let last = u.snap(t)?;
    Ok(trapezoid(u.step, (0..=last).map(|k| dot(u.sample(k), y.sample(k)))))
}

/// `‖u‖_{2T}`.
pub fn l2t_norm(u: &SampledSignal, t: f64) -> Result<f64> {
    Ok(inner_product_truncated(u, u, t)?.max(0.0).sqrt())
}

/// Largest absolute component over all samples.
pub fn linf_norm(u: &SampledSignal) -> f64 {
    u.data.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Running trapezoidal integral of `uᵀy`; entry `k` is `⟨u, y⟩` up to grid time `k·step`.
pub fn cumulative_inner_product(u: &SampledSignal, y: &SampledSignal) -> Result<Vec<f64>> {
    u.same_grid(y)?;
    let mut out = Vec::with_capacity(u.len());
    let mut acc = 0.0;
    let mut prev = dot(u.sample(0), y.sample(0));
    out.push(0.0);
    for k in 1..u.len() {
        let cur = dot(u.sample(k), y.sample(k));
        acc += 0.5 * u.step * (prev + cur);
        out.push(acc);
        prev = cur;
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn trapezoid(step: f64, values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    let mut prev: Option<f64> = None;
    for v in values {
        if let Some(p) = prev {
            acc += 0.5 * step * (p + v);
        }
        prev = Some(v);
    }
    acc
}

/// 15 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.14e}")
}

/// Writes named signals sharing one grid as CSV with header
/// `t,<name>_1..<name>_n`.
pub fn write_csv<W: Write>(writer: W, signals: &[(&str, &SampledSignal)]) -> Result<()> {
    let Some((_, first)) = signals.first() else {
        return Err(Error::invalid("no signals to write"));
    };
    for (_, s) in signals {
        first.same_grid_len(s)?;
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    for (name, s) in signals {
        header.extend((1..=s.dim).map(|i| format!("{name}_{i}")));
    }
    w.write_record(&header)?;
    for k in 0..first.len() {
        let mut row = vec![format_value(first.time(k))];
        for (_, s) in signals {
            row.extend(s.sample(k).iter().map(|&v| format_value(v)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads CSV written by [`write_csv`]; columns are grouped back into
/// signals by their `<name>_<i>` prefix, in header order.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<(String, SampledSignal)>> {
    let mut rd = csv::Reader::from_reader(reader);
    let header = rd.headers()?.clone();
    if header.get(0) != Some("t") {
        return Err(Error::invalid("first CSV column must be `t`"));
    }
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (col, name) in header.iter().enumerate().skip(1) {
        let (base, idx) = name.rsplit_once('_').ok_or_else(|| Error::invalid(format!("bad column name `{name}`")))?;
        let idx: usize = idx.parse().map_err(|_| Error::invalid(format!("bad column index in `{name}`")))?;
        match groups.last_mut() {
            Some((g, cols)) if g == base && idx == cols.len() + 1 => cols.push(col),
            _ if idx == 1 => groups.push((base.to_string(), vec![col])),
            _ => return Err(Error::invalid(format!("columns of `{base}` out of order"))),
        }
    }
    let mut times = Vec::new();
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); groups.len()];
    for rec in rd.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::invalid("short CSV row"))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad CSV number: {e}")))
        };
        times.push(parse(0)?);
        for (g, (_, cols)) in groups.iter().enumerate() {
            for &c in cols {
                data[g].push(parse(c)?);
            }
        }
    }
    if times.len() < 2 {
        return Err(Error::invalid("CSV needs at least two rows to recover the step"));
    }
    let step = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    groups
        .into_iter()
        .zip(data)
        .map(|((name, cols), d)| Ok((name, SampledSignal::from_flat(step, cols.len(), d)?)))
        .collect()
}
