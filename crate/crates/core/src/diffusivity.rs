//! Concentration-dependent diffusivity models.
//!
//! Each model supplies D(c) > 0 on a declared validity interval, the
//! integrated form F(c) = integral of D from `c_ref` to c, its inverse,
//! derivative lists, and composition with a truncated time series of c.

use crate::error::{Error, Result};
use crate::grid::{self, FaceAverage, ScalarField3};

/// Default clamp floor for models that require positive concentration.
pub const DEFAULT_C_MIN: f64 = 1e-12;

/// Hard cap used when bracketing the inverse of F.
const BRACKET_LIMIT: usize = 200;

// "power law" is the domain term; the shared suffix with `Law` is incidental.
#[allow(clippy::enum_variant_names)]
#[derive(Debug, Clone, PartialEq)]
enum Law {
    Constant { d0: f64 },
    PowerLaw { d0: f64, m: f64 },
    Exponential { d0: f64, beta: f64 },
    Tabulated(Pchip),
}

/// A diffusivity law together with the reference concentration that anchors
/// the integrated form F and the clamp floor applied by solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusivityModel {
    law: Law,
    c_ref: f64,
    c_min: f64,
}

impl DiffusivityModel {
    /// D(c) = d0.
    pub fn constant(d0: f64) -> Result<Self> {
        check_positive("d0", d0)?;
        Ok(Self { law: Law::Constant { d0 }, c_ref: 0.0, c_min: DEFAULT_C_MIN })
    }

    /// D(c) = d0 * c^m, valid for c > 0.
    pub fn power_law(d0: f64, m: f64) -> Result<Self> {
        check_positive("d0", d0)?;
        if !m.is_finite() {
            return Err(Error::InvalidParameter(format!("power-law exponent must be finite, got {m}")));
        }
        if m <= -1.0 {
            return Err(Error::InvalidParameter(format!(
                "power-law exponent must exceed -1 so the integrated form exists at c_ref = 0, got {m}"
            )));
        }
        Ok(Self { law: Law::PowerLaw { d0, m }, c_ref: 0.0, c_min: DEFAULT_C_MIN })
    }

    /// D(c) = d0 * exp(beta * c).
    pub fn exponential(d0: f64, beta: f64) -> Result<Self> {
        check_positive("d0", d0)?;
        if !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("exponential rate must be finite, got {beta}")));
        }
        Ok(Self { law: Law::Exponential { d0, beta }, c_ref: 0.0, c_min: DEFAULT_C_MIN })
    }

    /// Monotone piecewise-cubic interpolation through (c, D) knots.
    /// Knot concentrations must be strictly increasing and every D positive.
    /// The reference concentration defaults to the first knot, since 0 may
    /// lie outside the table.
    pub fn tabulated(knots: &[(f64, f64)]) -> Result<Self> {
        let spline = Pchip::new(knots)?;
        let c_ref = spline.x[0];
        Ok(Self { law: Law::Tabulated(spline), c_ref, c_min: DEFAULT_C_MIN })
    }

    /// Move the anchor of F. Must lie inside the validity interval.
    pub fn with_c_ref(mut self, c_ref: f64) -> Result<Self> {
        let (lo, hi) = self.validity();
        if !c_ref.is_finite() || c_ref < lo || c_ref > hi {
            return Err(Error::DomainError { c: c_ref, lo, hi });
        }
        if matches!(self.law, Law::PowerLaw { .. }) && c_ref < 0.0 {
            return Err(Error::DomainError { c: c_ref, lo: 0.0, hi: f64::INFINITY });
        }
        self.c_ref = c_ref;
        Ok(self)
    }

    /// Change the clamp floor applied before evaluation by solvers.
    pub fn with_c_min(mut self, c_min: f64) -> Result<Self> {
        check_positive("c_min", c_min)?;
        self.c_min = c_min;
        Ok(self)
    }

    pub fn c_ref(&self) -> f64 {
        self.c_ref
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn name(&self) -> &'static str {
        match self.law {
            Law::Constant { .. } => "constant",
            Law::PowerLaw { .. } => "power-law",
            Law::Exponential { .. } => "exponential",
            Law::Tabulated(_) => "tabulated",
        }
    }

    /// True when dD/dc is identically zero.
    pub fn is_constant(&self) -> bool {
        matches!(self.law, Law::Constant { .. })
    }

    /// The constant diffusivity, when D does not depend on c.
    pub fn constant_value(&self) -> Option<f64> {
        match self.law {
            Law::Constant { d0 } => Some(d0),
            _ => None,
        }
    }

    /// Parameters (d0, m) when this is the pure power law D = d0 c^m.
    pub fn power_law_params(&self) -> Option<(f64, f64)> {
        match self.law {
            Law::PowerLaw { d0, m } => Some((d0, m)),
            _ => None,
        }
    }

    /// Interval of concentrations the model accepts.
    pub fn validity(&self) -> (f64, f64) {
        match &self.law {
            Law::Constant { .. } | Law::Exponential { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            // Open at 0; the clamp floor supplies the practical lower end.
            Law::PowerLaw { .. } => (0.0, f64::INFINITY),
            Law::Tabulated(p) => (p.x[0], *p.x.last().unwrap()),
        }
    }

    /// Highest derivative order `eval_d_derivs` can supply.
    pub fn max_derivative_order(&self) -> usize {
        match self.law {
            Law::Tabulated(_) => 2,
            _ => usize::MAX,
        }
    }

    fn check_domain(&self, c: f64) -> Result<()> {
        let (lo, hi) = self.validity();
        let ok = match self.law {
            Law::PowerLaw { .. } => c > 0.0 && c.is_finite(),
            _ => c >= lo && c <= hi && c.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::DomainError { c, lo, hi })
        }
    }

    /// Pull a concentration into the validity interval. Identity for models
    /// valid on all reals.
    pub fn clamp(&self, c: f64) -> f64 {
        match &self.law {
            Law::Constant { .. } | Law::Exponential { .. } => c,
            Law::PowerLaw { .. } => c.max(self.c_min),
            Law::Tabulated(p) => c.clamp(p.x[0], *p.x.last().unwrap()),
        }
    }

    /// D(c). Errors outside the validity interval.
    pub fn eval_d(&self, c: f64) -> Result<f64> {
        self.check_domain(c)?;
        Ok(self.eval_d_unchecked(c))
    }

    #[inline]
    fn eval_d_unchecked(&self, c: f64) -> f64 {
        match &self.law {
            Law::Constant { d0 } => *d0,
            Law::PowerLaw { d0, m } => d0 * c.powf(*m),
            Law::Exponential { d0, beta } => d0 * (beta * c).exp(),
            Law::Tabulated(p) => p.eval(c),
        }
    }

    /// [D(c), D'(c), ..., D^(order)(c)]. Tabulated models stop at order 2.
    pub fn eval_d_derivs(&self, c: f64, order: usize) -> Result<Vec<f64>> {
        self.check_domain(c)?;
        if order > self.max_derivative_order() {
            return Err(Error::UnsupportedOrder { model: self.name(), order, max: 2 });
        }
        let mut out = Vec::with_capacity(order + 1);
        match &self.law {
            Law::Constant { d0 } => {
                out.push(*d0);
                out.resize(order + 1, 0.0);
            }
            Law::PowerLaw { d0, m } => {
                // D^(k) = d0 * m (m-1) ... (m-k+1) * c^(m-k)
                let mut factor = *d0;
                for k in 0..=order {
                    out.push(factor * c.powf(m - k as f64));
                    factor *= m - k as f64;
                }
            }
            Law::Exponential { d0, beta } => {
                let mut v = d0 * (beta * c).exp();
                for _ in 0..=order {
                    out.push(v);
                    v *= beta;
                }
            }
            Law::Tabulated(p) => {
                out.push(p.eval(c));
                if order >= 1 {
                    out.push(p.deriv1(c));
                }
                if order >= 2 {
                    out.push(p.deriv2(c));
                }
            }
        }
        Ok(out)
    }

    /// F(c) = integral of D(s) ds from c_ref to c. Strictly increasing.
    pub fn kirchhoff_f(&self, c: f64) -> Result<f64> {
        self.check_domain(c)?;
        Ok(self.kirchhoff_f_unchecked(c))
    }

    #[inline]
    fn kirchhoff_f_unchecked(&self, c: f64) -> f64 {
        let r = self.c_ref;
        match &self.law {
            Law::Constant { d0 } => d0 * (c - r),
            Law::PowerLaw { d0, m } => {
                let p = m + 1.0;
                d0 * (c.powf(p) - r.powf(p)) / p
            }
            Law::Exponential { d0, beta } => {
                if *beta == 0.0 {
                    d0 * (c - r)
                } else {
                    d0 / beta * ((beta * c).exp() - (beta * r).exp())
                }
            }
            Law::Tabulated(p) => p.integral(r, c),
        }
    }

    /// Solve F(c) = f for c by safeguarded Newton iteration with a bisection
    /// fallback, to |F(c) - f| <= 1e-12 * max(1, |f|). Errors when `f` lies
    /// outside the attainable range of F.
    pub fn inverse_f(&self, f: f64) -> Result<f64> {
        if !f.is_finite() {
            return Err(Error::RangeError { f, lo: f64::NEG_INFINITY, hi: f64::INFINITY });
        }
        let tol = 1e-12 * f.abs().max(1.0);
        // Practical search bounds within the validity interval.
        let (vlo, vhi) = self.validity();
        let slo = match self.law {
            Law::PowerLaw { .. } => self.c_min,
            Law::Tabulated(_) => vlo,
            _ => f64::NEG_INFINITY,
        };

        // Expand a bracket [lo, hi] with F(lo) <= f <= F(hi) starting at the
        // anchor, where F = 0.
        let mut lo = self.c_ref;
        let mut hi = self.c_ref;
        let mut flo = 0.0;
        let mut fhi = 0.0;
        let mut step = 0.5 * (1.0 + self.c_ref.abs());
        let mut iters = 0;
        while fhi < f {
            hi = if vhi.is_finite() { (hi + step).min(vhi) } else { hi + step };
            fhi = self.kirchhoff_f_unchecked(hi);
            step *= 2.0;
            iters += 1;
            if (hi >= vhi && fhi < f) || iters > BRACKET_LIMIT {
                return Err(Error::RangeError { f, lo: self.range_floor(slo), hi: fhi });
            }
        }
        step = 0.5 * (1.0 + self.c_ref.abs());
        iters = 0;
        while flo > f {
            lo = if slo.is_finite() { (lo - step).max(slo) } else { lo - step };
            flo = self.kirchhoff_f_unchecked(lo);
            step *= 2.0;
            iters += 1;
            if (lo <= slo && flo > f) || iters > BRACKET_LIMIT {
                return Err(Error::RangeError { f, lo: flo, hi: fhi });
            }
        }

        let mut c = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fc = self.kirchhoff_f_unchecked(c) - f;
            if fc.abs() <= tol {
                return Ok(c);
            }
            if fc > 0.0 {
                hi = c;
            } else {
                lo = c;
            }
            let d = self.eval_d_unchecked(c);
            let newton = c - fc / d;
            c = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * (1.0 + c.abs()) {
                return Ok(c);
            }
        }
        Ok(c)
    }

    fn range_floor(&self, slo: f64) -> f64 {
        if slo.is_finite() {
            self.kirchhoff_f_unchecked(slo)
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Given coefficients a_n of c(t) = sum a_n t^n, return the coefficients
    /// d_n of D(c(t)) to the same order. a[0] must lie in the validity
    /// interval. Tabulated models support orders up to 2.
    pub fn taylor_compose(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.is_empty() {
            return Err(Error::InsufficientData("taylor_compose needs at least a[0]".into()));
        }
        let n = a.len();
        let a0 = a[0];
        self.check_domain(a0)?;
        let mut d = Vec::with_capacity(n);
        match &self.law {
            Law::Constant { d0 } => {
                d.push(*d0);
                d.resize(n, 0.0);
            }
            Law::Exponential { d0, beta } => {
                // D' = beta c' D gives (k+1) d_{k+1} = beta sum (j+1) a_{j+1} d_{k-j}.
                d.push(d0 * (beta * a0).exp());
                for k in 0..n - 1 {
                    let mut s = 0.0;
                    for j in 0..=k {
                        s += (j + 1) as f64 * a[j + 1] * d[k - j];
                    }
                    d.push(beta * s / (k + 1) as f64);
                }
            }
            Law::PowerLaw { d0, m } => {
                // c D' = m D c' gives, solving for the next coefficient,
                // a0 (k+1) d_{k+1} =
                //   m sum_{j=0..k} d_j (k+1-j) a_{k+1-j}
                //   - sum_{j=1..k} a_j (k+1-j) d_{k+1-j}.
                d.push(d0 * a0.powf(*m));
                for k in 0..n - 1 {
                    let mut s = 0.0;
                    for j in 0..=k {
                        s += m * d[j] * (k + 1 - j) as f64 * a[k + 1 - j];
                    }
                    for j in 1..=k {
                        s -= a[j] * (k + 1 - j) as f64 * d[k + 1 - j];
                    }
                    d.push(s / (a0 * (k + 1) as f64));
                }
            }
            Law::Tabulated(p) => {
                if n > 3 {
                    return Err(Error::UnsupportedOrder { model: self.name(), order: n - 1, max: 2 });
                }
                d.push(p.eval(a0));
                if n >= 2 {
                    d.push(p.deriv1(a0) * a[1]);
                }
                if n >= 3 {
                    d.push(p.deriv1(a0) * a[2] + 0.5 * p.deriv2(a0) * a[1] * a[1]);
                }
            }
        }
        Ok(d)
    }

    /// One incremental step of `taylor_compose` over whole fields: given
    /// coefficient fields a[0..=k] of c(t) and d[0..k] of D(c(t)), produce
    /// d[k]. a[0] must already be clamped into the validity interval.
    pub fn taylor_compose_next(
        &self,
        a: &[ScalarField3],
        d: &[ScalarField3],
    ) -> Result<ScalarField3> {
        let k = d.len(); // index being produced
        if k == 0 || a.len() <= k {
            return Err(Error::InsufficientData(format!(
                "compose step needs a[0..={k}] and d[0..{k}], got {} and {}",
                a.len(),
                d.len()
            )));
        }
        let g = *a[0].grid();
        let len = g.len();
        let mut out = vec![0.0; len];
        match &self.law {
            Law::Constant { .. } => {}
            Law::Exponential { beta, .. } => {
                // (k) d_k = beta sum_{j=0}^{k-1} (j+1) a_{j+1} d_{k-1-j}
                for j in 0..k {
                    let w = (j + 1) as f64;
                    let av = a[j + 1].values();
                    let dv = d[k - 1 - j].values();
                    for (o, (&ai, &di)) in out.iter_mut().zip(av.iter().zip(dv)) {
                        *o += w * ai * di;
                    }
                }
                let s = beta / k as f64;
                for o in &mut out {
                    *o *= s;
                }
            }
            Law::PowerLaw { m, .. } => {
                // a0 k d_k = m sum_{j=0}^{k-1} d_j (k-j) a_{k-j}
                //           -   sum_{j=1}^{k-1} a_j (k-j) d_{k-j}
                for j in 0..k {
                    let w = (k - j) as f64;
                    let dv = d[j].values();
                    let av = a[k - j].values();
                    for (o, (&di, &ai)) in out.iter_mut().zip(dv.iter().zip(av)) {
                        *o += m * w * di * ai;
                    }
                }
                for j in 1..k {
                    let w = (k - j) as f64;
                    let av = a[j].values();
                    let dv = d[k - j].values();
                    for (o, (&ai, &di)) in out.iter_mut().zip(av.iter().zip(dv)) {
                        *o -= w * ai * di;
                    }
                }
                let a0 = a[0].values();
                let kf = k as f64;
                for (o, &a0i) in out.iter_mut().zip(a0) {
                    *o /= a0i * kf;
                }
            }
            Law::Tabulated(p) => {
                if k > 2 {
                    return Err(Error::UnsupportedOrder { model: self.name(), order: k, max: 2 });
                }
                let a0 = a[0].values();
                let a1 = a[1].values();
                if k == 1 {
                    for (o, (&c0, &c1)) in out.iter_mut().zip(a0.iter().zip(a1)) {
                        *o = p.deriv1(c0) * c1;
                    }
                } else {
                    let a2 = a[2].values();
                    for i in 0..len {
                        out[i] = p.deriv1(a0[i]) * a2[i] + 0.5 * p.deriv2(a0[i]) * a1[i] * a1[i];
                    }
                }
            }
        }
        ScalarField3::from_values(g, out)
    }

    /// D evaluated at every (clamped) cell value. Returns the field and the
    /// number of cells the clamp floor changed.
    pub fn eval_d_field(&self, c: &ScalarField3) -> (ScalarField3, usize) {
        let mut clamped = 0usize;
        let mut data = Vec::with_capacity(c.values().len());
        for &v in c.values() {
            let cv = self.clamp(v);
            if cv != v {
                clamped += 1;
            }
            data.push(self.eval_d_unchecked(cv));
        }
        (
            ScalarField3::from_values(*c.grid(), data).expect("same length"),
            clamped,
        )
    }

    /// F evaluated at every (clamped) cell value.
    pub fn kirchhoff_f_field(&self, c: &ScalarField3) -> (ScalarField3, usize) {
        let mut clamped = 0usize;
        let mut data = Vec::with_capacity(c.values().len());
        for &v in c.values() {
            let cv = self.clamp(v);
            if cv != v {
                clamped += 1;
            }
            data.push(self.kirchhoff_f_unchecked(cv));
        }
        (
            ScalarField3::from_values(*c.grid(), data).expect("same length"),
            clamped,
        )
    }

    /// Derivative fields [D, D', .., D^(order)] over clamped cell values.
    pub fn eval_d_derivs_field(&self, c: &ScalarField3, order: usize) -> Result<Vec<ScalarField3>> {
        if order > self.max_derivative_order() {
            return Err(Error::UnsupportedOrder { model: self.name(), order, max: 2 });
        }
        let n = c.values().len();
        let mut cols = vec![Vec::with_capacity(n); order + 1];
        for &v in c.values() {
            let derivs = self.eval_d_derivs(self.clamp(v), order)?;
            for (col, val) in cols.iter_mut().zip(derivs) {
                col.push(val);
            }
        }
        Ok(cols
            .into_iter()
            .map(|col| ScalarField3::from_values(*c.grid(), col).expect("same length"))
            .collect())
    }

    /// Diffusivity of the zero-extended exterior on free-decay grids.
    pub fn d_ghost(&self) -> f64 {
        self.eval_d_unchecked(self.clamp(0.0))
    }

    /// Conservative div(D(c) grad c) with D from this model.
    pub fn div_d_grad(&self, c: &ScalarField3, avg: FaceAverage) -> Result<ScalarField3> {
        let (d, _) = self.eval_d_field(c);
        grid::div_d_grad(c, &d, self.d_ghost(), avg)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone, PartialEq)]
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl Pchip {
    fn new(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "tabulated model needs at least 2 knots, got {}",
                knots.len()
            )));
        }
        let x: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let y: Vec<f64> = knots.iter().map(|k| k.1).collect();
        for w in x.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter(format!(
                    "tabulated concentrations must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for (&xi, &yi) in x.iter().zip(&y) {
            if !(yi > 0.0) || !yi.is_finite() || !xi.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "tabulated diffusivity must be positive and finite, got D({xi}) = {yi}"
                )));
            }
        }

        let n = x.len();
        let hs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = hs.iter().zip(y.windows(2)).map(|(h, w)| (w[1] - w[0]) / h).collect();
        let mut slope = vec![0.0; n];

        if n == 2 {
            slope[0] = delta[0];
            slope[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                let (d0, d1) = (delta[i - 1], delta[i]);
                if d0 * d1 <= 0.0 {
                    slope[i] = 0.0;
                } else {
                    let w1 = 2.0 * hs[i] + hs[i - 1];
                    let w2 = hs[i] + 2.0 * hs[i - 1];
                    slope[i] = (w1 + w2) / (w1 / d0 + w2 / d1);
                }
            }
            slope[0] = endpoint_slope(hs[0], hs[1], delta[0], delta[1]);
            slope[n - 1] = endpoint_slope(hs[n - 2], hs[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Pchip { x, y, slope })
    }

    fn segment(&self, c: f64) -> usize {
        // c is inside [x0, xN]; find i with x[i] <= c <= x[i+1].
        match self.x.binary_search_by(|v| v.partial_cmp(&c).unwrap()) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.x.len() - 2),
        }
    }

    fn eval(&self, c: f64) -> f64 {
        let i = self.segment(c);
        let h = self.x[i + 1] - self.x[i];
        let t = (c - self.x[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.slope[i] * h, self.slope[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (t3 - t2)
    }

    fn deriv1(&self, c: f64) -> f64 {
        let i = self.segment(c);
        let h = self.x[i + 1] - self.x[i];
        let t = (c - self.x[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.slope[i] * h, self.slope[i + 1] * h);
        let t2 = t * t;
        (y0 * (6.0 * t2 - 6.0 * t)
            + m0 * (3.0 * t2 - 4.0 * t + 1.0)
            + y1 * (-6.0 * t2 + 6.0 * t)
            + m1 * (3.0 * t2 - 2.0 * t))
            / h
    }

    fn deriv2(&self, c: f64) -> f64 {
        let i = self.segment(c);
        let h = self.x[i + 1] - self.x[i];
        let t = (c - self.x[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.slope[i] * h, self.slope[i + 1] * h);
        (y0 * (12.0 * t - 6.0)
            + m0 * (6.0 * t - 4.0)
            + y1 * (-12.0 * t + 6.0)
            + m1 * (6.0 * t - 2.0))
            / (h * h)
    }

    /// Integral of the interpolant from a to b (either order), by adaptive
    /// Simpson on each knot segment. Simpson is exact on cubics, so this
    /// terminates at the first level with the analytic segment integral.
    fn integral(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut total = 0.0;
        for i in 0..self.x.len() - 1 {
            let s0 = self.x[i].max(lo);
            let s1 = self.x[i + 1].min(hi);
            if s1 > s0 {
                total += adaptive_simpson(&|c| self.eval(c), s0, s1, 1e-12);
            }
        }
        sign * total
    }
}

fn endpoint_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    // Shape-preserving three-point endpoint slope.
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, width: f64) -> f64 {
        width / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            left + right + err / 15.0
        } else {
            recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    recurse(f, a, fa, b, fb, m, fm, simpson(fa, fm, fb, b - a), tol, 48)
}
