//! Time-Taylor series for dc/dt = laplacian(F(c)), built one Laplacian per
//! order through the integrated diffusivity F.
//!
//! Coefficients are stored in monomial form: c(t) ~ sum a_n t^n, with
//! f_n and d_n the matching coefficients of F(c(t)) and D(c(t)). The three
//! families are coupled by
//!
//!   (n+1) a_{n+1} = laplacian(f_n)
//!   (n+1) f_{n+1} = sum_{k=0..n} (k+1) a_{k+1} d_{n-k}
//!
//! and d follows from the model's composition recurrence.

use crate::diffusivity::DiffusivityModel;
use crate::error::{Error, Result};
use crate::grid::{laplacian, Grid3, ScalarField3};

/// Largest supported series order.
pub const MAX_ORDER: usize = 30;

/// Coefficient magnitude past which the series is declared divergent.
const BLOWUP: f64 = 1e100;

/// A truncated series solution around t = 0.
///
/// For order N the state holds a_0..a_{N+1}, f_0..f_N and d_0..d_N; the
/// extra concentration coefficient comes from the final Laplacian.
#[derive(Debug, Clone)]
pub struct TaylorState {
    model: DiffusivityModel,
    order: usize,
    a: Vec<ScalarField3>,
    f: Vec<ScalarField3>,
    d: Vec<ScalarField3>,
    clamped_cells: usize,
}

/// Magnitude of the first neglected contribution at a given time.
#[derive(Debug, Clone)]
pub struct RemainderEstimate {
    /// t^(N+1) * a_{N+1}, the series' own highest-order term.
    pub field: ScalarField3,
    /// Max-abs of `field`.
    pub linf: f64,
    /// Max-abs of the t^(N+2) term, one order past the stored series.
    pub next_term_linf: f64,
}

/// Build the series for initial data `c0` up to the given order.
///
/// Initial values are pulled into the model's validity interval first; the
/// number of changed cells is recorded on the state. Fails if any
/// coefficient exceeds 1e100 in magnitude (zero usable horizon) or if the
/// model cannot supply derivatives of the required order.
pub fn build_series(
    c0: &ScalarField3,
    model: &DiffusivityModel,
    order: usize,
) -> Result<TaylorState> {
    if order > MAX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "series order must be at most {MAX_ORDER}, got {order}"
        )));
    }

    let mut clamped_cells = 0usize;
    let a0 = {
        let mut data = Vec::with_capacity(c0.values().len());
        for &v in c0.values() {
            let cv = model.clamp(v);
            if cv != v {
                clamped_cells += 1;
            }
            data.push(cv);
        }
        ScalarField3::from_values(*c0.grid(), data)?
    };

    let (d0, _) = model.eval_d_field(&a0);
    let (f0, _) = model.kirchhoff_f_field(&a0);

    let mut a = Vec::with_capacity(order + 2);
    let mut f = Vec::with_capacity(order + 1);
    let mut d = Vec::with_capacity(order + 1);
    a.push(a0);
    f.push(f0);
    d.push(d0);

    for n in 0..=order {
        let next_a = laplacian(&f[n]).scaled(1.0 / (n + 1) as f64);
        check_magnitude(&next_a, n + 1)?;
        a.push(next_a);

        if n < order {
            let next_d = model.taylor_compose_next(&a, &d)?;
            check_magnitude(&next_d, n + 1)?;
            d.push(next_d);
            f.push(f_next(&a, &d, n)?);
        }
    }

    Ok(TaylorState { model: model.clone(), order, a, f, d, clamped_cells })
}

/// (n+1) f_{n+1} = sum_{k=0..n} (k+1) a_{k+1} d_{n-k}; needs a up to n+1
/// and d up to n.
fn f_next(a: &[ScalarField3], d: &[ScalarField3], n: usize) -> Result<ScalarField3> {
    let mut acc = ScalarField3::zeros(*a[0].grid());
    for k in 0..=n {
        let term = a[k + 1].zip_with(&d[n - k], |av, dv| av * dv)?;
        acc.axpy((k + 1) as f64, &term)?;
    }
    Ok(acc.scaled(1.0 / (n + 1) as f64))
}

fn check_magnitude(field: &ScalarField3, order: usize) -> Result<()> {
    let m = field.linf();
    if !m.is_finite() || m > BLOWUP {
        Err(Error::Divergence { order })
    } else {
        Ok(())
    }
}

impl TaylorState {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn model(&self) -> &DiffusivityModel {
        &self.model
    }

    pub fn grid(&self) -> &Grid3 {
        self.a[0].grid()
    }

    /// Cells whose initial value the validity clamp changed.
    pub fn clamped_cells(&self) -> usize {
        self.clamped_cells
    }

    /// Concentration coefficient a_n, 0 <= n <= order + 1.
    pub fn coefficient(&self, n: usize) -> &ScalarField3 {
        &self.a[n]
    }

    /// Integrated-diffusivity coefficient f_n, 0 <= n <= order.
    pub fn f_coefficient(&self, n: usize) -> &ScalarField3 {
        &self.f[n]
    }

    /// Diffusivity coefficient d_n, 0 <= n <= order.
    pub fn d_coefficient(&self, n: usize) -> &ScalarField3 {
        &self.d[n]
    }

    /// Max-abs of each concentration coefficient, a_0..a_{order+1}.
    pub fn coefficient_norms(&self) -> Vec<f64> {
        self.a.iter().map(|c| c.linf()).collect()
    }

    /// c(t) by Horner evaluation over all stored coefficients (degree N+1).
    pub fn evaluate(&self, t: f64) -> ScalarField3 {
        horner(&self.a, t)
    }

    /// F-series at t by Horner evaluation (degree N).
    pub fn evaluate_f(&self, t: f64) -> ScalarField3 {
        horner(&self.f, t)
    }

    /// D-series at t by Horner evaluation (degree N).
    pub fn evaluate_d(&self, t: f64) -> ScalarField3 {
        horner(&self.d, t)
    }

    /// Time derivative of the F-series at t, sum of k f_k t^(k-1).
    pub fn evaluate_f_rate(&self, t: f64) -> ScalarField3 {
        let scaled: Vec<ScalarField3> = self
            .f
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, f)| f.scaled(k as f64))
            .collect();
        horner(&scaled, t)
    }

    /// Magnitude of the highest stored term at t, plus the one-past-the-end
    /// term for comparison. Both shrink with order inside the horizon.
    pub fn remainder_estimate(&self, t: f64) -> RemainderEstimate {
        let n1 = self.order + 1;
        let tn1 = t.powi(n1 as i32);
        let field = self.a[n1].scaled(tn1);
        let linf = field.linf();

        // One more compose-free step: f_{N+1} needs only stored a and d.
        let next = match f_next(&self.a, &self.d, self.order) {
            Ok(f_n1) => {
                let a_n2 = laplacian(&f_n1).scaled(1.0 / (n1 + 1) as f64);
                a_n2.linf() * t.powi(n1 as i32 + 1).abs()
            }
            Err(_) => f64::NAN,
        };
        RemainderEstimate { field, linf, next_term_linf: next }
    }

    /// Heuristic usable-time estimate: min over the last three orders of
    /// ‖a_n‖∞ / ‖a_{n+1}‖∞ — the time at which the top retained terms stop
    /// shrinking. For a single mode with rate λ this is (order−1)/|λ|, i.e.
    /// deliberately conservative about the highest orders rather than the
    /// true (infinite) radius of the exponential. Infinite for stationary
    /// data. Needs order >= 4.
    pub fn convergence_radius(&self) -> Result<f64> {
        if self.order < 4 {
            return Err(Error::InsufficientData(format!(
                "horizon estimate needs order >= 4, got {}",
                self.order
            )));
        }
        let norms = self.coefficient_norms();
        if norms[1..].iter().all(|&v| v == 0.0) {
            return Ok(f64::INFINITY);
        }
        let mut radius = f64::INFINITY;
        for n in self.order - 2..=self.order {
            let denom = norms[n + 1];
            let r = if denom == 0.0 { f64::INFINITY } else { norms[n] / denom };
            radius = radius.min(r);
        }
        Ok(radius)
    }
}

fn horner(coeffs: &[ScalarField3], t: f64) -> ScalarField3 {
    let mut acc = coeffs.last().expect("nonempty coefficients").clone();
    for c in coeffs.iter().rev().skip(1) {
        acc = acc.zip_with(c, |hi, lo| lo + t * hi).expect("same grid");
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    const TAU: f64 = 2.0 * std::f64::consts::PI;

    /// Periodic grid over a unit box carrying a single discrete eigenmode,
    /// sin(th i) sin(th j) sin(th k) with th = 2 pi m / n, on a flat baseline.
    ///
    /// The wavenumber matters for round-off: repeated stencil applications
    /// amplify float noise at the stiffest grid eigenvalue (12/h^2), so a
    /// mode's coefficients lose roughly a factor (12/h^2)/|lam| of accuracy
    /// per order. m = n/4 puts |lam| = 6/h^2, keeping that ratio at 2.
    fn eigenmode_setup(n: usize, m: usize, eps: f64) -> (Grid3, ScalarField3, f64) {
        let g = Grid3::centered(n, n, n, 1.0 / n as f64, Boundary::Periodic).unwrap();
        let th = TAU * m as f64 / n as f64;
        let mode = ScalarField3::from_index_fn(g, |i, j, k| {
            let s = |q: usize| (th * q as f64).sin();
            s(i) * s(j) * s(k)
        });
        let c0 = mode.map(|v| 1.0 + eps * v);
        let lam = -3.0 * (2.0 - 2.0 * th.cos()) / (g.h * g.h);
        (g, c0, lam)
    }

    fn gaussian(g: Grid3, amp: f64, sigma: f64, base: f64) -> ScalarField3 {
        ScalarField3::from_fn(g, |x, y, z| {
            base + amp * (-(x * x + y * y + z * z) / (sigma * sigma)).exp()
        })
    }

    #[test]
    fn order_zero_evaluates_two_terms() {
        let g = Grid3::centered(6, 6, 6, 0.25, Boundary::Periodic).unwrap();
        let c0 = ScalarField3::from_fn(g, |x, y, z| 1.0 + 0.2 * (x + y * z));
        let model = DiffusivityModel::exponential(0.8, 0.5).unwrap();
        let st = build_series(&c0, &model, 0).unwrap();
        let t = 0.37;
        let direct = st.coefficient(0).clone();
        let expect = direct
            .zip_with(st.coefficient(1), |a0, a1| a0 + t * a1)
            .unwrap();
        let got = st.evaluate(t);
        assert!(got.sub(&expect).unwrap().linf() <= 1e-15 * expect.linf());
    }

    #[test]
    fn constant_model_reproduces_exponential_mode_coefficients() {
        // For D = d0 the series must give a_n = eps (d0 lam)^n / n! * mode,
        // with lam the exact discrete eigenvalue.
        let d0 = 0.7;
        let eps = 0.25;
        let (_, c0, lam) = eigenmode_setup(16, 4, eps);
        let model = DiffusivityModel::constant(d0).unwrap();
        let st = build_series(&c0, &model, 8).unwrap();
        let mut factor = eps;
        for n in 1..=9 {
            factor *= d0 * lam / n as f64;
            let norm = st.coefficient(n).linf();
            assert!(
                (norm - factor.abs()).abs() <= 1e-10 * factor.abs(),
                "order {n}: {norm} vs {}",
                factor.abs()
            );
        }
    }

    #[test]
    fn evaluation_tracks_semidiscrete_decay() {
        let d0 = 1.0;
        let eps = 0.2;
        let (g, c0, lam) = eigenmode_setup(12, 3, eps);
        let model = DiffusivityModel::constant(d0).unwrap();
        let st = build_series(&c0, &model, 6).unwrap();
        let t = 0.5 / (d0 * lam.abs());
        let got = st.evaluate(t);
        let th = TAU * 3.0 / 12.0;
        let exact = ScalarField3::from_index_fn(g, |i, j, k| {
            let s = |q: usize| (th * q as f64).sin();
            1.0 + eps * (d0 * lam * t).exp() * s(i) * s(j) * s(k)
        });
        // Truncation of exp after 7 terms at |lam t| = 0.5 dominates the error.
        let rel = got.sub(&exact).unwrap().linf() / exact.linf();
        assert!(rel <= 5e-6, "relative error {rel}");
    }

    #[test]
    fn low_order_coefficients_match_direct_derivative_formulas() {
        // Independent route: the first two F-coefficients written out as
        // explicit stencil expressions,
        //   f1 = D(c0) lap(F(c0))
        //   f2 = (D'(c0) lap(F)^2 + D(c0) lap(D(c0) lap(F))) / 2
        // and a2 = lap(f1) / 2.
        let g = Grid3::centered(12, 12, 12, 1.0 / 12.0, Boundary::FreeDecay).unwrap();
        let c0 = gaussian(g, 1.0, 0.22, 1e-4);
        let model = DiffusivityModel::power_law(1.0, 1.0).unwrap();
        let st = build_series(&c0, &model, 4).unwrap();

        let a0 = st.coefficient(0);
        let (d_field, _) = model.eval_d_field(a0);
        let dprime = model.eval_d_derivs_field(a0, 1).unwrap().remove(1);
        let lap_f0 = laplacian(st.f_coefficient(0));

        let f1_oracle = d_field.zip_with(&lap_f0, |d, l| d * l).unwrap();
        let inner = laplacian(&f1_oracle);
        let f2_oracle = dprime
            .zip_with(&lap_f0, |dp, l| dp * l * l)
            .unwrap()
            .add(&d_field.zip_with(&inner, |d, l| d * l).unwrap())
            .unwrap()
            .scaled(0.5);
        let a2_oracle = laplacian(&f1_oracle).scaled(0.5);

        let scale = f1_oracle.linf();
        assert!(st.f_coefficient(1).sub(&f1_oracle).unwrap().linf() <= 1e-10 * scale);
        let scale2 = f2_oracle.linf();
        assert!(st.f_coefficient(2).sub(&f2_oracle).unwrap().linf() <= 1e-10 * scale2);
        let scale_a = a2_oracle.linf();
        assert!(st.coefficient(2).sub(&a2_oracle).unwrap().linf() <= 1e-10 * scale_a);
    }

    #[test]
    fn stored_d_matches_pointwise_composition() {
        // The per-order field recurrence must agree with composing the
        // scalar series cell by cell.
        let g = Grid3::centered(6, 6, 6, 0.21, Boundary::Periodic).unwrap();
        let c0 = ScalarField3::from_fn(g, |x, y, z| 1.3 + 0.4 * (3.0 * x).sin() * (y - z).cos());
        for model in [
            DiffusivityModel::power_law(0.9, 1.7).unwrap(),
            DiffusivityModel::exponential(1.1, -0.6).unwrap(),
        ] {
            let st = build_series(&c0, &model, 5).unwrap();
            let g = *st.grid();
            for cell in [0usize, 17, g.len() / 2, g.len() - 1] {
                let a_prefix: Vec<f64> = (0..=5).map(|n| st.coefficient(n).values()[cell]).collect();
                let d_oracle = model.taylor_compose(&a_prefix).unwrap();
                for (n, &expect) in d_oracle.iter().enumerate() {
                    let got = st.d_coefficient(n).values()[cell];
                    assert!(
                        (got - expect).abs() <= 1e-11 * expect.abs().max(1e-12),
                        "{} cell {cell} order {n}: {got} vs {expect}",
                        model.name()
                    );
                }
            }
        }
    }

    #[test]
    fn stationary_data_gives_exact_zero_coefficients() {
        let g = Grid3::centered(8, 8, 8, 0.1, Boundary::Periodic).unwrap();
        let c0 = ScalarField3::constant(g, 1.7);
        for model in [
            DiffusivityModel::constant(2.0).unwrap(),
            DiffusivityModel::power_law(1.0, 2.0).unwrap(),
            DiffusivityModel::exponential(0.5, 1.1).unwrap(),
            DiffusivityModel::tabulated(&[(0.5, 1.0), (1.5, 1.5), (2.5, 2.0)]).unwrap(),
        ] {
            let order = if model.max_derivative_order() == 2 { 2 } else { 6 };
            let st = build_series(&c0, &model, order).unwrap();
            for n in 1..=order + 1 {
                assert_eq!(st.coefficient(n).linf(), 0.0, "{} a_{n}", model.name());
            }
            let r = st.remainder_estimate(3.0);
            assert_eq!(r.linf, 0.0);
            assert_eq!(st.evaluate(5.0).sub(&c0).unwrap().linf(), 0.0);
            if order >= 4 {
                assert_eq!(st.convergence_radius().unwrap(), f64::INFINITY);
            }
        }
    }

    #[test]
    fn remainder_matches_mode_closed_form() {
        let d0 = 1.4;
        let eps = 0.1;
        let order = 5;
        let (_, c0, lam) = eigenmode_setup(16, 4, eps);
        let model = DiffusivityModel::constant(d0).unwrap();
        let st = build_series(&c0, &model, order).unwrap();
        let t = 0.8 / (d0 * lam.abs());
        let r = st.remainder_estimate(t);
        // a_{N+1} = eps (d0 lam)^{N+1}/(N+1)! * mode.
        let mut expect = eps;
        for n in 1..=order + 1 {
            expect *= d0 * lam.abs() * t / n as f64;
        }
        assert!(
            (r.linf - expect).abs() <= 1e-10 * expect,
            "remainder {} vs closed form {expect}",
            r.linf
        );
        assert!(r.next_term_linf < r.linf);
    }

    #[test]
    fn horizon_estimate_matches_mode_decay_rate() {
        let d0 = 2.0;
        let order = 8;
        let (_, c0, lam) = eigenmode_setup(16, 4, 0.3);
        let model = DiffusivityModel::constant(d0).unwrap();
        let st = build_series(&c0, &model, order).unwrap();
        let radius = st.convergence_radius().unwrap();
        // Single mode: a_n = eps (d0 lam)^n / n! times the mode, so the norm
        // ratio at order n is (n+1)/(d0 |lam|) and the min over the last
        // three orders lands at n = order-2.
        let expect = (order - 1) as f64 / (d0 * lam.abs());
        assert!(
            (radius - expect).abs() <= 1e-10 * expect,
            "radius {radius} vs term-balance time {expect}"
        );
        assert!(build_series(&c0, &model, 3).unwrap().convergence_radius().is_err());
    }

    #[test]
    fn f_series_is_consistent_with_integrated_evaluation() {
        let g = Grid3::centered(16, 16, 16, 1.0 / 16.0, Boundary::FreeDecay).unwrap();
        let c0 = gaussian(g, 1.0, 0.2, 1e-3);
        let model = DiffusivityModel::power_law(1.0, 1.0).unwrap();
        let st = build_series(&c0, &model, 8).unwrap();
        let t = st.convergence_radius().unwrap() / 4.0;
        let r = st.remainder_estimate(t);
        let via_series = st.evaluate_f(t);
        let (via_c, _) = model.kirchhoff_f_field(&st.evaluate(t));
        let diff = via_series.sub(&via_c).unwrap().linf();
        assert!(
            diff <= 10.0 * r.linf.max(1e-15),
            "F-route disagreement {diff} vs remainder {}",
            r.linf
        );
    }

    #[test]
    fn runaway_coefficients_are_reported() {
        let g = Grid3::centered(6, 6, 6, 1e-3, Boundary::Periodic).unwrap();
        let c0 = ScalarField3::from_fn(g, |x, _, _| 1e40 * (1.0 + (400.0 * x).sin().abs()));
        let model = DiffusivityModel::power_law(1.0, 2.0).unwrap();
        match build_series(&c0, &model, 6) {
            Err(Error::Divergence { order }) => assert!(order >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn tabulated_models_stop_at_supported_order() {
        let g = Grid3::centered(6, 6, 6, 0.2, Boundary::Periodic).unwrap();
        let c0 = ScalarField3::from_fn(g, |x, _, _| 1.5 + 0.3 * (4.0 * x).sin());
        let model = DiffusivityModel::tabulated(&[(0.5, 1.0), (1.5, 1.4), (2.5, 2.4)]).unwrap();
        assert!(build_series(&c0, &model, 2).is_ok());
        assert!(matches!(
            build_series(&c0, &model, 3),
            Err(Error::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn order_cap_is_enforced() {
        let g = Grid3::centered(4, 4, 4, 0.2, Boundary::Periodic).unwrap();
        let c0 = ScalarField3::constant(g, 1.0);
        let model = DiffusivityModel::constant(1.0).unwrap();
        assert!(build_series(&c0, &model, MAX_ORDER).is_ok());
        assert!(build_series(&c0, &model, MAX_ORDER + 1).is_err());
    }

    #[test]
    fn clamped_cells_are_counted() {
        let g = Grid3::centered(4, 4, 4, 0.2, Boundary::Periodic).unwrap();
        let mut vals = vec![1.0; g.len()];
        vals[3] = -0.5;
        vals[10] = 0.0;
        let c0 = ScalarField3::from_values(g, vals).unwrap();
        let model = DiffusivityModel::power_law(1.0, 1.0).unwrap();
        let st = build_series(&c0, &model, 2).unwrap();
        assert_eq!(st.clamped_cells(), 2);
    }
}
