//! Residual checks for the exact relations a diffusion trajectory must
//! satisfy: the time-integrated form, the open-space reconstructions of the
//! flux potential and of the concentration, transport laws for F, for
//! φ = ∇²F, and for derivatives of the diffusivity.
//!
//! Each check returns a [`ResidualReport`] with interior norms (the inner 60%
//! per axis) and the scale of the equation's largest term, so residuals can
//! be compared across scenarios as dimensionless numbers. For smooth
//! trajectories every normalized residual shrinks at second order when grid
//! spacing and snapshot spacing are halved together.

use crate::diffusivity::DiffusivityModel;
use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, laplacian, Boundary, Grid3, ScalarField3};
use crate::poisson::greens_fft;
use crate::taylor::TaylorState;

/// Where a stored trajectory came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectorySource {
    ReferenceSolver,
    TaylorSeries,
}

/// A concentration history sampled at increasing times on one grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    model: DiffusivityModel,
    grid: Grid3,
    times: Vec<f64>,
    fields: Vec<ScalarField3>,
    pub source: TrajectorySource,
}

impl Trajectory {
    pub fn new(
        model: DiffusivityModel,
        times: Vec<f64>,
        fields: Vec<ScalarField3>,
        source: TrajectorySource,
    ) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "a trajectory needs at least 3 snapshots for time differencing, got {}",
                times.len()
            )));
        }
        if times.len() != fields.len() {
            return Err(Error::GridMismatch("times and fields must pair up"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "snapshot times must be strictly increasing".into(),
            ));
        }
        let grid = *fields[0].grid();
        if fields.iter().any(|f| *f.grid() != grid) {
            return Err(Error::GridMismatch("all snapshots must share one grid"));
        }
        Ok(Trajectory { model, grid, times, fields, source })
    }

    pub fn model(&self) -> &DiffusivityModel {
        &self.model
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn field(&self, idx: usize) -> &ScalarField3 {
        &self.fields[idx]
    }

    fn check_index(&self, idx: usize) -> Result<()> {
        if idx < self.len() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "snapshot index {idx} out of range 0..{}",
                self.len()
            )))
        }
    }

    /// Indices of the 3-point stencil around idx (clamped inside the run).
    fn window(&self, idx: usize) -> [usize; 3] {
        let mid = idx.clamp(1, self.len() - 2);
        [mid - 1, mid, mid + 1]
    }

    /// d/dt of `of(snapshot)` at times[idx], second order even on nonuniform
    /// spacing: derivative of the quadratic through the three nearest
    /// snapshots, one-sided at the ends.
    pub fn time_derivative_of<F>(&self, idx: usize, mut of: F) -> Result<ScalarField3>
    where
        F: FnMut(&ScalarField3) -> ScalarField3,
    {
        self.check_index(idx)?;
        let [i0, i1, i2] = self.window(idx);
        let (t0, t1, t2) = (self.times[i0], self.times[i1], self.times[i2]);
        let te = self.times[idx];
        let w0 = (2.0 * te - t1 - t2) / ((t0 - t1) * (t0 - t2));
        let w1 = (2.0 * te - t0 - t2) / ((t1 - t0) * (t1 - t2));
        let w2 = (2.0 * te - t0 - t1) / ((t2 - t0) * (t2 - t1));
        let mut acc = of(&self.fields[i0]).scaled(w0);
        acc = acc.add(&of(&self.fields[i1]).scaled(w1))?;
        acc.add(&of(&self.fields[i2]).scaled(w2))
    }

    /// d c/dt at times[idx].
    pub fn time_derivative(&self, idx: usize) -> Result<ScalarField3> {
        self.time_derivative_of(idx, |f| f.clone())
    }

    /// Characteristic snapshot spacing at idx (mean of adjacent gaps).
    pub fn local_dt(&self, idx: usize) -> f64 {
        let [i0, _, i2] = self.window(idx);
        (self.times[i2] - self.times[i0]) / 2.0
    }
}

/// Identity checked by a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquationId {
    /// c(t) = c(0) + ∇² ∫₀ᵗ F(c) dt′
    E2200,
    /// F(c) reconstructed from ∂c/∂t by open-space inversion
    E3090,
    /// (1/D)∂c/∂t − ∇lnD·∇c = ∇²c (differential form)
    E4710,
    /// c reconstructed from that combination by open-space inversion
    E4720,
    /// ∂F/∂t = D ∇²F
    E5020,
    /// F reconstructed from (1/D)∂F/∂t — same residual as E3090 after the
    /// chain-rule substitution
    E5100,
    /// φ = (1/D) ∂F/∂t with φ = ∇²F
    E5120,
    /// D·φ = −∂/∂t of the open-space convolution of φ
    E5160,
    /// ∂φ/∂t = ∇²(Dφ)
    E5200,
    /// ∂D/∂t = D′ ∇·(D ∇D / D′)
    E5680,
    /// ∂D⁽ᴺ⁾/∂t = D⁽ᴺ⁺¹⁾ ∇·(D ∇D⁽ᴺ⁾ / D⁽ᴺ⁺¹⁾)
    E6690,
}

impl EquationId {
    pub fn as_str(self) -> &'static str {
        match self {
            EquationId::E2200 => "E2200",
            EquationId::E3090 => "E3090",
            EquationId::E4710 => "E4710",
            EquationId::E4720 => "E4720",
            EquationId::E5020 => "E5020",
            EquationId::E5100 => "E5100",
            EquationId::E5120 => "E5120",
            EquationId::E5160 => "E5160",
            EquationId::E5200 => "E5200",
            EquationId::E5680 => "E5680",
            EquationId::E6690 => "E6690",
        }
    }

    pub fn all() -> [EquationId; 11] {
        [
            EquationId::E2200,
            EquationId::E3090,
            EquationId::E4710,
            EquationId::E4720,
            EquationId::E5020,
            EquationId::E5100,
            EquationId::E5120,
            EquationId::E5160,
            EquationId::E5200,
            EquationId::E5680,
            EquationId::E6690,
        ]
    }
}

/// Interior norms of one identity's residual at one time.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub equation: EquationId,
    pub t: f64,
    pub h: f64,
    /// Snapshot spacing the time derivatives used at t.
    pub dt: f64,
    pub norm_l2: f64,
    pub norm_linf: f64,
    /// Interior max-abs of the equation's largest term; divide the norms by
    /// this for a scale-free residual. Floored at a tiny positive value so
    /// exact-zero identities stay well-defined.
    pub normalization: f64,
    pub warnings: Vec<String>,
}

impl ResidualReport {
    pub fn normalized_l2(&self) -> f64 {
        self.norm_l2 / self.normalization
    }

    pub fn normalized_linf(&self) -> f64 {
        self.norm_linf / self.normalization
    }
}

/// ∇²F(c), the rate potential shared by several of the identities.
#[derive(Debug, Clone)]
pub struct AuxiliaryField {
    pub phi: ScalarField3,
}

/// φ = ∇²F(c) for a single snapshot.
pub fn compute_phi(c: &ScalarField3, model: &DiffusivityModel) -> AuxiliaryField {
    let (f, _) = model.kirchhoff_f_field(c);
    AuxiliaryField { phi: laplacian(&f) }
}

const SCALE_FLOOR: f64 = 1e-300;

fn report(
    equation: EquationId,
    traj: &Trajectory,
    idx: usize,
    residual: &ScalarField3,
    scale: f64,
    warnings: Vec<String>,
) -> ResidualReport {
    ResidualReport {
        equation,
        t: traj.times()[idx],
        h: traj.grid().h,
        dt: traj.local_dt(idx),
        norm_l2: residual.interior_rms(),
        norm_linf: residual.interior_linf(),
        normalization: scale.max(SCALE_FLOOR),
        warnings,
    }
}

fn decay_warning(label: &str, field: &ScalarField3) -> Option<String> {
    let peak = field.linf();
    let face = field.face_linf();
    if peak > 0.0 && face > 1e-6 * peak {
        Some(format!(
            "{label} at box faces is {:.2e} of its maximum; open-space terms assume decay",
            face / peak
        ))
    } else {
        None
    }
}

fn clamp_warning(label: &str, count: usize) -> Option<String> {
    if count > 0 {
        Some(format!("{label}: {count} cells clamped to the model's validity floor"))
    } else {
        None
    }
}

/// c(t) − c(0) − ∇² of the trapezoid time integral of F(c) over the stored
/// snapshots up to t. Normalized by the accumulated change ‖c(t) − c(0)‖.
pub fn residual_e2200(traj: &Trajectory, t_index: usize) -> Result<ResidualReport> {
    traj.check_index(t_index)?;
    if t_index < 1 {
        return Err(Error::InsufficientData(
            "time-integral residual needs at least one step from the initial snapshot".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut clamped = 0usize;
    let mut f_prev = {
        let (f, n) = traj.model().kirchhoff_f_field(traj.field(0));
        clamped += n;
        f
    };
    let mut integral = ScalarField3::zeros(*traj.grid());
    for i in 1..=t_index {
        let (f_here, n) = traj.model().kirchhoff_f_field(traj.field(i));
        clamped += n;
        let w = 0.5 * (traj.times()[i] - traj.times()[i - 1]);
        integral = integral.add(&f_prev.add(&f_here)?.scaled(w))?;
        f_prev = f_here;
    }
    let change = traj.field(t_index).sub(traj.field(0))?;
    let residual = change.sub(&laplacian(&integral))?;
    let scale = change.interior_linf();
    warnings.extend(clamp_warning("integrated flux potential", clamped));
    Ok(report(EquationId::E2200, traj, t_index, &residual, scale, warnings))
}

fn e3090_inner(traj: &Trajectory, t_index: usize) -> Result<(ScalarField3, f64, Vec<String>)> {
    traj.check_index(t_index)?;
    let mut warnings = Vec::new();
    let (f, clamped) = traj.model().kirchhoff_f_field(traj.field(t_index));
    warnings.extend(clamp_warning("flux potential", clamped));
    warnings.extend(decay_warning("flux potential", &f));
    let dcdt = traj.time_derivative(t_index)?;
    let recon = greens_fft(&dcdt.scaled(-1.0))?;
    warnings.extend(recon.warnings);
    let residual = f.sub(&recon.v)?;
    let scale = f.interior_linf().max(recon.v.interior_linf());
    Ok((residual, scale, warnings))
}

/// F(c(t)) minus the open-space reconstruction of F from ∂c/∂t.
pub fn residual_e3090(traj: &Trajectory, t_index: usize) -> Result<ResidualReport> {
    let (residual, scale, warnings) = e3090_inner(traj, t_index)?;
    Ok(report(EquationId::E3090, traj, t_index, &residual, scale, warnings))
}

/// The differential balance (1/D)∂c/∂t − ∇lnD·∇c = ∇²c and its open-space
/// integral form; returns (differential report, integral report).
///
/// The model's reference concentration doubles as the far-field level: the
/// stencils act on c − c_ref and on lnD − lnD(c_ref), the parts that
/// actually decay, so zero-extension at the faces sees the right exterior
/// values and the global convolution is not polluted by face defects.
pub fn residual_e4710_e4720(
    traj: &Trajectory,
    t_index: usize,
) -> Result<(ResidualReport, ResidualReport)> {
    traj.check_index(t_index)?;
    let mut warnings = Vec::new();
    let c = traj.field(t_index);
    let model = traj.model();
    let (d, clamped) = model.eval_d_field(c);
    warnings.extend(clamp_warning("diffusivity", clamped));
    let c_far = model.clamp(model.c_ref());
    let ln_d_far = model.eval_d(c_far)?.ln();
    let c_decaying = c.map(|v| v - c_far);
    warnings.extend(decay_warning("concentration less its far-field level", &c_decaying));
    let dcdt = traj.time_derivative(t_index)?;

    let ln_d = d.map(|v| v.ln() - ln_d_far);
    let advective = gradient(&ln_d).dot(&gradient(&c_decaying))?;
    let g = dcdt.zip_with(&d, |r, dv| r / dv)?.sub(&advective)?;

    let lap_c = laplacian(&c_decaying);
    let diff_residual = g.sub(&lap_c)?;
    let diff_scale = g.interior_linf().max(lap_c.interior_linf());
    let differential = report(
        EquationId::E4710,
        traj,
        t_index,
        &diff_residual,
        diff_scale,
        warnings.clone(),
    );

    let recon = greens_fft(&g.scaled(-1.0))?;
    warnings.extend(recon.warnings);
    let int_residual = c_decaying.sub(&recon.v)?;
    let int_scale = c_decaying.interior_linf().max(recon.v.interior_linf());
    let integral = report(EquationId::E4720, traj, t_index, &int_residual, int_scale, warnings);
    Ok((differential, integral))
}

/// ∂F/∂t − D(c)·∇²F along a stored trajectory.
pub fn residual_e5020(traj: &Trajectory, t_index: usize) -> Result<ResidualReport> {
    traj.check_index(t_index)?;
    let mut warnings = Vec::new();
    let mut clamped = 0usize;
    let dfdt = traj.time_derivative_of(t_index, |c| {
        let (f, n) = traj.model().kirchhoff_f_field(c);
        clamped += n;
        f
    })?;
    let c = traj.field(t_index);
    let (f, n1) = traj.model().kirchhoff_f_field(c);
    let (d, n2) = traj.model().eval_d_field(c);
    clamped += n1 + n2;
    let rhs = laplacian(&f).zip_with(&d, |l, dv| l * dv)?;
    let residual = dfdt.sub(&rhs)?;
    let scale = dfdt.interior_linf().max(rhs.interior_linf());
    warnings.extend(clamp_warning("flux potential", clamped));
    Ok(report(EquationId::E5020, traj, t_index, &residual, scale, warnings))
}

/// Series form of the F-transport balance: d/dt of the F-series minus
/// D(c(t))·∇²F(c(t)) with c evaluated from the same series. Zero to round-off
/// at t = 0 by the construction of the coefficients; truncation-sized inside
/// the horizon.
pub fn residual_e5020_series(state: &TaylorState, t: f64) -> ResidualReport {
    let dfdt = state.evaluate_f_rate(t);
    let c = state.evaluate(t);
    let (f, clamped_f) = state.model().kirchhoff_f_field(&c);
    let (d, clamped_d) = state.model().eval_d_field(&c);
    let rhs = laplacian(&f).zip_with(&d, |l, dv| l * dv).expect("same grid");
    let residual = dfdt.sub(&rhs).expect("same grid");
    let scale = dfdt.interior_linf().max(rhs.interior_linf());
    let mut warnings = Vec::new();
    warnings.extend(clamp_warning("series evaluation", clamped_f + clamped_d));
    ResidualReport {
        equation: EquationId::E5020,
        t,
        h: state.grid().h,
        dt: 0.0,
        norm_l2: residual.interior_rms(),
        norm_linf: residual.interior_linf(),
        normalization: scale.max(SCALE_FLOOR),
        warnings,
    }
}

/// F reconstructed from its own rate through the open-space kernel. The
/// rate enters as (1/D)∂F/∂t, which equals ∂c/∂t identically by the chain
/// rule, so this evaluates the same residual object as [`residual_e3090`]
/// — equal numbers, different label.
pub fn residual_e5100(traj: &Trajectory, t_index: usize) -> Result<ResidualReport> {
    let (residual, scale, warnings) = e3090_inner(traj, t_index)?;
    Ok(report(EquationId::E5100, traj, t_index, &residual, scale, warnings))
}

/// φ − (1/D)∂F/∂t with the F-rate taken from F-snapshots, the route that is
/// independent of the concentration rate.
pub fn residual_e5120(traj: &Trajectory, t_index: usize) -> Result<ResidualReport> {
    traj.check_index(t_index)?;
    let mut warnings = Vec::new();
    let mut clamped = 0usize;
    let dfdt = traj.time_derivative_of(t_index, |c| {
        let (f, n) = traj.model().kirchhoff_f_field(c);
        clamped += n;
        f
    })?;
    let c = traj.field(t_index);
    let phi = compute_phi(c, traj.model()).phi;
    let (d, n) = traj.model().eval_d_field(c);
    clamped += n;
    let rhs = dfdt.zip_with(&d, |r, dv| r / dv)?;
    let residual = phi.sub(&rhs)?;
    let scale = phi.interior_linf().max(rhs.interior_linf());
    warnings.extend(clamp_warning("flux potential", clamped));
    Ok(report(EquationId::E5120, traj, t_index, &residual, scale, warnings))
}

/// Series form of the φ balance at t: ∇²F(c(t)) − (1/D)·dF/dt with the rate
/// from the series derivative.
pub fn residual_e5120_series(state: &TaylorState, t: f64) -> ResidualReport {
    let c = state.evaluate(t);
    let phi = compute_phi(&c, state.model()).phi;
    let (d, clamped) = state.model().eval_d_field(&c);
    let rhs = state.evaluate_f_rate(t).zip_with(&d, |r, dv| r / dv).expect("same grid");
    let residual = phi.sub(&rhs).expect("same grid");
    let scale = phi.interior_linf().max(rhs.interior_linf());
    let mut warnings = Vec::new();
    warnings.extend(clamp_warning("series evaluation", clamped));
    ResidualReport {
        equation: EquationId::E5120,
        t,
        h: state.grid().h,
        dt: 0.0,
        norm_l2: residual.interior_rms(),
        norm_linf: residual.interior_linf(),
        normalization: scale.max(SCALE_FLOOR),
        warnings,
    }
}

/// D·φ + d/dt of the open-space convolution of φ.
pub fn residual_e5160(traj: &Trajectory, t_index: usize) -> Result<ResidualReport> {
    traj.check_index(t_index)?;
    if traj.grid().boundary != Boundary::FreeDecay {
        return Err(Error::UnsupportedBoundary {
            op: "residual_e5160",
            required: "FreeDecay",
            actual: traj.grid().boundary.name(),
        });
    }
    let mut warnings = Vec::new();
    let c = traj.field(t_index);
    let phi_here = compute_phi(c, traj.model()).phi;
    warnings.extend(decay_warning("rate potential", &phi_here));
    let (d, clamped) = traj.model().eval_d_field(c);
    warnings.extend(clamp_warning("diffusivity", clamped));
    let lhs = phi_here.zip_with(&d, |p, dv| p * dv)?;

    let dconv_dt = traj.time_derivative_of(t_index, |snapshot| {
        let phi = compute_phi(snapshot, traj.model()).phi;
        greens_fft(&phi).expect("boundary checked above").v
    })?;
    let residual = lhs.add(&dconv_dt)?;
    let scale = lhs.interior_linf().max(dconv_dt.interior_linf());
    Ok(report(EquationId::E5160, traj, t_index, &residual, scale, warnings))
}

/// ∂φ/∂t − ∇²(Dφ) at the middle snapshot of the run.
pub fn residual_e5200(traj: &Trajectory) -> Result<ResidualReport> {
    let mid = traj.len() / 2;
    let dphi_dt =
        traj.time_derivative_of(mid, |c| compute_phi(c, traj.model()).phi)?;
    let c = traj.field(mid);
    let phi = compute_phi(c, traj.model()).phi;
    let (d, clamped) = traj.model().eval_d_field(c);
    let rhs = laplacian(&phi.zip_with(&d, |p, dv| p * dv)?);
    let residual = dphi_dt.sub(&rhs)?;
    let scale = dphi_dt.interior_linf().max(rhs.interior_linf());
    let mut warnings = Vec::new();
    warnings.extend(clamp_warning("diffusivity", clamped));
    Ok(report(EquationId::E5200, traj, mid, &residual, scale, warnings))
}

/// Shared core of the diffusivity-transport checks: the n-th derivative of D
/// along the trajectory obeys
/// d/dt D⁽ⁿ⁾(c) = D⁽ⁿ⁺¹⁾(c) ∇·( D(c) ∇D⁽ⁿ⁾(c) / D⁽ⁿ⁺¹⁾(c) ).
fn derivative_transport(
    traj: &Trajectory,
    t_index: usize,
    n: usize,
    equation: EquationId,
    op: &'static str,
) -> Result<ResidualReport> {
    traj.check_index(t_index)?;
    let mut warnings = Vec::new();
    let c = traj.field(t_index);
    let derivs = traj.model().eval_d_derivs_field(c, n + 1)?;
    let d_n1 = &derivs[n + 1];
    if d_n1.values().contains(&0.0) {
        return Err(Error::NonlinearityRequired {
            op,
            model: traj.model().name(),
        });
    }
    let lhs = traj.time_derivative_of(t_index, |snapshot| {
        traj.model()
            .eval_d_derivs_field(snapshot, n)
            .expect("order validated above")
            .swap_remove(n)
    })?;
    let (d, clamped) = traj.model().eval_d_field(c);
    warnings.extend(clamp_warning("diffusivity", clamped));
    let flux = gradient(&derivs[n])
        .divided_by_field(d_n1)?
        .scaled_by_field(&d)?;
    let rhs = divergence(&flux).zip_with(d_n1, |dv, w| dv * w)?;
    let residual = lhs.sub(&rhs)?;
    let scale = lhs.interior_linf().max(rhs.interior_linf());
    Ok(report(equation, traj, t_index, &residual, scale, warnings))
}

/// d/dt D(c) − D′ ∇·(D ∇D / D′); rejects models with vanishing D′.
pub fn residual_e5680(traj: &Trajectory, t_index: usize) -> Result<ResidualReport> {
    derivative_transport(traj, t_index, 0, EquationId::E5680, "residual_e5680")
}

/// The same transport law for the n-th derivative of D; n = 0 reproduces
/// [`residual_e5680`]. For exponential models every derivative is
/// proportional to D itself, so the normalized residual is independent of n.
pub fn residual_e6690(traj: &Trajectory, t_index: usize, n: usize) -> Result<ResidualReport> {
    derivative_transport(traj, t_index, n, EquationId::E6690, "residual_e6690")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use crate::taylor::build_series;

    fn constant_trajectory(model: DiffusivityModel, value: f64) -> Trajectory {
        let g = Grid3::centered(10, 10, 10, 0.1, Boundary::FreeDecay).unwrap();
        let c = ScalarField3::constant(g, value);
        Trajectory::new(
            model,
            vec![0.0, 0.1, 0.2],
            vec![c.clone(), c.clone(), c],
            TrajectorySource::ReferenceSolver,
        )
        .unwrap()
    }

    /// Gaussian bump whose amplitude follows a prescribed smooth history, a
    /// stand-in trajectory with analytically known time dependence.
    fn bump_trajectory(
        model: DiffusivityModel,
        n: usize,
        count: usize,
        t_max: f64,
        sigma: f64,
        base: f64,
    ) -> Trajectory {
        let g = Grid3::centered(n, n, n, 1.0 / n as f64, Boundary::FreeDecay).unwrap();
        let times: Vec<f64> = (0..count).map(|i| t_max * i as f64 / (count - 1) as f64).collect();
        let fields = times
            .iter()
            .map(|&t| {
                let amp = 1.0 / (1.0 + t);
                let s2 = sigma * sigma * (1.0 + 0.5 * t);
                ScalarField3::from_fn(g, |x, y, z| {
                    base + amp * (-(x * x + y * y + z * z) / s2).exp()
                })
            })
            .collect();
        Trajectory::new(model, times, fields, TrajectorySource::ReferenceSolver).unwrap()
    }

    #[test]
    fn trajectory_validation_rejects_bad_input() {
        let g = Grid3::centered(8, 8, 8, 0.1, Boundary::FreeDecay).unwrap();
        let c = ScalarField3::constant(g, 1.0);
        let model = DiffusivityModel::constant(1.0).unwrap();
        assert!(matches!(
            Trajectory::new(
                model.clone(),
                vec![0.0, 0.1],
                vec![c.clone(), c.clone()],
                TrajectorySource::ReferenceSolver
            ),
            Err(Error::InsufficientData(_))
        ));
        assert!(Trajectory::new(
            model,
            vec![0.0, 0.2, 0.1],
            vec![c.clone(), c.clone(), c],
            TrajectorySource::ReferenceSolver
        )
        .is_err());
    }

    #[test]
    fn time_derivative_is_exact_on_quadratics() {
        let g = Grid3::centered(8, 8, 8, 0.1, Boundary::FreeDecay).unwrap();
        let times = vec![0.0, 0.13, 0.4];
        let fields: Vec<ScalarField3> = times
            .iter()
            .map(|&t| ScalarField3::from_fn(g, |x, _, _| 1.0 + x + (2.0 - x) * t + 3.0 * t * t))
            .collect();
        let traj = Trajectory::new(
            DiffusivityModel::constant(1.0).unwrap(),
            times.clone(),
            fields,
            TrajectorySource::ReferenceSolver,
        )
        .unwrap();
        for (idx, &ti) in times.iter().enumerate() {
            let got = traj.time_derivative(idx).unwrap();
            let expect = ScalarField3::from_fn(g, |x, _, _| (2.0 - x) + 6.0 * ti);
            assert!(got.sub(&expect).unwrap().linf() <= 1e-12 * expect.linf());
        }
    }

    #[test]
    fn stationary_trajectories_zero_every_residual() {
        // The reference concentration doubles as the far-field level, so the
        // open-space checks need it to equal the stationary value.
        let value = 1.3;
        let traj = constant_trajectory(
            DiffusivityModel::tabulated(&[(0.5, 1.0), (1.3, 1.4), (2.5, 2.0)])
                .unwrap()
                .with_c_ref(value)
                .unwrap(),
            value,
        );
        let reports = [
            residual_e2200(&traj, 2).unwrap(),
            residual_e3090(&traj, 1).unwrap(),
            residual_e4710_e4720(&traj, 1).unwrap().0,
            residual_e4710_e4720(&traj, 1).unwrap().1,
            residual_e5020(&traj, 1).unwrap(),
            residual_e5100(&traj, 1).unwrap(),
            residual_e5120(&traj, 1).unwrap(),
            residual_e5160(&traj, 1).unwrap(),
            residual_e5200(&traj).unwrap(),
        ];
        for r in &reports {
            assert!(
                r.norm_linf <= 1e-13 * value,
                "{} linf {} not stationary-clean",
                r.equation.as_str(),
                r.norm_linf
            );
        }
        let power = constant_trajectory(
            DiffusivityModel::power_law(1.0, 2.0).unwrap().with_c_ref(value).unwrap(),
            value,
        );
        assert!(residual_e5680(&power, 1).unwrap().norm_linf <= 1e-13);
        assert!(residual_e6690(&power, 1, 1).unwrap().norm_linf <= 1e-13);
    }

    #[test]
    fn constant_diffusivity_is_rejected_by_transport_checks() {
        let traj = constant_trajectory(DiffusivityModel::constant(2.0).unwrap(), 1.0);
        assert!(matches!(
            residual_e5680(&traj, 1),
            Err(Error::NonlinearityRequired { .. })
        ));
        assert!(matches!(
            residual_e6690(&traj, 1, 2),
            Err(Error::NonlinearityRequired { .. })
        ));
        // Power-law with integer exponent runs out of nonzero derivatives.
        let power = constant_trajectory(DiffusivityModel::power_law(1.0, 1.0).unwrap(), 1.0);
        assert!(residual_e6690(&power, 1, 1).is_err());
    }

    #[test]
    fn e5100_reports_the_same_numbers_as_e3090() {
        let traj = bump_trajectory(
            DiffusivityModel::power_law(1.0, 1.0).unwrap(),
            16,
            5,
            0.02,
            0.18,
            1e-3,
        );
        for idx in [0, 2, 4] {
            let a = residual_e3090(&traj, idx).unwrap();
            let b = residual_e5100(&traj, idx).unwrap();
            assert_eq!(a.norm_l2, b.norm_l2);
            assert_eq!(a.norm_linf, b.norm_linf);
            assert_eq!(a.normalization, b.normalization);
        }
    }

    #[test]
    fn exponential_model_collapses_e6690_onto_e5680() {
        let traj = bump_trajectory(
            DiffusivityModel::exponential(0.8, 0.9).unwrap(),
            12,
            5,
            0.05,
            0.2,
            0.0,
        );
        let base = residual_e5680(&traj, 2).unwrap();
        for n in [1usize, 3] {
            let higher = residual_e6690(&traj, 2, n).unwrap();
            let rel = (higher.normalized_linf() - base.normalized_linf()).abs()
                / base.normalized_linf();
            assert!(rel <= 1e-12, "n={n}: normalized residuals differ by {rel:.2e}");
        }
        let n0 = residual_e6690(&traj, 2, 0).unwrap();
        assert_eq!(n0.norm_linf, base.norm_linf);
    }

    #[test]
    fn manufactured_gaussian_rate_reconstructs_flux_potential() {
        // Snapshot triple built so the central time difference of c is
        // exactly the Laplacian of a decaying Gaussian F*; the remaining
        // residual is the kernel-vs-stencil h² defect alone.
        let n = 48;
        let g = Grid3::centered(n, n, n, 1.0 / n as f64, Boundary::FreeDecay).unwrap();
        let model = DiffusivityModel::power_law(1.0, 1.0).unwrap();
        let f_star = ScalarField3::from_fn(g, |x, y, z| {
            (-(x * x + y * y + z * z) / (0.16 * 0.16)).exp()
        });
        let c_mid = f_star.map(|f| model.inverse_f(f).unwrap());
        let slope = laplacian(&f_star);
        let dt = 1e-4;
        let traj = Trajectory::new(
            model,
            vec![0.0, dt, 2.0 * dt],
            vec![
                c_mid.sub(&slope.scaled(dt)).unwrap(),
                c_mid.clone(),
                c_mid.add(&slope.scaled(dt)).unwrap(),
            ],
            TrajectorySource::ReferenceSolver,
        )
        .unwrap();
        let rep = residual_e3090(&traj, 1).unwrap();
        assert!(
            rep.normalized_l2() <= 0.01,
            "interior L2 residual {:.3e}",
            rep.normalized_l2()
        );
        assert!(
            rep.normalized_linf() <= 0.05,
            "interior max residual {:.3e}",
            rep.normalized_linf()
        );
    }

    #[test]
    fn manufactured_rate_zeroes_the_differential_balance() {
        // Pick c snapshots, then define the middle snapshot's time slope to
        // satisfy the differential balance exactly (built from the same
        // shifted stencil pieces the check uses); the differential residual
        // must collapse to round-off and the open-space reconstruction to
        // the kernel's h² defect.
        let n = 24;
        let base = 0.2;
        let g = Grid3::centered(n, n, n, 1.0 / n as f64, Boundary::FreeDecay).unwrap();
        let model = DiffusivityModel::power_law(1.0, 2.0)
            .unwrap()
            .with_c_ref(base)
            .unwrap();
        let c_mid = ScalarField3::from_fn(g, |x, y, z| {
            base + (-(x * x + y * y + z * z) / (0.2 * 0.2)).exp()
        });
        let (d, _) = model.eval_d_field(&c_mid);
        let ln_d_far = model.eval_d(base).unwrap().ln();
        let ln_d = d.map(|v| v.ln() - ln_d_far);
        let c_dec = c_mid.map(|v| v - base);
        let slope = laplacian(&c_dec)
            .add(&gradient(&ln_d).dot(&gradient(&c_dec)).unwrap())
            .unwrap()
            .zip_with(&d, |s, dv| s * dv)
            .unwrap();
        let dt = 1e-3;
        let traj = Trajectory::new(
            model,
            vec![0.0, dt, 2.0 * dt],
            vec![
                c_mid.sub(&slope.scaled(dt)).unwrap(),
                c_mid.clone(),
                c_mid.add(&slope.scaled(dt)).unwrap(),
            ],
            TrajectorySource::ReferenceSolver,
        )
        .unwrap();
        let (diff, integral) = residual_e4710_e4720(&traj, 1).unwrap();
        assert!(
            diff.normalized_linf() <= 1e-12,
            "differential residual {:.3e}",
            diff.normalized_linf()
        );
        assert!(
            integral.normalized_l2() <= 0.03,
            "integral residual {:.3e}",
            integral.normalized_l2()
        );
    }

    #[test]
    fn series_balances_vanish_at_time_zero() {
        let g = Grid3::centered(16, 16, 16, 1.0 / 16.0, Boundary::FreeDecay).unwrap();
        let c0 = ScalarField3::from_fn(g, |x, y, z| {
            1e-3 + (-(x * x + y * y + z * z) / (0.2 * 0.2)).exp()
        });
        let model = DiffusivityModel::power_law(1.0, 1.0).unwrap();
        let st = build_series(&c0, &model, 6).unwrap();
        let r5020 = residual_e5020_series(&st, 0.0);
        assert!(
            r5020.normalized_linf() <= 1e-13,
            "E5020 at t=0: {:.3e}",
            r5020.normalized_linf()
        );
        let r5120 = residual_e5120_series(&st, 0.0);
        assert!(
            r5120.normalized_linf() <= 1e-13,
            "E5120 at t=0: {:.3e}",
            r5120.normalized_linf()
        );
    }

    #[test]
    fn periodic_trajectories_are_rejected_by_openspace_checks() {
        let g = Grid3::centered(8, 8, 8, 0.1, Boundary::Periodic).unwrap();
        let c = ScalarField3::from_fn(g, |x, y, z| 1.0 + 0.1 * (x + y + z));
        let traj = Trajectory::new(
            DiffusivityModel::power_law(1.0, 1.0).unwrap(),
            vec![0.0, 0.1, 0.2],
            vec![c.clone(), c.clone(), c],
            TrajectorySource::ReferenceSolver,
        )
        .unwrap();
        assert!(residual_e3090(&traj, 1).is_err());
        assert!(residual_e4710_e4720(&traj, 1).is_err());
        assert!(residual_e5160(&traj, 1).is_err());
        // Differential-only checks still run under periodic boundaries.
        assert!(residual_e5020(&traj, 1).is_ok());
        assert!(residual_e5200(&traj).is_ok());
    }

    #[test]
    fn e2200_quadrature_error_shrinks_with_snapshot_spacing() {
        // Closed-form trajectory: a single discrete eigenmode under constant
        // D decays exactly as exp(lam t) of the grid eigenvalue, so the
        // only E2200 residual is the trapezoid error, O(dt²) — doubling the
        // snapshot count must cut it ~4x.
        let n = 16;
        let g = Grid3::centered(n, n, n, 1.0 / n as f64, Boundary::Periodic).unwrap();
        let d0 = 1.0;
        let th = std::f64::consts::PI / 2.0;
        let lam = -3.0 * d0 * (2.0 - 2.0 * th.cos()) / (g.h * g.h);
        let t_end = 1.0 / lam.abs();
        let model = DiffusivityModel::constant(d0).unwrap();
        let run = |count: usize| {
            let times: Vec<f64> =
                (0..count).map(|i| t_end * i as f64 / (count - 1) as f64).collect();
            let fields = times
                .iter()
                .map(|&t| {
                    let amp = 0.2 * (lam * t).exp();
                    ScalarField3::from_index_fn(g, |i, j, k| {
                        let s = |q: usize| (th * q as f64).sin();
                        1.0 + amp * s(i) * s(j) * s(k)
                    })
                })
                .collect();
            let traj =
                Trajectory::new(model.clone(), times, fields, TrajectorySource::ReferenceSolver)
                    .unwrap();
            residual_e2200(&traj, count - 1).unwrap().normalized_linf()
        };
        let coarse = run(9);
        let fine = run(17);
        let order = (coarse / fine).log2();
        assert!(order >= 1.9, "quadrature order {order:.2} ({coarse:.3e} -> {fine:.3e})");
    }
}
