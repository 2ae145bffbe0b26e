//! Design-space scoring of the spherical mechanism: conditioning, endpoint
//! stiffness, structural length and arc-length sum, combined as
//! `score = gci · k_end / (q_l · α³)`, plus exhaustive grid search.
//!
//! Each leg is a spherical 2R chain about the mechanism centre:
//! `u = B · Rz(φ1) · Ry(θ13) · Rz(φ2) · Ry(θ35) · e_z`, where `B` tilts the leg
//! base by `∓θ12/2` about x. The two legs are mirror copies
//! (`θ24 = θ13`, `θ46 = θ35`); with `θ12 = 0` they coincide.

use crate::error::{Error, Result};
use crate::kinematics::{rot_x, rot_y, rot_z};
use crate::scalar::deg;
use crate::Real;
use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};
use rayon::prelude::*;
use std::fmt::Write as _;

/// Joint-to-joint arc angles (rad).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpmDesign<T: Real> {
    pub theta12: T,
    pub theta13: T,
    pub theta35: T,
}

impl<T: Real> SpmDesign<T> {
    pub fn new(theta12: T, theta13: T, theta35: T) -> Result<Self> {
        let d = Self { theta12, theta13, theta35 };
        d.validate()?;
        Ok(d)
    }

    pub fn from_degrees(theta12: f64, theta13: f64, theta35: f64) -> Result<Self> {
        Self::new(deg(theta12), deg(theta13), deg(theta35))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |a: T| a >= T::zero() && a <= T::frac_pi_2() + T::lit(1e-12);
        if ok(self.theta12) && ok(self.theta13) && ok(self.theta35) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("design angles must lie in [0°, 90°]".into()))
        }
    }

    /// Rotation taking `e_z` to the base axis of `leg` (0 or 1).
    pub fn leg_base(&self, leg: usize) -> Matrix3<T> {
        let half = self.theta12 / T::lit(2.0);
        rot_x(if leg == 0 { -half } else { half })
    }

    fn legs(&self) -> usize {
        if self.theta12 == T::zero() {
            1
        } else {
            2
        }
    }
}

/// Tool direction of one leg at joint angles `q = (φ1, φ2)`.
pub fn leg_direction<T: Real>(design: &SpmDesign<T>, leg: usize, q: &Vector2<T>) -> Vector3<T> {
    design.leg_base(leg) * rot_z(q.x) * rot_y(design.theta13) * rot_z(q.y) * rot_y(design.theta35) * Vector3::z()
}

/// Central-difference Jacobian of [`leg_direction`] with respect to `(φ1, φ2)`.
pub fn spm_jacobian<T: Real>(design: &SpmDesign<T>, leg: usize, q: &Vector2<T>) -> Matrix3x2<T> {
    let h = T::fd_step();
    let mut j = Matrix3x2::zeros();
    for k in 0..2 {
        let mut plus = *q;
        let mut minus = *q;
        plus[k] += h;
        minus[k] -= h;
        j.set_column(k, &((leg_direction(design, leg, &plus) - leg_direction(design, leg, &minus)) / (h + h)));
    }
    j
}

/// Joint angles placing `leg` on direction `u`, or `None` when out of reach.
///
/// The polar distance `ρ` from the leg base satisfies
/// `cos ρ = cos θ13 cos θ35 − sin θ13 sin θ35 cos φ2`; the elbow branch
/// `φ2 ∈ [0, π]` is returned.
pub fn leg_inverse<T: Real>(design: &SpmDesign<T>, leg: usize, u: &Vector3<T>) -> Option<Vector2<T>> {
    let local = design.leg_base(leg).transpose() * u.normalize();
    let cos_rho = local.z.max(-T::one()).min(T::one());
    let (s13, c13) = design.theta13.sin_cos();
    let (s35, c35) = design.theta35.sin_cos();
    let den = s13 * s35;
    let tol = T::lit(1e-12);
    let c2 = if den.abs() <= tol {
        if (c13 * c35 - cos_rho).abs() > tol {
            return None;
        }
        T::one()
    } else {
        let c = (c13 * c35 - cos_rho) / den;
        if c.abs() > T::one() + tol {
            return None;
        }
        c.max(-T::one()).min(T::one())
    };
    let phi2 = c2.acos();
    let w = rot_y(design.theta13) * rot_z(phi2) * rot_y(design.theta35) * Vector3::z();
    let phi1 = if local.x.hypot(local.y) <= tol || w.x.hypot(w.y) <= tol {
        T::zero()
    } else {
        local.y.atan2(local.x) - w.y.atan2(w.x)
    };
    Some(Vector2::new(phi1, phi2))
}

/// Diagonal joint stiffness (N·mm/rad) and probe force (N).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StiffnessModel<T: Real> {
    pub k_q: Vector2<T>,
    pub f: Vector3<T>,
}

impl<T: Real> StiffnessModel<T> {
    pub fn validate(&self) -> Result<()> {
        if self.k_q.iter().all(|k| *k > T::zero() && k.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("joint stiffness entries must be > 0".into()))
        }
    }

    pub fn compliance(&self, j: &Matrix3x2<T>) -> Matrix3<T> {
        let k_inv = Matrix2::from_diagonal(&self.k_q.map(|k| T::one() / k));
        j * k_inv * j.transpose()
    }

    /// `Δx = J K⁻¹ Jᵀ F`.
    pub fn deflection(&self, j: &Matrix3x2<T>) -> Vector3<T> {
        self.compliance(j) * self.f
    }
}

impl<T: Real> Default for StiffnessModel<T> {
    fn default() -> Self {
        Self {
            k_q: Vector2::new(T::one(), T::one()),
            f: Vector3::z(),
        }
    }
}

/// Condition number at or above which a Jacobian counts as singular.
///
/// Finite differences leave rounding noise of order `ε / h` in each column, so
/// an exactly singular configuration only reaches a condition number near
/// `h / ε`. The cutoff sits a factor 64 below that.
pub fn singular_cond<T: Real>() -> T {
    T::fd_step() / (T::lit(64.0) * T::default_epsilon())
}

/// `σ_max / σ_min` of a 3×2 Jacobian; infinite when rank-deficient.
pub fn condition_number<T: Real>(j: &Matrix3x2<T>) -> T {
    let sv = j.svd(false, false).singular_values;
    let (hi, lo) = (sv.max(), sv.min());
    if hi == T::zero() || lo * singular_cond::<T>() <= hi {
        return T::lit(f64::INFINITY);
    }
    hi / lo
}

/// Worst-direction stiffness `1 / λ_max(J K⁻¹ Jᵀ)`; zero for a singular Jacobian.
pub fn cell_stiffness<T: Real>(j: &Matrix3x2<T>, model: &StiffnessModel<T>) -> T {
    if !condition_number(j).is_finite() {
        return T::zero();
    }
    let lmax = model.compliance(j).symmetric_eigenvalues().max();
    if lmax > T::zero() {
        T::one() / lmax
    } else {
        T::zero()
    }
}

/// A 5°×5° direction cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell<T: Real> {
    pub center: Vector3<T>,
    /// sr
    pub solid_angle: T,
}

/// Direction cells over the semi-sphere about `R_x(tilt) · e_z`.
///
/// Cells are indexed by azimuth ψ (72 × 5°) and signed polar angle
/// b ∈ [−90°, 90°] (36 × 5°), which covers the semi-sphere twice; this gives
/// the 2592 cells. Cell solid angle is `Δψ · |cos b0 − cos b1|`.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkspaceGrid<T: Real> {
    pub cells: Vec<GridCell<T>>,
    /// Times each direction is covered.
    pub multiplicity: T,
}

impl<T: Real> WorkspaceGrid<T> {
    pub fn semi_sphere(tilt: T) -> Self {
        let step = deg::<T>(5.0);
        let tilt_r = rot_x(tilt);
        let mut cells = Vec::with_capacity(72 * 36);
        for i in 0..72 {
            let psi = step * T::lit(i as f64 + 0.5);
            for j in 0..36 {
                let b0 = -T::frac_pi_2() + step * T::lit(j as f64);
                let b1 = b0 + step;
                let b = (b0 + b1) / T::lit(2.0);
                let dir = Vector3::new(b.sin() * psi.cos(), b.sin() * psi.sin(), b.cos());
                cells.push(GridCell {
                    center: tilt_r * dir,
                    solid_angle: step * (b0.cos() - b1.cos()).abs(),
                });
            }
        }
        Self {
            cells,
            multiplicity: T::lit(2.0),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_solid_angle(&self) -> T {
        self.cells.iter().fold(T::zero(), |a, c| a + c.solid_angle)
    }
}

/// Direction-reaching mechanism seen by the workspace metrics.
pub trait ConeMechanism<T: Real>: Sync {
    /// Jacobians of every leg that must reach `u`; `None` if any leg cannot.
    fn leg_jacobians(&self, u: &Vector3<T>) -> Option<Vec<Matrix3x2<T>>>;
}

impl<T: Real> ConeMechanism<T> for SpmDesign<T> {
    fn leg_jacobians(&self, u: &Vector3<T>) -> Option<Vec<Matrix3x2<T>>> {
        (0..self.legs())
            .map(|leg| leg_inverse(self, leg, u).map(|q| spm_jacobian(self, leg, &q)))
            .collect()
    }
}

/// Per-cell conditioning and stiffness; the worst leg decides.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellMetrics<T: Real> {
    pub inverse_condition: T,
    pub stiffness: T,
}

pub fn cell_metrics<T: Real, M: ConeMechanism<T> + ?Sized>(
    mechanism: &M,
    u: &Vector3<T>,
    model: &StiffnessModel<T>,
) -> Option<CellMetrics<T>> {
    let js = mechanism.leg_jacobians(u)?;
    let inverse_condition = js
        .iter()
        .map(|j| T::one() / condition_number(j))
        .fold(T::one(), |a, b| a.min(b));
    let stiffness = js
        .iter()
        .map(|j| cell_stiffness(j, model))
        .fold(None, |a: Option<T>, b| Some(a.map_or(b, |m| m.min(b))))
        .unwrap_or(T::zero());
    Some(CellMetrics {
        inverse_condition,
        stiffness,
    })
}

/// Radial shell of the cone workspace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shell<T: Real> {
    pub r_in: T,
    pub r_out: T,
}

impl<T: Real> Default for Shell<T> {
    /// Unit depth at unit sphere radius.
    fn default() -> Self {
        Self {
            r_in: T::zero(),
            r_out: T::one(),
        }
    }
}

/// Settings shared by all design evaluations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreOptions<T: Real> {
    /// Fraction of grid cells a design must reach to be feasible.
    pub required_coverage: T,
    pub shell: Shell<T>,
    /// Designs with `θ13 + θ35` below this are infeasible (rad).
    pub min_arc_sum: T,
}

impl<T: Real> Default for ScoreOptions<T> {
    fn default() -> Self {
        Self {
            required_coverage: T::one(),
            shell: Shell::default(),
            min_arc_sum: deg(10.0),
        }
    }
}

/// Workspace integrals of one mechanism over a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkspaceMetrics<T: Real> {
    /// Solid-angle-weighted mean of `1/cond` over all cells; unreachable cells count 0.
    pub gci: T,
    /// Solid-angle-weighted mean worst-direction stiffness over reachable cells.
    pub stiffness_raw: T,
    pub volume: T,
    /// Reached cells over all cells.
    pub coverage: T,
    pub reached: usize,
}

/// Reachable volume `Σ Ω (r_out³ − r_in³) / 3`, corrected for grid multiplicity.
pub fn workspace_volume<T: Real>(reached_solid_angle: T, shell: &Shell<T>, multiplicity: T) -> T {
    let depth = shell.r_out.powi(3) - shell.r_in.powi(3);
    reached_solid_angle * depth / (T::lit(3.0) * multiplicity)
}

pub fn workspace_metrics<T: Real, M: ConeMechanism<T> + ?Sized>(
    mechanism: &M,
    grid: &WorkspaceGrid<T>,
    model: &StiffnessModel<T>,
    shell: &Shell<T>,
) -> Result<WorkspaceMetrics<T>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty workspace grid".into()));
    }
    model.validate()?;
    let (mut gci, mut stiff, mut reached_omega) = (T::zero(), T::zero(), T::zero());
    let mut reached = 0;
    for cell in &grid.cells {
        if let Some(m) = cell_metrics(mechanism, &cell.center, model) {
            reached += 1;
            reached_omega += cell.solid_angle;
            gci += cell.solid_angle * m.inverse_condition;
            stiff += cell.solid_angle * m.stiffness;
        }
    }
    let total = grid.total_solid_angle();
    Ok(WorkspaceMetrics {
        gci: gci / total,
        stiffness_raw: if reached_omega > T::zero() { stiff / reached_omega } else { T::zero() },
        volume: workspace_volume(reached_omega, shell, grid.multiplicity),
        coverage: T::lit(reached as f64 / grid.len() as f64),
        reached,
    })
}

/// Global conditioning index of a mechanism over `grid`.
pub fn gci<T: Real, M: ConeMechanism<T> + ?Sized>(mechanism: &M, grid: &WorkspaceGrid<T>) -> Result<T> {
    Ok(workspace_metrics(mechanism, grid, &StiffnessModel::default(), &Shell::default())?.gci)
}

/// Mean worst-direction stiffness before normalization.
pub fn endpoint_stiffness_raw<T: Real, M: ConeMechanism<T> + ?Sized>(
    mechanism: &M,
    grid: &WorkspaceGrid<T>,
    model: &StiffnessModel<T>,
) -> Result<T> {
    Ok(workspace_metrics(mechanism, grid, model, &Shell::default())?.stiffness_raw)
}

/// Raw stiffness of each candidate divided by the largest among them.
pub fn endpoint_stiffness<T: Real>(
    candidates: &[SpmDesign<T>],
    grid: &WorkspaceGrid<T>,
    model: &StiffnessModel<T>,
) -> Result<Vec<T>> {
    let raw = candidates
        .iter()
        .map(|d| endpoint_stiffness_raw(d, grid, model))
        .collect::<Result<Vec<T>>>()?;
    let peak = raw.iter().fold(T::zero(), |a, &b| a.max(b));
    Ok(raw.iter().map(|r| if peak > T::zero() { *r / peak } else { T::zero() }).collect())
}

/// Total link length at unit sphere radius: `θ12 + θ13 + θ35`.
pub fn link_length<T: Real>(design: &SpmDesign<T>) -> T {
    design.theta12 + design.theta13 + design.theta35
}

/// `L / V^{1/3}`; infinite when `V = 0`.
pub fn length_index<T: Real>(link_length: T, volume: T) -> T {
    if volume > T::zero() {
        link_length / volume.cbrt()
    } else {
        T::lit(f64::INFINITY)
    }
}

pub fn structural_length_index<T: Real>(design: &SpmDesign<T>, grid: &WorkspaceGrid<T>, shell: &Shell<T>) -> Result<T> {
    let m = workspace_metrics(design, grid, &StiffnessModel::default(), shell)?;
    Ok(length_index(link_length(design), m.volume))
}

/// `(θ13 + θ35) / (2 · 90°)`.
pub fn arc_length_sum<T: Real>(design: &SpmDesign<T>) -> T {
    (design.theta13 + design.theta35) / T::pi()
}

/// Score components of one design.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreBreakdown<T: Real> {
    pub gci: T,
    pub k_end: T,
    pub q_l: T,
    pub alpha: T,
    pub score: T,
    pub coverage: T,
    pub feasible: bool,
}

/// Unnormalized evaluation of one design.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignEvaluation<T: Real> {
    pub design: SpmDesign<T>,
    pub metrics: WorkspaceMetrics<T>,
    pub q_l: T,
    pub alpha: T,
    pub feasible: bool,
}

pub fn evaluate_design<T: Real>(
    design: &SpmDesign<T>,
    grid: &WorkspaceGrid<T>,
    model: &StiffnessModel<T>,
    options: &ScoreOptions<T>,
) -> Result<DesignEvaluation<T>> {
    design.validate()?;
    let metrics = workspace_metrics(design, grid, model, &options.shell)?;
    let q_l = length_index(link_length(design), metrics.volume);
    let alpha = arc_length_sum(design);
    let feasible = design.theta13 + design.theta35 >= options.min_arc_sum - T::lit(1e-12)
        && metrics.coverage >= options.required_coverage - T::lit(1e-12)
        && q_l.is_finite();
    Ok(DesignEvaluation {
        design: *design,
        metrics,
        q_l,
        alpha,
        feasible,
    })
}

/// `gci · k_end / (q_l · α³)` with `k_end = raw stiffness · stiffness_scale`;
/// infeasible designs score 0.
pub fn compose_score<T: Real>(e: &DesignEvaluation<T>, stiffness_scale: T) -> ScoreBreakdown<T> {
    let k_end = e.metrics.stiffness_raw * stiffness_scale;
    let score = if e.feasible && e.alpha > T::zero() {
        e.metrics.gci * k_end / (e.q_l * e.alpha.powi(3))
    } else {
        T::zero()
    };
    ScoreBreakdown {
        gci: e.metrics.gci,
        k_end,
        q_l: e.q_l,
        alpha: e.alpha,
        score,
        coverage: e.metrics.coverage,
        feasible: e.feasible,
    }
}

/// Score of a single design, its stiffness normalized against itself.
pub fn score<T: Real>(
    design: &SpmDesign<T>,
    grid: &WorkspaceGrid<T>,
    model: &StiffnessModel<T>,
    options: &ScoreOptions<T>,
) -> Result<ScoreBreakdown<T>> {
    let e = evaluate_design(design, grid, model, options)?;
    let raw = e.metrics.stiffness_raw;
    Ok(compose_score(&e, if raw > T::zero() { T::one() / raw } else { T::zero() }))
}

/// Largest raw stiffness among feasible evaluations, or among all if none is feasible.
fn stiffness_peak<T: Real>(evals: &[DesignEvaluation<T>]) -> T {
    let max = |it: &mut dyn Iterator<Item = &DesignEvaluation<T>>| {
        it.fold(T::zero(), |a, e| a.max(e.metrics.stiffness_raw))
    };
    if evals.iter().any(|e| e.feasible) {
        max(&mut evals.iter().filter(|e| e.feasible))
    } else {
        max(&mut evals.iter())
    }
}

/// Angles (rad) searched for each design parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchRanges<T: Real> {
    pub theta12: Vec<T>,
    pub theta13: Vec<T>,
    pub theta35: Vec<T>,
}

impl<T: Real> SearchRanges<T> {
    /// `θ12 = 0`, `θ13, θ35 ∈ {5°, 10°, …, 90°}`.
    pub fn standard() -> Self {
        let arcs: Vec<T> = (1..=18).map(|k| deg(5.0 * k as f64)).collect();
        Self {
            theta12: vec![T::zero()],
            theta13: arcs.clone(),
            theta35: arcs,
        }
    }

    pub fn single(design: &SpmDesign<T>) -> Self {
        Self {
            theta12: vec![design.theta12],
            theta13: vec![design.theta13],
            theta35: vec![design.theta35],
        }
    }

    pub fn len(&self) -> usize {
        self.theta12.len() * self.theta13.len() * self.theta35.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Score map in `(θ12, θ13, θ35)` row-major order with its argmax.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSearchResult<T: Real> {
    pub ranges: SearchRanges<T>,
    pub breakdowns: Vec<ScoreBreakdown<T>>,
    pub best_index: usize,
    pub best: SpmDesign<T>,
    /// Largest raw stiffness among feasible designs (all designs if none is feasible).
    pub stiffness_norm: T,
}

impl<T: Real> GridSearchResult<T> {
    pub fn scores(&self) -> Vec<T> {
        self.breakdowns.iter().map(|b| b.score).collect()
    }

    pub fn best_breakdown(&self) -> &ScoreBreakdown<T> {
        &self.breakdowns[self.best_index]
    }

    /// Comma-separated map, one block per θ12 value: rows θ13, columns θ35
    /// (degrees), scores in `%.15e`.
    pub fn to_delimited(&self) -> String {
        let r = &self.ranges;
        let d = |v: &T| format!("{}", crate::scalar::to_deg(*v).as_f64().round() as i64);
        let mut out = String::new();
        let per12 = r.theta13.len() * r.theta35.len();
        for (a, t12) in r.theta12.iter().enumerate() {
            let _ = writeln!(out, "# theta12_deg={}", d(t12));
            let header: Vec<String> = r.theta35.iter().map(d).collect();
            let _ = writeln!(out, "theta13\\theta35,{}", header.join(","));
            for (b, t13) in r.theta13.iter().enumerate() {
                let row: Vec<String> = (0..r.theta35.len())
                    .map(|c| format!("{:.15e}", self.breakdowns[a * per12 + b * r.theta35.len() + c].score.as_f64()))
                    .collect();
                let _ = writeln!(out, "{},{}", d(t13), row.join(","));
            }
        }
        out
    }
}

/// Exhaustive search; evaluations run in parallel and are collected in order.
///
/// The stiffness normalization is `1 / max raw stiffness` over feasible
/// designs (all designs if none is feasible), times `stiffness_scale`. The argmax is the first maximal score.
pub fn grid_search<T: Real>(
    ranges: &SearchRanges<T>,
    grid: &WorkspaceGrid<T>,
    model: &StiffnessModel<T>,
    options: &ScoreOptions<T>,
    stiffness_scale: T,
) -> Result<GridSearchResult<T>> {
    if ranges.is_empty() {
        return Err(Error::InvalidArgument("empty search range".into()));
    }
    let mut designs = Vec::with_capacity(ranges.len());
    for &t12 in &ranges.theta12 {
        for &t13 in &ranges.theta13 {
            for &t35 in &ranges.theta35 {
                designs.push(SpmDesign::new(t12, t13, t35)?);
            }
        }
    }
    let evals: Vec<DesignEvaluation<T>> = designs
        .par_iter()
        .map(|d| evaluate_design(d, grid, model, options))
        .collect::<Result<_>>()?;
    let peak = stiffness_peak(&evals);
    let norm = if peak > T::zero() { T::one() / peak } else { T::zero() };
    let breakdowns: Vec<ScoreBreakdown<T>> = evals.iter().map(|e| compose_score(e, norm * stiffness_scale)).collect();
    let mut best_index = 0;
    for (i, b) in breakdowns.iter().enumerate() {
        if b.score > breakdowns[best_index].score {
            best_index = i;
        }
    }
    Ok(GridSearchResult {
        ranges: ranges.clone(),
        best: designs[best_index],
        breakdowns,
        best_index,
        stiffness_norm: peak,
    })
}
