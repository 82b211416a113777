//! Affine parameter expansion `A(ξ) = Σ φ_i(ξ) A_i`, `f(ξ) = Σ ψ_j(ξ) f_j`
//! of the stabilized convection-diffusion operator on interior dofs.

use alloc::vec;
use alloc::vec::Vec;

use crate::fem::{
    assemble_convection, assemble_diffusion_blocks, assemble_load, assemble_sd_blocks,
    assemble_sd_load_blocks, DirichletLifting,
};
use crate::mesh::StructuredMesh;
use crate::sparse::{solve_sparse, CsrMatrix, TripletMatrix};
use crate::{Error, Result};

/// Streamline-diffusion parameter for diffusion `a` on a uniform mesh:
/// `δ = h/(2|w|) (1 - 1/P)` with element Peclet number `P = |w| h / (2a)`
/// when `P > 1`, zero otherwise.
pub fn sd_delta(diffusion: f64, wind_speed: f64, h: f64) -> f64 {
    if wind_speed <= 0.0 {
        return 0.0;
    }
    if diffusion <= 0.0 {
        return h / (2.0 * wind_speed);
    }
    let peclet = wind_speed * h / (2.0 * diffusion);
    if peclet > 1.0 {
        h / (2.0 * wind_speed) * (1.0 - 1.0 / peclet)
    } else {
        0.0
    }
}

/// Scalar coefficient of one affine term, as a closed descriptor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientFn {
    /// Ignores ξ.
    Constant(f64),
    /// `scale * ξ_m`.
    LinearInXi {
        /// Zero-based parameter coordinate.
        m: usize,
        /// Multiplier (the diffusion scale ν for the benchmark).
        scale: f64,
    },
    /// `δ(ν ξ_m)` from [`sd_delta`].
    SdDelta {
        /// Zero-based parameter coordinate.
        m: usize,
        /// Diffusion scale.
        nu: f64,
        /// `|w|`.
        wind_speed: f64,
        /// Mesh width.
        h: f64,
    },
}

impl CoefficientFn {
    /// Value at ξ.
    pub fn eval(&self, xi: &[f64]) -> f64 {
        match *self {
            CoefficientFn::Constant(c) => c,
            CoefficientFn::LinearInXi { m, scale } => scale * xi[m],
            CoefficientFn::SdDelta {
                m,
                nu,
                wind_speed,
                h,
            } => sd_delta(nu * xi[m], wind_speed, h),
        }
    }
}

/// Product of intervals `Γ = Π [a_m, b_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterBox {
    /// Box from bounds; each `lower[m] <= upper[m]`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument(alloc::format!(
                "parameter box bounds of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument(
                "parameter box with lower > upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// The same interval in every one of `dim` coordinates.
    pub fn uniform(dim: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a; dim], vec![b; dim])
    }

    /// Dimension `M`.
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// `(a_m, b_m)`.
    pub fn interval(&self, m: usize) -> (f64, f64) {
        (self.lower[m], self.upper[m])
    }

    /// Anchor point: the mean of the uniform density, `(a_m + b_m) / 2`.
    pub fn anchor(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Product of the interval lengths; zero for a degenerate box.
    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .product()
    }

    /// Uniform joint density at ξ (infinite on degenerate boxes).
    pub fn density(&self, xi: &[f64]) -> f64 {
        if self.contains(xi) {
            1.0 / self.volume()
        } else {
            0.0
        }
    }

    /// Membership with a `1e-12` relative slack for rounding.
    pub fn contains(&self, xi: &[f64]) -> bool {
        self.check(xi).is_ok()
    }

    /// Membership test reporting the first offending coordinate.
    pub fn check(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.dim() {
            return Err(Error::InvalidArgument(alloc::format!(
                "parameter point of dimension {} for a {}-dimensional box",
                xi.len(),
                self.dim()
            )));
        }
        for (m, &v) in xi.iter().enumerate() {
            let (a, b) = self.interval(m);
            let slack = 1e-12 * a.abs().max(b.abs()).max(1.0);
            if !(v >= a - slack && v <= b + slack) {
                return Err(Error::OutOfDomain {
                    coordinate: m,
                    value: v,
                    lower: a,
                    upper: b,
                });
            }
        }
        Ok(())
    }

    /// Maps a point of the unit cube affinely into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(m, &t)| self.lower[m] + t * (self.upper[m] - self.lower[m]))
            .collect()
    }
}

/// How the streamline-diffusion coefficient depends on ξ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SdMode {
    /// `δ_m(ξ_m)` evaluated per parameter point.
    #[default]
    PerParameter,
    /// `δ_m` frozen at the anchor value of `ξ_m`.
    FrozenAtAnchor,
}

/// Benchmark physical parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkParams {
    /// Diffusion scale ν; the coefficient on subdomain `m` is `ν ξ_m`.
    pub nu: f64,
    /// Constant convection velocity.
    pub wind: [f64; 2],
    /// Constant forcing.
    pub forcing: f64,
    /// Streamline-diffusion treatment.
    pub sd_mode: SdMode,
    /// Adds the consistent streamline load `δ_m ∫ f (w · ∇v)` to the forcing.
    pub sd_forcing: bool,
}

impl BenchmarkParams {
    /// Wind at `angle_deg` degrees right of vertical, unit speed.
    pub fn wind_from_angle(angle_deg: f64) -> [f64; 2] {
        let t = angle_deg * core::f64::consts::PI / 180.0;
        [libm::sin(t), libm::cos(t)]
    }
}

/// One operator term: coefficient and interior-dof matrix.
#[derive(Debug, Clone)]
pub struct OperatorTerm {
    /// `φ_i`.
    pub coef: CoefficientFn,
    /// `A_i`.
    pub matrix: CsrMatrix,
}

/// One forcing term: coefficient and interior-dof vector.
#[derive(Debug, Clone)]
pub struct ForcingTerm {
    /// `ψ_j`.
    pub coef: CoefficientFn,
    /// `f_j`.
    pub vector: Vec<f64>,
}

/// A solution at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Parameter point.
    pub xi: Vec<f64>,
    /// Interior dof values.
    pub interior: Vec<f64>,
    /// Full nodal field with the lifting re-added.
    pub field: Vec<f64>,
}

/// Parameterized linear system on interior dofs.
#[derive(Debug, Clone)]
pub struct AffineSystem {
    operator: Vec<OperatorTerm>,
    forcing: Vec<ForcingTerm>,
    domain: ParameterBox,
    lifting: DirichletLifting,
    pattern: CsrMatrix,
    scatter: Vec<Vec<usize>>,
}

impl AffineSystem {
    /// Assembles a system from its terms. All matrices must be square with
    /// the interior dimension of `lifting`.
    pub fn new(
        operator: Vec<OperatorTerm>,
        forcing: Vec<ForcingTerm>,
        domain: ParameterBox,
        lifting: DirichletLifting,
    ) -> Result<Self> {
        let n = lifting.interior().len();
        if operator.is_empty() {
            return Err(Error::InvalidArgument(
                "affine operator without terms".into(),
            ));
        }
        if operator
            .iter()
            .any(|t| t.matrix.nrows() != n || t.matrix.ncols() != n)
            || forcing.iter().any(|t| t.vector.len() != n)
        {
            return Err(Error::InvalidArgument(
                "affine terms do not share the interior dimension".into(),
            ));
        }
        let mut union = TripletMatrix::new(n, n);
        for term in &operator {
            for r in 0..n {
                for (c, _) in term.matrix.row(r) {
                    union.push(r, c, 1.0);
                }
            }
        }
        let mut pattern = union.into_csr();
        pattern.values_mut().iter_mut().for_each(|v| *v = 0.0);
        let scatter = operator
            .iter()
            .map(|term| {
                let mut pos = Vec::with_capacity(term.matrix.nnz());
                for r in 0..n {
                    let start = pattern.row_ptr()[r];
                    let cols = &pattern.col_idx()[start..pattern.row_ptr()[r + 1]];
                    for (c, _) in term.matrix.row(r) {
                        pos.push(
                            start + cols.binary_search(&c).expect("term entry in union pattern"),
                        );
                    }
                }
                pos
            })
            .collect();
        Ok(Self {
            operator,
            forcing,
            domain,
            lifting,
            pattern,
            scatter,
        })
    }

    /// Dimension `M` of the parameter space.
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Number of interior dofs.
    pub fn size(&self) -> usize {
        self.lifting.interior().len()
    }

    /// Parameter box Γ.
    pub fn domain(&self) -> &ParameterBox {
        &self.domain
    }

    /// Dirichlet lifting and interior map.
    pub fn lifting(&self) -> &DirichletLifting {
        &self.lifting
    }

    /// Operator terms (`n̂_a` of them).
    pub fn operator_terms(&self) -> &[OperatorTerm] {
        &self.operator
    }

    /// Forcing terms (`n̂_f` of them).
    pub fn forcing_terms(&self) -> &[ForcingTerm] {
        &self.forcing
    }

    /// `φ_i(ξ)` for every operator term.
    pub fn operator_coefficients(&self, xi: &[f64]) -> Vec<f64> {
        self.operator.iter().map(|t| t.coef.eval(xi)).collect()
    }

    /// `ψ_j(ξ)` for every forcing term.
    pub fn forcing_coefficients(&self, xi: &[f64]) -> Vec<f64> {
        self.forcing.iter().map(|t| t.coef.eval(xi)).collect()
    }

    /// `A(ξ)` and `f(ξ)` as exact linear combinations of the stored terms.
    pub fn assemble_at(&self, xi: &[f64]) -> Result<(CsrMatrix, Vec<f64>)> {
        self.domain.check(xi)?;
        Ok((self.assemble_matrix(xi), self.assemble_forcing(xi)))
    }

    fn assemble_matrix(&self, xi: &[f64]) -> CsrMatrix {
        let mut a = self.pattern.clone();
        let values = a.values_mut();
        for (term, pos) in self.operator.iter().zip(&self.scatter) {
            let c = term.coef.eval(xi);
            if c == 0.0 {
                continue;
            }
            for (&p, &v) in pos.iter().zip(term.matrix.values()) {
                values[p] += c * v;
            }
        }
        a
    }

    fn assemble_forcing(&self, xi: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.size()];
        for term in &self.forcing {
            let c = term.coef.eval(xi);
            if c == 0.0 {
                continue;
            }
            for (fi, &v) in f.iter_mut().zip(&term.vector) {
                *fi += c * v;
            }
        }
        f
    }

    /// Full finite-element solve at ξ.
    pub fn full_solve(&self, xi: &[f64]) -> Result<Snapshot> {
        let (a, f) = self.assemble_at(xi)?;
        let interior = solve_sparse(&a, &f).map_err(|e| e.at_point(xi))?;
        let field = self.lifting.lift(&interior);
        Ok(Snapshot {
            xi: xi.to_vec(),
            interior,
            field,
        })
    }
}

/// Builds the benchmark expansion on `mesh`: `M` diffusion blocks with
/// `ν ξ_m`, the convection matrix, `M` streamline-diffusion blocks with
/// `δ_m(ξ_m)`, and forcing terms made of the base load followed by the
/// lifting contributions `-A_i u_g` of every operator term.
pub fn build_benchmark(
    mesh: &StructuredMesh,
    params: &BenchmarkParams,
    domain: ParameterBox,
) -> Result<AffineSystem> {
    let m_count = mesh.subdomain_count();
    if domain.dim() != m_count {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} subdomains but a {}-dimensional parameter box",
            m_count,
            domain.dim()
        )));
    }
    let w = params.wind;
    let speed = libm::sqrt(w[0] * w[0] + w[1] * w[1]);
    let h = mesh.h();
    let anchor = domain.anchor();

    let mut full: Vec<(CoefficientFn, CsrMatrix)> = Vec::with_capacity(2 * m_count + 1);
    let mut sd_coefs = Vec::with_capacity(m_count);
    for (m, k) in assemble_diffusion_blocks(mesh).into_iter().enumerate() {
        full.push((
            CoefficientFn::LinearInXi {
                m,
                scale: params.nu,
            },
            k,
        ));
    }
    full.push((CoefficientFn::Constant(1.0), assemble_convection(mesh, w)));
    for (m, s) in assemble_sd_blocks(mesh, w).into_iter().enumerate() {
        let coef = match params.sd_mode {
            SdMode::PerParameter => CoefficientFn::SdDelta {
                m,
                nu: params.nu,
                wind_speed: speed,
                h,
            },
            SdMode::FrozenAtAnchor => {
                CoefficientFn::Constant(sd_delta(params.nu * anchor[m], speed, h))
            }
        };
        sd_coefs.push(coef);
        full.push((coef, s));
    }

    let lifting = DirichletLifting::benchmark(mesh);
    let map: Vec<Option<usize>> = (0..mesh.node_count()).map(|v| mesh.dof(v)).collect();
    let ni = mesh.interior_nodes().len();
    let load = assemble_load(mesh, params.forcing);

    let mut operator = Vec::with_capacity(full.len());
    let mut forcing = Vec::with_capacity(full.len() + 1);
    forcing.push(ForcingTerm {
        coef: CoefficientFn::Constant(1.0),
        vector: lifting.restrict(&load),
    });
    for (coef, matrix) in full {
        let ag = matrix.mul_vec(lifting.values());
        forcing.push(ForcingTerm {
            coef,
            vector: lifting.restrict(&ag).into_iter().map(|v| -v).collect(),
        });
        operator.push(OperatorTerm {
            coef,
            matrix: matrix.restrict(&map, &map, ni, ni),
        });
    }
    if params.sd_forcing {
        for (coef, v) in sd_coefs
            .into_iter()
            .zip(assemble_sd_load_blocks(mesh, w, params.forcing))
        {
            forcing.push(ForcingTerm {
                coef,
                vector: lifting.restrict(&v),
            });
        }
    }
    AffineSystem::new(operator, forcing, domain, lifting)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_monolithic;
    use crate::mesh::Partition;
    use crate::norm2;

    fn params(nu: f64) -> BenchmarkParams {
        BenchmarkParams {
            nu,
            wind: BenchmarkParams::wind_from_angle(30.0),
            forcing: 1.0,
            sd_mode: SdMode::PerParameter,
            sd_forcing: false,
        }
    }

    fn system(n: usize, nx: usize, ny: usize, nu: f64) -> (StructuredMesh, AffineSystem) {
        let mesh = StructuredMesh::new(n, Partition::new(nx, ny)).unwrap();
        let dom = ParameterBox::uniform(nx * ny, 0.01, 1.0).unwrap();
        let sys = build_benchmark(&mesh, &params(nu), dom).unwrap();
        (mesh, sys)
    }

    /// Deterministic pseudo-random points for property checks.
    fn sample_points(dim: usize, count: usize) -> Vec<Vec<f64>> {
        let mut state = 0x2545_f491_4f6c_dd1du64;
        (0..count)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        state ^= state << 13;
                        state ^= state >> 7;
                        state ^= state << 17;
                        0.01 + 0.99 * (state >> 11) as f64 / (1u64 << 53) as f64
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn benchmark_term_counts() {
        let (_, sys) = system(8, 2, 2, 0.5);
        assert_eq!(sys.operator_terms().len(), 9);
        assert_eq!(sys.forcing_terms().len(), 10);
        assert!(sys.operator_terms().iter().all(|t| t.matrix.nrows() == 49));
    }

    #[test]
    fn sd_inactive_for_resolved_diffusion() {
        let h = 2.0 / 128.0;
        assert_eq!(sd_delta(0.5, 1.0, h), 0.0);
        let d = sd_delta(0.005, 1.0, h);
        let peclet = h / 0.01;
        assert!((d - h / 2.0 * (1.0 - 1.0 / peclet)).abs() < 1e-15);
    }

    #[test]
    fn coefficient_descriptors() {
        let xi = [0.3, 0.7];
        assert_eq!(CoefficientFn::Constant(2.0).eval(&xi), 2.0);
        assert!((CoefficientFn::LinearInXi { m: 1, scale: 0.5 }.eval(&xi) - 0.35).abs() < 1e-15);
    }

    #[test]
    fn assemble_at_rejects_outside_box() {
        let (_, sys) = system(4, 2, 2, 0.5);
        let err = sys.assemble_at(&[0.5, 0.5, 1.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { coordinate: 2, .. }));
    }

    #[test]
    fn anchor_operator_is_definition() {
        let (mesh, sys) = system(8, 2, 2, 0.5);
        let c = sys.domain().anchor();
        let (a, _) = sys.assemble_at(&c).unwrap();
        let mut expected = CsrMatrix::zeros(a.nrows(), a.ncols());
        let h = mesh.h();
        for t in sys.operator_terms() {
            let coef = match t.coef {
                CoefficientFn::LinearInXi { m, scale } => scale * c[m],
                CoefficientFn::Constant(v) => v,
                CoefficientFn::SdDelta { m, .. } => sd_delta(0.5 * c[m], 1.0, h),
            };
            expected = expected.add_scaled(coef, &t.matrix);
        }
        assert!(a.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn assembly_is_deterministic() {
        let (_, sys) = system(8, 2, 2, 0.05);
        let xi = [0.2, 0.9, 0.4, 0.01];
        let (a1, f1) = sys.assemble_at(&xi).unwrap();
        let (a2, f2) = sys.assemble_at(&xi).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(f1, f2);
    }

    #[test]
    fn equal_parameters_give_scaled_total_stiffness() {
        let (_, sys) = system(8, 2, 2, 0.5);
        let xi = [0.6; 4];
        let mut diffusion = CsrMatrix::zeros(sys.size(), sys.size());
        let mut total = CsrMatrix::zeros(sys.size(), sys.size());
        for t in sys.operator_terms() {
            if let CoefficientFn::LinearInXi { .. } = t.coef {
                diffusion = diffusion.add_scaled(t.coef.eval(&xi), &t.matrix);
                total = total.add_scaled(1.0, &t.matrix);
            }
        }
        let scaled = CsrMatrix::zeros(sys.size(), sys.size()).add_scaled(0.5 * 0.6, &total);
        assert!(diffusion.max_abs_diff(&scaled) < 1e-14);
    }

    #[test]
    fn finite_difference_of_operator_in_one_coordinate() {
        let (mesh, sys) = system(8, 2, 2, 0.05);
        let h = mesh.h();
        let speed = 1.0;
        // Both ξ_m = 0.05 and 0.05 + step are in the stabilized regime here.
        let m = 1;
        let base = [0.5, 0.05, 0.5, 0.5];
        let step = 1e-6;
        let mut moved = base;
        moved[m] += step;
        let (a0, _) = sys.assemble_at(&base).unwrap();
        let (a1, _) = sys.assemble_at(&moved).unwrap();
        let quotient = CsrMatrix::zeros(a0.nrows(), a0.ncols())
            .add_scaled(1.0 / step, &a1.add_scaled(-1.0, &a0));
        let ddelta =
            (sd_delta(0.05 * (0.05 + step), speed, h) - sd_delta(0.05 * 0.05, speed, h)) / step;
        let k_m = &sys.operator_terms()[m].matrix;
        let s_m = &sys.operator_terms()[4 + 1 + m].matrix;
        let expected = CsrMatrix::zeros(a0.nrows(), a0.ncols())
            .add_scaled(0.05, k_m)
            .add_scaled(ddelta, s_m);
        let scale = expected.max_abs();
        assert!(quotient.max_abs_diff(&expected) <= 1e-6 * scale);
        // The derivative of δ is nonzero in this regime, so S_m participates.
        assert!(ddelta.abs() > 1e-3);
    }

    #[test]
    fn affine_sum_matches_monolithic_assembly() {
        let (mesh, sys) = system(8, 2, 4, 0.05);
        let map: Vec<Option<usize>> = (0..mesh.node_count()).map(|v| mesh.dof(v)).collect();
        let ni = sys.size();
        let w = BenchmarkParams::wind_from_angle(30.0);
        for xi in sample_points(8, 20) {
            let (a, _) = sys.assemble_at(&xi).unwrap();
            let direct = assemble_monolithic(
                &mesh,
                w,
                |e| 0.05 * xi[mesh.element_subdomain(e)],
                |e| sd_delta(0.05 * xi[mesh.element_subdomain(e)], 1.0, mesh.h()),
            )
            .restrict(&map, &map, ni, ni);
            assert!(a.max_abs_diff(&direct) <= 1e-12);
        }
    }

    #[test]
    fn forcing_is_load_minus_lifted_operator() {
        let (mesh, sys) = system(8, 4, 2, 0.5);
        let w = BenchmarkParams::wind_from_angle(30.0);
        let load = assemble_load(&mesh, 1.0);
        for xi in sample_points(8, 20) {
            let (_, f) = sys.assemble_at(&xi).unwrap();
            let full = assemble_monolithic(
                &mesh,
                w,
                |e| 0.5 * xi[mesh.element_subdomain(e)],
                |e| sd_delta(0.5 * xi[mesh.element_subdomain(e)], 1.0, mesh.h()),
            );
            let ag = full.mul_vec(sys.lifting().values());
            let expected: Vec<f64> = sys
                .lifting()
                .interior()
                .iter()
                .map(|&v| load[v] - ag[v])
                .collect();
            let err = f
                .iter()
                .zip(&expected)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-12, "{err}");
        }
    }

    #[test]
    fn anchor_solution_in_physical_range() {
        let (mesh, sys) = system(32, 2, 2, 0.5);
        let snap = sys.full_solve(&sys.domain().anchor()).unwrap();
        let min = snap.interior.iter().cloned().fold(f64::MAX, f64::min);
        assert!(min > -0.05, "min {min}");
        // With f = 1 the field exceeds the boundary data; v = 1 + w.x + sqrt(2)
        // solves the same equation and dominates g on the boundary.
        let w = BenchmarkParams::wind_from_angle(30.0);
        for (id, &u) in snap.field.iter().enumerate() {
            let x = mesh.node(id);
            let bound = 1.0 + w[0] * x[0] + w[1] * x[1] + core::f64::consts::SQRT_2;
            assert!(u < bound + 0.05, "node {id}: {u} vs {bound}");
        }
        let (a, f) = sys.assemble_at(&snap.xi).unwrap();
        let r: Vec<f64> = a
            .mul_vec(&snap.interior)
            .iter()
            .zip(&f)
            .map(|(x, y)| x - y)
            .collect();
        assert!(norm2(&r) / norm2(&f) <= 1e-10);
        assert_eq!(snap, sys.full_solve(&snap.xi).unwrap());
    }

    #[test]
    fn full_field_is_scatter_plus_lifting() {
        let (_, sys) = system(8, 1, 1, 0.5);
        let snap = sys.full_solve(&[0.3]).unwrap();
        for (k, &v) in sys.lifting().interior().iter().enumerate() {
            assert_eq!(snap.field[v], snap.interior[k]);
        }
        for (v, &g) in sys.lifting().values().iter().enumerate() {
            if !sys.lifting().interior().contains(&v) {
                assert_eq!(snap.field[v], g);
            }
        }
    }

    #[test]
    fn diffusion_scale_equivalence() {
        let mesh = StructuredMesh::new(8, Partition::new(2, 1)).unwrap();
        let small = build_benchmark(
            &mesh,
            &params(0.05),
            ParameterBox::uniform(2, 0.1, 10.0).unwrap(),
        )
        .unwrap();
        let large = build_benchmark(
            &mesh,
            &params(0.5),
            ParameterBox::uniform(2, 0.01, 1.0).unwrap(),
        )
        .unwrap();
        let a = small.full_solve(&[3.0, 0.4]).unwrap();
        let b = large.full_solve(&[0.3, 0.04]).unwrap();
        let err = a
            .field
            .iter()
            .zip(&b.field)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn frozen_sd_uses_anchor_value() {
        let mesh = StructuredMesh::new(8, Partition::new(1, 2)).unwrap();
        let mut p = params(0.01);
        p.sd_mode = SdMode::FrozenAtAnchor;
        let sys = build_benchmark(&mesh, &p, ParameterBox::uniform(2, 0.01, 1.0).unwrap()).unwrap();
        let expected = sd_delta(0.01 * 0.505, 1.0, mesh.h());
        assert!(expected > 0.0);
        match sys.operator_terms()[3].coef {
            CoefficientFn::Constant(v) => assert!((v - expected).abs() < 1e-15),
            other => panic!("unexpected coefficient {other:?}"),
        }
    }
}
