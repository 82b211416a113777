//! Q1 finite-element assembly on a [`StructuredMesh`].
//!
//! All matrices are assembled over the full nodal space (boundary rows
//! included) and restricted to interior dofs by the affine system. Every
//! element of the uniform grid is the same `h x h` square, so the local
//! matrices are integrated once with 2x2 Gauss quadrature and scattered.

use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::StructuredMesh;
use crate::sparse::{CsrMatrix, TripletMatrix};

/// Local 4x4 element matrix in counterclockwise node order.
pub type ElementMatrix = [[f64; 4]; 4];

const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// 2x2 Gauss points on the reference square (all weights are 1).
fn gauss_points() -> [[f64; 2]; 4] {
    let g = 1.0 / libm::sqrt(3.0);
    [[-g, -g], [g, -g], [g, g], [-g, g]]
}

/// Basis values and physical gradients at a reference point of an `h x h`
/// element.
fn shape(s: f64, t: f64, h: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let mut val = [0.0; 4];
    let mut grad = [[0.0; 2]; 4];
    for (a, c) in CORNERS.iter().enumerate() {
        val[a] = 0.25 * (1.0 + c[0] * s) * (1.0 + c[1] * t);
        grad[a] = [
            0.25 * c[0] * (1.0 + c[1] * t) * 2.0 / h,
            0.25 * c[1] * (1.0 + c[0] * s) * 2.0 / h,
        ];
    }
    let sum: f64 = val.iter().sum();
    assert!(
        (sum - 1.0).abs() <= 1e-14,
        "Q1 partition of unity violated: {sum}"
    );
    (val, grad)
}

fn integrate<F: Fn(&[f64; 4], &[[f64; 2]; 4], usize, usize) -> f64>(h: f64, f: F) -> ElementMatrix {
    let jac = 0.25 * h * h;
    let mut m = [[0.0; 4]; 4];
    for [s, t] in gauss_points() {
        let (val, grad) = shape(s, t, h);
        for (a, row) in m.iter_mut().enumerate() {
            for (b, entry) in row.iter_mut().enumerate() {
                *entry += jac * f(&val, &grad, a, b);
            }
        }
    }
    m
}

/// `∫ ∇φ_a · ∇φ_b` on one element.
pub fn element_stiffness(h: f64) -> ElementMatrix {
    integrate(h, |_, g, a, b| g[a][0] * g[b][0] + g[a][1] * g[b][1])
}

/// `∫ (w · ∇φ_b) φ_a`; row `a` is the test function.
pub fn element_convection(h: f64, w: [f64; 2]) -> ElementMatrix {
    integrate(h, |v, g, a, b| (w[0] * g[b][0] + w[1] * g[b][1]) * v[a])
}

/// `∫ (w · ∇φ_a)(w · ∇φ_b)`, the streamline-diffusion kernel without δ.
pub fn element_streamline(h: f64, w: [f64; 2]) -> ElementMatrix {
    integrate(h, |_, g, a, b| {
        (w[0] * g[a][0] + w[1] * g[a][1]) * (w[0] * g[b][0] + w[1] * g[b][1])
    })
}

fn scatter<W: Fn(usize) -> f64>(
    mesh: &StructuredMesh,
    local: &ElementMatrix,
    weight: W,
) -> CsrMatrix {
    let n = mesh.node_count();
    let mut t = TripletMatrix::new(n, n);
    for e in 0..mesh.element_count() {
        let c = weight(e);
        if c == 0.0 {
            continue;
        }
        let ids = mesh.element(e);
        for (a, &ra) in ids.iter().enumerate() {
            for (b, &rb) in ids.iter().enumerate() {
                t.push(ra, rb, c * local[a][b]);
            }
        }
    }
    t.into_csr()
}

fn per_subdomain(mesh: &StructuredMesh, local: &ElementMatrix) -> Vec<CsrMatrix> {
    (0..mesh.subdomain_count())
        .map(|m| {
            scatter(mesh, local, |e| {
                if mesh.element_subdomain(e) == m {
                    1.0
                } else {
                    0.0
                }
            })
        })
        .collect()
}

/// Unit-coefficient stiffness restricted to each subdomain, `K_m`.
pub fn assemble_diffusion_blocks(mesh: &StructuredMesh) -> Vec<CsrMatrix> {
    per_subdomain(mesh, &element_stiffness(mesh.h()))
}

/// Galerkin convection matrix `N`.
pub fn assemble_convection(mesh: &StructuredMesh, w: [f64; 2]) -> CsrMatrix {
    scatter(mesh, &element_convection(mesh.h(), w), |_| 1.0)
}

/// Streamline-diffusion blocks `S_m`, one per subdomain, δ factored out.
pub fn assemble_sd_blocks(mesh: &StructuredMesh, w: [f64; 2]) -> Vec<CsrMatrix> {
    per_subdomain(mesh, &element_streamline(mesh.h(), w))
}

/// Assembles `Σ_e c_e K_e + N + Σ_e d_e S_e` element by element, with the
/// diffusion coefficient `c_e` and stabilization `d_e` given per element.
pub fn assemble_monolithic<C, D>(
    mesh: &StructuredMesh,
    w: [f64; 2],
    diffusion: C,
    delta: D,
) -> CsrMatrix
where
    C: Fn(usize) -> f64,
    D: Fn(usize) -> f64,
{
    let h = mesh.h();
    let (k, c, s) = (
        element_stiffness(h),
        element_convection(h, w),
        element_streamline(h, w),
    );
    let n = mesh.node_count();
    let mut t = TripletMatrix::new(n, n);
    for e in 0..mesh.element_count() {
        let (a, d) = (diffusion(e), delta(e));
        let ids = mesh.element(e);
        for i in 0..4 {
            for j in 0..4 {
                t.push(ids[i], ids[j], a * k[i][j] + c[i][j] + d * s[i][j]);
            }
        }
    }
    t.into_csr()
}

/// Consistent load vector `∫ f φ_a` for a pointwise forcing, 2x2 Gauss.
pub fn assemble_load_fn<F: Fn([f64; 2]) -> f64>(mesh: &StructuredMesh, f: F) -> Vec<f64> {
    let h = mesh.h();
    let jac = 0.25 * h * h;
    let mut load = vec![0.0; mesh.node_count()];
    for e in 0..mesh.element_count() {
        let ids = mesh.element(e);
        let origin = mesh.node(ids[0]);
        for [s, t] in gauss_points() {
            let (val, _) = shape(s, t, h);
            let x = [
                origin[0] + 0.5 * (s + 1.0) * h,
                origin[1] + 0.5 * (t + 1.0) * h,
            ];
            let fx = f(x);
            for (a, &id) in ids.iter().enumerate() {
                load[id] += jac * fx * val[a];
            }
        }
    }
    load
}

/// Load vector for a constant forcing.
pub fn assemble_load(mesh: &StructuredMesh, f_const: f64) -> Vec<f64> {
    assemble_load_fn(mesh, |_| f_const)
}

/// Streamline load `∫ f (w · ∇φ_a)` restricted to each subdomain, for a
/// constant forcing.
pub fn assemble_sd_load_blocks(mesh: &StructuredMesh, w: [f64; 2], f_const: f64) -> Vec<Vec<f64>> {
    let h = mesh.h();
    let jac = 0.25 * h * h;
    let mut local = [0.0; 4];
    for [s, t] in gauss_points() {
        let (_, grad) = shape(s, t, h);
        for (a, g) in grad.iter().enumerate() {
            local[a] += jac * f_const * (w[0] * g[0] + w[1] * g[1]);
        }
    }
    let mut out = vec![vec![0.0; mesh.node_count()]; mesh.subdomain_count()];
    for e in 0..mesh.element_count() {
        let block = &mut out[mesh.element_subdomain(e)];
        for (a, &id) in mesh.element(e).iter().enumerate() {
            block[id] += local[a];
        }
    }
    out
}

/// Nodal interpolation of the Dirichlet data and the interior-dof map.
#[derive(Debug, Clone)]
pub struct DirichletLifting {
    values: Vec<f64>,
    interior: Vec<usize>,
}

impl DirichletLifting {
    /// Lifting from nodal boundary values `g(x)` (interior entries are zero).
    pub fn from_fn<G: Fn([f64; 2]) -> f64>(mesh: &StructuredMesh, g: G) -> Self {
        let values = (0..mesh.node_count())
            .map(|v| {
                if mesh.is_boundary(v) {
                    g(mesh.node(v))
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            values,
            interior: mesh.interior_nodes().to_vec(),
        }
    }

    /// The benchmark data: 1 on `{x1 = -1}` and on `{-1 <= x1 <= 0, x2 = -1}`,
    /// 0 elsewhere. Both closed sets include their endpoints.
    pub fn benchmark(mesh: &StructuredMesh) -> Self {
        let eps = 1e-12;
        Self::from_fn(mesh, |[x1, x2]| {
            let left = (x1 + 1.0).abs() < eps;
            let bottom = (x2 + 1.0).abs() < eps && x1 <= eps;
            if left || bottom {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Lifting vector `u_g` over all nodes.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interior node ids in dof order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Full nodal field from an interior vector: scatter plus `u_g`.
    pub fn lift(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = self.values.clone();
        for (&node, &v) in self.interior.iter().zip(interior) {
            full[node] = v;
        }
        full
    }

    /// Interior entries of a full nodal vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.interior.iter().map(|&v| full[v]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Partition;
    use crate::sparse::solve_sparse;
    use core::f64::consts::PI;

    fn mesh(n: usize, nx: usize, ny: usize) -> StructuredMesh {
        StructuredMesh::new(n, Partition::new(nx, ny)).unwrap()
    }

    fn sum_all(blocks: &[CsrMatrix]) -> CsrMatrix {
        let mut acc = CsrMatrix::zeros(blocks[0].nrows(), blocks[0].ncols());
        for b in blocks {
            acc = acc.add_scaled(1.0, b);
        }
        acc
    }

    #[test]
    fn element_stiffness_matches_analytic_square() {
        // Q1 stiffness on a square is independent of h: (1/6)[4 -1 -2 -1; ...].
        let k = element_stiffness(0.37);
        let expected = [
            [4.0, -1.0, -2.0, -1.0],
            [-1.0, 4.0, -1.0, -2.0],
            [-2.0, -1.0, 4.0, -1.0],
            [-1.0, -2.0, -1.0, 4.0],
        ];
        for a in 0..4 {
            for b in 0..4 {
                assert!((k[a][b] - expected[a][b] / 6.0).abs() < 1e-14);
            }
        }
        assert!((k[0][0] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let m = mesh(8, 2, 2);
        let total = sum_all(&assemble_diffusion_blocks(&m));
        let ones = vec![1.0; m.node_count()];
        let y = total.mul_vec(&ones);
        for &v in m.interior_nodes() {
            assert!(y[v].abs() < 1e-13);
        }
    }

    #[test]
    fn diffusion_block_is_local() {
        let m = mesh(4, 2, 2);
        let k = assemble_diffusion_blocks(&m);
        for v in 0..m.node_count() {
            let [x, y] = m.node(v);
            let touches_first = x <= 1e-12 && y <= 1e-12;
            let row_empty = k[0].row(v).next().is_none();
            assert_eq!(row_empty, !touches_first, "node {v}");
        }
    }

    #[test]
    fn block_sums_independent_of_partition() {
        let w = [0.5, 0.75f64.sqrt()];
        let shapes = [(1, 1), (2, 2), (1, 4), (4, 1)];
        let k_ref = sum_all(&assemble_diffusion_blocks(&mesh(8, 1, 1)));
        let s_ref = sum_all(&assemble_sd_blocks(&mesh(8, 1, 1), w));
        for (nx, ny) in shapes {
            let m = mesh(8, nx, ny);
            assert!(sum_all(&assemble_diffusion_blocks(&m)).max_abs_diff(&k_ref) <= 1e-12);
            assert!(sum_all(&assemble_sd_blocks(&m, w)).max_abs_diff(&s_ref) <= 1e-12);
        }
    }

    #[test]
    fn zero_wind_gives_empty_convection() {
        let n = assemble_convection(&mesh(4, 1, 1), [0.0, 0.0]);
        assert_eq!(n.nnz(), 0);
    }

    #[test]
    fn convection_skew_on_interior_rows() {
        let m = mesh(8, 1, 1);
        let w = [(PI / 6.0).sin(), (PI / 6.0).cos()];
        let n = assemble_convection(&m, w);
        let nt = n.transpose();
        assert!(n.max_abs_diff(&nt) > 1e-3);
        let sym = n.add_scaled(1.0, &nt);
        let ones = vec![1.0; m.node_count()];
        let rows = sym.mul_vec(&ones);
        let plain = n.mul_vec(&ones);
        for &v in m.interior_nodes() {
            assert!(rows[v].abs() < 1e-14);
            assert!(plain[v].abs() < 1e-14);
        }
    }

    #[test]
    fn vertical_wind_streamline_is_one_dimensional() {
        // With w = (0, 1) the element kernel is (∂φ_a/∂x2)(∂φ_b/∂x2), whose
        // tensor form is mass_x1 ⊗ stiffness_x2 for 1-D linear elements.
        let h = 0.25;
        let s = element_streamline(h, [0.0, 1.0]);
        let mass = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        let stiff = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
        let ix = [0, 1, 1, 0];
        let iy = [0, 0, 1, 1];
        for a in 0..4 {
            for b in 0..4 {
                let expected = mass[ix[a]][ix[b]] * stiff[iy[a]][iy[b]];
                assert!((s[a][b] - expected).abs() < 1e-14, "{a},{b}");
            }
        }
    }

    #[test]
    fn load_sums_to_domain_area() {
        for n in [2, 5, 16] {
            let m = mesh(n, 1, 1);
            let f = assemble_load(&m, 1.0);
            assert!((f.iter().sum::<f64>() - 4.0).abs() < 1e-13);
            let h = m.h();
            for &v in m.interior_nodes() {
                assert!((f[v] - h * h).abs() < 1e-15);
            }
        }
        assert!(assemble_load(&mesh(4, 1, 1), 0.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn benchmark_lifting_corners() {
        let m = mesh(4, 1, 1);
        let lift = DirichletLifting::benchmark(&m);
        let value_at = |x: f64, y: f64| {
            let id = (0..m.node_count())
                .find(|&v| {
                    let p = m.node(v);
                    (p[0] - x).abs() < 1e-12 && (p[1] - y).abs() < 1e-12
                })
                .unwrap();
            lift.values()[id]
        };
        assert_eq!(value_at(0.0, -1.0), 1.0);
        assert_eq!(value_at(-1.0, 1.0), 1.0);
        assert_eq!(value_at(0.5, -1.0), 0.0);
        assert_eq!(value_at(1.0, 1.0), 0.0);
        assert_eq!(value_at(-1.0, 0.0), 1.0);
        assert_eq!(value_at(0.0, 0.0), 0.0);
    }

    fn poisson_error(n: usize) -> f64 {
        let m = mesh(n, 1, 1);
        let k = sum_all(&assemble_diffusion_blocks(&m));
        let map: Vec<Option<usize>> = (0..m.node_count()).map(|v| m.dof(v)).collect();
        let ni = m.interior_nodes().len();
        let a = k.restrict(&map, &map, ni, ni);
        let f = assemble_load_fn(&m, |[x, y]| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin());
        let b: Vec<f64> = m.interior_nodes().iter().map(|&v| f[v]).collect();
        let u = solve_sparse(&a, &b).unwrap();
        let sq: f64 = m
            .interior_nodes()
            .iter()
            .zip(&u)
            .map(|(&v, &uv)| {
                let [x, y] = m.node(v);
                let e = uv - (PI * x).sin() * (PI * y).sin();
                e * e
            })
            .sum();
        libm::sqrt(sq / ni as f64)
    }

    #[test]
    fn manufactured_poisson_converges_second_order() {
        let ratio = poisson_error(32) / poisson_error(64);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn patterns_are_symmetric() {
        let m = mesh(6, 2, 3);
        let w = [0.5, 0.75f64.sqrt()];
        assert!(assemble_convection(&m, w).has_symmetric_pattern());
        for b in assemble_diffusion_blocks(&m)
            .iter()
            .chain(&assemble_sd_blocks(&m, w))
        {
            assert!(b.has_symmetric_pattern());
        }
    }
}
