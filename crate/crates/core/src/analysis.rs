//! Kernel of the effective tensor: macroscopic isometric deformations.
//!
//! Besides counting the kernel, this module checks the algebraic identities
//! that tie it to the image of `A` through the cofactor map:
//!
//! * `A J A = 0` with `J = [[0, −C], [C, 0]]`,
//! * `E₁ : cof χ₂ − χ₁ : cof E₂ = 0` for any two kernel modes,
//! * the in-/out-of-plane Poisson relation `ν_m + ν_f = 0` that follows from it.

use nalgebra::{DMatrix, Matrix3, Matrix6, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::assembly::MacroStrain;
use crate::effective::EffectiveTensor;
use crate::error::{Error, Result};

/// Default relative eigenvalue cutoff for the kernel.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Gap ratio below which the count is flagged ambiguous.
pub const AMBIGUOUS_GAP: f64 = 1e4;
/// Default principal-angle tolerance (radians) for pure-mode membership.
pub const DEFAULT_ANGLE_TOL: f64 = 1e-6;

/// Cofactor map in the orthonormal encoding: `C vec(S) = vec(cof S)`.
pub fn cofactor() -> Matrix3<f64> {
    Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0)
}

fn apply_cof(v: [f64; 3]) -> [f64; 3] {
    [v[1], v[0], -v[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// The block matrix `[[0, −C], [C, 0]]` mapping isometric strains to admissible stresses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymplecticJ {
    pub matrix: Matrix6<f64>,
}

impl Default for SymplecticJ {
    fn default() -> Self {
        Self::new()
    }
}

impl SymplecticJ {
    pub fn new() -> Self {
        let c = cofactor();
        let mut matrix = Matrix6::zeros();
        matrix.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-c));
        matrix.fixed_view_mut::<3, 3>(3, 0).copy_from(&c);
        Self { matrix }
    }

    pub fn apply(&self, m: &MacroStrain) -> MacroStrain {
        let v = nalgebra::Vector6::from(m.to_vector());
        MacroStrain::from_vector((self.matrix * v).into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// The eigenvalue gap at the kernel cut is below [`AMBIGUOUS_GAP`].
    Ambiguous,
    /// `A` vanishes identically.
    DegenerateCell,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub pure_membrane: usize,
    pub pure_flexure: usize,
    pub mixed: usize,
}

/// Spectral summary of an effective tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    /// Ascending, negative round-off clamped to zero.
    pub eigenvalues: [f64; 6],
    pub kernel_dim: usize,
    /// Orthonormal kernel basis, one 6-vector per mode.
    pub kernel_basis: Vec<[f64; 6]>,
    /// Orthonormal basis of the image, ordered by increasing eigenvalue.
    pub image_basis: Vec<[f64; 6]>,
    /// Smallest retained eigenvalue over largest discarded one.
    pub gap_ratio: f64,
    pub classification: Classification,
    #[serde(rename = "residual_AJA")]
    pub residual_aja: f64,
    /// Largest `|pairing|` between two kernel basis vectors.
    pub symplectic_residual: f64,
    pub flags: Vec<Flag>,
}

impl KernelReport {
    pub fn is_ambiguous(&self) -> bool {
        self.flags.contains(&Flag::Ambiguous)
    }

    pub fn kernel_modes(&self) -> Vec<MacroStrain> {
        self.kernel_basis
            .iter()
            .map(|v| MacroStrain::from_vector(*v))
            .collect()
    }

    /// Antisymmetric `k × k` matrix of pairings between kernel basis vectors.
    pub fn pairing_matrix(&self) -> Vec<Vec<f64>> {
        let modes = self.kernel_modes();
        modes
            .iter()
            .map(|a| modes.iter().map(|b| symplectic_pairing(a, b)).collect())
            .collect()
    }

    /// Largest component of `J·k` inside the kernel, over unit kernel vectors `k`.
    ///
    /// Zero when `J` maps the kernel into its orthogonal complement.
    pub fn j_kernel_overlap(&self) -> f64 {
        let j = SymplecticJ::new();
        let modes = self.kernel_modes();
        modes
            .iter()
            .map(|a| {
                let ja = j.apply(a).to_vector();
                self.kernel_basis
                    .iter()
                    .map(|b| b.iter().zip(&ja).map(|(x, y)| x * y).sum::<f64>().powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Eigen-decomposes `A`, cuts the kernel at `tol_rel · λ_max` and fills in
/// the classification and identity residuals.
///
/// The tensor counts as identically zero when `λ_max ≤ tol_rel · reference`.
/// Pass the tensor's own unrelaxed macro stiffness as `reference`, or use
/// [`kernel_count_matrix`] when only the matrix is at hand.
pub fn kernel_count(tensor: &EffectiveTensor, tol_rel: f64) -> KernelReport {
    kernel_count_scaled(&tensor.matrix, tensor.reference, tol_rel)
}

/// [`kernel_count`] for a bare matrix; only an exactly zero `A` is degenerate.
pub fn kernel_count_matrix(a: &Matrix6<f64>, tol_rel: f64) -> KernelReport {
    kernel_count_scaled(a, 0.0, tol_rel)
}

fn kernel_count_scaled(a: &Matrix6<f64>, reference: f64, tol_rel: f64) -> KernelReport {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let eigenvalues: [f64; 6] = std::array::from_fn(|k| eig.eigenvalues[order[k]].max(0.0));
    let vectors: Vec<[f64; 6]> = order
        .iter()
        .map(|&k| std::array::from_fn(|r| eig.eigenvectors[(r, k)]))
        .collect();

    let lambda_max = eigenvalues[5];
    let mut flags = Vec::new();
    if !(lambda_max > 0.0) || lambda_max <= tol_rel * reference {
        flags.push(Flag::DegenerateCell);
        let kernel_basis: Vec<[f64; 6]> = (0..6)
            .map(|q| std::array::from_fn(|r| if r == q { 1.0 } else { 0.0 }))
            .collect();
        let mut report = KernelReport {
            eigenvalues,
            kernel_dim: 6,
            kernel_basis,
            image_basis: Vec::new(),
            gap_ratio: 0.0,
            classification: Classification::default(),
            residual_aja: 0.0,
            symplectic_residual: 0.0,
            flags,
        };
        report.classification = classify_kernel(&report, DEFAULT_ANGLE_TOL);
        report.symplectic_residual = max_pairing(&report);
        return report;
    }

    let cut = tol_rel * lambda_max;
    let kernel_dim = eigenvalues.iter().filter(|&&l| l < cut).count();
    // floor keeps the ratio finite when the kernel eigenvalues are exactly zero
    let floor = lambda_max * f64::EPSILON * f64::EPSILON;
    let gap_ratio = if kernel_dim == 0 {
        eigenvalues[0] / cut
    } else {
        eigenvalues[kernel_dim] / eigenvalues[kernel_dim - 1].max(floor)
    };
    if gap_ratio < AMBIGUOUS_GAP {
        flags.push(Flag::Ambiguous);
    }

    let mut report = KernelReport {
        eigenvalues,
        kernel_dim,
        kernel_basis: vectors[..kernel_dim].to_vec(),
        image_basis: vectors[kernel_dim..].to_vec(),
        gap_ratio,
        classification: Classification::default(),
        residual_aja: exact_relation_residual(a, &SymplecticJ::new()),
        symplectic_residual: 0.0,
        flags,
    };
    report.classification = classify_kernel(&report, DEFAULT_ANGLE_TOL);
    report.symplectic_residual = max_pairing(&report);
    report
}

fn max_pairing(report: &KernelReport) -> f64 {
    report
        .pairing_matrix()
        .iter()
        .flatten()
        .fold(0.0, |m, p| m.max(p.abs()))
}

/// `‖A J A‖_F / ‖A‖_F²`, zero for `A = 0`.
pub fn exact_relation_residual(a: &Matrix6<f64>, j: &SymplecticJ) -> f64 {
    let scale = a.norm_squared();
    if scale == 0.0 {
        return 0.0;
    }
    (a * j.matrix * a).norm() / scale
}

/// `E₁ : cof χ₂ − χ₁ : cof E₂` in the orthonormal encoding.
pub fn symplectic_pairing(m1: &MacroStrain, m2: &MacroStrain) -> f64 {
    dot3(m1.e, apply_cof(m2.chi)) - dot3(m1.chi, apply_cof(m2.e))
}

/// Principal subspace of the kernel lying (within `angle_tol`) in `{χ = 0}`
/// (`block = 0`) or `{E = 0}` (`block = 1`).
///
/// The sines of the principal angles between the kernel and `{χ = 0}` are the
/// singular values of the `χ` rows of the kernel basis, so the eigenvectors
/// of `K_χᵀ K_χ` with eigenvalue below `sin²(angle_tol)` span the intersection.
fn pure_subspace(report: &KernelReport, block: usize, angle_tol: f64) -> Vec<[f64; 6]> {
    let k = report.kernel_dim;
    if k == 0 {
        return Vec::new();
    }
    // rows of the complementary block must vanish
    let off = if block == 0 { 3 } else { 0 };
    let kc = DMatrix::from_fn(3, k, |r, c| report.kernel_basis[c][off + r]);
    let gram = kc.tr_mul(&kc);
    let eig = SymmetricEigen::new(gram);
    let limit = angle_tol.sin().powi(2);
    (0..k)
        .filter(|&c| eig.eigenvalues[c] < limit)
        .map(|c| {
            let mut v = [0.0; 6];
            for (basis, coef) in report
                .kernel_basis
                .iter()
                .zip(eig.eigenvectors.column(c).iter())
            {
                for r in 0..6 {
                    v[r] += coef * basis[r];
                }
            }
            v
        })
        .collect()
}

/// Dimensions of `Ker A ∩ {χ = 0}`, `Ker A ∩ {E = 0}` and the remaining mixed part.
pub fn classify_kernel(report: &KernelReport, angle_tol: f64) -> Classification {
    let pure_membrane = pure_subspace(report, 0, angle_tol).len();
    let pure_flexure = pure_subspace(report, 1, angle_tol).len();
    Classification {
        pure_membrane,
        pure_flexure,
        mixed: report
            .kernel_dim
            .saturating_sub(pure_membrane + pure_flexure),
    }
}

/// Effective Poisson coefficients of the pure membrane mode `E ∝ diag(1, −ν_m)`
/// and of a diagonal pure flexure mode `χ ∝ diag(1, −ν_f)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonIdentity {
    pub nu_membrane: f64,
    pub nu_flexure: f64,
    /// `ν_m + ν_f`, which the pairing identity forces to zero.
    pub residual: f64,
}

/// Extracts both Poisson coefficients from the kernel.
///
/// Requires exactly one pure membrane mode, diagonal within `tol`, and at
/// least one pure flexure mode; when the flexure space is larger the
/// diagonal combination is taken. Otherwise returns
/// [`Error::NotCanonical`] carrying the kernel's largest pairing residual.
pub fn poisson_identity(report: &KernelReport, tol: f64) -> Result<PoissonIdentity> {
    let not_canonical = || Error::NotCanonical {
        pairing_residual: max_pairing(report),
    };
    let membrane = pure_subspace(report, 0, DEFAULT_ANGLE_TOL);
    let flexure = pure_subspace(report, 1, DEFAULT_ANGLE_TOL);
    if membrane.len() != 1 || flexure.is_empty() {
        return Err(not_canonical());
    }

    let e = [membrane[0][0], membrane[0][1], membrane[0][2]];
    let nu_membrane = diagonal_ratio(e, tol).ok_or_else(not_canonical)?;

    let chis: Vec<[f64; 3]> = flexure.iter().map(|v| [v[3], v[4], v[5]]).collect();
    let chi = if chis.len() == 1 {
        chis[0]
    } else {
        // combination of the two flexure modes with largest off-diagonal parts
        // that cancels the off-diagonal component
        let mut idx: Vec<usize> = (0..chis.len()).collect();
        idx.sort_by(|&p, &q| chis[q][2].abs().total_cmp(&chis[p][2].abs()));
        let (a, b) = (chis[idx[0]], chis[idx[1]]);
        if a[2].abs() <= tol {
            // both already diagonal; take the one with the larger χ11
            if a[0].abs() >= b[0].abs() {
                a
            } else {
                b
            }
        } else {
            let (ca, cb) = (b[2], -a[2]);
            std::array::from_fn(|r| ca * a[r] + cb * b[r])
        }
    };
    let nu_flexure = diagonal_ratio(chi, tol).ok_or_else(not_canonical)?;
    Ok(PoissonIdentity {
        nu_membrane,
        nu_flexure,
        residual: nu_membrane + nu_flexure,
    })
}

/// `ν` such that `v ∝ vec(diag(1, −ν))`, if `v` is diagonal with nonzero first entry.
fn diagonal_ratio(v: [f64; 3], tol: f64) -> Option<f64> {
    let norm = dot3(v, v).sqrt();
    if norm == 0.0 || v[2].abs() > tol * norm || v[0].abs() <= tol * norm {
        return None;
    }
    Some(-v[1] / v[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::mandel;

    fn report_for(diag: [f64; 6], rotation: Option<Matrix6<f64>>) -> KernelReport {
        let mut a = Matrix6::from_diagonal(&nalgebra::Vector6::from(diag));
        if let Some(q) = rotation {
            a = q * a * q.transpose();
        }
        kernel_count_matrix(&a, DEFAULT_TOL)
    }

    #[test]
    fn cofactor_identities() {
        let c = cofactor();
        assert_eq!(c * c, Matrix3::identity());
        let j = SymplecticJ::new().matrix;
        assert_eq!(j * j, -Matrix6::identity());
        assert_eq!(j.transpose(), -j);

        let s = [[1.3, -0.4], [-0.4, 2.1]];
        let cof = [[s[1][1], -s[0][1]], [-s[1][0], s[0][0]]];
        let cv = c * nalgebra::Vector3::from(mandel(s));
        let expected = mandel(cof);
        for k in 0..3 {
            assert!((cv[k] - expected[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn pairing_examples() {
        let m = MacroStrain::new([0.3, -1.0, 0.2], [0.3, -1.0, 0.2]);
        assert_eq!(symplectic_pairing(&m, &m), 0.0);

        let (nu, mu) = (0.3, -0.7);
        let m1 = MacroStrain::from_tensors([[1.0, 0.0], [0.0, -nu]], [[0.0; 2]; 2]);
        let m2 = MacroStrain::from_tensors([[0.0; 2]; 2], [[1.0, 0.0], [0.0, -mu]]);
        assert!((symplectic_pairing(&m1, &m2) + (mu + nu)).abs() < 1e-15);
    }

    #[test]
    fn pairing_is_minus_j_form() {
        let j = SymplecticJ::new().matrix;
        let a = [0.1, -0.2, 0.7, 0.4, 1.1, -0.3];
        let b = [0.5, 0.9, -0.6, 0.2, -0.8, 0.05];
        let (va, vb) = (nalgebra::Vector6::from(a), nalgebra::Vector6::from(b));
        let form = va.dot(&(j * vb));
        let pairing =
            symplectic_pairing(&MacroStrain::from_vector(a), &MacroStrain::from_vector(b));
        assert!((form + pairing).abs() < 1e-15);
    }

    #[test]
    fn zero_tensor_is_degenerate() {
        let r = kernel_count_matrix(&Matrix6::zeros(), DEFAULT_TOL);
        assert_eq!(r.kernel_dim, 6);
        assert!(r.flags.contains(&Flag::DegenerateCell));
        assert_eq!(
            exact_relation_residual(&Matrix6::zeros(), &SymplecticJ::new()),
            0.0
        );
    }

    #[test]
    fn plane_like_tensor() {
        let r = report_for([2.0, 3.0, 1.0, 0.0, 0.0, 0.0], None);
        assert_eq!(r.kernel_dim, 3);
        assert!(r.gap_ratio > 1e20);
        assert!(r.flags.is_empty());
        assert_eq!(
            r.classification,
            Classification {
                pure_membrane: 0,
                pure_flexure: 3,
                mixed: 0
            }
        );
        assert!(r.residual_aja < 1e-15);
        assert!(matches!(
            poisson_identity(&r, 1e-8),
            Err(Error::NotCanonical { .. })
        ));
    }

    #[test]
    fn small_gap_is_ambiguous() {
        let r = report_for([1.0, 1.0, 1e-7, 1e-9, 1e-12, 0.0], None);
        assert_eq!(r.kernel_dim, 3);
        assert!(r.is_ambiguous());
    }

    #[test]
    fn poisson_pair_from_synthetic_kernel() {
        // kernel spanned by E = diag(1, -ν) and the flexures diag(1, ν) and twist
        let nu = 0.5;
        let k1 = MacroStrain::from_tensors([[1.0, 0.0], [0.0, -nu]], [[0.0; 2]; 2]);
        let k2 = MacroStrain::from_tensors([[0.0; 2]; 2], [[1.0, 0.0], [0.0, nu]]);
        let k3 = MacroStrain::from_tensors([[0.0; 2]; 2], [[0.0, 1.0], [1.0, 0.0]]);
        let mut basis = DMatrix::zeros(6, 6);
        for (c, m) in [k1, k2, k3].iter().enumerate() {
            let v = nalgebra::DVector::from(m.to_vector().to_vec());
            basis.set_column(c, &v.normalize());
        }
        // complete with an orthonormal complement via QR of [K | I]
        let mut full = DMatrix::zeros(6, 9);
        full.view_mut((0, 0), (6, 3))
            .copy_from(&basis.view((0, 0), (6, 3)));
        full.view_mut((0, 3), (6, 6))
            .copy_from(&DMatrix::identity(6, 6));
        let q = full.qr().q();
        let q6 = Matrix6::from_fn(|r, c| q[(r, c)]);
        let r = report_for([0.0, 0.0, 0.0, 1.0, 2.0, 3.0], Some(q6));
        assert_eq!(r.kernel_dim, 3);
        assert_eq!(
            r.classification,
            Classification {
                pure_membrane: 1,
                pure_flexure: 2,
                mixed: 0
            }
        );
        let p = poisson_identity(&r, 1e-8).unwrap();
        assert!((p.nu_membrane - 0.5).abs() < 1e-12);
        assert!((p.nu_flexure + 0.5).abs() < 1e-12);
        assert!(p.residual.abs() < 1e-12);
        assert!(r.symplectic_residual < 1e-14);
    }
}
