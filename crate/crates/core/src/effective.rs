//! Effective 6×6 stiffness by condensing out the periodic corrections.
//!
//! For a loading `m` the correction `v` minimizes `Σ_b k_b e_b(m, v)²`. Its
//! normal equations are `K v = −C_perᵀ W C_macro m` with `K = C_perᵀ W C_per`.
//! Uniform translations always lie in the null space of `K`; they are
//! deflated by adding `c·P_T` (the projector onto translations scaled by the
//! mean diagonal of `K`) before a Cholesky factorization. If `K` has further
//! zero modes (internal mechanisms of the truss) the solve falls back to the
//! eigen-decomposition pseudoinverse, which picks the minimum-norm correction.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix6, SymmetricEigen};

use crate::assembly::{ElongationSystem, MacroStrain};
use crate::error::{Error, Result};

/// Relative eigenvalue cutoff below which `K` is treated as singular.
pub const PINV_CUTOFF: f64 = 1e-12;

const INVERSE_ITERATIONS: usize = 12;

#[derive(Clone, Debug)]
enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    Pseudo {
        vectors: DMatrix<f64>,
        inv_values: DVector<f64>,
    },
}

/// Normal-equation solver for the periodic corrections of one elongation system.
///
/// Built once and shared read-only across loadings.
#[derive(Clone, Debug)]
pub struct CorrectionSolver<'a> {
    sys: &'a ElongationSystem,
    factor: Factor,
    /// Estimated `λ_min / λ_max` of the deflated operator.
    pub rcond: f64,
}

/// Minimizing correction for one loading.
#[derive(Clone, Debug, PartialEq)]
pub struct Correction {
    pub displacement: Vec<f64>,
    /// Residual bar elongations at the optimum.
    pub elongations: Vec<f64>,
    /// Attained minimum per unit cell area.
    pub energy: f64,
}

impl<'a> CorrectionSolver<'a> {
    pub fn new(sys: &'a ElongationSystem) -> Result<Self> {
        let k = stiffness_matrix(sys);
        let n = k.nrows();
        if n == 0 {
            return Err(Error::Solver("no periodic unknowns".into()));
        }
        if k.iter().any(|x| !x.is_finite()) {
            return Err(Error::Solver("non-finite stiffness matrix".into()));
        }

        let mean_diag = k.trace() / n as f64;
        let shift = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let mut deflated = k.clone();
        let nodes = sys.n_nodes as f64;
        for a in 0..n {
            for b in 0..n {
                if a % 3 == b % 3 {
                    deflated[(a, b)] += shift / nodes;
                }
            }
        }

        let lambda_max = gershgorin_bound(&deflated);
        if let Some(chol) = Cholesky::new(deflated) {
            let lambda_min = smallest_eigenvalue_bound(&chol, n);
            let rcond = lambda_min / lambda_max;
            if rcond > PINV_CUTOFF {
                return Ok(Self {
                    sys,
                    factor: Factor::Cholesky(chol),
                    rcond,
                });
            }
            log::debug!("K nearly singular (rcond {rcond:e}); using pseudoinverse");
        }

        let eig = SymmetricEigen::new(k);
        if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(Error::Solver(
                "eigen-decomposition of K produced non-finite values".into(),
            ));
        }
        let top = eig.eigenvalues.amax();
        let cut = PINV_CUTOFF * top;
        let inv_values = eig.eigenvalues.map(|l| if l > cut { 1.0 / l } else { 0.0 });
        let kept = inv_values.iter().filter(|&&x| x != 0.0).count();
        let rcond = if kept < n {
            0.0
        } else {
            1.0 / (top * inv_values.max())
        };
        Ok(Self {
            sys,
            factor: Factor::Pseudo {
                vectors: eig.eigenvectors,
                inv_values,
            },
            rcond,
        })
    }

    /// Whether the pseudoinverse path is in use.
    pub fn is_singular(&self) -> bool {
        matches!(self.factor, Factor::Pseudo { .. })
    }

    pub fn solve(&self, m: &MacroStrain) -> Result<Correction> {
        let sys = self.sys;
        let macro_e = sys.macro_elongations(m);
        let mut rhs = DVector::zeros(sys.n_dof());
        for ((row, e), k) in sys.periodic_rows.iter().zip(&macro_e).zip(&sys.weights) {
            let f = -k * e;
            for c in 0..3 {
                rhs[3 * row.j + c] += f * row.dir[c];
                rhs[3 * row.i + c] -= f * row.dir[c];
            }
        }

        let mut v = match &self.factor {
            Factor::Cholesky(chol) => chol.solve(&rhs),
            Factor::Pseudo {
                vectors,
                inv_values,
            } => {
                let coeffs = vectors.tr_mul(&rhs).component_mul(inv_values);
                vectors * coeffs
            }
        };
        remove_translations(v.as_mut_slice());
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Solver(format!(
                "non-finite correction (rcond estimate {:e})",
                self.rcond
            )));
        }

        let displacement: Vec<f64> = v.iter().copied().collect();
        let elongations = sys.elongations(m, &displacement);
        let energy = sys.work(&elongations, &elongations);
        Ok(Correction {
            displacement,
            elongations,
            energy,
        })
    }
}

/// `K = C_perᵀ W C_per`, assembled bar by bar.
fn stiffness_matrix(sys: &ElongationSystem) -> DMatrix<f64> {
    let n = sys.n_dof();
    let mut k = DMatrix::zeros(n, n);
    for (row, &w) in sys.periodic_rows.iter().zip(&sys.weights) {
        if row.i == row.j {
            continue;
        }
        let ends = [(row.j, 1.0), (row.i, -1.0)];
        for &(p, sp) in &ends {
            for &(q, sq) in &ends {
                for a in 0..3 {
                    for b in 0..3 {
                        k[(3 * p + a, 3 * q + b)] += w * sp * sq * row.dir[a] * row.dir[b];
                    }
                }
            }
        }
    }
    k
}

fn gershgorin_bound(k: &DMatrix<f64>) -> f64 {
    k.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Upper bound on `λ_min` from a few steps of inverse iteration.
fn smallest_eigenvalue_bound(chol: &Cholesky<f64, Dyn>, n: usize) -> f64 {
    // fixed irrational-stride start vector keeps the solver deterministic
    let mut x = DVector::from_fn(n, |i, _| 1.0 + (0.618_033_988_75 * (i + 1) as f64).fract());
    x.normalize_mut();
    let mut estimate = f64::INFINITY;
    for _ in 0..INVERSE_ITERATIONS {
        let y = chol.solve(&x);
        let norm = y.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return 0.0;
        }
        estimate = 1.0 / norm;
        x = y / norm;
    }
    estimate
}

fn remove_translations(v: &mut [f64]) {
    let n = v.len() / 3;
    for c in 0..3 {
        let mean = (0..n).map(|k| v[3 * k + c]).sum::<f64>() / n as f64;
        for k in 0..n {
            v[3 * k + c] -= mean;
        }
    }
}

/// Minimizing correction and energy density for a single loading.
pub fn solve_correction(sys: &ElongationSystem, m: &MacroStrain) -> Result<Correction> {
    CorrectionSolver::new(sys)?.solve(m)
}

/// Homogenized stiffness: `mᵀ A m` is the minimum energy per unit area under loading `m`.
#[derive(Clone, Debug)]
pub struct EffectiveTensor {
    pub matrix: Matrix6<f64>,
    /// Largest eigenvalue of the unrelaxed macro stiffness `C_macroᵀ W C_macro / area`,
    /// an upper bound on `A` used to tell a vanishing tensor from round-off.
    pub reference: f64,
    /// Optimal correction for each of the six unit loadings.
    pub corrections: Vec<Correction>,
}

impl EffectiveTensor {
    pub fn energy(&self, m: &MacroStrain) -> f64 {
        let v = nalgebra::Vector6::from(m.to_vector());
        v.dot(&(self.matrix * v))
    }

    /// Macroscopic stress resultants `(Σ, M) = A m`.
    pub fn stress(&self, m: &MacroStrain) -> MacroStrain {
        let v = nalgebra::Vector6::from(m.to_vector());
        let s = self.matrix * v;
        MacroStrain::from_vector(s.into())
    }

    /// Optimal correction for an arbitrary loading, by superposition of the unit solves.
    pub fn correction(&self, m: &MacroStrain) -> Vec<f64> {
        let coeffs = m.to_vector();
        let n = self.corrections[0].displacement.len();
        let mut v = vec![0.0; n];
        for (c, corr) in coeffs.iter().zip(&self.corrections) {
            for (vk, dk) in v.iter_mut().zip(&corr.displacement) {
                *vk += c * dk;
            }
        }
        v
    }

    /// `tr A_EE` in the orthonormal encoding.
    pub fn membrane_trace(&self) -> f64 {
        (0..3).map(|q| self.matrix[(q, q)]).sum()
    }

    pub fn as_rows(&self) -> [[f64; 6]; 6] {
        std::array::from_fn(|p| std::array::from_fn(|q| self.matrix[(p, q)]))
    }
}

/// Solves the six unit loadings and forms `A_pq = ⟨e_p, e_q⟩_W / area`.
pub fn effective_tensor(sys: &ElongationSystem) -> Result<EffectiveTensor> {
    let solver = CorrectionSolver::new(sys)?;
    let corrections = (0..6)
        .map(|q| solver.solve(&MacroStrain::unit(q)))
        .collect::<Result<Vec<_>>>()?;
    let mut matrix = Matrix6::zeros();
    for p in 0..6 {
        for q in p..6 {
            let a = sys.work(&corrections[p].elongations, &corrections[q].elongations);
            matrix[(p, q)] = a;
            matrix[(q, p)] = a;
        }
    }
    let mut unrelaxed = Matrix6::<f64>::zeros();
    for (row, k) in sys.macro_rows.iter().zip(&sys.weights) {
        for p in 0..6 {
            for q in 0..6 {
                unrelaxed[(p, q)] += k * row[p] * row[q] / sys.area;
            }
        }
    }
    let reference = unrelaxed.symmetric_eigenvalues().max();
    Ok(EffectiveTensor {
        matrix,
        reference,
        corrections,
    })
}

/// Both sides of the discrete virtual-work identity for a pair of loadings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HillMandel {
    /// `Σ_b k_b e_b(m1) e_b(m2) / area`, with `m1` at its optimal correction
    /// and `m2` carried by the bare macro field.
    pub cross_work: f64,
    /// `m2ᵀ A m1`.
    pub macro_work: f64,
    pub residual: f64,
}

/// Checks that the equilibrated bar forces of `m1` do the same work on the
/// compatible elongations of `m2` as the macroscopic stress does on `m2`.
///
/// The elongations of `m2` carry no periodic correction: equilibrium of the
/// `m1` forces makes any correction work-free.
pub fn hill_mandel_check(
    sys: &ElongationSystem,
    tensor: &EffectiveTensor,
    m1: &MacroStrain,
    m2: &MacroStrain,
) -> HillMandel {
    let e1 = sys.elongations(m1, &tensor.correction(m1));
    let e2 = sys.macro_elongations(m2);
    let cross_work = sys.work(&e1, &e2);
    let s1 = tensor.stress(m1).to_vector();
    let macro_work: f64 = m2.to_vector().iter().zip(&s1).map(|(a, b)| a * b).sum();
    HillMandel {
        cross_work,
        macro_work,
        residual: cross_work - macro_work,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::cell::{generate_corrugation, generate_flat, generate_random};

    fn rel_frobenius(a: &Matrix6<f64>, b: &Matrix6<f64>) -> f64 {
        (a - b).norm() / a.norm().max(b.norm())
    }

    #[test]
    fn zero_loading_gives_zero_correction() {
        let sys = assemble(&generate_random(3, 3, 0.3, 1).unwrap()).unwrap();
        let c = solve_correction(&sys, &MacroStrain::default()).unwrap();
        assert!(c.displacement.iter().all(|&x| x == 0.0));
        assert_eq!(c.energy, 0.0);
    }

    #[test]
    fn flat_cell_blocks() {
        let sys = assemble(&generate_flat(3, 3).unwrap()).unwrap();
        let solver = CorrectionSolver::new(&sys).unwrap();
        assert!(solver.is_singular());
        let a = effective_tensor(&sys).unwrap().matrix;
        let scale = a.norm();
        for p in 0..6 {
            for q in 3..6 {
                assert!(a[(p, q)].abs() <= 1e-12 * scale);
            }
        }
        let membrane = a.fixed_view::<3, 3>(0, 0).into_owned();
        let eig = SymmetricEigen::new(membrane);
        assert!(eig.eigenvalues.min() > 1e-3 * scale);
        let bend = MacroStrain::new([0.0; 3], [0.4, -1.2, 0.7]);
        assert!(solve_correction(&sys, &bend).unwrap().energy.abs() < 1e-28);
    }

    #[test]
    fn random_cell_uses_cholesky() {
        let sys = assemble(&generate_random(4, 4, 0.3, 2).unwrap()).unwrap();
        let solver = CorrectionSolver::new(&sys).unwrap();
        assert!(!solver.is_singular(), "rcond {}", solver.rcond);
    }

    #[test]
    fn pseudoinverse_and_cholesky_agree() {
        let sys = assemble(&generate_random(3, 4, 0.3, 6).unwrap()).unwrap();
        let chol = CorrectionSolver::new(&sys).unwrap();
        let eig = SymmetricEigen::new(stiffness_matrix(&sys));
        let top = eig.eigenvalues.amax();
        let pinv = CorrectionSolver {
            sys: &sys,
            factor: Factor::Pseudo {
                inv_values: eig
                    .eigenvalues
                    .map(|l| if l > PINV_CUTOFF * top { 1.0 / l } else { 0.0 }),
                vectors: eig.eigenvectors,
            },
            rcond: 0.0,
        };
        let m = MacroStrain::from_vector([0.2, -0.5, 0.3, 0.1, 0.6, -0.2]);
        let (a, b) = (chol.solve(&m).unwrap(), pinv.solve(&m).unwrap());
        assert!((a.energy - b.energy).abs() <= 1e-12 * a.energy);
        for (x, y) in a.displacement.iter().zip(&b.displacement) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn correction_is_stationary() {
        let sys = assemble(&generate_corrugation(4, 2, 0.2).unwrap()).unwrap();
        let m = MacroStrain::from_vector([1.0, 0.3, -0.2, 0.5, 0.0, 0.4]);
        let c = solve_correction(&sys, &m).unwrap();
        // perturbing the optimum cannot lower the energy
        for k in 0..sys.n_dof() {
            for s in [-1e-4, 1e-4] {
                let mut v = c.displacement.clone();
                v[k] += s;
                assert!(sys.energy(&m, &v) >= c.energy - 1e-14);
            }
        }
    }

    #[test]
    fn quadratic_form_matches_solved_energy() {
        let sys = assemble(&generate_random(4, 4, 0.3, 12).unwrap()).unwrap();
        let tensor = effective_tensor(&sys).unwrap();
        let solver = CorrectionSolver::new(&sys).unwrap();
        for s in 0..20u32 {
            let v: [f64; 6] = std::array::from_fn(|q| ((s * 6 + q as u32) as f64 * 1.7).sin());
            let m = MacroStrain::from_vector(v);
            let direct = solver.solve(&m).unwrap().energy;
            let quad = tensor.energy(&m);
            assert!((direct - quad).abs() <= 1e-10 * direct.abs().max(1e-300));
        }
    }

    #[test]
    fn hill_mandel_residual_is_small() {
        let sys = assemble(&generate_random(4, 4, 0.3, 21).unwrap()).unwrap();
        let tensor = effective_tensor(&sys).unwrap();
        let norm_a = tensor.matrix.norm();
        for p in 0..6 {
            for q in 0..6 {
                let (m1, m2) = (MacroStrain::unit(p), MacroStrain::unit(q));
                let hm = hill_mandel_check(&sys, &tensor, &m1, &m2);
                assert!(hm.residual.abs() <= 1e-10 * norm_a, "{p},{q}: {hm:?}");
            }
        }
    }

    #[test]
    fn stiffness_scaling_scales_tensor() {
        let cell = generate_random(3, 3, 0.3, 4).unwrap();
        let mut scaled = cell.clone();
        for bar in &mut scaled.bars {
            bar.stiffness *= 3.5;
        }
        let a = effective_tensor(&assemble(&cell).unwrap()).unwrap().matrix;
        let b = effective_tensor(&assemble(&scaled).unwrap())
            .unwrap()
            .matrix;
        assert!(rel_frobenius(&(a * 3.5), &b) < 1e-12);
    }
}
