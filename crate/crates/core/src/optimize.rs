//! Minimization of the membrane stiffness trace over nodal elevations.
//!
//! The objective is `tr A_EE`, the sum of the optimal energies of the three
//! unit membrane loadings. Its elevation gradient follows from the envelope
//! theorem: at the optimal corrections the energy is stationary in `v`, so
//! only the explicit dependence of `Σ_b k_b e_b²` on the geometry matters.
//! Moving `z` changes each bar direction `t̂_b`, each stiffness
//! `k_b = (k_b L_b) / L_b` (axial rigidity held fixed), and, for bending
//! loadings, the macro field `z χ x` itself.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, macro_displacement, ElongationSystem, MacroStrain};
use crate::cell::UnitCell;
use crate::effective::{Correction, CorrectionSolver};
use crate::error::{Error, Result};

/// Sufficient-decrease constant of the Armijo test.
pub const ARMIJO: f64 = 1e-4;
/// Step halvings before a line search gives up.
pub const MAX_HALVINGS: usize = 60;
/// Projected gradient norm, relative to `objective / cell size`, treated as zero.
pub const STATIONARY_TOL: f64 = 1e-12;

/// `tr A_EE` of the cell.
pub fn objective(cell: &UnitCell) -> Result<f64> {
    Ok(evaluate(cell)?.0)
}

/// Exact elevation gradient of [`objective`], one entry per node.
pub fn gradient(cell: &UnitCell) -> Result<Vec<f64>> {
    Ok(evaluate(cell)?.1)
}

/// Objective and gradient from a single set of solves.
pub fn evaluate(cell: &UnitCell) -> Result<(f64, Vec<f64>)> {
    let sys = assemble(cell)?;
    let solver = CorrectionSolver::new(&sys)?;
    let mut value = 0.0;
    let mut grad = vec![0.0; cell.nodes.len()];
    for q in 0..3 {
        let m = MacroStrain::unit(q);
        let corr = solver.solve(&m)?;
        value += corr.energy;
        for (g, d) in grad.iter_mut().zip(energy_gradient(cell, &sys, &m, &corr)) {
            *g += d;
        }
    }
    Ok((value, grad))
}

/// Derivative of the optimal energy of loading `m` with respect to each elevation.
pub fn energy_gradient(
    cell: &UnitCell,
    sys: &ElongationSystem,
    m: &MacroStrain,
    corr: &Correction,
) -> Vec<f64> {
    let chi = m.bending();
    let v = &corr.displacement;
    let mut grad = vec![0.0; cell.nodes.len()];
    for (b, bar) in cell.bars.iter().enumerate() {
        let t = sys.periodic_rows[b].dir;
        let k = sys.weights[b] / sys.area;
        let e = corr.elongations[b];
        let length = cell.bar_length(b);
        let pi = cell.position(bar.i);
        let pj = cell.site_position(bar.j, bar.shift);

        // vertical relative displacement of the two ends
        let wi = macro_displacement(pi, m)[2] + v[3 * bar.i + 2];
        let wj = macro_displacement(pj, m)[2] + v[3 * bar.j + 2];
        let dw = wj - wi;

        // d(k e²)/dΔz through t̂ and k = EA / L
        let geometric = k * e * (2.0 * dw - 3.0 * e * t[2]) / length;
        grad[bar.j] += geometric;
        grad[bar.i] -= geometric;

        // the in-plane macro displacement moves with z as χ x
        let pull = |p: [f64; 3]| {
            t[0] * (chi[0][0] * p[0] + chi[0][1] * p[1])
                + t[1] * (chi[1][0] * p[0] + chi[1][1] * p[1])
        };
        grad[bar.j] += 2.0 * k * e * pull(pj);
        grad[bar.i] -= 2.0 * k * e * pull(pi);
    }
    grad
}

/// Initial trial step of each line search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepRule {
    /// Start from the last accepted step times `growth`.
    Adaptive { initial: f64, growth: f64 },
    /// Start from the Barzilai–Borwein step `sᵀs / sᵀy` of the last move.
    BarzilaiBorwein { initial: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::BarzilaiBorwein { initial: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub iters: usize,
    pub step: StepRule,
    /// Box bound `|z − z₀| ≤ r` on every elevation.
    pub bound: Option<f64>,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            iters: 1000,
            step: StepRule::default(),
            bound: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub max_dz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Iterations,
    /// Projected gradient vanished.
    Stationary,
    /// No acceptable step after [`MAX_HALVINGS`] halvings.
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub iterates: Vec<Iterate>,
    pub initial: UnitCell,
    pub final_cell: UnitCell,
    pub seed: u64,
    pub termination: Termination,
}

impl OptimizationTrace {
    pub fn stalled(&self) -> bool {
        self.termination == Termination::Stalled
    }

    /// Initial over final objective.
    pub fn reduction(&self) -> f64 {
        let first = self.iterates.first().map_or(f64::NAN, |i| i.objective);
        let last = self.iterates.last().map_or(f64::NAN, |i| i.objective);
        first / last
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "iter,objective,grad_norm,step,max_dz")?;
        for it in &self.iterates {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e}",
                it.iter, it.objective, it.grad_norm, it.step, it.max_dz
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Gradient descent on elevations with a projected Armijo backtracking search.
///
/// Planar positions and connectivity are frozen. A trial point is rejected
/// (and the step halved) if it makes any bar shorter than the lattice
/// minimum or if the objective cannot be evaluated there.
pub fn minimize(cell: &UnitCell, opts: &MinimizeOptions) -> Result<(UnitCell, OptimizationTrace)> {
    if opts.iters == 0 {
        return Err(Error::InvalidParameter("iters must be at least 1".into()));
    }
    if let Some(r) = opts.bound {
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bound must be non-negative, got {r}"
            )));
        }
    }
    let z0 = cell.elevations();
    let eps = cell.lattice.min_bar_length();
    let project = |z: &mut [f64]| {
        if let Some(r) = opts.bound {
            for (zk, z0k) in z.iter_mut().zip(&z0) {
                *zk = zk.clamp(z0k - r, z0k + r);
            }
        }
    };
    let projected_gradient = |z: &[f64], g: &[f64]| -> Vec<f64> {
        let mut p: Vec<f64> = z.iter().zip(g).map(|(a, b)| a - b).collect();
        project(&mut p);
        z.iter().zip(&p).map(|(a, b)| a - b).collect()
    };
    let size = cell.lattice.size();
    let max_dz = |z: &[f64]| {
        z.iter()
            .zip(&z0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };

    let mut current = cell.clone();
    let mut z = z0.clone();
    let (mut f, mut g) = evaluate(&current)?;
    let mut iterates = vec![Iterate {
        iter: 0,
        objective: f,
        grad_norm: norm(&g),
        step: 0.0,
        max_dz: 0.0,
    }];
    let (mut trial_step, growth) = match opts.step {
        StepRule::Adaptive { initial, growth } => (initial, growth),
        StepRule::BarzilaiBorwein { initial } => (initial, 2.0),
    };
    let mut termination = Termination::Iterations;

    for iter in 1..=opts.iters {
        if norm(&projected_gradient(&z, &g)) <= STATIONARY_TOL * f / size {
            termination = Termination::Stationary;
            break;
        }
        let mut step = trial_step;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial: Vec<f64> = z.iter().zip(&g).map(|(zk, gk)| zk - step * gk).collect();
            project(&mut trial);
            let decrease: f64 = g
                .iter()
                .zip(z.iter().zip(&trial))
                .map(|(gk, (a, b))| gk * (a - b))
                .sum();
            if decrease <= 0.0 {
                break;
            }
            let candidate = current.with_elevations(&trial);
            if candidate.min_bar_length() > eps {
                if let Ok((ft, gt)) = evaluate(&candidate) {
                    if ft.is_finite() && ft <= f - ARMIJO * decrease {
                        accepted = Some((candidate, trial, ft, gt));
                        break;
                    }
                }
            }
            step *= 0.5;
        }

        let Some((candidate, trial, ft, gt)) = accepted else {
            termination = Termination::Stalled;
            break;
        };

        let s: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        trial_step = match opts.step {
            StepRule::Adaptive { .. } => step * growth,
            StepRule::BarzilaiBorwein { .. } => {
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                let ss: f64 = s.iter().map(|a| a * a).sum();
                if sy > 0.0 {
                    ss / sy
                } else {
                    step * growth
                }
            }
        };

        current = candidate;
        z = trial;
        f = ft;
        g = gt;
        iterates.push(Iterate {
            iter,
            objective: f,
            grad_norm: norm(&g),
            step,
            max_dz: max_dz(&z),
        });
    }

    let trace = OptimizationTrace {
        iterates,
        initial: cell.clone(),
        final_cell: current.clone(),
        seed: opts.seed,
        termination,
    };
    Ok((current, trace))
}
