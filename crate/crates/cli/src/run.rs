//! Command dispatch.

use rand::Rng;
use serde::Serialize;

use mvhom_core::bv_rep::{build_bv, evaluate_fhom, verify_tangency, ClosedFormDensities, FhomBreakdown, HomDensities, SolverDensities, TangencyReport};
use mvhom_core::cell_solver::{rank_one_convexity_probe, tf_hom, tf_hom_recession, ConvexityReport, DensityEstimate};
use mvhom_core::gamma_lab::{averaged_projection, recovery_diagnostic, EpsExperiment, GammaReport};
use mvhom_core::grid::{Grid, GridField};
use mvhom_core::integrand::{certify, HypothesisReport};
use mvhom_core::interface_solver::{
    basis_independence_probe, complete_basis, regularity_probe, theta_hom, BasisReport, RegularityConfig, RegularityReport, ThetaEstimate,
};
use mvhom_core::linalg::Matrix;
use mvhom_core::manifold::ManifoldHandle;
use mvhom_core::rng::SeedStream;
use mvhom_core::Result;

use crate::config::{CommandBlock, DensityChoice, ExperimentConfig, ProbeKind};

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionSummary {
    pub cells: usize,
    pub ratio: f64,
    pub refined_ratio: f64,
    pub relative_change: f64,
    pub max_distance_to_m: f64,
    pub fixed_nodes_kept: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Results {
    Tfhom {
        estimate: DensityEstimate,
        recession: Option<DensityEstimate>,
    },
    Theta {
        estimate: ThetaEstimate,
        #[serde(skip)]
        field: Option<GridField>,
    },
    FhomEval {
        breakdown: FhomBreakdown,
        tangency: TangencyReport,
        total_variation: [f64; 3],
        jump_measure: f64,
    },
    GammaSweep {
        report: GammaReport,
    },
    Certify {
        report: HypothesisReport,
    },
    Probes {
        convexity: Option<ConvexityReport>,
        basis: Option<BasisReport>,
        regularity: Option<RegularityReport>,
        projection: Option<ProjectionSummary>,
    },
}

impl Results {
    /// Whether every solve met its stopping criterion.
    pub fn converged(&self) -> bool {
        match self {
            Results::Tfhom { estimate, recession } => estimate.converged && recession.as_ref().is_none_or(|r| r.converged),
            Results::Theta { estimate, .. } => estimate.estimate.converged,
            Results::GammaSweep { report } => report.all_converged,
            _ => true,
        }
    }
}

fn densities(cfg: &ExperimentConfig, choice: &DensityChoice) -> Box<dyn HomDensities> {
    match choice {
        DensityChoice::Closed {
            bulk_scale,
            surface_scale,
        } => Box::new(ClosedFormDensities {
            manifold: cfg.manifold.clone(),
            bulk_scale: *bulk_scale,
            surface_scale: *surface_scale,
        }),
        DensityChoice::Solver {
            cell,
            interface,
            max_slope,
        } => Box::new(SolverDensities {
            integrand: cfg.integrand.clone(),
            manifold: cfg.manifold.clone(),
            cell: cell.clone(),
            recession_scales: mvhom_core::cell_solver::default_recession_scales(),
            interface: interface.clone(),
            max_slope: *max_slope,
        }),
    }
}

/// Uniform random points on the sphere from one seeded stream.
fn random_points(m: &ManifoldHandle, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = SeedStream::new(seed).rng(0);
    let d = m.ambient_dim();
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
            let r = mvhom_core::linalg::norm(&v);
            if r > 0.1 && r <= 1.0 {
                break m.project(&v).map(|p| p.into_coords());
            }
        })
        .collect()
}

fn dipping_field(cells: usize, dip: f64) -> GridField {
    let g = Grid::cube(2, cells, 1.0 / cells as f64, 0.0, false);
    GridField::from_fn(g, 2, |x| {
        let pi = std::f64::consts::PI;
        let r = 1.0 - dip * (pi * x[0]).sin() * (pi * x[1]).sin();
        let t = 2.0 * x[0] + x[1];
        vec![r * t.cos(), r * t.sin()]
    })
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Results> {
    let f = &cfg.integrand;
    let m = &cfg.manifold;
    match &cfg.block {
        CommandBlock::Tfhom {
            point,
            slope,
            cell,
            recession,
            scales,
        } => {
            let s = m.point(point)?;
            let estimate = tf_hom(f, m, &s, slope, cell)?;
            let recession = if *recession {
                Some(tf_hom_recession(f, m, &s, slope, scales, cell)?)
            } else {
                None
            };
            Ok(Results::Tfhom { estimate, recession })
        }
        CommandBlock::Theta { a, b, nu, interface } => {
            let mut estimate = theta_hom(f, m, &m.point(a)?, &m.point(b)?, nu, interface)?;
            let field = estimate.field.take();
            Ok(Results::Theta { estimate, field })
        }
        CommandBlock::FhomEval {
            recipe,
            densities: choice,
            quadrature,
        } => {
            let u = build_bv(recipe, m)?;
            let tangency = verify_tangency(&u, quadrature);
            let dec = u.decompose(quadrature);
            let breakdown = evaluate_fhom(&u, densities(cfg, choice).as_ref(), quadrature)?;
            Ok(Results::FhomEval {
                breakdown,
                tangency,
                total_variation: dec.total_variation,
                jump_measure: dec.jump_measure,
            })
        }
        CommandBlock::GammaSweep {
            eps,
            nodes_per_period,
            boundary,
            recipe,
            densities: choice,
            perturbation,
            width_exponent,
            tolerances,
        } => {
            let mut exp = EpsExperiment::new(f.clone(), m.clone(), eps.clone(), boundary.clone());
            exp.nodes_per_period = *nodes_per_period;
            exp.optim = cfg.optim.clone();
            exp.seed = cfg.seed;
            exp.perturbation = *perturbation;
            exp.recovery_width_exponent = *width_exponent;
            exp.tolerances = *tolerances;
            let u = build_bv(recipe, m)?;
            let report = recovery_diagnostic(&exp, &u, densities(cfg, choice).as_ref())?;
            Ok(Results::GammaSweep { report })
        }
        CommandBlock::Certify { sampler } => Ok(Results::Certify {
            report: certify(f, sampler),
        }),
        CommandBlock::Probes { probe } => {
            let mut out = Results::Probes {
                convexity: None,
                basis: None,
                regularity: None,
                projection: None,
            };
            let Results::Probes {
                convexity,
                basis,
                regularity,
                projection,
            } = &mut out
            else {
                unreachable!()
            };
            match probe {
                ProbeKind::Convexity {
                    point,
                    slope,
                    direction,
                    nu,
                    lambdas,
                    tol,
                    cell,
                } => {
                    let s = m.point(point)?;
                    let mut a = direction.clone();
                    m.tangent_project_vec(point, &mut a);
                    *convexity = Some(rank_one_convexity_probe(
                        |xi: &Matrix| tf_hom(f, m, &s, xi, cell).map(|e| e.value),
                        slope,
                        &a,
                        nu,
                        lambdas,
                        *tol,
                    )?);
                }
                ProbeKind::Basis { a, b, nu, interface } => {
                    let first = complete_basis(nu)?;
                    let mut second = first.clone();
                    for v in second.iter_mut().skip(1) {
                        v.iter_mut().for_each(|c| *c = -*c);
                    }
                    *basis = Some(basis_independence_probe(f, m, &m.point(a)?, &m.point(b)?, &[first, second], interface)?);
                }
                ProbeKind::Regularity {
                    pairs,
                    nu,
                    interface,
                    refine,
                    max_lipschitz,
                    max_ratio,
                    refinement_tol,
                } => {
                    let pts = random_points(m, 2 * pairs, cfg.seed)?;
                    let pairs = pts
                        .chunks(2)
                        .map(|c| Ok((m.point(&c[0])?, m.point(&c[1])?)))
                        .collect::<Result<Vec<_>>>()?;
                    let rc = RegularityConfig {
                        interface: interface.clone(),
                        refine: *refine,
                        max_lipschitz: *max_lipschitz,
                        max_ratio: *max_ratio,
                        refinement_tol: *refinement_tol,
                    };
                    *regularity = Some(regularity_probe(f, m, &pairs, nu, &rc)?);
                }
                ProbeKind::Projection {
                    cells,
                    dip,
                    projection: pc,
                } => {
                    let v = dipping_field(*cells, *dip);
                    let r = averaged_projection(&v, m, pc)?;
                    let fine = averaged_projection(&dipping_field(2 * cells, *dip), m, pc)?;
                    let nodes = v.grid().num_nodes();
                    let max_distance_to_m = (0..nodes).map(|i| m.distance_to(r.field.node(i))).fold(0.0, f64::max);
                    let fixed_nodes_kept =
                        (0..nodes).all(|i| m.distance_to(v.node(i)) > 1e-10 || r.field.node(i) == v.node(i));
                    *projection = Some(ProjectionSummary {
                        cells: *cells,
                        ratio: r.ratio,
                        refined_ratio: fine.ratio,
                        relative_change: (fine.ratio - r.ratio).abs() / r.ratio,
                        max_distance_to_m,
                        fixed_nodes_kept,
                    });
                }
            }
            Ok(out)
        }
    }
}
