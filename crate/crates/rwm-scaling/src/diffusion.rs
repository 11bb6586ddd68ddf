//! The limiting one-dimensional Langevin diffusion: speed measure, limiting
//! acceptance curve, numeric optimizer of the speed, and an Euler-Maruyama
//! integrator used as the weak-limit reference in experiments.

use crate::special::normal_cdf;
use crate::target::DensityFamily;
use rand::Rng;
use rand_distr::StandardNormal;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DiffusionError {
    #[error("step guard violated: need dt * speed <= 0.1 (got dt = {dt}, speed = {speed})")]
    StepGuard { dt: f64, speed: f64 },
    #[error("drift overflow: state became non-finite at step {step}")]
    NonFiniteState { step: usize },
}

/// Speed measure of the limiting diffusion: `v(ell) = 2 ell^2 Phi(-ell sqrt(e_r)/2)`.
pub fn speed(ell: f64, e_r: f64) -> f64 {
    2.0 * ell * ell * normal_cdf(-ell * e_r.sqrt() / 2.0)
}

/// Limiting acceptance rate: `a(ell) = 2 Phi(-ell sqrt(e_r)/2)`.
pub fn limiting_acceptance(ell: f64, e_r: f64) -> f64 {
    2.0 * normal_cdf(-ell * e_r.sqrt() / 2.0)
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`,
/// run until the bracket is narrower than `tol`. Returns `(x_max, f_max)`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Maximizer of the unit-roughness speed `g(u) = 2 u^2 Phi(-u/2)`, computed
/// once to 1e-10 and cached. Returns `(u_hat, g(u_hat))`.
///
/// The rounded anchors 2.38 and 0.234 are asserted against the computed
/// value rather than hard-coded into any result.
pub fn unit_speed_maximizer() -> (f64, f64) {
    static U_HAT: OnceLock<(f64, f64)> = OnceLock::new();
    *U_HAT.get_or_init(|| {
        let (u, g) = golden_section_max(|u| speed(u, 1.0), 0.0, 10.0, 1e-10);
        assert!(
            (u - 2.38).abs() < 0.01,
            "unit speed maximizer {u} disagrees with the 2.38 anchor"
        );
        let a = limiting_acceptance(u, 1.0);
        assert!(
            (a - 0.234).abs() < 0.001,
            "acceptance at the maximizer {a} disagrees with the 0.234 anchor"
        );
        (u, g)
    })
}

/// Maximizes the speed measure over `ell` for a given roughness constant.
/// Returns `(ell_star, v_star)`.
pub fn maximize_speed(e_r: f64) -> (f64, f64) {
    assert!(e_r > 0.0 && e_r.is_finite(), "roughness must be positive");
    let scale = e_r.sqrt();
    let (ell, v) = golden_section_max(|l| speed(l, e_r), 0.0, 10.0 / scale, 1e-10);
    debug_assert!((ell - 2.38 / scale).abs() < 0.01 / scale.min(1.0));
    (ell, v)
}

/// Parameters of the limiting diffusion: speed, the stationary density
/// family (drift `0.5 * v * (log f)'`), and the integrator step.
#[derive(Debug, Clone)]
pub struct DiffusionParams {
    pub speed: f64,
    pub family: DensityFamily,
    pub dt: f64,
}

/// Euler-Maruyama integration of the limiting diffusion from `z0`.
///
/// `z_{k+1} = z_k + 0.5 v (log f)'(z_k) dt + sqrt(v dt) N(0,1)`, one state per
/// step plus the initial state. Deterministic given the generator state.
pub fn euler_maruyama<R: Rng + ?Sized>(
    p: &DiffusionParams,
    z0: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>, DiffusionError> {
    if !(p.dt > 0.0) || p.dt * p.speed > 0.1 {
        return Err(DiffusionError::StepGuard {
            dt: p.dt,
            speed: p.speed,
        });
    }
    let noise_scale = (p.speed * p.dt).sqrt();
    let mut traj = Vec::with_capacity(n_steps + 1);
    let mut z = z0;
    traj.push(z);
    for step in 0..n_steps {
        let z_noise: f64 = rng.sample(StandardNormal);
        z += 0.5 * p.speed * p.family.dlog_f(z) * p.dt + noise_scale * z_noise;
        if !z.is_finite() {
            return Err(DiffusionError::NonFiniteState { step });
        }
        traj.push(z);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn speed_and_acceptance_at_zero() {
        assert_relative_eq!(speed(0.0, 1.0), 0.0);
        assert_relative_eq!(limiting_acceptance(0.0, 1.0), 1.0);
    }

    #[test]
    fn acceptance_at_published_optimum() {
        // 2 Phi(-1.19) = 0.23404..., which rounds to the published 0.234
        let a = limiting_acceptance(2.38, 1.0);
        assert_relative_eq!(a, 0.234, epsilon = 5e-4);
        let v = speed(2.38, 1.0);
        assert_relative_eq!(v, 1.326, epsilon = 5e-3);
    }

    #[test]
    fn speed_scaling_substitution() {
        for (ell, e_r) in [(1.0, 4.0), (0.7, 0.25), (3.0, 2.0)] {
            assert_relative_eq!(
                speed(ell, e_r),
                speed(ell * e_r.sqrt(), 1.0) / e_r,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn unit_maximizer_brackets_published_constants() {
        let (u, v) = unit_speed_maximizer();
        assert!((2.37..=2.39).contains(&u), "u_hat = {u}");
        let a = limiting_acceptance(u, 1.0);
        assert!((0.233..=0.235).contains(&a), "aoar = {a}");
        assert_relative_eq!(v, 1.33, epsilon = 0.01);
        // first-order optimality: 4 Phi(-u/2) = u phi(u/2)
        let lhs = 4.0 * normal_cdf(-u / 2.0);
        let rhs = u * crate::special::normal_pdf(u / 2.0);
        assert!((lhs - rhs).abs() < 1e-8, "stationarity residual {}", lhs - rhs);
    }

    #[test]
    fn maximize_speed_scaling_law() {
        let (l1, v1) = maximize_speed(1.0);
        let (l100, v100) = maximize_speed(100.0);
        assert_relative_eq!(l100, l1 / 10.0, epsilon = 1e-6);
        assert_relative_eq!(v100, v1 / 100.0, epsilon = 1e-6);
        assert!((2.37..=2.39).contains(&l1));
    }

    #[test]
    fn speed_curve_shape_on_grid() {
        // a(ell) strictly decreasing; v vanishes at both ends with a unique
        // interior maximum
        let e_r = 1.0;
        let grid: Vec<f64> = (0..=120).map(|i| i as f64 * 0.1).collect();
        for w in grid.windows(2) {
            assert!(limiting_acceptance(w[1], e_r) < limiting_acceptance(w[0], e_r));
        }
        let v: Vec<f64> = grid.iter().map(|&l| speed(l, e_r)).collect();
        assert_relative_eq!(v[0], 0.0);
        assert!(v[v.len() - 1] < 1e-3);
        let peak = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        for w in v[..=peak].windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in v[peak..].windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn aoar_independent_of_roughness() {
        let mut e_r = 1e-2;
        while e_r <= 1e2 {
            let (ell, _) = maximize_speed(e_r);
            let a = limiting_acceptance(ell, e_r);
            assert!((0.233..=0.235).contains(&a), "e_r = {e_r}: aoar = {a}");
            e_r *= 10.0;
        }
    }

    #[test]
    fn em_zero_speed_is_constant() {
        let p = DiffusionParams {
            speed: 0.0,
            family: DensityFamily::standard_normal(),
            dt: 0.01,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let traj = euler_maruyama(&p, 1.25, 100, &mut rng).unwrap();
        assert!(traj.iter().all(|&z| z == 1.25));
    }

    #[test]
    fn em_rejects_coarse_steps() {
        let p = DiffusionParams {
            speed: 2.0,
            family: DensityFamily::standard_normal(),
            dt: 0.2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            euler_maruyama(&p, 0.0, 10, &mut rng),
            Err(DiffusionError::StepGuard { .. })
        ));
    }

    #[test]
    fn em_normal_family_matches_ou_stationary_law() {
        // for the normal family the limit is an OU process with mean 0 and
        // unit stationary variance
        let p = DiffusionParams {
            speed: 1.3,
            family: DensityFamily::standard_normal(),
            dt: 0.01,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let traj = euler_maruyama(&p, 0.0, n, &mut rng).unwrap();
        let mean = traj.iter().sum::<f64>() / traj.len() as f64;
        let var = traj.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / traj.len() as f64;
        // effective sample size ~ n dt (v/2); 4 standard errors
        let ess = n as f64 * p.dt * p.speed / 2.0;
        let se_mean = (1.0 / ess).sqrt();
        let se_var = (2.0 / ess).sqrt();
        assert!(mean.abs() < 4.0 * se_mean, "mean {mean} vs se {se_mean}");
        assert!((var - 1.0).abs() < 4.0 * se_var, "var {var} vs se {se_var}");
    }

    #[test]
    fn em_normal_family_autocorrelation_decays_at_half_speed() {
        let p = DiffusionParams {
            speed: 1.0,
            family: DensityFamily::standard_normal(),
            dt: 0.01,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let traj = euler_maruyama(&p, 0.0, 2_000_000, &mut rng).unwrap();
        let mean = traj.iter().sum::<f64>() / traj.len() as f64;
        let var = traj.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / traj.len() as f64;
        for tau in [0.5, 1.0, 2.0] {
            let lag = (tau / p.dt).round() as usize;
            let mut cov = 0.0;
            for i in 0..traj.len() - lag {
                cov += (traj[i] - mean) * (traj[i + lag] - mean);
            }
            cov /= (traj.len() - lag) as f64;
            let acf = cov / var;
            let expected = (-p.speed * tau / 2.0).exp();
            assert!(
                (acf - expected).abs() < 0.02,
                "tau {tau}: acf {acf} vs {expected}"
            );
        }
    }

    #[test]
    fn em_halving_dt_is_within_mc_error() {
        let run = |dt: f64, seed: u64| {
            let p = DiffusionParams {
                speed: 1.3,
                family: DensityFamily::logistic(),
                dt,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let traj = euler_maruyama(&p, 0.0, (400.0 / dt) as usize, &mut rng).unwrap();
            traj.iter().map(|z| z * z).sum::<f64>() / traj.len() as f64
        };
        let coarse = run(0.02, 3);
        let fine = run(0.01, 4);
        // logistic variance is pi^2/3; MC error at ~260 effective samples
        let target = std::f64::consts::PI.powi(2) / 3.0;
        let se = target * (2.0f64 / 260.0).sqrt();
        assert!((coarse - fine).abs() < 3.0 * se, "coarse {coarse} fine {fine}");
    }
}
