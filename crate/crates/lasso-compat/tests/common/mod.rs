//! Shared generators for randomized family sweeps.

use lasso_compat::gram::{DesignSpec, GoodCompBlock};
use lasso_compat::oracle::closed_form;
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha12Rng};

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn rho(rng: &mut ChaCha12Rng) -> f64 {
    rng.gen_range(0.05..0.95f64)
}

/// A `C` admissible for a pair with the given `varphi2`: strictly above 1,
/// strictly below the normalization cap.
fn parent_c(rng: &mut ChaCha12Rng, varphi2: f64) -> f64 {
    let cap = (2.0 / varphi2).sqrt();
    let hi = cap.min(4.0);
    rng.gen_range(1.0 + 0.02 * (hi - 1.0)..1.0 + 0.9 * (hi - 1.0))
}

/// Draws admissible parameters for every non-custom family.
pub fn random_spec(rng: &mut ChaCha12Rng, family: usize) -> DesignSpec {
    match family {
        0 => DesignSpec::TwoVar { rho: rho(rng) },
        1 => {
            let n = rng.gen_range(1..=3);
            DesignSpec::PairBlocks {
                rhos: (0..n).map(|_| rho(rng)).collect(),
            }
        }
        2 => DesignSpec::PairBlocksPlusOrthogonal {
            rho: rho(rng),
            m0: rng.gen_range(1..=3),
        },
        3 => {
            let r = rho(rng);
            DesignSpec::ParentChildSingle {
                rho: r,
                c: parent_c(rng, 1.0 - r),
            }
        }
        4 => {
            let r = rho(rng);
            let m = rng.gen_range(1..=3);
            DesignSpec::ParentChildMany {
                rho: r,
                cs: (0..m).map(|_| parent_c(rng, 1.0 - r)).collect(),
            }
        }
        5 => {
            let n = rng.gen_range(1..=2);
            let rhos: Vec<f64> = (0..n).map(|_| rho(rng)).collect();
            let s0 = 2.0 * n as f64;
            let shrink: f64 = rhos.iter().map(|r| 2.0 * (1.0 - r) / (s0 * s0)).sum();
            let cap = (1.0 / shrink).sqrt();
            let hi = cap.min(4.0);
            let c = rng.gen_range(1.0 + 0.02 * (hi - 1.0)..1.0 + 0.9 * (hi - 1.0));
            DesignSpec::ParentChildBlock2N { rhos, c }
        }
        6 => {
            let r = rho(rng);
            let c = parent_c(rng, 1.0 - r);
            let cap = 1.0 - c * c * (1.0 - r) / 2.0;
            DesignSpec::GoodComp {
                rho: r,
                c,
                tau2: rng.gen_range(0.1 * cap..0.9 * cap),
            }
        }
        7 => {
            let r = rho(rng);
            DesignSpec::GoodLasso2 {
                rho: r,
                c: parent_c(rng, 1.0 - r),
            }
        }
        8 => DesignSpec::GoodLasso3 { rho: rho(rng) },
        9 => {
            let n = rng.gen_range(1..=2);
            let blocks = (0..n)
                .map(|_| {
                    let r = rho(rng);
                    let c = parent_c(rng, 1.0 - r);
                    let cap = 1.0 - c * c * (1.0 - r) / 2.0;
                    GoodCompBlock {
                        rho: r,
                        c,
                        tau2: rng.gen_range(0.1 * cap..0.9 * cap),
                    }
                })
                .collect();
            DesignSpec::BlockGoodComp2N { blocks }
        }
        10 => {
            // Derived rho must land in (0,1): keep gamma3 near 1/2 and theta high.
            loop {
                let theta = rng.gen_range(0.05..0.95f64);
                let gamma3 = rng.gen_range(0.51..0.95f64);
                let r = -1.0 + 4.0 * gamma3 * (1.0 - gamma3) * (1.0 + theta);
                if r > 0.01 && r < 0.99 {
                    return DesignSpec::ChildParentGamma { theta, gamma3 };
                }
            }
        }
        11 => loop {
            let theta = rng.gen_range(0.05..0.95f64);
            let psi2 = 1.0 - theta;
            let hi = (1.0 / psi2).sqrt();
            if hi <= 1.02 {
                continue;
            }
            let c = rng.gen_range(1.0 + 0.02 * (hi - 1.0)..1.0 + 0.9 * (hi - 1.0));
            let r = 1.0 - c * c * psi2;
            if r > 0.01 && r < 0.99 {
                return DesignSpec::ChildParentSym { theta, c };
            }
        },
        _ => loop {
            let m0 = rng.gen_range(2..=5);
            let raw: Vec<f64> = (0..m0).map(|_| rng.gen_range(0.2..1.0f64)).collect();
            let sum: f64 = raw.iter().sum();
            let gammas: Vec<f64> = raw.iter().map(|g| g / sum).collect();
            let l2sq: f64 = gammas.iter().map(|g| g * g).sum();
            let linf = gammas.iter().cloned().fold(0.0, f64::max);
            let lo = (linf / l2sq).max(1.0 + 1e-6);
            let hi = (1.0 / (2.0 * l2sq)).sqrt() * 0.98;
            if hi <= lo * 1.01 {
                continue;
            }
            let c = rng.gen_range(lo * 1.005..hi);
            return DesignSpec::ChildParentOrthoInactive { c, gammas };
        },
    }
}

pub const FAMILY_COUNT: usize = 13;

/// A `(beta0, lambda)` pair inside the family's closed-form regime: draws a
/// candidate and rescales the active coefficients until the closed form
/// reports applicable.
pub fn applicable_instance(rng: &mut ChaCha12Rng, spec: &DesignSpec) -> (DVector<f64>, f64) {
    let p = spec.p();
    let active = spec.conventional_active_set().expect("non-custom");
    let lambda = rng.gen_range(0.01..0.2f64);
    let mut beta0 = DVector::zeros(p);
    // Descending positive values per paired slot keep the ordering valid.
    for pair in active.chunks(2) {
        let b2 = rng.gen_range(0.2..1.0f64);
        let b1 = b2 + rng.gen_range(0.0..1.0f64);
        beta0[pair[0]] = b1;
        if pair.len() > 1 {
            beta0[pair[1]] = b2;
        }
    }
    for _ in 0..40 {
        let sol = closed_form(spec, &beta0, lambda).expect("family has a closed form");
        if sol.applicable {
            return (beta0, lambda);
        }
        for &j in &active {
            beta0[j] *= 1.5;
        }
    }
    panic!("could not reach the applicable regime for {spec:?}");
}

/// An arbitrary (not necessarily closed-form-applicable) instance for
/// solver/bounds sweeps: random support, signs, and magnitudes.
pub fn arbitrary_instance(rng: &mut ChaCha12Rng, p: usize) -> (DVector<f64>, f64) {
    let lambda = rng.gen_range(0.0..0.3f64);
    let beta0 = DVector::from_fn(p, |_, _| {
        if rng.gen_bool(0.3) {
            0.0
        } else {
            rng.gen_range(-1.0..1.0f64)
        }
    });
    (beta0, lambda)
}
