//! Stationary coefficient fields evaluated from the local configuration.
//!
//! Every shipped kind is a scalar multiple of the identity; the evaluation
//! API returns full symmetric matrices so tests can inject anisotropic ones.
//! Evaluation depends on the query point only through its offsets to nearby
//! cluster centers, which is what makes the field stationary under shifts.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterDecomposition;
use crate::error::{Error, Result};
use crate::linalg::{scalar_matrix, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    /// a(ω) = ½ I; the associated diffusion is reflecting Brownian motion.
    ConstantHalfIdentity,
    /// α₁ I where at least two balls overlap, α₂ I elsewhere.
    TwoPhaseByCoverage { alpha1: f64, alpha2: f64 },
    /// ½ I + β φ(dist to nearest center / support) I with a smooth bump φ.
    SmoothBump { beta: f64, support: f64 },
}

impl FieldSpec {
    pub fn validate(&self, rho_prime: f64) -> Result<()> {
        match *self {
            FieldSpec::ConstantHalfIdentity => Ok(()),
            FieldSpec::TwoPhaseByCoverage { alpha1, alpha2 } => {
                if alpha1 > 0.0 && alpha2 > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("two-phase coefficients must be positive"))
                }
            }
            FieldSpec::SmoothBump { beta, support } => {
                if beta <= -0.5 {
                    return Err(Error::invalid("bump amplitude must exceed -1/2"));
                }
                if !(support > 0.0 && support <= rho_prime) {
                    return Err(Error::invalid(format!(
                        "bump support must lie in (0, rho_prime]; got {support}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Uniform ellipticity bounds (λ, Λ).
    pub fn ellipticity(&self) -> (f64, f64) {
        match *self {
            FieldSpec::ConstantHalfIdentity => (0.5, 0.5),
            FieldSpec::TwoPhaseByCoverage { alpha1, alpha2 } => {
                (alpha1.min(alpha2), alpha1.max(alpha2))
            }
            FieldSpec::SmoothBump { beta, .. } => (0.5 + beta.min(0.0), 0.5 + beta.max(0.0)),
        }
    }

    /// True when the matrix is a constant c·I; the reflected Euler scheme
    /// only supports that case.
    pub fn constant_scalar(&self) -> Option<f64> {
        match *self {
            FieldSpec::ConstantHalfIdentity => Some(0.5),
            FieldSpec::TwoPhaseByCoverage { alpha1, alpha2 } if alpha1 == alpha2 => Some(alpha1),
            _ => None,
        }
    }

    pub fn scalar_at<const D: usize>(&self, decomp: &ClusterDecomposition<D>, x: Vector<D>) -> f64 {
        match *self {
            FieldSpec::ConstantHalfIdentity => 0.5,
            FieldSpec::TwoPhaseByCoverage { alpha1, alpha2 } => {
                if decomp.covering_count(x) >= 2 {
                    alpha1
                } else {
                    alpha2
                }
            }
            FieldSpec::SmoothBump { beta, support } => {
                let d = match decomp.nearest_ball(x) {
                    Some((_, d)) => d,
                    None => return 0.5,
                };
                0.5 + beta * bump(d / support)
            }
        }
    }

    pub fn evaluate<const D: usize>(
        &self,
        decomp: &ClusterDecomposition<D>,
        x: Vector<D>,
    ) -> Matrix<D> {
        scalar_matrix(self.scalar_at(decomp, x))
    }
}

/// Smooth compactly supported bump, φ(0) = 1, φ ≡ 0 for |u| ≥ 1.
fn bump(u: f64) -> f64 {
    let u2 = u * u;
    if u2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u2)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_clusters, RadiusPair};
    use crate::config::{shift, Configuration, RngStream, SimBox};
    use crate::linalg::{add, quad_form};
    use rand::Rng;

    fn snap(x: f64) -> f64 {
        (x * 1048576.0).round() / 1048576.0
    }

    fn decomp2() -> ClusterDecomposition<2> {
        let b = SimBox::<2>::unit(16.0);
        let mut rng = RngStream::new(5, 0).rng();
        let pts: Vec<[f64; 2]> = (0..120)
            .map(|_| {
                [
                    snap(rng.random::<f64>() * 16.0),
                    snap(rng.random::<f64>() * 16.0),
                ]
            })
            .collect();
        let c = Configuration::explicit(b, pts, 5).unwrap();
        build_clusters(&c, RadiusPair::equal(1.0).unwrap()).unwrap()
    }

    #[test]
    fn constant_kind_is_half_identity_everywhere() {
        let d = decomp2();
        let f = FieldSpec::ConstantHalfIdentity;
        let a = f.evaluate(&d, [3.3, 7.7]);
        assert_eq!(a, [[0.5, 0.0], [0.0, 0.5]]);
    }

    #[test]
    fn two_phase_values_are_the_declared_scalars() {
        let d = decomp2();
        let f = FieldSpec::TwoPhaseByCoverage {
            alpha1: 0.25,
            alpha2: 0.75,
        };
        let mut rng = RngStream::new(6, 0).rng();
        let mut saw = [false, false];
        for _ in 0..2000 {
            let x = [rng.random::<f64>() * 16.0, rng.random::<f64>() * 16.0];
            let a = f.evaluate(&d, x);
            assert_eq!(a[0][1], 0.0);
            assert_eq!(a[1][0], 0.0);
            assert_eq!(a[0][0], a[1][1]);
            assert!(a[0][0] == 0.25 || a[0][0] == 0.75);
            saw[if a[0][0] == 0.25 { 0 } else { 1 }] = true;
        }
        assert!(saw[0] && saw[1], "both phases should appear");
    }

    #[test]
    fn stationarity_holds_bit_exactly_on_dyadic_data() {
        // evaluate(field, shift(config, z), x) == evaluate(field, config, x + z)
        let b = SimBox::<2>::unit(16.0);
        let mut rng = RngStream::new(15, 0).rng();
        let pts: Vec<[f64; 2]> = (0..150)
            .map(|_| {
                [
                    snap(rng.random::<f64>() * 16.0),
                    snap(rng.random::<f64>() * 16.0),
                ]
            })
            .collect();
        let c = Configuration::explicit(b, pts, 15).unwrap();
        let radii = RadiusPair::equal(1.0).unwrap();
        let base = build_clusters(&c, radii).unwrap();
        for field in [
            FieldSpec::ConstantHalfIdentity,
            FieldSpec::TwoPhaseByCoverage {
                alpha1: 0.3,
                alpha2: 0.9,
            },
            FieldSpec::SmoothBump {
                beta: 0.25,
                support: 1.0,
            },
        ] {
            let mut prng = RngStream::new(16, 0).rng();
            for _ in 0..1000 {
                let x = [
                    snap(prng.random::<f64>() * 8.0),
                    snap(prng.random::<f64>() * 8.0),
                ];
                let z = [
                    snap(prng.random::<f64>() * 4.0),
                    snap(prng.random::<f64>() * 4.0),
                ];
                let shifted = build_clusters(&shift(&c, z), radii).unwrap();
                let lhs = field.evaluate(&shifted, x);
                let rhs = field.evaluate(&base, add(x, z));
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn ellipticity_bounds_hold_on_random_probes() {
        let d = decomp2();
        let fields = [
            FieldSpec::ConstantHalfIdentity,
            FieldSpec::TwoPhaseByCoverage {
                alpha1: 0.3,
                alpha2: 0.9,
            },
            FieldSpec::SmoothBump {
                beta: 0.4,
                support: 0.8,
            },
        ];
        let mut rng = RngStream::new(7, 0).rng();
        for f in fields {
            let (lam, big) = f.ellipticity();
            for _ in 0..10_000 {
                let x = [rng.random::<f64>() * 16.0, rng.random::<f64>() * 16.0];
                let xi = [
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                ];
                let a = f.evaluate(&d, x);
                // symmetry is exact
                assert_eq!(a[0][1], a[1][0]);
                let q = quad_form(&a, xi);
                let n2 = xi[0] * xi[0] + xi[1] * xi[1];
                assert!(q >= lam * n2 - 1e-12 && q <= big * n2 + 1e-12);
            }
        }
    }

    #[test]
    fn bump_is_smoothly_cut_off() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(2.0), 0.0);
        assert!(bump(0.5) > 0.0 && bump(0.5) < 1.0);
        assert!(bump(0.999) < 1e-100); // flat cutoff
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(FieldSpec::TwoPhaseByCoverage {
            alpha1: 0.0,
            alpha2: 1.0
        }
        .validate(1.0)
        .is_err());
        assert!(FieldSpec::SmoothBump {
            beta: -0.6,
            support: 0.5
        }
        .validate(1.0)
        .is_err());
        assert!(FieldSpec::SmoothBump {
            beta: 0.1,
            support: 2.0
        }
        .validate(1.0)
        .is_err());
    }
}
