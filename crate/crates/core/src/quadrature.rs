//! Gauss-Legendre rules on edges and triangle rules up to degree 10.

use std::sync::OnceLock;

use crate::error::FemError;

/// Points in barycentric coordinates; weights sum to one and are scaled by
/// the triangle area at use.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

#[derive(Debug, Clone, Copy)]
enum Orbit {
    Centroid(f64),
    /// `(a, a, 1 − 2a)` and its permutations.
    S21(f64, f64),
    /// All six permutations of `(a, b, 1 − a − b)`.
    S111(f64, f64, f64),
}

pub const SUPPORTED_DEGREES: std::ops::RangeInclusive<usize> = 1..=10;

const TABLE: [&[Orbit]; 9] = [
    // degree 1, 1 points
    &[
        Orbit::Centroid(1.0),
    ],
    // degree 2, 3 points
    &[
        Orbit::S21(0.5, 0.3333333333333333),
    ],
    // degree 3, 4 points
    &[
        Orbit::Centroid(-0.5625),
        Orbit::S21(0.2, 0.5208333333333334),
    ],
    // degree 4, 6 points
    &[
        Orbit::S21(0.4459484909159649, 0.22338158967801147),
        Orbit::S21(0.09157621350977074, 0.10995174365532187),
    ],
    // degree 5, 7 points
    &[
        Orbit::Centroid(0.225),
        Orbit::S21(0.4701420641051151, 0.1323941527885062),
        Orbit::S21(0.10128650732345634, 0.12593918054482714),
    ],
    // degree 6, 12 points
    &[
        Orbit::S21(0.06308901449150223, 0.05084490637020682),
        Orbit::S21(0.24928674517091043, 0.11678627572637937),
        Orbit::S111(0.053145049844816945, 0.3103524510337844, 0.08285107561837357),
    ],
    // degree 7, 16 points
    &[
        Orbit::Centroid(0.08868092464191235),
        Orbit::S21(0.2084090730581842, 0.09490748139279111),
        Orbit::S21(0.44580849460093475, 0.05499835998462548),
        Orbit::S21(0.06208973675473427, 0.04842525403385918),
        Orbit::S111(0.0334530099693313, 0.3024659021572677, 0.05272096485404339),
    ],
    // degree 8, 16 points
    &[
        Orbit::Centroid(0.14431560767778717),
        Orbit::S21(0.1705693077517602, 0.10321737053471824),
        Orbit::S21(0.4592925882927232, 0.09509163426728462),
        Orbit::S21(0.05054722831703098, 0.03245849762319808),
        Orbit::S111(0.008394777409957605, 0.2631128296346381, 0.027230314174434993),
    ],
    // degree 9, 19 points
    &[
        Orbit::Centroid(0.09713579628279884),
        Orbit::S21(0.04472951339445271, 0.02557767565869803),
        Orbit::S21(0.43708959149293664, 0.07782754100477428),
        Orbit::S21(0.18820353561903272, 0.07964773892721025),
        Orbit::S21(0.4896825191987376, 0.03133470022713907),
        Orbit::S111(0.036838412054736286, 0.2219629891607657, 0.043283539377289376),
    ],
];

fn expand(degree: usize, orbits: &[Orbit]) -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for orbit in orbits {
        match *orbit {
            Orbit::Centroid(w) => {
                points.push([1.0 / 3.0; 3]);
                weights.push(w);
            }
            Orbit::S21(a, w) => {
                let b = 1.0 - 2.0 * a;
                for p in [[a, a, b], [a, b, a], [b, a, a]] {
                    points.push(p);
                    weights.push(w);
                }
            }
            Orbit::S111(a, b, w) => {
                let c = 1.0 - a - b;
                for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    points.push(p);
                    weights.push(w);
                }
            }
        }
    }
    QuadratureRule {
        degree,
        points,
        weights,
    }
}

/// Gauss product rule on the square mapped onto the triangle by collapsing
/// one side; `n` points per direction are exact to degree `2n − 2`.
fn collapsed_gauss(degree: usize) -> QuadratureRule {
    let n = degree / 2 + 1;
    let g = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for &(u, wu) in g {
        for &(v, wv) in g {
            let (xi, eta) = (u, (1.0 - u) * v);
            points.push([1.0 - xi - eta, xi, eta]);
            weights.push(2.0 * wu * wv * (1.0 - u));
        }
    }
    QuadratureRule {
        degree,
        points,
        weights,
    }
}

/// Triangle rule exact for polynomials up to `degree`.
pub fn quadrature_rule(degree: usize) -> Result<&'static QuadratureRule, FemError> {
    static RULES: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    if !SUPPORTED_DEGREES.contains(&degree) {
        return Err(FemError::UnsupportedDegree {
            requested: degree,
            supported: SUPPORTED_DEGREES.collect(),
        });
    }
    let rules = RULES.get_or_init(|| {
        TABLE
            .iter()
            .enumerate()
            .map(|(i, orbits)| expand(i + 1, orbits))
            .chain(std::iter::once(collapsed_gauss(10)))
            .collect()
    });
    Ok(&rules[degree - 1])
}

const MAX_GAUSS_POINTS: usize = 20;

/// Gauss-Legendre rule mapped to `[0, 1]`: `(abscissa, weight)` pairs with
/// weights summing to one. Exact for polynomials of degree `2n − 1`.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    static RULES: OnceLock<Vec<Vec<(f64, f64)>>> = OnceLock::new();
    assert!(
        (1..=MAX_GAUSS_POINTS).contains(&n),
        "Gauss-Legendre rules are available for 1..={MAX_GAUSS_POINTS} points"
    );
    let rules = RULES.get_or_init(|| (1..=MAX_GAUSS_POINTS).map(legendre_rule).collect());
    &rules[n - 1]
}

fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Newton iteration on P_n from the Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
