//! Lagrange bases on the reference hexahedron [-1, 1]³ and Gauss rules.

/// Gauss-Legendre points and weights on [-1, 1], n = 1..=5.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (0.6f64).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let s = (6.0 / 5.0f64).sqrt() * 2.0;
            let a = ((3.0 - s) / 7.0f64).sqrt();
            let b = ((3.0 + s) / 7.0f64).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        5 => {
            let r = (10.0 / 7.0f64).sqrt() * 2.0;
            let a = (5.0 - r).sqrt() / 3.0;
            let b = (5.0 + r).sqrt() / 3.0;
            let wa = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
            let wb = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
            (vec![-b, -a, 0.0, a, b], vec![wb, wa, 128.0 / 225.0, wa, wb])
        }
        _ => panic!("Gauss rule with {n} points not available"),
    }
}

/// 1D Lagrange values and derivatives on equispaced nodes of [-1, 1].
pub fn lagrange_1d(order: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    match order {
        1 => (vec![0.5 * (1.0 - x), 0.5 * (1.0 + x)], vec![-0.5, 0.5]),
        2 => (
            vec![0.5 * x * (x - 1.0), 1.0 - x * x, 0.5 * x * (x + 1.0)],
            vec![x - 0.5, -2.0 * x, x + 0.5],
        ),
        _ => panic!("order {order} not supported"),
    }
}

/// Tensor-product shape values and reference gradients, lexicographic node order.
pub fn shape_3d(order: usize, xi: [f64; 3]) -> (Vec<f64>, Vec<[f64; 3]>) {
    let p = order + 1;
    let l: Vec<(Vec<f64>, Vec<f64>)> = xi.iter().map(|&x| lagrange_1d(order, x)).collect();
    let mut vals = Vec::with_capacity(p * p * p);
    let mut grads = Vec::with_capacity(p * p * p);
    for k in 0..p {
        for j in 0..p {
            for i in 0..p {
                let (a, da) = (l[0].0[i], l[0].1[i]);
                let (b, db) = (l[1].0[j], l[1].1[j]);
                let (c, dc) = (l[2].0[k], l[2].1[k]);
                vals.push(a * b * c);
                grads.push([da * b * c, a * db * c, a * b * dc]);
            }
        }
    }
    (vals, grads)
}

/// Shape functions tabulated at a tensor Gauss rule.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    pub order: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 3]>>,
}

impl ElementBasis {
    /// Default rule: (order + 1)³ points.
    pub fn new(order: usize) -> Self {
        Self::with_points(order, order + 1)
    }

    pub fn with_points(order: usize, npts: usize) -> Self {
        let (g, w) = gauss_legendre(npts);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for k in 0..npts {
            for j in 0..npts {
                for i in 0..npts {
                    points.push([g[i], g[j], g[k]]);
                    weights.push(w[i] * w[j] * w[k]);
                }
            }
        }
        let (values, grads) = points.iter().map(|&x| shape_3d(order, x)).unzip();
        Self { order, points, weights, values, grads }
    }

    pub fn n_nodes(&self) -> usize {
        (self.order + 1).pow(3)
    }
}

/// Reference axes spanning local face `face`, in increasing order.
pub fn face_axes(face: usize) -> (usize, usize, usize) {
    let normal = face / 2;
    let mut t = (0..3).filter(|&d| d != normal);
    (normal, t.next().unwrap(), t.next().unwrap())
}

/// Gauss rule on one local face, with 3D reference points.
#[derive(Debug, Clone)]
pub struct FaceRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl FaceRule {
    pub fn new(face: usize, npts: usize) -> Self {
        let (g, w) = gauss_legendre(npts);
        let (nax, a, b) = face_axes(face);
        let fixed = if face % 2 == 0 { -1.0 } else { 1.0 };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for j in 0..npts {
            for i in 0..npts {
                let mut x = [0.0; 3];
                x[nax] = fixed;
                x[a] = g[i];
                x[b] = g[j];
                points.push(x);
                weights.push(w[i] * w[j]);
            }
        }
        Self { points, weights }
    }
}
