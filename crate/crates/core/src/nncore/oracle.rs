//! Independent f64 re-implementations used as test oracles.

use super::{GruIds, ParamId, ParamStore};

/// Scalar GRU over f64 copies of the parameters.
pub struct ScalarGru {
    pub w: [Vec<Vec<f64>>; 3],
    pub u: [Vec<Vec<f64>>; 3],
    pub b: [Vec<f64>; 3],
}

impl ScalarGru {
    pub fn from(s: &ParamStore, p: &GruIds) -> Self {
        let mat = |id: ParamId| -> Vec<Vec<f64>> {
            let t = s.get(id);
            (0..t.lead()).map(|i| t.row(i).iter().map(|x| *x as f64).collect()).collect()
        };
        let vec = |id: ParamId| -> Vec<f64> { s.get(id).data().iter().map(|x| *x as f64).collect() };
        Self {
            w: [mat(p.w_z), mat(p.w_r), mat(p.w_h)],
            u: [mat(p.u_z), mat(p.u_r), mat(p.u_h)],
            b: [vec(p.b_z), vec(p.b_r), vec(p.b_h)],
        }
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = h.len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut out = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut r = vec![0.0; n];
        for k in 0..n {
            let mut az = self.b[0][k];
            let mut ar = self.b[1][k];
            for j in 0..x.len() {
                az += self.w[0][k][j] * x[j];
                ar += self.w[1][k][j] * x[j];
            }
            for j in 0..n {
                az += self.u[0][k][j] * h[j];
                ar += self.u[1][k][j] * h[j];
            }
            z[k] = sig(az);
            r[k] = sig(ar);
        }
        for k in 0..n {
            let mut a = self.b[2][k];
            for j in 0..x.len() {
                a += self.w[2][k][j] * x[j];
            }
            for j in 0..n {
                a += self.u[2][k][j] * r[j] * h[j];
            }
            out[k] = (1.0 - z[k]) * h[k] + z[k] * a.tanh();
        }
        out
    }
}

