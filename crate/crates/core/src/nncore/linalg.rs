//! Row-major matrix kernels. All accumulate into `out`.

/// `out += W x` for `W: rows x cols`.
pub fn matvec_acc(w: &[f32], cols: usize, x: &[f32], out: &mut [f32]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f32>();
    }
}

/// `out += Wᵀ g` for `W: rows x cols`.
pub fn matvec_t_acc(w: &[f32], cols: usize, g: &[f32], out: &mut [f32]) {
    for (gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * gi;
        }
    }
}

/// `gw += g xᵀ`.
pub fn outer_acc(gw: &mut [f32], g: &[f32], x: &[f32]) {
    let cols = x.len();
    for (gi, row) in g.iter().zip(gw.chunks_exact_mut(cols)) {
        if *gi == 0.0 {
            continue;
        }
        for (o, xj) in row.iter_mut().zip(x) {
            *o += gi * xj;
        }
    }
}

pub fn add_acc(out: &mut [f32], g: &[f32]) {
    for (o, x) in out.iter_mut().zip(g) {
        *o += x;
    }
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
