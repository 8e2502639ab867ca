//! Adaptive Dormand-Prince 5(4) integrator that reports the solution at a
//! prescribed list of nodes (which may run in either direction).

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions<const N: usize> {
    pub rtol: f64,
    /// Per-component absolute tolerance.
    pub atol: [f64; N],
    pub max_steps: usize,
    pub initial_step: f64,
}

impl<const N: usize> Default for OdeOptions<N> {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: [1e-12; N],
            max_steps: 1_000_000,
            initial_step: 1e-3,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(x, y)` from `nodes[0]` with `y(nodes[0]) = y0` and
/// returns the state at every node. Nodes must be strictly monotone; steps
/// are clipped so that each node is hit exactly.
pub fn integrate_dopri5<const N: usize, F>(
    mut f: F,
    nodes: &[f64],
    y0: [f64; N],
    opts: &OdeOptions<N>,
) -> Result<Vec<[f64; N]>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let Some(&x0) = nodes.first() else {
        return Ok(Vec::new());
    };
    let dir = match nodes.get(1) {
        Some(&x1) if x1 > x0 => 1.0,
        Some(_) => -1.0,
        None => return Ok(vec![y0]),
    };
    if nodes.windows(2).any(|w| (w[1] - w[0]) * dir <= 0.0) {
        return Err(Error::InvalidInput("ODE nodes must be strictly monotone".into()));
    }

    let mut out = Vec::with_capacity(nodes.len());
    out.push(y0);
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y);
    let mut h = opts.initial_step.abs() * dir;
    let mut steps = 0usize;

    for &target in &nodes[1..] {
        while (target - x) * dir > 0.0 {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Integration(format!("step budget exhausted at x = {x}")));
            }
            let remaining = target - x;
            let hit = h.abs() >= remaining.abs();
            let step = if hit { remaining } else { h };

            let mut k = [[0.0; N]; 7];
            k[0] = k1;
            for s in 1..7 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        for i in 0..N {
                            ys[i] += step * a * kj[i];
                        }
                    }
                }
                k[s] = f(x + C[s] * step, &ys);
            }
            let mut y_new = y;
            for i in 0..N {
                for s in 0..6 {
                    y_new[i] += step * A[6][s] * k[s][i];
                }
            }
            let mut err_sq = 0.0;
            for i in 0..N {
                let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * step;
                let scale = opts.atol[i] + opts.rtol * y[i].abs().max(y_new[i].abs());
                let r = if scale > 0.0 { e / scale } else if e == 0.0 { 0.0 } else { f64::INFINITY };
                err_sq += r * r;
            }
            let err = (err_sq / N as f64).sqrt();
            if !err.is_finite() && y_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration(format!("non-finite state near x = {x}")));
            }

            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                x = if hit { target } else { x + step };
                y = y_new;
                k1 = k[6];
                // do not let a clipped final step shrink the step size
                let base = if hit { h.abs().max(step.abs()) } else { step.abs() };
                h = base * factor * dir;
            } else {
                h = step.abs() * factor.min(1.0) * dir;
                if h.abs() < 1e-14 * x.abs().max(1.0) {
                    return Err(Error::Integration(format!("step size underflow at x = {x}")));
                }
            }
        }
        out.push(y);
    }
    Ok(out)
}
