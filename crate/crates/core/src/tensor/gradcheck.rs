use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub checked: usize,
    pub passed: bool,
}

/// Fixed projection weights in [0.5, 1.5) used to scalarize vector outputs,
/// so that e.g. softmax rows (which always sum to one) still carry signal.
fn projection(n: usize) -> Vec<f64> {
    (0..n as u64)
        .map(|i| {
            let mut z = i.wrapping_add(0x9e37_79b9_7f4a_7c15);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            0.5 + (z >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

fn scalarize(g: &mut Graph<f64>, out: Var) -> Result<Var> {
    let n = g.value(out).len();
    if n == 1 {
        Ok(out)
    } else {
        g.weighted_sum(out, projection(n))
    }
}

fn eval(op: &impl Fn(&mut Graph<f64>, Var) -> Result<Var>, x: &Tensor<f64>) -> Result<f64> {
    let mut g = Graph::new();
    let v = g.input(x.clone());
    let out = op(&mut g, v)?;
    let s = scalarize(&mut g, out)?;
    Ok(g.value(s).item())
}

/// Compares the analytic gradient of `op` at `input` against central finite
/// differences. Non-scalar outputs are reduced with a fixed projection.
pub fn fd_check(
    op: impl Fn(&mut Graph<f64>, Var) -> Result<Var>,
    input: &Tensor<f64>,
    step: f64,
    tol: f64,
) -> Result<FdReport> {
    if !(step > 0.0) {
        return Err(Error::Parameter(format!("fd step must be positive, got {step}")));
    }
    let mut g = Graph::new();
    let x = g.input(input.clone());
    let out = op(&mut g, x)?;
    let s = scalarize(&mut g, out)?;
    let grads = g.backward(s)?;
    let zeros = vec![0.0; input.len()];
    let analytic = grads.get(x).unwrap_or(&zeros);

    let mut report = FdReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_index: 0,
        checked: input.len(),
        passed: true,
    };
    let mut probe = input.clone();
    for i in 0..input.len() {
        let orig = input.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = eval(&op, &probe)?;
        probe.data_mut()[i] = orig - step;
        let down = eval(&op, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
        report.max_abs_err = report.max_abs_err.max(abs);
        if rel > report.max_rel_err || !rel.is_finite() {
            report.max_rel_err = rel;
            report.worst_index = i;
        }
    }
    report.passed = report.max_rel_err < tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_away_from_kink() {
        let x = Tensor::from_f64(&[2, 3], &[-1.2, 0.4, 2.0, 3.0, -0.3, 0.9]).unwrap();
        let r = fd_check(|g, v| Ok(g.relu(v)), &x, 1e-5, 1e-6).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn relu_gradient_at_three_is_one() {
        let x = Tensor::from_f64(&[1], &[3.0]).unwrap();
        let mut g = Graph::new();
        let v = g.input(x.clone());
        let y = g.relu(v);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(v).unwrap(), &[1.0]);
        assert!(fd_check(|g, v| Ok(g.relu(v)), &x, 1e-5, 1e-6).unwrap().passed);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu right at the kink: analytic 0, numeric 0.5
        let x = Tensor::from_f64(&[1], &[0.0]).unwrap();
        let r = fd_check(|g, v| Ok(g.relu(v)), &x, 1e-5, 1e-6).unwrap();
        assert!(!r.passed);
    }
}
