use super::Target;

/// Two-dimensional ring-shaped bimodal density:
///
/// ```text
/// log p(z) = -2 (|z|^2 - 3)^2 + log(exp(-2 (z1 - 3)^2) + exp(-2 (z1 + 3)^2))
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyBimodal;

impl ToyBimodal {
    fn mixture_exponents(z1: f64) -> (f64, f64) {
        (-2.0 * (z1 - 3.0).powi(2), -2.0 * (z1 + 3.0).powi(2))
    }
}

impl Target for ToyBimodal {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "bimodal"
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        let r2 = z[0] * z[0] + z[1] * z[1];
        let (a, b) = Self::mixture_exponents(z[0]);
        let m = a.max(b);
        -2.0 * (r2 - 3.0).powi(2) + m + ((a - m).exp() + (b - m).exp()).ln()
    }

    fn grad_log_p(&self, z: &[f64], out: &mut [f64]) {
        let r2 = z[0] * z[0] + z[1] * z[1];
        let radial = -8.0 * (r2 - 3.0);
        let (a, b) = Self::mixture_exponents(z[0]);
        let m = a.max(b);
        let (wa, wb) = ((a - m).exp(), (b - m).exp());
        let total = wa + wb;
        let mixture = (wa * -4.0 * (z[0] - 3.0) + wb * -4.0 * (z[0] + 3.0)) / total;
        out[0] = radial * z[0] + mixture;
        out[1] = radial * z[1];
    }
}
