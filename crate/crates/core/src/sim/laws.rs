use nalgebra::{DMatrix, DVector};

use super::{AffineFeedback, ControlLaw};
use crate::game::GameGains;
use crate::social::SocialGains;

/// `u ≡ 0`.
pub struct ZeroLaw {
    r: usize,
    n: usize,
}

impl ZeroLaw {
    pub fn new(r: usize, n: usize) -> Self {
        ZeroLaw { r, n }
    }
}

impl ControlLaw for ZeroLaw {
    fn feedback(&self, _t: f64) -> AffineFeedback {
        AffineFeedback {
            own: DMatrix::zeros(self.r, self.n),
            avg: DMatrix::zeros(self.r, self.n),
            offset: DVector::zeros(self.r),
        }
    }
}

/// Open-loop control `u(t)`.
pub struct OpenLoop<F> {
    pub n: usize,
    pub control: F,
}

impl<F: Fn(f64) -> DVector<f64> + Sync> ControlLaw for OpenLoop<F> {
    fn feedback(&self, t: f64) -> AffineFeedback {
        let offset = (self.control)(t);
        AffineFeedback {
            own: DMatrix::zeros(offset.len(), self.n),
            avg: DMatrix::zeros(offset.len(), self.n),
            offset,
        }
    }
}

/// `u_i = −R⁻¹Bᵀ(P x_i + K x̄ + s)`.
pub struct DecentralizedSocial<'a>(pub &'a SocialGains);

impl ControlLaw for DecentralizedSocial<'_> {
    fn feedback(&self, t: f64) -> AffineFeedback {
        let g = self.0;
        let m = &g.r_inv_bt;
        let c = g.k.at(t) * g.x_bar.vector_at(t) + g.s.vector_at(t);
        AffineFeedback {
            own: -(m * g.p.at(t)),
            avg: DMatrix::zeros(m.nrows(), m.ncols()),
            offset: -(m * c),
        }
    }
}

/// `u_i = −R⁻¹Bᵀ(P x_i + K x^(N) + s)`.
pub struct CentralizedSocial<'a>(pub &'a SocialGains);

impl ControlLaw for CentralizedSocial<'_> {
    fn feedback(&self, t: f64) -> AffineFeedback {
        let g = self.0;
        let m = &g.r_inv_bt;
        AffineFeedback {
            own: -(m * g.p.at(t)),
            avg: -(m * g.k.at(t)),
            offset: -(m * g.s.vector_at(t)),
        }
    }
}

fn nash_feedback(
    g: &GameGains,
    t: f64,
    delta_p: Option<&DMatrix<f64>>,
    delta_c: Option<&DVector<f64>>,
) -> AffineFeedback {
    let m = &g.r_inv_bt;
    let p = g.p.at(t);
    let own = match delta_p {
        Some(d) => &p + d,
        None => p.clone(),
    };
    let mut c = (g.p_bar.at(t) - p) * g.x_bar.vector_at(t) + g.s_hat.vector_at(t);
    if let Some(d) = delta_c {
        c += d;
    }
    AffineFeedback {
        own: -(m * own),
        avg: DMatrix::zeros(m.nrows(), m.ncols()),
        offset: -(m * c),
    }
}

/// `u_i = −R⁻¹Bᵀ(P x_i + (P̄ − P) x̄ + ŝ)`.
pub struct NashStrategy<'a>(pub &'a GameGains);

impl ControlLaw for NashStrategy<'_> {
    fn feedback(&self, t: f64) -> AffineFeedback {
        nash_feedback(self.0, t, None, None)
    }
}

/// `u = −R⁻¹Bᵀ((P + ΔP) x + (P̄ − P) x̄ + ŝ + Δc)`.
pub struct DeviatedNash<'a> {
    pub gains: &'a GameGains,
    pub delta_p: DMatrix<f64>,
    pub delta_c: DVector<f64>,
}

impl ControlLaw for DeviatedNash<'_> {
    fn feedback(&self, t: f64) -> AffineFeedback {
        nash_feedback(self.gains, t, Some(&self.delta_p), Some(&self.delta_c))
    }
}
