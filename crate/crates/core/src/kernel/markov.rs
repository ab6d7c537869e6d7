//! Linear-time GP smoothing for half-integer Matérn kernels.
//!
//! A Matérn process with ν = p + 1/2 on the line is the first coordinate of
//! a (p+1)-dimensional linear SDE. Posterior means and marginal variances
//! under Gaussian noise then come from a Kalman filter and an RTS smoother.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};

type Mat<const D: usize> = SMatrix<f64, D, D>;
type Vector<const D: usize> = SVector<f64, D>;

/// State-space form of a unit-variance Matérn kernel.
#[derive(Debug, Clone)]
struct Sde<const D: usize> {
    lam: f64,
    /// `F + λI`, nilpotent.
    nil: Mat<D>,
    pinf: Mat<D>,
    /// White-noise spectral density.
    qc: f64,
}

impl Sde<2> {
    fn matern32(lam: f64) -> Self {
        let l2 = lam * lam;
        Self {
            lam,
            nil: Mat::<2>::new(lam, 1.0, -l2, -lam),
            pinf: Mat::<2>::new(1.0, 0.0, 0.0, l2),
            qc: 4.0 * l2 * lam,
        }
    }
}

impl Sde<3> {
    fn matern52(lam: f64) -> Self {
        let l2 = lam * lam;
        let l3 = l2 * lam;
        #[rustfmt::skip]
        let nil = Mat::<3>::new(
            lam, 1.0, 0.0,
            0.0, lam, 1.0,
            -l3, -3.0 * l2, -2.0 * lam,
        );
        #[rustfmt::skip]
        let pinf = Mat::<3>::new(
            1.0, 0.0, -l2 / 3.0,
            0.0, l2 / 3.0, 0.0,
            -l2 / 3.0, 0.0, l2 * l2,
        );
        Self { lam, nil, pinf, qc: 16.0 / 3.0 * l2 * l3 }
    }
}

/// `∫_0^dt s^k e^(-c s) ds`.
fn exp_moment(k: usize, c: f64, dt: f64) -> f64 {
    let z = c * dt;
    if z < 1.0 {
        // alternating series, fine for small z
        let mut term = 1.0;
        let mut sum = 1.0 / (k as f64 + 1.0);
        for m in 1..60 {
            term *= -z / m as f64;
            let add = term / (k + m + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        dt.powi(k as i32 + 1) * sum
    } else {
        // k!/c^(k+1) * (1 - e^-z Σ_{j<=k} z^j/j!)
        let mut partial = 0.0;
        let mut t = 1.0;
        for j in 0..=k {
            if j > 0 {
                t *= z / j as f64;
            }
            partial += t;
        }
        let fact: f64 = (1..=k).map(|j| j as f64).product();
        fact / c.powi(k as i32 + 1) * (1.0 - (-z).exp() * partial)
    }
}

impl<const D: usize> Sde<D> {
    /// Transition matrix and process noise over a gap `dt >= 0`.
    fn transition(&self, dt: f64) -> (Mat<D>, Mat<D>) {
        let decay = (-self.lam * dt).exp();
        let mut a = Mat::<D>::identity();
        let mut npow = Mat::<D>::identity();
        let mut coef = 1.0;
        for p in 1..D {
            npow = npow * self.nil;
            coef *= dt / p as f64;
            a += npow * coef;
        }
        a *= decay;

        // Q = qc ∫ e^{-2λs} g(s) g(s)ᵀ ds with g(s) = Σ_p s^p/p! N^p e_last
        let mut g: Vec<Vector<D>> = Vec::with_capacity(D);
        let mut v = Vector::<D>::zeros();
        v[D - 1] = 1.0;
        for p in 0..D {
            if p > 0 {
                v = self.nil * v;
            }
            let fact: f64 = (1..=p).map(|j| j as f64).product();
            g.push(v / fact);
        }
        let mut q = Mat::<D>::zeros();
        for (p, gp) in g.iter().enumerate() {
            for (r, gr) in g.iter().enumerate() {
                q += gp * gr.transpose() * exp_moment(p + r, 2.0 * self.lam, dt);
            }
        }
        q *= self.qc;
        (a, (q + q.transpose()) * 0.5)
    }
}

/// Filter and smoother gains for fixed inputs and noise variances.
#[derive(Debug, Clone)]
struct Plan<const D: usize> {
    trans: Vec<Mat<D>>,
    gain: Vec<Vector<D>>,
    smooth_gain: Vec<Mat<D>>,
    post_var: Vec<f64>,
}

impl<const D: usize> Plan<D> {
    fn new(sde: &Sde<D>, x: &[f64], noise: &[f64]) -> Result<Self> {
        let n = x.len();
        let mut trans = Vec::with_capacity(n);
        let mut gain = Vec::with_capacity(n);
        let mut p_pred = Vec::with_capacity(n);
        let mut p_filt: Vec<Mat<D>> = Vec::with_capacity(n);

        for i in 0..n {
            let (a, pp) = if i == 0 {
                (Mat::<D>::identity(), sde.pinf)
            } else {
                let (a, q) = sde.transition(x[i] - x[i - 1]);
                let pp = a * p_filt[i - 1] * a.transpose() + q;
                (a, (pp + pp.transpose()) * 0.5)
            };
            let s = pp[(0, 0)] + noise[i];
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Numerical(format!("innovation variance {s} at point {i}")));
            }
            let k: Vector<D> = pp.column(0) / s;
            let pf = pp - k * k.transpose() * s;
            trans.push(a);
            gain.push(k);
            p_pred.push(pp);
            p_filt.push((pf + pf.transpose()) * 0.5);
        }

        let mut smooth_gain = vec![Mat::<D>::zeros(); n];
        let mut post_var = vec![0.0; n];
        let mut ps = p_filt[n - 1];
        post_var[n - 1] = ps[(0, 0)];
        for i in (0..n.saturating_sub(1)).rev() {
            let cross = p_filt[i] * trans[i + 1].transpose();
            let inv = match p_pred[i + 1].cholesky() {
                Some(c) => c.inverse(),
                None => p_pred[i + 1].try_inverse().ok_or_else(|| {
                    Error::Numerical(format!("singular predicted covariance at point {}", i + 1))
                })?,
            };
            let gs = cross * inv;
            ps = p_filt[i] + gs * (ps - p_pred[i + 1]) * gs.transpose();
            ps = (ps + ps.transpose()) * 0.5;
            smooth_gain[i] = gs;
            post_var[i] = ps[(0, 0)].max(0.0);
        }
        Ok(Self { trans, gain, smooth_gain, post_var })
    }

    fn smooth(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let mut m_pred: Vec<Vector<D>> = Vec::with_capacity(n);
        let mut m_filt: Vec<Vector<D>> = Vec::with_capacity(n);
        for i in 0..n {
            let mp = if i == 0 { Vector::<D>::zeros() } else { self.trans[i] * m_filt[i - 1] };
            m_filt.push(mp + self.gain[i] * (r[i] - mp[0]));
            m_pred.push(mp);
        }
        let mut out = vec![0.0; n];
        let mut ms = m_filt[n - 1];
        out[n - 1] = ms[0];
        for i in (0..n.saturating_sub(1)).rev() {
            ms = m_filt[i] + self.smooth_gain[i] * (ms - m_pred[i + 1]);
            out[i] = ms[0];
        }
        out
    }
}

#[derive(Debug, Clone)]
enum AnyPlan {
    P2(Plan<2>),
    P3(Plan<3>),
}

/// GP regression with a Matérn prior and heteroscedastic Gaussian noise,
/// solved in O(n) for sorted, distinct inputs.
#[derive(Debug, Clone)]
pub struct MaternSmoother {
    plan: AnyPlan,
}

impl MaternSmoother {
    /// `order` is `p` in ν = p + 1/2; only 1 and 2 are supported.
    pub fn new(order: usize, rho: f64, x: &[f64], noise: &[f64]) -> Result<Self> {
        if x.is_empty() || x.len() != noise.len() {
            return Err(Error::Argument("smoother needs matching non-empty inputs".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("smoother inputs must be strictly increasing".into()));
        }
        let plan = match order {
            1 => AnyPlan::P2(Plan::new(&Sde::matern32(6f64.sqrt() / rho), x, noise)?),
            2 => AnyPlan::P3(Plan::new(&Sde::matern52(10f64.sqrt() / rho), x, noise)?),
            _ => return Err(Error::Argument(format!("no state-space form for order {order}"))),
        };
        Ok(Self { plan })
    }

    /// Posterior mean `Φ(Φ + D)⁻¹ r` at the inputs.
    pub fn posterior_mean(&self, r: &[f64]) -> Vec<f64> {
        match &self.plan {
            AnyPlan::P2(p) => p.smooth(r),
            AnyPlan::P3(p) => p.smooth(r),
        }
    }

    /// Diagonal of the posterior covariance `Φ - Φ(Φ + D)⁻¹Φ`.
    pub fn posterior_var(&self) -> &[f64] {
        match &self.plan {
            AnyPlan::P2(p) => &p.post_var,
            AnyPlan::P3(p) => &p.post_var,
        }
    }
}
