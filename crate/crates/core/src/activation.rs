//! Scalar activations and their pointwise (Nemytskii) lifts.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::space::Field;

#[derive(Clone, Debug, PartialEq)]
pub enum Activation<T> {
    Relu,
    Logistic,
    Tanh,
    /// `𝟙_{[0,∞)}`; evaluable but never Lipschitz.
    Heaviside,
    /// `√logistic`, the square root of the logistic rate.
    SqrtLogistic,
    /// Piecewise-linear interpolant through samples, constant beyond them.
    Custom {
        xs: Vec<T>,
        fs: Vec<T>,
        lip: T,
    },
}

impl<T: Real> Activation<T> {
    pub fn custom(xs: Vec<T>, fs: Vec<T>, lip: T) -> Result<Self> {
        if xs.is_empty() || xs.len() != fs.len() {
            return Err(Error::Config("custom activation needs matching non-empty samples".into()));
        }
        if xs.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Config(
                "custom activation abscissae must be strictly increasing".into(),
            ));
        }
        if xs.iter().chain(&fs).any(|v| !v.is_finite()) || !(lip >= T::zero() && lip.is_finite()) {
            return Err(Error::Config(
                "custom activation samples and Lipschitz constant must be finite".into(),
            ));
        }
        Ok(Activation::Custom { xs, fs, lip })
    }

    /// The constant map `f ≡ c` with Lipschitz constant 0.
    pub fn constant(c: T) -> Self {
        Activation::Custom {
            xs: vec![T::zero()],
            fs: vec![c],
            lip: T::zero(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Logistic => "logistic",
            Activation::Tanh => "tanh",
            Activation::Heaviside => "heaviside",
            Activation::SqrtLogistic => "sqrt_logistic",
            Activation::Custom { .. } => "custom",
        }
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Logistic => T::one() / (T::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Heaviside => {
                if x >= T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::SqrtLogistic => (T::one() + (-x).exp()).sqrt().recip(),
            Activation::Custom { xs, fs, .. } => interpolate_clamped(xs, fs, x),
        }
    }

    pub fn f0(&self) -> T {
        self.eval(T::zero())
    }

    pub fn is_monotone(&self) -> bool {
        match self {
            Activation::Custom { fs, .. } => fs.windows(2).all(|p| p[1] >= p[0]),
            _ => true,
        }
    }

    pub fn certificate_eligible(&self) -> bool {
        !matches!(self, Activation::Heaviside)
    }

    /// `(Lip(f), f(0))`, audited for custom samples.
    pub fn lipschitz_data(&self) -> Result<(T, T)> {
        let lip = match self {
            Activation::Relu | Activation::Tanh => T::one(),
            Activation::Logistic => T::of(0.25),
            // The derivative peaks at x = −ln 2 with value 1/(3√3).
            Activation::SqrtLogistic => T::one() / (T::of(3.0) * T::of(3.0).sqrt()),
            Activation::Heaviside => return Err(Error::NotLipschitz("heaviside".into())),
            Activation::Custom { xs, fs, lip } => {
                for k in 1..xs.len() {
                    let slope = ((fs[k] - fs[k - 1]) / (xs[k] - xs[k - 1])).abs();
                    if slope > *lip * (T::one() + T::of(1e-12)) {
                        return Err(Error::DeclaredConstant {
                            declared: lip.as_f64(),
                            x0: xs[k - 1].as_f64(),
                            x1: xs[k].as_f64(),
                            slope: slope.as_f64(),
                        });
                    }
                }
                *lip
            }
        };
        Ok((lip, self.f0()))
    }

    /// Activation whose values are `√f`, for rate functions entering noise.
    pub fn sqrt_rate(&self) -> Result<Self> {
        match self {
            Activation::Logistic => Ok(Activation::SqrtLogistic),
            Activation::Custom { fs, .. } if fs.windows(2).all(|p| p[0] == p[1]) => {
                if fs[0] < T::zero() {
                    return Err(Error::Config("rate must be non-negative".into()));
                }
                Ok(Activation::constant(fs[0].sqrt()))
            }
            other => Err(Error::Config(format!(
                "the square root of `{}` is not a certified Lipschitz map",
                other.name()
            ))),
        }
    }

    pub fn apply_slice(&self, u: &[T], out: &mut [T]) {
        for (o, x) in out.iter_mut().zip(u) {
            *o = self.eval(*x);
        }
    }

    /// `F(u)(x) = f(u(x))`.
    pub fn nemytskii(&self, u: &Field<T>) -> Field<T> {
        let values = u.values().iter().map(|x| self.eval(*x)).collect();
        Field::from_raw(u.grid_id(), values)
    }
}

fn interpolate_clamped<T: Real>(xs: &[T], fs: &[T], x: T) -> T {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return fs[0];
    }
    if x >= xs[last] {
        return fs[last];
    }
    let k = xs.partition_point(|v| *v <= x).clamp(1, last);
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    fs[k - 1] + (fs[k] - fs[k - 1]) * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Grid, Weight};
    use proptest::prelude::*;

    #[test]
    fn catalogue_values() {
        assert_eq!(Activation::<f64>::Logistic.eval(0.0), 0.5);
        assert_eq!(Activation::<f64>::Relu.eval(-3.0), 0.0);
        assert_eq!(Activation::<f64>::Relu.eval(2.0), 2.0);
        assert_eq!(Activation::<f64>::Tanh.eval(0.0), 0.0);
        assert_eq!(Activation::<f64>::Heaviside.eval(0.0), 1.0);
        assert_eq!(Activation::<f64>::Heaviside.eval(-1e-300), 0.0);
        let s = Activation::<f64>::SqrtLogistic;
        assert!((s.eval(1.3).powi(2) - Activation::Logistic.eval(1.3)).abs() < 1e-15);
        assert_eq!(Activation::<f64>::Logistic.eval(-1000.0), 0.0);
    }

    #[test]
    fn lipschitz_table() {
        assert_eq!(Activation::<f64>::Tanh.lipschitz_data().unwrap(), (1.0, 0.0));
        assert_eq!(Activation::<f64>::Relu.lipschitz_data().unwrap(), (1.0, 0.0));
        assert_eq!(Activation::<f64>::Logistic.lipschitz_data().unwrap(), (0.25, 0.5));
        let (lip, f0) = Activation::<f64>::SqrtLogistic.lipschitz_data().unwrap();
        assert!((lip - 0.19245008972987526).abs() < 1e-15);
        assert!((f0 - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            Activation::<f64>::Heaviside.lipschitz_data(),
            Err(Error::NotLipschitz(_))
        ));
        assert!(!Activation::<f64>::Heaviside.certificate_eligible());
    }

    #[test]
    fn sqrt_logistic_derivative_peaks_at_minus_ln2() {
        // Central differences on a fine grid as an independent oracle.
        let s = Activation::<f64>::SqrtLogistic;
        let (lip, _) = s.lipschitz_data().unwrap();
        let h = 1e-5;
        let (mut best, mut at) = (0.0f64, 0.0f64);
        for k in -40000..40000 {
            let x = k as f64 * 2e-4;
            let d = (s.eval(x + h) - s.eval(x - h)) / (2.0 * h);
            if d > best {
                best = d;
                at = x;
            }
        }
        assert!((best - lip).abs() < 1e-9);
        assert!((at + 2f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn custom_audit_reports_the_violating_pair() {
        let ok = Activation::custom(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 0.7], 0.5).unwrap();
        assert_eq!(ok.lipschitz_data().unwrap().0, 0.5);
        let bad = Activation::custom(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 2.0], 0.5).unwrap();
        match bad.lipschitz_data() {
            Err(Error::DeclaredConstant { x0, x1, .. }) => assert_eq!((x0, x1), (1.0, 2.0)),
            other => panic!("expected audit failure, got {other:?}"),
        }
        let c = Activation::constant(2.0);
        assert_eq!(c.lipschitz_data().unwrap(), (0.0, 2.0));
        assert_eq!(c.eval(-7.0), 2.0);
        assert_eq!(c.sqrt_rate().unwrap().eval(1.0), 2f64.sqrt());
        assert_eq!(Activation::<f64>::Logistic.sqrt_rate().unwrap(), Activation::SqrtLogistic);
        assert!(Activation::<f64>::Relu.sqrt_rate().is_err());
    }

    #[test]
    fn relu_is_identity_on_the_positive_cone() {
        let g = Grid::interval(0.0, 1.0, 17).unwrap();
        let u = g.field_from_fn(|x| x[0] * 3.0).unwrap();
        assert_eq!(Activation::Relu.nemytskii(&u), u);
        assert!(Activation::Tanh.nemytskii(&g.zeros()).values().iter().all(|v| *v == 0.0));
    }

    fn fields(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(-6.0f64..6.0, n),
            proptest::collection::vec(-6.0f64..6.0, n),
        )
    }

    proptest! {
        #[test]
        fn nemytskii_lipschitz_growth_and_monotonicity((u, v) in fields(25), rho in proptest::collection::vec(0.0f64..2.0, 25)) {
            let g = Grid::interval(-1.0, 1.0, 25).unwrap();
            let w = Weight::new(&g, rho).unwrap();
            let u = Field::new(&g, u).unwrap();
            let v = Field::new(&g, v).unwrap();
            for a in [Activation::Relu, Activation::Logistic, Activation::Tanh, Activation::SqrtLogistic] {
                let (lip, f0) = a.lipschitz_data().unwrap();
                let (fu, fv) = (a.nemytskii(&u), a.nemytskii(&v));
                let du = w.norm(&u.sub(&v).unwrap()).unwrap();
                prop_assert!(w.norm(&fu.sub(&fv).unwrap()).unwrap() <= lip * du + 1e-10);
                let growth = 2f64.sqrt() * lip * w.norm(&u).unwrap() + 2f64.sqrt() * f0.abs() * w.mass().sqrt();
                prop_assert!(w.norm(&fu).unwrap() <= growth + 1e-10);
                let mono = w.inner(&fu.sub(&fv).unwrap(), &u.sub(&v).unwrap()).unwrap();
                prop_assert!(mono >= -1e-12);
            }
        }

        #[test]
        fn relu_attains_its_constant((u, v) in fields(9)) {
            let g = Grid::interval(0.0, 1.0, 9).unwrap();
            let w = Weight::uniform(&g);
            let u = Field::new(&g, u.iter().map(|x| x.abs() + 0.1).collect()).unwrap();
            let v = Field::new(&g, v.iter().map(|x| x.abs() + 0.2).collect()).unwrap();
            let num = w.norm(&Activation::Relu.nemytskii(&u).sub(&Activation::Relu.nemytskii(&v)).unwrap()).unwrap();
            let den = w.norm(&u.sub(&v).unwrap()).unwrap();
            prop_assert!((num / den - 1.0).abs() < 1e-12);
        }
    }
}
