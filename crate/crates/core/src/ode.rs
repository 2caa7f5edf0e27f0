//! Fixed-step classical fourth-order Runge-Kutta for linear-algebra-sized systems.

/// Right-hand side `dy/dt = f(t, y)` written into `out`.
pub trait System {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]);
}

impl<F> System for (usize, F)
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.0
    }

    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) {
        (self.1)(t, y, out)
    }
}

/// Reusable RK4 stepper; owns its stage buffers so stepping does not allocate.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    pub fn step<S: System + ?Sized>(&mut self, sys: &S, t: f64, h: f64, y: &mut [f64]) {
        let half = 0.5 * h;
        sys.rhs(t, y, &mut self.k1);
        for ((tmp, &y), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *tmp = y + half * k;
        }
        sys.rhs(t + half, &self.tmp, &mut self.k2);
        for ((tmp, &y), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *tmp = y + half * k;
        }
        sys.rhs(t + half, &self.tmp, &mut self.k3);
        for ((tmp, &y), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *tmp = y + h * k;
        }
        sys.rhs(t + h, &self.tmp, &mut self.k4);
        let sixth = h / 6.0;
        for (i, y) in y.iter_mut().enumerate() {
            *y += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates from `t0` to `t1` in `steps` equal steps, calling `observe(t, y)` at
/// the initial time and after every step.
pub fn integrate<S, O>(sys: &S, y: &mut [f64], t0: f64, t1: f64, steps: usize, mut observe: O)
where
    S: System + ?Sized,
    O: FnMut(f64, &[f64]),
{
    assert!(steps > 0);
    let h = (t1 - t0) / steps as f64;
    let mut rk = Rk4::new(sys.dim());
    observe(t0, y);
    for i in 0..steps {
        // t from the index, not accumulated, so both halving passes hit identical nodes
        let t = t0 + i as f64 * h;
        rk.step(sys, t, h, y);
        observe(t0 + (i + 1) as f64 * h, y);
    }
}
