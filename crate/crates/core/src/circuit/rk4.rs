/// Scratch space for [`rk4_step`], sized to the state vector.
#[derive(Debug, Clone)]
pub(crate) struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub(crate) fn new(n: usize) -> Self {
        Self { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }
}

/// Classic fourth-order Runge-Kutta step for `dy/dt = f(t, y)`, in place.
pub fn rk4_step<F>(f: &mut F, t: f64, h: f64, y: &mut [f64])
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut s = Rk4Scratch::new(y.len());
    rk4_step_with(f, t, h, y, &mut s);
}

pub(crate) fn rk4_step_with<F>(f: &mut F, t: f64, h: f64, y: &mut [f64], s: &mut Rk4Scratch)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    f(t, y, &mut s.k1);
    for i in 0..n {
        s.tmp[i] = y[i] + 0.5 * h * s.k1[i];
    }
    f(t + 0.5 * h, &s.tmp, &mut s.k2);
    for i in 0..n {
        s.tmp[i] = y[i] + 0.5 * h * s.k2[i];
    }
    f(t + 0.5 * h, &s.tmp, &mut s.k3);
    for i in 0..n {
        s.tmp[i] = y[i] + h * s.k3[i];
    }
    f(t + h, &s.tmp, &mut s.k4);
    for i in 0..n {
        y[i] += h / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
}
