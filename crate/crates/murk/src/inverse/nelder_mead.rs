//! Bounded Nelder-Mead simplex minimization.
//!
//! Downhill simplex with dimension-adaptive coefficients (reflection 1,
//! expansion 1 + 2/n, contractions 3/4 - 1/(2n), shrink 1 - 1/n), which
//! reduce to the classic values in two dimensions and track narrow valleys
//! far better as the dimension grows. Box constraints are enforced by
//! clamping every candidate vertex into the bounds. The caller drives the
//! iteration loop, which keeps evaluation budgets, refinement schedules and
//! tracing in the caller's hands; the optimizer itself is deterministic
//! given the objective.

/// Simplex over an `n`-dimensional box. Vertices are kept sorted by value
/// (best first).
#[derive(Debug, Clone)]
pub struct NelderMead {
    lo: Vec<f64>,
    hi: Vec<f64>,
    verts: Vec<Vec<f64>>,
    vals: Vec<f64>,
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

impl NelderMead {
    /// Build the initial simplex from `x0` by stepping `step[i]` along each
    /// axis (flipping the step when it would leave the box). Evaluates the
    /// `n + 1` vertices.
    pub fn new(
        x0: &[f64],
        step: &[f64],
        lo: &[f64],
        hi: &[f64],
        f: &mut impl FnMut(&[f64]) -> f64,
    ) -> Self {
        let n = x0.len();
        assert!(n > 0 && step.len() == n && lo.len() == n && hi.len() == n);
        assert!(lo.iter().zip(hi.iter()).all(|(a, b)| a < b));
        let mut base = x0.to_vec();
        clamp_into(&mut base, lo, hi);
        let mut verts = vec![base.clone()];
        for i in 0..n {
            let mut v = base.clone();
            let forward = v[i] + step[i];
            v[i] = if forward <= hi[i] { forward } else { v[i] - step[i] };
            clamp_into(&mut v, lo, hi);
            verts.push(v);
        }
        let vals: Vec<f64> = verts.iter().map(|v| f(v)).collect();
        let mut nm = Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            verts,
            vals,
        };
        nm.sort();
        nm
    }

    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.vals.len()).collect();
        order.sort_by(|&a, &b| self.vals[a].total_cmp(&self.vals[b]).then(a.cmp(&b)));
        self.verts = order.iter().map(|&i| self.verts[i].clone()).collect();
        self.vals = order.iter().map(|&i| self.vals[i]).collect();
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn best(&self) -> (&[f64], f64) {
        (&self.verts[0], self.vals[0])
    }

    /// Worst-minus-best objective spread.
    pub fn spread(&self) -> f64 {
        self.vals[self.vals.len() - 1] - self.vals[0]
    }

    /// Largest per-axis vertex extent, as a fraction of that axis' bounds.
    pub fn diameter(&self) -> f64 {
        let n = self.dim();
        let mut d = 0.0f64;
        for i in 0..n {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in &self.verts {
                lo = lo.min(v[i]);
                hi = hi.max(v[i]);
            }
            d = d.max((hi - lo) / (self.hi[i] - self.lo[i]));
        }
        d
    }

    /// Recompute every vertex value (after the objective itself changed, for
    /// example when the render sample count steps up).
    pub fn reevaluate(&mut self, f: &mut impl FnMut(&[f64]) -> f64) {
        for i in 0..self.verts.len() {
            self.vals[i] = f(&self.verts[i]);
        }
        self.sort();
    }

    /// One reflect/expand/contract/shrink iteration.
    pub fn step(&mut self, f: &mut impl FnMut(&[f64]) -> f64) {
        let n = self.dim();
        let worst = n;
        let mut centroid = vec![0.0; n];
        for v in &self.verts[..n] {
            for i in 0..n {
                centroid[i] += v[i] / n as f64;
            }
        }
        let towards = |alpha: f64| -> Vec<f64> {
            let mut x = vec![0.0; n];
            for i in 0..n {
                x[i] = centroid[i] + alpha * (centroid[i] - self.verts[worst][i]);
            }
            clamp_into(&mut x, &self.lo, &self.hi);
            x
        };

        let nf = n as f64;
        let expand = 1.0 + 2.0 / nf;
        let contract = 0.75 - 0.5 / nf;
        let shrink = 1.0 - 1.0 / nf;

        let xr = towards(1.0);
        let fr = f(&xr);
        if fr < self.vals[0] {
            let xe = towards(expand);
            let fe = f(&xe);
            if fe < fr {
                self.verts[worst] = xe;
                self.vals[worst] = fe;
            } else {
                self.verts[worst] = xr;
                self.vals[worst] = fr;
            }
        } else if fr < self.vals[n - 1] {
            self.verts[worst] = xr;
            self.vals[worst] = fr;
        } else {
            let (xc, fc) = if fr < self.vals[worst] {
                let x = towards(contract);
                let v = f(&x);
                (x, v)
            } else {
                let x = towards(-contract);
                let v = f(&x);
                (x, v)
            };
            if fc < self.vals[worst].min(fr) {
                self.verts[worst] = xc;
                self.vals[worst] = fc;
            } else {
                // shrink towards the best vertex
                for i in 1..=n {
                    let mut v = vec![0.0; n];
                    for d in 0..n {
                        v[d] = self.verts[0][d] + shrink * (self.verts[i][d] - self.verts[0][d]);
                    }
                    clamp_into(&mut v, &self.lo, &self.hi);
                    self.vals[i] = f(&v);
                    self.verts[i] = v;
                }
            }
        }
        self.sort();
    }
}
